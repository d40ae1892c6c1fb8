"""Synthetic gait data shaped like CASIA-B, windowing, and incremental splits.

Frames are D-dimensional vectors standing in for silhouettes. A frame of
subject ``s`` under factor ``f`` at gait phase ``t`` is::

    A_f @ u_s + b_f + g(t, s) + noise

``u_s`` is a latent identity, ``(A_f, b_f)`` a per-factor observation map and
``g`` a subject-specific periodic gait component (period 28 frames).
Viewpoint maps are interpolated between two random bases so that nearby
angles look alike; condition maps are drawn independently with larger offsets.

Binary layout (little-endian)::

    magic "ILGC" | version u32 = 1
    num_subjects u32 | frames_per_sequence u32 | frame_dim u32
    train_sequences u32 | test_sequences u32 | noise_std f64 | seed u64
    num_factors u32, then per factor:
        id u32 | kind u8 (0 viewpoint, 1 condition)
        viewpoint: angle f64     condition: label (u16 length + utf-8 bytes)
    num_train u32, then num_train sequence records
    num_test u32, then num_test sequence records
    sequence record: subject u32 | factor u32 | frame_count u32 | frame_count*frame_dim f64
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._binio import Reader, Writer, write_atomic
from .errors import FormatError, ValidationError

MAGIC = b"ILGC"
VERSION = 1
GAIT_PERIOD = 28
DEFAULT_WINDOW = 28
DEFAULT_OVERLAP = 0.6

# Generator shape constants (not part of the file format).
IDENTITY_SCALE = 1.0
GAIT_SCALE = 0.3
VIEW_OFFSET_SCALE = 1.0
CONDITION_OFFSET_SCALE = 2.0
VIEW_SPREAD = 3.0  # basis rotation (radians) between 0 and 180 degrees


@dataclass(frozen=True)
class CovariateFactor:
    id: int
    kind: str  # "viewpoint" or "condition"
    angle: float | None = None
    label: str | None = None

    @classmethod
    def viewpoint(cls, id, angle):
        return cls(id=id, kind="viewpoint", angle=float(angle))

    @classmethod
    def condition(cls, id, label):
        return cls(id=id, kind="condition", label=str(label))

    @property
    def name(self):
        if self.kind == "viewpoint":
            return f"{self.angle:03.0f}"
        return self.label

    def to_json(self):
        if self.kind == "viewpoint":
            return {"id": self.id, "kind": "viewpoint", "angle": self.angle}
        return {"id": self.id, "kind": "condition", "label": self.label}

    @classmethod
    def from_json(cls, obj):
        try:
            kind = obj["kind"]
            if kind == "viewpoint":
                return cls.viewpoint(int(obj["id"]), obj["angle"])
            if kind == "condition":
                return cls.condition(int(obj["id"]), obj["label"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad factor entry {obj!r}: {exc}") from exc
        raise ValidationError(f"unknown factor kind {kind!r}")


def default_factors():
    views = [CovariateFactor.viewpoint(i, a) for i, a in enumerate((0, 45, 90, 135, 180))]
    conds = [CovariateFactor.condition(5 + i, c) for i, c in enumerate(("nm", "bg", "cl"))]
    return views + conds


@dataclass(frozen=True)
class DatasetSpec:
    num_subjects: int = 20
    factors: tuple = field(default_factory=lambda: tuple(default_factors()))
    frames_per_sequence: int = 84
    frame_dim: int = 32
    train_sequences: int = 4
    test_sequences: int = 2
    noise_std: float = 2.0
    seed: int = 0

    def validate(self, window=DEFAULT_WINDOW):
        problems = []
        if self.num_subjects < 2:
            problems.append(f"num_subjects={self.num_subjects} < 2")
        if self.frame_dim < 4:
            problems.append(f"frame_dim={self.frame_dim} < 4")
        if self.frames_per_sequence < window:
            problems.append(f"frames_per_sequence={self.frames_per_sequence} < window length {window}")
        if self.train_sequences < 1:
            problems.append(f"train_sequences={self.train_sequences} < 1")
        if self.test_sequences < 1:
            problems.append(f"test_sequences={self.test_sequences} < 1")
        if not len(self.factors):
            problems.append("no factors")
        if not (self.noise_std >= 0 and math.isfinite(self.noise_std)):
            problems.append(f"noise_std={self.noise_std} must be finite and >= 0")
        if not 0 <= self.seed < 2**64:
            problems.append(f"seed={self.seed} outside 64-bit range")
        ids = [f.id for f in self.factors]
        if len(set(ids)) != len(ids):
            problems.append(f"duplicate factor ids {ids}")
        for f in self.factors:
            if f.kind == "viewpoint" and not 0 <= f.angle <= 180:
                problems.append(f"factor {f.id}: angle {f.angle} outside [0, 180]")
            if f.kind not in ("viewpoint", "condition"):
                problems.append(f"factor {f.id}: unknown kind {f.kind!r}")
        if problems:
            raise ValidationError("invalid dataset spec: " + "; ".join(problems))
        return self

    def factor(self, fid):
        for f in self.factors:
            if f.id == fid:
                return f
        raise ValidationError(f"unknown factor id {fid}")

    def to_json(self):
        return {
            "num_subjects": self.num_subjects,
            "factors": [f.to_json() for f in self.factors],
            "frames_per_sequence": self.frames_per_sequence,
            "frame_dim": self.frame_dim,
            "train_sequences": self.train_sequences,
            "test_sequences": self.test_sequences,
            "noise_std": self.noise_std,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise ValidationError("dataset spec must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown dataset spec fields: {sorted(unknown)}")
        kwargs = dict(obj)
        if "factors" in kwargs:
            if not isinstance(kwargs["factors"], list):
                raise ValidationError("factors must be a list")
            kwargs["factors"] = tuple(CovariateFactor.from_json(f) for f in kwargs["factors"])
        for name in ("num_subjects", "frames_per_sequence", "frame_dim", "train_sequences", "test_sequences", "seed"):
            if name in kwargs and (isinstance(kwargs[name], bool) or not isinstance(kwargs[name], int)):
                raise ValidationError(f"{name} must be an integer")
        if "noise_std" in kwargs:
            if isinstance(kwargs["noise_std"], bool) or not isinstance(kwargs["noise_std"], (int, float)):
                raise ValidationError("noise_std must be a number")
            kwargs["noise_std"] = float(kwargs["noise_std"])
        return cls(**kwargs).validate()


@dataclass(frozen=True, eq=False)
class FrameSequence:
    subject: int
    factor: int
    frames: np.ndarray  # (length, frame_dim)
    seq_id: int = 0

    def __len__(self):
        return self.frames.shape[0]


@dataclass(frozen=True, eq=False)
class GaitSample:
    subject: int
    factor: int
    window: np.ndarray  # (T, frame_dim)
    source_sequence: int
    window_start: int


@dataclass(eq=False)
class Dataset:
    spec: DatasetSpec
    train: list
    test: list

    @property
    def factor_ids(self):
        return [f.id for f in self.spec.factors]

    @property
    def num_subjects(self):
        return self.spec.num_subjects

    def subset(self, factor_ids):
        """Dataset restricted to ``factor_ids`` (in the given order)."""
        factors = tuple(self.spec.factor(fid) for fid in factor_ids)
        keep = set(factor_ids)
        spec = DatasetSpec(
            num_subjects=self.spec.num_subjects,
            factors=factors,
            frames_per_sequence=self.spec.frames_per_sequence,
            frame_dim=self.spec.frame_dim,
            train_sequences=self.spec.train_sequences,
            test_sequences=self.spec.test_sequences,
            noise_std=self.spec.noise_std,
            seed=self.spec.seed,
        )
        return Dataset(
            spec=spec,
            train=[s for s in self.train if s.factor in keep],
            test=[s for s in self.test if s.factor in keep],
        )

    def to_bytes(self):
        return dataset_to_bytes(self)

    def __eq__(self, other):
        return isinstance(other, Dataset) and self.to_bytes() == other.to_bytes()


def _unit_map(rng, rows, cols):
    return rng.normal(size=(rows, cols)) / math.sqrt(cols)


def generate_dataset(spec: DatasetSpec) -> Dataset:
    """Deterministic synthetic dataset for ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    S, D = spec.num_subjects, spec.frame_dim
    L = max(2, D // 4)

    identity = rng.normal(size=(S, L))
    # Two harmonics of the gait cycle per subject.
    gait_cos = rng.normal(size=(S, 2, D)) * (GAIT_SCALE / 2)
    gait_sin = rng.normal(size=(S, 2, D)) * (GAIT_SCALE / 2)

    view_basis = (_unit_map(rng, D, L), _unit_map(rng, D, L))
    view_offset = (rng.normal(size=D), rng.normal(size=D))
    maps = {}
    for f in spec.factors:
        if f.kind == "viewpoint":
            phi = (f.angle / 180.0) * VIEW_SPREAD
            a = math.cos(phi) * view_basis[0] + math.sin(phi) * view_basis[1]
            b = VIEW_OFFSET_SCALE * (math.cos(phi) * view_offset[0] + math.sin(phi) * view_offset[1])
        else:
            a = _unit_map(rng, D, L)
            b = CONDITION_OFFSET_SCALE * rng.normal(size=D)
        maps[f.id] = (IDENTITY_SCALE * a, b)

    harmonics = np.arange(1, 3)

    def make_sequence(subject, fid, seq_id):
        a, b = maps[fid]
        start = int(rng.integers(0, GAIT_PERIOD))
        t = start + np.arange(spec.frames_per_sequence)
        angle = 2 * math.pi * np.outer(t, harmonics) / GAIT_PERIOD  # (T, 2)
        gait = np.cos(angle) @ gait_cos[subject] + np.sin(angle) @ gait_sin[subject]
        frames = (a @ identity[subject] + b) + gait
        if spec.noise_std > 0:
            frames = frames + rng.normal(scale=spec.noise_std, size=frames.shape)
        frames.setflags(write=False)
        return FrameSequence(subject=subject, factor=fid, frames=frames, seq_id=seq_id)

    train, test = [], []
    for split, count in ((train, spec.train_sequences), (test, spec.test_sequences)):
        for subject in range(S):
            for f in spec.factors:
                for _ in range(count):
                    split.append(make_sequence(subject, f.id, len(train) + len(test)))
    return Dataset(spec=spec, train=train, test=test)


def window_stride(win_len=DEFAULT_WINDOW, overlap=DEFAULT_OVERLAP):
    # Round half up; never below 1.
    return max(1, int(math.floor((1.0 - overlap) * win_len + 0.5)))


def window_sequence(seq: FrameSequence, win_len=DEFAULT_WINDOW, overlap=DEFAULT_OVERLAP):
    """Fixed-length sliding windows over ``seq``. Empty if the sequence is too short."""
    if win_len < 1:
        raise ValidationError(f"window length must be >= 1, got {win_len}")
    if not 0 <= overlap < 1:
        raise ValidationError(f"overlap must be in [0, 1), got {overlap}")
    stride = window_stride(win_len, overlap)
    n = len(seq)
    return [
        GaitSample(
            subject=seq.subject,
            factor=seq.factor,
            window=seq.frames[start:start + win_len],
            source_sequence=seq.seq_id,
            window_start=start,
        )
        for start in range(0, n - win_len + 1, stride)
    ]


@dataclass
class IncrementalSplits:
    order: list
    train_steps: list  # train_steps[k]: windows of order[k]
    test: dict  # factor id -> list of (FrameSequence, windows)

    def __len__(self):
        return len(self.order)


def incremental_splits(dataset: Dataset, factor_order, win_len=DEFAULT_WINDOW, overlap=DEFAULT_OVERLAP):
    order = [int(f) for f in factor_order]
    known = set(dataset.factor_ids)
    unknown = [f for f in order if f not in known]
    if unknown:
        raise ValidationError(f"unknown factor ids in order: {unknown}")
    if len(set(order)) != len(order):
        raise ValidationError(f"factor order repeats ids: {order}")
    by_factor = {f: [] for f in dataset.factor_ids}
    for seq in dataset.train:
        by_factor[seq.factor].extend(window_sequence(seq, win_len, overlap))
    test = {f: [] for f in dataset.factor_ids}
    for seq in dataset.test:
        windows = window_sequence(seq, win_len, overlap)
        if windows:
            test[seq.factor].append((seq, windows))
    return IncrementalSplits(order=order, train_steps=[by_factor[f] for f in order], test=test)


def dataset_to_bytes(dataset: Dataset) -> bytes:
    spec = dataset.spec
    w = Writer()
    w.raw(MAGIC)
    w.u32(VERSION)
    w.u32(spec.num_subjects)
    w.u32(spec.frames_per_sequence)
    w.u32(spec.frame_dim)
    w.u32(spec.train_sequences)
    w.u32(spec.test_sequences)
    w.f64(spec.noise_std)
    w.u64(spec.seed)
    w.u32(len(spec.factors))
    for f in spec.factors:
        w.u32(f.id)
        if f.kind == "viewpoint":
            w.u8(0)
            w.f64(f.angle)
        else:
            w.u8(1)
            w.text(f.label)
    for split in (dataset.train, dataset.test):
        w.u32(len(split))
        for seq in split:
            w.u32(seq.subject)
            w.u32(seq.factor)
            w.u32(len(seq))
            w.floats(seq.frames)
    return bytes(w.buf)


def dataset_from_bytes(data: bytes) -> Dataset:
    r = Reader(data, "dataset file")
    r.magic(MAGIC)
    r.version({VERSION})
    num_subjects = r.u32("num_subjects")
    frames_per_sequence = r.u32("frames_per_sequence")
    frame_dim = r.u32("frame_dim")
    train_sequences = r.u32("train_sequences")
    test_sequences = r.u32("test_sequences")
    noise_std = r.f64("noise_std")
    seed = r.u64("seed")
    factors = []
    for _ in range(r.u32("num_factors")):
        fid = r.u32("factor id")
        at = r.pos
        kind = r.u8("factor kind")
        if kind == 0:
            factors.append(CovariateFactor.viewpoint(fid, r.f64("angle")))
        elif kind == 1:
            factors.append(CovariateFactor.condition(fid, r.text("label")))
        else:
            raise FormatError(f"unknown factor kind code {kind}", offset=at)
    spec = DatasetSpec(
        num_subjects=num_subjects,
        factors=tuple(factors),
        frames_per_sequence=frames_per_sequence,
        frame_dim=frame_dim,
        train_sequences=train_sequences,
        test_sequences=test_sequences,
        noise_std=noise_std,
        seed=seed,
    )
    splits = []
    seq_id = 0
    for _ in range(2):
        seqs = []
        for _ in range(r.u32("sequence count")):
            subject = r.u32("subject")
            factor = r.u32("factor")
            count = r.u32("frame_count")
            frames = r.floats(count * frame_dim, f"frames ({count}x{frame_dim})").reshape(count, frame_dim)
            frames.setflags(write=False)
            seqs.append(FrameSequence(subject=subject, factor=factor, frames=frames, seq_id=seq_id))
            seq_id += 1
        splits.append(seqs)
    r.expect_end()
    return Dataset(spec=spec, train=splits[0], test=splits[1])


def save_dataset(dataset: Dataset, path):
    write_atomic(path, dataset_to_bytes(dataset))


def load_dataset(path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())
