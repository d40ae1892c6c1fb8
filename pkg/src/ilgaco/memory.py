"""Fixed-capacity exemplar memory balanced per (factor, class), filled by herding.

Checkpoint layout (little-endian)::

    magic "ILGE" | version u32 = 1 | capacity u32 | num_classes u32
    window_len u32 | frame_dim u32
    num_factors u32 | factor ids u32...            (insertion order)
    num_cells u32, then per cell:
        factor u32 | class u32 | count u32
        count x (source_sequence u32 | window_start u32 | window_len*frame_dim f64)
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from ._binio import Reader, Writer, write_atomic
from .dataset import GaitSample
from .errors import DimensionError, UsageError, ValidationError

MAGIC = b"ILGE"
VERSION = 1


class CapacityWarning(UserWarning):
    pass


def quota(capacity, num_factors, num_classes):
    """Samples per (factor, class) cell: floor(N / (M * C))."""
    if num_factors < 1 or num_classes < 1:
        raise ValidationError(f"quota needs M >= 1 and C >= 1, got M={num_factors}, C={num_classes}")
    q = capacity // (num_factors * num_classes)
    if q == 0:
        warnings.warn(
            f"memory capacity {capacity} cannot hold one sample per cell for "
            f"{num_factors} factors x {num_classes} classes",
            CapacityWarning,
            stacklevel=2,
        )
    return q


@dataclass(frozen=True)
class HerdingRanking:
    indices: tuple
    distances: tuple

    def __len__(self):
        return len(self.indices)


def herding_select(signatures, k):
    """Greedy herding order of ``k`` picks from a population of signatures.

    Each pick is the unselected signature closest to the mean of all
    unselected signatures; ties go to the lowest index.
    """
    sig = np.asarray(signatures, dtype=np.float64)
    if sig.ndim == 1 and sig.size == 0:
        sig = sig.reshape(0, 0)
    if sig.ndim != 2:
        raise DimensionError(f"signatures must form an (n, E) array, got shape {sig.shape}")
    n = sig.shape[0]
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k}")
    if n == 0 and k > 0:
        raise ValidationError("cannot select from an empty population")
    if k > n:
        raise ValidationError(f"k={k} exceeds population size {n}")
    order, dists = kernels.herding_order(sig, int(k))
    return HerdingRanking(tuple(int(i) for i in order), tuple(float(d) for d in dists))


@dataclass
class ExemplarMemory:
    capacity: int
    num_classes: int
    factors: list = field(default_factory=list)
    cells: dict = field(default_factory=dict)  # (factor, class) -> [GaitSample] in herding order

    def __post_init__(self):
        if self.capacity < 0:
            raise ValidationError(f"memory capacity must be >= 0, got {self.capacity}")
        if self.num_classes < 1:
            raise ValidationError("memory needs at least one class")

    @property
    def num_factors(self):
        return len(self.factors)

    @property
    def current_quota(self):
        if not self.factors:
            return 0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CapacityWarning)
            return quota(self.capacity, self.num_factors, self.num_classes)

    def __len__(self):
        return sum(len(v) for v in self.cells.values())

    def samples(self):
        out = []
        for f in self.factors:
            for c in range(self.num_classes):
                out.extend(self.cells.get((f, c), ()))
        return out

    def cell_sizes(self):
        return {key: len(v) for key, v in self.cells.items()}

    def copy(self):
        return ExemplarMemory(
            self.capacity, self.num_classes, list(self.factors), {k: list(v) for k, v in self.cells.items()}
        )


def group_by_class(samples, num_classes):
    groups = {c: [] for c in range(num_classes)}
    for s in samples:
        if not 0 <= s.subject < num_classes:
            raise ValidationError(f"sample subject {s.subject} outside [0, {num_classes})")
        groups[s.subject].append(s)
    return groups


def herding_exemplars(samples, k, model):
    """The first ``k`` herding picks (by signature under ``model``) of ``samples``."""
    k = min(k, len(samples))
    if k == 0:
        return []
    sig = model.forward(np.stack([s.window for s in samples]))[0]
    ranking = herding_select(sig, k)
    return [samples[i] for i in ranking.indices]


def update_memory(memory: ExemplarMemory, new_factor_samples, model) -> ExemplarMemory:
    """Shrink existing cells to the new quota and add herding exemplars of the new factor."""
    samples = list(new_factor_samples)
    if not samples:
        raise ValidationError("no samples for the new factor")
    factor_ids = {s.factor for s in samples}
    if len(factor_ids) != 1:
        raise ValidationError(f"new samples span several factors: {sorted(factor_ids)}")
    factor = factor_ids.pop()
    if factor in memory.factors:
        raise UsageError(f"factor {factor} is already stored in memory")
    groups = group_by_class(samples, memory.num_classes)
    empty = [c for c, g in groups.items() if not g]
    if empty:
        raise ValidationError(f"new factor {factor} has no samples for class(es) {empty}")

    out = ExemplarMemory(memory.capacity, memory.num_classes, memory.factors + [factor], {})
    q = quota(memory.capacity, out.num_factors, memory.num_classes)
    # Least representative = tail of the herding order.
    for key, cell in memory.cells.items():
        out.cells[key] = list(cell[:q])
    for c in range(memory.num_classes):
        out.cells[(factor, c)] = herding_exemplars(groups[c], q, model)
    return out


def training_pool(memory: ExemplarMemory, new_samples):
    """Memory samples (flag 1) followed by new samples (flag 0)."""
    old = memory.samples()
    new = list(new_samples)
    flags = np.concatenate([np.ones(len(old)), np.zeros(len(new))])
    return old + new, flags


def memory_to_bytes(memory: ExemplarMemory, window_len=None, frame_dim=None) -> bytes:
    stored = memory.samples()
    if stored:
        window_len, frame_dim = stored[0].window.shape
    w = Writer()
    w.raw(MAGIC)
    w.u32(VERSION)
    w.u32(memory.capacity)
    w.u32(memory.num_classes)
    w.u32(window_len or 0)
    w.u32(frame_dim or 0)
    w.u32(len(memory.factors))
    for f in memory.factors:
        w.u32(f)
    keys = [(f, c) for f in memory.factors for c in range(memory.num_classes) if (f, c) in memory.cells]
    w.u32(len(keys))
    for f, c in keys:
        cell = memory.cells[(f, c)]
        w.u32(f)
        w.u32(c)
        w.u32(len(cell))
        for s in cell:
            if s.window.shape != (window_len, frame_dim):
                raise DimensionError(f"exemplar window {s.window.shape} differs from {(window_len, frame_dim)}")
            w.u32(s.source_sequence)
            w.u32(s.window_start)
            w.floats(s.window)
    return bytes(w.buf)


def memory_from_bytes(data: bytes) -> ExemplarMemory:
    r = Reader(data, "memory checkpoint")
    r.magic(MAGIC)
    r.version({VERSION})
    capacity = r.u32("capacity")
    num_classes = r.u32("num_classes")
    window_len = r.u32("window_len")
    frame_dim = r.u32("frame_dim")
    factors = [r.u32("factor id") for _ in range(r.u32("num_factors"))]
    memory = ExemplarMemory(capacity, num_classes, factors, {})
    for _ in range(r.u32("num_cells")):
        f = r.u32("cell factor")
        c = r.u32("cell class")
        cell = []
        for _ in range(r.u32("cell count")):
            src = r.u32("source_sequence")
            start = r.u32("window_start")
            window = r.floats(window_len * frame_dim, f"window ({window_len}x{frame_dim})")
            window = window.reshape(window_len, frame_dim)
            window.setflags(write=False)
            cell.append(GaitSample(subject=c, factor=f, window=window, source_sequence=src, window_start=start))
        memory.cells[(f, c)] = cell
    r.expect_end()
    return memory


def save_memory(memory, path, window_len=None, frame_dim=None):
    write_atomic(path, memory_to_bytes(memory, window_len, frame_dim))


def load_memory(path) -> ExemplarMemory:
    return memory_from_bytes(Path(path).read_bytes())
