"""Initial training, the four-stage incremental step, joint training, and the run driver."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .dataset import incremental_splits
from .errors import NumericError, ValidationError
from .losses import LossConfig, composite_loss
from .memory import ExemplarMemory, group_by_class, herding_exemplars, training_pool, update_memory
from .model import GaitModel, ModelDims, init_model
from .nn import AdamState, adam_step

log = logging.getLogger(__name__)

# Stage codes feed the per-stage RNG streams.
STAGE_MAIN = 1
STAGE_FINETUNE = 2


@dataclass(frozen=True)
class AugmentConfig:
    gaussian_noise_std: float = 0.05
    frame_dropout_prob: float = 0.1
    temporal_shift_max: int = 4

    def validate(self, window_len=None):
        if not 0 <= self.frame_dropout_prob <= 1:
            raise ValidationError(f"frame_dropout_prob must be in [0, 1], got {self.frame_dropout_prob}")
        if self.gaussian_noise_std < 0:
            raise ValidationError("gaussian_noise_std must be >= 0")
        if self.temporal_shift_max < 0 or (window_len is not None and self.temporal_shift_max > window_len):
            raise ValidationError(f"temporal_shift_max must be in [0, window length], got {self.temporal_shift_max}")
        return self

    @classmethod
    def off(cls):
        return cls(0.0, 0.0, 0)


@dataclass(frozen=True)
class TrainConfig:
    iterations_main: int = 2000
    iterations_finetune: int = 2000
    lr_main: float = 1e-3
    lr_finetune: float = 1e-4
    batch_size: int = 32
    loss: LossConfig = field(default_factory=LossConfig)
    memory_capacity: int = 400
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    hidden: int = 64
    embedding: int = 32

    def validate(self):
        counts = ("iterations_main", "iterations_finetune", "batch_size", "hidden", "embedding")
        bad = [n for n in counts if getattr(self, n) < 1]
        if bad:
            raise ValidationError(f"counts must be >= 1: {bad}")
        if self.memory_capacity < 0:
            raise ValidationError("memory_capacity must be >= 0")
        if not 0 <= self.lr_finetune < self.lr_main:
            raise ValidationError(f"need 0 <= lr_finetune < lr_main, got {self.lr_finetune} and {self.lr_main}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in 64 bits")
        self.loss.validate()
        self.augmentation.validate()
        return self

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise ValidationError("train config must be a JSON object")
        obj = dict(obj)
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown train config fields: {sorted(unknown)}")
        try:
            if "loss" in obj:
                obj["loss"] = LossConfig(**obj["loss"])
            if "augmentation" in obj:
                obj["augmentation"] = AugmentConfig(**obj["augmentation"])
            return cls(**obj).validate()
        except TypeError as exc:
            raise ValidationError(f"bad train config: {exc}") from exc


def stage_rng(seed, step, stage):
    return np.random.default_rng([seed, step, stage])


class Trace:
    """Records stage order and a digest of every batch index draw."""

    def __init__(self):
        self.events = []
        self.batches = {}

    def stage(self, step, name):
        self.events.append((step, name))

    def batch(self, key, idx):
        h = self.batches.setdefault(key, hashlib.sha256())
        h.update(np.ascontiguousarray(idx, dtype="<i8").tobytes())

    def digest(self, key):
        return self.batches[key].hexdigest() if key in self.batches else None


def augment_plan(batch, frames, dim, config: AugmentConfig, rng):
    """Draw one batch of augmentation: per-output source frame indices and additive noise.

    Draw order is fixed (shift, dropout, noise) so streams are reproducible.
    """
    src = np.broadcast_to(np.arange(frames), (batch, frames))
    if config.temporal_shift_max > 0:
        shifts = rng.integers(0, config.temporal_shift_max + 1, size=batch)
        src = (src + shifts[:, None]) % frames
    if config.frame_dropout_prob > 0 and frames > 1:
        drop = rng.random((batch, frames)) < config.frame_dropout_prob
        neighbour = np.arange(frames) - 1
        neighbour[0] = 1
        src = np.where(drop, np.take_along_axis(src, np.broadcast_to(neighbour, src.shape), axis=1), src)
    noise = None
    if config.gaussian_noise_std > 0:
        noise = rng.normal(scale=config.gaussian_noise_std, size=(batch, frames, dim))
    return np.ascontiguousarray(src, dtype=np.intp), noise


def augment_batch(x, config: AugmentConfig, rng, rows=None):
    """Circular temporal shift, neighbour-copy frame dropout, then Gaussian noise.

    With ``rows``, augments ``x[rows]`` without materializing the un-augmented batch.
    """
    x = np.asarray(x, dtype=np.float64)
    if rows is None:
        rows = np.arange(x.shape[0])
    src, noise = augment_plan(len(rows), x.shape[1], x.shape[2], config, rng)
    return kernels.gather_windows(x, rows, src, noise)


def augment(window, config: AugmentConfig, rng):
    return augment_batch(np.asarray(window)[None], config, rng)[0]


def _stack(samples):
    X = np.stack([s.window for s in samples])
    y = np.array([s.subject for s in samples], dtype=np.intp)
    return X, y


def train_on(model: GaitModel, samples, flags, iterations, lr, config: TrainConfig, rng,
             teacher=None, trace=None, trace_key=None, loss_config=None):
    """Minibatch Adam on ``samples`` with the composite loss; returns per-iteration losses."""
    if not samples:
        raise ValidationError("no training samples")
    loss_config = loss_config or config.loss
    X, y = _stack(samples)
    flags = np.asarray(flags, dtype=np.float64)
    n = len(samples)
    state = AdamState.init(model.params, lr=lr)
    losses = np.empty(iterations)
    for it in range(iterations):
        idx = rng.integers(0, n, size=config.batch_size)
        if trace is not None:
            trace.batch(trace_key, idx)
        xb = augment_batch(X, config.augmentation, rng, rows=idx)
        mask = flags[idx]
        old = teacher.forward(xb)[1] if teacher is not None and mask.any() else None
        _, logits, cache = model.forward(xb, cache=True)
        loss, dlogits = composite_loss(logits, y[idx], mask, old, loss_config)
        if not np.isfinite(loss):
            raise NumericError(f"loss became {loss} at iteration {it}")
        model.backward(dlogits, cache)
        adam_step(model.params, state)
        losses[it] = loss
    return losses


def new_model(dataset, config: TrainConfig):
    dims = ModelDims(dataset.spec.frame_dim, config.hidden, config.embedding, dataset.num_subjects)
    return init_model(dims, seed=config.seed)


def train_initial(model, first_factor_windows, config: TrainConfig, trace=None, step=0):
    """Cross-entropy-only training on the first factor."""
    samples = list(first_factor_windows)
    if not samples:
        raise ValidationError("train_initial needs at least one window")
    if trace is not None:
        trace.stage(step, "initial")
    train_on(model, samples, np.zeros(len(samples)), config.iterations_main, config.lr_main, config,
             stage_rng(config.seed, step, STAGE_MAIN), trace=trace, trace_key=(step, "main"))
    return model


def balanced_subset(model, memory: ExemplarMemory, new_factor_windows, q):
    """q samples per (factor, class): memory prefixes for old factors, herding picks for the new one."""
    old, new = [], []
    for f in memory.factors:
        for c in range(memory.num_classes):
            cell = memory.cells.get((f, c), [])
            if not cell:
                raise ValidationError(f"memory has no samples for factor {f}, class {c}")
            old.extend(cell[:q])
    groups = group_by_class(new_factor_windows, memory.num_classes)
    for c, group in groups.items():
        if not group:
            raise ValidationError(f"new factor has no samples for class {c}")
        new.extend(herding_exemplars(group, q, model))
    return old, new


def balanced_finetune(model, memory: ExemplarMemory, new_factor_windows, config: TrainConfig,
                      teacher=None, trace=None, step=0):
    """Fine-tune at ``lr_finetune`` on a per-(factor, class) balanced subset."""
    if not memory.factors:
        raise ValidationError("balanced fine-tuning needs a non-empty memory")
    q = memory.current_quota
    if q == 0:
        log.warning("memory quota is 0; skipping balanced fine-tuning")
        return model
    teacher = teacher if teacher is not None else model.snapshot()
    old, new = balanced_subset(model, memory, list(new_factor_windows), q)
    pool, flags = old + new, np.concatenate([np.ones(len(old)), np.zeros(len(new))])
    train_on(model, pool, flags, config.iterations_finetune, config.lr_finetune, config,
             stage_rng(config.seed, step, STAGE_FINETUNE), teacher=teacher, trace=trace,
             trace_key=(step, "finetune"))
    return model


def incremental_step(model, memory, new_factor_windows, config: TrainConfig, trace=None, step=1,
                     finetune=True):
    """Snapshot, pooled training with the composite loss, balanced fine-tune, memory update."""
    new = list(new_factor_windows)
    teacher = model.snapshot()
    if trace is not None:
        trace.stage(step, "snapshot")
    pool, flags = training_pool(memory, new)
    if trace is not None:
        trace.stage(step, "pool")
    train_on(model, pool, flags, config.iterations_main, config.lr_main, config,
             stage_rng(config.seed, step, STAGE_MAIN), teacher=teacher, trace=trace, trace_key=(step, "main"))
    if trace is not None:
        trace.stage(step, "main")
    if finetune and memory.factors:
        balanced_finetune(model, memory, new, config, teacher=teacher, trace=trace, step=step)
        if trace is not None:
            trace.stage(step, "finetune")
    memory = update_memory(memory, new, model)
    if trace is not None:
        trace.stage(step, "memory")
    return model, memory, teacher


@dataclass
class IncrementalRunResult:
    method: str
    factor_order: list
    reports: list
    model: object
    memory: ExemplarMemory
    config: TrainConfig
    snapshots: list = field(default_factory=list)
    memory_history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def run_incremental(dataset, factor_order, config: TrainConfig, trace=None):
    """Initial model on the first factor, then one incremental step per remaining factor."""
    from .evaluation import full_report

    config.validate()
    splits = incremental_splits(dataset, factor_order)
    model = new_model(dataset, config)
    memory = ExemplarMemory(config.memory_capacity, dataset.num_subjects)
    reports, snapshots, history = [], [], []
    for k, (factor, windows) in enumerate(zip(splits.order, splits.train_steps)):
        if k == 0:
            train_initial(model, windows, config, trace=trace, step=0)
            memory = update_memory(memory, windows, model)
        else:
            model, memory, _ = incremental_step(model, memory, windows, config, trace=trace, step=k)
        log.info("step %d: learned factor %s", k, factor)
        previous = reports[-1] if reports else None
        reports.append(full_report(model, dataset, k, splits=splits, previous=previous))
        snapshots.append(model.snapshot())
        history.append(memory.copy())
    return IncrementalRunResult("ilgaco", splits.order, reports, model, memory, config, snapshots, history)


def joint_train(dataset, factors, config: TrainConfig, trace=None):
    """Non-incremental cross-entropy training on the union of ``factors``; the upper bound."""
    from .evaluation import full_report

    config.validate()
    splits = incremental_splits(dataset, factors)
    windows = [w for step in splits.train_steps for w in step]
    model = train_initial(new_model(dataset, config), windows, config, trace=trace, step=0)
    return model, full_report(model, dataset, 0, splits=splits)


def with_seed(config: TrainConfig, seed):
    return replace(config, seed=seed)
