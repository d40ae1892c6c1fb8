"""LwF and iCaRL adapted to incremental learning of samples (same classes, new factors)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .dataset import incremental_splits
from .errors import ValidationError
from .evaluation import _windows_array, full_report
from .memory import ExemplarMemory, update_memory
from .trainer import (
    STAGE_MAIN,
    IncrementalRunResult,
    TrainConfig,
    incremental_step,
    new_model,
    stage_rng,
    train_initial,
    train_on,
)

log = logging.getLogger(__name__)

METHODS = ("ilgaco", "lwf", "icarl", "joint")


def lwf_step(model, new_factor_windows, config: TrainConfig, trace=None, step=1, distill_weight=1.0):
    """Train on new windows only, distilling every sample towards the step-start teacher."""
    samples = list(new_factor_windows)
    teacher = model.snapshot()
    if trace is not None:
        trace.stage(step, "snapshot")
    loss_config = replace(config.loss, distill_weight=distill_weight)
    flags = np.ones(len(samples)) if distill_weight != 0 else np.zeros(len(samples))
    train_on(model, samples, flags, config.iterations_main, config.lr_main, config,
             stage_rng(config.seed, step, STAGE_MAIN), teacher=teacher, trace=trace,
             trace_key=(step, "main"), loss_config=loss_config)
    if trace is not None:
        trace.stage(step, "main")
    return model


@dataclass
class ClassMeans:
    means: np.ndarray  # (C, E); rows of classes without exemplars are NaN
    present: np.ndarray  # (C,) bool

    def __len__(self):
        return int(self.present.sum())


def class_means(model, memory: ExemplarMemory):
    """Mean exemplar signature per class under the current model."""
    C, E = memory.num_classes, model.dims.embedding
    means = np.full((C, E), np.nan)
    present = np.zeros(C, dtype=bool)
    for c in range(C):
        windows = [s.window for f in memory.factors for s in memory.cells.get((f, c), ())]
        if windows:
            sig = model.forward(np.stack(windows))[0]
            means[c] = np.cumsum(sig, axis=0)[-1] / len(windows)
            present[c] = True
    return ClassMeans(means, present)


def nme_classify(model, means: ClassMeans, sequence_windows):
    """Nearest class mean to the sequence's mean window signature (lowest id on ties)."""
    sig = model.forward(_windows_array(sequence_windows))[0]
    return nme_from_signatures(sig, means)


def nme_from_signatures(signatures, means: ClassMeans):
    if not means.present.all():
        missing = np.flatnonzero(~means.present).tolist()
        raise ValidationError(f"no class mean for class(es) {missing}")
    query = np.cumsum(np.asarray(signatures, dtype=np.float64), axis=0)[-1] / len(signatures)
    d = kernels.sq_distances(query[None, :], means.means)[0]
    return int(np.argmin(d))


def nme_predictor(model, means: ClassMeans):
    def predict(videos):
        sizes = [len(v) for v in videos]
        sig = model.forward(np.concatenate([_windows_array(v) for v in videos]))[0]
        bounds = np.cumsum([0] + sizes)
        return [nme_from_signatures(sig[a:b], means) for a, b in zip(bounds[:-1], bounds[1:])]

    return predict


def icarl_step(model, memory, new_factor_windows, config: TrainConfig, trace=None, step=1):
    """iLGaCo stages without balanced fine-tuning, then class means from all exemplars."""
    model, memory, _ = incremental_step(model, memory, new_factor_windows, config, trace=trace, step=step,
                                        finetune=False)
    return model, memory, class_means(model, memory)


def run_lwf(dataset, factor_order, config: TrainConfig, trace=None, distill_weight=1.0):
    config.validate()
    splits = incremental_splits(dataset, factor_order)
    model = new_model(dataset, config)
    memory = ExemplarMemory(0, dataset.num_subjects)
    reports, snapshots = [], []
    for k, windows in enumerate(splits.train_steps):
        if k == 0:
            train_initial(model, windows, config, trace=trace, step=0)
        else:
            lwf_step(model, windows, config, trace=trace, step=k, distill_weight=distill_weight)
        reports.append(full_report(model, dataset, k, splits=splits, previous=reports[-1] if reports else None))
        snapshots.append(model.snapshot())
    return IncrementalRunResult("lwf", splits.order, reports, model, memory, config, snapshots,
                                [memory.copy() for _ in reports])


def run_icarl(dataset, factor_order, config: TrainConfig, trace=None):
    config.validate()
    splits = incremental_splits(dataset, factor_order)
    model = new_model(dataset, config)
    memory = ExemplarMemory(config.memory_capacity, dataset.num_subjects)
    reports, snapshots, history = [], [], []
    for k, windows in enumerate(splits.train_steps):
        if k == 0:
            train_initial(model, windows, config, trace=trace, step=0)
            memory = update_memory(memory, windows, model)
            means = class_means(model, memory)
        else:
            model, memory, means = icarl_step(model, memory, windows, config, trace=trace, step=k)
        predictor = nme_predictor(model, means)
        reports.append(full_report(model, dataset, k, splits=splits, previous=reports[-1] if reports else None,
                                   predictor=predictor))
        snapshots.append(model.snapshot())
        history.append(memory.copy())
    return IncrementalRunResult("icarl", splits.order, reports, model, memory, config, snapshots, history,
                                extra={"class_means": means})


def run_method(method, dataset, factor_order, config: TrainConfig, trace=None):
    """Dispatch to the incremental driver for ``method`` (joint gives a one-step result)."""
    from .trainer import joint_train, run_incremental

    if method == "ilgaco":
        return run_incremental(dataset, factor_order, config, trace=trace)
    if method == "lwf":
        return run_lwf(dataset, factor_order, config, trace=trace)
    if method == "icarl":
        return run_icarl(dataset, factor_order, config, trace=trace)
    if method == "joint":
        model, report = joint_train(dataset, factor_order, config, trace=trace)
        return IncrementalRunResult("joint", list(factor_order), [report], model,
                                    ExemplarMemory(0, dataset.num_subjects), config, [model.snapshot()])
    raise ValidationError(f"unknown method {method!r}; expected one of {METHODS}")
