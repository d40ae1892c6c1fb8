"""Video-level Rank-1 accuracy, per-factor reports, and report serialization."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .dataset import incremental_splits
from .errors import ValidationError
from .nn import softmax


@dataclass(frozen=True)
class VideoPrediction:
    sequence_id: int
    predicted: int
    probabilities: np.ndarray


def _windows_array(windows):
    if isinstance(windows, np.ndarray):
        return windows
    return np.stack([w.window if hasattr(w, "window") else w for w in windows])


def video_predict(model, sequence_windows, sequence_id=-1) -> VideoPrediction:
    """Average window softmax over the sequence, then argmax (lowest class id on ties)."""
    windows = list(sequence_windows) if not isinstance(sequence_windows, np.ndarray) else sequence_windows
    if len(windows) == 0:
        raise ValidationError("video_predict needs at least one window")
    logits = model.forward(_windows_array(windows))[1]
    return predict_from_logits(logits, sequence_id)


def predict_from_logits(logits, sequence_id=-1) -> VideoPrediction:
    probs = softmax(logits).mean(axis=0)
    return VideoPrediction(sequence_id, int(np.argmax(probs)), probs)


def softmax_predictor(model):
    """Predict class ids for a list of per-video window stacks with one batched forward."""

    def predict(videos):
        sizes = [len(v) for v in videos]
        logits = model.forward(np.concatenate([_windows_array(v) for v in videos]))[1]
        bounds = np.cumsum([0] + sizes)
        return [predict_from_logits(logits[a:b]).predicted for a, b in zip(bounds[:-1], bounds[1:])]

    return predict


def rank1(model, test_items, predictor=None):
    """Percentage of correctly classified videos.

    ``test_items`` is a list of ``(sequence, windows)`` pairs (or anything with
    a ``subject`` attribute paired with its windows).
    """
    items = list(test_items)
    if not items:
        raise ValidationError("rank1 needs at least one test video")
    predictor = predictor or softmax_predictor(model)
    predicted = predictor([w for _, w in items])
    correct = sum(int(p == seq.subject) for p, (seq, _) in zip(predicted, items))
    return 100.0 * correct / len(items)


@dataclass
class EvalReport:
    step: int
    added_factor: int | None
    per_factor: dict  # factor id -> Rank-1 %
    average: float
    counts: dict  # factor id -> number of test videos
    trajectory: dict = field(default_factory=dict)  # factor id -> [Rank-1 after step 0..k]

    def to_json(self):
        return {
            "step": self.step,
            "added_factor": self.added_factor,
            "per_factor": {str(k): v for k, v in self.per_factor.items()},
            "average": self.average,
            "counts": {str(k): v for k, v in self.counts.items()},
        }


def full_report(model, dataset, learned_step_index, splits=None, previous=None, predictor=None):
    """Rank-1 on every factor's test split, their mean, and the extended trajectory."""
    if splits is None:
        splits = incremental_splits(dataset, dataset.factor_ids)
    predictor = predictor or softmax_predictor(model)
    per_factor, counts = {}, {}
    for fid in dataset.factor_ids:
        items = splits.test.get(fid, [])
        per_factor[fid] = rank1(model, items, predictor)
        counts[fid] = len(items)
    average = float(np.mean(list(per_factor.values())))
    trajectory = {f: list(v) for f, v in (previous.trajectory.items() if previous else [])}
    for fid, acc in per_factor.items():
        trajectory.setdefault(fid, []).append(acc)
    added = splits.order[learned_step_index] if learned_step_index < len(splits.order) else None
    return EvalReport(learned_step_index, added, per_factor, average, counts, trajectory)


def run_report(result, dataset, experiment, extra=None):
    """JSON-serializable report for an incremental (or joint) run."""
    names = {f.id: f.name for f in dataset.spec.factors}
    reports = result.reports
    out = {
        "method": result.method,
        "experiment": experiment,
        "factor_order": list(result.factor_order),
        "factor_names": {str(f): names[f] for f in dataset.factor_ids},
        "test_factors": list(dataset.factor_ids),
        "memory_capacity": result.config.memory_capacity,
        "steps": [r.to_json() for r in reports],
        "trajectory": {str(f): v for f, v in reports[-1].trajectory.items()},
        "final_average": reports[-1].average,
        "memory_final": {
            "stored": len(result.memory),
            "factors": list(result.memory.factors),
            "quota": result.memory.current_quota,
        },
    }
    if extra:
        out.update(extra)
    return out


def _fmt(v):
    # Shortest round-trip repr: CSV values parse back to the report's floats exactly.
    return repr(float(v))


def table1_csv(reports):
    """Summary table: one row per run, one column per added factor (average Rank-1 after that step).

    ``reports`` is a list of JSON run reports with identical factor orders.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    first = reports[0]
    names = first["factor_names"]
    order = first["factor_order"]
    w.writerow(["run"] + [names[str(f)] for f in order])
    for rep in reports:
        if rep["factor_order"] != order:
            raise ValidationError("table1 rows must share the factor order")
        label = f"{rep['method']}-memory-{rep['memory_capacity']}"
        w.writerow([label] + [_fmt(s["average"]) for s in rep["steps"]])
    return buf.getvalue()


def table2_csv(report):
    """Per-factor table: rows = test factor plus 'average', columns = added factor."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = report["factor_names"]
    if report["method"] == "joint":
        header = ["joint"]  # a single step trained on every factor at once
    else:
        header = [names[str(f)] for f in report["factor_order"][: len(report["steps"])]]
    w.writerow(["test"] + header)
    for f in report["test_factors"]:
        w.writerow([names[str(f)]] + [_fmt(v) for v in report["trajectory"][str(f)]])
    w.writerow(["average"] + [_fmt(s["average"]) for s in report["steps"]])
    return buf.getvalue()
