import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ilgaco.dataset import FrameSequence, generate_dataset, incremental_splits
from ilgaco.errors import ValidationError
from ilgaco.evaluation import full_report, predict_from_logits, rank1, run_report, table1_csv, table2_csv, video_predict
from ilgaco.trainer import TrainConfig, run_incremental

from support import tiny_spec


class LogitModel:
    """Window logits are read straight from frame 0 of each window."""

    def forward(self, x):
        x = np.asarray(x)
        return x[:, 0, :], x[:, 0, :].copy()


def _win(logits, T=2):
    return np.tile(np.asarray(logits, dtype=float), (T, 1))


def _video(subject, logits_per_window):
    seq = FrameSequence(subject=subject, factor=0, frames=np.zeros((1, 1)), seq_id=subject)
    return seq, [_win(z) for z in logits_per_window]


def test_single_window_is_window_argmax():
    assert video_predict(LogitModel(), [_win([0.1, 2.0, -1.0])]).predicted == 1


def test_hand_averaged_probabilities():
    # windows with probabilities [0.6, 0.4] and [0.2, 0.8] average to [0.4, 0.6]
    windows = [_win([math.log(0.6), math.log(0.4)]), _win([math.log(0.2), math.log(0.8)])]
    pred = video_predict(LogitModel(), windows)
    np.testing.assert_allclose(pred.probabilities, [0.4, 0.6], atol=1e-15)
    assert pred.predicted == 1


def test_tie_goes_to_lowest_class():
    assert predict_from_logits(np.zeros((3, 4))).predicted == 0


def test_empty_video_rejected():
    with pytest.raises(ValidationError):
        video_predict(LogitModel(), [])
    with pytest.raises(ValidationError):
        rank1(LogitModel(), [])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), C=st.integers(2, 5))
def test_video_prediction_invariant_to_window_order(seed, n, C):
    rng = np.random.default_rng(seed)
    windows = [_win(rng.normal(size=C)) for _ in range(n)]
    a = video_predict(LogitModel(), windows)
    b = video_predict(LogitModel(), windows[::-1])
    assert a.predicted == b.predicted
    assert abs(a.probabilities.sum() - 1) < 1e-9


def test_oracle_model_scores_100():
    items = [_video(c, [np.eye(3)[c] * 20]) for c in range(3)]
    assert rank1(LogitModel(), items) == 100.0


def test_constant_model_scores_one_over_c():
    items = [_video(c, [[5.0, 0, 0, 0]]) for c in range(4)]
    assert rank1(LogitModel(), items) == 25.0


def test_three_of_four_correct():
    items = [_video(0, [[1, 0]]), _video(1, [[0, 1]]), _video(1, [[0, 3]]), _video(0, [[0, 1]])]
    assert rank1(LogitModel(), items) == 75.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8))
def test_rank1_order_invariant_and_monotone(seed, n):
    rng = np.random.default_rng(seed)
    items = [_video(int(rng.integers(0, 3)), [rng.normal(size=3)]) for _ in range(n)]
    r = rank1(LogitModel(), items)
    assert 0 <= r <= 100
    assert r == rank1(LogitModel(), items[::-1])
    assert rank1(LogitModel(), items + [_video(2, [[0, 0, 9.0]])]) >= r
    assert rank1(LogitModel(), items + [_video(2, [[9.0, 0, 0]])]) <= r


@pytest.fixture(scope="module")
def small_run():
    ds = generate_dataset(tiny_spec())
    cfg = TrainConfig(iterations_main=25, iterations_finetune=10, batch_size=8, memory_capacity=18, hidden=8,
                      embedding=6)
    res = run_incremental(ds, [2, 0, 1], cfg)
    return ds, res, run_report(res, ds, "viewpoints")


def test_full_report_covers_every_factor(small_run):
    ds, res, _ = small_run
    first = res.reports[0]
    assert set(first.per_factor) == {0, 1, 2}
    assert first.average == pytest.approx(np.mean(list(first.per_factor.values())), abs=1e-12)
    assert first.counts == {0: 3, 1: 3, 2: 3}
    assert [len(v) for v in res.reports[-1].trajectory.values()] == [3, 3, 3]
    direct = full_report(res.model, ds, 2, splits=incremental_splits(ds, [2, 0, 1]))
    assert direct.per_factor == res.reports[-1].per_factor


def test_table1_shape(small_run):
    _, _, rep = small_run
    rows = list(csv.reader(io.StringIO(table1_csv([rep, rep]))))
    assert rows[0] == ["run", "090", "000", "045"]
    assert len(rows) == 3 and all(len(r) == 4 for r in rows)
    assert [float(v) for v in rows[1][1:]] == [s["average"] for s in rep["steps"]]
    # each column reports all test factors, not only the learned ones
    assert all(len(s["per_factor"]) == 3 for s in rep["steps"])


def test_table1_rejects_mixed_orders(small_run):
    _, _, rep = small_run
    other = dict(rep, factor_order=[0, 1, 2])
    with pytest.raises(ValidationError):
        table1_csv([rep, other])


def test_table2_average_row(small_run):
    _, _, rep = small_run
    rows = list(csv.reader(io.StringIO(table2_csv(rep))))
    assert rows[0][0] == "test" and rows[-1][0] == "average"
    body = np.array([[float(v) for v in r[1:]] for r in rows[1:-1]])
    avg = np.array([float(v) for v in rows[-1][1:]])
    assert body.shape == (3, 3)
    np.testing.assert_allclose(avg, body.mean(axis=0), rtol=0, atol=1e-12)


def test_report_json_fields(small_run):
    _, res, rep = small_run
    assert rep["method"] == "ilgaco"
    assert rep["final_average"] == res.reports[-1].average
    assert rep["memory_final"]["stored"] == len(res.memory) <= 18
    assert rep["trajectory"]["2"] == [s["per_factor"]["2"] for s in rep["steps"]]
