import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from hift import evalbench as ev
from hift.errors import ContractError
from hift.heads import BBox


def B(x, y, w, h):
    return BBox.from_xywh(x, y, w, h)


def test_cle_cases():
    a = B(0, 0, 10, 10)
    assert ev.cle(a, a) == 0.0
    p, g = BBox(0, 0, 2, 2), BBox(3, 4, 5, 5)
    assert ev.cle(p, g) == 5.0
    assert ev.cle(g, p) == ev.cle(p, g)


def test_exact_predictions():
    gts = [B(10 * i, 5, 20, 10) for i in range(6)]
    prec = ev.precision_plot(gts, gts)
    succ = ev.success_plot(gts, gts)
    assert np.all(prec.scores == 1.0)  # CLE 0 <= 0 as well, precision is inclusive
    assert np.all(succ.scores[:-1] == 1.0) and succ.scores[-1] == 0.0


def test_disjoint_far_predictions():
    gts = [B(0, 0, 10, 10)] * 3
    preds = [B(200, 200, 10, 10)] * 3
    assert not ev.precision_plot(preds, gts).scores.any()
    assert not ev.success_plot(preds, gts).scores.any()


def test_hand_counted_four_frames():
    gts = [B(0, 0, 10, 10)] * 4
    preds = [B(0, 0, 10, 10),   # CLE 0, IoU 1
             B(5, 0, 10, 10),   # CLE 5, IoU 1/3
             B(0, 20, 10, 10),  # CLE 20, IoU 0
             B(30, 40, 10, 10)]  # CLE 50, IoU 0
    prec = ev.precision_plot(preds, gts)
    want = [0.25] * 5 + [0.5] * 15 + [0.75] * 30 + [1.0]
    assert list(prec.scores) == want
    assert ev.precision_at_20(prec) == 0.75
    succ = ev.success_plot(preds, gts)
    # thresholds 0..0.3 see two frames above, 0.35..0.95 one, 1.0 none
    want_s = [0.5] * 7 + [0.25] * 13 + [0.0]
    assert list(succ.scores) == want_s
    assert ev.auc(succ) == pytest.approx(sum(want_s) / 21, abs=1e-15)


def test_grids():
    assert list(ev.PRECISION_THRESHOLDS) == list(range(51))
    assert np.allclose(ev.SUCCESS_THRESHOLDS, np.arange(21) * 0.05)


def test_auc_constant_and_linear_curves():
    t = ev.SUCCESS_THRESHOLDS
    assert ev.auc(ev.MetricCurve(t, np.ones(21))) == 1.0
    assert ev.auc(ev.MetricCurve(t, np.zeros(21))) == 0.0
    assert ev.auc(ev.MetricCurve(t, 1 - t)) == pytest.approx(0.5, abs=1e-15)


def test_precision_at_20_needs_threshold():
    with pytest.raises(ContractError):
        ev.precision_at_20(ev.MetricCurve(np.arange(0, 50, 3.0), np.zeros(17)))


def test_empty_or_mismatched_input():
    with pytest.raises(ContractError):
        ev.precision_plot([], [])
    with pytest.raises(ContractError):
        ev.success_plot([B(0, 0, 1, 1)], [])


xywh = st.tuples(st.floats(0, 80), st.floats(0, 80), st.floats(1, 40), st.floats(1, 40))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(xywh, xywh), min_size=1, max_size=12), st.randoms())
def test_curve_properties(pairs, rnd):
    preds = [B(*p) for p, _ in pairs]
    gts = [B(*g) for _, g in pairs]
    prec, succ = ev.precision_plot(preds, gts), ev.success_plot(preds, gts)
    assert np.all(np.diff(prec.scores) >= 0)
    assert np.all(np.diff(succ.scores) <= 0)
    assert abs(ev.auc(succ) - oracles.success_auc([p for p, _ in pairs], [g for _, g in pairs])) <= 1e-9
    order = list(range(len(pairs)))
    rnd.shuffle(order)
    succ2 = ev.success_plot([preds[i] for i in order], [gts[i] for i in order])
    prec2 = ev.precision_plot([preds[i] for i in order], [gts[i] for i in order])
    assert np.allclose(succ2.scores, succ.scores, atol=1e-15)
    assert np.allclose(prec2.scores, prec.scores, atol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_auc_matches_indicator_oracle(seed):
    r = np.random.default_rng(seed)
    g = [(r.uniform(0, 50), r.uniform(0, 50), r.uniform(5, 30), r.uniform(5, 30)) for _ in range(25)]
    p = [(x + r.normal(0, 4), y + r.normal(0, 4), w * r.uniform(0.7, 1.3), h * r.uniform(0.7, 1.3))
         for x, y, w, h in g]
    got = ev.auc(ev.success_plot([B(*a) for a in p], [B(*a) for a in g]))
    assert abs(got - oracles.success_auc(p, g)) <= 1e-9


def test_csv_formats():
    curve = ev.MetricCurve(np.array([0.0, 0.5]), np.array([1.0, 0.25]))
    assert ev.curve_csv(curve) == "threshold,score\n0,1.0\n0.5,0.25\n"
    gts = [B(0, 0, 10, 10)] * 2
    summary = ev.summary_csv(ev.precision_plot(gts, gts), ev.success_plot(gts, gts))
    assert summary.splitlines() == ["precision@20,success_auc", f"1.0,{20 / 21!r}"]


def test_mean_curve_averages_sequences():
    t = ev.SUCCESS_THRESHOLDS
    m = ev.mean_curve([ev.MetricCurve(t, np.ones(21)), ev.MetricCurve(t, np.zeros(21))])
    assert np.all(m.scores == 0.5)
    with pytest.raises(ContractError):
        ev.mean_curve([])


def test_identical_box_iou_never_exceeds_one():
    # y + h - y rounds above h here
    b = B(0.0, 29.27111220603884, 1.0, 3.0706715118353785)
    succ = ev.success_plot([b], [b])
    assert succ.scores[-1] == 0.0 and ev.auc(succ) == pytest.approx(20 / 21)
