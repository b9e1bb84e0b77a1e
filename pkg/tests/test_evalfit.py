import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from kbkssd.core import ConfigError, DetectionOutcome, TimeSeries, default_config
from kbkssd.evalfit import (bh_adjust, compare_errors, confusion_counts, error_report, error_rows,
                            expand_grid, grid_fit, interval95, ks_two_sample, levene_bf, load_grid,
                            raw_errors, rows_csv, sign_test, skewness)
from kbkssd.groundtruth import GroundTruthRecord
from kbkssd.pipeline import detect

from conftest import two_plateau


def P(sid, ssi):
    return DetectionOutcome(sid, ssi is not None, ssi, None)


def G(sid, ssi, kind="clustered"):
    return GroundTruthRecord(sid, ssi is not None, ssi, kind if ssi is not None else None)


def test_confusion():
    ids = [f"s{i}" for i in range(10)]
    assert confusion_counts([P(i, 5) for i in ids], [G(i, 7) for i in ids]) == (10, 0, 0)
    assert confusion_counts([P(i, 1) for i in ids[:4]], [G(i, None) for i in ids[:4]]) == (0, 4, 0)
    preds = [P("a", 1), P("b", None), P("c", 3), P("d", None), P("e", None), P("f", 2)]
    labels = [G("a", 1), G("b", 4), G("c", None), G("d", 9), G("e", None), G("f", 2)]
    assert confusion_counts(preds, labels) == (3, 1, 2)
    with pytest.raises(ValueError):
        confusion_counts([P("x", 1)], [G("y", 1)])


def test_raw_errors():
    assert raw_errors([P("a", 480)], [G("a", 500)]) == [20]
    assert raw_errors([P("a", 500)], [G("a", 500)]) == [0]
    assert raw_errors([P("a", 150), P("b", 250)], [G("a", 100), G("b", 300)]) == [-50, 50]
    # only steady on both sides count
    assert raw_errors([P("a", None), P("b", 3)], [G("a", 4), G("b", None)]) == []
    rows = error_rows([P("a", 150)], [G("a", 100, "scattered")])
    assert (rows[0].raw_error, rows[0].abs_error, rows[0].kind) == (-50, 50, "scattered")
    assert rows_csv(rows).splitlines()[1] == "a,100,150,-50,50,scattered"


def test_error_report():
    lo, hi = interval95(110.3, 658.4)
    assert (round(lo, 1), round(hi, 1)) == (-1206.5, 1427.1)
    r = error_report([-1, 0, 1], ["clustered"] * 3)
    assert r.mean == 0 and r.skewness == 0 and r.std == 1.0
    r = error_report([3, -4], ["clustered", "scattered"])
    assert r.total_manhattan == 7 and r.subtotal_clustered == 3 and r.subtotal_scattered == 4
    assert r.interval95 == (r.mean - 2 * r.std, r.mean + 2 * r.std)
    with pytest.raises(ValueError):
        error_report([1], ["clustered"])


@given(st.lists(st.floats(-1e4, 1e4), min_size=3, max_size=50))
def test_skewness_matches_scipy(values):
    x = np.asarray(values)
    if np.ptp(x) < 1e-6 * (1 + np.abs(x).max()):
        return
    assert skewness(values) == pytest.approx(stats.skew(x, bias=True), abs=1e-6)


def test_sign_test_examples():
    r = sign_test([1] * 8)
    assert r.statistic == 1.0 and r.p_value == pytest.approx(2 / 256)
    r = sign_test([1, -1] * 4)
    assert r.statistic == 0.5 and r.p_value == 1.0
    r = sign_test([1] * 7 + [-1])
    assert r.statistic == 0.875 and r.p_value == 18 / 256
    assert sign_test([0, 0, 1]).p_value == 1.0
    with pytest.raises(ValueError):
        sign_test([0, 0])


def enumerated_sign_p(pos, n):
    # sum of probabilities of outcomes no more likely than the observed one
    probs = [Fraction(math.comb(n, k), 2 ** n) for k in range(n + 1)]
    obs = probs[pos]
    return float(min(Fraction(1), sum(p for p in probs if p <= obs)))


def test_sign_test_enumeration():
    for n in range(1, 21):
        for pos in range(n + 1):
            got = sign_test([1] * pos + [-1] * (n - pos)).p_value
            assert got == enumerated_sign_p(pos, n)
            assert got == pytest.approx(stats.binomtest(pos, n).pvalue, rel=1e-9)


def test_ks_examples():
    assert ks_two_sample([1, 2, 3], [1, 2, 3]).statistic == 0
    assert ks_two_sample([1, 2, 3, 4], [5, 6, 7, 8]).statistic == 1
    assert ks_two_sample([1, 3], [2, 4]).statistic == 0.5
    with pytest.raises(ValueError):
        ks_two_sample([], [1])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@given(st.lists(st.integers(-20, 20), min_size=1, max_size=30),
       st.lists(st.integers(-20, 20), min_size=1, max_size=30))
def test_ks_against_scipy(a, b):
    r = ks_two_sample(a, b)
    assert r.statistic == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-12)
    assert r.statistic == ks_two_sample(b, a).statistic
    assert 0 <= r.statistic <= 1 and 0 <= r.p_value <= 1
    m, n = len(a), len(b)
    ref = stats.kstwobign.sf(math.sqrt(m * n / (m + n)) * r.statistic)
    assert r.p_value == pytest.approx(ref, abs=1e-9)


def test_levene_examples():
    r = levene_bf([1, 2, 3, 4], [10, 20, 30, 40])
    assert r.statistic == pytest.approx(162 * 6 / 101, abs=1e-9)
    assert round(r.statistic, 3) == 9.624
    assert levene_bf([1, 5, 2], [1, 5, 2]).statistic == 0
    r = levene_bf([3.0] * 4, [3.0] * 4)
    assert (r.statistic, r.p_value, r.degenerate) == (0.0, 1.0, False)
    r = levene_bf([3.0] * 4, [1.0, 5.0, 1.0, 5.0])
    assert r.degenerate and r.p_value == 0.0
    with pytest.raises(ValueError):
        levene_bf([1], [1, 2])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=20),
       st.lists(st.floats(-100, 100), min_size=2, max_size=20))
def test_levene_against_scipy(a, b):
    r = levene_bf(a, b)
    if r.degenerate or not np.isfinite(r.statistic):
        return
    ref = stats.levene(a, b, center="median")
    if not np.isfinite(ref.statistic):
        return
    assert r.statistic == pytest.approx(ref.statistic, rel=1e-6, abs=1e-9)


def test_bh_examples():
    assert bh_adjust([0.2]) == [0.2]
    assert bh_adjust([0.05] * 4) == pytest.approx([0.05] * 4)
    assert bh_adjust([0.01, 0.04, 0.03]) == pytest.approx([0.03, 0.04, 0.04])
    assert bh_adjust([]) == []
    with pytest.raises(ValueError):
        bh_adjust([1.2])


def bh_reference(p):
    n = len(p)
    order = sorted(range(n), key=lambda i: p[i])
    out = [0.0] * n
    for rank, i in enumerate(order, start=1):
        out[i] = min(1.0, min(p[order[j - 1]] * n / j for j in range(rank, n + 1)))
    return out


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_bh_properties(p):
    q = bh_adjust(p)
    assert q == pytest.approx(bh_reference(p), abs=1e-15)
    assert all(qi >= pi for pi, qi in zip(p, q))
    srt = [q[i] for i in sorted(range(len(p)), key=lambda i: p[i])]
    assert all(a <= b for a, b in zip(srt, srt[1:]))


def test_compare_errors_adjusts_all():
    res = compare_errors([5, 3, 8, 1, 9, 2], [1, 2, 3, 1, 2, 1])
    assert [r.name for r in res] == ["sign", "ks", "levene"]
    assert all(r.p_adjusted is not None and r.p_adjusted >= r.p_value for r in res)
    assert [r.name for r in compare_errors([1, 2], [1, 2])] == ["ks", "levene"]


# -- grid fit -------------------------------------------------------------

BASE = default_config().replace(outlier_win_size=10, prob_win_size=20, step_win_size=10,
                                short_kernel_size=5)
SERIES = [TimeSeries("a", two_plateau(35, 60, 10, 5)), TimeSeries("b", two_plateau(40, 50, 10, 2)),
          TimeSeries("c", two_plateau(25, 70, 10, 1))]
LABELS = [G("a", 29), G("b", 41), G("c", 25)]


def test_grid_fit_seven_beats_thirty():
    result = grid_fit(SERIES, LABELS, {"step_rel_threshold": [0.6, 0.05]}, base=BASE)
    objectives = {t.config.step_rel_threshold: t.objective for t in result.trials}
    assert objectives == {0.6: 30, 0.05: 7}
    best, objective = result
    assert best.step_rel_threshold == 0.05 and objective == 7
    single = grid_fit(SERIES, LABELS, {"t_crit": [3.0]}, base=BASE)
    assert single.best == BASE.replace(t_crit=3.0)


def brute_force(series, labels, grid, base):
    names = sorted(grid)
    best = None
    for combo in itertools.product(*(grid[n] for n in names)):
        cfg = base.replace(**dict(zip(names, combo)))
        total = unsteady = 0
        for s, g in zip(series, labels):
            if not g.steady:
                continue
            out = detect(s, cfg)
            if out.steady:
                total += abs(out.ssi - g.ssi)
            else:
                unsteady += 1
        key = (total, unsteady, combo)
        if best is None or key < best[0]:
            best = (key, cfg)
    return best[1], best[0][0], best[0][1]


def test_grid_fit_matches_brute_force():
    rng = np.random.default_rng(7)
    labels = [G("a", 33), G("b", None), G("c", 30)]
    grid = {"step_rel_threshold": [0.05, 0.6, 0.9], "t_crit": [1.0, 2.0, 4.0],
            "prob_threshold": [0.5, 0.9, 1.0], "scan_stride": [1, 4]}
    result = grid_fit(SERIES, labels, grid, base=BASE)
    assert len(result.trials) == 54
    assert (result.best, result.objective, result.unsteady) == brute_force(SERIES, labels, grid, BASE)
    noisy = [s.with_samples(s.samples + rng.normal(0, 0.3, len(s))) for s in SERIES]
    assert tuple(grid_fit(noisy, LABELS, grid, base=BASE))[0] == brute_force(noisy, LABELS, grid, BASE)[0]


def test_grid_errors(tmp_path):
    with pytest.raises(ValueError):
        grid_fit(SERIES, LABELS, {}, base=BASE)
    with pytest.raises(ConfigError):
        expand_grid({"bogus": [1]})
    with pytest.raises(ValueError):
        grid_fit(SERIES, LABELS[:2], {"t_crit": [3.0]}, base=BASE)
    p = tmp_path / "g.json"
    p.write_text(json.dumps({"t_crit": [3, 4], "prob_win_size": [400]}))
    assert load_grid(p) == {"t_crit": [3, 4], "prob_win_size": [400]}
    p = tmp_path / "g.toml"
    p.write_text("t_crit = [3.0, 4.0]\n")
    assert load_grid(p) == {"t_crit": [3.0, 4.0]}
