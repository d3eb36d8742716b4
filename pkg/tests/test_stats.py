import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import reference_tables as ref
from tendonscore.errors import DomainError, ShapeError, ValidationError, ZeroVarianceError
from tendonscore.stats import (
    CorrelationReport, SurveyScores, correlate_with_ground_truth, critical_r,
    interprotocol_matrix, pearson, read_surveys_csv, report_from_matrix,
    select_protocol_pair, significance, survey_means, write_surveys_csv,
)


def t_route_critical_r(n, alpha):
    """Independent route: Student t quantile, then r = t / sqrt(t^2 + df)."""
    df = n - 2
    t = scipy.stats.t.ppf(1 - alpha / 2, df)
    return t / math.sqrt(t * t + df)


# pearson --------------------------------------------------------------------

def test_pearson_examples():
    x = np.arange(7.0)
    assert pearson(x, x) == 1.0
    assert pearson(x, -2 * x + 3) == -1.0
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)


def test_pearson_errors():
    with pytest.raises(ZeroVarianceError):
        pearson([1, 2, 3], [4, 4, 4])
    with pytest.raises(ShapeError):
        pearson([1, 2, 3], [1, 2])
    with pytest.raises(DomainError):
        pearson([1, 2], [2, 1])


series = st.lists(st.floats(-100, 100), min_size=3, max_size=20)


@given(series, st.floats(0.01, 100), st.floats(-100, 100), st.integers(0, 2**32 - 1))
def test_pearson_affine_invariance(x, a, b, seed):
    x = np.array(x)
    assume(np.ptp(x) > 1e-3)
    y = np.random.default_rng(seed).standard_normal(len(x))
    r = pearson(x, y)
    assert abs(pearson(a * x + b, y) - r) < 1e-12
    assert abs(pearson(x, -a * y + b) + r) < 1e-12


# critical r -----------------------------------------------------------------

def test_critical_r_values():
    assert 0.7645 <= critical_r(10, 0.01) <= 0.7648
    assert critical_r(10, 0.01) == pytest.approx(t_route_critical_r(10, 0.01), abs=1e-10)
    assert critical_r(12, 0.05) == pytest.approx(0.576, abs=5e-4)
    assert critical_r(12, 0.05) == pytest.approx(t_route_critical_r(12, 0.05), abs=1e-10)
    # frozen t quantiles behind the two thresholds
    assert scipy.stats.t.ppf(0.995, 8) == pytest.approx(3.3554, abs=1e-4)
    assert scipy.stats.t.ppf(0.975, 10) == pytest.approx(2.2281, abs=1e-4)


@given(st.integers(3, 500), st.floats(1e-6, 0.999))
def test_critical_r_matches_t_route(n, alpha):
    assert critical_r(n, alpha) == pytest.approx(t_route_critical_r(n, alpha), abs=1e-9)


@given(st.integers(3, 300), st.floats(1e-4, 0.5), st.floats(0.5, 0.95))
def test_critical_r_monotone(n, alpha, shrink):
    assert critical_r(n + 1, alpha) < critical_r(n, alpha)
    assert critical_r(n, alpha * shrink) > critical_r(n, alpha)


@pytest.mark.parametrize("n, alpha", [(2, 0.01), (10, 0.0), (10, 1.0)])
def test_critical_r_domain(n, alpha):
    with pytest.raises(DomainError):
        critical_r(n, alpha)


def test_table_partition():
    threshold = critical_r(ref.N, 0.01)
    for r, bold in ref.all_cells():
        assert (r > threshold) == bool(bold), r


def test_monte_carlo_false_positive_rate():
    rng = np.random.default_rng(2024)
    threshold = critical_r(10, 0.01)
    hits = sum(abs(pearson(rng.standard_normal(10), rng.standard_normal(10))) > threshold
               for _ in range(10_000))
    assert 0.007 <= hits / 10_000 <= 0.013


# reports --------------------------------------------------------------------

def test_ground_truth_identity():
    h = {"PD": np.arange(10.0), "T1": np.arange(10.0) ** 2}
    rep = correlate_with_ground_truth(h, {"STE": h["PD"], "TE": h["PD"]})
    assert (rep.r[:, 0] == 1.0).all() and rep.significant[:, 0].all()
    assert rep.rows == ("STE", "TE") and rep.cols == ("PD", "T1")


def test_ground_truth_engineered_pd_column():
    rs = [r for r, _ in (ref.GROUND_TRUTH[p][0] for p in ref.GROUND_TRUTH)]
    base, _ = ref.series_with_correlation(0.5, 10, seed=0)
    surveys = {p: ref.series_with_correlation(r, 10, seed=i + 1, base=base)[1]
               for i, (p, r) in enumerate(zip(ref.GROUND_TRUTH, rs))}
    rep = correlate_with_ground_truth({"PD": base}, surveys)
    np.testing.assert_allclose(rep.r[:, 0], rs, atol=1e-12)
    assert rep.significant[:, 0].tolist() == [False, False, True, True, False, True]
    assert rep.significant_counts() == {"PD": 3}


def test_ground_truth_length_mismatch():
    with pytest.raises(ShapeError):
        correlate_with_ground_truth({"PD": np.arange(5.0)}, {"STE": np.arange(4.0)})


def test_interprotocol_symmetry(rng):
    h = {p: rng.standard_normal(10) for p in ("PD", "T1", "T2")}
    h["T2"] = h["PD"].copy()
    rep = interprotocol_matrix(h)
    assert np.array_equal(rep.r, rep.r.T)
    assert (np.diag(rep.r) == 1.0).all() and not np.diag(rep.significant).any()
    assert rep.value("PD", "T2") == 1.0
    with pytest.raises(DomainError):
        interprotocol_matrix({"PD": h["PD"]})


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(3, 15))
def test_interprotocol_properties(seed, m, n):
    rng = np.random.default_rng(seed)
    names = ("PD", "T1", "T2", "T2MAP", "T2STARGRE", "IDEALW")[:m]
    rep = interprotocol_matrix({p: rng.standard_normal(n) for p in names})
    assert np.array_equal(rep.r, rep.r.T) and (np.diag(rep.r) == 1.0).all()
    off = ~np.eye(m, dtype=bool)
    assert np.array_equal(rep.significant[off], significance(rep.r, rep.n, rep.alpha)[off])


def table3_report():
    r = [[c[0] for c in row] for row in ref.INTERPROTOCOL]
    return report_from_matrix(ref.INTERPROTOCOL_NAMES, r, ref.N)


def test_table3_flags():
    rep = table3_report()
    expected = np.array([[c[1] for c in row] for row in ref.INTERPROTOCOL], bool)
    assert np.array_equal(rep.significant, expected)


def test_selection_on_table3():
    rep = table3_report()
    counts = ref.significant_counts()
    assert {k: counts[k] for k in ref.INTERPROTOCOL_NAMES} == {"PD": 3, "T1": 3, "T2": 2, "T2STARGRE": 2}
    assert select_protocol_pair(rep, "global-min") == ("T2", "T2STARGRE")
    # collapsing PD/T1 keeps PD; the documented rule then takes the survivors' minimum
    assert select_protocol_pair(rep, "redundancy-prune", counts) == ("T2", "T2STARGRE")
    assert select_protocol_pair(rep, "anchor", counts) == ("PD", "T2STARGRE")
    # 0.895 also collapses PD/T2, leaving PD and T2*GRE
    assert select_protocol_pair(rep, "redundancy-prune", counts, redundancy_threshold=0.895) == ("PD", "T2STARGRE")
    # 0.88 prunes down to PD alone, so the global minimum is used
    assert select_protocol_pair(rep, "redundancy-prune", counts, redundancy_threshold=0.88) == ("T2", "T2STARGRE")


def test_selection_two_protocols_and_errors():
    rep = report_from_matrix(("T1", "PD"), [[1, 0.99], [0.99, 1]], 10)
    for strategy in ("global-min", "redundancy-prune", "anchor"):
        assert select_protocol_pair(rep, strategy) == ("PD", "T1")
    with pytest.raises(DomainError):
        select_protocol_pair(rep, "random")
    with pytest.raises(DomainError):
        select_protocol_pair(report_from_matrix(("PD",), [[1.0]], 10))


def test_selection_uses_magnitude_and_order_ties():
    rep = report_from_matrix(("PD", "T1", "T2"), [[1, -0.2, 0.5], [-0.2, 1, 0.2], [0.5, 0.2, 1]], 10)
    assert select_protocol_pair(rep, "global-min") == ("PD", "T1")


def test_report_serialisation(tmp_path):
    rep = table3_report()
    rep.to_json(tmp_path / "r.json")
    back = CorrelationReport.from_json(tmp_path / "r.json")
    assert np.array_equal(back.r, rep.r) and np.array_equal(back.significant, rep.significant)
    assert (back.n, back.alpha) == (10, 0.01)
    rep.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == ",PD,T1,T2,T2STARGRE"
    text = rep.render()
    assert "0.96*" in text and "0.71 " in text


def test_survey_scores(tmp_path):
    with pytest.raises(ValidationError):
        SurveyScores(1, 0, 1, 2, 3, 4, 5, 6)
    rows = [SurveyScores(1, 0, 5, 4, 3, 2, 1, 5), SurveyScores(2, 0, 3, 4, 3, 2, 1, 1)]
    write_surveys_csv(tmp_path / "s.csv", rows)
    assert read_surveys_csv(tmp_path / "s.csv") == rows
    means = survey_means(rows, "SCT", timesteps=range(2))
    assert means[0] == 4.0 and np.isnan(means[1])
