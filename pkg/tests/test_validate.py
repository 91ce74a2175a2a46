import numpy as np
import pytest
from numpy.testing import assert_allclose

from vinestep.diffvine import _forward, _jacobian_entries
from vinestep.paircop import FamilyTag, PairCopula
from vinestep.validate import (
    AlphaSeq,
    default_a3_rows,
    default_mn_rows,
    estimate_a3,
    estimate_dn,
    estimate_mn,
    sample_deltas,
)
from vinestep.vinemodel import ThetaModelSpec, VineModel, from_theta_model, simulate
from vinestep.vinestruct import build_cvine, build_dvine

# brute-force quantiles of |1 - x^2 - y^2| over 10^6 standard-normal pairs
# (the weighted row sum of a single independence edge), frozen beforehand
BRUTE_ROW_SUM_Q90 = 3.602107442379836
BRUTE_ROW_SUM_Q99 = 8.213710736320989


def test_default_row_counts():
    assert default_a3_rows(10) == int(np.ceil(2000 * np.log(10)))
    assert default_mn_rows(10) == int(np.ceil(200 * np.log(10)))


def test_alpha_rules():
    assert AlphaSeq().value(7) == 1.0
    assert AlphaSeq("linear-in-tree").value(3) == 3.0
    assert AlphaSeq("custom", (2.0, 5.0)).value(2) == 5.0
    with pytest.raises(ValueError):
        AlphaSeq("quadratic")
    with pytest.raises(ValueError):
        AlphaSeq("custom", None)
    with pytest.raises(ValueError):
        AlphaSeq("custom", (1.0, -1.0))
    with pytest.raises(ValueError):
        AlphaSeq("constant-1", (1.0,))


def test_alpha_per_param_expands_by_arity():
    m = from_theta_model(build_dvine(3), FamilyTag.STUDENT_T, ThetaModelSpec("harmonic"))
    a = AlphaSeq("linear-in-tree").per_param(m)
    assert_allclose(a, [1.0, 1.0, 1.0, 1.0, 2.0, 2.0])


def test_sample_deltas_magnitudes_and_signs():
    m = from_theta_model(build_dvine(4), FamilyTag.GAUSSIAN, ThetaModelSpec("harmonic"))
    D = sample_deltas(m, 0.005, AlphaSeq(), 2000, seed=1)
    assert D.shape == (2000, m.p)
    assert_allclose(np.abs(D), 0.005)
    freq = (D > 0).mean(axis=0)
    assert np.all(np.abs(freq - 0.5) < 0.05)


def test_sample_deltas_scale_with_alpha():
    m = from_theta_model(build_dvine(3), FamilyTag.GAUSSIAN, ThetaModelSpec("harmonic"))
    D = sample_deltas(m, 0.01, AlphaSeq("linear-in-tree"), 100, seed=2)
    assert_allclose(np.abs(D[:, :2]), 0.01)
    assert_allclose(np.abs(D[:, 2]), 0.02)


def test_sample_deltas_deterministic():
    m = from_theta_model(build_dvine(3), FamilyTag.GAUSSIAN, ThetaModelSpec("zero"))
    assert np.array_equal(
        sample_deltas(m, 0.005, AlphaSeq(), 10, seed=3),
        sample_deltas(m, 0.005, AlphaSeq(), 10, seed=3),
    )


def test_a3_independence_vine_is_near_minus_one():
    # every score slope is E[ds/drho] = -1 at rho = 0, so the max over
    # parameters and draws stays near -1
    m = from_theta_model(build_dvine(4), FamilyTag.GAUSSIAN, ThetaModelSpec("zero"))
    a3 = estimate_a3(m, seed=4)
    assert -1.3 < a3 < -0.7


def test_a3_single_edge_matches_score_slope():
    rho = 0.5
    m = VineModel(build_dvine(2), (PairCopula(FamilyTag.GAUSSIAN, (rho,)),))
    a3 = estimate_a3(m, eps=0.005, K=20, N=100_000, seed=5)
    expected = -(1 + rho**2) / (1 - rho**2) ** 2
    assert abs(a3 - expected) < 0.12 * abs(expected)


def test_a3_deterministic_in_seed():
    m = from_theta_model(build_cvine(4), FamilyTag.GAUSSIAN, ThetaModelSpec("geometric"))
    assert estimate_a3(m, K=5, N=500, seed=6) == estimate_a3(m, K=5, N=500, seed=6)
    assert estimate_a3(m, K=5, N=500, seed=6) != estimate_a3(m, K=5, N=500, seed=7)


def test_a3_works_for_non_gaussian_families():
    m = from_theta_model(build_dvine(3), FamilyTag.GUMBEL_SIGNED, ThetaModelSpec("harmonic"))
    val = estimate_a3(m, K=5, N=400, seed=8)
    assert np.isfinite(val)


def test_mn_invariant_under_joint_alpha_eps_rescaling():
    # the row-sum weights are ratios alpha_k / alpha_j and the perturbation
    # magnitudes are eps * alpha, so scaling alpha up and eps down by the
    # same factor reproduces the estimate exactly
    m = from_theta_model(build_dvine(4), FamilyTag.GAUSSIAN, ThetaModelSpec("harmonic"))
    a = estimate_mn(m, eps=0.01, alpha=AlphaSeq("custom", (1.0, 2.0, 3.0)), K=5, N=300, seed=9)
    b = estimate_mn(m, eps=0.001, alpha=AlphaSeq("custom", (10.0, 20.0, 30.0)), K=5, N=300, seed=9)
    assert a == b


def test_mn_dominates_squared_diagonal():
    # each row sum includes |d phi_j / d theta_j| itself, so mn is at least
    # the mean squared diagonal of the weakest edge
    m = VineModel(build_dvine(2), (PairCopula(FamilyTag.GAUSSIAN, (0.3,)),))
    mn = estimate_mn(m, K=5, N=50_000, seed=10)
    expected_sq = np.mean(
        [
            e**2
            for e in _single_edge_diag(m, 50_000, seed_val=10)
        ]
    )
    assert mn >= 0.5 * expected_sq


def _single_edge_diag(m, N, seed_val):
    U = simulate(m, N, seed=seed_val)
    rec = _forward(m, U)[0]
    diag, _ = _jacobian_entries(rec)
    return np.abs(diag)


def test_dn_single_edge_independence_matches_brute_quantile():
    # with p = 1 the level degenerates to the maximum; to pin the quantile
    # path, call the row sums directly and compare with frozen brute force
    m = VineModel(build_dvine(2), (PairCopula(FamilyTag.GAUSSIAN, (0.0,)),))
    totals = _single_edge_diag(m, 400_000, seed_val=11)
    assert abs(np.quantile(totals, 0.9) - BRUTE_ROW_SUM_Q90) < 0.03 * BRUTE_ROW_SUM_Q90
    assert abs(np.quantile(totals, 0.99) - BRUTE_ROW_SUM_Q99) < 0.03 * BRUTE_ROW_SUM_Q99


def test_dn_uses_max_when_level_degenerates():
    m = VineModel(build_dvine(2), (PairCopula(FamilyTag.GAUSSIAN, (0.0,)),))
    # p = 1 so 1 - 15/p^2 < 0: dn must be a sample maximum, hence at least
    # the 99th percentile of the same row sums
    dn = estimate_dn(m, K=3, N=5000, seed=12)
    totals = _single_edge_diag(m, 5000, seed_val=12)
    assert dn >= np.quantile(totals, 0.99) * 0.5


def test_dn_grows_with_quantile_level():
    # a larger vine pushes p^2 past 15 and the level into (0, 1); dn is then
    # no larger than the max-based bound of the same model
    m = from_theta_model(build_dvine(6), FamilyTag.GAUSSIAN, ThetaModelSpec("harmonic"))
    p = m.p
    assert 1.0 - 15.0 / p**2 > 0
    dn = estimate_dn(m, K=3, N=2000, seed=13)
    mn = estimate_mn(m, K=3, N=2000, seed=13)
    assert np.isfinite(dn) and dn > 0
    assert np.isfinite(mn) and mn > 0


def test_mn_dn_need_enough_rows():
    m = from_theta_model(build_dvine(3), FamilyTag.GAUSSIAN, ThetaModelSpec("zero"))
    with pytest.raises(ValueError):
        estimate_mn(m, N=1, seed=14)
    with pytest.raises(ValueError):
        estimate_a3(m, N=50, seed=14)
