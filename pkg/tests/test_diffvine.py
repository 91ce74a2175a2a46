import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from vinestep.diffvine import (
    EmpiricalIJ,
    empirical_IJ,
    grad_phi_analytic,
    grad_phi_fd,
    save_empirical_ij,
)
from vinestep.paircop import FamilyTag, PairCopula
from vinestep.vinemodel import ThetaModelSpec, VineModel, from_theta_model, simulate
from vinestep.vinestruct import build_cvine, build_dvine

# closed-form E[d(score)/d(rho)] for one Gaussian edge at its own rho
EXPECTED_J_DIAG = {
    0.0: -1.0,
    0.3: -1.3162661514309866,
    0.5: -2.2222222222222223,
    0.8: -12.65432098765433,
}
# closed-form cross term: d(score of edge (2,3;1))/d(rho of edge (1,2)) in a
# three-variable star, averaged at the truth, rho12 = 0.6 and rho23;1 = 0.4
EXPECTED_CROSS = -0.44642857142857145


def dense(rows, p):
    J = np.zeros((p, p))
    for rec in rows:
        J[rec.j] = rec.entries
    return J


@pytest.mark.parametrize("builder,d", [(build_dvine, 5), (build_cvine, 6), (build_dvine, 2)])
def test_analytic_matches_finite_differences(builder, d):
    m = from_theta_model(builder(d), FamilyTag.GAUSSIAN, ThetaModelSpec("harmonic"))
    U = simulate(m, 8, seed=1)
    for i in range(U.shape[0]):
        Ja = dense(grad_phi_analytic(m, U[i]), m.p)
        Jf = dense(grad_phi_fd(m, U[i]), m.p)
        scale = max(1.0, float(np.max(np.abs(Ja))))
        assert np.max(np.abs(Ja - Jf)) / scale < 1e-6


def test_jacobian_is_block_lower_triangular():
    # a parameter from a later edge in the tree-major order never moves an
    # earlier edge's pseudo-observations, so those entries are exactly zero
    m = from_theta_model(build_dvine(6), FamilyTag.GAUSSIAN, ThetaModelSpec("geometric"))
    U = simulate(m, 5, seed=2)
    for i in range(U.shape[0]):
        Ja = dense(grad_phi_analytic(m, U[i]), m.p)
        assert np.max(np.abs(np.triu(Ja, k=1))) == 0.0


def test_gradient_rejects_non_gaussian_edges():
    m = from_theta_model(build_dvine(3), FamilyTag.GUMBEL_SIGNED, ThetaModelSpec("harmonic"))
    with pytest.raises(ValueError):
        grad_phi_analytic(m, np.full(3, 0.5))


@pytest.mark.parametrize("rho", sorted(EXPECTED_J_DIAG))
def test_J_diagonal_matches_closed_form_single_edge(rho):
    m = VineModel(build_dvine(2), (PairCopula(FamilyTag.GAUSSIAN, (rho,)),))
    ij = empirical_IJ(m, N=60_000, seed=3)
    expected = EXPECTED_J_DIAG[rho]
    assert abs(ij.J_hat[0, 0] - expected) < 0.06 * max(1.0, abs(expected))


def test_J_cross_term_matches_closed_form():
    m = VineModel(
        build_cvine(3),
        (
            PairCopula(FamilyTag.GAUSSIAN, (0.6,)),
            PairCopula(FamilyTag.GAUSSIAN, (0.25,)),
            PairCopula(FamilyTag.GAUSSIAN, (0.4,)),
        ),
    )
    ij = empirical_IJ(m, N=200_000, seed=4)
    assert abs(ij.J_hat[2, 0] - EXPECTED_CROSS) < 0.03


def test_I_single_edge_independence_variance_is_one():
    # at rho = 0 the score is x*y with unit variance
    m = VineModel(build_dvine(2), (PairCopula(FamilyTag.GAUSSIAN, (0.0,)),))
    ij = empirical_IJ(m, N=60_000, seed=5)
    assert abs(ij.I_hat[0, 0] - 1.0) < 0.05


def test_information_equality_at_truth():
    # E[s s^T] = -E[ds/dtheta] edgewise on the diagonal for a correctly
    # specified model
    m = from_theta_model(build_dvine(4), FamilyTag.GAUSSIAN, ThetaModelSpec("geometric"))
    ij = empirical_IJ(m, N=120_000, seed=6)
    assert_allclose(np.diag(ij.I_hat), -np.diag(ij.J_hat), rtol=0.08)


def test_empirical_IJ_fd_agrees_with_analytic():
    m = from_theta_model(build_cvine(4), FamilyTag.GAUSSIAN, ThetaModelSpec("harmonic"))
    a = empirical_IJ(m, N=400, seed=7, method="analytic")
    f = empirical_IJ(m, N=400, seed=7, method="fd")
    assert np.array_equal(a.I_hat, f.I_hat)
    assert np.max(np.abs(a.J_hat - f.J_hat)) < 1e-6


def test_empirical_IJ_determinism_and_shapes():
    m = from_theta_model(build_dvine(3), FamilyTag.GAUSSIAN, ThetaModelSpec("harmonic"))
    a = empirical_IJ(m, N=500, seed=8)
    b = empirical_IJ(m, N=500, seed=8)
    assert isinstance(a, EmpiricalIJ)
    assert np.array_equal(a.I_hat, b.I_hat) and np.array_equal(a.J_hat, b.J_hat)
    assert a.I_hat.shape == (m.p, m.p) == a.J_hat.shape
    assert a.N == 500 and a.method == "analytic"


def test_empirical_IJ_rejects_small_N():
    m = from_theta_model(build_dvine(3), FamilyTag.GAUSSIAN, ThetaModelSpec("zero"))
    with pytest.raises(ValueError):
        empirical_IJ(m, N=50, seed=9)


def test_J_hat_is_block_lower_triangular_in_expectation():
    m = from_theta_model(build_dvine(5), FamilyTag.GAUSSIAN, ThetaModelSpec("harmonic"))
    ij = empirical_IJ(m, N=300, seed=10)
    assert np.max(np.abs(np.triu(ij.J_hat, k=1))) < 1e-12


def test_save_empirical_ij_writes_matrices_and_sidecar(tmp_path):
    m = from_theta_model(build_dvine(3), FamilyTag.GAUSSIAN, ThetaModelSpec("geometric"))
    ij = empirical_IJ(m, N=200, seed=11)
    prefix = tmp_path / "ij"
    save_empirical_ij(ij, prefix)
    I_back = np.loadtxt(tmp_path / "ij_I.csv", delimiter=",")
    J_back = np.loadtxt(tmp_path / "ij_J.csv", delimiter=",")
    assert np.array_equal(I_back, ij.I_hat)
    assert np.array_equal(J_back, ij.J_hat)
    meta = json.loads((tmp_path / "ij.json").read_text())
    assert meta["N"] == 200 and meta["seed"] == 11 and meta["method"] == "analytic"
