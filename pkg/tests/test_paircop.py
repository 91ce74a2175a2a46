import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from vinestep.paircop import (
    FamilyTag,
    NU_MAX,
    PairCopula,
    THETA_MAX,
    UEPS,
    clamp_unit,
    hfunc,
    hinv,
    log_density,
    score,
    score_partials_gaussian,
)

# Frozen constants, each computed beforehand from the closed forms with an
# independent script (scipy.special only, no package imports).
LOGC_GAUSS_HALF = 0.14384103622589045  # rho=0.5 at u=v=0.5
HFUNC_GAUSS = 0.9928562961511725  # rho=0.6, u=0.975, v=0.5
GUMBEL_H = 0.06568962325206258  # theta=1.5, h(0.3 | 0.7)
GRID_INTEGRALS = [
    (PairCopula(FamilyTag.GUMBEL_SIGNED, (0.7,)), 1.0003030536065394),
    (PairCopula(FamilyTag.GUMBEL_SIGNED, (2.3,)), 1.0014508745949624),
    (PairCopula(FamilyTag.GUMBEL_SIGNED, (-0.5,)), 1.0002149295327873),
    (PairCopula(FamilyTag.STUDENT_T, (0.5, 4.0)), 1.0002194402339335),
]

units = st.floats(min_value=0.01, max_value=0.99)
rhos = st.floats(min_value=-0.95, max_value=0.95)
gumbel_thetas = st.floats(min_value=-5.0, max_value=5.0)
nus = st.floats(min_value=2.2, max_value=50.0)


def copula_strategy():
    return st.one_of(
        st.just(PairCopula(FamilyTag.INDEPENDENCE)),
        rhos.map(lambda r: PairCopula(FamilyTag.GAUSSIAN, (r,))),
        gumbel_thetas.map(lambda t: PairCopula(FamilyTag.GUMBEL_SIGNED, (t,))),
        st.tuples(rhos, nus).map(lambda p: PairCopula(FamilyTag.STUDENT_T, p)),
    )


def test_family_arity():
    assert PairCopula(FamilyTag.INDEPENDENCE).arity == 0
    assert PairCopula(FamilyTag.GAUSSIAN, (0.3,)).arity == 1
    assert PairCopula(FamilyTag.GUMBEL_SIGNED, (-2.0,)).arity == 1
    assert PairCopula(FamilyTag.STUDENT_T, (0.3, 4.0)).arity == 2


@pytest.mark.parametrize(
    "family,params",
    [
        (FamilyTag.GAUSSIAN, (1.0,)),
        (FamilyTag.GAUSSIAN, (-1.5,)),
        (FamilyTag.GAUSSIAN, ()),
        (FamilyTag.GUMBEL_SIGNED, (49.5,)),
        (FamilyTag.GUMBEL_SIGNED, (-50.0,)),
        (FamilyTag.STUDENT_T, (0.2, 2.0)),
        (FamilyTag.STUDENT_T, (0.2, 51.0)),
        (FamilyTag.STUDENT_T, (0.2,)),
        (FamilyTag.INDEPENDENCE, (0.1,)),
    ],
)
def test_invalid_parameters_rejected(family, params):
    with pytest.raises(ValueError):
        PairCopula(family, params)


def test_clamp_unit_bounds():
    u = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    c = clamp_unit(u)
    assert c.min() == UEPS
    assert c.max() == 1.0 - UEPS
    assert c[2] == 0.5


def test_gaussian_log_density_value():
    cop = PairCopula(FamilyTag.GAUSSIAN, (0.5,))
    assert_allclose(log_density(cop, 0.5, 0.5), LOGC_GAUSS_HALF, rtol=1e-12)


def test_gaussian_hfunc_value():
    cop = PairCopula(FamilyTag.GAUSSIAN, (0.6,))
    assert_allclose(hfunc(cop, 0.975, 0.5, "1|2"), HFUNC_GAUSS, rtol=1e-12)


def test_gumbel_hfunc_value():
    cop = PairCopula(FamilyTag.GUMBEL_SIGNED, (1.5,))
    assert_allclose(hfunc(cop, 0.3, 0.7, "1|2"), GUMBEL_H, rtol=1e-10)


@pytest.mark.parametrize("cop,expected", GRID_INTEGRALS)
def test_density_normalizes_on_grid(cop, expected):
    # 400x400 midpoint rule; the frozen value doubles as a pointwise check
    # against an independently coded density.
    g = (np.arange(400) + 0.5) / 400
    U, V = np.meshgrid(g, g)
    integral = float(np.exp(log_density(cop, U, V)).mean())
    assert_allclose(integral, expected, rtol=1e-8)
    assert abs(integral - 1.0) < 2e-3


def test_independence_density_and_h():
    cop = PairCopula(FamilyTag.INDEPENDENCE)
    u = np.linspace(0.05, 0.95, 7)
    assert_allclose(log_density(cop, u, u[::-1]), 0.0, atol=0)
    assert_allclose(hfunc(cop, u, 0.3, "1|2"), u, atol=1e-12)
    assert_allclose(hinv(cop, u, 0.3, "2|1"), u, atol=1e-12)


def test_gumbel_rotation_identities():
    pos = PairCopula(FamilyTag.GUMBEL_SIGNED, (1.3,))
    neg = PairCopula(FamilyTag.GUMBEL_SIGNED, (-1.3,))
    u = np.linspace(0.08, 0.92, 5)
    v = np.linspace(0.15, 0.85, 5)
    assert_allclose(log_density(neg, u, v), log_density(pos, 1.0 - u, v), rtol=1e-12)
    assert_allclose(
        hfunc(neg, u, v, "1|2"), 1.0 - hfunc(pos, 1.0 - u, v, "1|2"), atol=1e-12
    )
    assert_allclose(
        hfunc(neg, u, v, "2|1"), hfunc(pos, 1.0 - u, v, "2|1"), atol=1e-12
    )


def test_seam_continuity_at_zero():
    u = np.linspace(0.1, 0.9, 9)
    v = u[::-1]
    for theta in (1e-8, -1e-8):
        cop = PairCopula(FamilyTag.GUMBEL_SIGNED, (theta,))
        assert np.max(np.abs(log_density(cop, u, v))) < 1e-5
        assert np.max(np.abs(hfunc(cop, u, v, "1|2") - u)) < 1e-6


def test_student_t_large_nu_near_gaussian():
    t = PairCopula(FamilyTag.STUDENT_T, (0.4, 50.0))
    g = PairCopula(FamilyTag.GAUSSIAN, (0.4,))
    u = np.linspace(0.1, 0.9, 9)
    v = np.linspace(0.15, 0.85, 9)
    assert np.max(np.abs(log_density(t, u, v) - log_density(g, u, v))) < 5e-2
    assert np.max(np.abs(hfunc(t, u, v, "1|2") - hfunc(g, u, v, "1|2"))) < 5e-3


@given(copula_strategy(), units, units, st.sampled_from(["1|2", "2|1"]))
@settings(max_examples=150, deadline=None)
def test_h_round_trip(cop, w, cond, side):
    u = hinv(cop, w, cond, side)
    assert 0.0 < u < 1.0
    if side == "1|2":
        back = hfunc(cop, u, cond, side)
    else:
        back = hfunc(cop, cond, u, side)
    assert abs(back - w) < 5e-6


@given(copula_strategy(), units, units)
@settings(max_examples=150, deadline=None)
def test_hfunc_is_a_cdf_in_the_free_argument(cop, cond, _w):
    u = np.linspace(0.02, 0.98, 25)
    h = hfunc(cop, u, np.full_like(u, cond), "1|2")
    assert np.all(np.diff(h) >= -1e-12)
    assert np.all((h >= 0.0) & (h <= 1.0))


@given(copula_strategy(), units, units)
@settings(max_examples=100, deadline=None)
def test_log_density_and_score_finite(cop, u, v):
    ld = log_density(cop, u, v)
    assert np.isfinite(ld)
    s = score(cop, u, v)
    assert s.shape == (cop.arity,)
    assert np.all(np.isfinite(s))


@pytest.mark.parametrize(
    "cop",
    [
        PairCopula(FamilyTag.GAUSSIAN, (0.5,)),
        PairCopula(FamilyTag.GAUSSIAN, (-0.8,)),
        PairCopula(FamilyTag.GUMBEL_SIGNED, (2.1,)),
        PairCopula(FamilyTag.GUMBEL_SIGNED, (-1.4,)),
        PairCopula(FamilyTag.STUDENT_T, (0.3, 6.0)),
    ],
)
def test_score_matches_log_density_slope(cop):
    rng = np.random.default_rng(0)
    u = rng.uniform(0.05, 0.95, size=20)
    v = rng.uniform(0.05, 0.95, size=20)
    s = score(cop, u, v)
    for k in range(cop.arity):
        h = 1e-6 * max(1.0, abs(cop.params[k]))
        up = list(cop.params)
        dn = list(cop.params)
        up[k] += h
        dn[k] -= h
        fd = (
            log_density(PairCopula(cop.family, tuple(up)), u, v)
            - log_density(PairCopula(cop.family, tuple(dn)), u, v)
        ) / (2.0 * h)
        assert_allclose(s[k], fd, rtol=5e-4, atol=5e-7)


def test_gaussian_score_partials_match_fd():
    rng = np.random.default_rng(7)
    rho = 0.45
    x1 = rng.standard_normal(50)
    x2 = rng.standard_normal(50)
    parts = score_partials_gaussian(rho, x1, x2)
    h = 1e-6

    from vinestep.paircop import gauss_hfunc_x, gauss_score_x

    fd_ds_drho = (gauss_score_x(rho + h, x1, x2) - gauss_score_x(rho - h, x1, x2)) / (2 * h)
    fd_ds_dx1 = (gauss_score_x(rho, x1 + h, x2) - gauss_score_x(rho, x1 - h, x2)) / (2 * h)
    fd_ds_dx2 = (gauss_score_x(rho, x1, x2 + h) - gauss_score_x(rho, x1, x2 - h)) / (2 * h)
    fd_dh_drho = (gauss_hfunc_x(rho + h, x1, x2) - gauss_hfunc_x(rho - h, x1, x2)) / (2 * h)
    fd_dh_dx1 = (gauss_hfunc_x(rho, x1 + h, x2) - gauss_hfunc_x(rho, x1 - h, x2)) / (2 * h)
    assert_allclose(parts.ds_drho, fd_ds_drho, rtol=1e-5, atol=1e-6)
    assert_allclose(parts.ds_dx1, fd_ds_dx1, rtol=1e-5, atol=1e-6)
    assert_allclose(parts.ds_dx2, fd_ds_dx2, rtol=1e-5, atol=1e-6)
    assert_allclose(parts.dh_drho, fd_dh_drho, rtol=1e-5, atol=1e-6)
    assert_allclose(parts.dh_dx1, fd_dh_dx1, rtol=1e-5, atol=1e-6)


def test_hfunc_output_respects_clip():
    cop = PairCopula(FamilyTag.GAUSSIAN, (0.999999,))
    h = hfunc(cop, 1e-12, 1.0 - 1e-12, "1|2")
    assert UEPS <= h <= 1.0 - UEPS


def test_hinv_conditioning_convention():
    cop = PairCopula(FamilyTag.GUMBEL_SIGNED, (-2.0,))
    w, cond = 0.37, 0.81
    u = hinv(cop, w, cond, "1|2")
    assert_allclose(hfunc(cop, u, cond, "1|2"), w, atol=5e-9)
    y = hinv(cop, w, cond, "2|1")
    assert_allclose(hfunc(cop, cond, y, "2|1"), w, atol=5e-9)


def test_domain_edges_are_usable():
    # the widest parameters the fitting domain allows must still evaluate
    for cop in (
        PairCopula(FamilyTag.GUMBEL_SIGNED, (THETA_MAX,)),
        PairCopula(FamilyTag.GUMBEL_SIGNED, (-THETA_MAX,)),
        PairCopula(FamilyTag.STUDENT_T, (0.9, NU_MAX)),
    ):
        assert np.isfinite(log_density(cop, 0.4, 0.6))
        assert np.isfinite(hfunc(cop, 0.4, 0.6, "2|1"))
