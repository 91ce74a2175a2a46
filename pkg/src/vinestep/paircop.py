"""Bivariate pair-copula families.

Log densities, conditional distribution functions (h-functions) and their
inverses, parameter score functions, and the closed-form partial
derivatives of the Gaussian score that feed the analytic vine
differentiation in :mod:`vinestep.diffvine`.

Conventions
-----------
* Every operation is vectorized over numpy arrays and broadcasts its
  arguments.
* Arguments on the unit scale are clamped to ``[UEPS, 1 - UEPS]`` before
  any transform is applied, so tail underflow in upstream h-recursions
  cannot produce infinities.
* h-function sides are named from the copula's two argument slots:
  side ``"1|2"`` is the conditional distribution of the first argument
  given the second, ``"2|1"`` the reverse.
* The Gumbel family carries a single signed parameter ``theta`` with
  ``|theta| <= THETA_MAX``.  ``theta >= 0`` selects a standard Gumbel
  copula with shape ``1 + theta``; ``theta < 0`` selects the 90-degree
  rotation ``c(u, v) = c_std(1 - u, v)`` with shape ``1 - theta``.  The
  two branches meet at the independence copula at ``theta = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln, ndtr, ndtri, stdtr, stdtrit

UEPS = 1e-10
THETA_MAX = 49.0
NU_MIN = 2.0
NU_MAX = 50.0

# Relative step for the central finite differences used as parameter
# scores by the families without a hand-derived score.
FD_REL_STEP = 1e-6

# Bisection iterations for the Gumbel h-inverse; 50 halvings of the unit
# interval land within ~9e-16 of the root.
HINV_BISECT_ITER = 50


class FamilyTag(str, Enum):
    """Identifiers for the supported pair-copula families."""

    INDEPENDENCE = "independence"
    GAUSSIAN = "gaussian"
    GUMBEL_SIGNED = "gumbel"
    STUDENT_T = "student_t"


#: Number of free parameters per family.
ARITY = {
    FamilyTag.INDEPENDENCE: 0,
    FamilyTag.GAUSSIAN: 1,
    FamilyTag.GUMBEL_SIGNED: 1,
    FamilyTag.STUDENT_T: 2,
}

HSIDES = ("1|2", "2|1")


@dataclass(frozen=True)
class PairCopula:
    """A parametrized bivariate copula.

    Parameters
    ----------
    family : FamilyTag
        Which family the parameters belong to.
    params : tuple of float
        Family parameters: ``()`` for independence, ``(rho,)`` for
        Gaussian, ``(theta,)`` for signed Gumbel, ``(rho, nu)`` for
        Student t.
    """

    family: FamilyTag
    params: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        fam = FamilyTag(self.family)
        object.__setattr__(self, "family", fam)
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if len(params) != ARITY[fam]:
            raise ValueError(
                f"{fam.value} takes {ARITY[fam]} parameter(s), got {len(params)}"
            )
        if fam is FamilyTag.GAUSSIAN:
            if not -1.0 < params[0] < 1.0:
                raise ValueError(f"gaussian rho must lie in (-1, 1), got {params[0]}")
        elif fam is FamilyTag.GUMBEL_SIGNED:
            if not abs(params[0]) <= THETA_MAX:
                raise ValueError(
                    f"gumbel theta must satisfy |theta| <= {THETA_MAX}, got {params[0]}"
                )
        elif fam is FamilyTag.STUDENT_T:
            rho, nu = params
            if not -1.0 < rho < 1.0:
                raise ValueError(f"student_t rho must lie in (-1, 1), got {rho}")
            if not NU_MIN < nu <= NU_MAX:
                raise ValueError(
                    f"student_t nu must lie in ({NU_MIN}, {NU_MAX}], got {nu}"
                )

    @property
    def arity(self) -> int:
        return ARITY[self.family]


def clamp_unit(u):
    """Clip unit-scale values into the open interval used by all kernels."""
    return np.clip(np.asarray(u, dtype=float), UEPS, 1.0 - UEPS)


def _check_side(side: str) -> str:
    if side not in HSIDES:
        raise ValueError(f"side must be one of {HSIDES}, got {side!r}")
    return side


# ---------------------------------------------------------------------------
# Gaussian kernels on the normal-score scale.
#
# These are shared with diffvine, which keeps the whole pseudo-data
# recursion on the score scale to avoid round-tripping through ndtr/ndtri.
# ---------------------------------------------------------------------------


def gauss_logpdf_x(rho, x1, x2):
    """Gaussian copula log density evaluated at normal scores."""
    q = 1.0 - rho * rho
    return -0.5 * np.log(q) - (
        rho * rho * (x1 * x1 + x2 * x2) - 2.0 * rho * x1 * x2
    ) / (2.0 * q)


def gauss_score_x(rho, x1, x2):
    """d/drho of the Gaussian copula log density at normal scores."""
    q = 1.0 - rho * rho
    return rho / q - rho * (x1 * x1 + x2 * x2) / (q * q) + (1.0 + rho * rho) * x1 * x2 / (q * q)


def gauss_hfunc_x(rho, x1, x2):
    """Conditional normal score: the h-function before mapping back to (0,1).

    ``ndtr`` of the returned value is the conditional distribution of the
    first argument given the second.
    """
    return (x1 - rho * x2) / np.sqrt(1.0 - rho * rho)


def gauss_dh_drho_x(rho, x1, x2):
    """d/drho of :func:`gauss_hfunc_x`."""
    q = 1.0 - rho * rho
    return (rho * x1 - x2) / (q * np.sqrt(q))


def gauss_dh_dx1_x(rho):
    """d/dx1 of :func:`gauss_hfunc_x` (constant in the scores)."""
    return 1.0 / np.sqrt(1.0 - rho * rho)


@dataclass(frozen=True)
class GaussScorePartials:
    """Partial derivatives of the Gaussian score and conditional score.

    All fields are arrays broadcast to the shape of the inputs.  ``ds_*``
    differentiate the score ``d logc / drho``; ``dh_*`` differentiate the
    conditional normal score ``(x1 - rho x2) / sqrt(1 - rho^2)``.
    """

    ds_drho: np.ndarray
    ds_dx1: np.ndarray
    ds_dx2: np.ndarray
    dh_drho: np.ndarray
    dh_dx1: np.ndarray


def score_partials_gaussian(rho, x1, x2) -> GaussScorePartials:
    """Closed-form partials of the Gaussian score at normal scores."""
    rho = float(rho)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    q = 1.0 - rho * rho
    q2 = q * q
    q3 = q2 * q
    ss = x1 * x1 + x2 * x2
    cross = x1 * x2
    ds_drho = (
        (1.0 + rho * rho) / q2
        - (1.0 + 3.0 * rho * rho) * ss / q3
        + 2.0 * (3.0 * rho + rho**3) * cross / q3
    )
    ds_dx1 = ((1.0 + rho * rho) * x2 - 2.0 * rho * x1) / q2
    ds_dx2 = ((1.0 + rho * rho) * x1 - 2.0 * rho * x2) / q2
    dh_drho = (rho * x1 - x2) / (q * np.sqrt(q))
    dh_dx1 = np.broadcast_to(1.0 / np.sqrt(q), ds_drho.shape).copy()
    return GaussScorePartials(ds_drho, ds_dx1, ds_dx2, dh_drho, dh_dx1)


# ---------------------------------------------------------------------------
# Gumbel kernels (standard orientation, shape m >= 1).
# ---------------------------------------------------------------------------


def _gumbel_parts(m, u, v):
    """Shared intermediates for the standard Gumbel with shape ``m``.

    Returns ``(lu, lv, log_lu, log_lv, logS)`` where ``lu = -log u`` and
    ``S = lu^m + lv^m`` is accumulated in log space.
    """
    lu = -np.log(u)
    lv = -np.log(v)
    llu = np.log(lu)
    llv = np.log(lv)
    logS = np.logaddexp(m * llu, m * llv)
    return lu, lv, llu, llv, logS


def _gumbel_std_logpdf(m, u, v):
    lu, lv, llu, llv, logS = _gumbel_parts(m, u, v)
    Spow = np.exp(logS / m)  # S^(1/m)
    return (
        -Spow
        + lu
        + lv
        + (m - 1.0) * (llu + llv)
        + (2.0 / m - 2.0) * logS
        + np.log1p((m - 1.0) * np.exp(-logS / m))
    )


def _gumbel_std_logh(m, u, v):
    """Log of the conditional distribution of ``u`` given ``v``."""
    _, lv, _, llv, logS = _gumbel_parts(m, u, v)
    Spow = np.exp(logS / m)
    return -Spow + (1.0 / m - 1.0) * logS + (m - 1.0) * llv + lv


def _gumbel_std_hinv(m, w, v):
    """Invert ``u -> h(u | v)`` for the standard Gumbel by bisection.

    The conditional distribution is strictly increasing in ``u`` for any
    shape ``m >= 1``, so plain bisection on ``[UEPS, 1 - UEPS]`` is exact
    to within one halving of the bracket.
    """
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    shape = np.broadcast_shapes(w.shape, v.shape)
    logw = np.log(np.broadcast_to(w, shape))
    v = np.broadcast_to(v, shape)
    lo = np.full(shape, UEPS)
    hi = np.full(shape, 1.0 - UEPS)
    for _ in range(HINV_BISECT_ITER):
        mid = 0.5 * (lo + hi)
        too_high = _gumbel_std_logh(m, mid, v) > logw
        hi = np.where(too_high, mid, hi)
        lo = np.where(too_high, lo, mid)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Student t kernels.
# ---------------------------------------------------------------------------


def _t_logpdf(rho, nu, u, v):
    x = stdtrit(nu, u)
    y = stdtrit(nu, v)
    q = 1.0 - rho * rho
    quad = (x * x - 2.0 * rho * x * y + y * y) / (nu * q)
    return (
        gammaln((nu + 2.0) / 2.0)
        + gammaln(nu / 2.0)
        - 2.0 * gammaln((nu + 1.0) / 2.0)
        - 0.5 * np.log(q)
        - (nu + 2.0) / 2.0 * np.log1p(quad)
        + (nu + 1.0) / 2.0 * (np.log1p(x * x / nu) + np.log1p(y * y / nu))
    )


def _t_hfunc(rho, nu, u, v):
    """Conditional distribution of ``u`` given ``v`` for the t copula."""
    x = stdtrit(nu, u)
    y = stdtrit(nu, v)
    scale = np.sqrt((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0))
    return stdtr(nu + 1.0, (x - rho * y) / scale)


def _t_hinv(rho, nu, w, v):
    y = stdtrit(nu, v)
    scale = np.sqrt((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0))
    x = stdtrit(nu + 1.0, w) * scale + rho * y
    return stdtr(nu, x)


# ---------------------------------------------------------------------------
# Family dispatch on raw parameters.
#
# The public API validates parameters via PairCopula; these raw entry
# points additionally serve the finite-difference scores, which must be
# free to step slightly outside the fitting domain.
# ---------------------------------------------------------------------------


def _log_density_raw(family: FamilyTag, params, u, v):
    if family is FamilyTag.INDEPENDENCE:
        return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(v)))
    if family is FamilyTag.GAUSSIAN:
        return gauss_logpdf_x(params[0], ndtri(u), ndtri(v))
    if family is FamilyTag.GUMBEL_SIGNED:
        theta = params[0]
        if theta >= 0.0:
            return _gumbel_std_logpdf(1.0 + theta, u, v)
        return _gumbel_std_logpdf(1.0 - theta, 1.0 - u, v)
    if family is FamilyTag.STUDENT_T:
        return _t_logpdf(params[0], params[1], u, v)
    raise ValueError(f"unknown family {family!r}")


def _hfunc_raw(family: FamilyTag, params, u, v, side):
    if family is FamilyTag.INDEPENDENCE:
        out = u if side == "1|2" else v
        return np.broadcast_to(
            np.asarray(out, dtype=float), np.broadcast_shapes(np.shape(u), np.shape(v))
        ).copy()
    if family is FamilyTag.GAUSSIAN:
        rho = params[0]
        x1, x2 = ndtri(u), ndtri(v)
        if side == "1|2":
            return ndtr(gauss_hfunc_x(rho, x1, x2))
        return ndtr(gauss_hfunc_x(rho, x2, x1))
    if family is FamilyTag.GUMBEL_SIGNED:
        theta = params[0]
        if theta >= 0.0:
            m = 1.0 + theta
            if side == "1|2":
                return np.exp(_gumbel_std_logh(m, u, v))
            return np.exp(_gumbel_std_logh(m, v, u))
        m = 1.0 - theta
        if side == "1|2":
            return 1.0 - np.exp(_gumbel_std_logh(m, 1.0 - u, v))
        return np.exp(_gumbel_std_logh(m, v, 1.0 - u))
    if family is FamilyTag.STUDENT_T:
        rho, nu = params
        if side == "1|2":
            return _t_hfunc(rho, nu, u, v)
        return _t_hfunc(rho, nu, v, u)
    raise ValueError(f"unknown family {family!r}")


def _hinv_raw(family: FamilyTag, params, w, v, side):
    if family is FamilyTag.INDEPENDENCE:
        return np.broadcast_to(
            np.asarray(w, dtype=float), np.broadcast_shapes(np.shape(w), np.shape(v))
        ).copy()
    if family is FamilyTag.GAUSSIAN:
        rho = params[0]
        xw, xv = ndtri(w), ndtri(v)
        # invert (x1 - rho x2)/sqrt(1-rho^2) = xw for x1
        return ndtr(xw * np.sqrt(1.0 - rho * rho) + rho * xv)
    if family is FamilyTag.GUMBEL_SIGNED:
        theta = params[0]
        if theta >= 0.0:
            return _gumbel_std_hinv(1.0 + theta, w, v)
        m = 1.0 - theta
        if side == "1|2":
            return 1.0 - _gumbel_std_hinv(m, 1.0 - np.asarray(w, dtype=float), v)
        return _gumbel_std_hinv(m, w, 1.0 - np.asarray(v, dtype=float))
    if family is FamilyTag.STUDENT_T:
        rho, nu = params
        return _t_hinv(rho, nu, w, v)
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# Public API.
# ---------------------------------------------------------------------------


def log_density(cop: PairCopula, u, v):
    """Log copula density ``log c(u, v)``, broadcast over the inputs."""
    return _log_density_raw(cop.family, cop.params, clamp_unit(u), clamp_unit(v))


def hfunc(cop: PairCopula, u, v, side: str):
    """Conditional distribution function.

    ``side="1|2"`` returns ``P(U1 <= u | U2 = v)``; ``side="2|1"``
    returns ``P(U2 <= v | U1 = u)``.
    """
    _check_side(side)
    out = _hfunc_raw(cop.family, cop.params, clamp_unit(u), clamp_unit(v), side)
    return np.clip(out, UEPS, 1.0 - UEPS)

def hinv(cop: PairCopula, w, v, side: str):
    """Inverse of :func:`hfunc` in its non-conditioning argument.

    ``v`` always holds the conditioning value: for ``side="1|2"`` the
    result ``u`` satisfies ``hfunc(cop, u, v, "1|2") == w``; for
    ``side="2|1"`` the result ``y`` satisfies
    ``hfunc(cop, v, y, "2|1") == w`` (the conditioning value sits in the
    first argument slot).
    """
    _check_side(side)
    # Exchangeable sides for the symmetric families: "2|1" with the
    # conditioning value v in the first slot has the same functional form
    # as "1|2".  The rotated Gumbel branch is the only asymmetric case.
    out = _hinv_raw(cop.family, cop.params, clamp_unit(w), clamp_unit(v), side)
    return np.clip(out, UEPS, 1.0 - UEPS)


def score(cop: PairCopula, u, v):
    """Gradient of the log density in the family parameters.

    Returns an array of shape ``(arity,) + broadcast(u, v).shape``; the
    independence family returns an empty leading axis.  The Gaussian
    score is in closed form, the remaining families use central finite
    differences in the parameters with relative step :data:`FD_REL_STEP`.
    At the signed-Gumbel independence point ``theta = 0`` the central
    difference straddles the rotation seam, which is exactly the
    two-sided directional mean and stays finite there.
    """
    u = clamp_unit(u)
    v = clamp_unit(v)
    shape = np.broadcast_shapes(u.shape, v.shape)
    if cop.family is FamilyTag.INDEPENDENCE:
        return np.zeros((0,) + shape)
    if cop.family is FamilyTag.GAUSSIAN:
        s = gauss_score_x(cop.params[0], ndtri(u), ndtri(v))
        return np.broadcast_to(s, shape)[np.newaxis, ...].copy()
    params = np.asarray(cop.params, dtype=float)
    rows = np.empty((params.size,) + shape)
    for k in range(params.size):
        step = FD_REL_STEP * max(1.0, abs(params[k]))
        up = params.copy()
        dn = params.copy()
        up[k] += step
        dn[k] -= step
        rows[k] = (
            _log_density_raw(cop.family, tuple(up), u, v)
            - _log_density_raw(cop.family, tuple(dn), u, v)
        ) / (2.0 * step)
    return rows
