"""Stepwise maximum-likelihood estimation.

Each edge of a vine is fitted separately by maximizing its bivariate
copula likelihood on the conditional pseudo-observations produced by the
already-fitted lower trees.  One-parameter families use bracketed scalar
minimization on the family domain; the Student t family is optimized
over (rho, ln(nu - 2)) by direct search with a coordinate polish so the
per-edge first-order condition holds to ~1e-9.

Margins enter either as known uniforms or as rank pseudo-observations
(:func:`pseudo_obs`); the fit itself is agnostic and simply records the
mode it was given.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import fminbound
from scipy.special import gammaln, stdtrit
from scipy.stats import rankdata

from vinestep.paircop import (
    FamilyTag,
    NU_MAX,
    NU_MIN,
    PairCopula,
    THETA_MAX,
    clamp_unit,
    hfunc,
    log_density,
    ndtri,
    score,
)
from vinestep.vinestruct import RVineStructure

__all__ = [
    "PseudoObs",
    "EdgeDiagnostics",
    "FitResult",
    "pseudo_obs",
    "fit_edge",
    "stepwise_fit",
    "fit_result_to_dict",
    "save_fit_result",
]

DOMAIN_SHRINK = 1e-6
XATOL = 1e-9
BOUNDARY_TOL = 1e-6
GRAD_TOL = 1e-6
MIN_PAIRS = 10


@dataclass(frozen=True)
class PseudoObs:
    """Rank pseudo-observations with divisor n + 1."""

    U_hat: np.ndarray


def pseudo_obs(X) -> PseudoObs:
    """Column-wise ranks of ``X`` divided by n + 1, average ranks on ties."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise ValueError("pseudo-observations need at least 2 rows")
    U = rankdata(X, axis=0, method="average") / (n + 1.0)
    return PseudoObs(U_hat=U)


@dataclass(frozen=True)
class EdgeDiagnostics:
    """Optimizer outcome for one edge."""

    iterations: int
    converged: bool
    boundary: bool
    grad: tuple[float, ...]


@dataclass(frozen=True)
class FitResult:
    """Stepwise fit output: flattened estimate plus per-edge diagnostics."""

    theta_hat: np.ndarray
    diagnostics: tuple[EdgeDiagnostics, ...]
    margins_mode: str
    model: "object"  # fitted VineModel; typed loosely to avoid an import cycle

    @property
    def n_nonconverged(self) -> int:
        return sum(1 for dg in self.diagnostics if not dg.converged)


def _mean_score(cop: PairCopula, u, v) -> tuple[float, ...]:
    sc = score(cop, u, v)
    return tuple(float(np.mean(sc[k])) for k in range(sc.shape[0]))


def _boundary_distance(cop: PairCopula) -> float:
    fam = cop.family
    if fam is FamilyTag.GAUSSIAN:
        return 1.0 - abs(cop.params[0])
    if fam is FamilyTag.GUMBEL_SIGNED:
        return THETA_MAX - abs(cop.params[0])
    if fam is FamilyTag.STUDENT_T:
        rho, nu = cop.params
        return min(1.0 - abs(rho), nu - NU_MIN, NU_MAX - nu)
    return np.inf


def _fit_gaussian(u, v):
    """Bounded scalar fit using the closed-form sufficient statistics.

    The negative log likelihood depends on the data only through
    sum(x^2 + y^2) and sum(xy) of the normal scores, so each objective
    evaluation is O(1).
    """
    x = ndtri(u)
    y = ndtri(v)
    n = x.size
    sxx = float(np.sum(x * x) + np.sum(y * y))
    sxy = float(np.sum(x * y))

    def negll(rho: float) -> float:
        q = 1.0 - rho * rho
        return 0.5 * n * np.log(q) + (rho * rho * sxx - 2.0 * rho * sxy) / (2.0 * q)

    lo, hi = -1.0 + DOMAIN_SHRINK, 1.0 - DOMAIN_SHRINK
    rho_hat, _, _, nfev = fminbound(negll, lo, hi, xtol=XATOL, full_output=True)
    return PairCopula(FamilyTag.GAUSSIAN, (float(rho_hat),)), int(nfev)


def _fit_gumbel(u, v):
    """Fit the signed parameter with one bounded search per rotation branch.

    Both searches are anchored at the independence point theta = 0 where
    the branches meet, so the kink cannot trap the optimizer.
    """
    lu, lv = -np.log(u), -np.log(v)
    lru = -np.log1p(-u)  # rotated branch uses 1 - u in the first slot
    llu, llv, llru = np.log(lu), np.log(lv), np.log(lru)
    n = u.size

    def negll_std(m, la, lb, lab_sum, ab_sum):
        logS = np.logaddexp(m * la, m * lb)
        spow = np.exp(logS / m)
        ll = (
            -spow
            + (m - 1.0) * lab_sum
            + (2.0 / m - 2.0) * logS
            + np.log1p((m - 1.0) / spow)
        )
        return -(float(np.sum(ll)) + ab_sum) / n

    std_lsum = llu + llv
    std_absum = float(np.sum(lu + lv))
    rot_lsum = llru + llv
    rot_absum = float(np.sum(lru + lv))

    def negll(theta: float) -> float:
        if theta >= 0.0:
            return negll_std(1.0 + theta, llu, llv, std_lsum, std_absum)
        return negll_std(1.0 - theta, llru, llv, rot_lsum, rot_absum)

    hi = THETA_MAX - DOMAIN_SHRINK
    t_pos, f_pos, _, ev_pos = fminbound(negll, 0.0, hi, xtol=XATOL, full_output=True)
    t_neg, f_neg, _, ev_neg = fminbound(negll, -hi, 0.0, xtol=XATOL, full_output=True)
    theta_hat = float(t_pos if f_pos <= f_neg else t_neg)
    return PairCopula(FamilyTag.GUMBEL_SIGNED, (theta_hat,)), int(ev_pos + ev_neg)


def _fit_student_t(u, v):
    """Profile likelihood: outer search over ln(nu - 2), inner over rho.

    For fixed nu the t quantiles of the data are constants, so the inner
    rho search costs only elementwise arithmetic; the expensive inverse
    CDF runs once per outer evaluation.
    """
    w_lo, w_hi = np.log(1e-6), np.log(NU_MAX - NU_MIN)
    r_lo, r_hi = -1.0 + DOMAIN_SHRINK, 1.0 - DOMAIN_SHRINK
    n = u.size
    nfev = 0
    best = {"f": np.inf, "rho": 0.0, "w": np.log(2.0)}

    def profile(w: float) -> float:
        nonlocal nfev
        w = float(np.clip(w, w_lo, w_hi))
        nu = NU_MIN + float(np.exp(w))
        x = stdtrit(nu, u)
        y = stdtrit(nu, v)
        xx_yy = x * x + y * y
        xy = x * y
        marg = (nu + 1.0) / 2.0 * float(np.sum(np.log1p(x * x / nu) + np.log1p(y * y / nu)))
        cgam = float(
            gammaln((nu + 2.0) / 2.0)
            + gammaln(nu / 2.0)
            - 2.0 * gammaln((nu + 1.0) / 2.0)
        )

        def negll_rho(rho: float) -> float:
            nonlocal nfev
            nfev += 1
            q = 1.0 - rho * rho
            quad = (xx_yy - 2.0 * rho * xy) / (nu * q)
            ll = n * (cgam - 0.5 * np.log(q)) + marg
            ll -= (nu + 2.0) / 2.0 * float(np.sum(np.log1p(quad)))
            return -ll / n

        rho, fval, _, _ = fminbound(negll_rho, r_lo, r_hi, xtol=XATOL, full_output=True)
        fval = float(fval)
        if fval < best["f"]:
            best.update(f=fval, rho=float(rho), w=w)
        return fval

    fminbound(profile, w_lo, w_hi, xtol=XATOL, full_output=True)
    nu = min(NU_MIN + float(np.exp(best["w"])), NU_MAX)
    return PairCopula(FamilyTag.STUDENT_T, (best["rho"], nu)), int(nfev)


def fit_edge(family: FamilyTag | str, u, v) -> tuple[PairCopula, EdgeDiagnostics]:
    """Maximum-likelihood fit of one pair copula.

    Returns the fitted copula and diagnostics; an edge counts as
    converged only if the optimizer finished, the estimate is not within
    ``BOUNDARY_TOL`` of the domain edge, and the mean score is below
    ``GRAD_TOL`` per parameter.
    """
    family = FamilyTag(family)
    u = clamp_unit(np.asarray(u, dtype=float).ravel())
    v = clamp_unit(np.asarray(v, dtype=float).ravel())
    if u.size != v.size:
        raise ValueError("u and v must have equal length")
    if u.size < MIN_PAIRS:
        raise ValueError(f"need at least {MIN_PAIRS} pairs, got {u.size}")
    if family is FamilyTag.INDEPENDENCE:
        cop = PairCopula(family)
        return cop, EdgeDiagnostics(0, True, False, ())
    if family is FamilyTag.GAUSSIAN:
        cop, iters = _fit_gaussian(u, v)
    elif family is FamilyTag.GUMBEL_SIGNED:
        cop, iters = _fit_gumbel(u, v)
    else:
        cop, iters = _fit_student_t(u, v)
    grad = _mean_score(cop, u, v)
    boundary = _boundary_distance(cop) <= BOUNDARY_TOL
    converged = (not boundary) and all(abs(g) <= GRAD_TOL for g in grad)
    return cop, EdgeDiagnostics(iters, converged, boundary, grad)


def stepwise_fit(
    families,
    structure: RVineStructure,
    U,
    margins_mode: str = "known",
) -> FitResult:
    """Tree-by-tree fit of every parametrized edge.

    ``families`` is one :class:`FamilyTag` for all edges or a sequence
    with one entry per parametrized edge in canonical order.  ``U`` must
    already be on the copula scale (uniform margins or rank
    pseudo-observations); ``margins_mode`` is recorded verbatim.

    Pseudo-data for tree t is computed from the tree t-1 fits, so the
    estimator is exactly tree-separable: refitting with a larger
    truncation extends the parameter vector without changing the prefix.
    """
    from vinestep.vinemodel import VineModel  # deferred: vinemodel imports paircop only

    if margins_mode not in ("known", "empirical"):
        raise ValueError(f"margins_mode must be known or empirical, got {margins_mode!r}")
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape[1] != structure.d:
        raise ValueError(f"U must have {structure.d} columns, got {U.shape[1]}")
    pedges = structure.param_edges()
    if isinstance(families, (FamilyTag, str)):
        fam_list = [FamilyTag(families)] * len(pedges)
    else:
        fam_list = [FamilyTag(f) for f in families]
        if len(fam_list) != len(pedges):
            raise ValueError(
                f"need one family per parametrized edge ({len(pedges)}), "
                f"got {len(fam_list)}"
            )

    all_edges = structure.edges
    cops: dict[int, PairCopula] = {
        e.eid: PairCopula(FamilyTag.INDEPENDENCE)
        for e in all_edges
        if e.tree > structure.trunc
    }
    diags: list[EdgeDiagnostics] = []
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    current_tree = 1
    for fam, e in zip(fam_list, pedges):
        if e.tree > current_tree:
            stale = [eid for eid in cache if all_edges[eid].tree < e.tree - 1]
            for eid in stale:
                del cache[eid]
            current_tree = e.tree
        if e.tree == 1:
            ua = clamp_unit(U[:, e.a - 1])
            ub = clamp_unit(U[:, e.b - 1])
        else:
            paa, pab = cache[e.parent_a]
            pba, pbb = cache[e.parent_b]
            ua = hfunc(cops[e.parent_a], paa, pab, e.side_a)
            ub = hfunc(cops[e.parent_b], pba, pbb, e.side_b)
        cop, dg = fit_edge(fam, ua, ub)
        cops[e.eid] = cop
        diags.append(dg)
        cache[e.eid] = (ua, ub)
    model = VineModel(structure, tuple(cops[e.eid] for e in all_edges))
    return FitResult(
        theta_hat=model.theta,
        diagnostics=tuple(diags),
        margins_mode=margins_mode,
        model=model,
    )


def fit_result_to_dict(fr: FitResult) -> dict:
    from vinestep.vinemodel import model_to_dict

    edges = fr.model.structure.param_edges()
    return {
        "margins_mode": fr.margins_mode,
        "theta_hat": [float(t) for t in fr.theta_hat],
        "n_nonconverged": fr.n_nonconverged,
        "edges": [
            {
                "label": e.label(),
                "tree": e.tree,
                "family": fr.model.copulas[e.eid].family.value,
                "params": list(fr.model.copulas[e.eid].params),
                "iterations": dg.iterations,
                "converged": dg.converged,
                "boundary": dg.boundary,
                "grad": list(dg.grad),
            }
            for e, dg in zip(edges, fr.diagnostics)
        ],
        "model": model_to_dict(fr.model),
    }


def save_fit_result(fr: FitResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(fit_result_to_dict(fr), fh, indent=1)
