"""Monte-Carlo diagnostics for the stepwise estimator's asymptotic regime.

Three estimated quantities decide whether a model family sits inside the
regime where the stepwise estimator's high-dimensional guarantees bind:

* a curvature statistic: the steepest directional slope of the mean
  estimating function over random sign perturbations of theta, whose
  negativity is the identifiability/curvature requirement;
* the mean squared weighted Jacobian row sum (an M^2-type growth bound);
* a high quantile of the same unsquared row sums (a D-type tail bound).

All three share the perturbation mechanism: K sign vectors with entries
+-eps * alpha(tree), where alpha weights trees, and a single batch of
rows simulated from the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from vinestep.diffvine import _forward, _jacobian_entries
from vinestep.vinemodel import VineModel, phi, simulate

__all__ = [
    "AlphaSeq",
    "sample_deltas",
    "estimate_a3",
    "estimate_mn",
    "estimate_dn",
    "default_a3_rows",
    "default_mn_rows",
]

ALPHA_RULES = ("constant-1", "linear-in-tree", "custom")

DEFAULT_EPS = 0.005
DEFAULT_K_A3 = 50
DEFAULT_K_MN = 30


@dataclass(frozen=True)
class AlphaSeq:
    """Positive per-tree weights alpha(t).

    ``constant-1`` weights every tree equally; ``linear-in-tree`` uses
    alpha(t) = t; ``custom`` reads alpha(t) from ``table[t - 1]``.
    """

    rule: str = "constant-1"
    table: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.rule not in ALPHA_RULES:
            raise ValueError(f"alpha rule must be one of {ALPHA_RULES}, got {self.rule!r}")
        if self.rule == "custom":
            if not self.table or any(a <= 0.0 for a in self.table):
                raise ValueError("custom alpha needs a table of positive weights")
        elif self.table is not None:
            raise ValueError(f"rule {self.rule!r} takes no table")

    def value(self, tree: int) -> float:
        if self.rule == "constant-1":
            return 1.0
        if self.rule == "linear-in-tree":
            return float(tree)
        if tree > len(self.table):
            raise ValueError(f"custom alpha table has no entry for tree {tree}")
        return float(self.table[tree - 1])

    def per_param(self, model: VineModel) -> np.ndarray:
        """alpha evaluated at the tree of each flattened parameter."""
        vals = []
        for e in model.structure.param_edges():
            vals.extend([self.value(e.tree)] * model.copulas[e.eid].arity)
        return np.asarray(vals, dtype=float)


def default_a3_rows(d: int) -> int:
    return math.ceil(2000.0 * math.log(d))


def default_mn_rows(d: int) -> int:
    return math.ceil(200.0 * math.log(d))


def sample_deltas(
    model: VineModel,
    eps: float,
    alpha: AlphaSeq,
    K: int,
    seed,
) -> np.ndarray:
    """K random sign vectors scaled to +-eps * alpha(tree), shape (K, p)."""
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mags = eps * alpha.per_param(model)
    signs = rng.integers(0, 2, size=(int(K), mags.size)) * 2 - 1
    return signs * mags


def _split_rng(seed) -> tuple[np.random.Generator, np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    sim_ss, delta_ss = ss.spawn(2)
    return np.random.default_rng(sim_ss), np.random.default_rng(delta_ss)


def estimate_a3(
    model: VineModel,
    eps: float = DEFAULT_EPS,
    alpha: AlphaSeq = AlphaSeq(),
    K: int = DEFAULT_K_A3,
    N: int | None = None,
    seed=0,
) -> float:
    """Steepest empirical slope of the mean estimating function.

    For each of K sign draws Delta and each coordinate j, the difference
    quotient ``mean_i[phi_j(U_i; theta + Delta) - phi_j(U_i; theta)] /
    Delta_j`` estimates a weighted diagonal slope of E[phi]; the
    statistic is the maximum over j and draws.  Negative values certify
    the curvature condition locally; division uses the signed Delta_j,
    so at independence the statistic sits near -1 for every draw.
    """
    if N is None:
        N = default_a3_rows(model.structure.d)
    if N < 100:
        raise ValueError(f"N must be at least 100, got {N}")
    sim_rng, delta_rng = _split_rng(seed)
    U = simulate(model, N, sim_rng)
    deltas = sample_deltas(model, eps, alpha, K, delta_rng)
    theta = model.theta
    base = phi(model, U).mean(axis=0)
    best = -np.inf
    for k in range(deltas.shape[0]):
        shifted = phi(model.with_theta(theta + deltas[k]), U).mean(axis=0)
        quot = (shifted - base) / deltas[k]
        best = max(best, float(np.max(quot)))
    return best


def _row_sums(model_k: VineModel, U: np.ndarray, weights: np.ndarray):
    """Weighted absolute Jacobian row sums, one (N,) array per parameter j.

    Row j sums |alpha_k / alpha_j * d phi_j / d theta_k| over k <= j;
    only the edge's own parameter and its ancestors contribute.
    """
    for rec in _forward(model_k, U):
        diag, extras = _jacobian_entries(rec)
        j = rec.idx
        total = np.abs(diag)
        for k, val in extras.items():
            total = total + (weights[k] / weights[j]) * np.abs(val)
        yield j, total


def _mn_dn(
    model: VineModel,
    eps: float,
    alpha: AlphaSeq,
    K: int,
    N: int | None,
    seed,
) -> tuple[float, float]:
    if N is None:
        N = default_mn_rows(model.structure.d)
    if N < 2:
        raise ValueError(f"N must be at least 2, got {N}")
    sim_rng, delta_rng = _split_rng(seed)
    U = simulate(model, N, sim_rng)
    deltas = sample_deltas(model, eps, alpha, K, delta_rng)
    weights = alpha.per_param(model)
    theta = model.theta
    p = theta.size
    level = 1.0 - 15.0 / (p * p)
    mn_best = -np.inf
    dn_best = -np.inf
    for k in range(deltas.shape[0]):
        model_k = model.with_theta(theta + deltas[k])
        for _, total in _row_sums(model_k, U, weights):
            mn_best = max(mn_best, float(np.mean(total * total)))
            if level <= 0.0:
                dn_best = max(dn_best, float(np.max(total)))
            else:
                dn_best = max(dn_best, float(np.quantile(total, level)))
    return mn_best, dn_best


def estimate_mn(
    model: VineModel,
    eps: float = DEFAULT_EPS,
    alpha: AlphaSeq = AlphaSeq(),
    K: int = DEFAULT_K_MN,
    N: int | None = None,
    seed=0,
) -> float:
    """Max over parameters and K theta-perturbations of the mean squared
    weighted Jacobian row sum (an estimate of the squared growth bound)."""
    return _mn_dn(model, eps, alpha, K, N, seed)[0]


def estimate_dn(
    model: VineModel,
    eps: float = DEFAULT_EPS,
    alpha: AlphaSeq = AlphaSeq(),
    K: int = DEFAULT_K_MN,
    N: int | None = None,
    seed=0,
) -> float:
    """Max over parameters and K theta-perturbations of the empirical
    (1 - 15/p^2)-quantile (type-7) of the weighted row sums; the level
    degenerates to the sample maximum when p^2 <= 15."""
    return _mn_dn(model, eps, alpha, K, N, seed)[1]
