"""Derivatives of the stacked estimating function.

For an all-Gaussian vine the whole pseudo-data recursion lives on the
normal-score scale, where the h-function is the linear map
``(x1 - rho x2)/sqrt(1 - rho^2)``.  Forward accumulation propagates
``d(pseudo score)/d(theta_k)`` along the parent links; each edge then
assembles its Jacobian row from the closed-form partials of the score.
Rows are sparse: an edge depends only on its own parameter and the
parameters of its ancestor edges, which makes the Jacobian lower block
triangular in the canonical tree-major ordering.

A central finite-difference oracle covers every family, and
:func:`empirical_IJ` estimates the score covariance and mean Jacobian by
Monte Carlo.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from vinestep.paircop import (
    FamilyTag,
    UEPS,
    clamp_unit,
    gauss_dh_drho_x,
    gauss_hfunc_x,
    gauss_score_x,
    score_partials_gaussian,
)
from vinestep.vinemodel import VineModel, phi, simulate

__all__ = [
    "PhiJacobianRow",
    "EmpiricalIJ",
    "grad_phi_analytic",
    "grad_phi_fd",
    "empirical_IJ",
    "save_empirical_ij",
]

FD_STEP = 1e-5

# Normal score of the unit-interval clamp; pseudo-data on the score scale
# is clipped here exactly as the u-scale recursion clips at UEPS.
_XCLIP = float(-ndtri(UEPS))


@dataclass(frozen=True)
class PhiJacobianRow:
    """One row of the phi Jacobian: d(phi_j)/d(theta_k) for all k."""

    j: int
    entries: np.ndarray


@dataclass(frozen=True)
class _EdgeForward:
    """Forward-accumulation state of one edge at a batch of rows.

    ``gxa``/``gxb`` map parameter index -> d(xa)/d(theta_k) arrays; only
    ancestor parameters appear.
    """

    idx: int
    rho: float
    xa: np.ndarray
    xb: np.ndarray
    gxa: dict[int, np.ndarray]
    gxb: dict[int, np.ndarray]


def _clip_scores(x: np.ndarray, grads: dict[int, np.ndarray]):
    """Clamp pseudo-scores like the u-scale ops do, zeroing clipped grads."""
    clipped = np.clip(x, -_XCLIP, _XCLIP)
    if grads and clipped is not x:
        hit = clipped != x
        if np.any(hit):
            grads = {k: np.where(hit, 0.0, g) for k, g in grads.items()}
    return clipped, grads


def _forward(model: VineModel, U: np.ndarray) -> list[_EdgeForward]:
    """Run the score-scale pseudo-data recursion with parameter gradients."""
    pedges = model.structure.param_edges()
    for e in pedges:
        if model.copulas[e.eid].family is not FamilyTag.GAUSSIAN:
            raise ValueError(
                f"analytic derivatives need an all-Gaussian model, edge "
                f"{e.label()} is {model.copulas[e.eid].family.value}"
            )
    recs: dict[int, _EdgeForward] = {}
    out: list[_EdgeForward] = []
    for idx, e in enumerate(pedges):
        rho = model.copulas[e.eid].params[0]
        if e.tree == 1:
            xa = ndtri(clamp_unit(U[:, e.a - 1]))
            xb = ndtri(clamp_unit(U[:, e.b - 1]))
            gxa: dict[int, np.ndarray] = {}
            gxb: dict[int, np.ndarray] = {}
        else:
            xa, gxa = _descend(recs[e.parent_a], e.side_a)
            xb, gxb = _descend(recs[e.parent_b], e.side_b)
            xa, gxa = _clip_scores(xa, gxa)
            xb, gxb = _clip_scores(xb, gxb)
        rec = _EdgeForward(idx, rho, xa, xb, gxa, gxb)
        recs[e.eid] = rec
        out.append(rec)
    return out


def _descend(p: _EdgeForward, side: str):
    """Conditional score of one parent argument given the other, with grads."""
    if side == "1|2":
        keep, given = p.xa, p.xb
        gkeep, ggiven = p.gxa, p.gxb
    else:
        keep, given = p.xb, p.xa
        gkeep, ggiven = p.gxb, p.gxa
    rho = p.rho
    s = np.sqrt(1.0 - rho * rho)
    x = (keep - rho * given) / s
    grads: dict[int, np.ndarray] = {}
    for k in gkeep.keys() | ggiven.keys():
        gk = gkeep.get(k)
        gg = ggiven.get(k)
        if gk is None:
            grads[k] = (-rho / s) * gg
        elif gg is None:
            grads[k] = gk / s
        else:
            grads[k] = (gk - rho * gg) / s
    own = gauss_dh_drho_x(rho, keep, given)
    if p.idx in grads:
        grads[p.idx] = grads[p.idx] + own
    else:
        grads[p.idx] = own
    return x, grads


def _jacobian_entries(rec: _EdgeForward):
    """Nonzero Jacobian entries of one edge's score row.

    Returns (diag, extras) where diag is d(phi_j)/d(own rho) and extras
    maps ancestor parameter index -> entry array.
    """
    parts = score_partials_gaussian(rec.rho, rec.xa, rec.xb)
    extras: dict[int, np.ndarray] = {}
    for k in rec.gxa.keys() | rec.gxb.keys():
        ga = rec.gxa.get(k)
        gb = rec.gxb.get(k)
        val = 0.0
        if ga is not None:
            val = parts.ds_dx1 * ga
        if gb is not None:
            val = val + parts.ds_dx2 * gb
        extras[k] = val
    diag = parts.ds_drho
    if rec.idx in extras:
        diag = diag + extras.pop(rec.idx)
    return diag, extras


def grad_phi_analytic(model: VineModel, u) -> list[PhiJacobianRow]:
    """Exact phi Jacobian rows at a single observation of a Gaussian vine."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise ValueError("grad_phi_analytic expects a single row")
    recs = _forward(model, u[np.newaxis, :])
    p = len(recs)
    rows = []
    for rec in recs:
        entries = np.zeros(p)
        diag, extras = _jacobian_entries(rec)
        entries[rec.idx] = diag[0]
        for k, val in extras.items():
            entries[k] = val[0]
        rows.append(PhiJacobianRow(j=rec.idx, entries=entries))
    return rows


def _grad_phi_fd_batch(model: VineModel, U: np.ndarray, step: float) -> np.ndarray:
    theta = model.theta
    p = theta.size
    n = U.shape[0]
    J = np.empty((n, p, p))
    for k in range(p):
        up = theta.copy()
        dn = theta.copy()
        up[k] += step
        dn[k] -= step
        J[:, :, k] = (
            phi(model.with_theta(up), U) - phi(model.with_theta(dn), U)
        ) / (2.0 * step)
    return J


def grad_phi_fd(model: VineModel, u, step: float = FD_STEP) -> list[PhiJacobianRow]:
    """Central finite differences of phi in theta; works for any family."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise ValueError("grad_phi_fd expects a single row")
    J = _grad_phi_fd_batch(model, u[np.newaxis, :], step)[0]
    return [PhiJacobianRow(j=j, entries=J[j]) for j in range(J.shape[0])]


@dataclass(frozen=True)
class EmpiricalIJ:
    """Monte-Carlo estimates of the score covariance and mean Jacobian."""

    I_hat: np.ndarray
    J_hat: np.ndarray
    N: int
    seed: int
    theta: np.ndarray
    method: str


def empirical_IJ(model: VineModel, N: int, seed, method: str = "analytic") -> EmpiricalIJ:
    """Estimate I = Cov[phi] and J = E[d phi/d theta] over N simulated rows."""
    if N < 100:
        raise ValueError(f"N must be at least 100, got {N}")
    if method not in ("analytic", "fd"):
        raise ValueError(f"method must be analytic or fd, got {method!r}")
    U = simulate(model, N, seed)
    Phi = phi(model, U)
    p = Phi.shape[1]
    I_hat = np.atleast_2d(np.cov(Phi, rowvar=False, ddof=1))
    J_hat = np.zeros((p, p))
    if method == "analytic":
        for rec in _forward(model, U):
            diag, extras = _jacobian_entries(rec)
            J_hat[rec.idx, rec.idx] = float(np.mean(diag))
            for k, val in extras.items():
                J_hat[rec.idx, k] = float(np.mean(val))
    else:
        J_hat = _grad_phi_fd_batch(model, U, FD_STEP).mean(axis=0)
    return EmpiricalIJ(
        I_hat=I_hat,
        J_hat=J_hat,
        N=N,
        seed=int(seed) if np.isscalar(seed) else -1,
        theta=model.theta,
        method=method,
    )


def save_empirical_ij(ij: EmpiricalIJ, prefix: str) -> None:
    """Write ``<prefix>_I.csv``, ``<prefix>_J.csv`` and a JSON sidecar."""
    for tag, mat in (("I", ij.I_hat), ("J", ij.J_hat)):
        with open(f"{prefix}_{tag}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in np.atleast_2d(mat):
                writer.writerow([f"{x:.17g}" for x in row])
    with open(f"{prefix}.json", "w") as fh:
        json.dump(
            {
                "N": ij.N,
                "seed": ij.seed,
                "method": ij.method,
                "theta": [float(t) for t in ij.theta],
            },
            fh,
            indent=1,
        )
