"""The joint vine copula model.

A model couples an :class:`~vinestep.vinestruct.RVineStructure` with one
pair copula per materialized edge.  Edges in trees above the truncation
level must be independence copulas.  The flattened parameter vector
``theta`` concatenates the per-edge parameters of trees 1..trunc in the
canonical tree-major edge order; that ordering is shared by scores,
Jacobians, and fitted parameter vectors everywhere in the package.

The module provides pseudo-data recursion, the stacked per-edge score
``phi``, log likelihood, exact sampling by inverse h-chains, parameter
profiles over tree depth (:class:`ThetaModelSpec`), and the implied
correlation matrix of an all-Gaussian model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from vinestep.paircop import (
    ARITY,
    FamilyTag,
    PairCopula,
    clamp_unit,
    hfunc,
    hinv,
    log_density,
    score,
)
from vinestep.vinestruct import (
    Edge,
    RVineStructure,
    complete_trees,
    structure_from_dict,
    structure_to_dict,
)

__all__ = [
    "ThetaModelSpec",
    "VineModel",
    "from_theta_model",
    "pseudo_data",
    "phi",
    "loglik",
    "simulate",
    "implied_corr",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

THETA_MODEL_NAMES = ("zero", "geometric", "harmonic", "sqrt-slow")

# Row blocks for the sampler: pseudo-data memoization holds O(edges) arrays
# of the block length, so cap edges * block_rows to keep large-d runs flat.
_EDGE_VALUES_PER_BLOCK = 4_000_000


@dataclass(frozen=True)
class ThetaModelSpec:
    """Per-tree parameter profile theta_t = scale * base(t).

    Bases: ``zero`` -> 0, ``geometric`` -> 0.5**t, ``harmonic`` ->
    1/(t+1), ``sqrt-slow`` -> 0.5/sqrt(t+1).
    """

    name: str
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.name not in THETA_MODEL_NAMES:
            raise ValueError(
                f"theta model must be one of {THETA_MODEL_NAMES}, got {self.name!r}"
            )

    def value(self, tree: int) -> float:
        if self.name == "zero":
            base = 0.0
        elif self.name == "geometric":
            base = 0.5**tree
        elif self.name == "harmonic":
            base = 1.0 / (tree + 1.0)
        else:  # sqrt-slow
            base = 0.5 / math.sqrt(tree + 1.0)
        return self.scale * base


@dataclass(frozen=True)
class VineModel:
    """A vine structure with one pair copula per materialized edge."""

    structure: RVineStructure
    copulas: tuple[PairCopula, ...]

    def __post_init__(self) -> None:
        edges = self.structure.edges
        if len(self.copulas) != len(edges):
            raise ValueError(
                f"need one copula per edge: {len(edges)} edges, "
                f"{len(self.copulas)} copulas"
            )
        for e, cop in zip(edges, self.copulas):
            if e.tree > self.structure.trunc and cop.family is not FamilyTag.INDEPENDENCE:
                raise ValueError(
                    f"edge {e.label()} lies above the truncation level and must "
                    f"be independence, got {cop.family.value}"
                )

    @property
    def p(self) -> int:
        """Length of the flattened parameter vector."""
        return sum(self.copulas[e.eid].arity for e in self.structure.param_edges())

    @property
    def theta(self) -> np.ndarray:
        """Flattened parameters, canonical tree-major edge order."""
        vals: list[float] = []
        for e in self.structure.param_edges():
            vals.extend(self.copulas[e.eid].params)
        return np.asarray(vals, dtype=float)

    def param_slices(self) -> list[tuple[int, int]]:
        """Half-open theta index ranges per parametrized edge."""
        out = []
        start = 0
        for e in self.structure.param_edges():
            k = self.copulas[e.eid].arity
            out.append((start, start + k))
            start += k
        return out

    def with_theta(self, theta) -> "VineModel":
        """Copy of the model with replaced flattened parameters."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.p,):
            raise ValueError(f"theta must have shape ({self.p},), got {theta.shape}")
        cops = list(self.copulas)
        for (lo, hi), e in zip(self.param_slices(), self.structure.param_edges()):
            cops[e.eid] = PairCopula(self.copulas[e.eid].family, tuple(theta[lo:hi]))
        return VineModel(self.structure, tuple(cops))


def from_theta_model(
    structure: RVineStructure,
    family: FamilyTag | str,
    theta_model: ThetaModelSpec,
    nu: float = 4.0,
) -> VineModel:
    """Build a model whose edge parameters follow a per-tree profile.

    Every edge of tree t gets the parameter ``theta_model.value(t)``;
    Student t edges share the fixed degrees of freedom ``nu``.
    """
    family = FamilyTag(family)
    cops = []
    for e in structure.edges:
        if e.tree > structure.trunc or family is FamilyTag.INDEPENDENCE:
            cops.append(PairCopula(FamilyTag.INDEPENDENCE))
            continue
        val = theta_model.value(e.tree)
        if family is FamilyTag.STUDENT_T:
            cops.append(PairCopula(family, (val, nu)))
        else:
            cops.append(PairCopula(family, (val,)))
    return VineModel(structure, tuple(cops))


def _iter_edge_pairs(model: VineModel, U: np.ndarray):
    """Yield (edge, copula, u_a, u_b) tree-major over parametrized edges.

    The conditional pseudo-observations of tree t depend only on tree
    t - 1, so cached pairs from older trees are dropped as the recursion
    advances; peak memory stays at two trees' worth of columns.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] != model.structure.d:
        raise ValueError(
            f"U must have shape (n, {model.structure.d}), got {U.shape}"
        )
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    current_tree = 1
    for e in model.structure.param_edges():
        if e.tree > current_tree:
            stale = [eid for eid in cache if model.structure.edges[eid].tree < e.tree - 1]
            for eid in stale:
                del cache[eid]
            current_tree = e.tree
        if e.tree == 1:
            ua = clamp_unit(U[:, e.a - 1])
            ub = clamp_unit(U[:, e.b - 1])
        else:
            pa = model.structure.edges[e.parent_a]
            pb = model.structure.edges[e.parent_b]
            paa, pab = cache[pa.eid]
            pba, pbb = cache[pb.eid]
            ua = hfunc(model.copulas[pa.eid], paa, pab, e.side_a)
            ub = hfunc(model.copulas[pb.eid], pba, pbb, e.side_b)
        cache[e.eid] = (ua, ub)
        yield e, model.copulas[e.eid], ua, ub


def pseudo_data(model: VineModel, U) -> list[tuple[np.ndarray, np.ndarray]]:
    """Conditional pseudo-observation pairs for every parametrized edge.

    Entry k holds ``(u_{a|cond}, u_{b|cond})`` for the k-th edge in
    canonical order, each an array of length ``n``.
    """
    return [(ua, ub) for _, _, ua, ub in _iter_edge_pairs(model, np.atleast_2d(U))]


def phi(model: VineModel, U) -> np.ndarray:
    """Stacked per-edge score of the model at observations ``U``.

    Returns shape ``(n, p)`` for a 2-d input, ``(p,)`` for a single row.
    Block k of columns is the parameter score of edge k evaluated at the
    edge's conditional pseudo-observations, in canonical order.
    """
    U2 = np.atleast_2d(np.asarray(U, dtype=float))
    cols: list[np.ndarray] = []
    for e, cop, ua, ub in _iter_edge_pairs(model, U2):
        sc = score(cop, ua, ub)  # (arity, n)
        for k in range(sc.shape[0]):
            cols.append(sc[k])
    out = np.column_stack(cols) if cols else np.empty((U2.shape[0], 0))
    if np.asarray(U).ndim == 1:
        return out[0]
    return out


def loglik(model: VineModel, U) -> float:
    """Total copula log likelihood over the parametrized trees."""
    total = 0.0
    for _, cop, ua, ub in _iter_edge_pairs(model, np.atleast_2d(U)):
        total += float(np.sum(log_density(cop, ua, ub)))
    return total


# ---------------------------------------------------------------------------
# Sampling.
# ---------------------------------------------------------------------------


def _sampling_plan(s: RVineStructure):
    """Peel variables off the structure to derive the sampling recursion.

    A variable can be eliminated when the top active tree conditions on
    it in exactly one edge and does not touch it otherwise; its h-chain
    is that edge followed by the parent containing the variable, down to
    tree 1.  Eliminated variables are sampled in reverse peel order, so
    every conditioning value is available when a chain is inverted.

    Returns ``(first_var, order)`` where order lists ``(v, chain)`` in
    sampling order, chains running top tree -> tree 1.
    """
    active: list[dict[int, Edge]] = [
        {e.eid: e for e in tree} for tree in s.trees[: s.trunc]
    ]
    edges = s.edges
    alive = set(range(1, s.d + 1))
    peel: list[tuple[int, list[Edge]]] = []
    counts: dict[int, int] = {}
    cond_edge: dict[int, list[int]] = {}
    level = -1

    def rebuild(t: int) -> None:
        counts.clear()
        cond_edge.clear()
        for e in active[t].values():
            for x in (e.a, e.b):
                counts[x] = counts.get(x, 0) + 1
                cond_edge.setdefault(x, []).append(e.eid)
            for x in e.cond:
                counts[x] = counts.get(x, 0) + 1

    while len(alive) >= 2:
        t = min(s.trunc, len(alive) - 1) - 1
        if t != level:
            rebuild(t)
            level = t
        v = min(
            x
            for x, c in counts.items()
            if c == 1 and len(cond_edge.get(x, ())) == 1
        )
        top = active[t][cond_edge[v][0]]
        chain = [top]
        e = top
        while e.tree > 1:
            pid = e.parent_a if v == e.a else e.parent_b
            e = edges[pid]
            if v not in (e.a, e.b):
                raise AssertionError(
                    f"descent from {top.label()} lost variable {v} at {e.label()}"
                )
            chain.append(e)
        for e in chain:
            del active[e.tree - 1][e.eid]
        for x in top.complete:
            counts[x] -= 1
            if counts[x] == 0:
                del counts[x]
        cond_edge[top.a].remove(top.eid)
        cond_edge[top.b].remove(top.eid)
        alive.remove(v)
        peel.append((v, chain))
    (first_var,) = alive
    peel.reverse()
    return first_var, peel


def _simulate_block(model: VineModel, plan, W: np.ndarray) -> np.ndarray:
    edges = model.structure.edges
    cops = model.copulas
    first_var, order = plan
    U = np.full_like(W, np.nan)
    U[:, first_var - 1] = W[:, first_var - 1]
    memo: dict[tuple[int, str], np.ndarray] = {}

    def ps(eid: int, which: str) -> np.ndarray:
        key = (eid, which)
        got = memo.get(key)
        if got is not None:
            return got
        e = edges[eid]
        if e.tree == 1:
            val = clamp_unit(U[:, (e.a if which == "a" else e.b) - 1])
        elif which == "a":
            val = hfunc(cops[e.parent_a], ps(e.parent_a, "a"), ps(e.parent_a, "b"), e.side_a)
        else:
            val = hfunc(cops[e.parent_b], ps(e.parent_b, "a"), ps(e.parent_b, "b"), e.side_b)
        memo[key] = val
        return val

    for v, chain in order:
        x = W[:, v - 1]
        for e in chain:
            if v == e.a:
                if e.tree == 1:
                    cond = clamp_unit(U[:, e.b - 1])
                else:
                    cond = ps(e.eid, "b")
                x = hinv(cops[e.eid], x, cond, "1|2")
            else:
                if e.tree == 1:
                    cond = clamp_unit(U[:, e.a - 1])
                else:
                    cond = ps(e.eid, "a")
                x = hinv(cops[e.eid], x, cond, "2|1")
        U[:, v - 1] = x
    return U


def simulate(model: VineModel, n: int, seed) -> np.ndarray:
    """Draw ``n`` rows from the model by inverse h-chains.

    ``seed`` feeds ``numpy.random.default_rng``; passing a Generator uses
    it directly.  Rows are generated in blocks so the pseudo-data
    memoization never holds more than a few million values, which keeps
    memory flat for large truncated structures; blocking does not change
    the output for a given seed.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = int(n)
    d = model.structure.d
    W = rng.random((n, d))
    if d == 1:
        return W
    plan = _sampling_plan(model.structure)
    n_edges = max(1, len(model.structure.param_edges()))
    block = max(256, _EDGE_VALUES_PER_BLOCK // n_edges)
    if n <= block:
        return _simulate_block(model, plan, W)
    parts = [
        _simulate_block(model, plan, W[lo : lo + block])
        for lo in range(0, n, block)
    ]
    return np.vstack(parts)


# ---------------------------------------------------------------------------
# Implied correlations of an all-Gaussian model.
# ---------------------------------------------------------------------------


def implied_corr(model: VineModel) -> np.ndarray:
    """Correlation matrix of the normal scores implied by a Gaussian model.

    Every edge parameter is the partial correlation of its conditioned
    pair given its conditioning set.  Walking the trees in order and
    unwinding one conditioning variable at a time turns those partials
    into plain correlations; edges above the truncation level (or beyond
    the materialized trees) contribute zero partial correlation.  Raises
    for any parametrized non-Gaussian edge.
    """
    s = model.structure
    rho_by_pair: dict[tuple[int, int], float] = {}
    for e in s.param_edges():
        cop = model.copulas[e.eid]
        if cop.family is FamilyTag.GAUSSIAN:
            rho_by_pair[(e.a, e.b)] = cop.params[0]
        elif cop.family is FamilyTag.INDEPENDENCE:
            rho_by_pair[(e.a, e.b)] = 0.0
        else:
            raise ValueError(
                f"implied_corr needs Gaussian edges, found {cop.family.value} "
                f"at {e.label()}"
            )
    full = complete_trees(s)
    R = np.eye(s.d)
    memo: dict[tuple[int, int, frozenset[int]], float] = {}

    def pc(x: int, y: int, given: frozenset[int]) -> float:
        """Partial correlation from the already-filled entries of R."""
        if x > y:
            x, y = y, x
        if not given:
            return R[x - 1, y - 1]
        key = (x, y, given)
        got = memo.get(key)
        if got is not None:
            return got
        c = max(given)
        rest = given - {c}
        num = pc(x, y, rest) - pc(x, c, rest) * pc(y, c, rest)
        den = math.sqrt(
            (1.0 - pc(x, c, rest) ** 2) * (1.0 - pc(y, c, rest) ** 2)
        )
        val = num / den
        memo[key] = val
        return val

    for e in full.edges:
        rho = rho_by_pair.get((e.a, e.b), 0.0)
        given = set(e.cond)
        while given:
            c = max(given)
            given.remove(c)
            fs = frozenset(given)
            r_ac = pc(e.a, c, fs)
            r_bc = pc(e.b, c, fs)
            rho = rho * math.sqrt((1.0 - r_ac**2) * (1.0 - r_bc**2)) + r_ac * r_bc
        R[e.a - 1, e.b - 1] = R[e.b - 1, e.a - 1] = rho
    return R


# ---------------------------------------------------------------------------
# Serialization.
# ---------------------------------------------------------------------------


def model_to_dict(model: VineModel) -> dict:
    return {
        "structure": structure_to_dict(model.structure),
        "families": [cop.family.value for cop in model.copulas],
        "params": [list(cop.params) for cop in model.copulas],
    }


def model_from_dict(obj: dict) -> VineModel:
    structure = structure_from_dict(obj["structure"])
    cops = tuple(
        PairCopula(FamilyTag(fam), tuple(par))
        for fam, par in zip(obj["families"], obj["params"])
    )
    return VineModel(structure, cops)


def save_model(model: VineModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def load_model(path) -> VineModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
