"""Regular-vine tree sequences.

An R-vine on d variables is a sequence of trees T_1, ..., T_{d-1}; the
edges of tree t are labelled (a, b; cond) with a conditioned pair a < b
and a conditioning set of size t - 1.  Edges of tree t >= 2 connect two
edges of tree t - 1 (their parents) that satisfy the proximity
condition: each parent's complete label set {conditioned pair} union
{conditioning set} equals {a} union cond, respectively {b} union cond.

Structures may be truncated: trees above ``trunc`` carry no parameters
(their pair copulas are the independence copula).  The builders
materialize only trees 1..trunc, which keeps truncated structures in a
few thousand edges even at d = 2000; loaders accept structures with any
number of trees between trunc and d - 1.

Edges are numbered tree-major (tree 1 first, construction order within a
tree); that numbering is the canonical flattening order for parameter
vectors throughout the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

__all__ = [
    "Edge",
    "RVineStructure",
    "build_cvine",
    "build_dvine",
    "from_trees",
    "structure_from_dict",
    "structure_to_dict",
    "load_structure",
    "save_structure",
    "validate_structure",
    "param_count",
]


@dataclass(frozen=True)
class Edge:
    """One edge of a vine tree.

    ``parent_a``/``parent_b`` are edge ids (flat indices) of the two
    tree-(t-1) edges this edge connects, or ``None`` in tree 1.
    ``side_a`` is the h-function side ("1|2" or "2|1") that turns
    parent_a's pair of pseudo-observations into the conditional
    observation of ``a`` given ``cond``; likewise ``side_b`` for ``b``.
    """

    tree: int
    a: int
    b: int
    cond: tuple[int, ...]
    eid: int
    parent_a: int | None = None
    parent_b: int | None = None
    side_a: str | None = None
    side_b: str | None = None

    def label(self) -> str:
        if self.cond:
            return f"({self.a},{self.b};{','.join(map(str, self.cond))})"
        return f"({self.a},{self.b})"

    @property
    def complete(self) -> frozenset[int]:
        """All variables the edge touches: {a, b} union cond."""
        return frozenset((self.a, self.b)) | frozenset(self.cond)


@dataclass(frozen=True)
class RVineStructure:
    """A (possibly truncated) R-vine tree sequence on variables 1..d."""

    d: int
    trunc: int
    trees: tuple[tuple[Edge, ...], ...]
    edges: tuple[Edge, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        flat = tuple(e for tree in self.trees for e in tree)
        object.__setattr__(self, "edges", flat)

    @property
    def n_param_edges(self) -> int:
        """Edges that carry parameters: those in trees 1..trunc."""
        return sum(len(tree) for tree in self.trees[: self.trunc])

    def param_edges(self) -> tuple[Edge, ...]:
        return tuple(e for tree in self.trees[: self.trunc] for e in tree)


def _link_parents(tree_idx: int, labels, prev_edges, start_eid: int) -> list[Edge]:
    """Resolve parent edges and h-sides for one tree's labels.

    ``labels`` is a sequence of (a, b, cond) with a < b and sorted cond.
    """
    by_complete = {e.complete: e for e in prev_edges}
    out = []
    for k, (a, b, cond) in enumerate(labels):
        need_a = frozenset((a,)) | frozenset(cond)
        need_b = frozenset((b,)) | frozenset(cond)
        pa = by_complete.get(need_a)
        pb = by_complete.get(need_b)
        if pa is None or pb is None:
            raise ValueError(
                f"tree {tree_idx} edge ({a},{b};{cond}): no tree-{tree_idx - 1} "
                "edge covers the required variable set (proximity violated)"
            )
        side_a = "1|2" if pa.a == a else "2|1"
        side_b = "1|2" if pb.a == b else "2|1"
        out.append(
            Edge(
                tree=tree_idx,
                a=a,
                b=b,
                cond=tuple(cond),
                eid=start_eid + k,
                parent_a=pa.eid,
                parent_b=pb.eid,
                side_a=side_a,
                side_b=side_b,
            )
        )
    return out


def from_trees(d: int, tree_labels, trunc: int | None = None) -> RVineStructure:
    """Build a structure from raw edge labels.

    Parameters
    ----------
    d : int
        Number of variables.
    tree_labels : sequence of sequence of (a, b, cond)
        Labels per tree, tree 1 first.  Conditioned pairs are reordered
        to a < b and conditioning sets are sorted.
    trunc : int, optional
        Truncation level; defaults to the number of trees given.
    """
    norm = []
    for labels in tree_labels:
        tree = []
        for a, b, cond in labels:
            a, b = (int(a), int(b)) if a < b else (int(b), int(a))
            tree.append((a, b, tuple(sorted(int(c) for c in cond))))
        norm.append(tree)
    if trunc is None:
        trunc = len(norm)
    trees: list[tuple[Edge, ...]] = []
    eid = 0
    for t, labels in enumerate(norm, start=1):
        if t == 1:
            tree = [
                Edge(tree=1, a=a, b=b, cond=(), eid=eid + k)
                for k, (a, b, _) in enumerate(labels)
            ]
        else:
            tree = _link_parents(t, labels, trees[-1], eid)
        eid += len(tree)
        trees.append(tuple(tree))
    structure = RVineStructure(d=d, trunc=int(trunc), trees=tuple(trees))
    problem = validate_structure(structure)
    if problem is not None:
        raise ValueError(problem)
    return structure


def build_cvine(d: int, trunc: int | None = None) -> RVineStructure:
    """Canonical vine: tree t is the star with center t.

    Tree t has edges (t, j; 1..t-1) for j = t+1..d.
    """
    if trunc is None:
        trunc = d - 1
    labels = [
        [(t, j, tuple(range(1, t))) for j in range(t + 1, d + 1)]
        for t in range(1, min(trunc, d - 1) + 1)
    ]
    return from_trees(d, labels, trunc=min(trunc, d - 1))


def build_dvine(d: int, trunc: int | None = None) -> RVineStructure:
    """Drawable vine: tree 1 is the path 1 - 2 - ... - d.

    Tree t has edges (i, i+t; i+1..i+t-1) for i = 1..d-t.
    """
    if trunc is None:
        trunc = d - 1
    labels = [
        [(i, i + t, tuple(range(i + 1, i + t))) for i in range(1, d - t + 1)]
        for t in range(1, min(trunc, d - 1) + 1)
    ]
    return from_trees(d, labels, trunc=min(trunc, d - 1))


class _UnionFind:
    def __init__(self, items) -> None:
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x, y) -> bool:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        self.parent[rx] = ry
        return True


def validate_structure(s: RVineStructure) -> str | None:
    """Check the R-vine invariants; return None or a description of the
    first violation found (pinpointing tree and edge label)."""
    if s.d < 2:
        return f"d must be at least 2, got {s.d}"
    if not 1 <= s.trunc <= s.d - 1:
        return f"trunc must lie in [1, {s.d - 1}], got {s.trunc}"
    if not min(s.trunc, s.d - 1) <= len(s.trees) <= s.d - 1:
        return (
            f"expected between {s.trunc} and {s.d - 1} trees, got {len(s.trees)}"
        )
    seen_pairs: set[tuple[int, int]] = set()
    eid_expect = 0
    for t, tree in enumerate(s.trees, start=1):
        if len(tree) != s.d - t:
            return f"tree {t} must have {s.d - t} edges, got {len(tree)}"
        uf = _UnionFind(range(len(s.trees[t - 2]))) if t >= 2 else _UnionFind(
            range(1, s.d + 1)
        )
        for e in tree:
            where = f"tree {t} edge {e.label()}"
            if e.tree != t:
                return f"{where}: recorded tree index {e.tree} != {t}"
            if e.eid != eid_expect:
                return f"{where}: edge id {e.eid} breaks tree-major numbering"
            eid_expect += 1
            if not (1 <= e.a <= s.d and 1 <= e.b <= s.d):
                return f"{where}: variables out of range 1..{s.d}"
            if e.a >= e.b:
                return f"{where}: conditioned pair must satisfy a < b"
            if len(e.cond) != t - 1:
                return f"{where}: conditioning set must have {t - 1} variables"
            if tuple(sorted(e.cond)) != e.cond:
                return f"{where}: conditioning set not sorted"
            if e.a in e.cond or e.b in e.cond:
                return f"{where}: conditioned variable re-appears in conditioning set"
            if len(set(e.cond)) != len(e.cond):
                return f"{where}: duplicate conditioning variable"
            if (e.a, e.b) in seen_pairs:
                return f"{where}: conditioned pair {e.a},{e.b} appears twice"
            seen_pairs.add((e.a, e.b))
            if t == 1:
                if e.parent_a is not None or e.parent_b is not None:
                    return f"{where}: tree-1 edges have no parents"
                if not uf.union(e.a, e.b):
                    return f"{where}: creates a cycle in tree 1"
            else:
                prev = s.trees[t - 2]
                lo = prev[0].eid
                for pid, var, side in (
                    (e.parent_a, e.a, e.side_a),
                    (e.parent_b, e.b, e.side_b),
                ):
                    if pid is None or not lo <= pid < lo + len(prev):
                        return f"{where}: parent id {pid} not in tree {t - 1}"
                    p = prev[pid - lo]
                    if p.complete != frozenset((var,)) | frozenset(e.cond):
                        return (
                            f"{where}: parent {p.label()} does not cover "
                            f"{{{var}}} union conditioning set (proximity violated)"
                        )
                    want = "1|2" if p.a == var else "2|1"
                    if side != want:
                        return f"{where}: h-side for {var} should be {want}, got {side}"
                if not uf.union(e.parent_a - lo, e.parent_b - lo):
                    return f"{where}: creates a cycle in tree {t}"
    return None


def param_count(s: RVineStructure, arity: int) -> int:
    """Total parameter count for a single family of the given arity.

    Tree t contributes d - t edges, so truncation at level ``trunc``
    leaves ``trunc * d - trunc * (trunc + 1) / 2`` parametrized edges.
    """
    tr = min(s.trunc, s.d - 1)
    return arity * (tr * s.d - tr * (tr + 1) // 2)


def structure_to_dict(s: RVineStructure) -> dict:
    return {
        "d": s.d,
        "trunc": s.trunc,
        "trees": [
            [{"a": e.a, "b": e.b, "D": list(e.cond)} for e in tree] for tree in s.trees
        ],
    }


def structure_from_dict(obj: dict) -> RVineStructure:
    labels = [
        [(e["a"], e["b"], tuple(e.get("D", ()))) for e in tree]
        for tree in obj["trees"]
    ]
    return from_trees(int(obj["d"]), labels, trunc=int(obj["trunc"]))


def save_structure(s: RVineStructure, path) -> None:
    with open(path, "w") as fh:
        json.dump(structure_to_dict(s), fh, indent=1)


def load_structure(path) -> RVineStructure:
    with open(path) as fh:
        return structure_from_dict(json.load(fh))


def complete_trees(s: RVineStructure) -> RVineStructure:
    """Extend a truncated structure to a full d - 1 tree sequence.

    Higher trees are filled greedily with proximity-admissible edges.
    Any proximity-valid completion induces the same joint distribution
    when the added edges are independence copulas, so the greedy choice
    is as good as any.
    """
    if len(s.trees) == s.d - 1:
        return s
    labels = [[(e.a, e.b, e.cond) for e in tree] for tree in s.trees]
    prev = [frozenset((a, b)) | frozenset(c) for a, b, c in labels[-1]]
    for t in range(len(s.trees) + 1, s.d):
        nodes = list(prev)
        attached = {0}
        new_labels: list[tuple[int, int, tuple[int, ...]]] = []
        new_sets: list[frozenset[int]] = []
        while len(attached) < len(nodes):
            hit = None
            for i in sorted(attached):
                for j in range(len(nodes)):
                    if j in attached:
                        continue
                    inter = nodes[i] & nodes[j]
                    if len(inter) == t - 1:
                        hit = (i, j, inter)
                        break
                if hit:
                    break
            if hit is None:
                raise ValueError(f"cannot extend structure beyond tree {t - 1}")
            i, j, inter = hit
            a, b = sorted(nodes[i] ^ nodes[j])
            new_labels.append((a, b, tuple(sorted(inter))))
            new_sets.append(nodes[i] | nodes[j])
            attached.add(j)
        labels.append(new_labels)
        prev = new_sets
    return from_trees(s.d, labels, trunc=s.trunc)
