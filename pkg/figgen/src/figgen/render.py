"""Render vinestep CSV outputs into figure files.

The two input layouts (validation tables and study tables) are an
external contract: this package checks the header, arranges columns on
axes, and writes one PNG plus one SVG.  No statistic is recomputed here.
"""

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

plt.rcParams["svg.hashsalt"] = "figgen"

A3_COLUMNS = [
    "d", "p", "theta_model", "alpha_rule", "eps", "K", "N", "seed",
    "a3_hat", "mn2_hat", "dn_hat",
]
STUDY_COLUMNS = [
    "study_id", "structure", "family", "theta_model", "margins_mode", "trunc",
    "d", "n", "rep", "seed", "maxnorm_stat", "sum_stat", "nonconverged", "wall_ms",
]

KIND_COLUMNS = {"line-by-d": A3_COLUMNS, "boxplot-grid": STUDY_COLUMNS}
DEFAULT_FACETS = {"line-by-d": (), "boxplot-grid": ("structure", "theta_model")}


class SpecError(Exception):
    """The figure spec itself is unusable."""


class SchemaError(Exception):
    """The input CSV does not carry the expected columns."""

    def __init__(self, missing, unexpected):
        self.missing = sorted(missing)
        self.unexpected = sorted(unexpected)
        parts = []
        if self.missing:
            parts.append("missing columns: " + ", ".join(self.missing))
        if self.unexpected:
            parts.append("unexpected columns: " + ", ".join(self.unexpected))
        super().__init__("schema mismatch: " + "; ".join(parts))


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    input: str
    output: str
    facets: tuple[str, ...] = field(default=None)  # None -> kind default

    def __post_init__(self):
        if self.kind not in KIND_COLUMNS:
            raise SpecError(f"kind must be one of {sorted(KIND_COLUMNS)}, got {self.kind!r}")
        if self.facets is None:
            object.__setattr__(self, "facets", DEFAULT_FACETS[self.kind])
        else:
            object.__setattr__(self, "facets", tuple(self.facets))
        if len(self.facets) > 2:
            raise SpecError("at most two facet columns are supported")
        columns = KIND_COLUMNS[self.kind]
        for col in self.facets:
            if col not in columns:
                raise SpecError(f"facet column {col!r} is not in the {self.kind} schema")


def load_spec(path) -> FigureSpec:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SpecError("spec must be a JSON object")
    allowed = {"kind", "input", "output", "facets"}
    unknown = set(raw) - allowed
    if unknown:
        raise SpecError(f"unknown spec keys: {', '.join(sorted(unknown))}")
    for key in ("kind", "input", "output"):
        if key not in raw:
            raise SpecError(f"spec is missing required key {key!r}")
    return FigureSpec(raw["kind"], raw["input"], raw["output"], raw.get("facets"))


def read_rows(path, kind: str) -> list[dict]:
    """Read one CSV, enforcing the exact column set of the given kind."""
    expected = KIND_COLUMNS[kind]
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            got = reader.fieldnames or []
            missing = set(expected) - set(got)
            unexpected = set(got) - set(expected)
            if missing or unexpected:
                raise SchemaError(missing, unexpected)
            return list(reader)
    except OSError as exc:
        raise SpecError(f"cannot read input CSV: {exc}") from exc


def _float(text):
    try:
        value = float(text)
    except (TypeError, ValueError):
        return None
    return None if math.isnan(value) else value


def _facet_grid(rows, facets):
    """(combo -> rows) for the full product of observed facet values."""
    if not facets:
        return {(): rows}
    values = [sorted({r[col] for r in rows}) for col in facets]
    grid = {combo: [] for combo in itertools.product(*values)}
    for r in rows:
        grid[tuple(r[col] for col in facets)].append(r)
    return grid


def _panel_title(facets, combo):
    return ", ".join(f"{col}={val}" for col, val in zip(facets, combo))


def _subplot_shape(facets, n_panels):
    if len(facets) == 2 and n_panels:
        seen = []
        for combo in n_panels:
            if combo[0] not in seen:
                seen.append(combo[0])
        nrows = len(seen)
        return nrows, len(n_panels) // nrows
    return 1, max(1, len(n_panels))


def _draw_line_by_d(ax, rows):
    series = sorted({r["theta_model"] for r in rows})
    for name in series:
        pts = [
            (int(r["d"]), y)
            for r in rows
            if r["theta_model"] == name and (y := _float(r["a3_hat"])) is not None
        ]
        pts.sort()
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
    ax.axhline(0.0, color="0.6", linewidth=0.8, linestyle="--")
    ax.set_xlabel("d")
    ax.set_ylabel("a3_hat")
    if series:
        ax.legend(title="theta_model", fontsize="small")


def _draw_boxplot_grid(ax, rows):
    groups = {}
    for r in rows:
        y = _float(r["sum_stat"])
        if y is None:
            continue
        groups.setdefault((int(r["d"]), int(r["n"])), []).append(y)
    keys = sorted(groups)
    if keys:
        ax.boxplot(
            [groups[k] for k in keys],
            tick_labels=[f"d={d}\nn={n}" for d, n in keys],
        )
    ax.axhline(0.0, color="0.6", linewidth=0.8, linestyle="--")
    ax.set_ylabel("sum_stat")


def render(spec: FigureSpec):
    """Write the figure as PNG and SVG; returns both paths."""
    rows = read_rows(spec.input, spec.kind)
    grid = _facet_grid(rows, spec.facets)
    combos = sorted(grid)
    nrows, ncols = _subplot_shape(spec.facets, combos)
    fig, axes = plt.subplots(
        nrows, ncols,
        figsize=(max(4.0, 3.6 * ncols), max(3.2, 2.8 * nrows)),
        squeeze=False,
    )
    draw = _draw_line_by_d if spec.kind == "line-by-d" else _draw_boxplot_grid
    flat = [ax for row in axes for ax in row]
    for ax, combo in zip(flat, combos):
        draw(ax, grid[combo])
        if spec.facets:
            ax.set_title(_panel_title(spec.facets, combo), fontsize="small")
    for ax in flat[len(combos):]:
        ax.set_axis_off()
    fig.tight_layout()
    out = Path(spec.output)
    png, svg = out.with_suffix(".png"), out.with_suffix(".svg")
    fig.savefig(png, dpi=150, metadata={"Software": None})
    fig.savefig(svg, metadata={"Date": None})
    plt.close(fig)
    return png, svg
