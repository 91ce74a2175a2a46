"""Simulation-study driver: grids, replication seeds, error statistics,
growth-regime curves, and CSV persistence.

A study is a grid over (d, n, replication).  Every cell derives its own
seed from the base seed and the cell coordinates, so any cell can be
re-run in isolation (or sharded across processes) and reproduce its row
exactly.  Fit failures are recorded, never dropped: rows keep a count of
nonconverged edges, and a hard numerical failure yields a row with NaN
statistics and ``nonconverged = -1``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import ndtri

from vinestep.estimate import pseudo_obs, stepwise_fit
from vinestep.paircop import FamilyTag
from vinestep.vinemodel import ThetaModelSpec, VineModel, from_theta_model, simulate
from vinestep.vinestruct import RVineStructure, build_cvine, build_dvine

__all__ = [
    "StudyConfig",
    "StudyRow",
    "RegimeSpec",
    "RegimeCurveRow",
    "cell_seed",
    "run_cell",
    "run_study",
    "regime_n",
    "interp_error",
    "build_regime_curves",
    "write_study_csv",
    "read_study_csv",
    "write_regime_csv",
    "STUDY_CSV_HEADER",
    "REGIME_CSV_HEADER",
]

STRUCTURES = ("cvine", "dvine")

STUDY_CSV_HEADER = (
    "study_id,structure,family,theta_model,margins_mode,trunc,"
    "d,n,rep,seed,maxnorm_stat,sum_stat,nonconverged,wall_ms"
)
REGIME_CSV_HEADER = "regime,d,n_target,mean_maxnorm_interp"

# Reporting filter for the cubic regime: the map is defined for d > 50
# but curves are only reported from here up.
CUBIC_REPORT_MIN_D = 75


def theta_model_token(tm: ThetaModelSpec) -> str:
    """Stable CSV token for a theta model; scale 1 collapses to the name."""
    if tm.scale == 1.0:
        return tm.name
    return f"{tm.name}*{tm.scale:g}"


def parse_theta_model(token: str) -> ThetaModelSpec:
    if "*" in token:
        name, scale = token.split("*", 1)
        return ThetaModelSpec(name, float(scale))
    return ThetaModelSpec(token)


@dataclass(frozen=True)
class StudyConfig:
    """One experiment grid."""

    structure: str
    family: str
    theta_model: ThetaModelSpec
    d_list: tuple[int, ...]
    n_list: tuple[int, ...]
    replications: int = 100
    margins_mode: str = "known"
    trunc: int | None = None
    base_seed: int = 0
    nu: float = 4.0
    study_id: str = ""

    def __post_init__(self) -> None:
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}, got {self.structure!r}")
        FamilyTag(self.family)
        if self.margins_mode not in ("known", "empirical"):
            raise ValueError(f"margins_mode must be known or empirical")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        object.__setattr__(self, "d_list", tuple(int(d) for d in self.d_list))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if not self.study_id:
            token = theta_model_token(self.theta_model)
            trunc = "full" if self.trunc is None else f"t{self.trunc}"
            object.__setattr__(
                self,
                "study_id",
                f"{self.structure}-{self.family}-{token}-{self.margins_mode}-{trunc}",
            )


@dataclass(frozen=True)
class StudyRow:
    """One replication's outcome; mirrors one CSV row.

    ``theta_hat``/``theta_star`` are kept only when requested; they never
    reach the CSV.
    """

    study_id: str
    structure: str
    family: str
    theta_model: str
    margins_mode: str
    trunc: int
    d: int
    n: int
    rep: int
    seed: int
    maxnorm_stat: float
    sum_stat: float
    nonconverged: int
    wall_ms: float = field(compare=False)
    theta_hat: np.ndarray | None = field(default=None, compare=False)
    theta_star: np.ndarray | None = field(default=None, compare=False)


def cell_seed(base_seed: int, d: int, n: int, rep: int) -> int:
    """Stable 32-bit seed for one grid cell."""
    ss = np.random.SeedSequence((int(base_seed), int(d), int(n), int(rep)))
    return int(ss.generate_state(1)[0])


@lru_cache(maxsize=32)
def _structure_for(kind: str, d: int, trunc: int | None) -> RVineStructure:
    builder = build_cvine if kind == "cvine" else build_dvine
    return builder(d, trunc=trunc)


def maxnorm_stat(theta_hat, theta_star, n: int, d: int) -> float:
    """sqrt(n / ln d) * max |theta_hat - theta_star|."""
    err = float(np.max(np.abs(np.asarray(theta_hat) - np.asarray(theta_star))))
    return math.sqrt(n / math.log(d)) * err

def sum_stat(theta_hat, theta_star, n: int, d: int) -> float:
    """(sqrt(n) / d) * sum_k (theta_hat_k - theta_star_k)."""
    tot = float(np.sum(np.asarray(theta_hat) - np.asarray(theta_star)))
    return math.sqrt(n) / d * tot


def run_cell(
    config: StudyConfig, d: int, n: int, rep: int, keep_theta: bool = False
) -> StudyRow:
    """Simulate, fit, and score a single (d, n, rep) cell."""
    structure = _structure_for(config.structure, d, config.trunc)
    model = from_theta_model(structure, config.family, config.theta_model, nu=config.nu)
    theta_star = model.theta
    seed = cell_seed(config.base_seed, d, n, rep)
    t0 = time.perf_counter()
    try:
        U = simulate(model, n, seed)
        if config.margins_mode == "empirical":
            X = ndtri(U)  # standard-normal margins on the data scale
            fit_input = pseudo_obs(X).U_hat
        else:
            fit_input = U
        fres = stepwise_fit(config.family, structure, fit_input, config.margins_mode)
        mx = maxnorm_stat(fres.theta_hat, theta_star, n, d)
        sm = sum_stat(fres.theta_hat, theta_star, n, d)
        nonconv = fres.n_nonconverged
        theta_hat = fres.theta_hat if keep_theta else None
    except Exception:
        # Record the failure; a study grid never aborts on one bad cell.
        mx = float("nan")
        sm = float("nan")
        nonconv = -1
        theta_hat = None
    wall_ms = (time.perf_counter() - t0) * 1000.0
    return StudyRow(
        study_id=config.study_id,
        structure=config.structure,
        family=config.family,
        theta_model=theta_model_token(config.theta_model),
        margins_mode=config.margins_mode,
        trunc=structure.trunc,
        d=d,
        n=n,
        rep=rep,
        seed=seed,
        maxnorm_stat=mx,
        sum_stat=sm,
        nonconverged=nonconv,
        wall_ms=wall_ms,
        theta_hat=theta_hat,
        theta_star=theta_star if keep_theta else None,
    )


def _run_cell_star(args) -> StudyRow:
    return run_cell(*args)


def run_study(
    config: StudyConfig, threads: int = 1, keep_theta: bool = False
) -> list[StudyRow]:
    """Run the full grid; rows ordered by (d, n, rep) regardless of threads."""
    cells = [
        (config, d, n, rep)
        for d in config.d_list
        for n in config.n_list
        for rep in range(config.replications)
    ]
    if threads > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_cell_star, [c + (keep_theta,) for c in cells]))
    else:
        rows = [run_cell(*c, keep_theta=keep_theta) for c in cells]
    rows.sort(key=lambda r: (r.d, r.n, r.rep))
    return rows


# ---------------------------------------------------------------------------
# Growth regimes and log-scale interpolation.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegimeSpec:
    """A prescribed sample-size map d -> n."""

    name: str
    student_t: bool = False

    def n_for(self, d: int) -> int:
        return regime_n(self.name, d, student_t=self.student_t)


def regime_n(name: str, d: int, student_t: bool = False) -> int:
    """Sample size of a growth regime, rounded to an integer, floor 50."""
    if name == "linear":
        raw = 25.0 * d
    elif name == "quadratic":
        raw = 0.125 * d * d
    elif name == "cubic":
        if student_t:
            raw = 0.005 * d**3
        elif d > 50:
            raw = 0.003 * (d - 50) ** 3
        else:
            raise ValueError(f"cubic regime needs d > 50, got {d}")
    else:
        raise ValueError(f"unknown regime {name!r}")
    return max(50, int(round(raw)))


def interp_error(points, n_target: int) -> float:
    """Log-scale interpolation of mean errors across sample sizes.

    ``points`` holds (n, error) pairs at one dimension.  A target inside
    the n range interpolates between the bracketing pair; outside, a line
    through the two nearest pairs extrapolates.  Exact support hits
    return the stored value unchanged.
    """
    pts = sorted((int(n), float(e)) for n, e in points)
    if len(pts) < 2:
        raise ValueError("interpolation needs at least 2 support points")
    for n, e in pts:
        if n == n_target:
            return e
    ns = [n for n, _ in pts]
    if n_target < ns[0]:
        (n1, e1), (n2, e2) = pts[0], pts[1]
    elif n_target > ns[-1]:
        (n1, e1), (n2, e2) = pts[-2], pts[-1]
    else:
        idx = next(i for i in range(len(ns) - 1) if ns[i] < n_target < ns[i + 1])
        (n1, e1), (n2, e2) = pts[idx], pts[idx + 1]
    le1 = math.log(max(e1, 1e-300))
    le2 = math.log(max(e2, 1e-300))
    slope = (le2 - le1) / (math.log(n2) - math.log(n1))
    return math.exp(le1 + slope * (math.log(n_target) - math.log(n1)))


@dataclass(frozen=True)
class RegimeCurveRow:
    regime: str
    d: int
    n_target: int
    mean_maxnorm_interp: float


def _raw_maxnorm(row: StudyRow) -> float:
    """Invert the normalization to recover max |theta_hat - theta_star|."""
    return row.maxnorm_stat / math.sqrt(row.n / math.log(row.d))


def build_regime_curves(
    rows: list[StudyRow],
    regimes: list[RegimeSpec],
) -> list[RegimeCurveRow]:
    """Interpolate mean raw max-norm errors onto regime sample sizes.

    NaN rows (hard failures) are excluded from the means; the cubic
    regime only reports d >= CUBIC_REPORT_MIN_D.
    """
    by_dn: dict[tuple[int, int], list[float]] = {}
    for r in rows:
        if math.isnan(r.maxnorm_stat):
            continue
        by_dn.setdefault((r.d, r.n), []).append(_raw_maxnorm(r))
    by_d: dict[int, list[tuple[int, float]]] = {}
    for (d, n), errs in sorted(by_dn.items()):
        by_d.setdefault(d, []).append((n, sum(errs) / len(errs)))
    out = []
    for spec in regimes:
        for d, pts in sorted(by_d.items()):
            if spec.name == "cubic":
                if not spec.student_t and d <= 50:
                    continue
                if d < CUBIC_REPORT_MIN_D:
                    continue
            if len(pts) < 2:
                continue
            n_target = spec.n_for(d)
            out.append(
                RegimeCurveRow(
                    regime=spec.name,
                    d=d,
                    n_target=n_target,
                    mean_maxnorm_interp=interp_error(pts, n_target),
                )
            )
    return out


# ---------------------------------------------------------------------------
# CSV persistence (17 significant digits, lossless double round-trip).
# ---------------------------------------------------------------------------


def format_study_row(r: StudyRow) -> str:
    return (
        f"{r.study_id},{r.structure},{r.family},{r.theta_model},{r.margins_mode},"
        f"{r.trunc},{r.d},{r.n},{r.rep},{r.seed},"
        f"{r.maxnorm_stat:.17g},{r.sum_stat:.17g},{r.nonconverged},{r.wall_ms:.17g}"
    )


def write_study_csv(rows: list[StudyRow], path) -> None:
    with open(path, "w") as fh:
        fh.write(STUDY_CSV_HEADER + "\n")
        for r in rows:
            fh.write(format_study_row(r) + "\n")


def read_study_csv(path) -> list[StudyRow]:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != STUDY_CSV_HEADER:
            raise ValueError(f"unexpected study CSV header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            f = line.split(",")
            rows.append(
                StudyRow(
                    study_id=f[0],
                    structure=f[1],
                    family=f[2],
                    theta_model=f[3],
                    margins_mode=f[4],
                    trunc=int(f[5]),
                    d=int(f[6]),
                    n=int(f[7]),
                    rep=int(f[8]),
                    seed=int(f[9]),
                    maxnorm_stat=float(f[10]),
                    sum_stat=float(f[11]),
                    nonconverged=int(f[12]),
                    wall_ms=float(f[13]),
                )
            )
    return rows


def write_regime_csv(rows: list[RegimeCurveRow], path) -> None:
    with open(path, "w") as fh:
        fh.write(REGIME_CSV_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r.regime},{r.d},{r.n_target},{r.mean_maxnorm_interp:.17g}\n"
            )
