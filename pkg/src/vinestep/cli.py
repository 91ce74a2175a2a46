"""Command-line interface.

Subcommands: ``simulate``, ``fit``, ``study``, ``validate-a3``,
``validate-mndn``, ``regimes``.  Every subcommand reads an optional JSON
config file; explicitly-passed flags override config values, and the
effective configuration is echoed to ``<out>.meta.json`` for provenance.

Exit codes: 0 success, 1 numerical failure, 2 bad flags or config.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from vinestep.estimate import pseudo_obs, save_fit_result, stepwise_fit
from vinestep.paircop import FamilyTag
from vinestep.simstudy import (
    REGIME_CSV_HEADER,
    RegimeSpec,
    StudyConfig,
    build_regime_curves,
    parse_theta_model,
    read_study_csv,
    run_study,
    theta_model_token,
    write_regime_csv,
    write_study_csv,
)
from vinestep.validate import (
    AlphaSeq,
    DEFAULT_EPS,
    DEFAULT_K_A3,
    DEFAULT_K_MN,
    default_a3_rows,
    default_mn_rows,
    estimate_a3,
    estimate_dn,
    estimate_mn,
)
from vinestep.vinemodel import ThetaModelSpec, from_theta_model, simulate
from vinestep.vinestruct import build_cvine, build_dvine

VALIDATE_CSV_HEADER = "d,p,theta_model,alpha_rule,eps,K,N,seed,a3_hat,mn2_hat,dn_hat"


class CliConfigError(Exception):
    """Configuration problem: wrong keys, values, or file contents."""


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as e:
        raise CliConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise CliConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise CliConfigError(f"config {path} must hold a JSON object")
    return obj


def _merge(config: dict, allowed: set[str], **flags) -> dict:
    unknown = set(config) - allowed
    if unknown:
        raise CliConfigError(f"unknown config keys: {sorted(unknown)}")
    eff = dict(config)
    for key, val in flags.items():
        if val is not None:
            eff[key] = val
    return eff


def _require(eff: dict, *keys: str) -> None:
    missing = [k for k in keys if eff.get(k) is None]
    if missing:
        raise CliConfigError(f"missing required settings: {missing}")


def _write_sidecar(out: str, subcommand: str, eff: dict) -> None:
    meta = {"subcommand": subcommand}
    meta.update(eff)
    with open(out + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, default=str)


def _int_list(raw) -> tuple[int, ...]:
    if isinstance(raw, (list, tuple)):
        return tuple(int(x) for x in raw)
    return tuple(int(tok) for tok in str(raw).split(",") if tok.strip())


def _build_structure(kind: str, d: int, trunc):
    if kind == "cvine":
        return build_cvine(d, trunc=trunc)
    if kind == "dvine":
        return build_dvine(d, trunc=trunc)
    raise CliConfigError(f"structure must be cvine or dvine, got {kind!r}")


def _theta_model(eff: dict) -> ThetaModelSpec:
    tm = eff.get("theta_model", "harmonic")
    if isinstance(tm, dict):
        spec = ThetaModelSpec(tm["name"], float(tm.get("scale", 1.0)))
    else:
        spec = parse_theta_model(str(tm))
    if eff.get("theta_scale") is not None:
        spec = ThetaModelSpec(spec.name, float(eff["theta_scale"]))
    return spec


def _alpha(eff: dict) -> AlphaSeq:
    raw = eff.get("alpha", "constant-1")
    if isinstance(raw, dict):
        return AlphaSeq(raw["rule"], tuple(raw["table"]) if raw.get("table") else None)
    raw = str(raw)
    if raw.startswith("custom:"):
        table = tuple(float(x) for x in raw[len("custom:") :].split(",") if x.strip())
        return AlphaSeq("custom", table)
    return AlphaSeq(raw)


def _resolve_threads(flag) -> int:
    if flag is not None:
        return max(1, int(flag))
    env = os.environ.get("VINESTEP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _read_matrix_csv(path: str) -> np.ndarray:
    try:
        with open(path) as fh:
            first = fh.readline()
    except OSError as e:
        raise CliConfigError(f"cannot read {path}: {e}") from e
    try:
        float(first.split(",")[0])
        skip = 0
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    if data.shape[0] == 0 or data.shape[1] < 2:
        raise CliConfigError(f"{path} holds no usable matrix")
    return data


def _write_matrix_csv(path: str, U: np.ndarray) -> None:
    d = U.shape[1]
    with open(path, "w") as fh:
        fh.write(",".join(f"u{j}" for j in range(1, d + 1)) + "\n")
        for row in U:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


# ---------------------------------------------------------------------------
# Subcommand handlers.
# ---------------------------------------------------------------------------

_SIM_KEYS = {
    "structure", "family", "theta_model", "theta_scale", "d", "trunc", "nu",
    "n", "seed",
}


def _cmd_simulate(args) -> int:
    eff = _merge(
        _load_config(args.config),
        _SIM_KEYS,
        structure=args.structure,
        family=args.family,
        theta_model=args.theta_model,
        theta_scale=args.theta_scale,
        d=args.d,
        trunc=args.trunc,
        nu=args.nu,
        n=args.n,
        seed=args.seed,
    )
    _require(eff, "structure", "family", "d", "n")
    try:
        structure = _build_structure(eff["structure"], int(eff["d"]), eff.get("trunc"))
        model = from_theta_model(
            structure, FamilyTag(eff["family"]), _theta_model(eff),
            nu=float(eff.get("nu", 4.0)),
        )
    except ValueError as e:
        raise CliConfigError(str(e)) from e
    seed = int(eff.get("seed", 0))
    U = simulate(model, int(eff["n"]), seed)
    _write_matrix_csv(args.out, U)
    eff["seed"] = seed
    eff["theta_model"] = theta_model_token(_theta_model(eff))
    _write_sidecar(args.out, "simulate", eff)
    return 0


_FIT_KEYS = {"structure", "family", "trunc", "margins", "in"}


def _cmd_fit(args) -> int:
    eff = _merge(
        _load_config(args.config),
        _FIT_KEYS,
        structure=args.structure,
        family=args.family,
        trunc=args.trunc,
        margins=args.margins,
        **{"in": args.infile},
    )
    _require(eff, "structure", "family", "in")
    margins = eff.get("margins", "known")
    if margins not in ("known", "empirical"):
        raise CliConfigError(f"margins must be known or empirical, got {margins!r}")
    data = _read_matrix_csv(eff["in"])
    d = data.shape[1]
    try:
        structure = _build_structure(eff["structure"], d, eff.get("trunc"))
        family = FamilyTag(eff["family"])
    except ValueError as e:
        raise CliConfigError(str(e)) from e
    U = pseudo_obs(data).U_hat if margins == "empirical" else data
    fres = stepwise_fit(family, structure, U, margins_mode=margins)
    save_fit_result(fres, args.out)
    _write_sidecar(args.out, "fit", dict(eff, d=d))
    return 0


_STUDY_KEYS = {
    "structure", "family", "theta_model", "theta_scale", "d_list", "n_list",
    "replications", "margins_mode", "trunc", "base_seed", "nu", "study_id",
}


def _cmd_study(args) -> int:
    eff = _merge(
        _load_config(args.config),
        _STUDY_KEYS,
        structure=args.structure,
        family=args.family,
        theta_model=args.theta_model,
        theta_scale=args.theta_scale,
        d_list=args.d,
        n_list=args.n,
        replications=args.reps,
        margins_mode=args.margins,
        trunc=args.trunc,
        base_seed=args.base_seed,
        nu=args.nu,
        study_id=args.study_id,
    )
    _require(eff, "structure", "family", "d_list", "n_list")
    try:
        config = StudyConfig(
            structure=str(eff["structure"]),
            family=str(eff["family"]),
            theta_model=_theta_model(eff),
            d_list=_int_list(eff["d_list"]),
            n_list=_int_list(eff["n_list"]),
            replications=int(eff.get("replications", 100)),
            margins_mode=str(eff.get("margins_mode", "known")),
            trunc=None if eff.get("trunc") is None else int(eff["trunc"]),
            base_seed=int(eff.get("base_seed", 0)),
            nu=float(eff.get("nu", 4.0)),
            study_id=str(eff.get("study_id", "")),
        )
    except ValueError as e:
        raise CliConfigError(str(e)) from e
    rows = run_study(config, threads=_resolve_threads(args.threads))
    write_study_csv(rows, args.out)
    eff["theta_model"] = theta_model_token(config.theta_model)
    eff["study_id"] = config.study_id
    _write_sidecar(args.out, "study", eff)
    return 0


_VALIDATE_KEYS = {
    "structure", "family", "theta_model", "theta_scale", "d_list", "trunc",
    "nu", "eps", "K", "N", "alpha", "seed",
}


def _validate_common(args, need_gaussian: bool):
    eff = _merge(
        _load_config(args.config),
        _VALIDATE_KEYS,
        structure=args.structure,
        family=args.family,
        theta_model=args.theta_model,
        theta_scale=args.theta_scale,
        d_list=args.d,
        trunc=args.trunc,
        nu=args.nu,
        eps=args.eps,
        K=args.K,
        N=args.N,
        alpha=args.alpha,
        seed=args.seed,
    )
    _require(eff, "structure", "family", "d_list")
    family = FamilyTag(eff.get("family", "gaussian"))
    if need_gaussian and family is not FamilyTag.GAUSSIAN:
        raise CliConfigError(
            f"this diagnostic needs the gaussian family, got {family.value}"
        )
    tm = _theta_model(eff)
    alpha = _alpha(eff)
    eff["theta_model"] = theta_model_token(tm)
    return eff, family, tm, alpha


def _validate_row(d, p, tm, alpha, eps, K, N, seed, a3, mn2, dn) -> str:
    def f(x):
        return "" if x is None else f"{x:.17g}"

    return (
        f"{d},{p},{theta_model_token(tm)},{alpha.rule},{eps:.17g},{K},{N},"
        f"{seed},{f(a3)},{f(mn2)},{f(dn)}"
    )


def _cmd_validate(args, kind: str) -> int:
    eff, family, tm, alpha = _validate_common(args, need_gaussian=(kind == "mndn"))
    eps = float(eff.get("eps", DEFAULT_EPS))
    K = int(eff.get("K", DEFAULT_K_A3 if kind == "a3" else DEFAULT_K_MN))
    base_seed = int(eff.get("seed", 0))
    lines = [VALIDATE_CSV_HEADER]
    for d in _int_list(eff["d_list"]):
        try:
            structure = _build_structure(eff["structure"], d, eff.get("trunc"))
            model = from_theta_model(structure, family, tm, nu=float(eff.get("nu", 4.0)))
        except ValueError as e:
            raise CliConfigError(str(e)) from e
        n_default = default_a3_rows(d) if kind == "a3" else default_mn_rows(d)
        N = int(eff["N"]) if eff.get("N") is not None else n_default
        seed = int(np.random.SeedSequence((base_seed, d)).generate_state(1)[0])
        if kind == "a3":
            a3 = estimate_a3(model, eps=eps, alpha=alpha, K=K, N=N, seed=seed)
            lines.append(_validate_row(d, model.p, tm, alpha, eps, K, N, seed, a3, None, None))
        else:
            mn2 = estimate_mn(model, eps=eps, alpha=alpha, K=K, N=N, seed=seed)
            dn = estimate_dn(model, eps=eps, alpha=alpha, K=K, N=N, seed=seed)
            lines.append(_validate_row(d, model.p, tm, alpha, eps, K, N, seed, None, mn2, dn))
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    eff["seed"] = base_seed
    _write_sidecar(args.out, f"validate-{kind}", eff)
    return 0


_REGIME_KEYS = {"in", "regimes", "student_t"}


def _cmd_regimes(args) -> int:
    eff = _merge(
        _load_config(args.config),
        _REGIME_KEYS,
        regimes=args.regimes,
        student_t=args.student_t or None,
        **{"in": args.infile},
    )
    _require(eff, "in", "regimes")
    names = [tok.strip() for tok in str(eff["regimes"]).split(",") if tok.strip()]
    for name in names:
        if name not in ("linear", "quadratic", "cubic"):
            raise CliConfigError(f"unknown regime {name!r}")
    student_t = bool(eff.get("student_t", False))
    try:
        rows = read_study_csv(eff["in"])
    except (OSError, ValueError) as e:
        raise CliConfigError(str(e)) from e
    curves = build_regime_curves(rows, [RegimeSpec(n, student_t) for n in names])
    write_regime_csv(curves, args.out)
    _write_sidecar(args.out, "regimes", eff)
    return 0


# ---------------------------------------------------------------------------
# Parser.
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vinestep",
        description="Vine-copula stepwise estimation: simulation, fitting, "
        "diagnostics, and growth-regime studies.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", required=True, help="output file path")

    p = sub.add_parser("simulate", help="draw a sample and write it as CSV")
    common(p)
    p.add_argument("--structure", choices=("cvine", "dvine"))
    p.add_argument("--family", choices=[f.value for f in FamilyTag])
    p.add_argument("--theta-model", dest="theta_model")
    p.add_argument("--theta-scale", dest="theta_scale", type=float)
    p.add_argument("--d", type=int)
    p.add_argument("--trunc", type=int)
    p.add_argument("--nu", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="stepwise-fit a vine to a CSV sample")
    common(p)
    p.add_argument("--in", dest="infile", help="input sample CSV")
    p.add_argument("--structure", choices=("cvine", "dvine"))
    p.add_argument("--family", choices=[f.value for f in FamilyTag])
    p.add_argument("--trunc", type=int)
    p.add_argument("--margins", choices=("known", "empirical"))
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("study", help="run a (d, n, rep) study grid")
    common(p)
    p.add_argument("--structure", choices=("cvine", "dvine"))
    p.add_argument("--family", choices=[f.value for f in FamilyTag])
    p.add_argument("--theta-model", dest="theta_model")
    p.add_argument("--theta-scale", dest="theta_scale", type=float)
    p.add_argument("--d", help="comma-separated dimensions")
    p.add_argument("--n", help="comma-separated sample sizes")
    p.add_argument("--reps", type=int)
    p.add_argument("--margins", choices=("known", "empirical"))
    p.add_argument("--trunc", type=int)
    p.add_argument("--base-seed", dest="base_seed", type=int)
    p.add_argument("--nu", type=float)
    p.add_argument("--study-id", dest="study_id")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=_cmd_study)

    for kind in ("a3", "mndn"):
        p = sub.add_parser(
            f"validate-{kind}",
            help="estimate the "
            + ("curvature diagnostic" if kind == "a3" else "growth diagnostics"),
        )
        common(p)
        p.add_argument("--structure", choices=("cvine", "dvine"))
        p.add_argument("--family", choices=[f.value for f in FamilyTag])
        p.add_argument("--theta-model", dest="theta_model")
        p.add_argument("--theta-scale", dest="theta_scale", type=float)
        p.add_argument("--d", help="comma-separated dimensions")
        p.add_argument("--trunc", type=int)
        p.add_argument("--nu", type=float)
        p.add_argument("--eps", type=float)
        p.add_argument("--K", type=int)
        p.add_argument("--N", type=int)
        p.add_argument("--alpha", help="constant-1 | linear-in-tree | custom:w1,w2,...")
        p.add_argument("--seed", type=int)
        p.set_defaults(func=lambda a, _k=kind: _cmd_validate(a, _k))

    p = sub.add_parser("regimes", help="interpolate study errors onto regime curves")
    common(p)
    p.add_argument("--in", dest="infile", help="study rows CSV")
    p.add_argument("--regimes", help="comma-separated: linear,quadratic,cubic")
    p.add_argument("--student-t", dest="student_t", action="store_true")
    p.set_defaults(func=_cmd_regimes)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    try:
        return args.func(args)
    except CliConfigError as e:
        print(f"vinestep: config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # numerics, I/O mid-run
        print(f"vinestep: failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
