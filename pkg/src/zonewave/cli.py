"""Command-line interface.

Exit codes: 0 on success or PASS, 1 on a verification FAIL, 2 on a usage,
configuration or numerical-setup error. Reports are deterministic: they
embed the resolved configuration, the seed and the library version, and
never a timestamp.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coeffs import FAMILIES, ModelError, load_model, mu_integral, sigma_integral
from .diag import PeanoBakerError, ZoneConstantError, diagonalize, reconstruct_hyp
from .io import MAT2_COLUMNS, GridSpecError, csv_text, dumps, mat2_row, parse_grid, parse_vector, write_csv, write_json
from .mat2 import norm
from .propagator import IntegrationError, SolveConfig, solve_E, solve_E_free
from .stabilize import StabilizationError, assumption_report
from .verify import ZoneViolation, mode_limit, theorem1_decay, theorem2_sharpness
from .zones import ZoneError, boundaries

__all__ = ["main", "run", "golden_battery", "compare_golden"]

USAGE_ERRORS = (
    ModelError,
    GridSpecError,
    ZoneError,
    ZoneViolation,
    ZoneConstantError,
    PeanoBakerError,
    IntegrationError,
    StabilizationError,
    ValueError,
    OSError,
)


class CommandError(Exception):
    pass


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _solve_cfg(args) -> SolveConfig:
    return SolveConfig(rtol=args.rtol, atol=args.atol)


def _envelope(args, model, **resolved) -> dict:
    cfg = {
        "zonewave_version": __version__,
        "command": args.command,
        "model_path": str(args.model) if getattr(args, "model", None) else None,
        "model": model.to_config() if model is not None else None,
        "seed": args.seed,
        "tolerances": {"rtol": args.rtol, "atol": args.atol},
    }
    cfg.update(resolved)
    return cfg


def _emit(args, report: dict, curves: dict | None = None) -> None:
    """Write ``<command>.json`` (and CSV curves) under ``--out``, else print JSON."""
    if args.out is None:
        sys.stdout.write(dumps(report))
        return
    out = Path(args.out)
    stem = args.command.replace("-", "_")
    path = write_json(out / f"{stem}.json", report)
    print(f"wrote {path}")
    for name, (header, rows) in (curves or {}).items():
        print(f"wrote {write_csv(out / f'{stem}_{name}.csv', header, rows)}")


def _curve_rows(rep) -> dict:
    return {
        name: (["t", "value"], [(float(a), float(b)) for a, b in zip(c["t"], c["value"])])
        for name, c in rep.curves.items()
    }


def _verdict(passed: bool) -> int:
    return 0 if passed else 1


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_examples(args) -> int:
    for info in FAMILIES.values():
        defaults = ", ".join(f"{k}={v}" for k, v in info.defaults.items()) or "none"
        print(f"{info.name}  {info.description}")
        print(f"      parameters: {info.ranges}; defaults: {defaults}")
    return 0


def cmd_check(args) -> int:
    model = load_model(args.model)
    res = assumption_report(model, args.horizon)
    checks = {k: v.to_dict() for k, v in res["checks"].items()}
    st = res["stabilization"]
    passed = all(c["passed"] for c in checks.values())
    report = {
        "config": _envelope(args, model, horizon=args.horizon),
        "passed": passed,
        "omega_inf": res["omega"].value,
        "zero_mean_sup": st.zero_mean_sup,
        "pass_flags": {k: {"passed": c["passed"], "threshold": c["threshold"]} for k, c in checks.items()},
        "checks": checks,
        "ratio_curve": {"t": st.t, "value": st.ratio_curve},
    }
    _emit(args, report, {"ratio_curve": (["t", "value"], list(zip(st.t.tolist(), st.ratio_curve.tolist())))})
    if args.out is not None:
        for k, c in checks.items():
            print(f"{k}: {'PASS' if c['passed'] else 'FAIL'} (constant {c['constant']:.6g})")
    return _verdict(passed)


def cmd_zones(args) -> int:
    model = load_model(args.model)
    xis = parse_grid(args.xi_grid, name="--xi-grid")
    rows = []
    for xi in xis:
        zb = boundaries(model, xi, args.N)
        rows.append((float(xi), zb.t1, zb.t2))
    if args.out is None:
        sys.stdout.write(csv_text(["xi", "t1", "t2"], rows))
    else:
        print(f"wrote {write_csv(Path(args.out) / 'zones.csv', ['xi', 't1', 't2'], rows)}")
    return 0


def _liouville_residual(model, xi, s, t, E, kind) -> float:
    if kind == "free":
        return abs(np.linalg.det(E) - 1.0)
    int2b = mu_integral(model, t) - mu_integral(model, s)
    if kind == "full":
        int2b += sigma_integral(model, t) - sigma_integral(model, s)
    return abs(np.linalg.det(E) * math.exp(int2b) - 1.0)


def cmd_solve(args) -> int:
    model = load_model(args.model)
    if args.sigma_off:
        model = model.without_sigma()
    cfg = _solve_cfg(args)
    kind = "free" if args.free else "full"
    if args.free:
        E = solve_E_free(model, args.xi, args.s, args.t, cfg)
    else:
        E = solve_E(model, args.xi, args.s, args.t, cfg)
    report = {
        "config": _envelope(args, model, xi=args.xi, s=args.s, t=args.t, kind=kind),
        "E": np.asarray(E).tolist(),
        "norm": float(norm(E)),
        "det": complex(np.linalg.det(E)),
        "det_residual": float(_liouville_residual(model, args.xi, args.s, args.t, E, kind)),
    }
    _emit(args, report, {"E": (MAT2_COLUMNS, [mat2_row(E)])})
    return 0


def cmd_diagonalize(args) -> int:
    model = load_model(args.model)
    zb = boundaries(model, args.xi)
    s = max(zb.t2, 1.0) if args.s == "auto" else float(args.s)
    if args.t < s:
        raise CommandError(f"--t {args.t:g} lies before s = {s:g}")
    if s < zb.t2:
        raise CommandError(f"s = {s:g} lies before the hyperbolic zone (t2 = {zb.t2:.6g})")
    times = np.array([s, args.t])
    if args.samples:
        rng = np.random.default_rng(args.seed)
        times = np.concatenate([times, np.exp(rng.uniform(math.log(s), math.log(args.t), args.samples))])
    times = np.sort(times)
    stages, _ = diagonalize(model, args.xi, times)
    stage_rows = []
    for st in stages:
        delta = st.delta.value
        stage_rows.append(
            {
                "k": st.k,
                "max_abs_tau_plus": float(np.max(np.abs(st.tau_plus.value))),
                "max_abs_tau_minus": float(np.max(np.abs(st.tau_minus.value))),
                "max_abs_r12": float(np.max(np.abs(st.r12.value))),
                "max_abs_r21": float(np.max(np.abs(st.r21.value))),
                "max_d": float(np.max(np.abs(st.d.value))),
                "delta_imag_ratio": float(np.max(np.abs(delta.imag) / np.abs(delta))),
                "diagnostics": st.diagnostics,
            }
        )
    cfg = _solve_cfg(args)
    E_rec = reconstruct_hyp(model, args.xi, s, args.t)
    E_ref = solve_E(model, args.xi, s, args.t, cfg)
    rel = float(norm(E_rec - E_ref) / norm(E_ref))
    report = {
        "config": _envelope(args, model, xi=args.xi, s=s, t=args.t, samples=args.samples),
        "zone": zb.to_dict(),
        "stages": stage_rows,
        "E_reconstructed": E_rec.tolist(),
        "E_integrated": E_ref.tolist(),
        "relative_difference": rel,
    }
    _emit(args, report, {"E": (["source"] + MAT2_COLUMNS, [["reconstructed"] + mat2_row(E_rec), ["integrated"] + mat2_row(E_ref)])})
    return 0


def cmd_verify_decay(args) -> int:
    model = load_model(args.model)
    if args.sigma_off:
        model = model.without_sigma()
    t = parse_grid(args.t_grid, name="--t-grid")
    xis = parse_grid(args.xi_grid, name="--xi-grid") if args.xi_grid else None
    rep = theorem1_decay(model, xis, t, threshold=args.threshold, weighted=not args.unweighted, cfg=_solve_cfg(args))
    report = {
        "config": _envelope(args, model, t_grid=args.t_grid, xi_grid=args.xi_grid, unweighted=args.unweighted),
        **rep.to_dict(),
    }
    _emit(args, report, _curve_rows(rep))
    return _verdict(rep.passed)


def cmd_verify_sharpness(args) -> int:
    model = load_model(args.model)
    V0 = parse_vector(args.v0, name="--v0")
    if V0.size != 2:
        raise CommandError(f"--v0 needs two components, got {V0.size}")
    t = parse_grid(args.t_grid, name="--t-grid")
    rep = theorem2_sharpness(model, args.xi, V0, t, threshold=args.threshold, cfg=_solve_cfg(args))
    report = {"config": _envelope(args, model, xi=args.xi, v0=args.v0, t_grid=args.t_grid), **rep.to_dict()}
    _emit(args, report, _curve_rows(rep))
    return _verdict(rep.passed)


def cmd_mode_limit(args) -> int:
    model = load_model(args.model)
    T = parse_grid(args.t_schedule, name="--t-schedule") if args.t_schedule else None
    ml = mode_limit(model, args.xi, T, cutoff=args.cutoff, cfg=_solve_cfg(args))
    report = {
        "config": _envelope(args, model, xi=args.xi, t_schedule=ml.T, cutoff=args.cutoff),
        **ml.report.to_dict(),
        "W_samples": ml.W_samples,
        "cauchy_residuals": ml.cauchy_residuals,
        "decay_factors": ml.decay_factors,
        "det_band": ml.det_band,
    }
    curves = _curve_rows(ml.report)
    curves["W"] = (["T"] + MAT2_COLUMNS, [[float(T_)] + mat2_row(W) for T_, W in zip(ml.T, ml.W_samples)])
    _emit(args, report, curves)
    return _verdict(ml.passed)


# ---------------------------------------------------------------------------
# golden-file regression
# ---------------------------------------------------------------------------


def golden_battery(model, seed: int = 0, cfg: SolveConfig | None = None) -> dict:
    """A fast, deterministic set of numbers used for regression files."""
    rng = np.random.default_rng(seed)
    xis = np.sort(10.0 ** rng.uniform(-2.0, 1.0, 4))
    out = {"zones": [], "solve": [], "hyperbolic": []}
    for xi in xis:
        zb = boundaries(model, xi)
        out["zones"].append({"xi": float(xi), "t1": zb.t1, "t2": zb.t2})
    for xi in (0.5, 1.0):
        for t in (1.0, 10.0, 100.0):
            E = solve_E(model, xi, 0.0, t, cfg)
            out["solve"].append({"xi": xi, "t": t, "E": mat2_row(E)})
    zb = boundaries(model, 1.0)
    s = max(zb.t2, 1.0)
    E = reconstruct_hyp(model, 1.0, s, 10.0 * s)
    out["hyperbolic"].append({"xi": 1.0, "s": s, "t": 10.0 * s, "E": mat2_row(E)})
    return out


def compare_golden(new, old, rtol: float = 1e-7, atol: float = 1e-12, path: str = "") -> list[str]:
    """Paths at which two batteries differ beyond tolerance."""
    diffs = []
    if isinstance(old, dict) and isinstance(new, dict):
        for k in sorted(set(old) | set(new)):
            if k not in old or k not in new:
                diffs.append(f"{path}/{k}: missing on one side")
            else:
                diffs += compare_golden(new[k], old[k], rtol, atol, f"{path}/{k}")
    elif isinstance(old, list) and isinstance(new, list):
        if len(old) != len(new):
            diffs.append(f"{path}: length {len(new)} != {len(old)}")
        else:
            for i, (a, b) in enumerate(zip(new, old)):
                diffs += compare_golden(a, b, rtol, atol, f"{path}[{i}]")
    elif isinstance(old, (int, float)) and isinstance(new, (int, float)):
        if not abs(new - old) <= atol + rtol * abs(old):
            diffs.append(f"{path}: {new!r} != {old!r}")
    elif new != old:
        diffs.append(f"{path}: {new!r} != {old!r}")
    return diffs


def cmd_report(args) -> int:
    import json

    model = load_model(args.model)
    battery = golden_battery(model, args.seed, _solve_cfg(args))
    report = {"config": _envelope(args, model), "battery": battery}
    golden = Path(args.golden)
    if args.update or not golden.exists():
        if not args.update:
            raise CommandError(f"golden file {golden} does not exist; rerun with --update to create it")
        write_json(golden, report)
        print(f"wrote {golden}")
        return 0
    try:
        old = json.loads(golden.read_text())
    except json.JSONDecodeError as exc:
        raise CommandError(f"malformed golden file {golden}: {exc.msg}") from None
    fresh = json.loads(dumps(report))
    diffs = compare_golden(fresh["battery"], old.get("battery", {}), rtol=args.golden_rtol)
    if old.get("config", {}).get("model") != fresh["config"]["model"]:
        diffs.insert(0, "/config/model: model configuration differs from the golden file")
    for d in diffs[:20]:
        print(f"MISMATCH {d}")
    print(f"golden comparison: {'PASS' if not diffs else 'FAIL'} ({len(diffs)} mismatches)")
    return _verdict(not diffs)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory for JSON and CSV (default: JSON to stdout)")
    common.add_argument("--seed", type=int, default=0, help="seed for sampled points (recorded in every report)")
    common.add_argument("--rtol", type=float, default=1e-10, help="integrator relative tolerance")
    common.add_argument("--atol", type=float, default=1e-12, help="integrator absolute tolerance")

    p = argparse.ArgumentParser(prog="zonewave", description="Zone-wise analysis of damped wave propagators.")
    p.add_argument("--version", action="version", version=f"zonewave {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("examples", parents=[common], help="list the built-in coefficient families")
    s.set_defaults(func=cmd_examples)

    s = sub.add_parser("check", parents=[common], help="numerical verdicts on assumptions (1) to (5)")
    s.add_argument("model")
    s.add_argument("--horizon", type=float, default=1e6)
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("zones", parents=[common], help="zone boundaries t1, t2 on a frequency grid")
    s.add_argument("model")
    s.add_argument("--xi-grid", default="log:1e-4:1e2:60")
    s.add_argument("--N", type=float, default=None, help="zone constant (default: the model's)")
    s.set_defaults(func=cmd_zones)

    s = sub.add_parser("solve", parents=[common], help="propagator E(t, s, xi)")
    s.add_argument("model")
    s.add_argument("--xi", type=float, required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--s", type=float, default=0.0)
    s.add_argument("--sigma-off", action="store_true", help="drop the oscillating part sigma")
    s.add_argument("--free", action="store_true", help="undamped propagator (b = 0)")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("diagonalize", parents=[common], help="hyperbolic-zone diagonalisation and reconstruction")
    s.add_argument("model")
    s.add_argument("--xi", type=float, required=True)
    s.add_argument("--s", default="auto", help="start time or 'auto' (= max(t2, 1))")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--samples", type=int, default=0, help="extra random times for the stage statistics")
    s.set_defaults(func=cmd_diagonalize)

    s = sub.add_parser("verify-decay", parents=[common], help="decay rate of the weighted propagator norm")
    s.add_argument("model")
    s.add_argument("--t-grid", default="log:1e2:1e4:41")
    s.add_argument("--xi-grid", default=None, help="default: 60 log points reaching the dissipative zone")
    s.add_argument("--threshold", type=float, default=10.0)
    s.add_argument("--unweighted", action="store_true", help="drop the factor diag(xi/<xi>, 1)")
    s.add_argument("--sigma-off", action="store_true")
    s.set_defaults(func=cmd_verify_decay)

    s = sub.add_parser("verify-sharpness", parents=[common], help="two-sided bound for one frequency and datum")
    s.add_argument("model")
    s.add_argument("--xi", type=float, default=1.0)
    s.add_argument("--v0", default="1,0")
    s.add_argument("--t-grid", default="log:1e1:1e4:61")
    s.add_argument("--threshold", type=float, default=10.0)
    s.set_defaults(func=cmd_verify_sharpness)

    s = sub.add_parser("mode-limit", parents=[common], help="convergence of the modified scattering datum")
    s.add_argument("model")
    s.add_argument("--xi", type=float, default=1.0)
    s.add_argument("--t-schedule", default=None, help="increasing times (default: 9 dyadic values)")
    s.add_argument("--cutoff", type=float, default=0.1)
    s.set_defaults(func=cmd_mode_limit)

    s = sub.add_parser("report", parents=[common], help="compare a regression battery with a golden file")
    s.add_argument("model")
    s.add_argument("--golden", required=True)
    s.add_argument("--update", action="store_true", help="write the golden file instead of comparing")
    s.add_argument("--golden-rtol", type=float, default=1e-7)
    s.set_defaults(func=cmd_report)
    return p


def run(argv: list[str] | None = None) -> int:
    """Run the CLI and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv: list[str] | None = None) -> int:
    return run(argv)


if __name__ == "__main__":
    raise SystemExit(main())
