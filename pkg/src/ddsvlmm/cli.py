"""Command-line entry point.

Five subcommands: ``price`` and ``smile`` evaluate a surface under fixed
parameters, ``calibrate`` fits parameters to a surface, ``validate``
compares closed-form vols against a Monte Carlo confidence band, and
``bench`` times an expansion-engine calibration against the contour
reference on an identical budget.

Exit codes: 0 success, 2 input error, 3 numerical failure. All outputs are
plain CSVs; apart from the wall-clock columns of ``bench``, repeated runs
with the same seed produce byte-identical files.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .calibration import (
    ENGINES,
    CalibrationSpec,
    calibrate,
    model_vols,
    plan_surface,
)
from .errors import DdsvlmmError, InputError, NumericalError
from .expansion import standardized_moments
from .market import ModelParams, YieldCurve, geometry_from_basis, load_curve, load_vols
from .mgf import psi_derivatives_at_zero
from .montecarlo import SimConfig, mc_vol_and_ci, simulate_swap_rate
from .oracle import contour_price
from .pricing import (
    bachelier_implied_vol,
    bachelier_price,
    ew_price,
    ew_smile,
    gc_price,
    gc_smile,
)

PRICE_ENGINES = ("bachelier", "gram_charlier", "edgeworth", "contour")

_SCALAR_PARAM_KEYS = ("a", "b", "c", "d", "kappa", "theta", "epsilon", "rho", "delta", "v0")


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return format(x, ".12g")


def load_params_file(text: str) -> ModelParams:
    """Parse ``key=value`` lines (``#`` comments) into :class:`ModelParams`."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"params line {lineno}: expected key=value, got '{raw}'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        try:
            if key in _SCALAR_PARAM_KEYS:
                values[key] = float(val)
            elif key == "factor_angles":
                values[key] = np.array([float(v) for v in val.split(",") if v.strip()])
            else:
                raise InputError(f"params line {lineno}: unknown key '{key}'")
        except ValueError as exc:
            raise InputError(f"params line {lineno}: {exc}") from exc
    missing = [k for k in _SCALAR_PARAM_KEYS if k != "v0" and k not in values]
    if missing:
        raise InputError(f"params file missing keys: {', '.join(missing)}")
    return ModelParams(**values)  # type: ignore[arg-type]


def write_params_file(params: ModelParams) -> str:
    lines = [f"{k}={_fmt(getattr(params, k))}" for k in _SCALAR_PARAM_KEYS]
    if params.factor_angles is not None:
        lines.append("factor_angles=" + ",".join(_fmt(v) for v in params.factor_angles))
    return "\n".join(lines) + "\n"


def _read(path: str, kind: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{kind} file not found: {path}")
    return p.read_text()


def _load_inputs(args) -> tuple[YieldCurve, object, ModelParams | None]:
    curve = load_curve(_read(args.curve, "curve"))
    surface = load_vols(_read(args.vols, "vols"))
    params = None
    if getattr(args, "params", None):
        params = load_params_file(_read(args.params, "params"))
    return curve, surface, params


def _write_csv(out_dir: str, name: str, header: str, rows: list[str]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(header + "\n" + "\n".join(rows) + ("\n" if rows else ""))
    return path


def read_output_csv(text: str) -> tuple[list[str], list[list[str]]]:
    """Parse a CSV emitted by any command back into header + rows.

    Rejects ragged rows, so emit -> read -> emit is the identity; every
    command's output must round-trip through this reader.
    """
    lines = text.strip().splitlines()
    if not lines:
        raise InputError("empty CSV")
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise InputError(f"row {i}: expected {len(header)} fields, got {len(row)}")
    return header, rows


def write_output_csv(header: list[str], rows: list[list[str]]) -> str:
    return "\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n"


def _strike_label(off) -> str:
    return "ATM" if off is None else _fmt(off)


def cmd_price(args) -> int:
    curve, surface, params = _load_inputs(args)
    if params is None:
        raise InputError("price requires --params")
    if args.engine not in PRICE_ENGINES:
        raise InputError(f"unknown engine '{args.engine}'; pick one of {PRICE_ENGINES}")
    plan = plan_surface(surface, curve)
    rows: list[tuple[int, str]] = []
    for group in plan.groups:
        geom = geometry_from_basis(curve, group.basis, params)
        moments = standardized_moments(psi_derivatives_at_zero(geom, params))
        sqrt_t = math.sqrt(geom.expiry)
        for off, idx in zip(group.offsets_bp, group.indices):
            strike = geom.swap_rate + (0.0 if off is None else off * 1e-4)
            if args.engine == "bachelier":
                sp = bachelier_price(geom, moments, strike)
            elif args.engine == "gram_charlier":
                sp = gc_price(geom, moments, strike)
            elif args.engine == "edgeworth":
                sp = ew_price(geom, moments, strike)
            else:
                sp = contour_price(geom, params, strike, nu=moments.nu)
            try:
                ivol = bachelier_implied_vol(geom, sp.price, strike) / sqrt_t * 1e4
            except DdsvlmmError:
                ivol = math.nan
            rows.append(
                (
                    idx,
                    ",".join(
                        [
                            _fmt(group.basis.expiry),
                            _fmt(surface.quotes[idx].tenor),
                            _strike_label(off),
                            _fmt(strike),
                            args.engine,
                            _fmt(sp.price),
                            _fmt(ivol),
                            _fmt(sp.z_strike),
                            _fmt(moments.mu3),
                            _fmt(moments.mu4),
                        ]
                    ),
                )
            )
    rows.sort(key=lambda r: r[0])
    path = _write_csv(
        args.out,
        "prices.csv",
        "expiry,tenor,strike_offset_bp,strike,engine,price,implied_vol_bp,z_k,mu3,mu4",
        [r[1] for r in rows],
    )
    print(f"wrote {path} ({len(rows)} instruments)")
    return 0


def cmd_smile(args) -> int:
    curve, surface, params = _load_inputs(args)
    if params is None:
        raise InputError("smile requires --params")
    if args.engine not in ("edgeworth", "gram_charlier"):
        raise InputError("smile engine must be 'edgeworth' or 'gram_charlier'")
    smile_fn = ew_smile if args.engine == "edgeworth" else gc_smile
    plan = plan_surface(surface, curve)
    rows: list[tuple[int, str]] = []
    for group in plan.groups:
        geom = geometry_from_basis(curve, group.basis, params)
        moments = standardized_moments(psi_derivatives_at_zero(geom, params))
        sqrt_t = math.sqrt(geom.expiry)
        for off, idx in zip(group.offsets_bp, group.indices):
            strike = geom.swap_rate + (0.0 if off is None else off * 1e-4)
            vol_bp = smile_fn(moments, strike) / sqrt_t * 1e4
            rows.append(
                (
                    idx,
                    ",".join(
                        [
                            _fmt(group.basis.expiry),
                            _fmt(surface.quotes[idx].tenor),
                            _strike_label(off),
                            _fmt(strike),
                            args.engine,
                            _fmt(vol_bp),
                            _fmt(surface.quotes[idx].normal_vol * 1e4),
                            _fmt(moments.z_strike(strike)),
                        ]
                    ),
                )
            )
    rows.sort(key=lambda r: r[0])
    path = _write_csv(
        args.out,
        "smile.csv",
        "expiry,tenor,strike_offset_bp,strike,engine,model_vol_bp,market_vol_bp,z_k",
        [r[1] for r in rows],
    )
    print(f"wrote {path} ({len(rows)} instruments)")
    return 0


def _run_calibration(args, curve, surface, params, engine) -> object:
    spec = CalibrationSpec(
        engine=engine,
        initial=params,
        budget=args.budget,
        starts=args.starts,
        seed=args.seed,
    )
    return calibrate(spec, surface, curve)


def _write_calibration_outputs(args, curve, surface, result, prefix="") -> None:
    plan = plan_surface(surface, curve)
    fitted_vols = model_vols(result.params, plan, curve, result.engine)
    rows = []
    for idx, q in enumerate(surface.quotes):
        rows.append(
            ",".join(
                [
                    _fmt(q.expiry),
                    _fmt(q.tenor),
                    _strike_label(q.strike_offset_bp),
                    _fmt(q.normal_vol * 1e4),
                    _fmt(fitted_vols[idx] * 1e4),
                    _fmt((q.normal_vol - fitted_vols[idx]) * 1e4),
                ]
            )
        )
    _write_csv(
        args.out,
        f"{prefix}residuals.csv",
        "expiry,tenor,strike_offset_bp,market_vol_bp,model_vol_bp,residual_bp",
        rows,
    )
    rmse_bp = math.sqrt(float(np.mean(result.residuals**2))) * 1e4
    _write_csv(
        args.out,
        f"{prefix}calibration_report.csv",
        "engine,objective,rmse_bp,evaluations,converged",
        [
            ",".join(
                [
                    result.engine,
                    _fmt(result.objective),
                    _fmt(rmse_bp),
                    str(result.evaluations),
                    str(int(result.converged)),
                ]
            )
        ],
    )
    (Path(args.out) / f"{prefix}calibrated_params.txt").write_text(
        write_params_file(result.params)
    )


def cmd_calibrate(args) -> int:
    curve, surface, params = _load_inputs(args)
    if params is None:
        raise InputError("calibrate requires --params (initial guess)")
    if args.engine not in ENGINES:
        raise InputError(f"unknown engine '{args.engine}'; pick one of {ENGINES}")
    result = _run_calibration(args, curve, surface, params, args.engine)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    _write_calibration_outputs(args, curve, surface, result)
    rmse_bp = math.sqrt(float(np.mean(result.residuals**2))) * 1e4
    print(
        f"{args.engine}: objective={result.objective:.6e} rmse={rmse_bp:.3f}bp "
        f"evals={result.evaluations} wall={result.wall_seconds:.2f}s"
    )
    return 0


def cmd_validate(args) -> int:
    curve, surface, params = _load_inputs(args)
    if params is None:
        raise InputError("validate requires --params")
    plan = plan_surface(surface, curve)
    rows: list[tuple[int, str]] = []
    for g_idx, group in enumerate(plan.groups):
        geom = geometry_from_basis(curve, group.basis, params)
        moments = standardized_moments(psi_derivatives_at_zero(geom, params))
        sqrt_t = math.sqrt(geom.expiry)
        cfg = SimConfig(
            paths=args.paths,
            steps_per_year=args.steps,
            seed=args.seed + g_idx,
        )
        sample = simulate_swap_rate(geom, params, cfg)
        for off, idx in zip(group.offsets_bp, group.indices):
            strike = geom.swap_rate + (0.0 if off is None else off * 1e-4)
            theo = {}
            for name, price in (
                ("edgeworth", ew_price(geom, moments, strike).price),
                ("gram_charlier", gc_price(geom, moments, strike).price),
                ("contour", contour_price(geom, params, strike, nu=moments.nu).price),
            ):
                try:
                    theo[name] = bachelier_implied_vol(geom, price, strike) / sqrt_t
                except DdsvlmmError:
                    theo[name] = math.nan
            try:
                mc_v, mc_lo, mc_hi = mc_vol_and_ci(sample, geom, strike)
                mc_v, mc_lo, mc_hi = mc_v / sqrt_t, mc_lo / sqrt_t, mc_hi / sqrt_t
            except DdsvlmmError:
                mc_v = mc_lo = mc_hi = math.nan
            inside = {
                name: int(mc_lo <= v <= mc_hi) if math.isfinite(v) and math.isfinite(mc_lo) else 0
                for name, v in theo.items()
            }
            rows.append(
                (
                    idx,
                    ",".join(
                        [
                            _fmt(group.basis.expiry),
                            _fmt(surface.quotes[idx].tenor),
                            _strike_label(off),
                            _fmt(strike),
                            _fmt(surface.quotes[idx].normal_vol * 1e4),
                            _fmt(theo["edgeworth"] * 1e4),
                            _fmt(theo["gram_charlier"] * 1e4),
                            _fmt(theo["contour"] * 1e4),
                            _fmt(mc_v * 1e4),
                            _fmt(mc_lo * 1e4),
                            _fmt(mc_hi * 1e4),
                            str(inside["edgeworth"]),
                            str(inside["gram_charlier"]),
                            str(inside["contour"]),
                        ]
                    ),
                )
            )
    rows.sort(key=lambda r: r[0])
    path = _write_csv(
        args.out,
        "validate.csv",
        "expiry,tenor,strike_offset_bp,strike,market_vol_bp,edgeworth_vol_bp,"
        "gram_charlier_vol_bp,contour_vol_bp,mc_vol_bp,ci_low_bp,ci_high_bp,"
        "edgeworth_inside,gram_charlier_inside,contour_inside",
        [r[1] for r in rows],
    )
    print(f"wrote {path} ({len(rows)} instruments)")
    return 0


def cmd_bench(args) -> int:
    curve, surface, params = _load_inputs(args)
    if params is None:
        raise InputError("bench requires --params (initial guess)")
    expansion_engine = args.engine
    if expansion_engine not in ("edgeworth_price", "edgeworth_smile"):
        raise InputError("bench engine must be 'edgeworth_price' or 'edgeworth_smile'")
    res_contour = _run_calibration(args, curve, surface, params, "contour")
    res_exp = _run_calibration(args, curve, surface, params, expansion_engine)
    speedup = res_contour.wall_seconds / max(res_exp.wall_seconds, 1e-12)
    rows = [
        ",".join(
            [
                r.engine,
                _fmt(r.wall_seconds),
                _fmt(r.objective),
                str(r.evaluations),
                _fmt(s),
            ]
        )
        for r, s in ((res_contour, 1.0), (res_exp, speedup))
    ]
    path = _write_csv(
        args.out,
        "bench.csv",
        "engine,wall_seconds,objective,evaluations,speedup",
        rows,
    )
    _write_calibration_outputs(args, curve, surface, res_exp, prefix="bench_")
    print(
        f"contour {res_contour.wall_seconds:.2f}s vs {expansion_engine} "
        f"{res_exp.wall_seconds:.2f}s -> speedup {speedup:.1f}x ({path})"
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddsvlmm",
        description="Swaption pricing and calibration for the DD-SV-LMM",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, engine_default):
        p.add_argument("--curve", required=True, help="discount curve CSV")
        p.add_argument("--vols", required=True, help="vol surface CSV")
        p.add_argument("--params", help="key=value parameter file")
        p.add_argument("--engine", default=engine_default)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("price", help="price every instrument under one engine")
    common(p, "edgeworth")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("smile", help="closed-form smile vols per instrument")
    common(p, "edgeworth")
    p.set_defaults(func=cmd_smile)

    p = sub.add_parser("calibrate", help="fit parameters to the surface")
    common(p, "edgeworth_smile")
    p.add_argument("--budget", type=int, default=2500)
    p.add_argument("--starts", type=int, default=4)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("validate", help="compare engines against Monte Carlo CIs")
    common(p, "edgeworth")
    p.add_argument("--paths", type=int, default=5000)
    p.add_argument("--steps", type=int, default=12, help="steps per year")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="time contour vs expansion calibration")
    common(p, "edgeworth_price")
    p.add_argument("--budget", type=int, default=2500)
    p.add_argument("--starts", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
