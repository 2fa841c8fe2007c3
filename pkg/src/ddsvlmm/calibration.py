"""Surface calibration under a fixed objective-evaluation budget.

The objective is the sum of squared differences between market and model
normal vols (absolute units). Inadmissible parameter points receive a
finite ordered penalty instead of raising, so any derivative-free
optimizer can roam the box safely. The optimizer is Nelder-Mead with box
projection plus optional multi-start; leftover budget after convergence is
spent on restarts from the incumbent, which tightens round-trip recovery.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import Bounds, minimize

from .errors import CalibrationFailedError, DdsvlmmError, InputError
from .expansion import standardized_moments
from .market import (
    ModelParams,
    SwapBasis,
    VolSurface,
    YieldCurve,
    geometry_from_basis,
    precompute_swap_basis,
)
from .mgf import psi_derivatives_at_zero
from .oracle import ContourConfig, contour_price
from .pricing import bachelier_implied_vol, ew_price, ew_smile, gc_price, gc_smile

__all__ = [
    "PARAM_NAMES",
    "ENGINES",
    "CalibrationSpec",
    "CalibrationResult",
    "SurfacePlan",
    "plan_surface",
    "model_vols",
    "objective",
    "calibrate",
    "default_bounds",
    "admissibility_violation",
]

PARAM_NAMES = ("a", "b", "c", "d", "kappa", "theta", "epsilon", "rho", "delta")
ENGINES = (
    "edgeworth_price",
    "edgeworth_smile",
    "gram_charlier_price",
    "gram_charlier_smile",
    "contour",
)

_PENALTY_SCALE = 1e6
_FAILED_RESIDUAL = 1.0  # absolute vol units; dwarfs any market vol


def default_bounds() -> dict[str, tuple[float, float]]:
    """Admissibility-enforcing box used when a spec provides none."""
    return {
        "a": (0.0, 0.5),
        "b": (0.0, 0.5),
        "c": (1e-3, 3.0),
        "d": (0.0, 0.5),
        "kappa": (0.01, 6.0),
        "theta": (0.05, 6.0),
        "epsilon": (1e-4, 1.5),
        "rho": (-0.999, 0.999),
        "delta": (0.0, 0.10),
    }


def admissibility_violation(params: ModelParams, curve: YieldCurve) -> float:
    """Non-negative constraint-violation measure; 0 iff admissible."""
    v = 0.0
    for name in ("a", "b", "c", "d", "delta"):
        v += max(0.0, -getattr(params, name))
    for name in ("kappa", "theta", "epsilon", "v0"):
        val = getattr(params, name)
        if val <= 0.0:
            v += 1e-6 - val
    feller = 2.0 * params.kappa * params.theta - params.epsilon**2
    if feller <= 0.0:
        v += 1e-6 - feller
    if abs(params.rho) >= 0.999:
        v += abs(params.rho) - 0.999 + 1e-6
    shifted_min = float(np.min(curve.forwards())) + params.delta
    if shifted_min <= 0.0:
        v += 1e-6 - shifted_min
    return v


@dataclass(frozen=True)
class PlannedGroup:
    """All quotes sharing one (expiry, tenor) pair."""

    basis: SwapBasis
    offsets_bp: tuple[float | None, ...]
    indices: tuple[int, ...]  # positions in the flat residual vector


@dataclass(frozen=True)
class SurfacePlan:
    groups: tuple[PlannedGroup, ...]
    market_vols: np.ndarray

    @property
    def size(self) -> int:
        return self.market_vols.size


def plan_surface(surface: VolSurface, curve: YieldCurve) -> SurfacePlan:
    """Group quotes by (expiry, tenor) and resolve them to grid indices."""
    if len(surface) == 0:
        raise InputError("no instruments in the volatility surface")
    by_pair: dict[tuple[float, float], list[int]] = {}
    for idx, q in enumerate(surface):
        by_pair.setdefault((q.expiry, q.tenor), []).append(idx)
    quotes = surface.quotes
    groups = []
    for (expiry, tenor), idxs in by_pair.items():
        m = curve.index_of(expiry)
        n = curve.index_of(expiry + tenor)
        basis = precompute_swap_basis(curve, m, n)
        groups.append(
            PlannedGroup(
                basis=basis,
                offsets_bp=tuple(quotes[i].strike_offset_bp for i in idxs),
                indices=tuple(idxs),
            )
        )
    market = np.array([q.normal_vol for q in quotes])
    return SurfacePlan(groups=tuple(groups), market_vols=market)


def _group_vols(
    engine: str,
    curve: YieldCurve,
    params: ModelParams,
    group: PlannedGroup,
    contour_cfg: ContourConfig,
) -> list[float]:
    geom = geometry_from_basis(curve, group.basis, params)
    sol = psi_derivatives_at_zero(geom, params)
    moments = standardized_moments(sol)
    sqrt_t = math.sqrt(geom.expiry)
    out = []
    for i, off in enumerate(group.offsets_bp):
        strike = geom.swap_rate + (0.0 if off is None else off * 1e-4)
        try:
            if engine == "edgeworth_smile":
                total = ew_smile(moments, strike)
            elif engine == "gram_charlier_smile":
                total = gc_smile(moments, strike)
            elif engine == "edgeworth_price":
                total = bachelier_implied_vol(
                    geom,
                    ew_price(geom, moments, strike).price,
                    strike,
                    initial=ew_smile(moments, strike),
                )
            elif engine == "gram_charlier_price":
                total = bachelier_implied_vol(
                    geom,
                    gc_price(geom, moments, strike).price,
                    strike,
                    initial=gc_smile(moments, strike),
                )
            elif engine == "contour":
                price = contour_price(
                    geom, params, strike, cfg=contour_cfg, nu=moments.nu,
                    probe=(i == 0),
                ).price
                total = bachelier_implied_vol(
                    geom, price, strike, initial=ew_smile(moments, strike)
                )
            else:
                raise InputError(f"unknown engine '{engine}'")
            out.append(total / sqrt_t)
        except DdsvlmmError:
            out.append(math.nan)
    return out


def model_vols(
    params: ModelParams,
    plan: SurfacePlan,
    curve: YieldCurve,
    engine: str,
    contour_cfg: ContourConfig | None = None,
) -> np.ndarray:
    """Annualized model vols aligned with the plan's instrument order.

    Instruments whose evaluation failed carry NaN.
    """
    cfg = contour_cfg or ContourConfig()
    vols = np.full(plan.size, np.nan)
    for group in plan.groups:
        try:
            group_vals = _group_vols(engine, curve, params, group, cfg)
        except DdsvlmmError:
            group_vals = [math.nan] * len(group.indices)
        for idx, val in zip(group.indices, group_vals):
            vols[idx] = val
    return vols


def residuals(
    params: ModelParams,
    plan: SurfacePlan,
    curve: YieldCurve,
    engine: str,
    contour_cfg: ContourConfig | None = None,
) -> np.ndarray:
    """Market-minus-model vols; failed instruments get a fixed large residual."""
    vols = model_vols(params, plan, curve, engine, contour_cfg)
    res = plan.market_vols - vols
    return np.where(np.isfinite(res), res, _FAILED_RESIDUAL)


def objective(
    params: ModelParams,
    plan: SurfacePlan,
    curve: YieldCurve,
    engine: str,
    weights: np.ndarray | None = None,
    contour_cfg: ContourConfig | None = None,
) -> float:
    """Sum of (weighted) squared vol residuals; finite penalty off the box."""
    violation = admissibility_violation(params, curve)
    if violation > 0.0:
        return _PENALTY_SCALE * (1.0 + violation)
    res = residuals(params, plan, curve, engine, contour_cfg)
    w = np.ones(plan.size) if weights is None else weights
    return float(np.sum(w * res * res))


@dataclass(frozen=True)
class CalibrationSpec:
    """Engine choice, evaluation budget, box and start configuration.

    ``free`` lists the parameters the optimizer moves; all others stay at
    their ``initial`` values (the displacement may be fixed this way).
    """

    engine: str
    initial: ModelParams
    budget: int = 2500
    bounds: dict[str, tuple[float, float]] = field(default_factory=default_bounds)
    free: tuple[str, ...] = PARAM_NAMES
    starts: int = 4
    seed: int = 0
    weights: np.ndarray | None = None
    contour_cfg: ContourConfig | None = None

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise InputError(f"unknown engine '{self.engine}'; pick one of {ENGINES}")
        if self.budget < 1:
            raise InputError("budget must be at least 1")
        if self.starts < 1:
            raise InputError("need at least one start")
        for name in self.free:
            if name not in PARAM_NAMES:
                raise InputError(f"unknown parameter '{name}'")
            if name not in self.bounds:
                raise InputError(f"missing bounds for free parameter '{name}'")
            lo, hi = self.bounds[name]
            if not lo < hi:
                raise InputError(f"bad bounds for '{name}': ({lo}, {hi})")


@dataclass(frozen=True)
class CalibrationResult:
    params: ModelParams
    objective: float
    residuals: np.ndarray
    evaluations: int
    wall_seconds: float
    converged: bool
    engine: str


class _BudgetExhausted(Exception):
    pass


def _vector_to_params(base: ModelParams, free: tuple[str, ...], x: np.ndarray) -> ModelParams:
    return replace(base, **{name: float(v) for name, v in zip(free, x)})


def calibrate(
    spec: CalibrationSpec, surface: VolSurface, curve: YieldCurve
) -> CalibrationResult:
    """Best parameters found within ``spec.budget`` objective evaluations.

    Start 1 is the supplied initial guess; further starts perturb it
    inside the box (seeded, hence deterministic). Budget left over after
    all starts converge is spent restarting from the incumbent.

    Raises
    ------
    CalibrationFailedError
        If every evaluated point was penalized (no admissible point).
    """
    plan = plan_surface(surface, curve)
    lo = np.array([spec.bounds[name][0] for name in spec.free])
    hi = np.array([spec.bounds[name][1] for name in spec.free])
    x0 = np.clip(np.array([getattr(spec.initial, name) for name in spec.free]), lo, hi)

    count = 0
    best_f = math.inf
    best_x: np.ndarray | None = None
    best_res: np.ndarray | None = None
    any_admissible = False
    any_converged = False

    def wrapped(x: np.ndarray) -> float:
        nonlocal count, best_f, best_x, best_res, any_admissible
        if count >= spec.budget:
            raise _BudgetExhausted()
        count += 1
        xp = np.clip(x, lo, hi)
        p = _vector_to_params(spec.initial, spec.free, xp)
        violation = admissibility_violation(p, curve)
        if violation > 0.0:
            f = _PENALTY_SCALE * (1.0 + violation)
            res = None
        else:
            res = residuals(p, plan, curve, spec.engine, spec.contour_cfg)
            w = np.ones(plan.size) if spec.weights is None else spec.weights
            f = float(np.sum(w * res * res))
            any_admissible = True
        if f < best_f:
            best_f, best_x, best_res = f, xp.copy(), res
        return f

    rng = np.random.default_rng(spec.seed)
    starts = [x0]
    for _ in range(spec.starts - 1):
        jitter = x0 + rng.uniform(-0.15, 0.15, size=x0.size) * (hi - lo)
        starts.append(np.clip(jitter, lo, hi))

    per_start = max(1, spec.budget // spec.starts)
    t0 = time.perf_counter()
    try:
        for x_start in starts:
            if count >= spec.budget:
                break
            res = minimize(
                wrapped,
                x_start,
                method="Nelder-Mead",
                bounds=Bounds(lo, hi),
                options={
                    "maxfev": min(per_start, spec.budget - count),
                    "xatol": 1e-10,
                    "fatol": 1e-16,
                    "adaptive": x0.size >= 6,
                },
            )
            any_converged = any_converged or bool(res.success)
        # spend whatever is left polishing the incumbent
        while count < spec.budget and best_x is not None and best_f > 1e-18:
            before = count
            res = minimize(
                wrapped,
                best_x,
                method="Nelder-Mead",
                bounds=Bounds(lo, hi),
                options={
                    "maxfev": spec.budget - count,
                    "xatol": 1e-12,
                    "fatol": 1e-18,
                    "adaptive": x0.size >= 6,
                },
            )
            any_converged = any_converged or bool(res.success)
            if count == before:  # no progress possible
                break
    except _BudgetExhausted:
        pass
    wall = time.perf_counter() - t0
    any_converged = any_converged or best_f <= 1e-18

    if best_x is None or not any_admissible:
        raise CalibrationFailedError(
            f"no admissible parameter point within {count} evaluations"
        )
    fitted = _vector_to_params(spec.initial, spec.free, best_x)
    if best_res is None:
        # best point was penalized (cannot happen when any_admissible), guard anyway
        raise CalibrationFailedError("best point inadmissible")
    return CalibrationResult(
        params=fitted,
        objective=best_f,
        residuals=best_res,
        evaluations=count,
        wall_seconds=wall,
        converged=any_converged,
        engine=spec.engine,
    )
