"""Market data containers and frozen swap-rate geometry.

This module ingests a discount curve and a normal-volatility surface and
builds, for a given swaption, the frozen quantities that drive the affine
swap-rate dynamics: annuity weights, the frozen sensitivity weights
``w_j(0)``, and the piecewise-constant effective coefficients
``(lambda, rho, xi)`` on the backward-time bucket grid.

Conventions
-----------
* The curve grid is ``T_0 = 0 < T_1 < ... < T_M`` (year fractions) with
  one discount factor per point. Forward ``j`` accrues on
  ``[T_j, T_{j+1}]``, ``j = 0..M-1``.
* A swaption is identified by grid indices ``m < n``: expiry ``T_m``,
  underlying swap paying on ``T_{m+1}..T_n``.
* Backward time is ``tau = T_m - t``. Bucket ``j`` covers
  ``(tau_j, tau_{j+1}]`` with ``tau_j = T_m - T_{m-j}`` and maps to the
  calendar interval ``[T_i, T_{i+1})`` with ``i = m - 1 - j``.

All containers are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    CurveParseError,
    InvalidParametersError,
    ShiftInfeasibleError,
    VolSurfaceParseError,
)

__all__ = [
    "YieldCurve",
    "SwaptionQuote",
    "VolSurface",
    "ModelParams",
    "SwapGeometry",
    "SwapBasis",
    "load_curve",
    "load_vols",
    "default_factor_angles",
    "build_swap_geometry",
    "precompute_swap_basis",
    "geometry_from_basis",
    "effective_coefficients",
    "swap_rate_from_forwards",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class YieldCurve:
    """Discount factors P(0, T_i) on an ascending tenor grid.

    Parameters
    ----------
    tenors : array_like
        Year fractions ``T_0 = 0 < T_1 < ... < T_M``. A leading 0 point is
        prepended automatically when missing.
    discounts : array_like
        ``P(0, T_i)`` per grid point, each in ``(0, 1]`` with ``P(0,0)=1``.
    """

    tenors: np.ndarray
    discounts: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tenors, dtype=float)
        p = np.asarray(self.discounts, dtype=float)
        if t.ndim != 1 or p.shape != t.shape:
            raise CurveParseError("tenor and discount arrays must be 1-d and equal length")
        if t.size and t[0] > 0.0:
            t = np.concatenate([[0.0], t])
            p = np.concatenate([[1.0], p])
        if t.size < 2:
            raise CurveParseError("curve needs at least two grid points")
        if np.any(np.diff(t) <= 0.0):
            raise CurveParseError("tenor grid must be strictly increasing")
        if np.any(p <= 0.0):
            raise CurveParseError("discount factors must be strictly positive")
        if abs(p[0] - 1.0) > 1e-12:
            raise CurveParseError("P(0,0) must equal 1")
        object.__setattr__(self, "tenors", _readonly(t))
        object.__setattr__(self, "discounts", _readonly(p))

    @property
    def n_forwards(self) -> int:
        return self.tenors.size - 1

    @cached_property
    def _deltas(self) -> np.ndarray:
        return _readonly(np.diff(self.tenors))

    @cached_property
    def _forwards(self) -> np.ndarray:
        p = self.discounts
        return _readonly((p[:-1] / p[1:] - 1.0) / self._deltas)

    def deltas(self) -> np.ndarray:
        """Accrual fractions ``Delta T_j = T_{j+1} - T_j``."""
        return self._deltas

    def forwards(self) -> np.ndarray:
        """Simply compounded forwards ``F_j(0) = (P_j/P_{j+1} - 1)/Delta T_j``."""
        return self._forwards

    def index_of(self, tenor: float, tol: float = 1e-9) -> int:
        """Grid index of ``tenor``; raises if it is not a grid point."""
        hits = np.nonzero(np.abs(self.tenors - tenor) <= tol)[0]
        if hits.size == 0:
            raise CurveParseError(f"tenor {tenor} is not on the curve grid")
        return int(hits[0])


def load_curve(csv_text: str) -> YieldCurve:
    """Parse a ``tenor,discount`` CSV into a :class:`YieldCurve`.

    Errors name the offending row (1-based, counting the header).
    """
    lines = [ln.strip() for ln in io.StringIO(csv_text)]
    rows = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    if not rows:
        raise CurveParseError("empty curve file")
    header = rows[0][1].lower().replace(" ", "")
    if header != "tenor,discount":
        raise CurveParseError("row 1: expected header 'tenor,discount'")
    tenors, discounts = [], []
    for lineno, ln in rows[1:]:
        parts = ln.split(",")
        if len(parts) != 2:
            raise CurveParseError(f"row {lineno}: expected 2 fields, got {len(parts)}")
        try:
            t, p = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise CurveParseError(f"row {lineno}: {exc}") from exc
        if not (math.isfinite(t) and math.isfinite(p)):
            raise CurveParseError(f"row {lineno}: non-finite value")
        if p <= 0.0:
            raise CurveParseError(f"row {lineno}: discount must be positive, got {p}")
        tenors.append(t)
        discounts.append(p)
    if tenors != sorted(tenors) or len(set(tenors)) != len(tenors):
        raise CurveParseError("tenor grid must be strictly increasing")
    return YieldCurve(np.array(tenors), np.array(discounts))


@dataclass(frozen=True)
class SwaptionQuote:
    """One market quote: ``strike_offset_bp`` is None for ATM."""

    expiry: float
    tenor: float
    strike_offset_bp: float | None
    normal_vol: float  # absolute rate units per sqrt(year)

    def key(self) -> tuple[float, float, float | None]:
        return (self.expiry, self.tenor, self.strike_offset_bp)


@dataclass(frozen=True)
class VolSurface:
    """Collection of swaption quotes with unique (expiry, tenor, offset) keys."""

    quotes: tuple[SwaptionQuote, ...]

    def __post_init__(self):
        quotes = tuple(self.quotes)
        seen = set()
        for q in quotes:
            if q.normal_vol <= 0.0:
                raise VolSurfaceParseError(f"non-positive vol for quote {q.key()}")
            if q.key() in seen:
                raise VolSurfaceParseError(f"duplicate quote key {q.key()}")
            seen.add(q.key())
        object.__setattr__(self, "quotes", quotes)

    def __len__(self) -> int:
        return len(self.quotes)

    def __iter__(self):
        return iter(self.quotes)


def load_vols(csv_text: str) -> VolSurface:
    """Parse an ``expiry,tenor,strike_offset_bp,normal_vol_bp`` CSV.

    The strike column accepts the literal ``ATM``; vols are quoted in basis
    points per sqrt(year) and converted to absolute units.
    """
    lines = [ln.strip() for ln in io.StringIO(csv_text)]
    rows = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    if not rows:
        raise VolSurfaceParseError("empty vol file")
    header = rows[0][1].lower().replace(" ", "")
    if header != "expiry,tenor,strike_offset_bp,normal_vol_bp":
        raise VolSurfaceParseError(
            "row 1: expected header 'expiry,tenor,strike_offset_bp,normal_vol_bp'"
        )
    quotes = []
    for lineno, ln in rows[1:]:
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) != 4:
            raise VolSurfaceParseError(f"row {lineno}: expected 4 fields, got {len(parts)}")
        try:
            expiry, tenor = float(parts[0]), float(parts[1])
            offset = None if parts[2].upper() == "ATM" else float(parts[2])
            vol_bp = float(parts[3])
        except ValueError as exc:
            raise VolSurfaceParseError(f"row {lineno}: {exc}") from exc
        if vol_bp <= 0.0:
            raise VolSurfaceParseError(f"row {lineno}: normal vol must be positive")
        quotes.append(SwaptionQuote(expiry, tenor, offset, vol_bp * 1e-4))
    return VolSurface(tuple(quotes))


def default_factor_angles(n_forwards: int) -> np.ndarray:
    """Monotone de-correlation ladder ``phi_o = (pi/2) * o / (M - 1)``.

    ``o = j - i`` is the offset between forward index and calendar-interval
    index; the associated unit factor is ``(cos phi_o, sin phi_o)``.
    """
    m = max(n_forwards, 2)
    return np.pi / 2.0 * np.arange(n_forwards, dtype=float) / (m - 1)


@dataclass(frozen=True)
class ModelParams:
    """DD-SV-LMM parameter set.

    ``a, b, c, d`` shape the humped volatility profile
    ``g(u) = (b u + a) exp(-c u) + d``; ``kappa, theta, epsilon`` drive the
    square-root variance factor; ``rho`` is the rate/variance correlation;
    ``delta`` the displacement; ``v0`` the initial variance.
    ``factor_angles`` define the unit 2-vector factor loadings per offset
    (defaulted per curve size when None).
    """

    a: float
    b: float
    c: float
    d: float
    kappa: float
    theta: float
    epsilon: float
    rho: float
    delta: float
    v0: float = 1.0
    factor_angles: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.factor_angles is not None:
            object.__setattr__(self, "factor_angles", _readonly(self.factor_angles))

    def g(self, u):
        """Volatility hump ``g(u) = (b u + a) e^{-c u} + d``."""
        u = np.asarray(u, dtype=float)
        val = (self.b * u + self.a) * np.exp(-self.c * u) + self.d
        return float(val) if val.ndim == 0 else val

    def angles_for(self, n_forwards: int) -> np.ndarray:
        if self.factor_angles is None:
            return default_factor_angles(n_forwards)
        if self.factor_angles.size < n_forwards:
            raise InvalidParametersError(
                f"factor_angles has {self.factor_angles.size} entries, "
                f"curve needs {n_forwards}"
            )
        return np.asarray(self.factor_angles, dtype=float)

    def violations(self) -> list[str]:
        """Admissibility violations that do not depend on the curve."""
        out = []
        for name in ("a", "b", "c", "d", "delta"):
            if getattr(self, name) < 0.0:
                out.append(f"{name} must be non-negative")
        for name in ("kappa", "theta", "epsilon", "v0"):
            if getattr(self, name) <= 0.0:
                out.append(f"{name} must be positive")
        if not (-1.0 < self.rho < 1.0):
            out.append("rho must lie in (-1, 1)")
        if 2.0 * self.kappa * self.theta <= self.epsilon**2:
            out.append("Feller condition 2*kappa*theta > epsilon^2 violated")
        return out

    def check(self) -> None:
        bad = self.violations()
        if bad:
            raise InvalidParametersError("; ".join(bad))


@dataclass(frozen=True)
class SwapGeometry:
    """Frozen swap quantities plus per-bucket effective coefficients.

    ``alpha`` and ``w`` are indexed by ``j - m`` for forwards ``j = m..n-1``.
    ``tau`` holds ``tau_0 = 0 .. tau_m = T_m``; bucket arrays ``lam, rho,
    xi`` hold one value per backward-time bucket ``(tau_j, tau_{j+1}]``.
    """

    m: int
    n: int
    expiry: float
    annuity: float
    swap_rate: float
    alpha: np.ndarray
    w: np.ndarray
    tau: np.ndarray
    lam: np.ndarray
    rho: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "w", "tau", "lam", "rho", "xi"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def n_buckets(self) -> int:
        return self.lam.size

    @cached_property
    def _widths(self) -> np.ndarray:
        return _readonly(np.diff(self.tau))

    def bucket_widths(self) -> np.ndarray:
        return self._widths


def swap_rate_from_forwards(
    forwards: np.ndarray, deltas: np.ndarray, m: int, n: int
) -> tuple[float, np.ndarray, np.ndarray]:
    """Swap rate, weights alpha_j(0) and discounts implied by forwards.

    Rebuilds ``P(0, T_{j+1}) = P(0, T_m) * prod 1/(1 + dT F)`` from ``F``,
    so the result depends only on the forwards between ``T_m`` and ``T_n``;
    used both by geometry construction and by finite-difference tests.
    Returns ``(R, alpha, annuity_over_P_m)``.
    """
    growth = np.cumprod(1.0 + deltas[m:n] * forwards[m:n])
    p_rel = 1.0 / growth  # P(0,T_{j+1}) / P(0,T_m), j = m..n-1
    ann_rel = float(np.sum(deltas[m:n] * p_rel))
    rate = (1.0 - p_rel[-1]) / ann_rel
    alpha = deltas[m:n] * p_rel / ann_rel
    return rate, alpha, ann_rel


def _swap_rate_gradient(
    forwards: np.ndarray, deltas: np.ndarray, alpha: np.ndarray, rate: float, m: int, n: int
) -> np.ndarray:
    """Analytic dR/dF_j for j = m..n-1 (frozen at t = 0)."""
    grad = np.empty(n - m)
    running = 0.0  # sum_{k=m}^{j-1} alpha_k (F_k - R)
    for j in range(m, n):
        cj = deltas[j] / (1.0 + deltas[j] * forwards[j])
        grad[j - m] = alpha[j - m] + cj * running
        running += alpha[j - m] * (forwards[j] - rate)
    return grad


def effective_coefficients(
    curve: YieldCurve,
    params: ModelParams,
    m: int,
    n: int,
    w: np.ndarray,
    alpha: np.ndarray,
    bucket: int,
) -> tuple[float, float, float]:
    """Effective ``(lambda, rho, xi)`` on backward-time bucket ``bucket``.

    The bucket maps to the calendar interval ``[T_i, T_{i+1})`` with
    ``i = m - 1 - bucket``, on which the factor loadings are
    ``gamma_j = beta_{j-i} g(T_j - T_i)``:

    * ``lambda``: Euclidean norm of ``sum_j w_j gamma_j`` (may be 0);
    * ``rho``: ``(1/lambda) sum_j w_j |gamma_j| rho`` (0 when lambda = 0);
    * ``xi``: frozen variance-drift adjustment, using the time-0 forwards
      and the alive forwards ``k = i+1..j`` in the inner sum.
    """
    i = m - 1 - bucket
    if not 0 <= i < m:
        raise IndexError(f"bucket {bucket} out of range for m={m}")
    t_grid = curve.tenors
    deltas = curve.deltas()
    fwd = curve.forwards()
    angles = params.angles_for(curve.n_forwards)

    g_vals = params.g(t_grid[m:n] - t_grid[i])  # g(T_j - T_i), j = m..n-1
    phi = angles[np.arange(m, n) - i]
    vec = np.array([np.sum(w * g_vals * np.cos(phi)), np.sum(w * g_vals * np.sin(phi))])
    lam = float(np.hypot(vec[0], vec[1]))
    rho_eff = float(params.rho * np.sum(w * g_vals) / lam) if lam > 0.0 else 0.0

    # xi: the inner sum over alive forwards k = i+1..j grows with j, so
    # accumulate it incrementally across the outer sum.
    xi = 1.0
    if params.epsilon > 0.0:
        total = 0.0
        inner = 0.0
        k_next = i + 1
        for j in range(m, n):
            while k_next <= j:
                k = k_next
                inner += (
                    deltas[k]
                    * (fwd[k] + params.delta)
                    * params.g(t_grid[k] - t_grid[i])
                    / (1.0 + deltas[k] * fwd[k])
                )
                k_next += 1
            total += alpha[j - m] * inner
        xi = 1.0 + params.epsilon / params.kappa * params.rho * total
    return lam, rho_eff, xi


@dataclass(frozen=True)
class SwapBasis:
    """Parameter-independent swaption quantities, cacheable across trials.

    Only the displacement and volatility parameters enter downstream of
    these, so repeated calibration evaluations can reuse one basis per
    (m, n) pair.
    """

    m: int
    n: int
    expiry: float
    annuity: float
    swap_rate: float
    alpha: np.ndarray
    grad: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "grad", "tau"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))


def precompute_swap_basis(curve: YieldCurve, m: int, n: int) -> SwapBasis:
    """Annuity, weights and frozen swap-rate gradient for indices ``m < n``."""
    if not (1 <= m < n <= curve.n_forwards):
        raise InvalidParametersError(
            f"need 1 <= m < n <= {curve.n_forwards}, got m={m}, n={n}"
        )
    fwd = curve.forwards()
    deltas = curve.deltas()
    p = curve.discounts
    annuity = float(np.sum(deltas[m:n] * p[m + 1 : n + 1]))
    rate = float((p[m] - p[n]) / annuity)
    alpha = deltas[m:n] * p[m + 1 : n + 1] / annuity
    grad = _swap_rate_gradient(fwd, deltas, alpha, rate, m, n)
    tau = curve.tenors[m] - curve.tenors[m::-1]  # tau_j = T_m - T_{m-j}
    return SwapBasis(
        m=m,
        n=n,
        expiry=float(curve.tenors[m]),
        annuity=annuity,
        swap_rate=rate,
        alpha=alpha,
        grad=grad,
        tau=tau,
    )


def _effective_all(
    curve: YieldCurve, params: ModelParams, basis: SwapBasis, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Effective (lambda, rho, xi) on every calendar interval, vectorized.

    Row ``i`` corresponds to calendar interval ``[T_i, T_{i+1})``; the
    backward-time bucket arrays are these rows reversed.
    """
    m, n = basis.m, basis.n
    t = curve.tenors
    deltas = curve.deltas()
    fwd = curve.forwards()
    angles = params.angles_for(curve.n_forwards)

    i_idx = np.arange(m)
    j_idx = np.arange(m, n)
    g_jm = params.g(t[j_idx][None, :] - t[i_idx][:, None])  # (m, n-m)
    phi = angles[j_idx[None, :] - i_idx[:, None]]
    cx = np.sum(w * g_jm * np.cos(phi), axis=1)
    sy = np.sum(w * g_jm * np.sin(phi), axis=1)
    lam = np.hypot(cx, sy)
    sum_wg = g_jm @ w
    safe = np.where(lam == 0.0, 1.0, lam)
    rho_eff = np.where(lam > 0.0, params.rho * sum_wg / safe, 0.0)

    if params.epsilon > 0.0:
        k_idx = np.arange(n)
        c = deltas[:n] * (fwd[:n] + params.delta) / (1.0 + deltas[:n] * fwd[:n])
        alive = k_idx[None, :] > i_idx[:, None]  # k = i+1 .. n-1
        g_km = np.where(alive, params.g(t[k_idx][None, :] - t[i_idx][:, None]), 0.0)
        running = np.cumsum(np.where(alive, c[None, :] * g_km, 0.0), axis=1)
        total = running[:, m:n] @ basis.alpha
        xi = 1.0 + params.epsilon / params.kappa * params.rho * total
    else:
        xi = np.ones(m)
    return lam, rho_eff, xi


def geometry_from_basis(
    curve: YieldCurve, basis: SwapBasis, params: ModelParams
) -> SwapGeometry:
    """Complete a cached :class:`SwapBasis` into a :class:`SwapGeometry`."""
    params.check()
    fwd = curve.forwards()
    if np.any(fwd + params.delta <= 0.0):
        j = int(np.argmax(fwd + params.delta <= 0.0))
        raise ShiftInfeasibleError(f"F_{j}(0) + delta = {fwd[j] + params.delta} <= 0")
    m, n = basis.m, basis.n
    w = basis.grad * (fwd[m:n] + params.delta)
    lam, rho, xi = _effective_all(curve, params, basis, w)
    return SwapGeometry(
        m=m,
        n=n,
        expiry=basis.expiry,
        annuity=basis.annuity,
        swap_rate=basis.swap_rate,
        alpha=basis.alpha,
        w=w,
        tau=basis.tau,
        lam=lam[::-1],
        rho=rho[::-1],
        xi=xi[::-1],
    )


def build_swap_geometry(curve: YieldCurve, params: ModelParams, m: int, n: int) -> SwapGeometry:
    """Assemble the frozen :class:`SwapGeometry` for swap indices ``m < n``.

    Raises
    ------
    ShiftInfeasibleError
        If ``F_j(0) + delta <= 0`` for any forward on the curve.
    InvalidParametersError
        If the parameter set is inadmissible.
    """
    return geometry_from_basis(curve, precompute_swap_basis(curve, m, n), params)
