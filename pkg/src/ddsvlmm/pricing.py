"""Closed-form swaption prices and smile formulas.

Everything here works with the terminal standard deviation ``nu`` (absolute
rate units); divide by ``sqrt(expiry)`` to quote per-root-year normal vols.
Receiver prices come from put-call parity, ``payer - receiver =
annuity * (R0 - K)``, which is exact because every density used has unit
mass and zero mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InversionError
from .expansion import ExpansionMoments
from .market import SwapGeometry

__all__ = [
    "SwaptionPrice",
    "bachelier_price",
    "gc_price",
    "ew_price",
    "gc_smile",
    "ew_smile",
    "bachelier_implied_vol",
    "annualize_vol",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)


def _phi(x: float) -> float:
    """Standard normal density (scalar fast path)."""
    return math.exp(-0.5 * x * x) / SQRT_2PI


def _phi_tail(x: float) -> float:
    """Upper tail probability ``Phi(-x) = P(N > x)``."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def annualize_vol(total_vol: float, expiry: float) -> float:
    """Convert a terminal standard deviation into a per-root-year vol."""
    return total_vol / math.sqrt(expiry)


@dataclass(frozen=True)
class SwaptionPrice:
    """Price per unit notional plus the engine tag and moneyness used.

    ``flagged`` marks non-positive expansion prices (possible deep out of
    the money with extreme moments); they are reported, never clamped.
    """

    price: float
    engine: str
    z_strike: float
    flagged: bool = False


def _bachelier_core(nu: float, annuity: float, z_k: float) -> float:
    return nu * annuity * (_phi(z_k) - z_k * _phi_tail(z_k))


def _parity(price_payer: float, geom: SwapGeometry, strike: float) -> float:
    return price_payer - geom.annuity * (geom.swap_rate - strike)


def bachelier_price(
    geom: SwapGeometry, m: ExpansionMoments, strike: float, payer: bool = True
) -> SwaptionPrice:
    """Normal-model price ``nu B (phi(z_K) - z_K Phi(-z_K))``."""
    z_k = m.z_strike(strike)
    price = _bachelier_core(m.nu, geom.annuity, z_k)
    if not payer:
        price = _parity(price, geom, strike)
    return SwaptionPrice(price=price, engine="bachelier", z_strike=z_k)


def gc_price(
    geom: SwapGeometry, m: ExpansionMoments, strike: float, payer: bool = True
) -> SwaptionPrice:
    """Skew/kurtosis-corrected price.

    Adds ``nu B phi(z_K) { (mu3/6) z_K + ((mu4-3)/24)(z_K^2 - 1) }`` to the
    normal-model price; collapses to it when ``mu3 = 0, mu4 = 3``.
    """
    z_k = m.z_strike(strike)
    corr = m.mu3 / 6.0 * z_k + (m.mu4 - 3.0) / 24.0 * (z_k**2 - 1.0)
    price = _bachelier_core(m.nu, geom.annuity, z_k)
    price += m.nu * geom.annuity * _phi(z_k) * corr
    if not payer:
        price = _parity(price, geom, strike)
    return SwaptionPrice(
        price=price, engine="gram_charlier", z_strike=z_k, flagged=price < 0.0
    )


def ew_price(
    geom: SwapGeometry, m: ExpansionMoments, strike: float, payer: bool = True
) -> SwaptionPrice:
    """Edgeworth price: the corrected price plus the skew-squared term
    ``nu B phi(z_K) (mu3^2/72)(z_K^4 - 6 z_K^2 + 3)``."""
    z_k = m.z_strike(strike)
    base = gc_price(geom, m, strike, payer=True).price
    price = base + m.nu * geom.annuity * _phi(z_k) * m.mu3**2 / 72.0 * (
        z_k**4 - 6.0 * z_k**2 + 3.0
    )
    if not payer:
        price = _parity(price, geom, strike)
    return SwaptionPrice(
        price=price, engine="edgeworth", z_strike=z_k, flagged=price < 0.0
    )


def gc_smile(m: ExpansionMoments, strike: float) -> float:
    """First-order implied-vol adjustment (terminal-stddev units).

    ``nu1(z_K) = nu { 1 + (mu3/6) z_K + ((mu4-3)/24)(z_K^2 - 1) }``.
    """
    z_k = m.z_strike(strike)
    return m.nu * (
        1.0 + m.mu3 / 6.0 * z_k + (m.mu4 - 3.0) / 24.0 * (z_k**2 - 1.0)
    )


def ew_smile(m: ExpansionMoments, strike: float) -> float:
    """``nu2 = nu1 + nu (mu3^2/72)(z_K^4 - 6 z_K^2 + 3)``."""
    z_k = m.z_strike(strike)
    return gc_smile(m, strike) + m.nu * m.mu3**2 / 72.0 * (
        z_k**4 - 6.0 * z_k**2 + 3.0
    )


def bachelier_implied_vol(
    geom: SwapGeometry,
    price: float,
    strike: float,
    tol: float = 1e-12,
    initial: float | None = None,
) -> float:
    """Invert the normal-model price to a terminal standard deviation.

    Guarded bisection to bracket the root, then Newton (the vol
    sensitivity is ``annuity * phi(z_K)``). ``initial`` seeds the bracket
    search when the caller has a good estimate. Raises
    :class:`InversionError` outside the arbitrage bounds
    ``price > max(annuity (R0 - K), 0)``.
    """
    b = geom.annuity
    intrinsic = max(b * (geom.swap_rate - strike), 0.0)
    if not math.isfinite(price) or price <= intrinsic:
        raise InversionError(
            f"price {price} at or below arbitrage floor {intrinsic}"
        )

    def f(nu: float) -> float:
        z_k = (strike - geom.swap_rate) / nu
        return _bachelier_core(nu, b, z_k) - price

    # ATM closed form as the starting scale; bracket by doubling
    hi = initial if initial and initial > 0.0 else max(price * SQRT_2PI / b, 1e-12)
    while f(hi) < 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise InversionError("failed to bracket implied vol from above")
    lo = hi
    while f(lo) > 0.0:
        lo *= 0.5
        if lo < 1e-300:
            raise InversionError("failed to bracket implied vol from below")

    nu = 0.5 * (lo + hi)
    for _ in range(200):
        val = f(nu)
        if val > 0.0:
            hi = nu
        else:
            lo = nu
        vega = b * _phi((strike - geom.swap_rate) / nu)
        step_ok = vega > 0.0
        if step_ok:
            nxt = nu - val / vega
            step_ok = lo < nxt < hi
        nu_next = nxt if step_ok else 0.5 * (lo + hi)
        if abs(nu_next - nu) <= tol:
            return nu_next
        nu = nu_next
    if hi - lo <= 10.0 * tol:
        return nu
    raise InversionError("implied-vol iteration failed to converge")
