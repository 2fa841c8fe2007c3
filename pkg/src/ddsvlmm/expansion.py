"""Hermite polynomials and skew/kurtosis density corrections.

The Hermite convention here is the derivative one, ``H_n(z) phi(z) =
phi^(n)(z)``, so ``H_1 = -z``, ``H_2 = z^2 - 1``, ``H_3 = -z^3 + 3z``,
``H_4 = z^4 - 6z^2 + 3``. The corrected densities adjust the standard
normal for the skewness ``mu3`` and kurtosis ``mu4`` of the standardized
swap rate; both keep unit mass, zero mean and unit variance for any
moment pair because the correction terms are orthogonal to 1, z, z^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ExpansionInvalidError, NumericalError
from .mgf import MgfSolution

__all__ = [
    "MAX_HERMITE_ORDER",
    "hermite",
    "ExpansionMoments",
    "standardized_moments",
    "gc_density",
    "ew_density",
    "density_positivity",
]

MAX_HERMITE_ORDER = 6


def _hermite_coefficients(max_order: int) -> list[np.ndarray]:
    """Coefficient arrays (highest power first) via H_{n+1} = H_n' - z H_n."""
    coeffs = [np.array([1.0])]
    for _ in range(max_order):
        h = coeffs[-1]
        dh = np.polyder(h) if h.size > 1 else np.array([0.0])
        zh = np.concatenate([h, [0.0]])  # z * H_n
        pad = np.zeros(zh.size - dh.size)
        coeffs.append(np.concatenate([pad, dh]) - zh)
    return coeffs


_HERMITE = _hermite_coefficients(MAX_HERMITE_ORDER)


def hermite(n: int, z):
    """Hermite polynomial ``H_n(z)`` under the derivative convention.

    Accepts scalars or arrays; ``0 <= n <= 6``.
    """
    if not 0 <= n <= MAX_HERMITE_ORDER:
        raise ValueError(f"order must lie in 0..{MAX_HERMITE_ORDER}, got {n}")
    val = np.polyval(_HERMITE[n], np.asarray(z, dtype=float))
    return float(val) if val.ndim == 0 else val


def _phi(z):
    return np.exp(-0.5 * np.square(z)) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ExpansionMoments:
    """Standard deviation and standardized higher moments of the swap rate.

    ``nu`` is the terminal standard deviation in absolute rate units (not
    annualized); ``mu3``, ``mu4`` are the third and fourth moments of the
    standardized variable; ``r0`` the frozen forward swap rate.
    """

    nu: float
    mu3: float
    mu4: float
    r0: float

    def z_strike(self, strike: float) -> float:
        """Standardized moneyness ``(K - R0) / nu``."""
        return (strike - self.r0) / self.nu


def standardized_moments(sol: MgfSolution) -> ExpansionMoments:
    """Convert raw transform derivatives into standardized moments.

    Uses the binomial recentering ``mu_k = nu^-k sum_j C(k,j) psi^(j)
    (-R0)^{k-j}`` with ``nu^2 = psi^(2) - psi^(1)^2``. The first two
    moments are recomputed the same way as internal consistency checks.
    """
    psi = sol.psi
    r0 = sol.swap_rate
    var = psi[2] - psi[1] ** 2
    if var <= 0.0:
        raise ExpansionInvalidError(f"non-positive variance {var}")
    nu = math.sqrt(var)

    def central(k: int) -> float:
        return sum(
            math.comb(k, j) * psi[j] * (-r0) ** (k - j) for j in range(k + 1)
        )

    mu1 = central(1) / nu
    mu2 = central(2) / nu**2
    mu3 = central(3) / nu**3
    mu4 = central(4) / nu**4
    if abs(mu1) > 1e-7 or abs(mu2 - 1.0) > 1e-7:
        raise NumericalError(
            f"internal moment checks failed: mu1={mu1}, mu2={mu2}"
        )
    if mu4 < 1.0 + mu3**2:
        raise ExpansionInvalidError(
            f"moment inequality violated: mu4={mu4} < 1 + mu3^2={1.0 + mu3 ** 2}"
        )
    return ExpansionMoments(nu=nu, mu3=mu3, mu4=mu4, r0=r0)


def gc_density(m: ExpansionMoments, z):
    """Fourth-order skew/kurtosis-corrected normal density.

    ``g1(z) = phi(z) { 1 - (mu3/6) H3(z) + ((mu4-3)/24) H4(z) }``.
    Not clipped: may go negative for extreme moment pairs.
    """
    z = np.asarray(z, dtype=float)
    val = _phi(z) * (
        1.0 - m.mu3 / 6.0 * hermite(3, z) + (m.mu4 - 3.0) / 24.0 * hermite(4, z)
    )
    return float(val) if val.ndim == 0 else val


def ew_density(m: ExpansionMoments, z):
    """Edgeworth refinement ``g2(z) = g1(z) + phi(z) (mu3^2/72) H6(z)``."""
    z = np.asarray(z, dtype=float)
    val = gc_density(m, z) + _phi(z) * m.mu3**2 / 72.0 * hermite(6, z)
    return float(val) if val.ndim == 0 else val


def density_positivity(m: ExpansionMoments, edgeworth: bool = True) -> tuple[bool, float]:
    """Scan a density on [-6, 6] (step 0.01) and report its minimum.

    Diagnostic only; the pricing formulas use the unclipped expansion
    regardless.
    """
    grid = np.arange(-6.0, 6.0 + 1e-12, 0.01)
    vals = ew_density(m, grid) if edgeworth else gc_density(m, grid)
    vmin = float(np.min(vals))
    return vmin >= 0.0, vmin
