"""Closed-form transform of the frozen swap-rate dynamics.

The moment generating function of the terminal swap rate has the separable
form ``exp(A(tau, z) + B(tau, z) V0 + z R0)`` in backward time
``tau = T_m - t``. With piecewise-constant coefficients, ``A`` and ``B``
accumulate bucket by bucket in closed form; their z-derivatives at
``z = 0`` follow the same bucket recursion and yield the raw moments of
the swap rate without any numerical differentiation or integration.

Numerical notes
---------------
* The root difference ``a - d`` is evaluated through the conjugate
  identity ``(a - d)(a + d) = lambda^2 eps^2 z^2``, which is exact and
  avoids catastrophic cancellation as ``eps -> 0`` or ``z -> 0``.
* The bucket log-term is rearranged as ``(a - d) u - 2 log1p(x)`` with
  ``x = h3 (1 - e^{-d u}) / (2 d)``. This is algebraically identical to
  the direct form and keeps the complex logarithm on its principal branch
  (the ``d u`` winding is carried exactly by the linear term).
* Flipping the sign of ``d`` leaves the closed form invariant, so the
  principal square root (``Re d >= 0``) is used throughout; no rotation
  count is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


from .errors import (
    InvalidParametersError,
    SingularEvaluationError,
    StripViolationError,
)
from .market import ModelParams, SwapGeometry

__all__ = [
    "BucketCoeffs",
    "MgfSolution",
    "solve_order0",
    "solve_order0_mp",
    "solve_derivatives",
    "psi_derivatives_at_zero",
]

_MAX_ORDER = 4


def _log1p_any(x):
    """log(1 + x), accurate near 0, for real or complex arrays."""
    x = np.asarray(x)
    if not np.iscomplexobj(x):
        return np.log1p(x)
    small = np.abs(x) < 1e-4
    if not small.any():
        return np.log(1.0 + x)
    # quartic Horner truncation of log1p; |error| < |x|^5 / 5 on the small set
    series = x * (1.0 + x * (-0.5 + x * (1.0 / 3.0 - 0.25 * x)))
    full = np.log(np.where(small, 1.0, 1.0 + x))
    return np.where(small, series, full)


def _split_roots(a0, d0, s):
    """Stable (a0 + d0, a0 - d0) given s = a0^2 - d0^2.

    Whichever of the two combinations suffers cancellation is recovered
    from the exact product identity instead.
    """
    direct_sum = a0 + d0
    direct_diff = a0 - d0
    use_sum = np.real(a0) >= 0.0
    if use_sum.all():
        safe_sum = np.where(direct_sum == 0.0, 1.0, direct_sum)
        return direct_sum, s / safe_sum
    safe_sum = np.where(direct_sum == 0.0, 1.0, direct_sum)
    safe_diff = np.where(direct_diff == 0.0, 1.0, direct_diff)
    ap = np.where(use_sum, direct_sum, s / safe_diff)
    am = np.where(use_sum, s / safe_sum, direct_diff)
    return ap, am


def solve_order0(geom: SwapGeometry, params: ModelParams, z):
    """Terminal ``(A, B)`` of the bucket recursion at transform argument ``z``.

    Parameters
    ----------
    geom : SwapGeometry
        Frozen geometry with per-bucket ``(lambda, rho, xi)``.
    params : ModelParams
        Model parameters (``kappa, theta, epsilon`` enter here).
    z : float, complex or ndarray
        Transform argument(s). Real arguments must stay inside the strip
        where the discriminant remains non-negative on every bucket.

    Returns
    -------
    (A, B)
        Scalars for scalar ``z``, arrays matching ``z`` otherwise.

    Raises
    ------
    StripViolationError
        Real ``z`` outside the finite-moment strip on some bucket.
    SingularEvaluationError
        The bucket log-term hit its branch singularity (``h4 = 0``).
    """
    z_in = np.asarray(z)
    scalar = z_in.ndim == 0
    zz = np.atleast_1d(z_in).astype(complex if np.iscomplexobj(z_in) else float)
    kappa, theta, eps = params.kappa, params.theta, params.epsilon
    eps2 = eps * eps

    A = np.zeros_like(zz)
    B = np.zeros_like(zz)
    widths = geom.bucket_widths()
    for j in range(geom.n_buckets):
        lam, rho, xi = geom.lam[j], geom.rho[j], geom.xi[j]
        u = widths[j]
        a0 = kappa * xi - rho * eps * lam * zz
        s = (lam * eps) ** 2 * zz * zz
        disc = a0 * a0 - s
        if not np.iscomplexobj(zz) and np.any(disc < 0.0):
            raise StripViolationError(
                f"argument outside the finite-moment strip on bucket {j}"
            )
        d0 = np.sqrt(disc)
        ap, am = _split_roots(a0, d0, s)
        h1 = ap - eps2 * B
        h3 = am - eps2 * B
        em = np.exp(-d0 * u)
        # (1 - e^{-d u}) / (2 d), with its u/2 limit at a double root
        safe_d = np.where(d0 == 0.0, 1.0, d0)
        ratio = np.where(d0 == 0.0, u / 2.0, (1.0 - em) / (2.0 * safe_d))
        x = h3 * ratio
        q = 1.0 + x
        if np.any(np.abs(q) < 1e-14) or np.any(~np.isfinite(q)):
            raise SingularEvaluationError(j)
        if not np.iscomplexobj(zz) and np.any(q <= 0.0):
            raise StripViolationError(
                f"transform log-argument crossed zero on bucket {j}"
            )
        A = A + kappa * theta / eps2 * (am * u - 2.0 * _log1p_any(x))
        B = B + h1 * h3 * ratio / (q * eps2)
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(B)):
        raise SingularEvaluationError(
            geom.n_buckets - 1, "non-finite transform accumulation"
        )
    if scalar:
        return A[0], B[0]
    return A, B


def solve_order0_mp(geom: SwapGeometry, params: ModelParams, z, dps: int = 50):
    """Extended-precision twin of :func:`solve_order0` (scalar ``z`` only).

    Used by the finite-difference oracle, where double precision cannot
    separate fourth-derivative stencils from rounding noise.
    """
    with mp.workdps(dps):
        zz = mp.mpmathify(z)
        kappa, theta = mp.mpf(params.kappa), mp.mpf(params.theta)
        eps = mp.mpf(params.epsilon)
        eps2 = eps * eps
        A = mp.mpf(0)
        B = mp.mpf(0)
        widths = geom.bucket_widths()
        for j in range(geom.n_buckets):
            lam, rho, xi = mp.mpf(geom.lam[j]), mp.mpf(geom.rho[j]), mp.mpf(geom.xi[j])
            u = mp.mpf(widths[j])
            a0 = kappa * xi - rho * eps * lam * zz
            s = (lam * eps * zz) ** 2
            d0 = mp.sqrt(a0 * a0 - s)
            if mp.re(a0) >= 0:
                ap = a0 + d0
                am = s / ap if ap != 0 else a0 - d0
            else:
                am = a0 - d0
                ap = s / am
            h1 = ap - eps2 * B
            h3 = am - eps2 * B
            em = mp.e ** (-d0 * u)
            ratio = (1 - em) / (2 * d0) if d0 != 0 else u / 2
            x = h3 * ratio
            q = 1 + x
            if abs(q) < mp.mpf("1e-30"):
                raise SingularEvaluationError(j)
            A += kappa * theta / eps2 * (am * u - 2 * mp.log(q))
            B += h1 * h3 * ratio / (q * eps2)
        return A, B


@dataclass(frozen=True)
class BucketCoeffs:
    """Derivative coefficients of the transform exponent at ``z = 0``.

    ``A_hist[j, k]`` and ``B_hist[j, k]`` hold the k-th z-derivative of A
    and B at bucket boundary ``tau_j`` (row 0 is the zero boundary
    condition, the last row the terminal values at ``tau_m``).
    """

    A_hist: np.ndarray
    B_hist: np.ndarray

    @property
    def A_terminal(self) -> np.ndarray:
        return self.A_hist[-1]

    @property
    def B_terminal(self) -> np.ndarray:
        return self.B_hist[-1]


_ERR_MESSAGES = {
    1: "kappa * xi must be positive at z = 0",
    2: "branch singularity (h4 = 0)",
    3: "derivative recursion overflow",
}


@njit(cache=True)
def _derivative_buckets(lam_arr, rho_arr, xi_arr, widths, kappa, theta, eps):
    """Bucket loop of the z = 0 derivative recursion (orders 1..4).

    Returns the boundary-value histories plus an error code/bucket pair
    (0 means success); callers translate codes into exceptions.
    """
    eps2 = eps * eps
    nb = lam_arr.size
    A_hist = np.zeros((nb + 1, 5))
    B_hist = np.zeros((nb + 1, 5))

    A1 = A2 = A3 = A4 = 0.0
    B1 = B2 = B3 = B4 = 0.0
    for j in range(nb):
        lam, rho, xi = lam_arr[j], rho_arr[j], xi_arr[j]
        u = widths[j]
        le2 = (lam * eps) ** 2

        a0 = kappa * xi
        if a0 <= 0.0:
            return A_hist, B_hist, 1, j
        d0 = a0  # exact positive root: sqrt(a0^2 - 0)
        a1 = -rho * eps * lam
        # (a0 a1 - lam^2 eps^2 z) / d0 reduces to a1 exactly at z = 0; the
        # bitwise equality keeps B^(1) identically zero (martingale channel)
        d1 = a1
        d2 = (a1 * a1 - le2 - d1 * d1) / d0
        d3 = -3.0 * d2 * d1 / d0
        d4 = -3.0 * d3 * d1 / d0 - 3.0 * d2 * d2 / d0 + 3.0 * d2 * d1 * d1 / (d0 * d0)

        E = math.exp(d0 * u)
        h1_0 = a0 + d0  # B^(0) = 0 at z = 0 along the whole recursion
        h2_0 = 1.0 - E
        h3_0 = a0 - d0
        h4_0 = h3_0 + h1_0 * (h2_0 - 1.0)
        h5_0 = h1_0 * h2_0 * h3_0

        h1_1 = a1 + d1 - eps2 * B1
        h2_1 = -d1 * u * E
        h3_1 = a1 - d1 - eps2 * B1
        h4_1 = h3_1 + h1_1 * (h2_0 - 1.0) + h1_0 * h2_1
        h5_1 = h1_1 * h2_0 * h3_0 + h1_0 * h2_1 * h3_0 + h1_0 * h2_0 * h3_1

        h1_2 = d2 - eps2 * B2
        h2_2 = -d2 * u * E + d1 * u * h2_1
        h3_2 = -d2 - eps2 * B2
        h4_2 = h3_2 + h1_2 * (h2_0 - 1.0) + h1_0 * h2_2 + 2.0 * h1_1 * h2_1
        h5_2 = (
            h1_2 * h2_0 * h3_0
            + h1_0 * h2_2 * h3_0
            + h1_0 * h2_0 * h3_2
            + 2.0 * (h1_1 * h2_1 * h3_0 + h1_1 * h2_0 * h3_1 + h1_0 * h2_1 * h3_1)
        )

        h1_3 = d3 - eps2 * B3
        h2_3 = -d3 * u * E + 2.0 * d2 * u * h2_1 + d1 * u * h2_2
        h3_3 = -d3 - eps2 * B3
        h4_3 = (
            h3_3
            + h1_3 * (h2_0 - 1.0)
            + h1_0 * h2_3
            + 3.0 * h1_2 * h2_1
            + 3.0 * h1_1 * h2_2
        )
        h5_3 = (
            h1_3 * h2_0 * h3_0
            + h1_0 * h2_3 * h3_0
            + h1_0 * h2_0 * h3_3
            + 3.0
            * (
                h1_2 * h2_1 * h3_0
                + h1_2 * h2_0 * h3_1
                + h1_1 * h2_2 * h3_0
                + h1_0 * h2_2 * h3_1
                + h1_1 * h2_0 * h3_2
                + h1_0 * h2_1 * h3_2
            )
            + 6.0 * h1_1 * h2_1 * h3_1
        )

        h1_4 = d4 - eps2 * B4
        h2_4 = (
            -d4 * u * E
            + d1 * u * h2_3
            + 3.0 * d3 * u * h2_1
            + 3.0 * d2 * u * h2_2
        )
        h3_4 = -d4 - eps2 * B4
        h4_4 = (
            h3_4
            + h1_4 * (h2_0 - 1.0)
            + h1_0 * h2_4
            + 4.0 * h1_3 * h2_1
            + 4.0 * h1_1 * h2_3
            + 6.0 * h1_2 * h2_2
        )
        h5_4 = (
            h1_4 * h2_0 * h3_0
            + h1_0 * h2_4 * h3_0
            + h1_0 * h2_0 * h3_4
            + 4.0
            * (
                h1_3 * h2_1 * h3_0
                + h1_3 * h2_0 * h3_1
                + h1_1 * h2_3 * h3_0
                + h1_0 * h2_3 * h3_1
                + h1_1 * h2_0 * h3_3
                + h1_0 * h2_1 * h3_3
            )
            + 6.0 * (h1_2 * h2_2 * h3_0 + h1_2 * h2_0 * h3_2 + h1_0 * h2_2 * h3_2)
            + 12.0 * (h1_2 * h2_1 * h3_1 + h1_1 * h2_2 * h3_1 + h1_1 * h2_1 * h3_2)
        )

        r4 = h4_0
        if abs(r4) < 1e-300:
            return A_hist, B_hist, 2, j
        kt = kappa * theta / eps2

        At1 = kt * ((a1 + d1) * u - 2.0 * (h4_1 / r4 - d1 / d0))
        Bt1 = (h5_1 / r4 - h5_0 * h4_1 / r4**2) / eps2

        At2 = kt * (
            d2 * u
            - 2.0 * (h4_2 / r4 - d2 / d0 - h4_1**2 / r4**2 + d1**2 / d0**2)
        )
        Bt2 = (
            h5_2 / r4
            - h5_0 * h4_2 / r4**2
            - 2.0 * h5_1 * h4_1 / r4**2
            + 2.0 * h5_0 * h4_1**2 / r4**3
        ) / eps2

        At3 = kt * (
            d3 * u
            - 2.0
            * (
                h4_3 / r4
                - d3 / d0
                - 3.0 * h4_2 * h4_1 / r4**2
                + 3.0 * d2 * d1 / d0**2
                + 2.0 * h4_1**3 / r4**3
                - 2.0 * d1**3 / d0**3
            )
        )
        Bt3 = (
            h5_3 / r4
            - h5_0 * h4_3 / r4**2
            - 3.0 * h5_2 * h4_1 / r4**2
            - 3.0 * h5_1 * h4_2 / r4**2
            + 6.0 * h5_0 * h4_2 * h4_1 / r4**3
            + 6.0 * h5_1 * h4_1**2 / r4**3
            - 6.0 * h5_0 * h4_1**3 / r4**4
        ) / eps2

        At4 = kt * (
            d4 * u
            - 2.0
            * (
                h4_4 / r4
                - d4 / d0
                - 4.0 * h4_3 * h4_1 / r4**2
                + 4.0 * d3 * d1 / d0**2
                - 3.0 * h4_2**2 / r4**2
                + 3.0 * d2**2 / d0**2
                + 12.0 * h4_2 * h4_1**2 / r4**3
                - 12.0 * d2 * d1**2 / d0**3
                - 6.0 * h4_1**4 / r4**4
                + 6.0 * d1**4 / d0**4
            )
        )
        Bt4 = (
            h5_4 / r4
            - h5_0 * h4_4 / r4**2
            - 4.0 * h5_3 * h4_1 / r4**2
            - 4.0 * h5_1 * h4_3 / r4**2
            - 6.0 * h5_2 * h4_2 / r4**2
            + 8.0 * h5_0 * h4_3 * h4_1 / r4**3
            + 12.0 * h5_2 * h4_1**2 / r4**3
            + 24.0 * h5_1 * h4_2 * h4_1 / r4**3
            + 6.0 * h5_0 * h4_2**2 / r4**3
            - 36.0 * h5_0 * h4_2 * h4_1**2 / r4**4
            - 24.0 * h5_1 * h4_1**3 / r4**4
            + 24.0 * h5_0 * h4_1**4 / r4**5
        ) / eps2

        A1 += At1
        A2 += At2
        A3 += At3
        A4 += At4
        B1 += Bt1
        B2 += Bt2
        B3 += Bt3
        B4 += Bt4
        if not (math.isfinite(A4) and math.isfinite(B4) and math.isfinite(A2)):
            return A_hist, B_hist, 3, j
        A_hist[j + 1, 1] = A1
        A_hist[j + 1, 2] = A2
        A_hist[j + 1, 3] = A3
        A_hist[j + 1, 4] = A4
        B_hist[j + 1, 1] = B1
        B_hist[j + 1, 2] = B2
        B_hist[j + 1, 3] = B3
        B_hist[j + 1, 4] = B4
    return A_hist, B_hist, 0, -1


def solve_derivatives(geom: SwapGeometry, params: ModelParams) -> BucketCoeffs:
    """Bucket recursion for the z-derivatives of ``(A, B)`` at ``z = 0``.

    Implements orders 1..4 of the derivative scheme: per bucket, the
    derivatives of the root pair ``(a, d)``, the five auxiliary products
    ``h1..h5``, and from them the increments of ``A^{(k)}, B^{(k)}``.
    At ``z = 0`` the positive root satisfies ``d = a = kappa * xi``
    exactly, which keeps every order free of cancellation as
    ``epsilon -> 0``.
    """
    A_hist, B_hist, code, bucket = _derivative_buckets(
        np.ascontiguousarray(geom.lam),
        np.ascontiguousarray(geom.rho),
        np.ascontiguousarray(geom.xi),
        np.ascontiguousarray(geom.bucket_widths()),
        params.kappa,
        params.theta,
        params.epsilon,
    )
    if code == 2:
        raise SingularEvaluationError(bucket)
    if code != 0:
        raise InvalidParametersError(f"{_ERR_MESSAGES[code]} (bucket {bucket})")
    return BucketCoeffs(A_hist=A_hist, B_hist=B_hist)


@dataclass(frozen=True)
class MgfSolution:
    """Transform derivatives at ``z = 0`` for one swaption geometry."""

    psi: tuple[float, float, float, float, float]
    A: np.ndarray
    B: np.ndarray
    swap_rate: float
    v0: float

    @property
    def psi1(self) -> float:
        return self.psi[1]

    @property
    def variance(self) -> float:
        return self.psi[2] - self.psi[1] ** 2


def psi_derivatives_at_zero(geom: SwapGeometry, params: ModelParams) -> MgfSolution:
    """Raw transform derivatives ``psi^(0)..psi^(4)`` at ``z = 0``.

    ``psi^(0) = 1`` exactly; ``psi^(1)`` equals the frozen swap rate
    (martingale property). The chain below converts exponent derivatives
    into transform derivatives.

    Raises
    ------
    InvalidParametersError
        If the implied variance ``psi^(2) - psi^(1)^2`` is not positive.
    """
    coeffs = solve_derivatives(geom, params)
    A = coeffs.A_terminal
    B = coeffs.B_terminal
    v = params.v0
    r0 = geom.swap_rate

    psi0 = 1.0
    psi1 = (A[1] + B[1] * v + r0) * psi0
    psi2 = (A[2] + B[2] * v) * psi0 + psi1**2 / psi0
    psi3 = (
        (A[3] + B[3] * v) * psi0
        + (A[2] + B[2] * v) * psi1
        + 2.0 * psi2 * psi1 / psi0
        - psi1**3 / psi0**2
    )
    psi4 = (
        (A[4] + B[4] * v) * psi0
        + 2.0 * (A[3] + B[3] * v) * psi1
        + (A[2] + B[2] * v) * psi2
        + 2.0 * psi3 * psi1 / psi0
        + 2.0 * psi2**2 / psi0
        - 5.0 * psi2 * psi1**2 / psi0**2
        + 2.0 * psi1**4 / psi0**3
    )

    if psi2 - psi1**2 <= 0.0:
        raise InvalidParametersError(
            f"non-positive swap-rate variance {psi2 - psi1 ** 2}"
        )
    return MgfSolution(
        psi=(psi0, psi1, psi2, psi3, psi4),
        A=A,
        B=B,
        swap_rate=r0,
        v0=v,
    )
