"""Swaption pricing and calibration for the DD-SV-LMM.

Closed-form Gram-Charlier/Edgeworth swaption prices and smile formulas
built from analytically differentiated moment generating functions, with a
contour-integration reference pricer, a log-Euler Monte Carlo validator
and a budgeted derivative-free calibrator.
"""

from .calibration import (
    CalibrationResult,
    CalibrationSpec,
    calibrate,
    objective,
    plan_surface,
)
from .expansion import ExpansionMoments, ew_density, gc_density, hermite, standardized_moments
from .market import (
    ModelParams,
    SwapGeometry,
    SwaptionQuote,
    VolSurface,
    YieldCurve,
    build_swap_geometry,
    effective_coefficients,
    load_curve,
    load_vols,
)
from .mgf import MgfSolution, psi_derivatives_at_zero, solve_derivatives, solve_order0
from .montecarlo import SimConfig, mc_price_and_ci, simulate_swap_rate
from .oracle import (
    ContourConfig,
    contour_price,
    mgf_fd_derivatives,
    quadrature_payoff_price,
    riccati_rk4,
)
from .pricing import (
    SwaptionPrice,
    bachelier_implied_vol,
    bachelier_price,
    ew_price,
    ew_smile,
    gc_price,
    gc_smile,
)

__version__ = "0.1.0"
