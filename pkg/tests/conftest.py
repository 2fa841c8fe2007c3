"""Shared fixtures: fixture curve/params, geometries and Monte Carlo samples."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from ddsvlmm.market import ModelParams, YieldCurve, build_swap_geometry, load_curve
from ddsvlmm.mgf import psi_derivatives_at_zero
from ddsvlmm.montecarlo import SimConfig, simulate_swap_rate

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def curve() -> YieldCurve:
    return load_curve((FIXTURES / "curve_30y.csv").read_text())


@pytest.fixture(scope="session")
def params_moderate() -> ModelParams:
    return ModelParams(
        a=0.05, b=0.09, c=0.44, d=0.11,
        kappa=1.0, theta=1.0, epsilon=0.5, rho=-0.3, delta=0.02, v0=1.0,
    )


@pytest.fixture(scope="session")
def params_small_eps(params_moderate) -> ModelParams:
    from dataclasses import replace

    return replace(params_moderate, epsilon=0.15)


@pytest.fixture(scope="session")
def geom_5x10(curve, params_moderate):
    return build_swap_geometry(curve, params_moderate, 5, 15)


@pytest.fixture(scope="session")
def sol_5x10(geom_5x10, params_moderate):
    return psi_derivatives_at_zero(geom_5x10, params_moderate)


@pytest.fixture(scope="session")
def mc_sample_moderate(geom_5x10, params_moderate) -> np.ndarray:
    """10^6-path terminal sample under the moderate fixture."""
    cfg = SimConfig(paths=1_000_000, steps_per_year=24, seed=20160704)
    return simulate_swap_rate(geom_5x10, params_moderate, cfg)


@pytest.fixture(scope="session")
def geom_small_eps(curve, params_small_eps):
    return build_swap_geometry(curve, params_small_eps, 5, 15)


@pytest.fixture(scope="session")
def mc_sample_small_eps(geom_small_eps, params_small_eps) -> np.ndarray:
    """10^6-path sample at small vol-of-vol (moment-oracle fixture)."""
    cfg = SimConfig(paths=1_000_000, steps_per_year=24, seed=777)
    return simulate_swap_rate(geom_small_eps, params_small_eps, cfg)


def random_admissible(rng: np.random.Generator) -> ModelParams:
    """Draw an admissible parameter set (Feller holds, |rho| <= 0.9)."""
    kappa = rng.uniform(0.3, 3.0)
    theta = rng.uniform(0.3, 3.0)
    eps_cap = 0.95 * math.sqrt(2.0 * kappa * theta)
    epsilon = min(rng.uniform(0.05, 0.6), eps_cap)
    return ModelParams(
        a=rng.uniform(0.0, 0.15),
        b=rng.uniform(0.0, 0.15),
        c=rng.uniform(0.05, 1.5),
        d=rng.uniform(0.01, 0.3),
        kappa=kappa,
        theta=theta,
        epsilon=epsilon,
        rho=rng.uniform(-0.9, 0.9),
        delta=rng.uniform(0.0, 0.05),
        v0=rng.uniform(0.5, 1.5),
    )


def random_swap_indices(rng: np.random.Generator, n_forwards: int = 30) -> tuple[int, int]:
    m = int(rng.integers(1, 21))
    n = m + int(rng.integers(1, min(11, n_forwards - m + 1)))
    return m, n
