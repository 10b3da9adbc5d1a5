import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conormal_mhd.dynamics import State
from conormal_mhd.spectral import (
    GridSpec,
    SpectralVectorField,
    leray_project,
    plan_grid,
    rms,
    vector_to_physical,
    vector_to_spectral,
)

TWO_PI = 2 * math.pi

# acceptance verdicts collected across the session, printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"[acceptance {n:2d}] {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def make_grid(N1=8, N2=8, N3=9, L1=TWO_PI, L2=TWO_PI, L3=TWO_PI):
    return plan_grid(GridSpec(N1, N2, N3, L1, L2, L3))


def random_solenoidal(grid, rng, scale=1.0, band=None, zero_mean=True):
    """Random divergence-free field inside the dealiasing mask (or a tighter band), RMS = scale."""
    shape = (3,) + grid.shape
    coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    keep = grid.mask if band is None else band
    # round trip through physical space makes the coefficients Hermitian
    phys = vector_to_physical(SpectralVectorField(grid, coef * keep))
    c = vector_to_spectral(grid, phys).coef * keep
    if zero_mean:
        c[:, 0, 0, :] = 0
    v = leray_project(SpectralVectorField(grid, c))
    return v * (scale / rms(v))


def half_band(grid):
    """Modes strictly below half the grid in every direction (products stay alias-free)."""
    n1 = np.abs(np.fft.fftfreq(grid.spec.N1, 1 / grid.spec.N1))[:, None, None]
    n2 = np.abs(np.fft.fftfreq(grid.spec.N2, 1 / grid.spec.N2))[None, :, None]
    j = np.arange(grid.spec.N3)[None, None, :]
    return (n1 <= grid.spec.N1 // 4 - 1) & (n2 <= grid.spec.N2 // 4 - 1) & (j <= grid.M // 2 - 1)


def random_state(grid, rng, scale=1.0, eps=0.0, band=None):
    return State(random_solenoidal(grid, rng, scale, band), random_solenoidal(grid, rng, scale, band), 0.0, eps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid8():
    return make_grid(8, 8, 9)
