"""Shared fixtures: oracle tables are expensive, so they are built once per
session; finite-difference jet surrogates are the independent route used to
cross-check taped residual evaluators against stored solutions."""

import numpy as np
import pytest

from hompinn.autodiff import Jet2, Tape
from hompinn.oracle import solve_gray_scott_steady, solve_multisolution_1d

GS_LAMBDA = np.array([2.5e-4, 5.0e-4, 4.0e-2, 6.5e-2])


@pytest.fixture(scope="session")
def ex1_table():
    return solve_multisolution_1d("ex1-bratu-quartic", [1.2], grid_n=2001)


@pytest.fixture(scope="session")
def ex2_table():
    return solve_multisolution_1d("ex2-quartic-quadratic", [18.0], grid_n=2001)


@pytest.fixture(scope="session")
def gs_table():
    return solve_gray_scott_steady(GS_LAMBDA, grid_n=64)


def fd_jets_1d(values: np.ndarray, h: float, tape: Tape | None = None) -> Jet2:
    """Finite-difference jet surrogate at the interior nodes of a 1-D grid."""
    tape = tape if tape is not None else Tape()
    u = values
    val = tape.constant(u[1:-1])
    d1 = tape.constant((u[2:] - u[:-2]) / (2.0 * h))
    d2 = tape.constant((u[:-2] - 2.0 * u[1:-1] + u[2:]) / (h * h))
    return Jet2(val, (d1,), (d2,))


def fd_jets_2d(values: np.ndarray, h: float, tape: Tape | None = None) -> Jet2:
    """Finite-difference jet surrogate at the interior nodes of a 2-D grid."""
    tape = tape if tape is not None else Tape()
    u = values
    core = u[1:-1, 1:-1]
    val = tape.constant(core)
    d1x = tape.constant((u[2:, 1:-1] - u[:-2, 1:-1]) / (2.0 * h))
    d1y = tape.constant((u[1:-1, 2:] - u[1:-1, :-2]) / (2.0 * h))
    d2x = tape.constant((u[2:, 1:-1] - 2.0 * core + u[:-2, 1:-1]) / (h * h))
    d2y = tape.constant((u[1:-1, 2:] - 2.0 * core + u[1:-1, :-2]) / (h * h))
    return Jet2(val, (d1x, d1y), (d2x, d2y))


def one_sided_derivative(u: np.ndarray, h: float) -> float:
    """Second-order one-sided derivative at index 0 of a 1-D slice."""
    return (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
