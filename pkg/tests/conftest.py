import numpy as np
import pytest

from ttiga.splines import Basis1D, KnotVector


@pytest.fixture
def circle_basis() -> Basis1D:
    """Quadratic rational basis of the 9-point full circle."""
    knots = np.array(
        [0, 0, 0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1, 1, 1], dtype=float
    )
    s = 1.0 / np.sqrt(2.0)
    weights = np.array([1, s, 1, s, 1, s, 1, s, 1], dtype=float)
    return Basis1D(KnotVector(knots, 2), weights)


@pytest.fixture
def circle_controls() -> np.ndarray:
    """Control points tracing the unit circle with :func:`circle_basis`."""
    return np.array(
        [
            [1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0],
            [-1, -1], [0, -1], [1, -1], [1, 0],
        ],
        dtype=float,
    )


@pytest.fixture
def quadratic_basis() -> Basis1D:
    """Single-span quadratic Bernstein-like basis on [0, 1]."""
    return Basis1D(KnotVector(np.array([0, 0, 0, 1, 1, 1], dtype=float), 2), None)
