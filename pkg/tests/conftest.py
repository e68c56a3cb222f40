import numpy as np
import pytest

from vemmg.mesh import generate_structured_triangle_mesh


def f_source(x, y):
    return -2.0 * (x * (x - 1.0) + y * (y - 1.0))


def u_exact(x, y):
    return x * (1.0 - x) * y * (1.0 - y)


def grad_u_exact(x, y):
    return (1.0 - 2.0 * x) * y * (1.0 - y), x * (1.0 - x) * (1.0 - 2.0 * y)


@pytest.fixture(scope="session")
def mesh8():
    return generate_structured_triangle_mesh(8)


@pytest.fixture(scope="session")
def mesh16():
    return generate_structured_triangle_mesh(16)


def star_polygon(rng: np.random.Generator, k: int) -> np.ndarray:
    """Random simple polygon, star-shaped with respect to the origin.

    Vertices sit at sorted angles with a guaranteed minimum gap and radii in
    [0.6, 1.4], so edges never degenerate.
    """
    gaps = rng.uniform(0.2, 1.0, size=k)
    angles = 2.0 * np.pi * np.cumsum(gaps) / np.sum(gaps)
    radii = rng.uniform(0.6, 1.4, size=k)
    return np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
