import numpy as np
from hypothesis import strategies as st

from src.measures.radial_density import RadialDensity, radial_grid, unit_ball_volume


def normalized(values, d: int, r_max: float = 2.0) -> RadialDensity:
    values = np.asarray(values, dtype=float)
    grid = radial_grid(r_max, len(values))
    volumes = unit_ball_volume(d) * (grid[1:] ** d - grid[:-1] ** d)
    return RadialDensity(d, grid, values / np.dot(values, volumes))


@st.composite
def radial_densities(draw, d: int = 1, min_cells: int = 16, max_cells: int = 48):
    """Piecewise-constant radial densities with at least one occupied cell"""
    values = draw(st.lists(st.floats(min_value=0.0, max_value=10.0, allow_nan=False, allow_infinity=False),
                           min_size=min_cells, max_size=max_cells))
    values[draw(st.integers(0, len(values) - 1))] += 1.0
    return normalized(values, d)
