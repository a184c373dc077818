import logging
import os

import numpy as np
import pandas as pd

from src.utils.error_handler import DensityError
from .radial_density import RadialDensity, radial_grid


def metadata_path(path: str) -> str:
    return f"{path}.meta"


def save_density(rho: RadialDensity, path: str):
    """Write `r,value` at cell midpoints plus a key-value sidecar with d and atom_mass.

    Non-uniform grids also store their cell edges in the sidecar.
    """
    frame = pd.DataFrame({'r': rho.midpoints, 'value': rho.values})
    frame.to_csv(path, index=False, float_format='%.17g')

    with open(metadata_path(path), 'w') as f:
        f.write(f"d = {rho.dimension}\n")
        f.write(f"atom_mass = {rho.atom_mass:.17g}\n")
        f.write(f"r_max = {rho.r_max:.17g}\n")
        f.write(f"unit_mass = {str(rho.unit_mass).lower()}\n")
        if not rho.uniform_grid:
            f.write(f"edges = {' '.join(f'{edge:.17g}' for edge in rho.grid)}\n")

    logging.info(f"Saved density with {rho.size} cells to {path}")


def _read_metadata(path: str) -> dict:
    meta = {}
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise DensityError(f"{path} line {number}: expected key = value")
            key, value = (part.strip() for part in line.split('=', 1))
            meta[key] = value
    return meta


def load_density(path: str) -> RadialDensity:
    """Inverse of `save_density`"""
    sidecar = metadata_path(path)
    if not os.path.exists(sidecar):
        raise DensityError(f"missing metadata sidecar {sidecar}")
    meta = _read_metadata(sidecar)
    try:
        d = int(meta['d'])
        atom_mass = float(meta.get('atom_mass', 0.0))
        unit_mass = meta.get('unit_mass', 'true') == 'true'
        edges = np.array(meta['edges'].split(), dtype=float) if 'edges' in meta else None
    except (KeyError, ValueError) as e:
        raise DensityError(f"bad metadata in {sidecar}: {e}")

    frame = pd.read_csv(path, comment='#')
    if list(frame.columns) != ['r', 'value']:
        raise DensityError(f"{path}: expected header r,value, got {','.join(frame.columns)}")
    values = frame['value'].to_numpy(dtype=float)
    M = len(values)
    if edges is not None:
        if len(edges) != M + 1:
            raise DensityError(f"{sidecar}: expected {M + 1} edges, got {len(edges)}")
        return RadialDensity(d, edges, values, atom_mass=atom_mass, unit_mass=unit_mass, uniform_grid=False)

    # the sidecar extent is exact; midpoints only fix it up to rounding
    r_max = float(meta['r_max']) if 'r_max' in meta else 2.0 * frame['r'].iloc[-1] * M / (2 * M - 1)
    grid = radial_grid(r_max, M)
    if not np.allclose(0.5 * (grid[:-1] + grid[1:]), frame['r'].to_numpy(), rtol=1e-9, atol=0):
        raise DensityError(f"{path}: radii are not the midpoints of a uniform grid")
    return RadialDensity(d, grid, values, atom_mass=atom_mass, unit_mass=unit_mass)
