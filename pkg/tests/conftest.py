import numpy as np
import pytest

from gpopinf.data import collect_snapshots
from gpopinf.fom import allen_cahn_1d_fom, wave_fom
from gpopinf.integrators import TimeGrid
from gpopinf.pod import pod_basis, pod_basis_block2


@pytest.fixture(scope="session")
def wave_data():
    """Wave snapshots at n=200, dt=1e-3, T=5 with a block basis of r=30."""
    spec = wave_fom(200)
    grid = TimeGrid.until(5.0, 1e-3)
    snaps = collect_snapshots(spec, grid)
    basis = pod_basis_block2(snaps.Y[:200], snaps.Y[200:], 30)
    return spec, grid, snaps, basis


@pytest.fixture(scope="session")
def ac_data():
    """Allen-Cahn snapshots at n=100, dt=1e-3, T=1 with a basis of r=6 (numerical rank is 13)."""
    spec = allen_cahn_1d_fom(100)
    grid = TimeGrid.until(1.0, 1e-3)
    snaps = collect_snapshots(spec, grid)
    return spec, grid, snaps, pod_basis(snaps.Y, 6)


def random_orthonormal(rng, n, r):
    return np.linalg.qr(rng.standard_normal((n, r)))[0]
