import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flatbenard.errors import GeometryDegenerate, MissingTimeLayer
from flatbenard.geometry import (Grid, SurfaceField, flat_pack, geometry_pack, harmonic_extend, projection_pi0,
                                 surface_sobolev_norm)
from flatbenard.operators import grad_a_y3


def surface(grid, a, b, c):
    X1, X2 = grid.surface_mesh()
    return a * np.cos(2 * np.pi * X1) + b * np.sin(2 * np.pi * X2) + c * np.cos(2 * np.pi * (X1 - X2))


@pytest.mark.parametrize("bad", [dict(nx=5, ny=8, nz=8), dict(nx=8, ny=2, nz=8), dict(nx=8, ny=8, nz=2),
                                 dict(nx=8, ny=8, nz=8, L1=0.0)])
def test_grid_rejects_bad_sizes(bad):
    with pytest.raises(ValueError):
        Grid(**bad)


def test_flat_pack_is_identity(grid):
    pk = flat_pack(grid, with_time=True)
    assert np.all(pk.J == 1) and np.all(pk.K == 1)
    assert np.abs(pk.A).max() == 0 and np.abs(pk.B).max() == 0
    assert np.allclose(pk.N[2], 1) and np.abs(pk.N[:2]).max() == 0
    assert np.abs(pk.J_t).max() == 0


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(-0.05, 0.05))
def test_pack_identities_hold_for_random_surfaces(a, b, c):
    g = Grid(8, 8, 12)
    pk = geometry_pack(surface(g, a, b, c), g, epsilon=0.5, check=False)
    assert np.abs(pk.J * pk.K - 1).max() < 1e-12
    G = np.moveaxis(pk.grad_phi(), (0, 1), (-2, -1))
    At = np.swapaxes(np.linalg.inv(G), -1, -2)
    assert np.abs(np.moveaxis(pk.Amat, (0, 1), (-2, -1)) - At).max() < 1e-12
    e3 = np.array([0.0, 0.0, 1.0])[:, None, None, None]
    assert np.abs(grad_a_y3(pk) - e3).max() < 1e-12


def test_extension_matches_surface_and_vanishes_at_bottom(grid):
    eta = SurfaceField(surface(grid, 0.1, 0.05, 0.02) + 0.03, grid)
    ext = harmonic_extend(eta, grid, epsilon=0.7)
    assert np.abs(ext[..., -1] - eta.values).max() < 1e-13
    assert np.abs(ext[..., 0]).max() < 1e-13


def test_degenerate_geometry_is_rejected(grid):
    with pytest.raises(GeometryDegenerate) as e:
        geometry_pack(surface(grid, 0.6, 0.0, 0.0), grid, epsilon=1.0, jac_floor=0.25)
    assert e.value.min_jac < 0.25


def test_time_layer_matches_difference_quotient(grid):
    s = surface(grid, 0.1, 0.04, 0.0)
    h = 1e-5
    pk = geometry_pack(0.3 * s, grid, epsilon=0.5, eta_t=s)
    up = geometry_pack((0.3 + h) * s, grid, epsilon=0.5)
    dn = geometry_pack((0.3 - h) * s, grid, epsilon=0.5)
    for name in ("J", "K", "Amat", "N", "Nmag"):
        fd = (getattr(up, name) - getattr(dn, name)) / (2 * h)
        assert np.abs(getattr(pk, name + "_t") - fd).max() < 1e-7, name


def test_second_time_layer_needs_first(grid):
    z = np.zeros((grid.nx, grid.ny))
    with pytest.raises(ValueError):
        geometry_pack(z, grid, eta_tt=z)
    with pytest.raises(MissingTimeLayer):
        flat_pack(grid).require_time_layer()


def test_tangential_projection_kills_normal(grid, rng):
    pk = geometry_pack(surface(grid, 0.1, 0.1, 0.0), grid, epsilon=0.5, check=False)
    v = rng.normal(size=(3, grid.nx, grid.ny))
    t = projection_pi0(v, pk)
    assert np.abs(np.sum(t * pk.N, axis=0)).max() < 1e-13


@pytest.mark.parametrize("s", [0.5, 1.5, 2.5])
def test_surface_norm_of_single_mode(grid, s):
    a = 0.3
    X1, _ = grid.surface_mesh()
    val = surface_sobolev_norm(a * np.cos(2 * np.pi * X1), s, grid) ** 2
    assert val == pytest.approx(a * a * (1 + 4 * np.pi ** 2) ** s / 2, rel=1e-12)


def test_surface_norm_range(grid):
    with pytest.raises(ValueError):
        surface_sobolev_norm(np.zeros((8, 8)), 7.0, grid)
