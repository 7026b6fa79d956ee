import numpy as np
import pytest

from flatbenard.data_compat import (build_initial_data, compatibility_residual, forcing_closed_form,
                                    forcing_recursion, time_derivative)
from flatbenard.errors import ConstraintViolation
from flatbenard.geometry import Grid, geometry_pack
from flatbenard.verification import hand_solutions


def test_equilibrium_data_has_no_time_derivatives():
    r = hand_solutions()
    assert r["initial_pressure_error"] < 1e-10
    assert r["max_time_derivative"] < 1e-8
    assert r["compatibility_zero_velocity"] < 1e-10


def test_bottom_trace_violation(grid):
    X3 = grid.mesh()[2]
    u0 = np.zeros((3,) + X3.shape)
    with pytest.raises(ConstraintViolation):
        build_initial_data(u0, np.ones_like(X3), np.zeros((8, 8)), grid=grid)


def test_divergent_velocity_rejected(grid):
    X3 = grid.mesh()[2]
    u0 = np.zeros((3,) + X3.shape)
    u0[2] = (1 + X3)
    with pytest.raises(ConstraintViolation):
        build_initial_data(u0, 0 * X3, np.zeros((8, 8)), grid=grid)


def test_compatibility_parts_sum(grid):
    pk = geometry_pack(np.zeros((8, 8)), grid)
    X1, X2, X3 = grid.mesh()
    v = np.array([np.sin(2 * np.pi * X2) * (1 + X3) ** 2, 0 * X3, 0 * X3])
    parts = compatibility_residual(v, np.zeros((3, 8, 8)), pk, parts=True)
    assert parts["total"] == pytest.approx(parts["tangential_stress"] + parts["divergence"] + parts["bottom_trace"])
    assert parts["tangential_stress"] > 0 and parts["divergence"] < 1e-12


def test_fourth_order_time_derivative():
    f = lambda t: {"a": np.sin(t) * np.ones(3)}
    d = time_derivative(f, 0.3, h=1e-2)
    assert np.abs(d["a"] - np.cos(0.3)).max() < 1e-8


def test_recursion_agrees_with_closed_form():
    g = Grid(8, 4, 8)
    X1, X2, X3 = g.mesh()
    X1s, X2s = g.surface_mesh()
    s1, s2 = 0.1 * np.cos(2 * np.pi * X1s), 0.05 * np.sin(2 * np.pi * X2s)
    base = np.sin(2 * np.pi * X1) * (1 + X3) * np.cos(X3)

    def fam(t):
        pk = geometry_pack(t * s1 + t * t * s2, g, epsilon=0.5, jac_floor=0.1, eta_t=s1 + 2 * t * s2, eta_tt=2 * s2)
        u = np.stack([base * (1 + t), base * t * t, base * (2 - t)])
        return dict(pack=pk, u=u, p=base * np.cos(t), theta=base * (1 + t * t), F1=u * 0.5, F3=base * t,
                    F4=np.stack([np.cos(2 * np.pi * X1s) * (1 + t)] * 3), F5=np.sin(2 * np.pi * X2s) * t)

    for j in (1, 2):
        a, b = forcing_recursion(fam, j), forcing_closed_form(fam, j)
        for k in ("F1", "F3", "F4", "F5"):
            scale = max(1.0, np.abs(getattr(b, k)).max())
            assert np.abs(getattr(a, k) - getattr(b, k)).max() < 1e-8 * scale, (j, k)
