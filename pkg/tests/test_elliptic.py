import numpy as np
import pytest

from flatbenard.elliptic import (EllipticProblem, heat_weak_residual, solve_a_stokes, solve_heat_robin,
                                 solve_stationary_benard)
from flatbenard.geometry import Grid, flat_pack, geometry_pack
from flatbenard.verification import elliptic_orders, hand_solutions


def test_conduction_and_hydrostatic_profiles_are_reproduced():
    r = hand_solutions()
    assert r["conduction_error"] < 1e-10
    assert r["hydrostatic_error"] < 1e-10
    assert r["stokes_velocity"] < 1e-10


def test_flat_benard_equilibrium(grid):
    pk = flat_pack(grid)
    u, p, th = solve_stationary_benard(EllipticProblem("coupled", pk, F5=-np.ones((grid.nx, grid.ny))))
    X3 = grid.mesh()[2]
    assert np.abs(th + (1 + X3) / 2).max() < 1e-10
    assert np.abs(p + (X3 + X3 ** 2 / 2) / 2).max() < 1e-10
    assert np.abs(u).max() < 1e-10


def test_flat_solvers_converge_second_order():
    res = elliptic_orders(amp=0, nzs=(16, 32), nx=8)
    for k, v in res["orders"].items():
        assert v >= 1.85, (k, v)


def test_heat_solution_satisfies_weak_form(rng):
    g = Grid(8, 8, 12)
    X1, X2 = g.surface_mesh()
    pk = geometry_pack(0.05 * np.cos(2 * np.pi * X1), g, epsilon=0.5)
    F3 = rng.normal(size=(8, 8, 13)) * 0.1
    F5 = np.sin(2 * np.pi * X2)
    th = solve_heat_robin(EllipticProblem("heat_robin", pk, F3=F3, F5=F5))
    for _ in range(3):
        phi = rng.normal(size=(8, 8, 13))
        phi[..., 0] = 0.0
        assert abs(heat_weak_residual(th, phi, pk, F3, F5)) < 1e-9


def test_stokes_velocity_is_discretely_solenoidal():
    g = Grid(8, 8, 12)
    X1, X2, X3 = g.mesh()
    pk = geometry_pack(0.05 * np.cos(2 * np.pi * g.surface_mesh()[0]), g, epsilon=0.5)
    F1 = np.array([np.sin(2 * np.pi * X2) * (1 + X3), np.cos(2 * np.pi * X1), X3 ** 2])
    u, p, info = solve_a_stokes(EllipticProblem("stokes", pk, F1=F1), return_info=True)
    assert info["div_residual"] < 1e-9
    assert np.abs(u[..., 0]).max() == 0.0


def test_unknown_problem_kind():
    with pytest.raises(ValueError):
        EllipticProblem("wave", flat_pack(Grid(4, 4, 4)))
