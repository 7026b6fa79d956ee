import numpy as np
import pytest

from flatbenard.errors import MissingTimeLayer
from flatbenard.evolution import (EvolutionState, commutator_forcings, galerkin_k_basis_step, run_linear,
                                  step_linear)
from flatbenard.geometry import Grid, flat_pack, geometry_pack
from flatbenard.verification import commutator_checks, ledger_run


def _equilibrium(grid):
    pk = flat_pack(grid, with_time=True)
    X3 = grid.mesh()[2]
    z = EvolutionState.zeros(pk)
    return EvolutionState(0.0, z.u, -(X3 + X3 ** 2 / 2) / 2, -(1 + X3) / 2, pk)


def test_equilibrium_is_steady(grid):
    s = _equilibrium(grid)
    f = {"F5": -np.ones((grid.nx, grid.ny))}
    traj = run_linear(s, 1e-2, 3, forcing_fn=lambda t, pk: f)
    assert np.abs(traj[-1].theta - s.theta).max() < 1e-10
    assert np.abs(traj[-1].u).max() < 1e-10
    assert np.abs(traj[-1].p - s.p).max() < 1e-9


def test_free_decay_loses_energy(grid):
    X1, _, X3 = grid.mesh()
    s = EvolutionState.zeros(flat_pack(grid, with_time=True))
    s = EvolutionState(0.0, s.u, s.p, np.sin(np.pi * (1 + X3)) * np.cos(2 * np.pi * X1), s.pack)
    s1 = step_linear(s, 1e-2)
    assert np.sum(s1.theta ** 2) < np.sum(s.theta ** 2)
    assert s1.step == 1 and s1.t == pytest.approx(1e-2)


def test_step_rejects_nonpositive_dt(grid):
    with pytest.raises(ValueError):
        step_linear(_equilibrium(grid), 0.0)


def test_ledger_residual_halves_with_dt():
    r = [ledger_run(dt, T=0.02) for dt in (4e-3, 2e-3, 1e-3)]
    res = [x["residual_theta"] for x in r]
    assert res[0] / res[1] > 1.7 and res[1] / res[2] > 1.7
    assert max(x["residual_u"] for x in r) < 1e-6


def test_k_basis_step_matches_plain_step_on_static_geometry(grid):
    X1, _, X3 = grid.mesh()
    pk = flat_pack(grid, with_time=True)
    th = np.sin(np.pi * (1 + X3)) * np.cos(2 * np.pi * X1)
    a = galerkin_k_basis_step(th, 1e-2, pk, pk)
    z = EvolutionState.zeros(pk)
    b = step_linear(EvolutionState(0.0, z.u, z.p, th, pk), 1e-2).theta
    assert np.abs(a - b).max() < 1e-9


def test_commutators_vanish_on_static_and_match_oracle():
    r = commutator_checks()
    assert max(r["static_max"].values()) <= 1e-14
    assert max(r["moving_oracle_error"].values()) < 1e-6


def test_commutators_need_time_layer(grid):
    s = np.zeros((3, grid.nx, grid.ny, grid.nz + 1))
    with pytest.raises(MissingTimeLayer):
        commutator_forcings(s, s[0], s[0], flat_pack(grid))


def test_uniform_dilation_rate_matrix():
    g = Grid(8, 4, 8)
    c = 0.3
    from flatbenard.operators import material_pack
    pk = geometry_pack(np.zeros((8, 4)), g, eta_t=np.full((8, 4), c), eta_tt=np.zeros((8, 4)))
    R = material_pack(pk).R
    assert np.abs(R[0, 0] + 2 * c * (1 + g.x3)).max() < 1e-12
    assert np.abs(R[2]).max() < 1e-12
