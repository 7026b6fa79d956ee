import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flatbenard.errors import StepRejected
from flatbenard.geometry import Grid, SurfaceField
from flatbenard.transport import SurfaceTrace, advect_surface_step, kinematic_rate, solve_transport
from flatbenard.verification import shear_mean_drift, translating_mode


def test_flat_surface_rises_with_vertical_velocity():
    g = Grid(8, 8, 4)
    tr = SurfaceTrace(np.ones((8, 8)), np.ones((8, 8)), np.full((8, 8), 0.2))
    assert np.allclose(kinematic_rate(SurfaceField.zeros(g), tr), 0.2)


def test_translation_converges_in_time():
    errs = [translating_mode(dt) for dt in (2e-3, 1e-3)]
    assert errs[0] / errs[1] > 1.9
    assert abs(translating_mode(1e-3, nx=32) - errs[1]) < 1e-6


@settings(max_examples=10, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_mean_conserved_by_divergence_free_shear(a, b):
    g = Grid(8, 8, 4)
    X1, X2 = g.surface_mesh()
    eta0 = SurfaceField(0.05 * np.cos(2 * np.pi * X1) * np.cos(2 * np.pi * X2) + 0.02, g)
    tr = SurfaceTrace(a * np.sin(2 * np.pi * X2), b * np.cos(2 * np.pi * X1), np.zeros_like(X1))
    res = solve_transport(eta0, lambda t: tr, 0.01, 0.1)
    assert abs(res.etas[-1].values.mean() - 0.02) < 1e-12


def test_mean_drift_below_threshold():
    assert shear_mean_drift(dt=2e-3, T=0.2) < 1e-10


def test_cfl_guard():
    g = Grid(8, 8, 4)
    tr = SurfaceTrace(np.full((8, 8), 10.0), np.zeros((8, 8)), np.zeros((8, 8)))
    with pytest.raises(StepRejected) as e:
        advect_surface_step(SurfaceField.zeros(g), tr, 0.1)
    assert e.value.suggested_dt < 0.1


def test_transport_input_validation():
    g = Grid(8, 8, 4)
    tr = SurfaceTrace.zeros(g)
    with pytest.raises(ValueError):
        solve_transport(SurfaceField.zeros(g), [tr, tr], 0.01, 0.1)
    with pytest.raises(ValueError):
        solve_transport(SurfaceField.zeros(g), lambda t: tr, 0.03, 0.1)
    with pytest.raises(ValueError):
        SurfaceTrace(np.full((8, 8), np.nan), np.zeros((8, 8)), np.zeros((8, 8)))


def test_sampled_traces_are_interpolated():
    g = Grid(8, 8, 4)
    X1, _ = g.surface_mesh()
    eta0 = SurfaceField(0.1 * np.cos(2 * np.pi * X1), g)
    w = np.full((8, 8), 0.5)
    traces = [SurfaceTrace(np.zeros((8, 8)), np.zeros((8, 8)), w * k * 0.01) for k in range(11)]
    res = solve_transport(eta0, traces, 0.01, 0.1)
    # eta_t = 0.5 t exactly integrated by the trapezoid stage: eta gains 0.25 T^2
    assert np.abs(res.etas[-1].values - eta0.values - 0.25 * 0.01).max() < 1e-12
