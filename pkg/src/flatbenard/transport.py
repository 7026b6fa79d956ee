"""Kinematic transport of the free surface: d_t eta = u3 - u1 d1 eta - u2 d2 eta = u.N."""
from dataclasses import dataclass

import numpy as np

from .errors import StepRejected
from .geometry import SurfaceField, surface_sobolev_norm
from .spectral import dealiased_product


@dataclass
class SurfaceTrace:
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray

    def __post_init__(self):
        for name in ("u1", "u2", "u3"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"trace component {name} is not finite")
            setattr(self, name, v)

    @classmethod
    def from_velocity(cls, u):
        """Top-node trace of a nodal velocity [3, nx, ny, nz+1]."""
        return cls(u[0, ..., -1].copy(), u[1, ..., -1].copy(), u[2, ..., -1].copy())

    @classmethod
    def zeros(cls, grid):
        z = np.zeros((grid.nx, grid.ny))
        return cls(z, z.copy(), z.copy())

    def blend(self, other, w):
        """(1-w) self + w other."""
        return SurfaceTrace((1 - w) * self.u1 + w * other.u1, (1 - w) * self.u2 + w * other.u2,
                            (1 - w) * self.u3 + w * other.u3)


def kinematic_rate(eta: SurfaceField, tr: SurfaceTrace):
    """u3 - u1 d1 eta - u2 d2 eta, which is u.N with N = (-d1 eta, -d2 eta, 1)."""
    return (tr.u3 - dealiased_product(tr.u1, eta.d1(), axes=(-2, -1))
            - dealiased_product(tr.u2, eta.d2(), axes=(-2, -1)))


def cfl_limit(tr: SurfaceTrace, grid, cfl=0.5):
    lim = np.inf
    for u, dx in ((tr.u1, grid.L1 / grid.nx), (tr.u2, grid.L2 / grid.ny)):
        m = float(np.abs(u).max())
        if m > 0:
            lim = min(lim, cfl * dx / m)
    return lim


def advect_surface_step(eta: SurfaceField, trace: SurfaceTrace, dt, trace_end: SurfaceTrace = None,
                        cfl=0.5):
    """Heun (explicit RK2) step; trace_end is the trace at the end of the step (defaults to trace)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    end = trace if trace_end is None else trace_end
    lim = min(cfl_limit(trace, eta.grid, cfl), cfl_limit(end, eta.grid, cfl))
    if dt > lim:
        raise StepRejected(f"dt={dt:.3e} exceeds the advective limit {lim:.3e}", lim)
    k1 = kinematic_rate(eta, trace)
    mid = SurfaceField(eta.values + dt * k1, eta.grid)
    k2 = kinematic_rate(mid, end)
    return SurfaceField(eta.values + 0.5 * dt * (k1 + k2), eta.grid)


@dataclass
class TransportResult:
    times: np.ndarray
    etas: list
    max_deviation_h52: float


def _trace_at(traces, times, t):
    if callable(traces):
        return traces(t)
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = min(max(k, 0), len(times) - 2)
    w = (t - times[k]) / (times[k + 1] - times[k])
    return traces[k].blend(traces[k + 1], float(np.clip(w, 0.0, 1.0)))


def solve_transport(eta0: SurfaceField, traces, dt, T, trace_times=None, cfl=0.5):
    """Advance eta from 0 to T with fixed dt.

    traces: callable t -> SurfaceTrace, or a sequence stored at trace_times
    (default k*dt) and interpolated linearly in time.
    """
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be a positive multiple of dt")
    if not callable(traces):
        trace_times = np.arange(len(traces)) * dt if trace_times is None else np.asarray(trace_times)
        if len(traces) < 2 or trace_times[-1] < T - 1e-12:
            raise ValueError("traces do not cover [0, T]")
    times = dt * np.arange(n + 1)
    etas = [eta0]
    dev = 0.0
    eta = eta0
    for k in range(n):
        a = _trace_at(traces, trace_times, times[k])
        b = _trace_at(traces, trace_times, times[k + 1])
        eta = advect_surface_step(eta, a, dt, b, cfl)
        etas.append(eta)
        dev = max(dev, surface_sobolev_norm(eta - eta0, 2.5))
    return TransportResult(times=times, etas=etas, max_deviation_h52=dev)
