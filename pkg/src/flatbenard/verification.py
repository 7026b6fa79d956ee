"""Reusable verification studies: identity residuals, convergence tables, energy
ledgers, commutator oracles, transport and determinism checks.  Each returns plain
dicts so the CLI can print them and tests can assert on them."""
import json
from dataclasses import replace

import numpy as np
import sympy as sp

from .data_compat import build_initial_data, compatibility_residual
from .elliptic import (EllipticProblem, solve_a_poisson, solve_a_stokes, solve_heat_robin,
                       solve_stationary_benard)
from .evolution import EvolutionState, commutator_forcings, energy_ledger, run_linear
from .geometry import Grid, SurfaceField, flat_pack, geometry_pack
from .manufactured import (Mode, SymbolicGeometry, evaluate, heat_data, poisson_data, solenoidal_pushforward,
                           stokes_data, x1, x2, x3)
from .operators import (MaterialPack, div_a, div_matrix_a, expanded_heat_apply, grad_a, grad_a_y3, lap_a,
                        mat_mat, material_pack, piola_divergence, stress_a, vec_lap_a)
from .transport import SurfaceTrace, solve_transport


def fitted_order(hs, errs):
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def _random_surface(grid, rng, amp, kmax=2):
    X1, X2 = grid.surface_mesh()
    f = np.zeros_like(X1)
    for k1 in range(-kmax, kmax + 1):
        for k2 in range(0, kmax + 1):
            if k1 == 0 and k2 == 0:
                continue
            ph = 2 * np.pi * (k1 * X1 / grid.L1 + k2 * X2 / grid.L2)
            f += rng.normal() * np.cos(ph) + rng.normal() * np.sin(ph)
    return amp * rng.uniform(0.2, 1.0) * f / np.abs(f).max()


def geometry_identities(n_samples=100, seed=0, grid=None, amp=0.2, epsilon=0.25):
    """Max residuals of J K = 1, A = (grad Phi)^-T and grad_A y3 = e3 over random surfaces."""
    grid = Grid(16, 16, 24) if grid is None else grid
    rng = np.random.default_rng(seed)
    worst = {"JK": 0.0, "A_inverse_transpose": 0.0, "grad_y3": 0.0}
    min_j = np.inf
    e3 = np.zeros((3, 1, 1, 1))
    e3[2] = 1.0
    for _ in range(n_samples):
        eta = _random_surface(grid, rng, amp)
        pk = geometry_pack(eta, grid, epsilon=epsilon, check=False)
        min_j = min(min_j, pk.min_jacobian())
        worst["JK"] = max(worst["JK"], float(np.abs(pk.J * pk.K - 1).max()))
        G = np.moveaxis(pk.grad_phi(), (0, 1), (-2, -1))
        At = np.swapaxes(np.linalg.inv(G), -1, -2)
        worst["A_inverse_transpose"] = max(worst["A_inverse_transpose"],
                                           float(np.abs(np.moveaxis(pk.Amat, (0, 1), (-2, -1)) - At).max()))
        worst["grad_y3"] = max(worst["grad_y3"], float(np.abs(grad_a_y3(pk) - e3).max()))
    return {"residuals": worst, "min_J": float(min_j), "n_samples": n_samples}


def operator_identity_orders(nzs=(16, 32, 64), nx=32, amp=sp.Rational(1, 10), epsilon=0.25):
    """Residuals of the divergence, stress and expanded-Laplacian identities, and their fitted orders."""
    geo = SymbolicGeometry([Mode(amp)], epsilon=epsilon)
    v = sp.Matrix([sp.sin(2 * sp.pi * x1) * (1 + x3) ** 2, sp.cos(2 * sp.pi * x2) * x3,
                   sp.cos(2 * sp.pi * x1) * sp.exp(x3)])
    ust = solenoidal_pushforward(geo, sp.cos(2 * sp.pi * x1) * (1 + x3) ** 2 * sp.sin(x3 + 2))
    pst = sp.sin(2 * sp.pi * x1) * sp.cos(x3)
    th = sp.cos(2 * sp.pi * x1) * sp.sin(2 * x3) + x3 ** 3
    lap_exact = geo.lap(th)
    rows = []
    for nz in nzs:
        g = Grid(nx, 4, nz)
        pk = geometry_pack(geo.surface_field(g), g, epsilon=epsilon, jac_floor=0.1)
        V, U, P, T = (evaluate(e, g) for e in (v, ust, pst, th))
        rows.append({
            "nz": nz,
            "jacobian_divergence": float(np.abs(pk.J * div_a(V, pk) - piola_divergence(V, pk)).max()),
            "stress_divergence": float(np.abs(div_matrix_a(stress_a(P, U, pk), pk)
                                              - (grad_a(P, pk) - vec_lap_a(U, pk))).max()),
            "expanded_laplacian": float(np.abs(expanded_heat_apply(T, pk) - lap_a(T, pk)).max()),
            "laplacian_exact": float(np.abs(lap_a(T, pk) - evaluate(lap_exact, g)).max()),
        })
    hs = [1.0 / r["nz"] for r in rows]
    orders = {k: fitted_order(hs, [r[k] for r in rows]) for k in rows[0] if k != "nz"}
    return {"rows": rows, "orders": orders}


def elliptic_orders(amp=sp.Rational(1, 10), nzs=(16, 32, 64), nx=32, epsilon=0.25):
    """L-infinity errors of the four elliptic solvers on manufactured solutions."""
    geo = SymbolicGeometry([Mode(amp)] if amp else [], epsilon=epsilon)
    p_ex = sp.cos(2 * sp.pi * x1) * sp.exp(x3) + sp.sin(2 * x3)
    th_ex = sp.cos(2 * sp.pi * x1) * sp.sin(sp.pi * (1 + x3) / 2) + (1 + x3) ** 2
    u_ex = solenoidal_pushforward(geo, sp.cos(2 * sp.pi * x1) * (1 + x3) ** 2 * sp.sin(x3 + 2) / 10)
    q_ex = sp.sin(2 * sp.pi * x1) * sp.cos(x3) + x3
    f1, f2, f3 = poisson_data(geo, p_ex)
    F3, F5 = heat_data(geo, th_ex)
    G1, G2, G4 = stokes_data(geo, u_ex, q_ex)
    B1 = G1 - sp.Matrix([0, 0, th_ex])
    rows = []
    for nz in nzs:
        g = Grid(nx, 4, nz)
        pk = geometry_pack(geo.surface_field(g), g, epsilon=epsilon, jac_floor=0.1)
        ev = lambda e, **kw: evaluate(e, g, **kw)
        p = solve_a_poisson(EllipticProblem("poisson", pk, f1=ev(f1), f2=ev(f2, surface="top"),
                                            f3=ev(f3, surface="bottom")))
        th = solve_heat_robin(EllipticProblem("heat_robin", pk, F3=ev(F3), F5=ev(F5, surface="top")))
        st = EllipticProblem("stokes", pk, F1=ev(G1), F2=ev(G2), F4=ev(G4, surface="top"))
        u, q = solve_a_stokes(st)
        bn = EllipticProblem("coupled", pk, F1=ev(B1), F2=ev(G2), F3=ev(F3), F4=ev(G4, surface="top"),
                             F5=ev(F5, surface="top"))
        bu, bq, bt = solve_stationary_benard(bn)
        U, Q, TH = ev(u_ex), ev(q_ex), ev(th_ex)
        rows.append({"nz": nz, "poisson": float(np.abs(p - ev(p_ex)).max()),
                     "heat_robin": float(np.abs(th - TH).max()),
                     "stokes_u": float(np.abs(u - U).max()), "stokes_p": float(np.abs(q - Q).max()),
                     "benard_u": float(np.abs(bu - U).max()), "benard_theta": float(np.abs(bt - TH).max()),
                     "min_J": pk.min_jacobian()})
    hs = [1.0 / r["nz"] for r in rows]
    keys = [k for k in rows[0] if k not in ("nz", "min_J")]
    return {"rows": rows, "orders": {k: fitted_order(hs, [r[k] for r in rows]) for k in keys}}


def hand_solutions(grid=None):
    """Conduction/hydrostatic recovery, equilibrium initial data and zero-velocity compatibility."""
    g = Grid(8, 8, 16) if grid is None else grid
    pk = flat_pack(g)
    X1, X2, X3 = g.mesh()
    cond = -(1 + X3) / 2
    hydro = -(X3 + X3 ** 2 / 2) / 2
    th = solve_heat_robin(EllipticProblem("heat_robin", pk, F5=-np.ones((g.nx, g.ny)), tol=1e-13))
    F1 = np.zeros((3,) + X3.shape)
    F1[2] = cond
    u, p = solve_a_stokes(EllipticProblem("stokes", pk, F1=F1, tol=1e-13))
    u0 = np.zeros_like(F1)
    data = build_initial_data(u0, cond, np.zeros((g.nx, g.ny)), N_levels=2, grid=g)
    derivs = [np.abs(x).max() for x in data.u[1:] + data.theta[1:]]
    derivs += [np.abs(e.values).max() for e in data.eta[1:]]
    return {"conduction_error": float(np.abs(th - cond).max()),
            "hydrostatic_error": float(np.abs(p - hydro).max()), "stokes_velocity": float(np.abs(u).max()),
            "initial_pressure_error": float(np.abs(data.p[0] - hydro).max()),
            "max_time_derivative": float(max(derivs)),
            "compatibility_zero_velocity": float(compatibility_residual(u0, data.forcing[0].F4, data.pack)),
            "compatibility_level1": float(data.compatibility(1))}


def ledger_run(dt, T=0.1, moving=False, amplitude=0.1, grid=None):
    """Linear run from a perturbed conduction profile, heated through the Robin datum -|N|.

    moving=True prescribes eta = 0.5 t cos(2 pi x1) with extension scale 0.5.
    """
    g = Grid(8, 4, 16) if grid is None else grid
    X1, _, X3 = g.mesh()
    X1s, _ = g.surface_mesh()
    shape = np.cos(2 * np.pi * X1s)
    k = 2.028757838110434  # first Robin eigenvalue: tan(k) = -k
    th0 = -(1 + X3) / 2 + amplitude * np.sin(k * (1 + X3)) * (1 + 0.5 * np.cos(2 * np.pi * X1))

    def pack_fn(t):
        if not moving:
            return flat_pack(g, with_time=True)
        return geometry_pack(0.5 * t * shape, g, epsilon=0.5, jac_floor=0.1, eta_t=0.5 * shape)

    def forcing(t, pk):
        return {"F5": -pk.Nmag}

    pk0 = pack_fn(0.0)
    z = EvolutionState.zeros(pk0)
    s0 = EvolutionState(0.0, z.u, z.p, th0, pk0)
    traj = run_linear(s0, dt, int(round(T / dt)), forcing_fn=forcing, pack_fn=pack_fn)
    led = energy_ledger(traj, forcing)
    led.pop("series")
    led["dt"] = dt
    led["steps"] = len(traj) - 1
    return led


def commutator_checks(grid=None, h=1e-3):
    """Commutator forcings on static geometry, and against 4th-order time differences
    on eta(t) = t s1 + t^2 s2, which is flat at t = 0."""
    g = Grid(16, 8, 32) if grid is None else grid
    X1, X2, X3 = g.mesh()
    X1s, X2s = g.surface_mesh()
    th = np.sin(2 * np.pi * X1) * np.sin(2 * (1 + X3)) + X3 ** 2
    u = np.array([np.cos(2 * np.pi * X2) * (1 + X3), np.sin(2 * np.pi * X1) * X3 ** 2,
                  np.cos(2 * np.pi * X1) * (1 + X3) ** 2])
    p = np.cos(2 * np.pi * X1) * np.exp(X3)
    zero = np.zeros_like(X1s)
    static = geometry_pack(0.1 * np.cos(2 * np.pi * X1s), g, epsilon=0.5, jac_floor=0.1, eta_t=zero, eta_tt=zero)
    Gs = commutator_forcings(u, p, th, static)
    s1 = 0.1 * np.cos(2 * np.pi * X1s) + 0.05 * np.sin(2 * np.pi * X2s)
    s2 = 0.2 * np.cos(2 * np.pi * (X1s + X2s))

    def pk(t):
        return geometry_pack(t * s1 + t * t * s2, g, epsilon=0.5, jac_floor=0.1, eta_t=s1 + 2 * t * s2,
                             eta_tt=2 * s2)

    P = pk(0.0)
    ps = [pk(k * h) for k in (-2, -1, 1, 2)]

    def d(f):
        a, b, c, e = [f(q) for q in ps]
        return (a - 8 * b + 8 * c - e) / (12 * h)

    Q = replace(P, J_t=d(lambda q: q.J), K_t=d(lambda q: q.K), Amat_t=d(lambda q: q.Amat),
                N_t=d(lambda q: q.N), Nmag_t=d(lambda q: q.Nmag), extra={})
    m0 = material_pack(P)
    R = mat_mat(d(lambda q: q.K * q.grad_phi()), m0.Minv)
    dR = d(lambda q: material_pack(q).R)
    G = commutator_forcings(u, p, th, P)
    Gf = commutator_forcings(u, p, th, Q, mat=MaterialPack(M=m0.M, Minv=m0.Minv, R=R, dR=dR))
    return {"static_max": {k: float(np.abs(v).max()) for k, v in Gs.items()},
            "moving_size": {k: float(np.abs(v).max()) for k, v in G.items()},
            "moving_oracle_error": {k: float(np.abs(G[k] - Gf[k]).max()) for k in G}}


def translating_mode(dt, nx=16, T=0.1, amp=0.1, c=1.0):
    """Advect a cos(2 pi x1) surface with uniform horizontal velocity c; max error at T."""
    g = Grid(nx, 4, 4)
    X1s, _ = g.surface_mesh()
    eta0 = SurfaceField(amp * np.cos(2 * np.pi * X1s), g)
    tr = SurfaceTrace(np.full_like(X1s, c), np.zeros_like(X1s), np.zeros_like(X1s))
    res = solve_transport(eta0, lambda t: tr, dt, T)
    exact = amp * np.cos(2 * np.pi * (X1s - c * T))
    return float(np.abs(res.etas[-1].values - exact).max())


def shear_mean_drift(dt=1e-3, T=1.0, nx=16):
    """Mean-height drift per unit time under a divergence-free horizontal shear."""
    g = Grid(nx, nx, 4)
    X1s, X2s = g.surface_mesh()
    eta0 = SurfaceField(0.05 * np.cos(2 * np.pi * X1s) + 0.03 * np.sin(2 * np.pi * (X1s + X2s)) + 0.01, g)
    tr = SurfaceTrace(0.5 * np.sin(2 * np.pi * X2s), 0.3 * np.cos(2 * np.pi * X1s), np.zeros_like(X1s))
    res = solve_transport(eta0, lambda t: tr, dt, T)
    means = np.array([e.values.mean() for e in res.etas])
    return float(np.abs(means - means[0]).max() / T)


def transport_checks():
    dts = [4e-3, 2e-3, 1e-3, 5e-4]
    errs = [translating_mode(dt) for dt in dts]
    # spatial exactness: refining the horizontal grid leaves the error unchanged
    spatial = abs(translating_mode(1e-3, nx=32) - translating_mode(1e-3, nx=16))
    return {"dts": dts, "errors": errs, "time_order": fitted_order(dts, errs),
            "spatial_refinement_change": spatial, "mean_drift_per_time": shear_mean_drift()}


def determinism_checks(cfg=None):
    """Two identical single-thread runs and a checkpoint save/load/save cycle."""
    from .driver import Checkpoint, PicardConfig, run_picard

    cfg = cfg or PicardConfig(nx=8, ny=8, nz=8, T=0.01, dt=2.5e-3, max_sweeps=2, min_sweeps=2,
                              tol_fixed_point=1e-300, preset="perturbed-equilibrium", amplitude=0.05,
                              eta0_modes=[{"k": [1, 0], "amp": 0.02}])
    r1, s1 = run_picard(cfg)
    r2, s2 = run_picard(cfg)
    same_records = [a.to_json() for a in r1] == [b.to_json() for b in r2]
    same_fields = all(np.array_equal(getattr(s1, k), getattr(s2, k)) for k in ("u", "p", "theta", "eta"))
    ck = Checkpoint.from_sweep(s1, cfg.to_dict())
    b1 = ck.to_bytes()
    b2 = Checkpoint.from_bytes(b1).to_bytes()
    back = Checkpoint.from_bytes(b1).to_sweep()
    fields_exact = all(np.array_equal(getattr(s1, k), getattr(back, k)) for k in ("u", "p", "theta", "eta"))
    return {"records_identical": same_records, "fields_identical": same_fields,
            "checkpoint_bytes_identical": b1 == b2, "checkpoint_fields_exact": fields_exact,
            "records": [json.loads(r.to_json()) for r in r1]}
