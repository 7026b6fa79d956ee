"""Time stepping of the linear coupled system on a prescribed moving geometry,
its energy ledger, and the commutator forcings produced by differentiating the
system in time.

Scheme: backward Euler on the J-weighted Galerkin system.  The weighted mass is
assembled at the new time level, i.e. d/dt of int theta phi J is discretized
conservatively, so the dJ/dt work shows up in the ledger without an explicit
term.  Temperature is advanced first; the velocity step uses the new theta.
"""
from dataclasses import dataclass, field

import numpy as np

from .elliptic import (EllipticProblem, HeatOperator, StokesOperator, forms_for, solve_a_stokes,
                       solve_heat_robin)
from .errors import MissingTimeLayer
from .geometry import GeometryPack
from .linsolve import krylov_solve
from .operators import (div_a, div_matrix_a, grad_a, grad_with, lap_a, mat_mat, mat_vec, material_pack,
                        symgrad_a, symgrad_with, top, vec_lap_a)


@dataclass(frozen=True)
class EvolutionState:
    t: float
    u: np.ndarray
    p: np.ndarray
    theta: np.ndarray
    pack: GeometryPack
    step: int = 0
    p_cells: np.ndarray = None
    info: dict = field(default_factory=dict, compare=False)

    @classmethod
    def zeros(cls, pack, t=0.0):
        g = pack.grid
        s = (g.nx, g.ny, g.nz + 1)
        return cls(t=t, u=np.zeros((3,) + s), p=np.zeros(s), theta=np.zeros(s), pack=pack)


def _get(forcings, name):
    if forcings is None:
        return None
    return forcings.get(name)


class _PrecondCache:
    """Reuses modal preconditioners while the mean geometry barely moves."""

    def __init__(self, rtol=0.02):
        self.rtol = rtol
        self.store = {}

    def _signature(self, forms):
        return forms.J.mean(axis=(-3, -2))

    def get(self, key, forms):
        hit = self.store.get(key)
        if hit is None:
            return None
        sig, pre = hit
        new = self._signature(forms)
        if sig.shape != new.shape or np.max(np.abs(new - sig) / np.abs(sig)) > self.rtol:
            return None
        return pre

    def put(self, key, forms, pre):
        self.store[key] = (self._signature(forms), pre)


def make_cache():
    return _PrecondCache()


def step_linear(state: EvolutionState, dt, forcings=None, pack_new: GeometryPack = None,
                tol=1e-11, cache=None):
    """One backward-Euler step from state.t to state.t + dt.

    forcings: dict with any of F1 (vector), F2 (scalar), F3 (scalar), F4 (surface
    vector), F5 (surface scalar), all evaluated at t + dt.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    pack = state.pack if pack_new is None else pack_new
    fm = forms_for(pack)
    c = 1.0 / dt

    hop = HeatOperator(fm, mass_coef=c)
    if cache is not None:
        hop._pre = cache.get(("heat", dt), fm)
    heat = EllipticProblem("heat_robin", pack, F3=_get(forcings, "F3"), F5=_get(forcings, "F5"),
                           tol=tol, forms=fm)
    theta, hinfo = solve_heat_robin(heat, return_info=True, operator=hop,
                                    extra_rhs=c * fm.mass_apply(state.theta))
    if cache is not None:
        cache.put(("heat", dt), fm, hop.preconditioner())

    g = pack.grid
    F1 = _get(forcings, "F1")
    F1 = np.zeros((3, g.nx, g.ny, g.nz + 1)) if F1 is None else np.array(F1, dtype=float)
    F1[2] = F1[2] + theta
    sop = StokesOperator(fm, mass_coef=c)
    if cache is not None:
        sop._pre = cache.get(("stokes", dt), fm)
    extra = c * np.stack([fm.mass_apply(state.u[i]) for i in range(3)])
    st = EllipticProblem("stokes", pack, F1=F1, F2=_get(forcings, "F2"), F4=_get(forcings, "F4"),
                         tol=tol, forms=fm)
    u, p, sinfo = solve_a_stokes(st, return_info=True, operator=sop, extra_rhs=extra)
    if cache is not None:
        cache.put(("stokes", dt), fm, sop.preconditioner())
    info = {"heat_iterations": hinfo["iterations"], "stokes_iterations": sinfo["iterations"],
            "div_residual": sinfo["div_residual"]}
    return EvolutionState(t=state.t + dt, u=u, p=p, theta=theta, pack=pack, step=state.step + 1,
                          p_cells=sinfo["p_cells"], info=info)


def run_linear(state0: EvolutionState, dt, nsteps, forcing_fn=None, pack_fn=None, tol=1e-11):
    """March nsteps; forcing_fn(t, pack) -> dict, pack_fn(t) -> pack with time layer."""
    cache = make_cache()
    traj = [state0]
    s = state0
    for _ in range(nsteps):
        t1 = s.t + dt
        pk = s.pack if pack_fn is None else pack_fn(t1)
        f = None if forcing_fn is None else forcing_fn(t1, pk)
        s = step_linear(s, dt, f, pk, tol=tol, cache=cache)
        traj.append(s)
    return traj


# ---------------------------------------------------------------- K(t)-basis update


class _KBasisHeat:
    """c M + A - M diag(dJ/dt K): the Galerkin system in the basis K(t) * hat_j."""

    def __init__(self, forms, c, rate):
        self.base = HeatOperator(forms, mass_coef=c)
        self.forms = forms
        self.rate = rate
        self.shape = self.base.shape

    def apply(self, x):
        f = np.zeros(x.shape[:-1] + (x.shape[-1] + 1,))
        f[..., 1:] = x
        out = self.base.full_apply(f) - self.forms.mass_apply(self.rate * f)
        return out[..., 1:]


def galerkin_k_basis_step(theta, dt, pack_old, pack_new, F3=None, F5=None, tol=1e-12):
    """Backward Euler on the Galerkin ODE written in the time-dependent basis K(t) hat_j.

    Coefficients d = J theta (nodal); the basis motion contributes dK/dt J = -dJ/dt K.
    Returns the nodal temperature K(t+dt) d(t+dt).
    """
    pack_new.require_time_layer()
    fm = forms_for(pack_new)
    c = 1.0 / dt
    g = pack_new.grid
    d_old = pack_old.J * theta
    rhs = c * fm.mass_apply(pack_new.K * d_old)
    if F3 is not None:
        rhs = rhs + fm.mass_apply(F3)
    if F5 is not None:
        rhs = rhs + fm.surface_load(F5)
    op = _KBasisHeat(fm, c, -pack_new.J_t * pack_new.K)
    pre = HeatOperator(fm, mass_coef=c).preconditioner()
    x, _ = krylov_solve(op.apply, pre, rhs[..., 1:], op.shape, tol, what="k-basis heat")
    out = np.zeros((g.nx, g.ny, g.nz + 1))
    out[..., 1:] = x
    return out


# ---------------------------------------------------------------- commutator forcings


def _require(pack):
    if not pack.has_time_layer:
        raise MissingTimeLayer("commutator forcings need the geometry time layer")


def _rate_scalar(pack):
    return pack.J_t * pack.K


def g3_forcing(theta, pack, mat=None):
    _require(pack)
    mat = material_pack(pack) if mat is None else mat
    ga = grad_a(theta, pack)
    w = -mat_vec(mat.R, ga) + grad_with(theta, pack.Amat_t, pack)
    return -_rate_scalar(pack) * lap_a(theta, pack) + div_a(w, pack)


def g5_forcing(theta, pack):
    _require(pack)
    ga = top(grad_a(theta, pack))
    gt = top(grad_with(theta, pack.Amat_t, pack))
    th = top(theta)
    return (-np.sum(ga * pack.N_t, axis=0) - np.sum(gt * pack.N, axis=0) - th * pack.Nmag_t)


def g4_forcing(u, p, pack, mat=None):
    _require(pack)
    mat = material_pack(pack) if mat is None else mat
    DRu = top(symgrad_a(mat_vec(mat.R, u), pack))
    Du = top(symgrad_a(u, pack))
    Dtu = top(symgrad_with(u, pack.Amat_t, pack))
    S = -Du
    pt = top(p)
    for i in range(3):
        S[i, i] = S[i, i] + pt
    return mat_vec(DRu, pack.N) - mat_vec(S, pack.N_t) + mat_vec(Dtu, pack.N)


def g1_forcing(u, p, pack, mat=None, dR=None):
    """-(R + J_t K) lap u - dR u + (J_t K + R + R^T) grad p + div(D(Ru) - R D u + D_{dA} u)."""
    _require(pack)
    mat = material_pack(pack) if mat is None else mat
    dR = mat.dR if dR is None else dR
    if dR is None:
        raise MissingTimeLayer("G1 needs dR/dt: supply dR or a pack with a second time layer")
    R = mat.R
    r = _rate_scalar(pack)
    lu = vec_lap_a(u, pack)
    gp = grad_a(p, pack)
    Rt = np.swapaxes(R, 0, 1)
    out = -mat_vec(R, lu) - r * lu - mat_vec(dR, u) + r * gp + mat_vec(R + Rt, gp)
    T = symgrad_a(mat_vec(R, u), pack) - mat_mat(R, symgrad_a(u, pack)) + symgrad_with(u, pack.Amat_t, pack)
    return out + div_matrix_a(T, pack)


def commutator_forcings(v, q, Theta, pack: GeometryPack, mat=None, dR=None, need_g1=True):
    """G1, G3, G4, G5 by literal composition of the slab operators.

    mat may carry replacement time-layer matrices (R, dR); pack must carry
    dJ/dt, dA/dt, dN/dt and d|N|/dt.
    """
    _require(pack)
    mat = material_pack(pack) if mat is None else mat
    out = {"G3": g3_forcing(Theta, pack, mat), "G4": g4_forcing(v, q, pack, mat),
           "G5": g5_forcing(Theta, pack)}
    if need_g1:
        out["G1"] = g1_forcing(v, q, pack, mat, dR)
    return out


# ---------------------------------------------------------------- energy ledger


def _trapz_cumulative(vals, times):
    vals = np.asarray(vals, dtype=float)
    dt = np.diff(times)
    inc = 0.5 * dt * (vals[1:] + vals[:-1])
    return np.concatenate([[0.0], np.cumsum(inc)])


def _forcing_at(forcings, k, state):
    if forcings is None:
        return {}
    if callable(forcings):
        return forcings(state.t, state.pack) or {}
    if isinstance(forcings, dict):
        return forcings
    return forcings[k] or {}


def energy_terms(state: EvolutionState, f):
    fm = forms_for(state.pack)
    u, th = state.u, state.theta
    e_u = 0.5 * fm.ip_h0_vector(u, u)
    e_t = 0.5 * fm.ip_h0(th, th)
    diss_u = 0.5 * fm.ip_h1_vector(u, u)
    diss_t = fm.ip_h1_scalar(th, th)
    bnd_t = fm.boundary_form(th, th)
    jac_u = 0.5 * sum(fm.jac_rate_pair(u[i], u[i]) for i in range(3))
    jac_t = 0.5 * fm.jac_rate_pair(th, th)
    buoy = fm.ip_h0(th, u[2])
    work_u = 0.0
    if f.get("F1") is not None:
        work_u += fm.ip_h0_vector(f["F1"], u)
    if f.get("F4") is not None:
        work_u -= sum(fm.surface_pair(f["F4"][i], u[i]) for i in range(3))
    work_t = 0.0
    if f.get("F3") is not None:
        work_t += fm.ip_h0(f["F3"], th)
    if f.get("F5") is not None:
        work_t += fm.surface_pair(f["F5"], th)
    return dict(t=state.t, kinetic=e_u, thermal=e_t, dissipation_u=diss_u, dissipation_theta=diss_t,
                boundary_theta=bnd_t, jacobian_u=jac_u, jacobian_theta=jac_t, buoyancy=buoy,
                work_u=work_u, work_theta=work_t)


def energy_ledger(trajectory, forcings=None):
    """Both sides of the integral energy identities along a trajectory.

    u:     1/2|u(t)|^2 + int 1/2 |D u|^2 = 1/2|u0|^2 + int (buoyancy + work + 1/2 int |u|^2 dJ/dt)
    theta: 1/2|th(t)|^2 + int (|grad th|^2 + boundary) = 1/2|th0|^2 + int (work + 1/2 int th^2 dJ/dt)
    Time integrals use the trapezoid rule on the stored steps.
    """
    rows = [energy_terms(s, _forcing_at(forcings, k, s)) for k, s in enumerate(trajectory)]
    times = np.array([r["t"] for r in rows])
    col = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    lhs_u = col["kinetic"] + _trapz_cumulative(col["dissipation_u"], times)
    rhs_u = col["kinetic"][0] + _trapz_cumulative(col["buoyancy"] + col["work_u"] + col["jacobian_u"], times)
    lhs_t = col["thermal"] + _trapz_cumulative(col["dissipation_theta"] + col["boundary_theta"], times)
    rhs_t = col["thermal"][0] + _trapz_cumulative(col["work_theta"] + col["jacobian_theta"], times)
    abs_u = np.abs(lhs_u - rhs_u)
    abs_t = np.abs(lhs_t - rhs_t)
    rel_u = abs_u / np.maximum(np.maximum(np.abs(lhs_u), np.abs(rhs_u)), 1.0)
    rel_t = abs_t / np.maximum(np.maximum(np.abs(lhs_t), np.abs(rhs_t)), 1.0)
    series = dict(col, lhs_u=lhs_u, rhs_u=rhs_u, lhs_theta=lhs_t, rhs_theta=rhs_t)
    return {"residual_u": float(rel_u.max()), "residual_theta": float(rel_t.max()),
            "abs_residual_u": float(abs_u.max()), "abs_residual_theta": float(abs_t.max()),
            "series": series}
