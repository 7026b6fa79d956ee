"""Initial time derivatives, forcing recursions and compatibility residuals.

Time derivatives of the unknowns at t = 0 are not free: they follow from the
equations themselves.  Level j data (D_t^j u, d_t^j p, d_t^j theta, d_t^j eta)
are produced from level j-1 data by the bracket operators below, with the
pressure at each level coming from a transformed Poisson problem.

Convention for the momentum forcing: F1_0 = F1 + theta e3 carries the buoyancy,
F1_j = D_t F1_{j-1} + E1(D_t^{j-1} u, d_t^{j-1} p), and
D_t^{j+1} u = E01(F1_j, D_t^j u, d_t^j p).  This is what differentiating the
momentum equation in time gives; buoyancy is counted exactly once.
"""
from dataclasses import dataclass, field

import numpy as np

from .elliptic import EllipticProblem, solve_a_poisson
from .errors import ConstraintViolation, MissingTimeLayer
from .evolution import g1_forcing, g3_forcing, g4_forcing, g5_forcing
from .geometry import Grid, GeometryPack, SurfaceField, geometry_pack, projection_pi0
from .nonlinear import nonlinear_forcing_rates, nonlinear_forcings
from .operators import (bottom, div_a, grad_a, lap_a, mat_vec, material_pack, symgrad_a,
                        top, vec_lap_a)


@dataclass
class ForcingLevel:
    j: int
    F1: np.ndarray
    F3: np.ndarray
    F4: np.ndarray
    F5: np.ndarray

    def as_dict(self):
        return {"F1": self.F1, "F3": self.F3, "F4": self.F4, "F5": self.F5}


@dataclass
class InitialDataSet:
    N_levels: int
    u: list
    theta: list
    p: list
    eta: list
    Dt_u: list
    forcing: list
    pack: GeometryPack = None
    info: dict = field(default_factory=dict)

    def compatibility(self, j=0, parts=False):
        if j >= len(self.forcing) or j >= len(self.Dt_u):
            raise ValueError(f"level {j} not built")
        return compatibility_residual(self.Dt_u[j], self.forcing[j].F4, self.pack, parts=parts)


def _e3(theta):
    z = np.zeros_like(theta)
    return np.stack([z, z, theta])


def _mat(pack, mat=None):
    if mat is not None:
        return mat
    if pack.has_time_layer:
        return material_pack(pack)
    return None


# ---------------------------------------------------------------- brackets


def bracket_e(v, q, Theta, pack: GeometryPack, G1=None, G3=None, mat=None, dR=None,
              which=("E01", "E02", "E1", "E3", "E4", "E5")):
    """The bracket operators; E01/E02 give the next time level of D_t u / d_t theta.

    E01 = lap v - grad q + G1 - R v;  E02 = lap Theta + G3;  E1, E3, E4, E5 are
    the commutator terms (they need the geometry time layer; E1 also dR/dt).
    """
    out = {}
    m = _mat(pack, mat)
    if "E01" in which:
        e = vec_lap_a(v, pack) - grad_a(q, pack)
        if G1 is not None:
            e = e + G1
        if m is not None:
            e = e - mat_vec(m.R, v)
        out["E01"] = e
    if "E02" in which:
        e = lap_a(Theta, pack)
        out["E02"] = e if G3 is None else e + G3
    timed = [w for w in ("E1", "E3", "E4", "E5") if w in which]
    if timed and not pack.has_time_layer:
        raise MissingTimeLayer("time-dependent brackets need the geometry time layer")
    if "E1" in which:
        out["E1"] = g1_forcing(v, q, pack, m, dR)
    if "E3" in which:
        out["E3"] = g3_forcing(Theta, pack, m)
    if "E4" in which:
        out["E4"] = g4_forcing(v, q, pack, m)
    if "E5" in which:
        out["E5"] = g5_forcing(Theta, pack)
    return out


def poisson_data_f(G1, G4, v, pack: GeometryPack, mat=None):
    """f1 = div_A(G1 - R v), f2 = (G4 + D_A v N).N/|N|^2, f3 = (G1 + lap v).nu with nu = -e3."""
    m = _mat(pack, mat)
    w = G1 if m is None else G1 - mat_vec(m.R, v)
    f1 = div_a(w, pack)
    Dv = top(symgrad_a(v, pack))
    s = G4 + mat_vec(Dv, pack.N)
    f2 = np.sum(s * pack.N, axis=0) / pack.Nmag**2
    f3 = -bottom(G1[2] + lap_a(v[2], pack))
    return {"f1": f1, "f2": f2, "f3": f3}


def solve_level_pressure(G1, G4, v, pack, mat=None, tol=1e-12, neumann_G1=None):
    f = poisson_data_f(G1, G4, v, pack, mat)
    if neumann_G1 is not None:
        f["f3"] = -bottom(neumann_G1[2] + lap_a(v[2], pack))
    prob = EllipticProblem("poisson", pack, f1=f["f1"], f2=f["f2"], f3=f["f3"], tol=tol)
    return solve_a_poisson(prob), f


# ---------------------------------------------------------------- forcing models


class BenardForcing:
    """The nonlinear forcings of the convection problem, with exact time rates."""

    def values(self, u, theta, pack):
        return nonlinear_forcings(u, theta, pack)

    def rates(self, u, u_t, theta, theta_t, pack):
        return nonlinear_forcing_rates(u, u_t, theta, theta_t, pack)


class PrescribedForcing:
    """Forcings given as a function of time, fn(t) -> dict(F1, F3, F4, F5).

    rate_fn(t) may supply exact derivatives; otherwise a fourth-order centered
    difference with step h is used.
    """

    def __init__(self, fn, rate_fn=None, h=1e-3):
        self.fn = fn
        self.rate_fn = rate_fn
        self.h = h

    def values(self, u, theta, pack, t=0.0):
        return self.fn(t)

    def rates(self, u, u_t, theta, theta_t, pack, t=0.0):
        if self.rate_fn is not None:
            return self.rate_fn(t)
        return time_derivative(self.fn, t, self.h)


def time_derivative(fun, t, h=1e-3):
    """Fourth-order centered difference of an array- or dict-valued function of t."""
    vals = [fun(t + k * h) for k in (-2, -1, 1, 2)]
    w = (1.0, -8.0, 8.0, -1.0)
    if isinstance(vals[0], dict):
        return {k: sum(c * v[k] for c, v in zip(w, vals)) / (12.0 * h) for k in vals[0]}
    return sum(c * v for c, v in zip(w, vals)) / (12.0 * h)


# ---------------------------------------------------------------- initial data


def _l2_volume(f, grid: Grid):
    w = np.full(grid.nz + 1, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return float(np.sqrt(np.sum(f * f * w) * grid.cell_area))


def _l2_surface(g, grid: Grid):
    return float(np.sqrt(np.sum(np.asarray(g) ** 2) * grid.cell_area))


def compatibility_residual(v, F4, pack: GeometryPack, parts=False):
    """|Pi0(F4 + D_A v N)|_{L2(surface)} + |div_A v|_{L2} + |v at the bottom|_{L2}."""
    g = pack.grid
    s = F4 + mat_vec(top(symgrad_a(v, pack)), pack.N)
    tang = _l2_surface(projection_pi0(s, pack), g)
    div = _l2_volume(div_a(v, pack), g)
    trace = _l2_surface(bottom(v), g)
    total = tang + div + trace
    if parts:
        return {"tangential_stress": tang, "divergence": div, "bottom_trace": trace, "total": total}
    return total


def build_initial_data(u0, theta0, eta0, N_levels=1, forcing=None, grid=None, epsilon=1.0,
                       jac_floor=0.1, tol=1e-12, div_tol=1e-2, buoyancy_in_neumann=False):
    """Construct time derivatives of the solution at t = 0 up to N_levels (<= 2).

    forcing: BenardForcing (default) or PrescribedForcing.  buoyancy_in_neumann
    adds theta0 e3 to the bottom Neumann datum of the initial pressure problem;
    since theta0 vanishes at the bottom both choices agree for admissible data.
    """
    if not 1 <= N_levels <= 2:
        raise ValueError("N_levels must be 1 or 2")
    forcing = BenardForcing() if forcing is None else forcing
    if not isinstance(eta0, SurfaceField):
        eta0 = SurfaceField(eta0, grid)
    grid = eta0.grid
    base = geometry_pack(eta0, grid, epsilon=epsilon, jac_floor=jac_floor)
    bt = max(float(np.abs(bottom(u0)).max()), float(np.abs(bottom(theta0)).max()))
    if bt > 1e-12:
        raise ConstraintViolation(f"initial data do not vanish at the bottom (max {bt:.3e})")
    # discrete div_A of a continuum solenoidal field is only O(h^2): test it relative
    # to the size of the velocity gradient
    dv = _l2_volume(div_a(u0, base), grid)
    scale = max(1.0, sum(_l2_volume(grad_a(u0[i], base), grid) for i in range(3)))
    if dv > div_tol * scale:
        raise ConstraintViolation(f"initial velocity is not divergence free (|div_A u0| = {dv:.3e})")

    eta1 = SurfaceField(np.sum(top(u0) * base.N, axis=0), grid)
    pk = geometry_pack(eta0, grid, epsilon=epsilon, jac_floor=jac_floor, eta_t=eta1)
    mat = material_pack(pk)
    F = forcing.values(u0, theta0, pk)
    F1_0 = F["F1"] + _e3(theta0)
    levels = [ForcingLevel(0, F1_0, F["F3"], F["F4"], F["F5"])]
    neu = F1_0 if buoyancy_in_neumann else F["F1"]
    p0, f0 = solve_level_pressure(F1_0, F["F4"], u0, pk, mat, tol, neumann_G1=neu)
    br = bracket_e(u0, p0, theta0, pk, G1=F1_0, G3=F["F3"], mat=mat, which=("E01", "E02"))
    theta1 = br["E02"]
    Dtu1 = br["E01"]
    u1 = Dtu1 + mat_vec(mat.R, u0)
    data = InitialDataSet(N_levels=N_levels, u=[u0, u1], theta=[theta0, theta1], p=[p0],
                          eta=[eta0, eta1], Dt_u=[u0, Dtu1], forcing=levels, pack=pk,
                          info={"poisson_data_0": f0})
    if N_levels == 1:
        return data

    eta2 = SurfaceField(np.sum(top(u0) * pk.N_t, axis=0) + np.sum(top(u1) * pk.N, axis=0), grid)
    pk2 = geometry_pack(eta0, grid, epsilon=epsilon, jac_floor=jac_floor, eta_t=eta1, eta_tt=eta2)
    mat2 = material_pack(pk2)
    rates = forcing.rates(u0, u1, theta0, theta1, pk2)
    DtF1 = rates["F1"] + _e3(theta1) - mat_vec(mat2.R, F1_0)
    E = bracket_e(u0, p0, theta0, pk2, mat=mat2, which=("E1", "E3", "E4", "E5"))
    lvl1 = ForcingLevel(1, DtF1 + E["E1"], rates["F3"] + E["E3"], rates["F4"] + E["E4"],
                        rates["F5"] + E["E5"])
    levels.append(lvl1)
    p1, f1 = solve_level_pressure(lvl1.F1, lvl1.F4, Dtu1, pk2, mat2, tol)
    br = bracket_e(Dtu1, p1, theta1, pk2, G1=lvl1.F1, G3=lvl1.F3, mat=mat2, which=("E01", "E02"))
    theta2 = br["E02"]
    Dtu2 = br["E01"]
    u2 = Dtu2 + mat_vec(mat2.R, Dtu1) + mat_vec(mat2.dR, u0) + mat_vec(mat2.R, u1)
    data.u.append(u2)
    data.theta.append(theta2)
    data.p.append(p1)
    data.eta.append(eta2)
    data.Dt_u.append(Dtu2)
    data.pack = pk2
    data.info["poisson_data_1"] = f1
    return data


# ---------------------------------------------------------------- recursion on field families


class _Memo:
    def __init__(self, family):
        self.family = family
        self.cache = {}

    def __call__(self, t):
        key = round(t, 12)
        if key not in self.cache:
            self.cache[key] = self.family(t)
        return self.cache[key]


def _R(state):
    return material_pack(state["pack"])


def _Dt(fun, state_at, h):
    """Material derivative of a vector-valued function of time."""
    def out(t):
        return time_derivative(fun, t, h) - mat_vec(_R(state_at(t)).R, fun(t))
    return out


def _dt(fun, h):
    def out(t):
        return time_derivative(fun, t, h)
    return out


def _power(op, fun, k):
    for _ in range(k):
        fun = op(fun)
    return fun


def forcing_recursion(family, j, t=0.0, h=1e-3):
    """Level-j forcings along a prescribed family, by the one-step recursion.

    family(t) -> dict with u, p, theta, pack (carrying eta_t and eta_tt) and
    base forcings F1, F3, F4, F5.  Time derivatives are fourth-order centered
    differences with step h.
    """
    state_at = _Memo(family)
    return ForcingLevel(j, **_level_fn(state_at, j, h)(t))


def _level_fn(state_at, j, h):
    if j == 0:
        def lvl0(t):
            s = state_at(t)
            return {"F1": s["F1"] + _e3(s["theta"]), "F3": s["F3"], "F4": s["F4"], "F5": s["F5"]}
        return lvl0
    prev = _level_fn(state_at, j - 1, h)
    Dtu = _power(lambda f: _Dt(f, state_at, h), lambda t: state_at(t)["u"], j - 1)
    dp = _power(lambda f: _dt(f, h), lambda t: state_at(t)["p"], j - 1)
    dth = _power(lambda f: _dt(f, h), lambda t: state_at(t)["theta"], j - 1)

    def lvl(t):
        pk = state_at(t)["pack"]
        E = bracket_e(Dtu(t), dp(t), dth(t), pk, which=("E1", "E3", "E4", "E5"))
        dprev = time_derivative(prev, t, h)
        F1p = prev(t)["F1"]
        return {"F1": dprev["F1"] - mat_vec(_R(state_at(t)).R, F1p) + E["E1"],
                "F3": dprev["F3"] + E["E3"], "F4": dprev["F4"] + E["E4"], "F5": dprev["F5"] + E["E5"]}
    return lvl


def forcing_closed_form(family, j, t=0.0, h=1e-3):
    """The same level-j forcings written as sums over lower levels:
    F1_j = D_t^j(F1 + theta e3) + sum_l D_t^l E1(D_t^{j-l-1} u, d_t^{j-l-1} p), and
    F3_j = d_t^j F3 + sum_l d_t^l E3(d_t^{j-l-1} theta) (likewise F4, F5 with d_t)."""
    state_at = _Memo(family)
    Dt = lambda f: _Dt(f, state_at, h)  # noqa: E731
    dt = lambda f: _dt(f, h)  # noqa: E731

    def comp(name):
        return lambda s: state_at(s)[name]

    F1 = _power(Dt, lambda s: state_at(s)["F1"] + _e3(state_at(s)["theta"]), j)(t)
    F3 = _power(dt, comp("F3"), j)(t)
    F4 = _power(dt, comp("F4"), j)(t)
    F5 = _power(dt, comp("F5"), j)(t)
    for ell in range(j):
        k = j - ell - 1
        Dtu = _power(Dt, comp("u"), k)
        dp = _power(dt, comp("p"), k)
        dth = _power(dt, comp("theta"), k)

        def br(s, Dtu=Dtu, dp=dp, dth=dth):
            return bracket_e(Dtu(s), dp(s), dth(s), state_at(s)["pack"], which=("E1", "E3", "E4", "E5"))
        F1 = F1 + _power(Dt, lambda s: br(s)["E1"], ell)(t)
        F3 = F3 + _power(dt, lambda s: br(s)["E3"], ell)(t)
        F4 = F4 + _power(dt, lambda s: br(s)["E4"], ell)(t)
        F5 = F5 + _power(dt, lambda s: br(s)["E5"], ell)(t)
    return ForcingLevel(j, F1, F3, F4, F5)

