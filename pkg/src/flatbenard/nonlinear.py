"""Nonlinear forcings of the free-surface convection problem in slab coordinates,
and their first time derivatives (needed when building initial time derivatives).

F1 = dt(eta_bar) (1+x3) K d3 u - (u . grad_A) u
F3 = dt(eta_bar) (1+x3) K d3 theta - u . grad_A theta
F4 = eta N,  F5 = -|N|
Field-field products are dealiased with the 2/3 rule.
"""
import numpy as np

from .geometry import GeometryPack
from .operators import d3, grad_a, grad_with, top
from .spectral import dealiased_product


def _mesh_factor(pack: GeometryPack):
    """dt(eta_bar) (1 + x3) K, zero for a pack without time layer."""
    if pack.eta_bar_t is None:
        return np.zeros_like(pack.J)
    return pack.eta_bar_t * (1.0 + pack.x3) * pack.K


def _mesh_factor_rate(pack: GeometryPack):
    onepz = 1.0 + pack.x3
    out = pack.eta_bar_t * onepz * pack.K_t
    if pack.eta_bar_tt is not None:
        out = out + pack.eta_bar_tt * onepz * pack.K
    return out


def _advect(u, grads):
    """sum_i u_i g_i with g = grad_A f ([3,...]), dealiased."""
    return sum(dealiased_product(u[i], grads[i]) for i in range(3))


def nonlinear_forcings(u, theta, pack: GeometryPack):
    h = float(pack.x3[1] - pack.x3[0])
    c = _mesh_factor(pack)
    F1 = np.stack([dealiased_product(c, d3(u[j], h)) - _advect(u, grad_a(u[j], pack))
                   for j in range(3)])
    F3 = dealiased_product(c, d3(theta, h)) - _advect(u, grad_a(theta, pack))
    F4 = pack.eta.values * pack.N
    F5 = -pack.Nmag
    return {"F1": F1, "F3": F3, "F4": F4, "F5": F5}


def nonlinear_forcing_rates(u, u_t, theta, theta_t, pack: GeometryPack):
    """Exact first time derivatives of nonlinear_forcings along (u, theta, eta)(t).

    The pack must carry the first time layer; the second layer (eta_tt) is used
    when present and treated as zero otherwise.
    """
    pack.require_time_layer()
    h = float(pack.x3[1] - pack.x3[0])
    c = _mesh_factor(pack)
    c_t = _mesh_factor_rate(pack)

    def rate(f, f_t):
        return (dealiased_product(c_t, d3(f, h)) + dealiased_product(c, d3(f_t, h))
                - _advect(u_t, grad_a(f, pack)) - _advect(u, grad_with(f, pack.Amat_t, pack))
                - _advect(u, grad_a(f_t, pack)))

    F1 = np.stack([rate(u[j], u_t[j]) for j in range(3)])
    F3 = rate(theta, theta_t)
    F4 = pack.eta_t.values * pack.N + pack.eta.values * pack.N_t
    F5 = -pack.Nmag_t
    return {"F1": F1, "F3": F3, "F4": F4, "F5": F5}


def surface_velocity_flux(u, pack: GeometryPack):
    """u . N on the top surface, the kinematic rate of eta."""
    return np.sum(top(u) * pack.N, axis=0)
