"""Transformed differential operators on the slab, nodal discretization.

Horizontal derivatives are Fourier collocation; vertical derivatives are second
order finite differences (one-sided at the two boundaries).  Scalars have shape
[..., nx, ny, nz+1], vectors [..., 3, nx, ny, nz+1], matrices [3, 3, nx, ny, nz+1].
"""
from dataclasses import dataclass

import numpy as np

from .geometry import GeometryPack
from .spectral import deriv


def d3(f, h):
    """Second-order first derivative along the last axis.

    The one-sided end stencils carry the same leading error term as the
    centered interior stencil, so the truncation error stays smooth up to the
    boundary and composed operators keep second order.
    """
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2.0 * h)
    w = (-2.5, 5.5, -5.0, 2.5, -0.5)
    out[..., 0] = sum(c * f[..., i] for i, c in enumerate(w)) / h
    out[..., -1] = -sum(c * f[..., -1 - i] for i, c in enumerate(w)) / h
    return out


def d33(f, h):
    """Three-point second derivative with error-matched six-point ends."""
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]) / h**2
    w = (4.0, -14.0, 20.0, -15.0, 6.0, -1.0)
    out[..., 0] = sum(c * f[..., i] for i, c in enumerate(w)) / h**2
    out[..., -1] = sum(c * f[..., -1 - i] for i, c in enumerate(w)) / h**2
    return out


def _h(pack):
    z = pack.x3
    return float(z[1] - z[0])


def partials(f, pack: GeometryPack):
    """Plain slab derivatives (d1 f, d2 f, d3 f), stacked on a new axis before the spatial axes."""
    g = pack.grid
    return np.stack([deriv(f, g.L1, axis=-3), deriv(f, g.L2, axis=-2), d3(f, _h(pack))], axis=-4)


def _contract(amat, v):
    """(amat v)_i = sum_j amat[i,j] v_j with v of shape [...,3,X,Y,Z]."""
    return np.stack([sum(amat[i, j] * v[..., j, :, :, :] for j in range(3)) for i in range(3)], axis=-4)


def _contract_t(amat, v):
    return np.stack([sum(amat[j, i] * v[..., j, :, :, :] for j in range(3)) for i in range(3)], axis=-4)


def grad_with(f, amat, pack):
    """Gradient built from an arbitrary coefficient matrix (e.g. its time derivative)."""
    return _contract(amat, partials(f, pack))


def grad_a(f, pack: GeometryPack):
    return grad_with(f, pack.Amat, pack)


def grad_a_y3(pack: GeometryPack):
    """Transformed gradient of the physical height from its exact slab partials (A, B, J)."""
    return _contract(pack.Amat, np.stack([pack.A, pack.B, pack.J], axis=-4))


def div_with(u, amat, pack):
    out = 0.0
    for i in range(3):
        p = partials(u[..., i, :, :, :], pack)
        for j in range(3):
            out = out + amat[i, j] * p[..., j, :, :, :]
    return out


def div_a(u, pack: GeometryPack):
    return div_with(u, pack.Amat, pack)


def lap_a(f, pack: GeometryPack):
    return div_a(grad_a(f, pack), pack)


def vec_grad_with(u, amat, pack):
    """Matrix T[i,j] = sum_k amat[i,k] d_k u_j, shape [3,3,...]."""
    return np.stack([grad_with(u[j], amat, pack) for j in range(3)], axis=1)


def symgrad_with(u, amat, pack):
    T = vec_grad_with(u, amat, pack)
    return T + np.swapaxes(T, 0, 1)


def symgrad_a(u, pack: GeometryPack):
    return symgrad_with(u, pack.Amat, pack)


def stress_a(p, u, pack: GeometryPack):
    S = -symgrad_a(u, pack)
    for i in range(3):
        S[i, i] = S[i, i] + p
    return S


def div_matrix_with(T, amat, pack):
    """Divergence contracting the first index: (div T)_j = sum_i amat[i,k] d_k T[i,j]."""
    return np.stack([div_with(T[:, j], amat, pack) for j in range(3)], axis=0)


def div_matrix_a(T, pack):
    return div_matrix_with(T, pack.Amat, pack)


def vec_lap_a(u, pack):
    return np.stack([lap_a(u[i], pack) for i in range(3)], axis=0)


def mat_vec(T, v):
    """Pointwise (T v)_i = T[i,j] v_j; v may live on the surface or volume."""
    return np.stack([sum(T[i, j] * v[j] for j in range(3)) for i in range(3)], axis=0)


def mat_mat(P, Q):
    return np.einsum("ik...,kj...->ij...", P, Q)


def dot(a, b):
    return np.sum(a * b, axis=0)


def top(f):
    """Trace at x3 = 0."""
    return f[..., -1]


def bottom(f):
    return f[..., 0]


def expanded_heat_apply(theta, pack: GeometryPack):
    """The scalar transformed Laplacian written out term by term."""
    g = pack.grid
    h = _h(pack)
    AK = pack.A * pack.K
    BK = pack.B * pack.K
    K = pack.K
    t1 = deriv(theta, g.L1, axis=-3)
    t2 = deriv(theta, g.L2, axis=-2)
    t11 = deriv(t1, g.L1, axis=-3)
    t22 = deriv(t2, g.L2, axis=-2)
    t13 = deriv(d3(theta, h), g.L1, axis=-3)
    t23 = deriv(d3(theta, h), g.L2, axis=-2)
    t33 = d33(theta, h)
    first = (AK * d3(AK, h) + BK * d3(BK, h) - deriv(AK, g.L1, axis=-3)
             - deriv(BK, g.L2, axis=-2) + K * d3(K, h))
    return (t11 + t22 + (1.0 + pack.A**2 + pack.B**2) * K**2 * t33
            - 2.0 * AK * t13 - 2.0 * BK * t23 + first * d3(theta, h))


@dataclass
class MaterialPack:
    M: np.ndarray
    Minv: np.ndarray
    R: np.ndarray
    dR: np.ndarray = None


def material_pack(pack: GeometryPack):
    """M = K grad(Phi), its inverse J A^T, R = dM/dt M^-1 and, with a second layer, dR/dt."""
    pack.require_time_layer()
    K, J, A, B = pack.K, pack.J, pack.A, pack.B
    one = np.ones_like(K)
    zero = np.zeros_like(K)
    gphi = pack.grad_phi()
    M = K * gphi
    Minv = np.array([[J, zero, zero], [zero, J, zero], [-A, -B, one]])
    gphi_t = np.array([[zero, zero, zero], [zero, zero, zero], [pack.A_t, pack.B_t, pack.J_t]])
    M_t = pack.K_t * gphi + K * gphi_t
    R = mat_mat(M_t, Minv)
    dR = None
    if pack.has_second_layer:
        gphi_tt = np.array([[zero, zero, zero], [zero, zero, zero], [pack.A_tt, pack.B_tt, pack.J_tt]])
        M_tt = pack.K_tt * gphi + 2.0 * pack.K_t * gphi_t + K * gphi_tt
        dR = mat_mat(M_tt - mat_mat(R, M_t), Minv)
    return MaterialPack(M=M, Minv=Minv, R=R, dR=dR)


def material_derivative(v, v_t, mat: MaterialPack):
    return v_t - mat_vec(mat.R, v)


def plain_div(u, pack):
    """Slab divergence sum_i d_i u_i."""
    out = 0.0
    for i in range(3):
        out = out + partials(u[i], pack)[i]
    return out


def piola_divergence(u, pack, mat: MaterialPack = None):
    """div(M^-1 u), the conservative form of J div_A u."""
    J, A, B = pack.J, pack.A, pack.B
    w = np.stack([J * u[0], J * u[1], u[2] - A * u[0] - B * u[1]], axis=0)
    return plain_div(w, pack)
