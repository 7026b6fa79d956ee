import numpy as np

from flatbenard.elliptic import forms_for
from flatbenard.forms import kt_apply, kt_inverse
from flatbenard.geometry import Grid, geometry_pack


def _pack():
    g = Grid(8, 8, 12)
    X1, X2 = g.surface_mesh()
    return geometry_pack(0.05 * np.cos(2 * np.pi * X1) + 0.03 * np.sin(2 * np.pi * X2), g, epsilon=0.5)


def test_bilinear_forms_are_symmetric(rng):
    pk = _pack()
    fm = forms_for(pk)
    s = (8, 8, 13)
    f, g = rng.normal(size=s), rng.normal(size=s)
    assert abs(fm.ip_h0(f, g) - fm.ip_h0(g, f)) < 1e-12
    assert abs(fm.ip_h1_scalar(f, g) - fm.ip_h1_scalar(g, f)) < 1e-10
    assert abs(fm.boundary_form(f, g) - fm.boundary_form(g, f)) < 1e-12
    assert abs(np.sum(fm.mass_apply(f) * g) - np.sum(fm.mass_apply(g) * f)) < 1e-12


def test_forms_are_positive(rng):
    fm = forms_for(_pack())
    f = rng.normal(size=(8, 8, 13))
    assert fm.ip_h0(f, f) > 0 and fm.ip_h1_scalar(f, f) > 0
    u = rng.normal(size=(3, 8, 8, 13))
    assert fm.ip_h1_vector(u, u) > 0


def test_mass_integrates_weighted_volume():
    pk = _pack()
    fm = forms_for(pk)
    one = np.ones((8, 8, 13))
    # int J over the slab equals the physical volume L1 L2 (1 + mean eta) = 1
    assert abs(fm.ip_h0(one, one) - 1.0) < 1e-12


def test_weighted_change_of_variables_round_trip(rng):
    pk = _pack()
    th = rng.normal(size=(8, 8, 13))
    assert np.abs(kt_inverse(kt_apply(th, pk), pk) - th).max() < 1e-13


def test_weight_change_maps_constant_to_k():
    pk = _pack()
    fm = forms_for(pk)
    Kc = kt_apply(np.ones((8, 8, 13)), pk)
    assert np.abs(Kc - pk.K).max() < 1e-14
    # |K|^2 weighted by J integrates K itself
    w = np.full(13, 1 / 12)
    w[0] = w[-1] = 0.5 / 12
    assert abs(fm.ip_h0(Kc, Kc) - np.sum(pk.K * w) / 64) < 1e-3  # O(h^2), P1 interpolation of K
