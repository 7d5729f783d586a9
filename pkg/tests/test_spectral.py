import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import nsesplit as ns
from nsesplit import spectral as sp
from nsesplit.checks import identity_residuals
from nsesplit.scheme import taylor_green


@pytest.fixture(scope="module")
def grid():
    return ns.make_grid(16)


def test_grid_validation():
    with pytest.raises(ValueError):
        ns.make_grid(15)
    with pytest.raises(ValueError):
        ns.make_grid(2)
    g = ns.make_grid(32)
    assert g.k_max == 10
    assert not g.mask[0, 0]


def test_taylor_green_energy_and_steady_nonlinearity():
    g = ns.make_grid(32)
    u = taylor_green(g)
    assert sp.h_norm_sq(u) == pytest.approx(2 * np.pi**2, rel=1e-13)
    assert sp.v_norm_sq(u) == pytest.approx(4 * np.pi**2, rel=1e-13)
    B = sp.bilinear_B(u, u)
    assert np.sqrt(sp.h_norm_sq(B)) < 1e-12


def test_physical_roundtrip_band_limited(grid):
    u = sp.random_field(grid, np.random.default_rng(1), decay=1.0)
    back = ns.FourierVelocityField.from_physical(grid, u.physical())
    assert np.abs(back.coeffs - u.coeffs).max() < 1e-14


def test_from_physical_projects(grid):
    x, y = grid.physical_coords()
    grad = np.stack([np.cos(x), np.zeros_like(y)])  # gradient of sin x
    u = ns.FourierVelocityField.from_physical(grid, grad)
    assert np.abs(u.coeffs).max() < 1e-14


def test_random_field_admissible(grid):
    u = sp.random_field(grid, np.random.default_rng(2), decay=0.5, batch=(3,))
    assert max(sp.field_residuals(u).values()) < 1e-12
    assert sp.h_norm_sq(u) == pytest.approx(np.ones(3))


def test_identities_on_random_fields(grid):
    res = identity_residuals(grid, 10, seed=3)
    for name, val in res.items():
        assert val < 1e-12, name


def test_x_norm_exact_for_single_mode():
    g = ns.make_grid(16)
    u = ns.scheme.single_mode(g, (1, 0))
    # u = (0, sin x) type field with |u| normalised by the preset; |u|^4 mean is 3/8 of amplitude^4
    p = u.physical()
    amp = np.abs(p).max()
    assert sp.x_norm4(u) == pytest.approx(3 / 8 * amp**4 * g.L**2, rel=1e-12)


def test_curl_and_biot_savart_sign():
    g = ns.make_grid(16)
    x, y = g.physical_coords()
    u = ns.FourierVelocityField.from_physical(g, np.stack([np.zeros_like(x), np.sin(x)]))
    w = sp.curl(u)
    # d/dx sin x = cos x
    assert np.abs(g.to_physical(w.coeffs) - np.cos(x)).max() < 1e-13
    assert np.abs(sp.velocity_from_vorticity(w).coeffs - u.coeffs).max() < 1e-15


def test_inner_products_consistent(grid):
    rng = np.random.default_rng(4)
    u = sp.random_field(grid, rng)
    assert sp.inner_h(u, u) == pytest.approx(sp.h_norm_sq(u))
    assert sp.inner_v(u, u) == pytest.approx(sp.v_norm_sq(u))
    assert sp.inner_h(sp.apply_A(u), u) == pytest.approx(sp.v_norm_sq(u))


def test_norm_bundle(grid):
    u = sp.random_field(grid, np.random.default_rng(5))
    nb = sp.norms(u)
    assert nb.h_norm == pytest.approx(1.0)
    assert nb.v_norm >= nb.h_norm  # Poincare with lambda_1 = 1


def test_serialization_roundtrip(grid):
    u = sp.random_field(grid, np.random.default_rng(6))
    blob = sp.field_to_bytes(u)
    assert blob[:4] == b"NSF1"
    assert np.array_equal(sp.field_from_bytes(blob).coeffs, u.coeffs)
    assert np.array_equal(sp.field_from_json(sp.field_to_json(u)).coeffs, u.coeffs)
    with pytest.raises(ValueError):
        sp.field_from_bytes(b"XXXX" + blob[4:])


def test_grid_mismatch_rejected():
    a = sp.random_field(ns.make_grid(8), np.random.default_rng(0))
    b = sp.random_field(ns.make_grid(16), np.random.default_rng(0))
    with pytest.raises(ValueError):
        sp.bilinear_B(a, b)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), decay=st.floats(0.0, 2.0))
def test_skew_symmetry_property(seed, decay):
    g = ns.make_grid(8)
    rng = np.random.default_rng(seed)
    u = sp.random_field(g, rng, decay=decay)
    v = sp.random_field(g, rng, decay=decay)
    val = sp.inner_h(sp.bilinear_B(u, v), v)
    assert abs(val) < 1e-12 * (1 + sp.v_norm_sq(u) + sp.v_norm_sq(v))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_leray_idempotent_property(seed):
    g = ns.make_grid(8)
    c = np.random.default_rng(seed).standard_normal((2, 16, 16))
    f = ns.FourierVelocityField(g, g.to_spectral(c))
    p1 = sp.leray_project(f)
    p2 = sp.leray_project(p1)
    assert np.abs(p1.coeffs - p2.coeffs).max() < 1e-15
    assert sp.field_residuals(p1)["divergence"] < 1e-13
