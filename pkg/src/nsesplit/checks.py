"""Invariant suite shared by the ``validate`` subcommand and the tests."""
from __future__ import annotations

import numpy as np

from . import spectral as sp
from .noise import aggregate_increments, apply_G, hs_norm_sq, hs_norm_sq_curl, sample_path, validate_assumptions
from .scheme import SchemeConfig, deterministic_substep, taylor_green
from .spectral import FourierVelocityField, GridSpec

__all__ = ["identity_residuals", "invariant_suite"]


def _sup(u: FourierVelocityField) -> np.ndarray:
    p = u.physical()
    return np.sqrt((p**2).sum(axis=-3)).max(axis=(-2, -1))


def identity_residuals(grid: GridSpec, count: int, seed: int = 0, decay: float = 1.0) -> dict[str, float]:
    """Largest relative residual over ``count`` random band-limited triples.

    Each trilinear residual is divided by its natural bound
    ``sup|u| * |grad v| * |w|`` (with the matching norms for the Stokes and
    vorticity forms).
    """
    rng = np.random.default_rng(seed)
    u = sp.random_field(grid, rng, decay=decay, batch=(count,))
    v = sp.random_field(grid, rng, decay=decay, batch=(count,))
    z = sp.random_field(grid, rng, decay=decay, batch=(count,))
    su = _sup(u)
    hv, hz = np.sqrt(sp.h_norm_sq(v)), np.sqrt(sp.h_norm_sq(z))
    gv, gz, gu = np.sqrt(sp.v_norm_sq(v)), np.sqrt(sp.v_norm_sq(z)), np.sqrt(sp.v_norm_sq(u))
    Buv = sp.bilinear_B(u, v)
    Buz = sp.bilinear_B(u, z)
    Buu = sp.bilinear_B(u, u)
    out = {}
    out["skew"] = float(np.max(np.abs(sp.inner_h(Buv, v)) / (su * gv * hv)))
    out["antisymmetry"] = float(
        np.max(np.abs(sp.inner_h(Buv, z) + sp.inner_h(Buz, v)) / (su * (gv * hz + gz * hv)))
    )
    Au = sp.apply_A(u)
    hAu = np.sqrt(sp.h_norm_sq(Au))
    out["stokes_orthogonality"] = float(np.max(np.abs(sp.inner_h(Au, Buu)) / (su * gu * hAu)))
    w = sp.curl(u)
    xi_v = sp.curl(v)
    lhs = sp.inner_h(sp.curl(Buu), xi_v)
    rhs = sp.inner_h(sp.advect_scalar(u, w), xi_v)
    gw = np.sqrt(sp.scalar_norm_sq(w, 1))
    out["curl_transport"] = float(np.max(np.abs(lhs - rhs) / (su * gw * np.sqrt(sp.scalar_norm_sq(xi_v)))))
    lap = sp.da_norm_sq(u)
    out["laplacian_curl"] = float(np.max(np.abs(lap - sp.scalar_norm_sq(w, 1)) / lap))
    back = sp.velocity_from_vorticity(w)
    out["biot_savart"] = float(np.max(np.sqrt(sp.h_norm_sq(back - u) / sp.h_norm_sq(u))))
    return out


def _row(name: str, value: float, tol: float, kind: str = "invariant") -> dict:
    return {"check": name, "kind": kind, "value": float(value), "tolerance": float(tol), "passed": bool(value <= tol)}


def invariant_suite(config: SchemeConfig, count: int = 20, seed: int = 0) -> list[dict]:
    """Run the structural checks of every module on ``config``.

    Rows of kind ``"invariant"`` are hard requirements; rows of kind
    ``"assumption"`` report the hypotheses of the a priori estimates and are
    warnings only.
    """
    grid = config.grid
    rows = []
    for name, val in identity_residuals(grid, count, seed).items():
        tol = 1e-12 if name in ("laplacian_curl", "biot_savart") else 1e-10
        rows.append(_row(f"spectral.{name}", val, tol))
    res = sp.field_residuals(config.initial_condition)
    rows.append(_row("spectral.initial_condition_admissible", max(res.values()), 1e-12))
    blob = sp.field_to_bytes(config.initial_condition)
    back = sp.field_from_bytes(blob)
    rows.append(_row("spectral.serialization_roundtrip", float(np.abs(back.coeffs - config.initial_condition.coeffs).max()), 0.0))

    # Taylor-Green vortex is an exact steady shape of the Euler nonlinearity
    tg_grid = sp.make_grid(max(grid.N, 8), grid.L)
    u0 = taylor_green(tg_grid)
    u = u0
    steps = 16
    for i in range(steps):
        u, _ = deterministic_substep(u, i / steps, 1 / steps, 0.0, 8)
    kk = (2 * np.pi / tg_grid.L) ** 2 * 2
    exact = u0 * np.exp(-kk * 1.0)
    err = np.sqrt(sp.h_norm_sq(u - exact) / sp.h_norm_sq(exact))
    rows.append(_row("scheme.taylor_green_exact", float(err), 1e-8))

    # energy inequality of the deterministic substep
    rng = np.random.default_rng(seed)
    y = sp.random_field(grid, rng, decay=2.0, energy=3.0)
    u1, diag = deterministic_substep(y, 0.0, config.h, config.eps, config.m, config.coriolis)
    lhs = sp.h_norm_sq(u1) + 2 * (1 - config.eps) * diag.dissipation_v
    rows.append(_row("scheme.energy_inequality", float((lhs - sp.h_norm_sq(y)) / sp.h_norm_sq(y)), 1e-8))

    basis = config.diffusion.basis
    gram = np.einsum("iabc,jabc->ij", basis.fields.conj(), basis.fields).real * grid.L**2
    rows.append(_row("noise.basis_orthonormal", float(np.abs(gram - np.eye(basis.n_modes)).max()), 1e-12))
    v = config.initial_condition
    direct = 0.0
    C = config.diffusion.n_components
    for j in range(C):
        e = np.zeros(C)
        e[j] = 1.0
        direct += float(sp.h_norm_sq(apply_G(config.diffusion, 0.0, v, e, config.eps)))
    closed = float(hs_norm_sq(config.diffusion, 0.0, v, config.eps))
    if config.diffusion.family != "gradient_scaled":
        rows.append(_row("noise.hilbert_schmidt_closed_form", abs(direct - closed) / max(closed, 1e-300), 1e-12))
    rows.append(_row("noise.hs_curl_finite", 0.0 if np.isfinite(hs_norm_sq_curl(config.diffusion, 0.0, v, config.eps)) else 1.0, 0.0))

    path = sample_path(C, 64, config.T, seed)
    a = aggregate_increments(aggregate_increments(path.increments, 16), 4)
    b = aggregate_increments(path.increments, 4)
    rows.append(_row("noise.aggregation_consistent", float(np.abs(a - b).max()), 0.0))

    report = validate_assumptions(config.diffusion, config.coriolis, config.eps, 1)
    for c in report.checks:
        rows.append(
            {"check": f"assumption.{c['name']}", "kind": "assumption", "value": 0.0 if c["satisfied"] else 1.0,
             "tolerance": 0.0, "passed": bool(c["satisfied"])}
        )
    return rows
