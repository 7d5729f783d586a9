"""Fourier-Galerkin representation of divergence-free fields on the 2D torus.

Coefficients follow the convention ``u(x) = sum_k u_hat(k) exp(i k.x)``, so a
field on an ``L x L`` torus satisfies ``int |u|^2 dx = L^2 sum_k |u_hat(k)|^2``.
Arrays are stored in full ``fftfreq`` order with shape ``(..., 2, N, N)`` for
vector fields and ``(..., N, N)`` for scalar fields; leading axes are batch
axes and every operator broadcasts over them.

Nonlinear products are formed on a ``2N x 2N`` physical grid and truncated
to ``|j_i| <= N // 3`` (the 2/3 rule), which makes them exact for
band-limited inputs.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridSpec",
    "FourierVelocityField",
    "ScalarVorticityField",
    "NormBundle",
    "make_grid",
    "leray_project",
    "apply_A",
    "bilinear_B",
    "advect_scalar",
    "curl",
    "velocity_from_vorticity",
    "norms",
    "h_norm_sq",
    "v_norm_sq",
    "da_norm_sq",
    "x_norm4",
    "scalar_norm_sq",
    "inner_h",
    "inner_v",
    "random_field",
    "field_residuals",
    "field_to_bytes",
    "field_from_bytes",
    "field_to_json",
    "field_from_json",
]


@dataclass(frozen=True)
class GridSpec:
    """Spectral resolution of the torus.

    Attributes
    ----------
    N : int
        Modes per dimension (even, >= 4).
    L : float
        Side length of the torus.
    k_max : int
        Largest retained integer wavenumber per axis, ``N // 3``.
    """

    N: int
    L: float = 2 * np.pi
    k_max: int = field(default=-1)

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or self.N < 4 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 4, got {self.N!r}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L!r}")
        if self.k_max == -1:
            object.__setattr__(self, "k_max", int(self.N) // 3)
        if not 1 <= self.k_max <= int(self.N) // 3:
            raise ValueError(f"k_max must lie in [1, N//3], got {self.k_max}")

    @property
    def M(self) -> int:
        """Side of the physical quadrature grid used for products."""
        return 2 * self.N

    @property
    def k0(self) -> float:
        return 2 * np.pi / self.L

    @cached_property
    def j(self) -> np.ndarray:
        """Integer wavenumbers in fftfreq order."""
        return np.fft.fftfreq(self.N, 1.0 / self.N).round().astype(int)

    @cached_property
    def k1(self) -> np.ndarray:
        return (self.k0 * self.j)[:, None] * np.ones((1, self.N))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.ones((self.N, 1)) * (self.k0 * self.j)[None, :]

    @cached_property
    def ksq(self) -> np.ndarray:
        return self.k1**2 + self.k2**2

    @cached_property
    def inv_ksq(self) -> np.ndarray:
        out = np.zeros_like(self.ksq)
        nz = self.ksq > 0
        out[nz] = 1.0 / self.ksq[nz]
        return out

    @cached_property
    def mask(self) -> np.ndarray:
        """Retained modes: ``|j_i| <= k_max`` and ``k != 0``."""
        J1, J2 = np.meshgrid(self.j, self.j, indexing="ij")
        m = (np.abs(J1) <= self.k_max) & (np.abs(J2) <= self.k_max)
        m[0, 0] = False
        return m

    @cached_property
    def _transfer(self):
        # Index maps between the N x N coefficient array and the rfft layout
        # of the M x M physical grid.
        M = self.M
        J1, J2 = np.meshgrid(self.j, self.j, indexing="ij")
        band = (np.abs(J1) <= self.k_max) & (np.abs(J2) <= self.k_max)
        pos = band & (J2 >= 0)
        neg = band & (J2 < 0)
        src_pos = np.nonzero(pos)
        dst_pos = (J1[pos] % M, J2[pos])
        src_neg = np.nonzero(neg)
        dst_neg = ((-J1[neg]) % M, -J2[neg])
        return src_pos, dst_pos, src_neg, dst_neg

    def to_physical(self, c: np.ndarray) -> np.ndarray:
        """Evaluate band-limited coefficients on the ``M x M`` grid."""
        M = self.M
        src_pos, dst_pos, _, _ = self._transfer
        half = np.zeros(c.shape[:-2] + (M, M // 2 + 1), dtype=complex)
        half[..., dst_pos[0], dst_pos[1]] = c[..., src_pos[0], src_pos[1]]
        return sfft.irfft2(half, s=(M, M)) * (M * M)

    def to_spectral(self, f: np.ndarray) -> np.ndarray:
        """Project grid values onto the retained band (zero elsewhere)."""
        M = self.M
        src_pos, dst_pos, src_neg, dst_neg = self._transfer
        half = sfft.rfft2(f) / (M * M)
        out = np.zeros(f.shape[:-2] + (self.N, self.N), dtype=complex)
        out[..., src_pos[0], src_pos[1]] = half[..., dst_pos[0], dst_pos[1]]
        out[..., src_neg[0], src_neg[1]] = np.conj(half[..., dst_neg[0], dst_neg[1]])
        out[..., 0, 0] = 0.0
        return out

    def physical_coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.M) * (self.L / self.M)
        return np.meshgrid(x, x, indexing="ij")


def make_grid(N: int, L: float = 2 * np.pi) -> GridSpec:
    return GridSpec(N=N, L=float(L))


@dataclass(frozen=True, eq=False)
class FourierVelocityField:
    """Mean-zero vector field given by its Fourier coefficients.

    ``coeffs`` has shape ``(..., 2, N, N)``; leading axes index independent
    samples.
    """

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim < 3 or c.shape[-3:] != (2, self.grid.N, self.grid.N):
            raise ValueError(f"expected shape (..., 2, {self.grid.N}, {self.grid.N}), got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: GridSpec, batch: tuple[int, ...] = ()) -> FourierVelocityField:
        return cls(grid, np.zeros(batch + (2, grid.N, grid.N), dtype=complex))

    @classmethod
    def from_physical(cls, grid: GridSpec, u: np.ndarray) -> FourierVelocityField:
        """Build a field from values on the ``2N x 2N`` grid (projected to H)."""
        return leray_project(cls(grid, grid.to_spectral(np.asarray(u, dtype=float))))

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-3]

    def physical(self) -> np.ndarray:
        return self.grid.to_physical(self.coeffs)

    def __add__(self, other):
        _check_grid(self, other)
        return FourierVelocityField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_grid(self, other)
        return FourierVelocityField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return FourierVelocityField(self.grid, self.coeffs * np.asarray(a)[..., None, None, None])

    __rmul__ = __mul__

    def __getitem__(self, idx):
        c = self.coeffs[idx]
        return FourierVelocityField(self.grid, c)


@dataclass(frozen=True, eq=False)
class ScalarVorticityField:
    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim < 2 or c.shape[-2:] != (self.grid.N, self.grid.N):
            raise ValueError(f"expected shape (..., {self.grid.N}, {self.grid.N}), got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    def physical(self) -> np.ndarray:
        return self.grid.to_physical(self.coeffs)


class NormBundle(NamedTuple):
    """H, V, D(A) and L^4 norms (arrays over the batch axes)."""

    h_norm: np.ndarray
    v_norm: np.ndarray
    da_norm: np.ndarray
    x_norm: np.ndarray


def _check_grid(a, b):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


# -- linear operators --------------------------------------------------------


def _project(grid: GridSpec, c: np.ndarray) -> np.ndarray:
    k1, k2 = grid.k1, grid.k2
    kdotf = (k1 * c[..., 0, :, :] + k2 * c[..., 1, :, :]) * grid.inv_ksq
    out = np.empty_like(c)
    out[..., 0, :, :] = (c[..., 0, :, :] - k1 * kdotf) * grid.mask
    out[..., 1, :, :] = (c[..., 1, :, :] - k2 * kdotf) * grid.mask
    return out


def leray_project(f: FourierVelocityField) -> FourierVelocityField:
    """Orthogonal projection onto divergence-free, mean-zero, band-limited fields."""
    return FourierVelocityField(f.grid, _project(f.grid, f.coeffs))


def apply_A(u: FourierVelocityField) -> FourierVelocityField:
    """Stokes operator, ``|k|^2`` per mode."""
    return FourierVelocityField(u.grid, u.coeffs * u.grid.ksq)


def _bilinear(grid: GridSpec, cu: np.ndarray, cv: np.ndarray | None = None) -> np.ndarray:
    # (u . grad) v = div(u (x) v) for divergence-free u; products are exact on
    # the 2N grid for band-limited inputs.
    up = grid.to_physical(cu)
    u1, u2 = up[..., 0, :, :], up[..., 1, :, :]
    if cv is None:
        prods = np.stack([u1 * u1, u1 * u2, u2 * u2], axis=-3)
        h = grid.to_spectral(prods)
        h11, h12, h22 = h[..., 0, :, :], h[..., 1, :, :], h[..., 2, :, :]
        h21 = h12
    else:
        vp = grid.to_physical(cv)
        v1, v2 = vp[..., 0, :, :], vp[..., 1, :, :]
        prods = np.stack([u1 * v1, u2 * v1, u1 * v2, u2 * v2], axis=-3)
        h = grid.to_spectral(prods)
        h11, h21, h12, h22 = (h[..., i, :, :] for i in range(4))
    ik1, ik2 = 1j * grid.k1, 1j * grid.k2
    w = np.stack([ik1 * h11 + ik2 * h21, ik1 * h12 + ik2 * h22], axis=-3)
    return _project(grid, w)


def bilinear_B(u: FourierVelocityField, v: FourierVelocityField) -> FourierVelocityField:
    """Leray projection of ``(u . grad) v``, dealiased."""
    _check_grid(u, v)
    if u is v:
        return FourierVelocityField(u.grid, _bilinear(u.grid, u.coeffs))
    return FourierVelocityField(u.grid, _bilinear(u.grid, u.coeffs, v.coeffs))


def advect_scalar(u: FourierVelocityField, xi: ScalarVorticityField) -> ScalarVorticityField:
    """Dealiased scalar transport term ``(u . grad) xi``."""
    _check_grid(u, xi)
    grid = u.grid
    up = grid.to_physical(u.coeffs)
    xp = grid.to_physical(xi.coeffs)
    h = grid.to_spectral(np.stack([up[..., 0, :, :] * xp, up[..., 1, :, :] * xp], axis=-3))
    out = 1j * grid.k1 * h[..., 0, :, :] + 1j * grid.k2 * h[..., 1, :, :]
    return ScalarVorticityField(grid, out * grid.mask)


def curl(u: FourierVelocityField) -> ScalarVorticityField:
    g = u.grid
    c = u.coeffs
    return ScalarVorticityField(g, 1j * g.k1 * c[..., 1, :, :] - 1j * g.k2 * c[..., 0, :, :])


def velocity_from_vorticity(xi: ScalarVorticityField) -> FourierVelocityField:
    """Biot-Savart inversion: the mean-zero divergence-free u with curl u = xi."""
    g = xi.grid
    c = xi.coeffs * g.inv_ksq * g.mask
    return FourierVelocityField(g, np.stack([1j * g.k2 * c, -1j * g.k1 * c], axis=-3))


# -- norms and pairings ------------------------------------------------------


def _sq_sum(c: np.ndarray, weight=None, axes=(-3, -2, -1)) -> np.ndarray:
    a = c.real**2 + c.imag**2
    if weight is not None:
        a = a * weight
    return a.sum(axis=axes)


def h_norm_sq(u: FourierVelocityField) -> np.ndarray:
    return u.grid.L**2 * _sq_sum(u.coeffs)


def v_norm_sq(u: FourierVelocityField) -> np.ndarray:
    return u.grid.L**2 * _sq_sum(u.coeffs, u.grid.ksq)


def da_norm_sq(u: FourierVelocityField) -> np.ndarray:
    return u.grid.L**2 * _sq_sum(u.coeffs, u.grid.ksq**2)


def x_norm4(u: FourierVelocityField) -> np.ndarray:
    """``int |u|^4 dx``; exact on the 2N grid for band-limited u."""
    p = u.physical()
    s = p[..., 0, :, :] ** 2 + p[..., 1, :, :] ** 2
    return (s * s).mean(axis=(-2, -1)) * u.grid.L**2


def scalar_norm_sq(xi: ScalarVorticityField, order: int = 0) -> np.ndarray:
    """``|grad^order xi|^2`` in L^2 for order 0 or 1."""
    w = None if order == 0 else xi.grid.ksq**order
    return xi.grid.L**2 * _sq_sum(xi.coeffs, w, axes=(-2, -1))


def norms(u: FourierVelocityField) -> NormBundle:
    return NormBundle(
        h_norm=np.sqrt(h_norm_sq(u)),
        v_norm=np.sqrt(v_norm_sq(u)),
        da_norm=np.sqrt(da_norm_sq(u)),
        x_norm=x_norm4(u) ** 0.25,
    )


def inner_h(u, v) -> np.ndarray:
    """L^2 pairing of two vector (or two scalar) fields."""
    _check_grid(u, v)
    nax = 3 if isinstance(u, FourierVelocityField) else 2
    axes = tuple(range(-nax, 0))
    return u.grid.L**2 * np.real(u.coeffs * np.conj(v.coeffs)).sum(axis=axes)


def inner_v(u: FourierVelocityField, v: FourierVelocityField) -> np.ndarray:
    _check_grid(u, v)
    return u.grid.L**2 * np.real(u.coeffs * np.conj(v.coeffs) * u.grid.ksq).sum(axis=(-3, -2, -1))


# -- construction and checks -------------------------------------------------


def random_field(
    grid: GridSpec,
    rng: np.random.Generator,
    decay: float = 1.0,
    energy: float | None = 1.0,
    batch: tuple[int, ...] = (),
) -> FourierVelocityField:
    """Random band-limited field with spectrum ``|u_hat(k)| ~ |k|^-decay``.

    If ``energy`` is given each sample is rescaled to ``|u| = energy``.
    """
    noise = rng.standard_normal(batch + (2, grid.M, grid.M))
    c = grid.to_spectral(noise)
    c = c * np.sqrt(grid.inv_ksq) ** decay
    u = leray_project(FourierVelocityField(grid, c))
    if energy is not None:
        h = np.sqrt(h_norm_sq(u))
        u = FourierVelocityField(grid, u.coeffs * (energy / np.where(h > 0, h, 1.0))[..., None, None, None])
    return u


def field_residuals(u: FourierVelocityField) -> dict[str, float]:
    """Largest violation of reality, zero mean and divergence-freeness, relative to the field size."""
    g = u.grid
    c = u.coeffs
    scale = float(np.abs(c).max()) or 1.0
    idx = (-g.j) % g.N
    mirror = np.conj(c[..., idx, :][..., :, idx])
    herm = np.abs(c - mirror)
    # The Nyquist row/column has no partner inside the array; it is zero in H.
    herm[..., g.N // 2, :] = 0
    herm[..., :, g.N // 2] = 0
    div = np.abs(g.k1 * c[..., 0, :, :] + g.k2 * c[..., 1, :, :]) / np.sqrt(np.maximum(g.ksq, 1.0))
    return {
        "hermitian": float(herm.max()) / scale,
        "mean": float(np.abs(c[..., :, 0, 0]).max()) / scale,
        "divergence": float(div.max()) / scale,
        "outside_band": float(np.abs(c * ~g.mask).max()) / scale,
    }


# -- serialization -----------------------------------------------------------

_MAGIC = b"NSF1"


def field_to_bytes(u: FourierVelocityField) -> bytes:
    """Binary layout: magic, N (u32), L (f64), ncomp (u32), then complex128
    little-endian coefficients in row-major ``(component, j1, j2)`` order with
    fftfreq wavenumber ordering."""
    c = np.ascontiguousarray(u.coeffs, dtype="<c16")
    if c.ndim != 3:
        raise ValueError("serialize one field at a time")
    return _MAGIC + struct.pack("<IdI", u.grid.N, u.grid.L, 2) + c.tobytes()


def field_from_bytes(data: bytes) -> FourierVelocityField:
    if data[:4] != _MAGIC:
        raise ValueError("not a field snapshot")
    N, L, nc = struct.unpack_from("<IdI", data, 4)
    off = 4 + struct.calcsize("<IdI")
    c = np.frombuffer(data[off:], dtype="<c16").reshape(nc, N, N)
    return FourierVelocityField(make_grid(N, L), c.copy())


def field_to_json(u: FourierVelocityField) -> str:
    c = u.coeffs
    return json.dumps(
        {
            "N": u.grid.N,
            "L": u.grid.L,
            "components": 2,
            "order": "component,j1,j2 (fftfreq)",
            "real": c.real.ravel().tolist(),
            "imag": c.imag.ravel().tolist(),
        }
    )


def field_from_json(text: str) -> FourierVelocityField:
    d = json.loads(text)
    N = int(d["N"])
    c = (np.asarray(d["real"]) + 1j * np.asarray(d["imag"])).reshape(2, N, N)
    return FourierVelocityField(make_grid(N, d["L"]), c)
