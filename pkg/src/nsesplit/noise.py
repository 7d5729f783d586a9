"""Truncated cylindrical Wiener noise, diffusion coefficients and the rotation term.

The Wiener process is truncated to finitely many real divergence-free Fourier
modes ``e_j`` (orthonormal in H).  Each diffusion family maps a state ``u``
to the operator ``dW -> sum_j g_j(u) dW_j``.
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from .spectral import FourierVelocityField, GridSpec, _project, da_norm_sq, v_norm_sq

__all__ = [
    "FAMILIES",
    "NoiseBasisSpec",
    "DiffusionSpec",
    "CoriolisSpec",
    "BrownianPath",
    "ValidationReport",
    "derive_seed",
    "sample_path",
    "aggregate",
    "apply_G",
    "hs_norm_sq",
    "hs_norm_sq_curl",
    "apply_R",
    "validate_assumptions",
]

Family = Literal["additive", "diagonal_multiplicative", "gradient_scaled"]


@dataclass(frozen=True)
class NoiseBasisSpec:
    """First ``n_modes`` real Fourier basis fields, ordered by ``|k|``.

    Each wavevector in the upper half plane contributes a cosine and a sine
    field ``sqrt(2)/L * tau_k * cos(k.x)`` (resp. ``sin``) with
    ``tau_k = (-k_2, k_1)/|k|``; ``k_max`` restricts the shells used.
    """

    grid: GridSpec
    n_modes: int
    k_max: int | None = None

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be positive")
        if self.n_modes > len(self.mode_map):
            raise ValueError(f"only {len(self.mode_map)} basis fields fit in the band")

    @cached_property
    def mode_map(self) -> list[tuple[int, int, str]]:
        kmax = self.grid.k_max if self.k_max is None else min(self.k_max, self.grid.k_max)
        vecs = [
            (a, b)
            for a in range(-kmax, kmax + 1)
            for b in range(0, kmax + 1)
            if (b > 0 or a > 0)
        ]
        vecs.sort(key=lambda v: (v[0] ** 2 + v[1] ** 2, v[1], v[0]))
        return [(a, b, kind) for a, b in vecs for kind in ("cos", "sin")]

    @cached_property
    def wavevectors(self) -> np.ndarray:
        return np.array([(a, b) for a, b, _ in self.mode_map[: self.n_modes]], dtype=float) * self.grid.k0

    @cached_property
    def _sparse(self):
        # Each basis field lives on the two modes +k and -k; keep the distinct
        # positions and a (n_modes, P, 2) table of their coefficients.
        g = self.grid
        N = g.N
        amp = np.sqrt(2.0) / g.L
        pos: dict[tuple[int, int], int] = {}
        entries = []
        for idx, (a, b, kind) in enumerate(self.mode_map[: self.n_modes]):
            k = np.array([a, b], dtype=float)
            tau = np.array([-k[1], k[0]]) / np.hypot(*k)
            cp = amp * tau / 2 if kind == "cos" else amp * tau / 2j
            for key, val in (((a % N, b % N), cp), (((-a) % N, (-b) % N), np.conj(cp))):
                p = pos.setdefault(key, len(pos))
                entries.append((idx, p, val))
        table = np.zeros((self.n_modes, len(pos), 2), dtype=complex)
        for idx, p, val in entries:
            table[idx, p] += val
        rows = np.array([r for r, _ in pos], dtype=int)
        cols = np.array([c for _, c in pos], dtype=int)
        return rows, cols, table

    @cached_property
    def fields(self) -> np.ndarray:
        """Coefficients of the basis fields, shape ``(n_modes, 2, N, N)``."""
        return self.synthesize(np.eye(self.n_modes))

    @cached_property
    def ksq(self) -> np.ndarray:
        return (self.wavevectors**2).sum(axis=1)

    def synthesize(self, w: np.ndarray) -> np.ndarray:
        """``sum_j w_j e_j`` for weights of shape ``(..., n_modes)``."""
        rows, cols, table = self._sparse
        vals = np.einsum("...j,jpc->...cp", w, table)
        N = self.grid.N
        out = np.zeros(w.shape[:-1] + (2, N, N), dtype=complex)
        out[..., rows, cols] = vals
        return out

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        """H-inner products ``<u, e_j>`` for coefficient arrays ``(..., 2, N, N)``."""
        rows, cols, table = self._sparse
        vals = u[..., rows, cols]
        return self.grid.L**2 * np.real(np.einsum("...cp,jpc->...j", vals, np.conj(table)))


FAMILIES = ("additive", "diagonal_multiplicative", "gradient_scaled")

@dataclass(frozen=True)
class DiffusionSpec:
    """Diffusion coefficient ``G``.

    ``additive``: ``g_j = a_j e_j``.
    ``diagonal_multiplicative``: ``g_j(u) = a_j (beta0 + beta1 tanh <u, e_j>) e_j``.
    ``gradient_scaled``: additive part plus two transport components
    ``sqrt(eps) * gamma * d_i u``, i = 1, 2.

    Amplitudes are ``a_j = amplitude * |k_j|^(-decay)``.
    """

    basis: NoiseBasisSpec
    family: Family = "additive"
    amplitude: float = 1.0
    decay: float = 0.0
    beta0: float = 1.0
    beta1: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown diffusion family {self.family!r}")

    @cached_property
    def amplitudes(self) -> np.ndarray:
        return self.amplitude * self.basis.ksq ** (-self.decay / 2)

    @property
    def n_components(self) -> int:
        return self.basis.n_modes + (2 if self.family == "gradient_scaled" else 0)

    def constants(self) -> dict[str, float]:
        """Growth and Lipschitz constants valid for both the H-level and the
        curl-level bounds (the larger of the two is reported)."""
        a2 = self.amplitudes**2
        lam = self.basis.ksq
        if self.family == "additive":
            return dict(K0=float(max(a2.sum(), (a2 * lam).sum())), K1=0.0, K2=0.0, L1=0.0, L2=0.0)
        if self.family == "diagonal_multiplicative":
            b0, b1 = self.beta0**2, self.beta1**2
            return dict(
                K0=float(2 * b0 * max(a2.sum(), (a2 * lam).sum())),
                K1=float(2 * b1 * a2.max()),
                K2=0.0,
                L1=float(b1 * a2.max()),
                L2=0.0,
            )
        g2 = self.gamma**2
        return dict(K0=float(max(a2.sum(), (a2 * lam).sum())), K1=0.0, K2=g2, L1=0.0, L2=g2)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "basis"}
        d["n_modes"] = self.basis.n_modes
        d["basis_k_max"] = self.basis.k_max
        return d


@dataclass(frozen=True)
class CoriolisSpec:
    """Rotation term ``R(t, u) = P[c0 (-u_2, u_1)]``."""

    c0: float = 0.0

    def constants(self) -> dict[str, float]:
        return dict(R0=0.0, R1=abs(self.c0))


def apply_R(spec: CoriolisSpec, t: float, u: np.ndarray, grid: GridSpec) -> np.ndarray:
    # For divergence-free u on the torus, (-u_2, u_1) is a gradient, so the
    # projected term vanishes up to roundoff; it is still evaluated.
    if spec.c0 == 0.0:
        return np.zeros_like(u)
    rot = np.stack([-u[..., 1, :, :], u[..., 0, :, :]], axis=-3) * spec.c0
    return _project(grid, rot)


# -- Brownian paths -------------------------------------------------------


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit trajectory seed from ``(master_seed, index)`` via SeedSequence."""
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Wiener increments on the finest grid, shape ``(finest_n, n_components)``."""

    increments: np.ndarray
    T: float
    seed: int | None = None

    @property
    def finest_n(self) -> int:
        return self.increments.shape[-2]

    @property
    def n_components(self) -> int:
        return self.increments.shape[-1]

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.increments).tobytes()).hexdigest()


def sample_path(
    source: int | DiffusionSpec | NoiseBasisSpec, finest_n: int, T: float, seed: int
) -> BrownianPath:
    """Draw finest-level increments; ``source`` gives the number of Wiener components."""
    if isinstance(source, DiffusionSpec):
        n_components = source.n_components
    elif isinstance(source, NoiseBasisSpec):
        n_components = source.n_modes
    else:
        n_components = int(source)
    if finest_n < 1:
        raise ValueError("finest_n must be >= 1")
    rng = np.random.default_rng(seed)
    inc = rng.standard_normal((finest_n, n_components)) * np.sqrt(T / finest_n)
    return BrownianPath(inc, float(T), seed)


def aggregate_increments(inc: np.ndarray, coarse_n: int) -> np.ndarray:
    """Sum fine increments (axis -2) into ``coarse_n`` groups.

    Dyadic factors are summed pairwise, level by level, so views at any two
    dyadic levels are exactly consistent with each other.
    """
    fine = inc.shape[-2]
    if coarse_n < 1 or fine % coarse_n:
        raise ValueError(f"coarse_n={coarse_n} does not divide finest_n={fine}")
    x = inc
    while x.shape[-2] > coarse_n and (x.shape[-2] // coarse_n) % 2 == 0:
        x = x[..., 0::2, :] + x[..., 1::2, :]
    r = x.shape[-2] // coarse_n
    if r > 1:
        x = x.reshape(x.shape[:-2] + (coarse_n, r, x.shape[-1])).sum(axis=-2)
    return x


def aggregate(path: BrownianPath, coarse_n: int) -> np.ndarray:
    return aggregate_increments(path.increments, coarse_n)


# -- diffusion coefficient -------------------------------------------------


def _weights(spec: DiffusionSpec, u: np.ndarray) -> np.ndarray:
    # Per-mode scalar multipliers phi_j(u) (ones for state-independent families).
    if spec.family == "diagonal_multiplicative":
        c = spec.basis.coefficients(u)
        return spec.beta0 + spec.beta1 * np.tanh(c)
    return np.ones(u.shape[:-3] + (spec.basis.n_modes,))


def noise_field(spec: DiffusionSpec, u: np.ndarray, dW: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """``G(u) dW`` on coefficient arrays; ``dW`` has shape ``(..., n_components)``.

    Extra leading axes of ``dW`` beyond those of ``u`` are broadcast against
    ``u`` (used for partial sums inside an interval).
    """
    J = spec.basis.n_modes
    if dW.shape[-1] != spec.n_components:
        raise ValueError(f"dW has {dW.shape[-1]} components, expected {spec.n_components}")
    w = _weights(spec, u) * dW[..., :J]
    out = spec.basis.synthesize(w * spec.amplitudes)
    if spec.family == "gradient_scaled" and eps > 0 and spec.gamma != 0:
        g = spec.basis.grid
        s = np.sqrt(eps) * spec.gamma
        out = out + s * (
            1j * g.k1 * u * dW[..., J, None, None, None] + 1j * g.k2 * u * dW[..., J + 1, None, None, None]
        )
    return out


def apply_G(
    spec: DiffusionSpec, t: float, u: FourierVelocityField, dW: np.ndarray, eps: float = 0.0
) -> FourierVelocityField:
    return FourierVelocityField(u.grid, noise_field(spec, u.coeffs, np.asarray(dW, dtype=float), eps))


def hs_norm_sq(spec: DiffusionSpec, t: float, u: FourierVelocityField, eps: float = 0.0) -> np.ndarray:
    """Squared Hilbert-Schmidt norm of ``G(t, u)`` from K to H."""
    w = _weights(spec, u.coeffs)
    out = (w**2 * spec.amplitudes**2).sum(axis=-1)
    if spec.family == "gradient_scaled":
        out = out + eps * spec.gamma**2 * v_norm_sq(u)
    return out


def hs_norm_sq_curl(spec: DiffusionSpec, t: float, u: FourierVelocityField, eps: float = 0.0) -> np.ndarray:
    """``sum_j |curl g_j(t, u)|^2`` in L^2."""
    w = _weights(spec, u.coeffs)
    out = (w**2 * spec.amplitudes**2 * spec.basis.ksq).sum(axis=-1)
    if spec.family == "gradient_scaled":
        out = out + eps * spec.gamma**2 * da_norm_sq(u)
    return out


# -- hypothesis bookkeeping -------------------------------------------------


@dataclass
class ValidationReport:
    checks: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c["satisfied"] for c in self.checks)

    @property
    def warnings(self) -> list[str]:
        return [f"{c['name']}: {c['expression']} is false" for c in self.checks if not c["satisfied"]]

    def get(self, name: str) -> dict:
        for c in self.checks:
            if c["name"] == name:
                return c
        raise KeyError(name)

    def _add(self, name: str, expression: str, satisfied: bool, used_by: str):
        self.checks.append(dict(name=name, expression=expression, satisfied=bool(satisfied), used_by=used_by))


def validate_assumptions(
    spec: DiffusionSpec | dict,
    coriolis: CoriolisSpec,
    eps: float,
    p: int,
    u0_moments_finite: bool = True,
) -> ValidationReport:
    """Evaluate the smallness conditions on the noise constants.

    ``spec`` may be a DiffusionSpec or a plain mapping of the constants
    ``K2``, ``L2``. Nothing here raises; failed checks become warnings.
    """
    c = spec.constants() if isinstance(spec, DiffusionSpec) else dict(spec)
    K2, L2 = float(c.get("K2", 0.0)), float(c.get("L2", 0.0))
    rep = ValidationReport()
    rep._add("eps_range", f"0 <= eps={eps:g} < 1", 0 <= eps < 1, "scheme definition")
    rep._add("well_posed", f"K2={K2:g} <= L2={L2:g} < 2", K2 <= L2 < 2, "existence and H-moment bounds")
    bound = 2.0 / (2 * p - 1)
    rep._add("moment_order", f"K2={K2:g} < 2/(2p-1)={bound:.6g} (p={p})", K2 < bound, "moments of order 2p")
    rep._add("difference_bounds", f"K2={K2:g} < 2/3 and L2={L2:g} < 2", K2 < 2 / 3 and L2 < 2, "u^n - y^n, z^n - u^n")
    rep._add("rate_K2", f"K2={K2:g} < 2/7={2 / 7:.6g}", K2 < 2 / 7, "localized rate")
    rep._add("rate_initial_moment", "E||u0||^8 < inf", u0_moments_finite, "localized rate")
    lhs, rhs = eps * L2, 2 * (1 - eps)
    rep._add("parabolicity", f"eps*L2={lhs:.6g} < 2(1-eps)={rhs:.6g}", lhs < rhs, "stochastic substep")
    rc = coriolis.constants()
    rep._add("rotation_curl", f"|curl R| = |c0 div u| = 0 <= R0={rc['R0']:g}", True, "curl-level bounds")
    return rep
