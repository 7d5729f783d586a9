"""Deterministic/stochastic splitting for the stochastic Navier-Stokes equations.

On each mesh interval ``[t_i, t_{i+1})`` the scheme first solves the
deterministic equation ``du/dt + (1-eps) A u + B(u, u) + R(t, u) = 0`` from
``y(t_i^-)``, then the stochastic Stokes equation
``dy + eps A y dt = G(t, y) dW`` from ``u(t_{i+1}^-)``, both over the same
interval.

The deterministic substep uses ``m`` integrating-factor Heun steps (exact on
the Stokes part).  The stochastic substep uses exponential Euler-Maruyama
with the Itô (left point) evaluation of ``G``.  Inside an interval the noisy
state is also evaluated at ``q`` equally spaced sub-times, using partial
sums of the finest Brownian increments; ``q = gcd(m, finest_n // n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple

import numpy as np

from . import spectral as sp
from .noise import BrownianPath, CoriolisSpec, DiffusionSpec, aggregate_increments, apply_R, noise_field
from .spectral import FourierVelocityField, GridSpec

__all__ = [
    "SchemeConfig",
    "SchemeTrajectory",
    "SchemeBlowUp",
    "IntervalRecord",
    "grid_functions",
    "deterministic_substep",
    "stochastic_substep",
    "march",
    "run_scheme",
    "dense_z",
    "taylor_green",
    "random_smooth",
    "single_mode",
    "initial_condition",
]


class SchemeBlowUp(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"non-finite state in interval {step}")
        self.step = step


@dataclass(frozen=True, eq=False)
class SchemeConfig:
    T: float
    n: int
    eps: float
    grid: GridSpec
    diffusion: DiffusionSpec
    initial_condition: FourierVelocityField
    m: int = 4
    coriolis: CoriolisSpec = field(default_factory=CoriolisSpec)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 <= self.eps < 1:
            raise ValueError(f"eps must lie in [0, 1), got {self.eps}")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.initial_condition.grid != self.grid:
            raise ValueError("initial condition lives on a different grid")

    @property
    def h(self) -> float:
        return self.T / self.n

    def with_n(self, n: int) -> SchemeConfig:
        return replace(self, n=n)


# -- presets ---------------------------------------------------------------


def taylor_green(grid: GridSpec, amplitude: float = 1.0) -> FourierVelocityField:
    """``u = amplitude * (cos x1 sin x2, -sin x1 cos x2)`` (scaled to the box)."""
    X, Y = grid.physical_coords()
    k = grid.k0
    u = amplitude * np.stack([np.cos(k * X) * np.sin(k * Y), -np.sin(k * X) * np.cos(k * Y)])
    return FourierVelocityField.from_physical(grid, u)


def single_mode(grid: GridSpec, k: tuple[int, int] = (1, 0), amplitude: float = 1.0) -> FourierVelocityField:
    """``amplitude * tau_k cos(k.x)`` with ``tau_k`` perpendicular to k."""
    X, Y = grid.physical_coords()
    a, b = k
    tau = np.array([-b, a], dtype=float) / math.hypot(a, b)
    phase = grid.k0 * (a * X + b * Y)
    u = amplitude * tau[:, None, None] * np.cos(phase)[None]
    return FourierVelocityField.from_physical(grid, u)


def random_smooth(grid: GridSpec, decay: float = 3.0, seed: int = 0, energy: float = 1.0) -> FourierVelocityField:
    return sp.random_field(grid, np.random.default_rng(seed), decay=decay, energy=energy)


def initial_condition(grid: GridSpec, spec: dict | str) -> FourierVelocityField:
    """Build a preset from ``{"preset": name, ...}``; presets may be summed via
    ``{"sum": [spec, spec, ...]}``."""
    if isinstance(spec, str):
        spec = {"preset": spec}
    if "sum" in spec:
        parts = [initial_condition(grid, s) for s in spec["sum"]]
        out = parts[0]
        for p in parts[1:]:
            out = out + p
        return out
    kw = {k: v for k, v in spec.items() if k != "preset"}
    name = spec["preset"]
    if name == "taylor_green":
        return taylor_green(grid, **kw)
    if name == "random_smooth":
        return random_smooth(grid, **kw)
    if name == "single_mode":
        if "k" in kw:
            kw["k"] = tuple(kw["k"])
        return single_mode(grid, **kw)
    raise ValueError(f"unknown initial condition preset {name!r}")


# -- time grid ---------------------------------------------------------------


def grid_functions(t: float, n: int, T: float) -> tuple[float, float]:
    """Left and right mesh points ``(d_n(t), d*_n(t))``; the last interval is closed."""
    if not 0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    h = T / n
    i = min(int(math.floor(t / h + 1e-12)), n - 1)
    return i * h, (i + 1) * h


# -- substeps ----------------------------------------------------------------


class _Operators:
    """Per-configuration precomputed factors, shared by all intervals."""

    def __init__(self, grid: GridSpec, h: float, eps: float, m: int, q: int, coriolis: CoriolisSpec):
        self.grid = grid
        self.h, self.eps, self.m, self.q = h, eps, m, q
        self.dt = h / m
        self.coriolis = coriolis
        self.project = True
        nu = 1.0 - eps
        self.E = np.exp(-nu * grid.ksq * self.dt)
        s = np.arange(q + 1) * (h / q)
        self.Es = np.exp(-eps * grid.ksq[None] * s[:, None, None])
        self.Eh = np.exp(-eps * grid.ksq * h)

    def nonlinear(self, t: float, c: np.ndarray) -> np.ndarray:
        out = -sp._bilinear(self.grid, c)
        if self.coriolis.c0:
            out -= apply_R(self.coriolis, t, c, self.grid)
        return out

    def deterministic(self, c: np.ndarray, t0: float) -> np.ndarray:
        """Integrating-factor Heun with energy projection; returns all ``m + 1`` inner nodes."""
        dt, E = self.dt, self.E
        nodes = np.empty((self.m + 1,) + c.shape, dtype=complex)
        nodes[0] = c
        for j in range(self.m):
            t = t0 + j * dt
            n0 = self.nonlinear(t, c)
            pred = E * (c + dt * n0)
            c_new = E * (c + 0.5 * dt * n0) + 0.5 * dt * self.nonlinear(t + dt, pred)
            if self.project:
                c_new = self._energy_projection(c, c_new)
            c = c_new
            nodes[j + 1] = c
        return nodes

    def _energy_projection(self, c0: np.ndarray, c1: np.ndarray) -> np.ndarray:
        """Rescale ``c1`` so that ``|c1|^2 + 2 nu D(c0, c1) = |c0|^2`` holds for the
        log-mean dissipation rule ``D``.

        B drops out of the exact energy balance; the explicit rule only
        preserves it to O(dt^3) per step.  The scale factor is 1 + O(dt^3), so
        the order of the method is unchanged.
        """
        nu2 = 2.0 * (1.0 - self.eps)
        ksq = self.grid.ksq
        p0 = (c0.real**2 + c0.imag**2).sum(axis=-3)
        p1 = (c1.real**2 + c1.imag**2).sum(axis=-3)
        e0 = p0.sum(axis=(-2, -1))
        e1 = p1.sum(axis=(-2, -1))

        def residual(sig):
            s = sig[..., None, None]
            d = (_mode_exponential_integral(ksq * p0, ksq * s * p1, self.dt)).sum(axis=(-2, -1))
            return sig * e1 + nu2 * d - e0

        sig = np.ones_like(e0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            for _ in range(3):
                f = residual(sig)
                df = (residual(sig + 1e-7) - f) / 1e-7
                step = np.where(np.isfinite(f / df) & (df > 0), f / df, 0.0)
                sig = sig - step
        ok = np.isfinite(sig) & (sig > 0.5) & (sig < 2.0)
        scale = np.sqrt(np.where(ok, sig, 1.0))
        return c1 * scale[..., None, None, None]

    def stochastic(self, c: np.ndarray, dW: np.ndarray, partial: np.ndarray, diffusion: DiffusionSpec):
        """Exponential Euler-Maruyama; ``partial`` holds W(t_i + s_j) - W(t_i),
        shape ``(q + 1, ..., C)``.  Returns (y_end, y_nodes, noise_nodes)."""
        noise_nodes = noise_field(diffusion, c, partial, self.eps)
        noise_end = noise_field(diffusion, c, dW, self.eps)
        if self.eps == 0:
            y_end = c + noise_end
            y_nodes = c + noise_nodes
        else:
            y_end = self.Eh * (c + noise_end)
            y_nodes = self.Es.reshape((self.q + 1,) + (1,) * (c.ndim - 2) + self.Es.shape[1:]) * (c + noise_nodes)
        noise_nodes[-1] = noise_end
        y_nodes[-1] = y_end
        return y_end, y_nodes, noise_nodes


def _mode_exponential_integral(a: np.ndarray, b: np.ndarray, dt: float) -> np.ndarray:
    # Integral of a positive quantity that decays exponentially between the
    # endpoint values a and b (logarithmic mean); exact on the Stokes flow.
    with np.errstate(divide="ignore", invalid="ignore"):
        lm = (a - b) / (np.log(a) - np.log(b))
    close = ~np.isfinite(lm) | (np.abs(a - b) <= 1e-12 * np.maximum(a, b))
    lm = np.where(close, 0.5 * (a + b), lm)
    return dt * lm


def dissipation_integrals(grid: GridSpec, nodes: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Time integrals of ``||u||^2`` and ``|A u|^2`` over inner nodes (axis 0),
    using a per-mode exponential rule."""
    p = nodes.real**2 + nodes.imag**2
    p = p.sum(axis=-3)
    mi = _mode_exponential_integral(p[:-1], p[1:], dt).sum(axis=0)
    L2 = grid.L**2
    v = L2 * (mi * grid.ksq).sum(axis=(-2, -1))
    a = L2 * (mi * grid.ksq**2).sum(axis=(-2, -1))
    return v, a


class SubstepDiagnostics(NamedTuple):
    nodes: FourierVelocityField
    times: np.ndarray
    dissipation_v: np.ndarray
    dissipation_a: np.ndarray


def deterministic_substep(
    y_in: FourierVelocityField,
    t_i: float,
    h: float,
    eps: float,
    m: int,
    coriolis: CoriolisSpec | None = None,
    linear_only: bool = False,
) -> tuple[FourierVelocityField, SubstepDiagnostics]:
    """Advance ``du/dt + (1-eps) A u + B(u,u) + R(t,u) = 0`` over ``[t_i, t_i + h]``.

    ``dissipation_v`` approximates ``int ||u||^2`` and ``dissipation_a``
    approximates ``int |A u|^2`` over the substep.  ``linear_only`` drops B
    and R (used to check exactness on the linear part).
    """
    ops = _Operators(y_in.grid, h, eps, m, 1, coriolis or CoriolisSpec())
    if linear_only:
        ops.nonlinear = lambda t, c: np.zeros_like(c)
        ops.project = False
    with np.errstate(over="ignore", invalid="ignore"):
        nodes = ops.deterministic(y_in.coeffs, t_i)
    if not np.all(np.isfinite(nodes[-1])):
        raise SchemeBlowUp(0)
    dv, da = dissipation_integrals(y_in.grid, nodes, ops.dt)
    diag = SubstepDiagnostics(FourierVelocityField(y_in.grid, nodes), t_i + np.arange(m + 1) * ops.dt, dv, da)
    return FourierVelocityField(y_in.grid, nodes[-1]), diag


def stochastic_substep(
    u_in: FourierVelocityField,
    t_i: float,
    h: float,
    eps: float,
    spec: DiffusionSpec,
    dW: np.ndarray,
) -> FourierVelocityField:
    """One exponential Euler-Maruyama step of ``dy + eps A y dt = G(y) dW``."""
    dW = np.asarray(dW, dtype=float)
    if dW.shape[-1] != spec.n_components:
        raise ValueError(f"dW has {dW.shape[-1]} components, expected {spec.n_components}")
    g = u_in.grid
    c = u_in.coeffs
    y = c + noise_field(spec, c, dW, eps)
    if eps > 0:
        y = np.exp(-eps * g.ksq * h) * y
    return FourierVelocityField(g, y)


# -- time marching -----------------------------------------------------------


class IntervalRecord(NamedTuple):
    """States on one mesh interval; node axes come first.

    ``u_nodes``: ``m + 1`` inner nodes of the deterministic substep, from
    ``u(t_i^+)`` to ``u(t_{i+1}^-)``.  ``y_nodes`` and ``noise_nodes``:
    ``q + 1`` sub-times ``t_i + j h / q``; the last entries are left limits at
    ``t_{i+1}``.  ``noise_nodes[j] = G(t_i, y(t_i^+)) (W(t_i + s_j) - W(t_i))``.
    """

    i: int
    t: float
    u_nodes: np.ndarray
    y_nodes: np.ndarray
    noise_nodes: np.ndarray
    finite: np.ndarray


def sub_resolution(m: int, finest_n: int, n: int) -> int:
    if finest_n % n:
        raise ValueError(f"n={n} does not divide the path resolution {finest_n}")
    return math.gcd(m, finest_n // n)


def march(
    grid: GridSpec,
    u0: np.ndarray,
    T: float,
    n: int,
    eps: float,
    m: int,
    diffusion: DiffusionSpec,
    coriolis: CoriolisSpec,
    increments: np.ndarray,
) -> Iterator[IntervalRecord]:
    """Run the scheme on a batch of paths, yielding one record per interval.

    ``increments`` holds finest-level Brownian increments with shape
    ``(*batch, finest_n, n_components)``; ``u0`` broadcasts to ``(*batch, 2, N, N)``.
    Samples that produce non-finite values are flagged and zeroed so the rest
    of the batch continues.
    """
    finest_n = increments.shape[-2]
    q = sub_resolution(m, finest_n, n)
    h = T / n
    coarse = aggregate_increments(increments, n)
    sub = aggregate_increments(increments, n * q)
    batch = increments.shape[:-2]
    ops = _Operators(grid, h, eps, m, q, coriolis)
    c = np.broadcast_to(u0, batch + (2, grid.N, grid.N)).astype(complex)
    finite = np.ones(batch, dtype=bool)
    C = increments.shape[-1]
    for i in range(n):
        t_i = i * h
        d = sub[..., i * q : (i + 1) * q, :]
        partial = np.concatenate([np.zeros(batch + (1, C)), np.cumsum(d, axis=-2)], axis=-2)
        partial = np.moveaxis(partial, -2, 0)
        with np.errstate(over="ignore", invalid="ignore"):
            u_nodes = ops.deterministic(c, t_i)
            y_end, y_nodes, noise_nodes = ops.stochastic(u_nodes[-1], coarse[..., i, :], partial, diffusion)
        ok = np.isfinite(u_nodes).all(axis=(0, -3, -2, -1)) & np.isfinite(y_nodes).all(axis=(0, -3, -2, -1))
        if not ok.all():
            finite &= ok
            bad = ~ok
            u_nodes[:, bad] = 0
            y_nodes[:, bad] = 0
            noise_nodes[:, bad] = 0
            y_end = np.where(bad[..., None, None, None], 0, y_end)
        yield IntervalRecord(i, t_i, u_nodes, y_nodes, noise_nodes, finite.copy())
        c = y_end


# -- single trajectory -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SchemeTrajectory:
    """Output of :func:`run_scheme` for one Brownian path.

    ``grid_values[k]`` is at once ``u(t_k^+)``, ``y(t_k^-)`` and ``z(t_k)``;
    ``u_minus[k]`` is ``u(t_k^-)`` (with ``u_minus[0] = u_0``).
    """

    config: SchemeConfig
    grid_values: np.ndarray
    u_minus: np.ndarray
    u_nodes: np.ndarray
    y_nodes: np.ndarray
    noise_nodes: np.ndarray
    increments: np.ndarray
    q: int
    diagnostics: dict[str, np.ndarray]
    path_digest: str

    @property
    def u_plus(self) -> np.ndarray:
        return self.grid_values

    @property
    def y_minus(self) -> np.ndarray:
        return self.grid_values

    @property
    def z(self) -> np.ndarray:
        return self.grid_values

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.config.T, self.config.n + 1)

    def field(self, name: str, k: int) -> FourierVelocityField:
        return FourierVelocityField(self.config.grid, getattr(self, name)[k])

    def sub_times(self) -> np.ndarray:
        """Times of ``y_nodes`` per interval, shape ``(n, q + 1)``."""
        h = self.config.h
        return np.arange(self.config.n)[:, None] * h + np.arange(self.q + 1)[None] * (h / self.q)


def _norm_table(grid: GridSpec, c: np.ndarray) -> dict[str, np.ndarray]:
    f = FourierVelocityField(grid, c)
    return {
        "h2": sp.h_norm_sq(f),
        "v2": sp.v_norm_sq(f),
        "a2": sp.da_norm_sq(f),
        "x4": sp.x_norm4(f),
    }


def run_scheme(config: SchemeConfig, path: BrownianPath, raise_on_blowup: bool = True) -> SchemeTrajectory:
    """Run the splitting scheme for one path, storing every state."""
    if path.n_components != config.diffusion.n_components:
        raise ValueError("path and diffusion disagree on the number of Wiener components")
    if abs(path.T - config.T) > 1e-12 * config.T:
        raise ValueError("path horizon differs from config.T")
    grid, n = config.grid, config.n
    u0 = config.initial_condition.coeffs
    grid_values = np.empty((n + 1,) + u0.shape, dtype=complex)
    u_minus = np.empty_like(grid_values)
    grid_values[0] = u_minus[0] = u0
    u_nodes, y_nodes, noise_nodes = [], [], []
    diss_v, diss_a = [], []
    dt = config.h / config.m
    for rec in march(
        grid, u0, config.T, n, config.eps, config.m, config.diffusion, config.coriolis, path.increments
    ):
        if not rec.finite.all():
            if raise_on_blowup:
                raise SchemeBlowUp(rec.i)
        u_minus[rec.i + 1] = rec.u_nodes[-1]
        grid_values[rec.i + 1] = rec.y_nodes[-1]
        u_nodes.append(rec.u_nodes)
        y_nodes.append(rec.y_nodes)
        noise_nodes.append(rec.noise_nodes)
        dv, da = dissipation_integrals(grid, rec.u_nodes, dt)
        diss_v.append(dv)
        diss_a.append(da)
    u_nodes = np.stack(u_nodes)
    y_nodes = np.stack(y_nodes)
    diagnostics = {f"u_{k}": v for k, v in _norm_table(grid, u_nodes).items()}
    diagnostics.update({f"y_{k}": v for k, v in _norm_table(grid, y_nodes).items()})
    diagnostics["u_dissipation_v"] = np.stack(diss_v)
    diagnostics["u_dissipation_a"] = np.stack(diss_a)
    diagnostics["finite"] = np.array(rec.finite)
    return SchemeTrajectory(
        config=config,
        grid_values=grid_values,
        u_minus=u_minus,
        u_nodes=u_nodes,
        y_nodes=y_nodes,
        noise_nodes=np.stack(noise_nodes),
        increments=path.increments,
        q=sub_resolution(config.m, path.finest_n, n),
        diagnostics=diagnostics,
        path_digest=path.digest(),
    )


def _locate(traj: SchemeTrajectory, t: float) -> tuple[int, int]:
    """Interval index and sub-node index of t (which must be a sub-time)."""
    cfg = traj.config
    if not 0 <= t <= cfg.T:
        raise ValueError(f"t={t} outside [0, {cfg.T}]")
    pos = t / cfg.h * traj.q
    r = round(pos)
    if abs(pos - r) > 1e-9:
        raise ValueError(f"t={t} is not a stored sub-time (spacing h/{traj.q})")
    i, j = divmod(int(r), traj.q)
    if i == cfg.n:
        i, j = cfg.n - 1, traj.q
    return i, j


def dense_z(traj: SchemeTrajectory, t: float, quadrature: str = "integrator") -> FourierVelocityField:
    """Reconstruct ``z(t) = u0 - int_0^t F_eps(u) ds - eps int_0^{d_n(t)} A y ds + int_0^t G dW``.

    The drift integrals are accumulated from the stored substep histories:
    ``quadrature="integrator"`` uses the increments produced by the time
    integrators themselves (so ``z(t_k)`` is reproduced to roundoff);
    ``"trapezoid"`` integrates ``F_eps`` over the inner nodes with the
    composite trapezoid rule, which is only accurate to ``O((h/m)^2)``.
    At ``t = t_{k}`` for ``k >= 1`` the left limit is not returned; the value
    includes the Stokes drift of the completed interval.
    """
    if quadrature not in ("integrator", "trapezoid"):
        raise ValueError(f"unknown quadrature {quadrature!r}")
    cfg = traj.config
    grid = cfg.grid
    i, j = _locate(traj, t)
    if j == traj.q:
        i, j = i + 1, 0
    r = cfg.m // traj.q
    dt = cfg.h / cfg.m
    ops = _Operators(grid, cfg.h, cfg.eps, cfg.m, 1, cfg.coriolis)

    def f_int(k: int, upto: int) -> np.ndarray:
        # integral of F_eps over the first `upto` inner steps of interval k
        nodes = traj.u_nodes[k]
        if quadrature == "integrator" or upto == 0:
            return nodes[0] - nodes[upto]
        F = [
            (1 - cfg.eps) * grid.ksq * nodes[s] - ops.nonlinear(k * cfg.h + s * dt, nodes[s])
            for s in range(upto + 1)
        ]
        return dt * (sum(F[1:-1], np.zeros_like(F[0])) + 0.5 * (F[0] + F[-1]))

    z = traj.grid_values[0].copy()
    for k in range(i):
        # completed interval: deterministic drift, full noise, Stokes drift
        z -= f_int(k, cfg.m)
        z += traj.noise_nodes[k][-1]
        z += traj.grid_values[k + 1] - (traj.u_nodes[k][-1] + traj.noise_nodes[k][-1])
    if i < cfg.n:
        z -= f_int(i, j * r)
        z += traj.noise_nodes[i][j]
    return FourierVelocityField(grid, z)
