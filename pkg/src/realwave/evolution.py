"""Split-step spectral propagation of the 1-D Schrodinger equation.

One step is a symmetric (Strang) splitting: half a potential kick, a full
kinetic step applied in momentum space, another half kick. Boundaries are
periodic, so a leak monitor watches the outer cells of the grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NormDrift
from .wavepacket import EDGE_FRACTION, Grid1D, Wavepacket, moments

STEP_DRIFT_TOL = 1e-9
LEAK_WARN_TOL = 1e-8


class BoundaryLeakWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class Potential:
    """External potential. Use the ``free``/``harmonic``/``barrier``/``tabulated`` constructors."""

    kind: str = "free"
    omega: float = 0.0
    center: float = 0.0
    height: float = 0.0
    left: float = 0.0
    right: float = 0.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("free", "harmonic", "barrier", "tabulated"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "barrier" and not self.left < self.right:
            raise ValueError("barrier needs left < right")
        if self.kind == "tabulated" and not np.all(np.isfinite(self.table)):
            raise ValueError("tabulated potential has non-finite values")

    @classmethod
    def free(cls) -> "Potential":
        return cls("free")

    @classmethod
    def harmonic(cls, omega: float, center: float = 0.0) -> "Potential":
        return cls("harmonic", omega=omega, center=center)

    @classmethod
    def barrier(cls, height: float, left: float, right: float) -> "Potential":
        return cls("barrier", height=height, left=left, right=right)

    @classmethod
    def tabulated(cls, values) -> "Potential":
        return cls("tabulated", table=tuple(float(v) for v in values))

    def values(self, grid: Grid1D, mass: float = 1.0) -> np.ndarray:
        x = grid.x
        if self.kind == "free":
            return np.zeros_like(x)
        if self.kind == "harmonic":
            return 0.5 * mass * self.omega**2 * (x - self.center) ** 2
        if self.kind == "barrier":
            return np.where((x >= self.left) & (x <= self.right), self.height, 0.0)
        if len(self.table) != grid.n_points:
            raise ValueError(
                f"tabulated potential has {len(self.table)} values, grid has {grid.n_points}"
            )
        return np.asarray(self.table, dtype=float)

    def to_dict(self) -> dict:
        if self.kind == "free":
            return {"kind": "free"}
        if self.kind == "harmonic":
            return {"kind": "harmonic", "omega": self.omega, "center": self.center}
        if self.kind == "barrier":
            return {"kind": "barrier", "height": self.height, "left": self.left, "right": self.right}
        return {"kind": "tabulated", "values": list(self.table)}


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    n_steps: int
    trace_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.trace_stride < 1:
            raise ValueError("trace_stride must be >= 1")


@dataclass(frozen=True)
class TraceRow:
    time: float
    mean_x: float
    delta_x: float
    delta_p: float
    norm: float


@dataclass
class EvolutionResult:
    packet: Wavepacket
    trace: list = field(default_factory=list)
    leak_warnings: list = field(default_factory=list)


class _Propagator:
    def __init__(self, grid: Grid1D, v: Potential, mass: float, dt: float):
        self.half_kick = np.exp(-0.5j * dt * v.values(grid, mass))
        self.drift = np.exp(-0.5j * dt * grid.k**2 / mass)
        self.spacing = grid.spacing

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        psi = self.half_kick * psi
        psi = np.fft.ifft(self.drift * np.fft.fft(psi))
        return self.half_kick * psi


def _norm2(psi: np.ndarray, spacing: float) -> float:
    return float(np.vdot(psi, psi).real * spacing)


def step(wp: Wavepacket, v: Potential, dt: float) -> Wavepacket:
    """Advance by one Strang step. Negative ``dt`` steps backward in time."""
    if dt == 0:
        return wp
    psi = _Propagator(wp.grid, v, wp.mass, dt)(wp.amplitudes)
    n2 = _norm2(psi, wp.grid.spacing)
    if abs(n2 - wp.norm2()) > STEP_DRIFT_TOL:
        raise NormDrift(f"norm changed by {n2 - wp.norm2():.3e} in one step", 0)
    return wp.with_amplitudes(psi, time=wp.time + dt)


def _trace_row(wp: Wavepacket) -> TraceRow:
    m = moments(wp)
    return TraceRow(wp.time, m.mean_x, m.delta_x, m.delta_p, float(np.sqrt(wp.norm2())))


def evolve(
    wp: Wavepacket, v: Potential, cfg: EvolutionConfig, backward: bool = False
) -> EvolutionResult:
    """Apply ``cfg.n_steps`` steps, tracing (time, mean_x, delta_x, delta_p, norm)."""
    dt = -cfg.dt if backward else cfg.dt
    trace = [_trace_row(wp)]
    leaks = []
    if cfg.n_steps == 0:
        return EvolutionResult(wp, trace, leaks)

    prop = _Propagator(wp.grid, v, wp.mass, dt)
    edge = wp.grid.edge_mask(EDGE_FRACTION)
    spacing = wp.grid.spacing
    psi = np.array(wp.amplitudes)
    n_prev = _norm2(psi, spacing)
    t0 = wp.time
    current = wp
    for i in range(1, cfg.n_steps + 1):
        psi = prop(psi)
        n2 = _norm2(psi, spacing)
        if abs(n2 - n_prev) > STEP_DRIFT_TOL:
            raise NormDrift(f"step {i}: norm changed by {n2 - n_prev:.3e}", i)
        n_prev = n2
        if i % cfg.trace_stride == 0 or i == cfg.n_steps:
            current = wp.with_amplitudes(psi, time=t0 + i * dt)
            trace.append(_trace_row(current))
            leak = float(np.sum(np.abs(psi[edge]) ** 2) * spacing)
            if leak > LEAK_WARN_TOL:
                leaks.append((current.time, leak))
    if leaks:
        warnings.warn(
            f"boundary tail mass reached {max(l for _, l in leaks):.3e}", BoundaryLeakWarning
        )
    return EvolutionResult(current, trace, leaks)


def analytic_gaussian_width(sigma0: float, mass: float, t: float) -> float:
    """Position spread of a free minimum-uncertainty Gaussian at time ``t``."""
    return sigma0 * np.sqrt(1.0 + (t / (2.0 * mass * sigma0**2)) ** 2)


def analytic_harmonic_width(sigma0: float, mass: float, omega: float, t: float) -> float:
    """Position spread of a Gaussian (initially real, centred) in a harmonic well.

    Width breathes between sigma0 and 1 / (2 m omega sigma0); it is
    stationary for the coherent width sigma0**2 = 1 / (2 m omega).
    """
    s_p = 1.0 / (2.0 * mass * omega * sigma0)
    return float(np.sqrt((sigma0 * np.cos(omega * t)) ** 2 + (s_p * np.sin(omega * t)) ** 2))
