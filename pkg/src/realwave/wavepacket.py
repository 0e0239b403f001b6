"""Wavepackets on a uniform 1-D grid and their observables.

Natural units throughout (hbar = 1). A :class:`Wavepacket` is immutable:
every operation returns a new value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import (
    BoundaryLeak,
    GridMismatch,
    GridTooCoarse,
    NoOverlap,
    NotNormalized,
    SpeciesMismatch,
    TooManyParts,
)

NORM_TOL = 1e-9
MOMENTS_NORM_TOL = 1e-6
EDGE_FRACTION = 0.05
CONSTRUCTION_LEAK_TOL = 1e-10
DEFAULT_OVERLAP_THRESHOLD = 1e-8
COALESCED_PROFILE = "normalized_sum"
SPLIT_PROFILE = "renormalized_copy"


@dataclass(frozen=True)
class Grid1D:
    n_points: int
    spacing: float
    origin: float = 0.0

    def __post_init__(self):
        n = self.n_points
        if n < 8 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 8, got {n}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @classmethod
    def centered(cls, n_points: int, spacing: float) -> "Grid1D":
        """Grid whose node ``n_points // 2`` sits at x = 0."""
        return cls(n_points, spacing, -(n_points // 2) * spacing)

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers (= momenta for hbar = 1) in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)

    @property
    def length(self) -> float:
        return self.n_points * self.spacing

    def edge_mask(self, fraction: float = EDGE_FRACTION) -> np.ndarray:
        m = max(1, int(round(fraction * self.n_points)))
        mask = np.zeros(self.n_points, dtype=bool)
        mask[:m] = True
        mask[-m:] = True
        return mask

    def to_dict(self) -> dict:
        return {"n_points": self.n_points, "spacing": self.spacing, "origin": self.origin}


@dataclass(frozen=True)
class Moments:
    mean_x: float
    delta_x: float
    mean_p: float
    delta_p: float


@dataclass(frozen=True, eq=False)
class Wavepacket:
    grid: Grid1D
    amplitudes: np.ndarray
    time: float = 0.0
    mass: float = 1.0
    species: str = "electron"
    quanta: int = 1
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.grid.n_points,):
            raise GridMismatch(
                f"amplitudes have shape {amps.shape}, grid has {self.grid.n_points} nodes"
            )
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        if int(self.quanta) != self.quanta or self.quanta < 1:
            raise ValueError(f"quanta must be a positive integer, got {self.quanta}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "quanta", int(self.quanta))
        n2 = self.norm2()
        if abs(n2 - 1.0) > NORM_TOL:
            raise NotNormalized(f"norm^2 = {n2!r}, expected 1 within {NORM_TOL}")

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm2(self) -> float:
        return float(np.sum(self.density) * self.grid.spacing)

    def edge_mass(self, fraction: float = EDGE_FRACTION) -> float:
        return float(np.sum(self.density[self.grid.edge_mask(fraction)]) * self.grid.spacing)

    def with_amplitudes(self, amplitudes, **changes) -> "Wavepacket":
        """Copy with new (already normalized) amplitudes and optional field changes."""
        return replace(self, amplitudes=amplitudes, **changes)

    def to_dict(self) -> dict:
        inter = np.empty(2 * self.grid.n_points)
        inter[0::2] = self.amplitudes.real
        inter[1::2] = self.amplitudes.imag
        return {
            "grid": self.grid.to_dict(),
            "time": self.time,
            "mass": self.mass,
            "species": self.species,
            "quanta": self.quanta,
            "metadata": self.metadata,
            "amplitudes": inter.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Wavepacket":
        inter = np.asarray(data["amplitudes"], dtype=float)
        return cls(
            grid=Grid1D(**data["grid"]),
            amplitudes=inter[0::2] + 1j * inter[1::2],
            time=data["time"],
            mass=data["mass"],
            species=data["species"],
            quanta=data["quanta"],
            metadata=dict(data.get("metadata", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "Wavepacket":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Aggregate:
    """A set of distinct wavepackets (e.g. an atom: proton + electron).

    Members are never reduced as a whole; operate on them one at a time.
    """

    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("an aggregate needs at least one member")
        object.__setattr__(self, "members", members)

    @property
    def total_quanta(self) -> int:
        return sum(m.quanta for m in self.members)

    def replace_member(self, index: int, packet: Wavepacket) -> "Aggregate":
        members = list(self.members)
        members[index] = packet
        return Aggregate(tuple(members))


def normalize(grid: Grid1D, amplitudes) -> np.ndarray:
    amps = np.asarray(amplitudes, dtype=np.complex128)
    n2 = np.sum(np.abs(amps) ** 2) * grid.spacing
    if not n2 > 0:
        raise ValueError("cannot normalize a zero field")
    return amps / np.sqrt(n2)


def make_gaussian(
    grid: Grid1D,
    center: float = 0.0,
    momentum: float = 0.0,
    sigma: float = 1.0,
    mass: float = 1.0,
    species: str = "electron",
) -> Wavepacket:
    """Normalized Gaussian exp(-(x - center)^2 / (4 sigma^2) + i momentum x).

    ``sigma`` is the position standard deviation of |psi|^2.
    """
    if sigma < 4 * grid.spacing:
        raise GridTooCoarse(f"sigma={sigma} < 4 * spacing={4 * grid.spacing}")
    x = grid.x
    psi = np.exp(-((x - center) ** 2) / (4 * sigma**2) + 1j * momentum * x)
    wp = Wavepacket(grid, normalize(grid, psi), mass=mass, species=species)
    leak = wp.edge_mass()
    if leak > CONSTRUCTION_LEAK_TOL:
        raise BoundaryLeak(f"tail mass {leak:.3e} in the outer grid cells exceeds {CONSTRUCTION_LEAK_TOL}")
    return wp


def _require_normalized(wp: Wavepacket, tol: float = MOMENTS_NORM_TOL) -> None:
    n2 = wp.norm2()
    if abs(n2 - 1.0) > tol:
        raise NotNormalized(f"norm^2 = {n2!r}")


def moments(wp: Wavepacket) -> Moments:
    """Position moments by quadrature, momentum moments from the FFT of psi."""
    _require_normalized(wp)
    x = wp.grid.x
    rho = wp.density * wp.grid.spacing
    rho = rho / rho.sum()
    mean_x = float(np.dot(rho, x))
    var_x = float(np.dot(rho, (x - mean_x) ** 2))

    phi2 = np.abs(np.fft.fft(wp.amplitudes)) ** 2
    phi2 /= phi2.sum()
    k = wp.grid.k
    mean_p = float(np.dot(phi2, k))
    var_p = float(np.dot(phi2, (k - mean_p) ** 2))
    return Moments(mean_x, float(np.sqrt(var_x)), mean_p, float(np.sqrt(var_p)))


def heisenberg_product(wp: Wavepacket) -> float:
    m = moments(wp)
    return m.delta_x * m.delta_p


def _check_compatible(packets: Sequence[Wavepacket]) -> None:
    first = packets[0]
    for wp in packets[1:]:
        if wp.grid != first.grid:
            raise GridMismatch(f"{wp.grid} != {first.grid}")
        if wp.time != first.time:
            raise GridMismatch(f"packets at different times {wp.time} and {first.time}")
        if wp.species != first.species or wp.mass != first.mass:
            raise SpeciesMismatch(
                f"dissimilar packets ({first.species!r}, {wp.species!r}) never coalesce"
            )


def overlap_measure(
    packets: Sequence[Wavepacket], threshold: float = DEFAULT_OVERLAP_THRESHOLD
) -> tuple[bool, float]:
    """Integral of prod_k |psi_k(x)| over the grid, and whether it exceeds ``threshold``."""
    if not packets:
        raise ValueError("no packets given")
    _check_compatible(packets)
    prod = np.ones(packets[0].grid.n_points)
    for wp in packets:
        prod = prod * np.abs(wp.amplitudes)
    measure = float(np.sum(prod) * packets[0].grid.spacing)
    return measure > threshold, measure


def coalesce(
    packets: Sequence[Wavepacket], threshold: float = DEFAULT_OVERLAP_THRESHOLD
) -> Wavepacket:
    """Merge overlapping similar packets into one packet carrying their summed quanta.

    The profile of the result is the normalized sum of the input amplitudes;
    this is a modelling convention and is recorded in ``metadata``.
    """
    packets = list(packets)
    if len(packets) == 1:
        return packets[0]
    overlaps, measure = overlap_measure(packets, threshold)
    if not overlaps:
        raise NoOverlap(f"overlap measure {measure:.3e} <= threshold {threshold:.3e}")
    first = packets[0]
    total = np.sum([wp.amplitudes for wp in packets], axis=0)
    if np.sum(np.abs(total) ** 2) * first.grid.spacing < 1e-12:
        raise NoOverlap("input amplitudes cancel; the summed profile vanishes")
    return Wavepacket(
        first.grid,
        normalize(first.grid, total),
        time=first.time,
        mass=first.mass,
        species=first.species,
        quanta=sum(wp.quanta for wp in packets),
        metadata={
            "coalesced_from": len(packets),
            "profile": COALESCED_PROFILE,
            "overlap_measure": measure,
        },
    )


def quanta_partition(quanta: int, parts: int) -> list[int]:
    """Split ``quanta`` as evenly as possible; the remainder goes to earlier parts."""
    base, rem = divmod(quanta, parts)
    return [base + (1 if i < rem else 0) for i in range(parts)]


def split(wp: Wavepacket, parts: int) -> list[Wavepacket]:
    if parts < 1:
        raise ValueError(f"parts must be >= 1, got {parts}")
    if parts > wp.quanta:
        raise TooManyParts(f"a {wp.quanta}-quantum packet cannot split into {parts} parts")
    if parts == 1:
        return [wp]
    amps = normalize(wp.grid, wp.amplitudes)
    meta = {"split_from_quanta": wp.quanta, "profile": SPLIT_PROFILE}
    return [
        wp.with_amplitudes(amps, quanta=q, metadata=dict(meta))
        for q in quanta_partition(wp.quanta, parts)
    ]
