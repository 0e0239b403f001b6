"""Sampling of detection effects from |psi|^2 and whole-packet reduction.

A spot position is drawn in two stages from one pair of uniforms: a grid
node with probability |psi_i|^2 * spacing, then a uniform offset within
that node's cell. The medium's response interval never enters the
probabilities; it is carried for provenance only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EnsembleTooSmall, NotNormalized, WidthTooSmall
from .rng import CounterRNG, blocks, parallel_map
from .wavepacket import MOMENTS_NORM_TOL, Wavepacket, moments, normalize, split

MIN_ENSEMBLE = 100
POST_REDUCTION_PROFILE = "gaussian"


@dataclass(frozen=True)
class DetectionEvent:
    position: float
    time: float
    packet_id: int = 0


@dataclass(frozen=True)
class MediumConfig:
    delta_t: float = 1.0
    reduction_width: float = 0.25

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ValueError(f"delta_t must be positive, got {self.delta_t}")
        if not self.reduction_width > 0:
            raise ValueError(f"reduction_width must be positive, got {self.reduction_width}")


def _check(wp: Wavepacket) -> None:
    if abs(wp.norm2() - 1.0) > MOMENTS_NORM_TOL:
        raise NotNormalized(f"norm^2 = {wp.norm2()!r}")


def _positions(wp: Wavepacket, u: np.ndarray) -> np.ndarray:
    """Map uniform pairs ``u[:, 0:2]`` to spot positions."""
    g = wp.grid
    cdf = np.cumsum(wp.density)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, u[:, 0], side="right")
    idx = np.minimum(idx, g.n_points - 1)
    pos = g.origin + g.spacing * (idx + u[:, 1] - 0.5)
    return np.clip(pos, g.origin, g.origin + g.spacing * (g.n_points - 1))


def sample_positions(wp: Wavepacket, seed: int, start: int, stop: int) -> np.ndarray:
    """Spot positions for trials ``start..stop-1`` of stream ``seed``."""
    return _positions(wp, CounterRNG(seed).uniform_range(start, stop, 2))


def sample_effect(wp: Wavepacket, medium: MediumConfig, rng_seed: int, packet_id: int = 0) -> DetectionEvent:
    """Draw the position of the effect this packet induces in a homogeneous medium."""
    _check(wp)
    pos = sample_positions(wp, rng_seed, packet_id, packet_id + 1)[0]
    return DetectionEvent(float(pos), wp.time, packet_id)


def reduce(wp: Wavepacket, event: DetectionEvent, medium: MediumConfig) -> Wavepacket:
    """Replace the whole packet by a Gaussian of ``reduction_width`` at the event.

    The input amplitude is discarded everywhere at once; only species,
    mass, quanta and time carry over.
    """
    g = wp.grid
    if medium.reduction_width < 2 * g.spacing:
        raise WidthTooSmall(f"reduction_width {medium.reduction_width} < 2 * spacing")
    x = g.x
    if not x[0] - 0.5 * g.spacing <= event.position <= x[-1] + 0.5 * g.spacing:
        raise ValueError(f"event position {event.position} is off the grid")
    psi = np.exp(-((x - event.position) ** 2) / (4 * medium.reduction_width**2))
    return wp.with_amplitudes(
        normalize(g, psi),
        metadata={
            "reduced_at": event.position,
            "post_reduction_profile": POST_REDUCTION_PROFILE,
            "reduction_width": medium.reduction_width,
        },
    )


def detect(
    wp: Wavepacket, medium: MediumConfig, rng_seed: int, acting_quanta: int = 1
) -> tuple[list[DetectionEvent], list[Wavepacket]]:
    """One traversal of a medium: ``acting_quanta`` quanta each produce one effect.

    The packet splits into ``acting_quanta`` parts, each part samples one
    position and is reduced there. A 1-quantum packet acts at most once.
    """
    parts = split(wp, acting_quanta)
    events, reduced = [], []
    for i, part in enumerate(parts):
        ev = sample_effect(part, medium, rng_seed, packet_id=i)
        events.append(ev)
        reduced.append(reduce(part, ev, medium))
    return events, reduced


@dataclass
class EmulsionResult:
    events: list
    width_estimate: float
    stderr: float
    true_width: float

    @property
    def z_score(self) -> float:
        return (self.width_estimate - self.true_width) / self.stderr

    def summary(self) -> dict:
        return {
            "n": len(self.events),
            "width_estimate": self.width_estimate,
            "stderr": self.stderr,
            "true_width": self.true_width,
            "z_score": self.z_score,
            "post_reduction_profile": POST_REDUCTION_PROFILE,
        }


def run_emulsion_experiment(
    prototype: Wavepacket,
    n_particles: int,
    medium: MediumConfig,
    rng_seed: int,
    threads: int = 1,
) -> EmulsionResult:
    """Fire ``n_particles`` copies of ``prototype`` into an emulsion; estimate the width.

    Particle ``i`` draws from trial ``i`` of stream ``rng_seed``.
    """
    if n_particles < MIN_ENSEMBLE:
        raise EnsembleTooSmall(f"n_particles={n_particles} < {MIN_ENSEMBLE}")
    _check(prototype)
    chunks = parallel_map(
        lambda b: sample_positions(prototype, rng_seed, *b), blocks(n_particles), threads
    )
    pos = np.concatenate(chunks)
    width = float(np.std(pos, ddof=1))
    events = [DetectionEvent(float(p), prototype.time, i) for i, p in enumerate(pos)]
    return EmulsionResult(
        events, width, width / np.sqrt(2 * n_particles), moments(prototype).delta_x
    )
