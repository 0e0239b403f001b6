"""Joint spin-outcome laws for EPR pairs, CHSH estimation and the splitting sweep.

Two laws govern a pair measured along axes at relative angle zeta:

* P1 (coalesced pair):  P(rA, rB | zeta) = (1 - rA rB cos zeta) / 4
* P2 (separated pair):  P(rA, rB | zeta) = (1 - rA rB cos(zeta) / 3) / 4

A pair that split before reaching the apparatus follows P2; with splitting
probability p the observed law is the mixture (1 - p) P1 + p P2, and
p = 1 - exp(-mu L) for a splitting rate mu over a flight distance L.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import CounterRNG, blocks, derive_seed, parallel_map

OUTCOMES = ((1, 1), (1, -1), (-1, 1), (-1, -1))
STANDARD_CHSH_DEG = (0.0, 90.0, 45.0, 135.0)
MIN_PER_SETTING = 100
SPLIT_MODEL = "p_split = 1 - exp(-mu * distance)"
POST_SPLIT_LAW = "P2"
VERDICT_SIGMAS = 3.0


@dataclass(frozen=True)
class EprModel:
    kind: str = "P1"
    p_split: float = 0.0

    def __post_init__(self):
        if self.kind not in ("P1", "P2", "mixture"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not 0.0 <= self.p_split <= 1.0:
            raise ValueError(f"p_split must lie in [0, 1], got {self.p_split}")

    @classmethod
    def p1(cls) -> "EprModel":
        return cls("P1")

    @classmethod
    def p2(cls) -> "EprModel":
        return cls("P2")

    @classmethod
    def mixture(cls, p_split: float) -> "EprModel":
        return cls("mixture", p_split)

    @classmethod
    def for_species(cls, species_a: str, species_b: str) -> "EprModel":
        """Similar particles can coalesce and follow P1; dissimilar ones follow P2."""
        return cls.p1() if species_a == species_b else cls.p2()

    @property
    def strength(self) -> float:
        """Coefficient c in P = (1 - c rA rB cos zeta) / 4."""
        if self.kind == "P1":
            return 1.0
        if self.kind == "P2":
            return 1.0 / 3.0
        return (1.0 - self.p_split) + self.p_split / 3.0

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "mixture":
            d["p_split"] = self.p_split
        return d


@dataclass(frozen=True)
class PairOutcome:
    r_a: int
    r_b: int

    def __post_init__(self):
        if self.r_a not in (1, -1) or self.r_b not in (1, -1):
            raise ValueError("outcomes must be +1 or -1")


@dataclass(frozen=True)
class ChshSettings:
    a: float
    a_prime: float
    b: float
    b_prime: float

    def __post_init__(self):
        for name in ("a", "a_prime", "b", "b_prime"):
            object.__setattr__(self, name, float(getattr(self, name)) % (2 * np.pi))

    @classmethod
    def from_degrees(cls, a, a_prime, b, b_prime) -> "ChshSettings":
        return cls(*np.radians([a, a_prime, b, b_prime]))

    @classmethod
    def standard(cls) -> "ChshSettings":
        return cls.from_degrees(*STANDARD_CHSH_DEG)

    def pairs(self) -> list[tuple[float, float]]:
        """(A axis, B axis) for the terms E(a,b), E(a,b'), E(a',b), E(a',b')."""
        return [(self.a, self.b), (self.a, self.b_prime), (self.a_prime, self.b), (self.a_prime, self.b_prime)]


CHSH_SIGNS = (1, -1, 1, 1)


@dataclass(frozen=True)
class CorrelationRecord:
    zeta: float
    n: int
    counts_pp: int
    counts_pm: int
    counts_mp: int
    counts_mm: int

    @property
    def e_hat(self) -> float:
        return (self.counts_pp + self.counts_mm - self.counts_pm - self.counts_mp) / self.n

    @property
    def stderr(self) -> float:
        # Sample variance of r_a * r_b is 1 - e_hat^2.
        return float(np.sqrt(max(0.0, 1.0 - self.e_hat**2) / self.n))

    def to_dict(self) -> dict:
        return {
            "zeta": self.zeta,
            "n": self.n,
            "counts_pp": self.counts_pp,
            "counts_pm": self.counts_pm,
            "counts_mp": self.counts_mp,
            "counts_mm": self.counts_mm,
            "e_hat": self.e_hat,
            "stderr": self.stderr,
        }


def joint_probability(model: EprModel, r_a: int, r_b: int, zeta: float) -> float:
    if model.kind == "P1":
        return 0.25 * (1.0 - r_a * r_b * np.cos(zeta))
    if model.kind == "P2":
        return 0.25 * (1.0 - r_a * r_b * np.cos(zeta) / 3.0)
    p = model.p_split
    return (1.0 - p) * joint_probability(EprModel.p1(), r_a, r_b, zeta) + p * joint_probability(
        EprModel.p2(), r_a, r_b, zeta
    )


def outcome_probabilities(model: EprModel, zeta: float) -> np.ndarray:
    """Probabilities of (++, +-, -+, --) in that order."""
    return np.array([joint_probability(model, ra, rb, zeta) for ra, rb in OUTCOMES])


def correlation_E(model: EprModel, zeta) -> float:
    """Expected r_a * r_b: -c cos zeta."""
    return -model.strength * np.cos(zeta)


def _categorical(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), 3)


def sample_pair(model: EprModel, zeta: float, rng_seed: int, trial: int = 0) -> PairOutcome:
    u = CounterRNG(rng_seed).uniform([trial])[:, 0]
    ra, rb = OUTCOMES[int(_categorical(outcome_probabilities(model, zeta), u)[0])]
    return PairOutcome(ra, rb)


def sample_counts(model: EprModel, zeta: float, n: int, rng_seed: int, threads: int = 1) -> np.ndarray:
    """Counts of (++, +-, -+, --) over trials 0..n-1 of stream ``rng_seed``."""
    probs = outcome_probabilities(model, zeta)
    rng = CounterRNG(rng_seed)

    def count_block(b):
        idx = _categorical(probs, rng.uniform_range(*b)[:, 0])
        return np.bincount(idx, minlength=4)

    return np.sum(parallel_map(count_block, blocks(n), threads), axis=0, dtype=np.int64)


def correlation_record(model: EprModel, zeta: float, n: int, rng_seed: int, threads: int = 1) -> CorrelationRecord:
    c = sample_counts(model, zeta, n, rng_seed, threads)
    return CorrelationRecord(float(zeta), int(n), *(int(v) for v in c))


@dataclass
class ChshResult:
    s_hat: float
    stderr: float
    records: list
    settings: ChshSettings
    model: EprModel

    @property
    def verdict(self) -> str:
        if self.s_hat - VERDICT_SIGMAS * self.stderr > 2.0:
            return "violates_bell"
        return "consistent_with_local"

    def to_dict(self) -> dict:
        s = self.settings
        return {
            "model": self.model.to_dict(),
            "settings_deg": {
                "a": float(np.degrees(s.a)),
                "a_prime": float(np.degrees(s.a_prime)),
                "b": float(np.degrees(s.b)),
                "b_prime": float(np.degrees(s.b_prime)),
            },
            "records": [r.to_dict() for r in self.records],
            "s_hat": self.s_hat,
            "stderr": self.stderr,
            "s_analytic": chsh_analytic(self.model, s),
            "verdict": self.verdict,
            "verdict_rule": f"s_hat - {VERDICT_SIGMAS:g} * stderr > 2",
            "post_split_law": POST_SPLIT_LAW,
        }


def chsh(
    model: EprModel,
    settings: ChshSettings,
    n_per_setting: int,
    rng_seed: int,
    threads: int = 1,
) -> ChshResult:
    """Estimate S = |E(a,b) - E(a,b') + E(a',b) + E(a',b')| from simulated pairs.

    Setting ``k`` draws from stream ``derive_seed(rng_seed, "chsh", k)``.
    """
    if n_per_setting < MIN_PER_SETTING:
        raise ValueError(f"n_per_setting must be >= {MIN_PER_SETTING}")
    records = [
        correlation_record(model, b - a, n_per_setting, derive_seed(rng_seed, "chsh", k), threads)
        for k, (a, b) in enumerate(settings.pairs())
    ]
    s = abs(sum(sign * r.e_hat for sign, r in zip(CHSH_SIGNS, records)))
    se = float(np.sqrt(sum(r.stderr**2 for r in records)))
    return ChshResult(float(s), se, records, settings, model)


def chsh_analytic(model: EprModel, settings: ChshSettings) -> float:
    return float(
        abs(sum(sign * correlation_E(model, b - a) for sign, (a, b) in zip(CHSH_SIGNS, settings.pairs())))
    )


def chsh_grid_max(model: EprModel, step_deg: float = 1.0, chunk: int = 8) -> float:
    """Largest analytic S over all settings on a ``step_deg`` grid.

    S only depends on the differences b-a, b'-a and b-a'; b'-a' follows.
    """
    ang = np.radians(np.arange(0.0, 360.0, step_deg))
    c = model.strength
    cos_t = np.cos(ang)
    z1 = ang[:, None]
    z2 = ang[None, :]
    best = 0.0
    for start in range(0, ang.size, chunk):
        # array axes: (b - a', b - a, b' - a)
        z3 = ang[start:start + chunk, None, None]
        e = -c * (cos_t[None, :, None] - np.cos(z2[None]) + np.cos(z3) + np.cos(z2[None] - z1[None] + z3))
        best = max(best, float(np.max(np.abs(e))))
    return best


def p_split_from_material(mu: float, distance: float) -> float:
    if mu < 0 or distance < 0:
        raise ValueError("mu and distance must be non-negative")
    return float(-np.expm1(-mu * distance))


@dataclass(frozen=True)
class SweepRow:
    distance: float
    p_split: float
    e_hat: float
    stderr: float
    e_copenhagen: float


def correlation_sweep(
    mu: float,
    distances,
    zeta: float,
    n: int,
    rng_seed: int,
    threads: int = 1,
) -> list[SweepRow]:
    """Realist correlation vs flight distance through splitting material.

    Distance ``k`` draws from stream ``derive_seed(rng_seed, "sweep", k)``.
    The Copenhagen column is the analytic P1 value, as splitting does not
    occur there.
    """
    distances = [float(d) for d in distances]
    if any(b < a for a, b in zip(distances, distances[1:])):
        raise ValueError("distances must be sorted ascending")
    rows = []
    e_cop = float(correlation_E(EprModel.p1(), zeta))
    for k, dist in enumerate(distances):
        p = p_split_from_material(mu, dist)
        rec = correlation_record(EprModel.mixture(p), zeta, n, derive_seed(rng_seed, "sweep", k), threads)
        rows.append(SweepRow(dist, p, rec.e_hat, rec.stderr, e_cop))
    return rows
