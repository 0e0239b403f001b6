"""Bose and Fermi occupation statistics from quanta-conserving balance moves.

Quanta hop one at a time between modes. A hop from mode i to mode j has rate

    bose:   n_i (1 + n_j) exp(-beta max(0, e_j - e_i))
    fermi:  n_i (1 - n_j) exp(-beta max(0, e_j - e_i))

which satisfies detailed balance with respect to the canonical weight
exp(-beta sum_k e_k n_k) at fixed total quanta N over M modes.

The discrete chain is a uniformization of these rates. It picks a source
quantum uniformly, which supplies n_i. For bose it then picks one of N + M
items (every quantum plus one vacancy per mode) and takes that item's mode
as the target, supplying (1 + n_j); a draw landing on mode i is a null move.
For fermi it picks one of the M - N empty modes, supplying (1 - n_j). The
move is accepted with the Boltzmann factor. Each transition probability is
therefore the rate divided by N (N + M) or N (M - N), constants of the chain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import DivergentOccupancy, EmptySource, Overfilled
from .rng import CounterRNG, philox_pair

RATE_FORMS = {
    "bose": "n_from * (1 + n_to) * exp(-beta * max(0, e_to - e_from))",
    "fermi": "n_from * (1 - n_to) * exp(-beta * max(0, e_to - e_from))",
}
MU_TOL = 1e-10


@dataclass(frozen=True)
class ModeSpectrum:
    energies: tuple
    beta: float
    chemical_potential: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "energies", tuple(float(e) for e in self.energies))
        if not self.energies:
            raise ValueError("need at least one mode")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def n_modes(self) -> int:
        return len(self.energies)

    @classmethod
    def from_levels(cls, levels, beta: float, degeneracy: int = 1) -> "ModeSpectrum":
        """Each level repeated ``degeneracy`` times, level-major order."""
        if degeneracy < 1:
            raise ValueError("degeneracy must be >= 1")
        return cls(tuple(np.repeat(np.asarray(levels, dtype=float), degeneracy)), beta)


@dataclass(frozen=True)
class OccupationState:
    occupations: tuple
    kind: str

    def __post_init__(self):
        occ = tuple(int(n) for n in self.occupations)
        object.__setattr__(self, "occupations", occ)
        if self.kind not in ("bose", "fermi"):
            raise ValueError(f"kind must be 'bose' or 'fermi', got {self.kind!r}")
        if any(n < 0 for n in occ):
            raise ValueError("occupations must be non-negative")
        if self.kind == "fermi" and any(n > 1 for n in occ):
            raise Overfilled(f"fermi occupations must be 0 or 1, got {occ}")

    @property
    def total(self) -> int:
        return sum(self.occupations)


def propose_rates(state: OccupationState, mode_from: int, mode_to: int, spectrum: ModeSpectrum) -> float:
    """Rate (up to a common constant) of moving one quantum ``mode_from -> mode_to``."""
    if mode_from == mode_to:
        raise ValueError("mode_from and mode_to must differ")
    n_from = state.occupations[mode_from]
    n_to = state.occupations[mode_to]
    if n_from < 1:
        raise EmptySource(f"mode {mode_from} is empty")
    de = spectrum.energies[mode_to] - spectrum.energies[mode_from]
    boltz = float(np.exp(-spectrum.beta * max(0.0, de)))
    if state.kind == "bose":
        return n_from * (1 + n_to) * boltz
    return n_from * (1 - n_to) * boltz


@nb.njit(cache=True)
def _run_segment(occ, energies, beta, fermi, key0, key1, t0, t1, quanta_mode, empty_modes, traj):
    """Advance the chain over steps t0..t1-1; return per-mode sums of n and n^2.

    Sums are integrated lazily: a mode's value is added for the steps it
    held when it next changes, and at the end of the segment.
    """
    m = occ.size
    total = quanta_mode.size
    n_empty = empty_modes.size
    sums = np.zeros(m)
    sq = np.zeros(m)
    last = np.full(m, t0)
    movable = total > 0 and m > 1 and not (fermi and n_empty == 0)
    for t in range(t0, t1):
        if movable:
            u0, u1 = philox_pair(key0, key1, t, 0)
            u2, _ = philox_pair(key0, key1, t, 1)
            q = int(u0 * total)
            i = quanta_mode[q]
            if fermi:
                r = int(u1 * n_empty)
                j = empty_modes[r]
            else:
                r = int(u1 * (total + m))
                j = quanta_mode[r] if r < total else r - total
            if j != i:
                de = energies[j] - energies[i]
                if de <= 0 or u2 < np.exp(-beta * de):
                    for k in (i, j):
                        held = t - last[k]
                        sums[k] += held * occ[k]
                        sq[k] += held * occ[k] * occ[k]
                        last[k] = t
                    occ[i] -= 1
                    occ[j] += 1
                    quanta_mode[q] = j
                    if fermi:
                        empty_modes[r] = i
                        if occ[j] > 1:
                            return sums, sq, False
        if traj.shape[0] > 0:
            for k in range(m):
                traj[t - t0, k] = occ[k]
    for k in range(m):
        held = t1 - last[k]
        sums[k] += held * occ[k]
        sq[k] += held * occ[k] * occ[k]
    return sums, sq, True


def transition_probability(state: OccupationState, mode_from: int, mode_to: int, spectrum: ModeSpectrum) -> float:
    """One-step probability that the chain moves a quantum ``mode_from -> mode_to``."""
    n, m = state.total, spectrum.n_modes
    norm = n * (n + m) if state.kind == "bose" else n * (m - n)
    return propose_rates(state, mode_from, mode_to, spectrum) / norm


@dataclass
class BalanceResult:
    mean: np.ndarray
    stderr: np.ndarray
    variance: np.ndarray
    final_state: OccupationState
    n_samples: int
    batch_means: np.ndarray
    trajectory: np.ndarray | None = None

    def per_level(self, degeneracy: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-mode mean occupation of each level and its batch-means standard error.

        Assumes the level-major mode order of :meth:`ModeSpectrum.from_levels`.
        """
        n_batches, m = self.batch_means.shape
        bm = self.batch_means.reshape(n_batches, m // degeneracy, degeneracy).mean(axis=2)
        return bm.mean(axis=0), bm.std(axis=0, ddof=1) / np.sqrt(n_batches)

    def state_frequencies(self) -> dict:
        if self.trajectory is None:
            raise ValueError("run with record_states=True to get state frequencies")
        states, counts = np.unique(self.trajectory, axis=0, return_counts=True)
        return {tuple(int(v) for v in st): c / self.n_samples for st, c in zip(states, counts)}


def initial_state(kind: str, n_modes: int, total_quanta: int) -> OccupationState:
    """Fill the lowest modes: all in mode 0 for bose, one per mode for fermi."""
    occ = [0] * n_modes
    if kind == "bose":
        occ[0] = total_quanta
    else:
        for i in range(total_quanta):
            occ[i] = 1
    return OccupationState(tuple(occ), kind)


def simulate_balance(
    spectrum: ModeSpectrum,
    kind: str,
    total_quanta: int,
    n_steps: int,
    burn_in: int,
    rng_seed: int,
    n_batches: int = 50,
    record_states: bool = False,
    initial: OccupationState | None = None,
) -> BalanceResult:
    """Run one chain; return post-burn-in mean occupations with batch-means standard errors.

    Step ``t`` uses draws 0-2 of trial ``t`` of stream ``rng_seed``.
    """
    m = spectrum.n_modes
    if kind == "fermi" and total_quanta > m:
        raise Overfilled(f"{total_quanta} fermi quanta cannot fit in {m} modes")
    if kind not in ("bose", "fermi"):
        raise ValueError(f"kind must be 'bose' or 'fermi', got {kind!r}")
    if n_steps <= burn_in:
        raise ValueError("n_steps must exceed burn_in")
    state = initial or initial_state(kind, m, total_quanta)
    if state.total != total_quanta or len(state.occupations) != m or state.kind != kind:
        raise ValueError("initial state does not match kind, modes and total_quanta")

    n_keep = n_steps - burn_in
    n_batches = max(2, min(n_batches, n_keep))
    batch_len = n_keep // n_batches
    occ = np.array(state.occupations, dtype=np.int64)
    quanta_mode = np.repeat(np.arange(m), occ).astype(np.int64)
    empty_modes = np.flatnonzero(occ == 0).astype(np.int64) if kind == "fermi" else np.zeros(0, np.int64)
    energies = np.array(spectrum.energies)
    key = CounterRNG(rng_seed).key
    fermi = kind == "fermi"
    no_traj = np.zeros((0, m), dtype=np.int16)

    def segment(t0, t1, traj=no_traj):
        sums, sq, ok = _run_segment(occ, energies, spectrum.beta, fermi, key[0], key[1],
                                    t0, t1, quanta_mode, empty_modes, traj)
        if not ok:
            raise AssertionError("fermi exclusion violated")
        if occ.sum() != total_quanta:
            raise AssertionError("quanta not conserved")
        return sums, sq

    if burn_in:
        segment(0, burn_in)
    batch_means = np.zeros((n_batches, m))
    sq_sums = np.zeros(m)
    trajs = []
    for b in range(n_batches):
        t0 = burn_in + b * batch_len
        traj = np.zeros((batch_len, m), dtype=np.int16) if record_states else no_traj
        sums, sq = segment(t0, t0 + batch_len, traj)
        batch_means[b] = sums / batch_len
        sq_sums += sq
        if record_states:
            trajs.append(traj)

    n_used = n_batches * batch_len
    mean = batch_means.mean(axis=0)
    stderr = batch_means.std(axis=0, ddof=1) / np.sqrt(n_batches)
    variance = sq_sums / n_used - mean**2
    return BalanceResult(
        mean, stderr, variance, OccupationState(tuple(int(v) for v in occ), kind), n_used,
        batch_means, np.concatenate(trajs) if record_states else None,
    )


def analytic_occupancy(kind: str, beta: float, energy: float, mu: float) -> float:
    """Grand-canonical mean occupancy 1 / (exp(beta (e - mu)) -/+ 1)."""
    x = beta * (energy - mu)
    if kind == "bose":
        if x <= 0:
            raise DivergentOccupancy(f"bose occupancy diverges for energy {energy} <= mu {mu}")
        return float(1.0 / np.expm1(x))
    if kind == "fermi":
        return float(1.0 / (np.exp(x) + 1.0))
    raise ValueError(f"kind must be 'bose' or 'fermi', got {kind!r}")


def _total(kind, beta, energies, mu):
    return sum(analytic_occupancy(kind, beta, e, mu) for e in energies)


def fit_chemical_potential(kind: str, beta: float, energies, total: float, tol: float = MU_TOL) -> float:
    """mu such that the grand-canonical mean total equals ``total`` (bisection)."""
    energies = list(energies)
    if total <= 0:
        raise ValueError("total must be positive")
    if kind == "fermi" and total >= len(energies):
        raise Overfilled("fermi total must be below the number of modes")
    emin = min(energies)
    hi = emin - 1e-12 if kind == "bose" else max(energies) + 1.0
    if kind == "fermi":
        while _total(kind, beta, energies, hi) < total:
            hi += 2.0 * (hi - emin + 1.0)
    lo = emin - 1.0
    while _total(kind, beta, energies, lo) > total:
        lo -= 2.0 * (emin - lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _total(kind, beta, energies, mid) < total:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
