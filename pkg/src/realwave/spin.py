"""Stern-Gerlach outcomes for spin-1/2 packets and recovery of the spin direction.

Each incoming packet carries a definite spin direction. An apparatus with
axis ``a`` deflects it up with probability cos^2(alpha / 2) = (1 + s.a) / 2,
after which the packet is the up or down eigenpacket along ``a``.

The direction is recovered by maximising the binomial log-likelihood over
the sphere: a coarse (theta, phi) grid, then local refinement in tangent
coordinates around each candidate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import xlogy
from scipy.stats import chi2

from .errors import DegenerateAxes
from .rng import CounterRNG, blocks, parallel_map

COARSE_STEP_DEG = 5.0
CONE_LEVEL = 0.95
_AMBIGUITY_RTOL = 1e-9
_DISTINCT_DEG = 1.0


def _unit(theta: float, phi: float) -> np.ndarray:
    return np.array(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
    )


def _angles(v: np.ndarray) -> tuple[float, float]:
    v = v / np.linalg.norm(v)
    theta = float(np.arccos(np.clip(v[2], -1.0, 1.0)))
    phi = float(np.arctan2(v[1], v[0]) % (2 * np.pi))
    if theta == 0.0 or theta == np.pi:
        phi = 0.0
    return theta, phi


@dataclass(frozen=True)
class SpinDirection:
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0 <= self.theta <= np.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        object.__setattr__(self, "phi", float(self.phi) % (2 * np.pi))

    @property
    def vector(self) -> np.ndarray:
        return _unit(self.theta, self.phi)

    @classmethod
    def from_vector(cls, v) -> "SpinDirection":
        return cls(*_angles(np.asarray(v, dtype=float)))

    def antipode(self) -> "SpinDirection":
        # direct angle map; a round trip through the vector loses precision near the poles
        return type(self)(np.pi - self.theta, self.phi + np.pi)


@dataclass(frozen=True)
class ApparatusAxis(SpinDirection):
    pass


X_AXIS = ApparatusAxis(np.pi / 2, 0.0)
Y_AXIS = ApparatusAxis(np.pi / 2, np.pi / 2)
Z_AXIS = ApparatusAxis(0.0, 0.0)


@dataclass(frozen=True)
class SgCounts:
    axis: ApparatusAxis
    n_up: int
    n_down: int

    def __post_init__(self):
        if self.n_up < 0 or self.n_down < 0 or self.n_up + self.n_down < 1:
            raise ValueError("counts must be non-negative with at least one shot")


@dataclass(frozen=True)
class DirectionEstimate:
    estimate: SpinDirection
    cone_halfangle_95: float
    log_likelihood: float
    covariance: np.ndarray

    def to_dict(self) -> dict:
        return {
            "theta": self.estimate.theta,
            "phi": self.estimate.phi,
            "cone_halfangle_95": self.cone_halfangle_95,
            "log_likelihood": self.log_likelihood,
        }


def up_probability(spin: SpinDirection, axis: ApparatusAxis) -> float:
    c = float(np.dot(spin.vector, axis.vector))
    return min(1.0, max(0.0, 0.5 * (1.0 + c)))


def simulate_sg(
    spin: SpinDirection,
    axis: ApparatusAxis,
    n: int,
    rng_seed: int,
    return_trace: bool = False,
    threads: int = 1,
):
    """Send ``n`` packets through one apparatus; shot ``i`` uses trial ``i`` of the stream.

    With ``return_trace`` the per-shot outcomes (+1 up, -1 down) are returned
    too; the post-measurement state of shot ``i`` is ``outcome[i] * axis``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    p = up_probability(spin, axis)
    rng = CounterRNG(rng_seed)
    outs = parallel_map(
        lambda b: np.where(rng.uniform_range(*b)[:, 0] < p, 1, -1).astype(np.int8),
        blocks(n),
        threads,
    )
    outcomes = np.concatenate(outs)
    n_up = int(np.count_nonzero(outcomes == 1))
    counts = SgCounts(axis, n_up, n - n_up)
    return (counts, outcomes) if return_trace else counts


def _data(counts):
    axes = np.array([c.axis.vector for c in counts])
    up = np.array([c.n_up for c in counts], dtype=float)
    down = np.array([c.n_down for c in counts], dtype=float)
    return axes, up, down


def log_likelihood(vectors: np.ndarray, axes, up, down) -> np.ndarray:
    """Binomial log-likelihood of unit vectors ``vectors`` (shape (..., 3))."""
    p = 0.5 * (1.0 + np.asarray(vectors) @ axes.T)
    p = np.clip(p, 0.0, 1.0)
    return np.sum(xlogy(up, p) + xlogy(down, 1.0 - p), axis=-1)


def sphere_grid(step_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """(theta, phi) grid including both poles; phi in [0, 360)."""
    thetas = np.radians(np.arange(0.0, 180.0 + 1e-9, step_deg))
    phis = np.radians(np.arange(0.0, 360.0 - 1e-9, step_deg))
    return np.meshgrid(thetas, phis, indexing="ij")


def _tangent_basis(s: np.ndarray) -> np.ndarray:
    helper = np.array([1.0, 0.0, 0.0]) if abs(s[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(s, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(s, e1)
    return np.stack([e1, e2], axis=1)


def _refine(s0, axes, up, down) -> np.ndarray:
    basis = _tangent_basis(s0)

    def point(uv):
        v = s0 + basis @ uv
        return v / np.linalg.norm(v)

    def neg(uv):
        val = log_likelihood(point(uv), axes, up, down)
        return np.inf if not np.isfinite(val) else -float(val)

    res = optimize.minimize(neg, np.zeros(2), method="Nelder-Mead",
                            options={"xatol": 1e-11, "fatol": 1e-12, "maxiter": 4000})
    return point(res.x)


def _observed_information(s, axes, up, down) -> np.ndarray:
    """Negative Hessian of the log-likelihood in tangent coordinates at ``s``."""
    p = np.clip(0.5 * (1.0 + axes @ s), 0.0, 1.0)
    q = 1.0 - p

    def ratio(n, d):
        return np.divide(n, d, out=np.zeros_like(n), where=n > 0)

    g = 0.5 * ((ratio(up, p) - ratio(down, q)) @ axes)
    w = 0.25 * (ratio(up, p**2) + ratio(down, q**2))
    hess = -(axes.T * w) @ axes
    basis = _tangent_basis(s)
    return -(basis.T @ hess @ basis - float(g @ s) * np.eye(2))


def cone_radius(cov: np.ndarray, level: float = CONE_LEVEL) -> float:
    """Radius r with P(|u| <= r) = level for u ~ N(0, cov) in two dimensions."""
    prec = np.linalg.inv(cov)
    ang = np.linspace(0.0, 2 * np.pi, 2049)[:-1]
    d = np.stack([np.cos(ang), np.sin(ang)])
    quad = np.einsum("in,ij,jn->n", d, prec, d)
    norm = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(cov)))

    def mass(r):
        return norm * np.mean((1.0 - np.exp(-0.5 * r * r * quad)) / quad) * 2 * np.pi - level

    hi = np.sqrt(chi2.ppf(level, 2) * np.max(np.linalg.eigvalsh(cov))) * 1.01
    return float(optimize.brentq(mass, 0.0, hi, xtol=1e-14))


def estimate_direction(counts: list) -> DirectionEstimate:
    """Maximum-likelihood spin direction and 95% confidence cone half-angle (radians)."""
    counts = list(counts)
    axes, up, down = _data(counts)
    if len(counts) < 3 or np.linalg.matrix_rank(axes, tol=1e-9) < 3:
        raise DegenerateAxes(
            "apparatus axes do not span 3-space; the likelihood is symmetric "
            "under reflection through their plane"
        )

    th, ph = sphere_grid(COARSE_STEP_DEG)
    grid_vecs = np.stack(
        [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1
    )
    ll = log_likelihood(grid_vecs, axes, up, down)
    ll = np.where(np.isfinite(ll), ll, -np.inf)
    order = np.argsort(-ll, axis=None, kind="stable")

    # Moment inversion <sigma . a_i> = 2 f_i - 1 as an extra starting point.
    m = 2.0 * up / (up + down) - 1.0
    s_mom = np.linalg.lstsq(axes, m, rcond=None)[0]
    starts = [s_mom / np.linalg.norm(s_mom)] if np.linalg.norm(s_mom) > 0 else []
    for flat in order[:8]:
        starts.append(grid_vecs.reshape(-1, 3)[flat])

    cands = []
    for s0 in starts:
        val0 = float(log_likelihood(s0, axes, up, down))
        s = _refine(s0, axes, up, down) if np.isfinite(val0) else s0
        val = float(log_likelihood(s, axes, up, down))
        if val0 >= val:
            s, val = s0, val0
        if np.isfinite(val):
            cands.append((val, s))
    best_val = max(v for v, _ in cands)
    tol = _AMBIGUITY_RTOL * max(1.0, abs(best_val))
    top = [(v, s) for v, s in cands if v >= best_val - tol]
    for _, s in top[1:]:
        if np.degrees(np.arccos(np.clip(s @ top[0][1], -1, 1))) > _DISTINCT_DEG:
            raise DegenerateAxes("likelihood has several separated global maxima")
    # ties: smallest theta, then smallest phi
    best = min(top, key=lambda vs: _angles(vs[1]))[1]

    info = _observed_information(best, axes, up, down)
    if np.all(np.isfinite(info)) and np.all(np.linalg.eigvalsh(info) > 0):
        cov = np.linalg.inv(info)
        cone = cone_radius(cov)
    else:
        cov = np.full((2, 2), np.nan)
        cone = float("nan")
    return DirectionEstimate(
        SpinDirection(*_angles(best)), cone, float(log_likelihood(best, axes, up, down)), cov
    )


def angle_between(a: SpinDirection, b: SpinDirection) -> float:
    return float(np.arccos(np.clip(np.dot(a.vector, b.vector), -1.0, 1.0)))
