"""Independent brute-force and closed-form oracles used by the test suite."""

import itertools

import numpy as np
from scipy import integrate, optimize, stats


def quadrature_moments(x, psi):
    """Position/momentum moments by direct trapezoid quadrature and finite differences."""
    rho = np.abs(psi) ** 2
    norm = integrate.trapezoid(rho, x)
    mean_x = integrate.trapezoid(x * rho, x) / norm
    var_x = integrate.trapezoid((x - mean_x) ** 2 * rho, x) / norm
    dpsi = np.gradient(psi, x, edge_order=2)
    mean_p = integrate.trapezoid(np.conj(psi) * (-1j) * dpsi, x).real / norm
    mean_p2 = integrate.trapezoid(np.abs(dpsi) ** 2, x) / norm
    return mean_x, np.sqrt(var_x), mean_p, np.sqrt(mean_p2 - mean_p**2)


def occupation_states(n_modes, total, kind):
    if kind == "fermi":
        return [s for s in itertools.product((0, 1), repeat=n_modes) if sum(s) == total]
    return [s for s in itertools.product(range(total + 1), repeat=n_modes) if sum(s) == total]


def canonical_distribution(energies, beta, total, kind):
    """Exact canonical weights exp(-beta E(s)) / Z over all occupation states."""
    states = occupation_states(len(energies), total, kind)
    e = np.array([np.dot(s, energies) for s in states])
    w = np.exp(-beta * (e - e.min()))
    return dict(zip(states, w / w.sum()))


def canonical_level_occupancy(levels, degeneracy, beta, total, kind):
    """Exact per-mode canonical occupancy for ``levels`` each with ``degeneracy`` modes.

    Uses the identity P_canonical(level count k) ∝ P_gc(k) P_gc(rest = N - k),
    with grand-canonical level counts negative-binomial (bose) or binomial
    (fermi); the auxiliary fugacity cancels.
    """
    levels = np.asarray(levels, dtype=float)
    g = degeneracy
    sign = 1.0 if kind == "bose" else -1.0

    def excess(mu):
        with np.errstate(over="ignore"):
            return g * np.sum(1.0 / (np.exp(beta * (levels - mu)) - sign)) - total

    lo = levels.min() - 50.0 / beta - total
    hi = levels.min() - 1e-9 if kind == "bose" else levels.max() + 50.0 / beta
    # auxiliary fugacity centred on the target total keeps the pmfs in range
    mu = optimize.brentq(excess, lo, hi, xtol=1e-13)
    ks = np.arange(total + 1)
    pmfs = []
    for e in levels:
        if kind == "bose":
            q = np.exp(-beta * (e - mu))
            pmfs.append(stats.nbinom.pmf(ks, g, 1.0 - q))
        else:
            f = 1.0 / (np.exp(beta * (e - mu)) + 1.0)
            pmfs.append(stats.binom.pmf(ks, g, f))
    out = []
    for i in range(len(levels)):
        rest = np.zeros(total + 1)
        rest[0] = 1.0
        for j, p in enumerate(pmfs):
            if j != i:
                rest = np.convolve(rest, p)[: total + 1]
        joint = pmfs[i] * rest[::-1]
        out.append(np.dot(ks, joint) / joint.sum() / g)
    return np.array(out)
