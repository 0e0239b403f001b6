import warnings

import numpy as np
import pytest

from realwave.errors import NormDrift
from realwave.evolution import (
    BoundaryLeakWarning,
    EvolutionConfig,
    Potential,
    analytic_gaussian_width,
    analytic_harmonic_width,
    evolve,
    step,
)
from realwave.wavepacket import Grid1D, Wavepacket, make_gaussian, moments

GRID = Grid1D.centered(1024, 0.05)
FREE = Potential.free()


def width_at(wp, v, dt, t):
    res = evolve(wp, v, EvolutionConfig(dt, int(round(t / dt)), trace_stride=10**9))
    return moments(res.packet).delta_x


def test_analytic_width_values():
    assert analytic_gaussian_width(1, 1, 0) == 1
    assert analytic_gaussian_width(1, 1, 2) == pytest.approx(1.4142135, abs=1e-6)
    assert analytic_gaussian_width(0.5, 1, 1) == pytest.approx(1.118034, abs=1e-6)


def test_single_step_is_unitary():
    wp = make_gaussian(GRID)
    out = step(wp, FREE, 0.01)
    assert abs(out.norm2() - 1.0) < 1e-12
    assert out.time == pytest.approx(0.01)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_free_spreading_matches_closed_form(t):
    got = width_at(make_gaussian(GRID), FREE, 0.01, t)
    assert abs(got / analytic_gaussian_width(1.0, 1.0, t) - 1) < 1e-4


def test_free_spreading_heavier_mass():
    wp = make_gaussian(GRID, mass=3.0)
    got = width_at(wp, FREE, 0.01, 2.0)
    assert abs(got / analytic_gaussian_width(1.0, 3.0, 2.0) - 1) < 1e-4


def test_width_non_decreasing_and_contained():
    res = evolve(make_gaussian(GRID), FREE, EvolutionConfig(0.01, 300, trace_stride=10))
    widths = [r.delta_x for r in res.trace]
    assert all(b >= a - 1e-12 for a, b in zip(widths, widths[1:]))
    assert res.packet.edge_mass() < 1e-10
    assert not res.leak_warnings


def test_coherent_state_width_is_stationary():
    omega = 1.0
    wp = make_gaussian(GRID, center=2.0, sigma=np.sqrt(1 / (2 * omega)))
    period = 2 * np.pi / omega
    n = 1000
    res = evolve(wp, Potential.harmonic(omega), EvolutionConfig(period / n, n, trace_stride=20))
    widths = np.array([r.delta_x for r in res.trace])
    assert np.max(np.abs(widths - widths[0])) < 1e-4
    # centroid returns after one period
    assert res.trace[-1].mean_x == pytest.approx(2.0, abs=1e-3)


def test_ehrenfest_centroid():
    res = evolve(make_gaussian(GRID, momentum=2.0), FREE, EvolutionConfig(0.01, 100))
    assert moments(res.packet).mean_x == pytest.approx(2.0, abs=1e-4)


def test_zero_steps_is_identity():
    wp = make_gaussian(GRID)
    res = evolve(wp, FREE, EvolutionConfig(0.01, 0))
    assert res.packet is wp
    assert len(res.trace) == 1


def test_norm_budget_over_ten_thousand_steps():
    wp = make_gaussian(Grid1D.centered(2048, 0.05))
    res = evolve(wp, Potential.harmonic(0.5), EvolutionConfig(0.001, 10_000, trace_stride=10_000))
    assert abs(res.packet.norm2() - 1.0) < 1e-9


@pytest.mark.parametrize(
    "v",
    [FREE, Potential.harmonic(1.0), Potential.tabulated(0.8 * np.exp(-((GRID.x - 1.0) ** 2)))],
    ids=["free", "harmonic", "smooth-bump"],
)
def test_time_reversal(v):
    wp = make_gaussian(GRID, center=-1.0, momentum=1.0)
    cfg = EvolutionConfig(0.01, 150)
    fwd = evolve(wp, v, cfg).packet
    back = evolve(fwd, v, cfg, backward=True).packet
    assert np.max(np.abs(back.amplitudes - wp.amplitudes)) < 1e-8
    assert back.time == pytest.approx(0.0, abs=1e-12)


def test_step_convergence_second_order():
    # A squeezed Gaussian in a harmonic well has a closed-form width and a
    # genuine splitting error (free evolution is exact in the spectral drift).
    sigma0, t = 0.5, 2.0
    wp = make_gaussian(GRID, sigma=sigma0)
    v = Potential.harmonic(1.0)
    exact = analytic_harmonic_width(sigma0, 1.0, 1.0, t)
    errs = [abs(width_at(wp, v, dt, t) - exact) for dt in (0.1, 0.05, 0.025)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert min(ratios) >= 3.5, ratios


def test_norm_drift_guard_reports_step(monkeypatch):
    from realwave import evolution

    calls = {"n": 0}
    unitary = evolution._Propagator.__call__

    def leaky(self, psi):
        calls["n"] += 1
        out = unitary(self, psi)
        return out * (1 + 1e-8) if calls["n"] == 4 else out

    monkeypatch.setattr(evolution._Propagator, "__call__", leaky)
    with pytest.raises(NormDrift) as info:
        evolve(make_gaussian(GRID), FREE, EvolutionConfig(0.01, 10))
    assert info.value.step_index == 4


def test_boundary_leak_warning_recorded():
    g = Grid1D.centered(256, 0.1)
    wp = make_gaussian(g, center=0.0, momentum=6.0, sigma=1.0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = evolve(wp, FREE, EvolutionConfig(0.01, 150, trace_stride=10))
    assert res.leak_warnings
    assert any(issubclass(w.category, BoundaryLeakWarning) for w in caught)


def test_barrier_values():
    v = Potential.barrier(2.0, 1.0, 1.5).values(GRID)
    assert v[(GRID.x >= 1.0) & (GRID.x <= 1.5)].min() == 2.0
    assert v[GRID.x < 1.0].max() == 0.0


def test_potential_validation():
    with pytest.raises(ValueError):
        Potential.tabulated([0.0, np.inf])
    with pytest.raises(ValueError):
        Potential.tabulated(np.zeros(10)).values(GRID)
    with pytest.raises(ValueError):
        EvolutionConfig(0.0, 10)
    assert Potential.harmonic(2.0).to_dict()["kind"] == "harmonic"
