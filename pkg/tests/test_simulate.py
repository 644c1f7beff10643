import math

import numpy as np
import pytest
from scipy.stats import kstest

from hlsid.basis import BasisFamily, Hir, ModelParams
from hlsid.errors import CapacityError, ConfigError, NonMonotone, StabilityError
from hlsid.simulate import (
    EventSeries,
    SimConfig,
    intensity_path,
    martingale_residual,
    simulate_many,
    thin_simulate,
)


def test_poisson_rate():
    ev = thin_simulate(SimConfig(ModelParams.poisson(2.0), 1000.0, seed=3))
    assert abs(ev.count / 1000.0 - 2.0) / 2.0 < 0.05


def test_poisson_gaps_exponential():
    ev = thin_simulate(SimConfig(ModelParams.poisson(2.0), 5200.0, seed=9))
    gaps = np.diff(np.concatenate([[0.0], ev.times]))[:10_000]
    assert gaps.size == 10_000
    assert kstest(gaps, "expon", args=(0, 0.5)).pvalue > 0.01


def test_zero_weight_atoms_give_poisson():
    m = ModelParams(Hir(BasisFamily.exponentials([3.0]), np.zeros(1)), 2.0)
    ev = thin_simulate(SimConfig(m, 5200.0, seed=1))
    gaps = np.diff(np.concatenate([[0.0], ev.times]))
    assert kstest(gaps, "expon", args=(0, 0.5)).pvalue > 0.01


def test_reference_rate(ref_model):
    counts = [ev.count for ev in simulate_many(ref_model, 3200.0, 50, seed=21)]
    rate = np.mean(counts) / 3200.0
    assert rate == pytest.approx(10 / 3, rel=0.02)


@pytest.mark.parametrize("T,tol", [(400.0, 0.10), (1600.0, 0.05), (6400.0, 0.025)])
def test_rate_convergence_schedule(ref_model, T, tol):
    counts = [ev.count for ev in simulate_many(ref_model, T, 20, seed=4)]
    assert abs(np.mean(counts) / T - 10 / 3) / (10 / 3) < tol


def test_determinism(ref_model):
    a = thin_simulate(SimConfig(ref_model, 200.0, seed=5, trajectory_index=7))
    b = thin_simulate(SimConfig(ref_model, 200.0, seed=5, trajectory_index=7))
    c = thin_simulate(SimConfig(ref_model, 200.0, seed=5, trajectory_index=8))
    np.testing.assert_array_equal(a.times, b.times)
    assert a.count != c.count or not np.array_equal(a.times, c.times)


def test_erlang_model_simulates():
    m = ModelParams(Hir(BasisFamily.erlang(4.0, 3), np.array([0.2, 0.2, 0.1])), 1.0)
    counts = [ev.count for ev in simulate_many(m, 2000.0, 10, seed=2)]
    assert np.mean(counts) / 2000.0 == pytest.approx(2.0, rel=0.05)


def test_intensity_path_examples():
    m = ModelParams(Hir(BasisFamily.exponentials([1.0]), np.array([0.5])), 1.0)
    ev = EventSeries(np.array([1.0]), 3.0)
    assert intensity_path(m, ev, 2.0) == pytest.approx(1 + 0.5 * math.exp(-1), abs=1e-6)
    assert intensity_path(m, ev, 1.0) == 1.0
    assert intensity_path(m, EventSeries(np.array([]), 3.0), 2.5) == 1.0


def test_martingale_residual_no_events():
    m = ModelParams.poisson(2.0)
    assert martingale_residual(m, EventSeries(np.array([]), 10.0)) == -20.0


def test_martingale_residual_poisson_mean():
    m = ModelParams.poisson(2.0)
    r = [martingale_residual(m, ev) / 1000.0 for ev in simulate_many(m, 1000.0, 100, seed=8)]
    assert abs(np.mean(r)) < 0.05


def test_martingale_residual_reference(ref_model):
    r = [martingale_residual(ref_model, ev) / 3200.0 for ev in simulate_many(ref_model, 3200.0, 100, seed=8)]
    assert abs(np.mean(r)) < 0.02


def test_martingale_residual_matches_quadrature(ref_model):
    ev = thin_simulate(SimConfig(ref_model, 20.0, seed=1))
    breaks = np.concatenate([[0.0], ev.times, [20.0]])
    comp = 0.0
    for r in range(breaks.size - 1):
        a, b = breaks[r], breaks[r + 1]
        x, w = np.polynomial.legendre.leggauss(40)
        u = 0.5 * (b - a) * (x + 1) + a
        past = ev.times[:r]
        lam = ref_model.background + (ref_model.basis.eval(u[:, None] - past[None, :]).sum(axis=1) @ ref_model.weights if past.size else 0.0)
        comp += 0.5 * (b - a) * np.sum(w * lam)
    assert martingale_residual(ref_model, ev) == pytest.approx(ev.count - comp, rel=1e-9, abs=1e-9)


def test_capacity_and_stability(ref_model):
    with pytest.raises(CapacityError):
        thin_simulate(SimConfig(ref_model, 1000.0, event_cap=10))
    bad = ModelParams(Hir(BasisFamily.exponentials([1.0]), np.array([1.0])), 1.0)
    with pytest.raises(StabilityError):
        SimConfig(bad, 10.0)


def test_event_series_validation():
    with pytest.raises(NonMonotone) as exc:
        EventSeries(np.array([0.5, 1.0, 1.0]), 2.0)
    assert exc.value.index == 2
    with pytest.raises(ConfigError):
        EventSeries(np.array([0.5, 3.0]), 2.0)
    with pytest.raises(ConfigError):
        EventSeries(np.array([0.0, 1.0]), 2.0)
    assert EventSeries(np.array([]), 1.0).count == 0


def test_truncate(ref_model):
    ev = thin_simulate(SimConfig(ref_model, 100.0, seed=2))
    short = ev.truncate(50.0)
    assert short.horizon == 50.0 and np.all(short.times <= 50.0)
    assert short.count == np.sum(ev.times <= 50.0)
