import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hlsid.basis import (
    BasisFamily,
    Hir,
    KernelAtom,
    ModelParams,
    hir_eval,
    hir_fourier,
    hir_min_value,
    kernel_cdf,
    kernel_eval,
    kernel_first_moment,
    kernel_laplace,
)
from hlsid.errors import ConfigError, PoleError, StabilityError

atoms = st.builds(
    lambda kind, rate, order: KernelAtom(kind, rate, 1 if kind == "exponential" else order),
    st.sampled_from(["exponential", "erlang"]),
    st.floats(0.1, 50.0),
    st.integers(1, 20),
)


def test_kernel_eval_examples():
    assert kernel_eval(KernelAtom.erlang(1, 5.0), 0.0) == 5.0
    assert kernel_eval(KernelAtom.exponential(2.0), 0.5) == pytest.approx(2 * math.exp(-1), rel=1e-14)
    assert kernel_eval(KernelAtom.erlang(3, 5.0), -1.0) == 0.0


def test_erlang_matches_direct_formula():
    t = np.linspace(0.01, 3, 50)
    for j in range(1, 8):
        direct = 5.0**j * t ** (j - 1) / math.factorial(j - 1) * np.exp(-5 * t)
        np.testing.assert_allclose(kernel_eval(KernelAtom.erlang(j, 5.0), t), direct, rtol=1e-12)


def test_high_order_does_not_overflow():
    v = kernel_eval(KernelAtom.erlang(20, 50.0), np.array([0.4, 5.0, 100.0]))
    assert np.all(np.isfinite(v)) and np.all(v >= 0)


def test_laplace_examples():
    assert kernel_laplace(KernelAtom.erlang(2, 5.0), 0) == pytest.approx(1 + 0j, abs=1e-15)
    assert kernel_laplace(KernelAtom.exponential(2.0), 2j) == pytest.approx(0.5 - 0.5j, abs=1e-15)
    assert kernel_laplace(KernelAtom.erlang(1, 5.0), 5.0) == pytest.approx(0.5)


def test_laplace_pole():
    with pytest.raises(PoleError):
        kernel_laplace(KernelAtom.erlang(2, 5.0), -5.0)


def test_first_moment_examples():
    assert kernel_first_moment(KernelAtom.erlang(3, 5.0)) == pytest.approx(0.6)
    assert kernel_first_moment(KernelAtom.exponential(16.0)) == pytest.approx(0.0625)
    assert kernel_first_moment(KernelAtom.erlang(1, 5.0)) == pytest.approx(0.2)


def test_hir_examples(ref_model):
    assert hir_fourier(ref_model.hir, 0.0).real == pytest.approx(0.7, abs=1e-14)
    assert hir_eval(ref_model.hir, -0.3) == 0.0
    h = Hir(BasisFamily.erlang(5.0, 1), np.array([1.0]))
    assert hir_eval(h, 0.0) == pytest.approx(5.0)


def test_hir_min_value_examples():
    h = Hir(BasisFamily.exponentials([2.0]), np.array([1.0]))
    assert hir_min_value(h, 5.0, 0.01) == pytest.approx(2 * math.exp(-10), rel=1e-9)
    neg = Hir(BasisFamily.exponentials([2.0]), np.array([-1.0]))
    assert hir_min_value(neg, 5.0, 0.01) < 0


def test_duplicate_atoms_rejected():
    with pytest.raises(ConfigError):
        BasisFamily((KernelAtom.erlang(2, 5.0), KernelAtom.erlang(2, 5.0)))
    # the same function under two names
    with pytest.raises(ConfigError):
        BasisFamily((KernelAtom.exponential(5.0), KernelAtom.erlang(1, 5.0)))


@pytest.mark.parametrize("kind,rate,order", [("gamma", 1, 1), ("erlang", -1, 1), ("erlang", 1, 0), ("exponential", 1, 2)])
def test_invalid_atoms(kind, rate, order):
    with pytest.raises(ConfigError):
        KernelAtom(kind, rate, order)


def test_weights_length_checked():
    with pytest.raises(ConfigError):
        Hir(BasisFamily.erlang(5.0, 3), np.ones(2))


def test_model_validation(ref_model):
    assert ref_model.expected_rate == pytest.approx(10 / 3)
    assert ref_model.is_simulable
    with pytest.raises(ConfigError):
        ModelParams(ref_model.hir, 0.0)
    unstable = ModelParams(Hir(BasisFamily.exponentials([1.0]), np.array([1.2])), 1.0)
    with pytest.raises(StabilityError):
        unstable.require_stable()
    signed = ModelParams(Hir(BasisFamily.exponentials([1.0, 2.0]), np.array([0.5, -0.1])), 1.0)
    assert not signed.is_simulable


def test_config_round_trip(ref_model):
    again = ModelParams.from_config(ref_model.to_config())
    assert again.basis == ref_model.basis
    np.testing.assert_array_equal(again.theta, ref_model.theta)
    b = BasisFamily.erlang(5.0, 4)
    assert BasisFamily.from_config(b.to_config()) == b


def test_chain_layout_groups_rates():
    b = BasisFamily((KernelAtom.erlang(2, 3.0), KernelAtom.exponential(1.0), KernelAtom.erlang(1, 3.0)))
    lay = b.chains
    assert lay.state_size == 3
    assert sorted(lay.rates.tolist()) == [1.0, 3.0]


@given(atoms)
@settings(max_examples=60, deadline=None)
def test_unit_mass_and_causality(atom):
    assert abs(kernel_laplace(atom, 0.0) - 1) <= 1e-12
    upper = 40.0 * atom.order / atom.rate
    mass, _ = quad(lambda t: float(kernel_eval(atom, t)), 0, upper, points=[atom.order / atom.rate], limit=200)
    assert mass == pytest.approx(1.0, abs=1e-6)
    t = np.linspace(-5, 5, 41)
    v = kernel_eval(atom, t)
    assert np.all(v[t < 0] == 0) and np.all(v >= 0)
    assert kernel_cdf(atom, upper) == pytest.approx(1.0, abs=1e-9)


@given(atoms)
@settings(max_examples=40, deadline=None)
def test_first_moment_is_laplace_slope(atom):
    # Richardson extrapolation of the forward difference
    def fd(h):
        return -(kernel_laplace(atom, h) - 1.0).real / h

    h = 1e-4 * atom.rate
    est = 2 * fd(h / 2) - fd(h)
    assert est == pytest.approx(kernel_first_moment(atom), rel=1e-6)


@given(atoms, st.floats(0.0, 1e3))
@settings(max_examples=60, deadline=None)
def test_conjugate_symmetry(atom, w):
    b = BasisFamily((atom,))
    assert b.fourier(-w)[0] == np.conj(b.fourier(w)[0])


@pytest.mark.parametrize("atom", [KernelAtom.exponential(2.0), KernelAtom.erlang(1, 5.0), KernelAtom.erlang(3, 5.0), KernelAtom.erlang(5, 5.0)])
def test_parseval_energy(atom):
    time_energy, _ = quad(lambda t: float(kernel_eval(atom, t)) ** 2, 0, 60 * atom.order / atom.rate, limit=400)
    dw = 1e-2 * atom.rate
    w = dw * np.arange(-2_000_000, 2_000_001)
    freq_energy = np.sum(np.abs(BasisFamily((atom,)).fourier(w)[:, 0]) ** 2) * dw / (2 * np.pi)
    assert freq_energy == pytest.approx(time_energy, rel=1e-4)
