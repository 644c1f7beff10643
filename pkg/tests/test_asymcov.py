import numpy as np
import pytest

from hlsid.asymcov import (
    ThirdMomentEstimate,
    assemble_sigma_correct,
    assemble_sigma_mis,
    crb_from_moment,
    gram_limit_extended,
    h_matrix,
    sample_third_moment,
    sample_third_moments,
)
from hlsid.basis import BasisFamily, ModelParams
from hlsid.errors import InconsistentBlocks, ShapeMismatch, SingularEstimate
from hlsid.spectral import MisspecCorrection, misspec_correction, pseudo_true

LAM = 10 / 3


@pytest.fixture(scope="module")
def pt0(ref_model):
    return pseudo_true(ref_model, ref_model.basis)


@pytest.fixture(scope="module")
def moment0(ref_model):
    return sample_third_moments(ref_model, [(ref_model.basis, None)], 1500, 400.0, seed=3, with_inverse=True)[0]


def _psd(sig):
    assert np.array_equal(sig, sig.T)
    assert np.linalg.eigvalsh(sig)[0] >= -1e-8 * np.linalg.norm(sig)


def test_poisson_constant_intensity():
    m = ModelParams.poisson(1.7)
    M = sample_third_moment(m, BasisFamily(()), None, 10_000, 20.0, seed=1)
    assert M.M.shape == (1, 1)
    assert M.M[0, 0] == pytest.approx(1.7, rel=1e-12)


def test_rate_entry_matches_expected_rate(moment0):
    assert abs(moment0.M[-1, -1] - LAM) <= 3 * moment0.stderr[-1, -1]


def test_moment_symmetric(moment0):
    np.testing.assert_array_equal(moment0.M, moment0.M.T)


def test_reproducible(ref_model):
    a = sample_third_moment(ref_model, ref_model.basis, None, 30, 100.0, seed=5)
    b = sample_third_moment(ref_model, ref_model.basis, None, 30, 100.0, seed=5)
    np.testing.assert_array_equal(a.M, b.M)
    np.testing.assert_array_equal(a.stderr, b.stderr)


def test_stderr_scaling(ref_model):
    small = sample_third_moment(ref_model, ref_model.basis, None, 1000, 200.0, seed=11)
    large = sample_third_moment(ref_model, ref_model.basis, None, 2000, 200.0, seed=12)
    ratio = np.median(small.stderr / large.stderr)
    assert ratio == pytest.approx(np.sqrt(2), rel=0.2)


def test_correct_assembly_blocks(moment0, pt0, ref_model):
    rep = assemble_sigma_correct(moment0, pt0, LAM, 0.7, ref_model.weights)
    _psd(rep.sigma)
    mu = LAM * np.ones(3)
    blk = rep.block_sigma
    Sa = blk[:3, :3]
    np.testing.assert_allclose(blk[:3, 3], -Sa @ mu + ref_model.weights, rtol=1e-12)
    assert blk[3, 3] == pytest.approx(mu @ Sa @ mu + LAM * (1 - 2 * 0.7), rel=1e-12)
    # sandwich and block assemblies agree within Monte Carlo error
    assert np.all(np.abs(rep.sigma - blk) <= 5 * rep.stderr + 1e-10)


def test_block_mismatch_detected(moment0, pt0):
    with pytest.raises(InconsistentBlocks):
        assemble_sigma_correct(moment0, pt0, LAM, 0.7, np.array([10.0, -10.0, 10.0]))


def test_misspecified_reduces_to_correct(moment0, pt0, ref_model):
    zero = MisspecCorrection.zero(3, alpha=ref_model.weights.copy())
    mis = assemble_sigma_mis(moment0, pt0, zero, LAM)
    cor = assemble_sigma_correct(moment0, pt0, LAM, 0.7, ref_model.weights)
    np.testing.assert_allclose(mis.sigma, cor.sigma, rtol=1e-8, atol=1e-10)


def test_h_matrix_is_gram_inverse_without_correction(pt0):
    mu = LAM * np.ones(3)
    H = h_matrix(pt0.R_star, mu, mu, 1.0)
    np.testing.assert_allclose(H @ gram_limit_extended(pt0.R_star, mu), np.eye(4), atol=1e-10)


def test_misspecified_assembly(ref_model):
    basis = BasisFamily.erlang(5.0, 2)
    pt = pseudo_true(ref_model, basis)
    corr = misspec_correction(ref_model, pt)
    M = sample_third_moment(ref_model, basis, corr, 1500, 400.0, seed=8)
    rep = assemble_sigma_mis(M, pt, corr, LAM)
    _psd(rep.sigma)
    assert np.all(np.abs(rep.sigma - rep.block_sigma) <= 5 * rep.stderr + 1e-10)


def test_shape_mismatch(moment0, ref_model):
    pt = pseudo_true(ref_model, BasisFamily.erlang(5.0, 2))
    with pytest.raises(ShapeMismatch):
        assemble_sigma_correct(moment0, pt, LAM, 0.7, np.zeros(2))


def test_crb_and_gap(moment0, pt0, ref_model):
    sig = assemble_sigma_correct(moment0, pt0, LAM, 0.7, ref_model.weights)
    crb = crb_from_moment(moment0).with_gap(sig.sigma)
    assert np.array_equal(crb.sigma_crb, crb.sigma_crb.T)
    assert np.linalg.eigvalsh(crb.sigma_crb)[0] > 0
    assert crb.gap_frobenius == pytest.approx(np.linalg.norm(sig.sigma - crb.sigma_crb))


def test_crb_singular():
    bad = ThirdMomentEstimate.from_samples(np.zeros((3, 2, 2)), 1.0, inverse_samples=np.zeros((3, 2, 2)))
    with pytest.raises(SingularEstimate):
        crb_from_moment(bad)
