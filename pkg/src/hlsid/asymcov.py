"""Monte Carlo third moments and asymptotic covariance assembly.

The third-order moments ``E[lambda0(0) xi(0) xi(0)^T]`` have no tractable
closed form, so they are sampled from ``L`` independent trajectories at the
left limit of a long horizon ``T``. Per-trajectory samples are kept so every
assembled quantity that is linear in the moment matrix gets an exact
Monte Carlo standard error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .basis import BasisFamily, ModelParams
from .errors import InconsistentBlocks, ShapeMismatch, SingularEstimate
from .lsfit import regressor_at
from .simulate import SimConfig, thin_simulate
from .spectral import MisspecCorrection, PseudoTrueReport

BLOCK_SIGMAS = 5.0
PSD_REL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ThirdMomentEstimate:
    """Sampled ``E[lambda0 xi xi^T]`` (or the ``xi_h`` variant) and its samples."""

    M: np.ndarray
    L: int
    T: float
    stderr: np.ndarray
    samples: np.ndarray = field(repr=False)
    inverse_M: np.ndarray | None = None
    inverse_samples: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, samples: np.ndarray, T: float, inverse_samples: np.ndarray | None = None):
        samples = np.asarray(samples, float)
        L = samples.shape[0]
        M = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / np.sqrt(L) if L > 1 else np.full(M.shape, np.inf)
        inv = None if inverse_samples is None else inverse_samples.mean(axis=0)
        return cls(0.5 * (M + M.T), L, float(T), se, samples, inv, inverse_samples)

    def to_dict(self) -> dict:
        return {"M": self.M.tolist(), "L": self.L, "T": self.T, "stderr": self.stderr.tolist()}


@dataclass(frozen=True, eq=False)
class CovReport:
    sigma: np.ndarray
    stderr: np.ndarray
    blocks: dict
    components: dict
    block_sigma: np.ndarray | None = None

    @property
    def frobenius(self) -> float:
        return float(np.linalg.norm(self.sigma))

    @property
    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.sigma)[0])

    def to_dict(self) -> dict:
        def conv(v):
            return v.tolist() if isinstance(v, np.ndarray) else v

        return {
            "sigma": self.sigma.tolist(),
            "frobenius": self.frobenius,
            "stderr": self.stderr.tolist(),
            "blocks": {k: conv(v) for k, v in self.blocks.items()},
            "components": {k: conv(v) for k, v in self.components.items()},
            "block_sigma": None if self.block_sigma is None else self.block_sigma.tolist(),
        }


@dataclass(frozen=True, eq=False)
class CrbReport:
    sigma_crb: np.ndarray
    gap_eigs: np.ndarray | None = None
    gap_frobenius: float | None = None

    def with_gap(self, sigma0: np.ndarray) -> "CrbReport":
        gap = sigma0 - self.sigma_crb
        gap = 0.5 * (gap + gap.T)
        return CrbReport(self.sigma_crb, np.linalg.eigvalsh(gap), float(np.linalg.norm(gap)))

    def to_dict(self) -> dict:
        return {
            "sigma_crb": self.sigma_crb.tolist(),
            "gap_eigs": None if self.gap_eigs is None else self.gap_eigs.tolist(),
            "gap_frobenius": self.gap_frobenius,
        }


# --- sampling ------------------------------------------------------------


def _xi_at_horizon(events, basis: BasisFamily, correction: MisspecCorrection | None) -> np.ndarray:
    T = events.horizon
    chi = regressor_at(events, basis, T) if basis.size else np.zeros(0)
    if correction is not None and events.count:
        lag = T - events.times
        lag = lag[(lag > 0) & (lag <= correction.t[-1])]
        if lag.size:
            chi = chi + correction.h_alpha_at(lag).sum(axis=0)
    return np.append(chi, 1.0)


def sample_third_moments(
    true_model: ModelParams,
    specs: Sequence[tuple[BasisFamily, MisspecCorrection | None]],
    L: int,
    T: float,
    seed: int = 0,
    with_inverse: bool = False,
) -> list[ThirdMomentEstimate]:
    """Sample several moment matrices from the same ``L`` trajectories.

    Each spec is ``(basis, correction)``; a ``None`` correction gives ``xi``,
    otherwise ``xi_h`` built from ``q + h^alpha``.
    """
    true_model.require_simulable()
    if L < 1:
        raise ValueError("L must be positive")
    out = [np.empty((L, b.size + 1, b.size + 1)) for b, _ in specs]
    inv = [np.empty_like(o) for o in out] if with_inverse else None
    for l in range(L):
        ev = thin_simulate(SimConfig(true_model, T, seed, l))
        lam = _true_intensity_at_horizon(true_model, ev)
        for k, (basis, corr) in enumerate(specs):
            xi = _xi_at_horizon(ev, basis, corr)
            xx = np.outer(xi, xi)
            out[k][l] = lam * xx
            if with_inverse:
                inv[k][l] = xx / lam
    return [
        ThirdMomentEstimate.from_samples(o, T, None if inv is None else inv[k]) for k, o in enumerate(out)
    ]


def _true_intensity_at_horizon(model: ModelParams, events) -> float:
    if model.basis.size == 0 or events.count == 0:
        return model.background
    chi = regressor_at(events, model.basis, events.horizon)
    return float(model.background + chi @ model.weights)


def sample_third_moment(
    true_model: ModelParams,
    basis: BasisFamily,
    correction: MisspecCorrection | None,
    L: int,
    T: float,
    seed: int = 0,
) -> ThirdMomentEstimate:
    return sample_third_moments(true_model, [(basis, correction)], L, T, seed)[0]


# --- assembly --------------------------------------------------------------


def _check_shapes(M: ThirdMomentEstimate, pt: PseudoTrueReport):
    P = pt.alpha_star.size
    if M.M.shape != (P + 1, P + 1):
        raise ShapeMismatch(f"moment matrix {M.M.shape} does not match basis size {P}")


def _centered(M: np.ndarray, m: np.ndarray) -> np.ndarray:
    """``E[lambda (chi - m)(chi - m)^T]`` from the uncentered ``E[lambda xi xi^T]`` (batched)."""
    P = m.size
    A = M[..., :P, :P]
    b = M[..., :P, P]
    d = M[..., P, P]
    bm = b[..., :, None] * m[None, :]
    return A - bm - np.swapaxes(bm, -1, -2) + d[..., None, None] * np.outer(m, m)


def _sandwich(W: np.ndarray, M: np.ndarray) -> np.ndarray:
    return W @ M @ W.T


def _block_sigma(M, Rinv, mu, mu_h, lam, kappa, alpha_cross, gamma_like):
    """Block-formula covariance (batched over leading axes of ``M``)."""
    S = _centered(M, mu_h)
    Sa = Rinv @ S @ Rinv
    P = mu.size
    cross = -(Sa @ mu) + kappa * alpha_cross
    sc = np.einsum("...i,i->...", Sa @ mu, mu) + lam * (kappa**2 - 2 * kappa * gamma_like)
    out = np.empty(M.shape)
    out[..., :P, :P] = Sa
    out[..., :P, P] = cross
    out[..., P, :P] = cross
    out[..., P, P] = sc
    return out


def _dual_check(sandwich_fn, block_fn, M: ThirdMomentEstimate):
    sig = sandwich_fn(M.M)
    blk = block_fn(M.M)
    if M.L > 1:
        diffs = sandwich_fn(M.samples) - block_fn(M.samples)
        se_diff = diffs.std(axis=0, ddof=1) / np.sqrt(M.L)
        se = sandwich_fn(M.samples).std(axis=0, ddof=1) / np.sqrt(M.L)
        excess = np.abs(sig - blk) - BLOCK_SIGMAS * se_diff - 1e-10 * np.abs(sig).max()
        if np.any(excess > 0):
            raise InconsistentBlocks(
                f"sandwich and block assemblies differ by up to {np.abs(sig - blk).max():.3g}"
            )
    else:
        se = np.full(sig.shape, np.inf)
    return 0.5 * (sig + sig.T), 0.5 * (blk + blk.T), se


def gram_limit_extended(R: np.ndarray, mu: np.ndarray) -> np.ndarray:
    P = mu.size
    G = np.empty((P + 1, P + 1))
    G[:P, :P] = R + np.outer(mu, mu)
    G[:P, P] = G[P, :P] = mu
    G[P, P] = 1.0
    return G


def assemble_sigma_correct(
    M: ThirdMomentEstimate, pt: PseudoTrueReport, lam: float, gamma: float, alpha0
) -> CovReport:
    _check_shapes(M, pt)
    alpha0 = np.asarray(alpha0, float)
    P = alpha0.size
    mu = lam * np.ones(P)
    G = gram_limit_extended(pt.R_star, mu)
    Ginv = np.linalg.inv(G)
    Rinv = np.linalg.inv(pt.R_star)

    def sandwich(m):
        return _sandwich(Ginv, m)

    def blocks(m):
        return _block_sigma(m, Rinv, mu, mu, lam, 1.0, alpha0, gamma)

    sig, blk, se = _dual_check(sandwich, blocks, M)
    return CovReport(
        sigma=sig,
        stderr=se,
        blocks={"sigma_alpha": sig[:P, :P], "sigma_c": float(sig[P, P]), "cross": sig[:P, P]},
        components={"G_star_inv": Ginv, "mu": mu},
        block_sigma=blk,
    )


def h_matrix(R: np.ndarray, mu: np.ndarray, mu_h: np.ndarray, kappa: float) -> np.ndarray:
    """Scaling matrix of the misspecified limit.

    The bottom-left block is ``-mu^T R^-1``, the limit of ``-chi_bar^T R_T^-1``
    in the scaled error expansion; with it the sandwich reproduces the block
    formulas exactly.
    """
    P = mu.size
    Rinv = np.linalg.inv(R)
    H = np.empty((P + 1, P + 1))
    H[:P, :P] = Rinv
    H[:P, P] = -Rinv @ mu_h
    H[P, :P] = -mu @ Rinv
    H[P, P] = mu @ Rinv @ mu_h + kappa
    return H


def assemble_sigma_mis(
    M_h: ThirdMomentEstimate, pt: PseudoTrueReport, corr: MisspecCorrection, lam: float
) -> CovReport:
    _check_shapes(M_h, pt)
    P = pt.alpha_star.size
    if corr.mu_h_alpha.shape != (P,):
        raise ShapeMismatch("correction does not match the basis size")
    mu = lam * np.ones(P)
    mu_h = mu + corr.mu_h_alpha
    kappa = corr.kappa_ratio
    alpha_h = corr.alpha_h if corr.alpha_h is not None else pt.alpha_star
    H = h_matrix(pt.R_star, mu, mu_h, kappa)
    Rinv = np.linalg.inv(pt.R_star)

    def sandwich(m):
        return _sandwich(H, m)

    def blocks(m):
        return _block_sigma(m, Rinv, mu, mu_h, lam, kappa, alpha_h, float(alpha_h.sum()))

    sig, blk, se = _dual_check(sandwich, blocks, M_h)
    return CovReport(
        sigma=sig,
        stderr=se,
        blocks={"sigma_alpha": sig[:P, :P], "sigma_c": float(sig[P, P]), "cross": sig[:P, P]},
        components={
            "H": H,
            "mu": mu,
            "mu_h_alpha": corr.mu_h_alpha,
            "kappa_ratio": kappa,
            "alpha_h": alpha_h,
        },
        block_sigma=blk,
    )


def crb_from_moment(M: ThirdMomentEstimate) -> CrbReport:
    if M.inverse_M is None:
        raise ValueError("moment estimate was sampled without inverse-intensity weights")
    F = 0.5 * (M.inverse_M + M.inverse_M.T)
    try:
        c = cho_factor(F)
    except LinAlgError:
        raise SingularEstimate("sampled Fisher information is not positive definite") from None
    S = cho_solve(c, np.eye(F.shape[0]))
    return CrbReport(0.5 * (S + S.T))


def sample_crb(true_model: ModelParams, L: int, T: float, seed: int = 0) -> CrbReport:
    M = sample_third_moments(true_model, [(true_model.basis, None)], L, T, seed, with_inverse=True)[0]
    return crb_from_moment(M)
