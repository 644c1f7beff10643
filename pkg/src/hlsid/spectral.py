"""Frequency-domain limits of the LS statistics.

All spectral integrals are Riemann sums over the symmetric grid
``omega_n = n * dw``, ``|n| <= N``, of rational integrands built from kernel
Laplace transforms and the Bartlett spectrum ``Lambda / |1 - phi0(jw)|^2``.

Time-domain reconstructions use the fact that when ``dt * dw = 2 pi / M`` the
cosine sum ``sum_n cos(m dt n dw) F_n`` depends on ``n`` only modulo ``M``:
the grid is folded into ``M`` bins and a single FFT returns the exact
cosine sum at every time node. The requested ``dt`` is snapped to the nearest
such value (relative change below ``1 / (2M)``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .basis import BasisFamily, Hir, ModelParams, hir_min_value
from .errors import ConfigError, GibbsViolation, GridTooCoarse, NumericalError, SingularLimit

IMAG_TOL = 1e-9


@dataclass(frozen=True)
class SpectralGrid:
    """Frequency grid ``{-n dw, ..., n dw}``.

    The sum is cut early where every atom satisfies ``|q(jw)|^2 < trunc_tol``
    (which bounds ``|q|^2 C(w) / C(0)`` since ``C(w) <= C(0)`` for nonnegative
    HIRs). ``GridTooCoarse`` is raised when the slowest atom still carries
    ``|q|^2 C / C(0) > tail_tol`` at the grid edge.
    """

    dw: float = 0.01
    n: int = 2_000_000
    trunc_tol: float = 1e-12
    tail_tol: float = 1e-6
    chunk: int = 200_000

    def __post_init__(self):
        if not self.dw > 0 or self.n < 1:
            raise ConfigError("spectral grid needs dw > 0 and n >= 1")

    @property
    def omega_max(self) -> float:
        return self.n * self.dw

    def to_dict(self) -> dict:
        return {"dw": self.dw, "n": self.n, "trunc_tol": self.trunc_tol, "tail_tol": self.tail_tol}


@dataclass(frozen=True)
class TimeGrid:
    """Time grid ``{0, dt, ..., n dt}``."""

    dt: float = 0.01
    n: int = 1000
    gibbs_factor: float = 0.05

    def __post_init__(self):
        if not self.dt > 0 or self.n < 1:
            raise ConfigError("time grid needs dt > 0 and n >= 1")
        if not 0 < self.gibbs_factor <= 0.05:
            raise ConfigError("gibbs_factor must lie in (0, 0.05]")

    @property
    def span(self) -> float:
        return self.n * self.dt

    def check_gibbs(self, sgrid: SpectralGrid):
        limit = self.gibbs_factor * 2 * np.pi / self.span
        if sgrid.dw > limit:
            raise GibbsViolation(
                f"dw={sgrid.dw} exceeds {limit:.4g} required for a time span of {self.span}"
            )

    def to_dict(self) -> dict:
        return {"dt": self.dt, "n": self.n, "gibbs_factor": self.gibbs_factor}


@dataclass(frozen=True, eq=False)
class PseudoTrueReport:
    basis: BasisFamily
    R_star: np.ndarray
    R10_star: np.ndarray
    alpha_star: np.ndarray
    gamma_star: float
    c_star: float
    eig_R: tuple[float, float]
    l2_rel_error: float
    min_phi_star: float
    expected_rate: float

    @property
    def theta_star(self) -> np.ndarray:
        return np.append(self.alpha_star, self.c_star)

    @property
    def hir(self) -> Hir:
        return Hir(self.basis, self.alpha_star)

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.to_config(),
            "R_star": self.R_star.tolist(),
            "R10_star": self.R10_star.tolist(),
            "alpha_star": self.alpha_star.tolist(),
            "gamma_star": self.gamma_star,
            "c_star": self.c_star,
            "eig_R": list(self.eig_R),
            "l2_rel_error": self.l2_rel_error,
            "min_phi_star": self.min_phi_star,
        }


@dataclass(frozen=True, eq=False)
class MisspecCorrection:
    """Misspecification kernels on the time grid ``t`` (shape ``(P, len(t))``)."""

    mu_h_alpha: np.ndarray
    t: np.ndarray
    w_tilde: np.ndarray
    h_alpha: np.ndarray
    kappa_ratio: float
    r_h0: np.ndarray = field(default=None)
    alpha_h: np.ndarray = field(default=None)

    def h_alpha_at(self, u) -> np.ndarray:
        """Linear interpolation of ``h^alpha``; zero outside the grid. Shape ``u.shape + (P,)``."""
        u = np.asarray(u, dtype=float)
        out = np.stack([np.interp(u, self.t, h, left=0.0, right=0.0) for h in self.h_alpha], axis=-1)
        out[u > self.t[-1]] = 0.0
        return out

    @classmethod
    def zero(cls, P: int, tgrid: TimeGrid | None = None, alpha: np.ndarray | None = None) -> "MisspecCorrection":
        tgrid = tgrid or TimeGrid()
        t = tgrid.dt * np.arange(tgrid.n + 1)
        z = np.zeros((P, t.size))
        return cls(np.zeros(P), t, z, z.copy(), 1.0, None, alpha)

    def to_dict(self) -> dict:
        return {
            "mu_h_alpha": self.mu_h_alpha.tolist(),
            "kappa_ratio": self.kappa_ratio,
            "alpha_h": None if self.alpha_h is None else self.alpha_h.tolist(),
            "r_h0": None if self.r_h0 is None else self.r_h0.tolist(),
            "dt": float(self.t[1] - self.t[0]) if self.t.size > 1 else None,
            "n_t": int(self.t.size - 1),
        }


# --- elementary transforms -------------------------------------------------


def bartlett_spectrum(true_model: ModelParams, omega):
    """``Lambda / |1 - phi0(jw)|^2``; real, even and strictly positive."""
    w = np.asarray(omega, dtype=float)
    lam = true_model.expected_rate
    if true_model.basis.size == 0:
        out = np.full(w.shape, lam)
    else:
        out = lam / np.abs(1.0 - true_model.hir.fourier(np.abs(w))) ** 2
    return out if out.ndim else float(out)


def resolvent_transform(true_model: ModelParams, omega):
    """``zeta(jw) = 1 / (1 - phi0(jw))``; the resolvent transform is ``zeta - 1``."""
    w = np.asarray(omega, dtype=float)
    true_model.require_stable()
    phi = true_model.hir.fourier(w) if true_model.basis.size else np.zeros(w.shape, complex)
    out = 1.0 / (1.0 - phi)
    return out if np.ndim(out) else complex(out)


def kappa_transform(true_model: ModelParams, omega):
    return resolvent_transform(true_model, omega) - 1.0


# --- grid plumbing ---------------------------------------------------------


def _atoms_cutoff(bases, tol: float) -> float:
    """Frequency beyond which every atom has ``|q(jw)|^2 < tol``."""
    cut = 0.0
    for basis in bases:
        for a in basis:
            cut = max(cut, a.rate * np.sqrt(tol ** (-1.0 / a.order) - 1.0))
    return cut


def effective_n(true_model: ModelParams, basis: BasisFamily, sgrid: SpectralGrid) -> int:
    """Number of positive frequencies actually summed; checks the tail bound."""
    bases = [b for b in (basis, true_model.basis) if b.size]
    if not bases:
        return sgrid.n
    w_edge = sgrid.omega_max
    c0 = bartlett_spectrum(true_model, 0.0)
    tail = max(float(np.max(np.abs(b.fourier(w_edge)) ** 2)) for b in bases)
    tail *= bartlett_spectrum(true_model, w_edge) / c0
    if tail > sgrid.tail_tol:
        raise GridTooCoarse(
            f"|q(j w)|^2 C(w)/C(0) = {tail:.3g} at the grid edge w={w_edge:g} exceeds {sgrid.tail_tol:g}"
        )
    cut = _atoms_cutoff(bases, sgrid.trunc_tol)
    return int(min(sgrid.n, np.ceil(cut / sgrid.dw)))


def _chunks(n_eff: int, size: int):
    """Integer frequency indices ``-n_eff..n_eff`` in ascending chunks."""
    lo = -n_eff
    while lo <= n_eff:
        hi = min(lo + size, n_eff + 1)
        yield np.arange(lo, hi)
        lo = hi


def _real_part(z: np.ndarray, what: str) -> np.ndarray:
    z = np.asarray(z)
    scale = max(1.0, float(np.max(np.abs(z.real)))) if z.size else 1.0
    if z.size and float(np.max(np.abs(z.imag))) > IMAG_TOL * scale:
        raise NumericalError(f"{what}: imaginary residue {np.max(np.abs(z.imag)):.3g} above tolerance")
    return np.ascontiguousarray(z.real)


def _fold_size(dt: float, dw: float, n_t: int) -> tuple[int, float]:
    M = int(round(2 * np.pi / (dt * dw)))
    if M <= n_t:
        raise ConfigError("time grid too long for the frequency spacing")
    return M, 2 * np.pi / (M * dw)


def _inverse_on_grid(values, dw: float, dt: float, n_t: int, n_eff: int, chunk: int, cols: int):
    """``(dw / 2pi) sum_n exp(j w_n t_m) F(w_n)`` for ``t_m = m dt_eff``.

    ``values(omega)`` returns an array ``(len(omega), cols)``.
    """
    M, dt_eff = _fold_size(dt, dw, n_t)
    folded = np.zeros((M, cols), dtype=complex)
    for n in _chunks(n_eff, chunk):
        F = values(n * dw)
        k = n % M
        for c in range(cols):
            folded[:, c] += np.bincount(k, weights=F[:, c].real, minlength=M)
            folded[:, c] += 1j * np.bincount(k, weights=F[:, c].imag, minlength=M)
    # sum_k G_k exp(+2 pi j m k / M) = M * ifft(G)
    out = M * np.fft.ifft(folded, axis=0)[: n_t + 1] * dw / (2 * np.pi)
    return dt_eff * np.arange(n_t + 1), out


# --- Gram limits and pseudo-true values --------------------------------------


def gram_limits(true_model: ModelParams, basis: BasisFamily, sgrid: SpectralGrid | None = None):
    """Spectral limits ``(R_*, R_*^(1,0))`` of the empirical covariance statistics."""
    sgrid = sgrid or SpectralGrid()
    n_eff = effective_n(true_model, basis, sgrid)
    P = basis.size
    R = np.zeros((P, P), dtype=complex)
    R10 = np.zeros(P, dtype=complex)
    for n in _chunks(n_eff, sgrid.chunk):
        w = n * sgrid.dw
        qb = basis.fourier(w)
        C = bartlett_spectrum(true_model, w)
        phi = true_model.hir.fourier(w) if true_model.basis.size else np.zeros(w.shape, complex)
        wq = qb * C[:, None]
        R += wq.T @ qb.conj()
        R10 += wq.T @ phi.conj()
    scale = sgrid.dw / (2 * np.pi)
    R = _real_part(R * scale, "R_*")
    R10 = _real_part(R10 * scale, "R_*^(1,0)")
    return 0.5 * (R + R.T), R10


def hir_l2_error(true_hir: Hir, candidate: Hir, grid: SpectralGrid | None = None) -> float:
    """``100 * int (phi0 - phi)^2 / int phi0^2`` evaluated in the frequency domain."""
    grid = grid or SpectralGrid()
    bases = [b for b in (true_hir.basis, candidate.basis) if b.size]
    n_eff = int(min(grid.n, np.ceil(_atoms_cutoff(bases, grid.trunc_tol) / grid.dw))) if bases else 0
    num = 0.0
    den = 0.0
    for n in _chunks(n_eff, grid.chunk):
        w = n * grid.dw
        phi0 = true_hir.fourier(w) if true_hir.basis.size else np.zeros(w.shape, complex)
        phi = candidate.fourier(w) if candidate.basis.size else np.zeros(w.shape, complex)
        num += float(np.sum(np.abs(phi0 - phi) ** 2))
        den += float(np.sum(np.abs(phi0) ** 2))
    if den == 0:
        raise NumericalError("true HIR has zero energy")
    return 100.0 * num / den


def pseudo_true(
    true_model: ModelParams,
    basis: BasisFamily,
    grid: SpectralGrid | None = None,
    min_t_max: float = 10.0,
    min_dt: float = 1e-3,
) -> PseudoTrueReport:
    grid = grid or SpectralGrid()
    R, R10 = gram_limits(true_model, basis, grid)
    eig = np.linalg.eigvalsh(R)
    try:
        if eig[0] <= 0:
            raise LinAlgError
        alpha = cho_solve(cho_factor(R), R10)
    except LinAlgError:
        raise SingularLimit(f"R_* is not positive definite (min eigenvalue {eig[0]:.3e})") from None
    lam = true_model.expected_rate
    gamma = float(alpha.sum())
    cand = Hir(basis, alpha)
    return PseudoTrueReport(
        basis=basis,
        R_star=R,
        R10_star=R10,
        alpha_star=alpha,
        gamma_star=gamma,
        c_star=lam * (1.0 - gamma),
        eig_R=(float(eig[0]), float(eig[-1])),
        l2_rel_error=hir_l2_error(true_model.hir, cand, grid) if true_model.basis.size else 0.0,
        min_phi_star=hir_min_value(cand, min_t_max, min_dt),
        expected_rate=lam,
    )


# --- misspecification kernels ----------------------------------------------


def _ab_transforms(true_model: ModelParams, basis: BasisFamily, alpha_star, w):
    """``a = q zeta``, ``b = dphi zeta`` and ``dphi`` at ``jw``."""
    qb = basis.fourier(w)
    phi0 = true_model.hir.fourier(w)
    zeta = 1.0 / (1.0 - phi0)
    dphi = phi0 - qb @ alpha_star
    return qb * zeta[:, None], dphi * zeta, dphi, qb, phi0


def mu_h_alpha(
    true_model: ModelParams, basis: BasisFamily, alpha_star, grid: SpectralGrid | None = None
) -> np.ndarray:
    """``Lambda int h^alpha`` from the two one-sided-integral spectral sums.

    The ``n = 0`` term is replaced by its limit, built from the analytic
    first moments of the kernels.
    """
    grid = grid or SpectralGrid()
    alpha_star = np.asarray(alpha_star, float)
    n_eff = effective_n(true_model, basis, grid)
    lam = true_model.expected_rate
    G = true_model.branching_ratio
    Gs = float(alpha_star.sum())
    P = basis.size
    b0 = (G - Gs) / (1 - G)
    acc = np.zeros(P, dtype=complex)
    for n in _chunks(n_eff, grid.chunk):
        n = n[n != 0]
        if n.size == 0:
            continue
        w = n * grid.dw
        s = 1j * w
        a, b, _, _, _ = _ab_transforms(true_model, basis, alpha_star, w)
        t1 = ((1.0 / (1 - G) - a) / s[:, None]) * b.conj()[:, None]
        t2 = ((b0 - b) / s)[:, None] * a.conj()
        acc += t1.sum(axis=0) + t2.sum(axis=0)
    m_q = basis.first_moments
    m_phi = true_model.hir.first_moment
    m_dphi = m_phi - float(alpha_star @ m_q)
    A0 = (m_q * (1 - G) + m_phi) / (1 - G) ** 2
    B0 = (m_dphi * (1 - G) + m_phi * (G - Gs)) / (1 - G) ** 2
    acc += b0 * A0 + B0 / (1 - G)
    out = lam * (1 - G) * grid.dw / (2 * np.pi) * acc
    return _real_part(out, "mu_h_alpha")


def w_tilde(
    true_model: ModelParams,
    basis: BasisFamily,
    alpha_star,
    sgrid: SpectralGrid | None = None,
    tgrid: TimeGrid | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Cosine-sum reconstruction of ``W~(u)``; returns ``(t, samples (P, n+1))``."""
    sgrid = sgrid or SpectralGrid()
    tgrid = tgrid or TimeGrid()
    tgrid.check_gibbs(sgrid)
    alpha_star = np.asarray(alpha_star, float)
    n_eff = effective_n(true_model, basis, sgrid)

    def values(w):
        _, _, dphi, qb, phi0 = _ab_transforms(true_model, basis, alpha_star, w)
        # Re{q(jw) dphi(-jw)} / |1 - phi0|^2, real and even
        return (qb * dphi.conj()[:, None]).real / (np.abs(1 - phi0) ** 2)[:, None]

    t, out = _inverse_on_grid(values, sgrid.dw, tgrid.dt, tgrid.n, n_eff, sgrid.chunk, basis.size)
    # (1/pi) int cos(uw) F dw = 2 * (1/2pi) int exp(juw) F dw for even F
    return t, 2.0 * _real_part(out, "W~").T


def _trapezoid_causal_conv(f: np.ndarray, g: np.ndarray, dt: float) -> np.ndarray:
    """``int_0^t f(u) g(t - u) du`` on a uniform grid by the trapezoid rule."""
    n = f.size
    full = np.convolve(f, g)[:n]
    out = full - 0.5 * f[0] * g[:n] - 0.5 * f[:n] * g[0]
    out[0] = 0.0
    return dt * out


def h_alpha(w_tilde_samples: np.ndarray, true_hir: Hir, t: np.ndarray) -> np.ndarray:
    """``h^alpha = W~ - W~ * phi0`` on the grid ``t`` (trapezoid convolution)."""
    W = np.atleast_2d(np.asarray(w_tilde_samples, float))
    if true_hir.basis.size == 0:
        return W.copy()
    dt = float(t[1] - t[0])
    phi = np.asarray(true_hir.eval(t), float)
    return np.stack([Wp - _trapezoid_causal_conv(Wp, phi, dt) for Wp in W])


def covariance_density_regular(true_model: ModelParams, tau, sgrid: SpectralGrid | None = None):
    """Regular part of the covariance density, ``(1/2pi) int cos(w tau) (C(w) - Lambda) dw``."""
    sgrid = sgrid or SpectralGrid()
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    lam = true_model.expected_rate
    out = np.zeros(tau_arr.shape)
    if true_model.basis.size == 0:
        return out if np.ndim(tau) else 0.0
    effective_n(true_model, true_model.basis, sgrid)
    for n in _chunks(sgrid.n, sgrid.chunk):
        w = n * sgrid.dw
        F = bartlett_spectrum(true_model, w) - lam
        out += np.cos(np.outer(tau_arr, w)) @ F
    out *= sgrid.dw / (2 * np.pi)
    return out if np.ndim(tau) else float(out[0])


def covariance_density_regular_grid(
    true_model: ModelParams, sgrid: SpectralGrid | None = None, tgrid: TimeGrid | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """``C_reg`` on the (snapped) nonnegative time grid via the folded FFT."""
    sgrid = sgrid or SpectralGrid()
    tgrid = tgrid or TimeGrid()
    lam = true_model.expected_rate

    def values(w):
        return (bartlett_spectrum(true_model, w) - lam)[:, None].astype(complex)

    t, out = _inverse_on_grid(values, sgrid.dw, tgrid.dt, tgrid.n, sgrid.n, sgrid.chunk, 1)
    return t, _real_part(out[:, 0], "C_reg")


def cross_limit_h(
    true_model: ModelParams,
    pt: PseudoTrueReport,
    t: np.ndarray,
    h_samples: np.ndarray,
    sgrid: SpectralGrid | None = None,
) -> np.ndarray:
    """``R_*^(h,0) = Cov[chi_h(0), chi_0(0)]``.

    Computed as ``R_*^(1,0) + int h^alpha(u) g(u) du`` with
    ``g = phi0 * C = Lambda phi0 + phi0 * C_reg``; the smooth part of ``g`` is
    reconstructed on the same time grid as ``h^alpha``.
    """
    sgrid = sgrid or SpectralGrid()
    lam = true_model.expected_rate
    dt = float(t[1] - t[0])
    n_t = t.size - 1

    def values(w):
        phi0 = true_model.hir.fourier(w)
        return ((bartlett_spectrum(true_model, w) - lam) * phi0)[:, None]

    _, g_reg = _inverse_on_grid(values, sgrid.dw, dt, n_t, sgrid.n, sgrid.chunk, 1)
    g = lam * np.asarray(true_model.hir.eval(t)) + _real_part(g_reg[:, 0], "phi0*C_reg")
    wts = np.full(t.size, dt)
    wts[0] = wts[-1] = 0.5 * dt
    return pt.R10_star + np.atleast_2d(h_samples) @ (wts * g)


def misspec_correction(
    true_model: ModelParams,
    pt: PseudoTrueReport,
    sgrid: SpectralGrid | None = None,
    tgrid: TimeGrid | None = None,
) -> MisspecCorrection:
    """All misspecification ingredients for the pseudo-true report ``pt``."""
    sgrid = sgrid or SpectralGrid()
    tgrid = tgrid or TimeGrid()
    basis = pt.basis
    mu = mu_h_alpha(true_model, basis, pt.alpha_star, sgrid)
    t, W = w_tilde(true_model, basis, pt.alpha_star, sgrid, tgrid)
    h = h_alpha(W, true_model.hir, t)
    r_h0 = cross_limit_h(true_model, pt, t, h, sgrid)
    alpha_h = cho_solve(cho_factor(pt.R_star), r_h0)
    kappa = (1.0 - pt.gamma_star) / (1.0 - true_model.branching_ratio)
    return MisspecCorrection(mu, t, W, h, kappa, r_h0, alpha_h)
