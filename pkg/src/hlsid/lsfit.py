"""Closed-form continuous-time least squares for Hawkes processes.

The truncated memory regressor ``chi(t) = sum_{t_r < t} q(t - t_r)`` is the
output of linear Erlang-chain filters driven by the events, so all
accumulators are computed in one pass: chain states are propagated exactly
between events, ``int chi dt`` is integrated in closed form and
``int chi chi^T dt`` by 32-node Gauss-Legendre quadrature per gap segment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import _chain
from .basis import BasisFamily
from .errors import NotIdentifiable, NumericallySingular
from .simulate import EventSeries

GL_NODES = 32
PD_RELATIVE_TOL = 1e-10
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)


@dataclass(frozen=True, eq=False)
class FilterAccumulators:
    I1: np.ndarray
    I2: np.ndarray
    Iev: np.ndarray
    count: int
    horizon: float
    first_event: float = np.inf


class GramStats(NamedTuple):
    lambda_hat: float
    chi_bar: np.ndarray
    R: np.ndarray
    s: np.ndarray
    G: np.ndarray


@dataclass(frozen=True, eq=False)
class FitResult:
    theta_hat: np.ndarray | None
    lambda_hat: float
    chi_bar: np.ndarray
    R: np.ndarray
    s: np.ndarray
    G: np.ndarray
    min_eig_R: float
    exists: bool
    reason: str = ""

    @property
    def alpha_hat(self) -> np.ndarray | None:
        return None if self.theta_hat is None else self.theta_hat[:-1]

    @property
    def c_hat(self) -> float | None:
        return None if self.theta_hat is None else float(self.theta_hat[-1])

    def to_dict(self) -> dict:
        return {
            "theta_hat": None if self.theta_hat is None else self.theta_hat.tolist(),
            "lambda_hat": self.lambda_hat,
            "chi_bar": self.chi_bar.tolist(),
            "R": self.R.tolist(),
            "s": self.s.tolist(),
            "G": self.G.tolist(),
            "min_eig_R": self.min_eig_R,
            "exists": self.exists,
            "reason": self.reason,
        }


def _segment_length(basis: BasisFamily) -> float:
    # keeps the exponent of any chi_a chi_b product below ~20 per segment
    return 10.0 / basis.max_rate


def filter_accumulate_many(
    events: EventSeries, basis: BasisFamily, horizons: Sequence[float], with_gram: bool = True
) -> tuple[list[FilterAccumulators], np.ndarray]:
    """Accumulators at several nested horizons from a single pass.

    Also returns the left-limit regressors ``chi(T_k-)`` with shape ``(K, P)``.
    Events after a horizon are ignored for that horizon.
    """
    hs = np.asarray(horizons, dtype=float)
    if hs.ndim != 1 or np.any(np.diff(hs) < 0) or np.any(hs <= 0):
        raise ValueError("horizons must be positive and ascending")
    P = basis.size
    if P == 0:
        counts = np.searchsorted(events.times, hs, side="right")
        accs = [FilterAccumulators(np.zeros(0), np.zeros((0, 0)), np.zeros(0), int(n), float(h))
                for n, h in zip(counts, hs)]
        return accs, np.zeros((hs.size, 0))
    lay = basis.chains
    I1, I2, Iev, N, chi = _chain.accumulate(
        events.times, hs, lay.rates, lay.starts, lay.atom_index,
        _segment_length(basis), _GL_X, _GL_W, with_gram,
    )
    t1 = float(events.times[0]) if events.count else np.inf
    accs = [FilterAccumulators(I1[k], I2[k], Iev[k], int(N[k]), float(hs[k]), t1) for k in range(hs.size)]
    return accs, chi


def filter_accumulate(events: EventSeries, basis: BasisFamily) -> FilterAccumulators:
    accs, _ = filter_accumulate_many(events, basis, [events.horizon])
    return accs[0]


def regressor_at(events: EventSeries, basis: BasisFamily, t: float) -> np.ndarray:
    """Left-limit regressor ``chi(t-)`` via the chain filter (no integrals)."""
    _, chi = filter_accumulate_many(events, basis, [t], with_gram=False)
    return chi[0]


def gram_stats(acc: FilterAccumulators) -> GramStats:
    T = acc.horizon
    lam = acc.count / T
    chi_bar = acc.I1 / T
    R = acc.I2 / T - np.outer(chi_bar, chi_bar)
    R = 0.5 * (R + R.T)
    s = acc.Iev / T - lam * chi_bar
    P = chi_bar.size
    G = np.empty((P + 1, P + 1))
    G[:P, :P] = R + np.outer(chi_bar, chi_bar)
    G[:P, P] = G[P, :P] = chi_bar
    G[P, P] = 1.0
    return GramStats(lam, chi_bar, R, s, G)


def fit_accumulators(acc: FilterAccumulators, basis: BasisFamily) -> FitResult:
    """Closed-form estimate; never raises, reports failure in ``exists``/``reason``."""
    st = gram_stats(acc)
    P = st.chi_bar.size
    min_eig = float(np.linalg.eigvalsh(st.R)[0]) if P else np.inf
    base = dict(lambda_hat=st.lambda_hat, chi_bar=st.chi_bar, R=st.R, s=st.s, G=st.G, min_eig_R=min_eig)
    if not acc.first_event < acc.horizon - basis.t0:
        return FitResult(None, exists=False, reason="not_identifiable", **base)
    if P == 0:
        return FitResult(np.array([st.lambda_hat]), exists=True, **base)
    tol = PD_RELATIVE_TOL * np.trace(st.R) / P
    if not min_eig > tol:
        return FitResult(None, exists=False, reason="numerically_singular", **base)
    try:
        alpha = cho_solve(cho_factor(st.R), st.s)
    except LinAlgError:
        return FitResult(None, exists=False, reason="numerically_singular", **base)
    c = st.lambda_hat - st.chi_bar @ alpha
    return FitResult(np.append(alpha, c), exists=True, **base)


def ls_fit(events: EventSeries, basis: BasisFamily) -> FitResult:
    fit = fit_accumulators(filter_accumulate(events, basis), basis)
    if fit.reason == "not_identifiable":
        raise NotIdentifiable(f"no event before T - T0 = {events.horizon - basis.t0}")
    if fit.reason == "numerically_singular":
        raise NumericallySingular(f"R_T minimum eigenvalue {fit.min_eig_R:.3e} below tolerance")
    return fit


def mass_conservation_residual(fit: FitResult, acc: FilterAccumulators) -> float:
    """``|c T + alpha . int chi dt - N_T|``: the fitted intensity's excess mass."""
    if not fit.exists:
        raise ValueError("fit does not exist")
    return abs(fit.c_hat * acc.horizon + fit.alpha_hat @ acc.I1 - acc.count)


def quadrature_oracle(events: EventSeries, basis: BasisFamily, dt: float) -> FilterAccumulators:
    """Accumulators by direct kernel summation and dense trapezoid quadrature.

    Each inter-event interval is integrated separately so the trapezoid rule
    never straddles a regressor jump.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    P = basis.size
    times = events.times
    T = events.horizon
    I1 = np.zeros(P)
    I2 = np.zeros((P, P))
    Iev = np.zeros(P)
    for i in range(1, times.size):
        Iev += basis.eval(times[i] - times[:i]).sum(axis=0)
    breaks = np.concatenate([[0.0], times, [T]])
    for r in range(breaks.size - 1):
        a, b = breaks[r], breaks[r + 1]
        past = times[:r]
        if b <= a or past.size == 0:
            continue
        m = max(1, int(np.ceil((b - a) / dt)))
        grid = np.linspace(a, b, m + 1)
        w = np.full(m + 1, (b - a) / m)
        w[0] *= 0.5
        w[-1] *= 0.5
        for chunk in np.array_split(np.arange(m + 1), max(1, (m + 1) * past.size // 2_000_000 + 1)):
            chi = basis.eval(grid[chunk, None] - past[None, :]).sum(axis=1)
            I1 += w[chunk] @ chi
            I2 += (chi * w[chunk, None]).T @ chi
    return FilterAccumulators(I1, I2, Iev, times.size, T, float(times[0]) if times.size else np.inf)
