"""Experiment orchestration: pseudo-true sweeps, covariances and CLT quantile checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

from . import __version__
from .asymcov import (
    CovReport,
    assemble_sigma_correct,
    assemble_sigma_mis,
    crb_from_moment,
    sample_third_moments,
)
from .basis import BasisFamily, ModelParams, reference_model
from .errors import ConfigError, HlsidError, NotIdentifiable
from .lsfit import fit_accumulators, filter_accumulate_many
from .simulate import SimConfig, thin_simulate
from .spectral import SpectralGrid, TimeGrid, misspec_correction, pseudo_true

DEFAULT_PROBS = (0.15, 0.25, 0.5, 0.75, 0.85)
DEFAULT_HORIZONS = tuple(50.0 * 2**k for k in range(7))
SKIP_LIMIT = 0.01
SKIP_CHECK_FROM = 200.0


def basis_from_config(item) -> BasisFamily:
    """``{"erlang": {"rate": r, "order": P}}``, ``{"exponentials": [...]}`` or an atom list."""
    if isinstance(item, list):
        return BasisFamily.from_config(item)
    if not isinstance(item, dict):
        raise ConfigError(f"bad basis entry: {item!r}")
    if "erlang" in item:
        e = item["erlang"]
        return BasisFamily.erlang(float(e["rate"]), int(e["order"]))
    if "exponentials" in item:
        return BasisFamily.exponentials(item["exponentials"])
    if "atoms" in item:
        return BasisFamily.from_config(item["atoms"])
    raise ConfigError(f"bad basis entry: {item!r}")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    true_model: ModelParams = field(default_factory=reference_model)
    candidate_bases: tuple[BasisFamily, ...] = ()
    horizons: tuple[float, ...] = DEFAULT_HORIZONS
    trajectories: int = 3000
    seed: int = 0
    sgrid: SpectralGrid = field(default_factory=SpectralGrid)
    tgrid: TimeGrid = field(default_factory=TimeGrid)
    quantile_probs: tuple[float, ...] = DEFAULT_PROBS
    cov_trajectories: int = 3000
    cov_horizon: float = 3200.0

    def __post_init__(self):
        h = np.asarray(self.horizons, float)
        if h.size == 0 or np.any(h <= 0) or np.any(np.diff(h) <= 0):
            raise ConfigError("horizons must be positive and strictly ascending")
        p = np.asarray(self.quantile_probs, float)
        if p.size == 0 or np.any((p <= 0) | (p >= 1)):
            raise ConfigError("quantile probabilities must lie in (0, 1)")
        if not np.allclose(np.sort(p), np.sort(1 - p)):
            raise ConfigError("quantile probabilities must be symmetric around 0.5")
        if self.trajectories < 1 or self.cov_trajectories < 1:
            raise ConfigError("trajectory counts must be positive")
        object.__setattr__(self, "horizons", tuple(float(x) for x in h))
        object.__setattr__(self, "quantile_probs", tuple(float(x) for x in p))
        object.__setattr__(self, "candidate_bases", tuple(self.candidate_bases))

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        kw = {}
        if "model" in cfg:
            kw["true_model"] = ModelParams.from_config(cfg["model"])
        if "bases" in cfg:
            kw["candidate_bases"] = tuple(basis_from_config(b) for b in cfg["bases"])
        for key in ("horizons", "quantile_probs"):
            if key in cfg:
                kw[key] = tuple(cfg[key])
        for key in ("trajectories", "seed", "cov_trajectories"):
            if key in cfg:
                kw[key] = int(cfg[key])
        if "cov_horizon" in cfg:
            kw["cov_horizon"] = float(cfg["cov_horizon"])
        try:
            if "spectral_grid" in cfg:
                kw["sgrid"] = SpectralGrid(**cfg["spectral_grid"])
            if "time_grid" in cfg:
                kw["tgrid"] = TimeGrid(**cfg["time_grid"])
        except TypeError as exc:
            raise ConfigError(f"bad grid description: {exc}") from None
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "model": self.true_model.to_config(),
            "bases": [b.to_config() for b in self.candidate_bases],
            "horizons": list(self.horizons),
            "trajectories": self.trajectories,
            "seed": self.seed,
            "spectral_grid": self.sgrid.to_dict(),
            "time_grid": self.tgrid.to_dict(),
            "quantile_probs": list(self.quantile_probs),
            "cov_trajectories": self.cov_trajectories,
            "cov_horizon": self.cov_horizon,
        }


@dataclass(frozen=True, eq=False)
class QuantileTable:
    """Empirical quantiles ``(component, horizon, prob)`` of ``sqrt(T)(theta_hat - theta_ref)``."""

    horizons: np.ndarray
    probs: np.ndarray
    empirical: np.ndarray
    theoretical: np.ndarray
    sigma_diag: np.ndarray
    used: np.ndarray
    skipped: np.ndarray
    trajectories: int

    def deviation(self, k: int = -1) -> np.ndarray:
        """``|empirical - theoretical| / sqrt(Sigma_ii)`` at horizon index ``k``; shape ``(C, Q)``."""
        return np.abs(self.empirical[:, k, :] - self.theoretical) / np.sqrt(self.sigma_diag)[:, None]

    def passes(self, band: float, k: int = -1) -> bool:
        return bool(np.all(self.deviation(k) <= band))

    def to_dict(self) -> dict:
        return {
            "horizons": self.horizons.tolist(),
            "probs": self.probs.tolist(),
            "empirical": self.empirical.tolist(),
            "theoretical": self.theoretical.tolist(),
            "sigma_diag": self.sigma_diag.tolist(),
            "used": self.used.tolist(),
            "skipped": self.skipped.tolist(),
            "trajectories": self.trajectories,
        }

    def rows(self):
        """Flat rows ``(component, T, p, empirical, theoretical)`` for CSV output."""
        for c in range(self.empirical.shape[0]):
            for k, T in enumerate(self.horizons):
                for q, p in enumerate(self.probs):
                    yield c + 1, T, p, self.empirical[c, k, q], self.theoretical[c, q]


def theoretical_quantiles(sigma: np.ndarray, probs) -> np.ndarray:
    """``z_p sqrt(Sigma_ii)`` with shape ``(P+1, len(probs))``."""
    return np.sqrt(np.diag(sigma))[:, None] * norm.ppf(np.asarray(probs, float))[None, :]


def run_quantile_experiments(
    cfg: ExperimentConfig,
    targets: Sequence[tuple[BasisFamily, np.ndarray, np.ndarray]],
    seed: int | None = None,
) -> list[QuantileTable]:
    """Fit every ``(basis, theta_ref, Sigma)`` target on the same trajectories.

    Each trajectory is simulated once to the largest horizon; nested horizons
    reuse the prefix of the same event stream.
    """
    seed = cfg.seed + 1 if seed is None else seed
    hs = np.asarray(cfg.horizons)
    L = cfg.trajectories
    errs = [np.full((L, hs.size, b.size + 1), np.nan) for b, _, _ in targets]
    refs = [np.asarray(r, float) for _, r, _ in targets]
    for l in range(L):
        ev = thin_simulate(SimConfig(cfg.true_model, hs[-1], seed, l))
        for j, (basis, _, _) in enumerate(targets):
            accs, _ = filter_accumulate_many(ev, basis, hs)
            for k, acc in enumerate(accs):
                fit = fit_accumulators(acc, basis)
                if fit.exists:
                    errs[j][l, k] = np.sqrt(hs[k]) * (fit.theta_hat - refs[j])
    tables = []
    for j, (_, _, sigma) in enumerate(targets):
        e = errs[j]
        ok = ~np.isnan(e[:, :, 0])
        used = ok.sum(axis=0)
        skipped = L - used
        for k in range(hs.size):
            if hs[k] >= SKIP_CHECK_FROM and skipped[k] > SKIP_LIMIT * L:
                raise NotIdentifiable(f"{skipped[k]} of {L} fits failed at T={hs[k]}")
        emp = np.full((e.shape[2], hs.size, len(cfg.quantile_probs)), np.nan)
        for k in range(hs.size):
            if used[k]:
                emp[:, k, :] = np.quantile(e[ok[:, k], k, :], cfg.quantile_probs, axis=0).T
        sigma = np.asarray(sigma, float)
        tables.append(
            QuantileTable(
                horizons=hs.copy(),
                probs=np.asarray(cfg.quantile_probs),
                empirical=emp,
                theoretical=theoretical_quantiles(sigma, cfg.quantile_probs),
                sigma_diag=np.diag(sigma).copy(),
                used=used,
                skipped=skipped,
                trajectories=L,
            )
        )
    return tables


def run_quantile_experiment(cfg: ExperimentConfig, basis: BasisFamily, theta_ref, sigma) -> QuantileTable:
    return run_quantile_experiments(cfg, [(basis, theta_ref, sigma)])[0]


def run_pseudo_true_sweep(cfg: ExperimentConfig) -> list[dict]:
    """One entry per candidate basis; failures are recorded and the sweep continues."""
    out = []
    for basis in cfg.candidate_bases:
        try:
            rep = pseudo_true(cfg.true_model, basis, cfg.sgrid)
            out.append({"basis": basis.to_config(), "report": rep, "error": None})
        except HlsidError as exc:
            out.append({"basis": basis.to_config(), "report": None, "error": f"{type(exc).__name__}: {exc}"})
    return out


@dataclass(frozen=True, eq=False)
class CovarianceSuite:
    """Correct-specification, CRB and misspecified covariances from one MC batch."""

    sigma0: CovReport
    crb: object
    pseudo_true: list
    corrections: list
    sigma_mis: list

    def to_dict(self) -> dict:
        return {
            "sigma0": self.sigma0.to_dict(),
            "crb": self.crb.to_dict(),
            "pseudo_true": [p.to_dict() for p in self.pseudo_true],
            "corrections": [c.to_dict() for c in self.corrections],
            "sigma_mis": [s.to_dict() for s in self.sigma_mis],
        }


def run_covariances(cfg: ExperimentConfig) -> CovarianceSuite:
    model = cfg.true_model
    lam = model.expected_rate
    pt0 = pseudo_true(model, model.basis, cfg.sgrid)
    pts = [pseudo_true(model, b, cfg.sgrid) for b in cfg.candidate_bases]
    cors = [misspec_correction(model, p, cfg.sgrid, cfg.tgrid) for p in pts]
    specs = [(model.basis, None)] + [(p.basis, c) for p, c in zip(pts, cors)]
    moments = sample_third_moments(model, specs, cfg.cov_trajectories, cfg.cov_horizon, cfg.seed, with_inverse=True)
    sigma0 = assemble_sigma_correct(moments[0], pt0, lam, model.branching_ratio, model.weights)
    crb = crb_from_moment(moments[0]).with_gap(sigma0.sigma)
    mis = [assemble_sigma_mis(M, p, c, lam) for M, p, c in zip(moments[1:], pts, cors)]
    return CovarianceSuite(sigma0, crb, pts, cors, mis)


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Full pipeline: pseudo-true sweep, covariances and quantile checks.

    Quantiles are computed for the true basis against ``(theta0, Sigma0)`` and
    for the last candidate basis against ``(theta_*, Sigma_*)``.
    """
    sweep = run_pseudo_true_sweep(cfg)
    cov = run_covariances(cfg)
    targets = [(cfg.true_model.basis, cfg.true_model.theta, cov.sigma0.sigma)]
    if cfg.candidate_bases:
        targets.append((cov.pseudo_true[-1].basis, cov.pseudo_true[-1].theta_star, cov.sigma_mis[-1].sigma))
    tables = run_quantile_experiments(cfg, targets)
    return {
        "version": __version__,
        "config": cfg.to_dict(),
        "pseudo_true_sweep": sweep,
        "covariances": cov,
        "quantiles": {"correct": tables[0], "misspecified": tables[1] if len(tables) > 1 else None},
    }
