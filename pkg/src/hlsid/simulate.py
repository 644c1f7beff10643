"""Exact simulation of linear Hawkes processes by Ogata thinning.

Simulations start from an empty history at time 0, i.e. they produce the
truncated process observed on ``(0, T]``. Random streams are Philox
counter-based generators keyed by ``(seed, trajectory_index)`` so any single
trajectory can be regenerated independently of the others.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _chain
from .basis import ModelParams
from .errors import CapacityError, ConfigError, NonMonotone, NumericalError

DEFAULT_EVENT_CAP = 10**8


@dataclass(frozen=True, eq=False)
class EventSeries:
    """Strictly increasing event times in ``(0, horizon]``."""

    times: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.ascontiguousarray(np.asarray(self.times, dtype=float).reshape(-1))
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if t.size:
            bad = np.flatnonzero(np.diff(t) <= 0)
            if bad.size:
                raise NonMonotone(int(bad[0]) + 1)
            if t[0] <= 0 or t[-1] > self.horizon:
                raise ConfigError("event times must lie in (0, horizon]")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "horizon", float(self.horizon))

    def __len__(self) -> int:
        return self.times.size

    @property
    def count(self) -> int:
        return self.times.size

    def truncate(self, horizon: float) -> "EventSeries":
        return EventSeries(self.times[self.times <= horizon], horizon)


@dataclass(frozen=True, eq=False)
class SimConfig:
    model: ModelParams
    horizon: float
    seed: int = 0
    trajectory_index: int = 0
    event_cap: int = DEFAULT_EVENT_CAP

    def __post_init__(self):
        self.model.require_simulable()
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if self.trajectory_index < 0:
            raise ConfigError("trajectory_index must be nonnegative")


def trajectory_rng(seed: int, trajectory_index: int) -> np.random.Generator:
    key = [int(seed) % 2**64, int(trajectory_index) % 2**64]
    return np.random.Generator(np.random.Philox(key=key))


def thin_simulate(config: SimConfig) -> EventSeries:
    model = config.model
    layout = model.basis.chains
    times, status = _chain.thin(
        trajectory_rng(config.seed, config.trajectory_index),
        model.background,
        np.ascontiguousarray(model.weights, dtype=float),
        layout.rates,
        layout.starts,
        layout.atom_index,
        layout.atom_chain_start,
        float(config.horizon),
        int(config.event_cap),
    )
    if status == 1:
        raise CapacityError(f"more than {config.event_cap} events before T={config.horizon}")
    if status == 2:
        raise NumericalError("thinning envelope fell below the intensity")
    return EventSeries(times, config.horizon)


def simulate_many(model: ModelParams, horizon: float, n: int, seed: int = 0, start: int = 0):
    """Yield ``n`` trajectories with indices ``start .. start+n-1``."""
    for i in range(start, start + n):
        yield thin_simulate(SimConfig(model, horizon, seed, i))


def intensity_path(model: ModelParams, events: EventSeries, t: float) -> float:
    """``c + alpha . sum_{t_r < t} q(t - t_r)`` (strict left limit)."""
    past = events.times[events.times < t]
    if past.size == 0 or model.basis.size == 0:
        return model.background
    return float(model.background + model.basis.eval(t - past).sum(axis=0) @ model.weights)


def martingale_residual(model: ModelParams, events: EventSeries) -> float:
    """``N_T - int_0^T lambda(u) du`` with per-event kernel CDFs."""
    T = events.horizon
    comp = model.background * T
    if events.count and model.basis.size:
        comp += float(model.basis.cdf(T - events.times).sum(axis=0) @ model.weights)
    return events.count - comp
