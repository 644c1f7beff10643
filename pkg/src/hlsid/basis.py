"""Unit-mass causal kernels, kernel families and Hawkes impulse responses.

Two atom kinds are supported:

* ``exponential``: ``beta * exp(-beta t)``
* ``erlang``: ``rho**j t**(j-1) / (j-1)! * exp(-rho t)``

An exponential atom with rate ``beta`` is the same function as an Erlang atom
of order 1 with the same rate. Internally every family is reduced to a set of
Erlang *chains*, one per distinct rate; the j-th coordinate of a chain driven
by the event stream is exactly the Erlang(j) memory regressor. The chain
layout is what the simulator and the event-driven filters propagate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import ConfigError, PoleError, StabilityError

KINDS = ("exponential", "erlang")


@dataclass(frozen=True)
class KernelAtom:
    kind: str
    rate: float
    order: int = 1

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not np.isfinite(self.rate) or self.rate <= 0:
            raise ConfigError(f"kernel rate must be positive, got {self.rate}")
        object.__setattr__(self, "rate", float(self.rate))
        if int(self.order) != self.order or self.order < 1:
            raise ConfigError(f"kernel order must be a positive integer, got {self.order}")
        if kind == "exponential" and self.order != 1:
            raise ConfigError("exponential atoms have order 1")
        object.__setattr__(self, "order", int(self.order))

    @classmethod
    def exponential(cls, beta: float) -> "KernelAtom":
        return cls("exponential", beta, 1)

    @classmethod
    def erlang(cls, order: int, rho: float) -> "KernelAtom":
        return cls("erlang", rho, order)

    @property
    def signature(self) -> tuple[float, int]:
        """(rate, order) identifies the function regardless of ``kind``."""
        return (self.rate, self.order)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate, "order": self.order}


def kernel_eval(atom: KernelAtom, t):
    """Density value; 0 for ``t < 0``. Accepts scalars or arrays."""
    t_arr = np.asarray(t, dtype=float)
    j, r = atom.order, atom.rate
    out = np.zeros_like(t_arr)
    pos = t_arr > 0
    if j == 1:
        out[pos] = r * np.exp(-r * t_arr[pos])
        out[t_arr == 0] = r
    else:
        tp = t_arr[pos]
        # log-space to keep rho**j / (j-1)! finite for large orders
        out[pos] = np.exp(j * np.log(r) + (j - 1) * np.log(tp) - gammaln(j) - r * tp)
    return out if out.ndim else float(out)


def kernel_cdf(atom: KernelAtom, t):
    """Integral of the kernel over ``[0, t]``."""
    t_arr = np.clip(np.asarray(t, dtype=float), 0.0, None)
    out = gammainc(atom.order, atom.rate * t_arr)
    return out if np.ndim(out) else float(out)


def kernel_laplace(atom: KernelAtom, s):
    """Laplace transform ``(rate / (s + rate))**order`` at complex ``s``."""
    s_arr = np.asarray(s, dtype=complex)
    den = s_arr + atom.rate
    if np.any(den == 0):
        raise PoleError(f"s = {-atom.rate} is a pole of {atom}")
    out = (atom.rate / den) ** atom.order
    return out if out.ndim else complex(out)


def kernel_first_moment(atom: KernelAtom) -> float:
    """Mean of the kernel density, i.e. ``-d/ds`` of its transform at 0."""
    return atom.order / atom.rate


@dataclass(frozen=True, eq=False)
class BasisFamily:
    """Ordered family of distinct atoms.

    ``t0`` is the minimal affine-independence horizon; it is zero for every
    family of distinct exponential/Erlang atoms, which is the only kind this
    class admits.
    """

    atoms: tuple[KernelAtom, ...]
    t0: float = field(default=0.0, init=False)

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not all(isinstance(a, KernelAtom) for a in atoms):
            raise ConfigError("basis atoms must be KernelAtom instances")
        seen = set()
        for a in atoms:
            if a.signature in seen:
                raise ConfigError(f"duplicate kernel atom {a}")
            seen.add(a.signature)
        object.__setattr__(self, "atoms", atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    def __eq__(self, other) -> bool:
        return isinstance(other, BasisFamily) and [a.signature for a in self] == [
            a.signature for a in other
        ]

    def __hash__(self) -> int:
        return hash(tuple(a.signature for a in self))

    @classmethod
    def erlang(cls, rho: float, order: int) -> "BasisFamily":
        """Hawkes-Laguerre (Erlang) family of orders ``1..order``."""
        return cls(tuple(KernelAtom.erlang(j, rho) for j in range(1, order + 1)))

    @classmethod
    def exponentials(cls, rates: Iterable[float]) -> "BasisFamily":
        return cls(tuple(KernelAtom.exponential(b) for b in rates))

    @classmethod
    def from_config(cls, items: Sequence[dict]) -> "BasisFamily":
        try:
            return cls(
                tuple(
                    KernelAtom(it["kind"], float(it["rate"]), int(it.get("order", 1)))
                    for it in items
                )
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad basis description: {exc}") from exc

    def to_config(self) -> list[dict]:
        return [a.to_dict() for a in self]

    @property
    def size(self) -> int:
        return len(self.atoms)

    def eval(self, t) -> np.ndarray:
        """Kernel values, shape ``t.shape + (P,)``."""
        t = np.asarray(t, dtype=float)
        return np.stack([np.asarray(kernel_eval(a, t)) for a in self], axis=-1)

    def cdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.stack([np.asarray(kernel_cdf(a, t)) for a in self], axis=-1)

    def laplace(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        return np.stack([np.asarray(kernel_laplace(a, s)) for a in self], axis=-1)

    def fourier(self, omega) -> np.ndarray:
        return self.laplace(1j * np.asarray(omega, dtype=float))

    @property
    def first_moments(self) -> np.ndarray:
        return np.array([kernel_first_moment(a) for a in self])

    @property
    def max_rate(self) -> float:
        return max(a.rate for a in self)

    @property
    def min_rate(self) -> float:
        return min(a.rate for a in self)

    @cached_property
    def chains(self) -> "ChainLayout":
        return ChainLayout.from_atoms(self.atoms)


@dataclass(frozen=True, eq=False)
class ChainLayout:
    """Flattened Erlang-chain state layout used by the numba kernels.

    ``rates[c]`` is the rate of chain ``c`` whose coordinates occupy
    ``state[starts[c]:starts[c+1]]``; atom ``p`` reads ``state[atom_index[p]]``.
    """

    rates: np.ndarray
    starts: np.ndarray
    atom_index: np.ndarray

    @classmethod
    def from_atoms(cls, atoms: Sequence[KernelAtom]) -> "ChainLayout":
        depth: dict[float, int] = {}
        for a in atoms:
            depth[a.rate] = max(depth.get(a.rate, 0), a.order)
        rates = sorted(depth)
        starts = np.zeros(len(rates) + 1, dtype=np.int64)
        for c, r in enumerate(rates):
            starts[c + 1] = starts[c] + depth[r]
        offset = {r: starts[c] for c, r in enumerate(rates)}
        index = np.array([offset[a.rate] + a.order - 1 for a in atoms], dtype=np.int64)
        return cls(np.array(rates, dtype=float), starts, index)

    @cached_property
    def atom_chain_start(self) -> np.ndarray:
        """First state index of the chain holding each atom."""
        c = np.searchsorted(self.starts, self.atom_index, side="right") - 1
        return np.ascontiguousarray(self.starts[c], dtype=np.int64)

    @property
    def state_size(self) -> int:
        return int(self.starts[-1])


@dataclass(frozen=True, eq=False)
class Hir:
    """Hawkes impulse response ``phi(t) = weights . q(t)``."""

    basis: BasisFamily
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != self.basis.size:
            raise ConfigError(
                f"{w.shape[0]} weights given for a basis of {self.basis.size} atoms"
            )
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def first_moment(self) -> float:
        """``int t phi(t) dt``."""
        return float(self.weights @ self.basis.first_moments)

    def eval(self, t):
        return hir_eval(self, t)

    def fourier(self, omega):
        return hir_fourier(self, omega)

    def laplace(self, s):
        return self.basis.laplace(s) @ self.weights


def hir_eval(hir: Hir, t):
    out = hir.basis.eval(t) @ hir.weights
    return out if np.ndim(out) else float(out)


def hir_fourier(hir: Hir, omega):
    out = hir.basis.fourier(omega) @ hir.weights
    return out if np.ndim(out) else complex(out)


def hir_min_value(hir: Hir, t_max: float, dt: float) -> float:
    """Minimum of the HIR over the grid ``dt, 2 dt, ..., t_max``."""
    if t_max <= 0 or dt <= 0:
        raise ConfigError("t_max and dt must be positive")
    n = int(np.floor(t_max / dt + 1e-9))
    grid = dt * np.arange(1, max(n, 1) + 1)
    return float(np.min(hir_eval(hir, grid)))


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Linear Hawkes model: background rate plus HIR."""

    hir: Hir
    background: float

    def __post_init__(self):
        if not np.isfinite(self.background) or self.background <= 0:
            raise ConfigError(f"background rate must be positive, got {self.background}")
        object.__setattr__(self, "background", float(self.background))

    @classmethod
    def from_atoms(cls, atoms: Sequence[KernelAtom], weights, background: float) -> "ModelParams":
        return cls(Hir(BasisFamily(tuple(atoms)), np.asarray(weights, float)), background)

    @classmethod
    def poisson(cls, rate: float) -> "ModelParams":
        return cls(Hir(BasisFamily(()), np.zeros(0)), rate)

    @property
    def basis(self) -> BasisFamily:
        return self.hir.basis

    @property
    def weights(self) -> np.ndarray:
        return self.hir.weights

    @property
    def branching_ratio(self) -> float:
        return self.hir.mass

    @property
    def expected_rate(self) -> float:
        """Stationary rate ``c / (1 - Gamma)``."""
        self.require_stable()
        return self.background / (1.0 - self.branching_ratio)

    @property
    def theta(self) -> np.ndarray:
        return np.append(self.weights, self.background)

    @property
    def is_simulable(self) -> bool:
        return bool(np.all(self.weights >= 0) and self.branching_ratio < 1.0)

    def require_stable(self):
        if self.branching_ratio >= 1.0:
            raise StabilityError(f"branching ratio {self.branching_ratio} >= 1")

    def require_simulable(self):
        self.require_stable()
        if np.any(self.weights < 0):
            raise StabilityError("negative HIR weights cannot be simulated by thinning")

    def to_config(self) -> dict:
        return {
            "background": self.background,
            "atoms": self.basis.to_config(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "ModelParams":
        try:
            basis = BasisFamily.from_config(cfg.get("atoms", []))
            return cls(Hir(basis, np.asarray(cfg.get("weights", []), float)), float(cfg["background"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad model description: {exc}") from exc


def reference_model() -> ModelParams:
    """Three-exponential benchmark: c0=1, beta=(2, 6, 16), alpha=(0.3, 0.2, 0.2)."""
    return ModelParams(
        Hir(BasisFamily.exponentials([2.0, 6.0, 16.0]), np.array([0.3, 0.2, 0.2])), 1.0
    )
