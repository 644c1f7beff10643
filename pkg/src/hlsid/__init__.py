"""Least-squares identification of linear Hawkes processes with prescribed kernel bases."""

__version__ = "0.1.0"

from .basis import BasisFamily, Hir, KernelAtom, ModelParams, reference_model  # noqa: E402
from .errors import (  # noqa: E402
    ConfigError,
    HlsidError,
    NotIdentifiable,
    NumericalError,
)
from .lsfit import FitResult, filter_accumulate, ls_fit  # noqa: E402
from .simulate import EventSeries, SimConfig, thin_simulate  # noqa: E402
from .spectral import SpectralGrid, TimeGrid, pseudo_true  # noqa: E402

__all__ = [
    "BasisFamily",
    "ConfigError",
    "EventSeries",
    "FitResult",
    "Hir",
    "HlsidError",
    "KernelAtom",
    "ModelParams",
    "NotIdentifiable",
    "NumericalError",
    "SimConfig",
    "SpectralGrid",
    "TimeGrid",
    "filter_accumulate",
    "ls_fit",
    "pseudo_true",
    "reference_model",
    "thin_simulate",
]
