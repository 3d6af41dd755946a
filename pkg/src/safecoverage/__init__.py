"""Safe multi-agent coverage with Gaussian-process models of density and constraint."""
from .domain import GridDomain
from .gp import ConfidenceBounds, GpModel, KernelSpec

__all__ = ["GridDomain", "GpModel", "KernelSpec", "ConfidenceBounds"]
