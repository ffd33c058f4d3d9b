"""Multi-step kernel interpolation with per-stage re-scaling and numerical error bounds."""
from .design import Design, NestedDesign, generate_net, nest, verify_net
from .errors import (
    ArgumentError,
    CapabilityError,
    ConditioningError,
    FitError,
    FormatError,
    InfeasibleError,
    MsemuError,
    ResourceError,
    SelectionError,
    StateError,
    UnsupportedFamilyError,
)
from .kernel import Kernel, RescaledKernel, Rescaling
from .multistep import MultiStepModel, fit, load_model, save_model
from .select import SelectionSpec, optimize_theta, stage_selector

__version__ = "0.1.0"

__all__ = [
    "ArgumentError", "CapabilityError", "ConditioningError", "Design", "FitError", "FormatError",
    "InfeasibleError", "Kernel", "MsemuError", "MultiStepModel", "NestedDesign", "RescaledKernel",
    "Rescaling", "ResourceError", "SelectionError", "SelectionSpec", "StateError",
    "UnsupportedFamilyError", "fit", "generate_net", "load_model", "nest", "optimize_theta",
    "save_model", "stage_selector", "verify_net",
]
