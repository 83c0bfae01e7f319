"""relufix: provable repair of small ReLU networks with an external SMT solver."""

from .datagen import Dataset, LabeledPoint, MixtureSpec, Rect
from .encoder import RobustnessProperty, SoftConstraint, SoftConstraintSet
from .network import LayerParams, Network, WeightId, make_network
from .repair import RepairConfig, SearchState, TrialRecord
from .smtio import Script, SolverConfig, SolverVerdict, Status
from .trainer import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "LabeledPoint",
    "LayerParams",
    "MixtureSpec",
    "Network",
    "Rect",
    "RepairConfig",
    "RobustnessProperty",
    "Script",
    "SearchState",
    "SoftConstraint",
    "SoftConstraintSet",
    "SolverConfig",
    "SolverVerdict",
    "Status",
    "TrainConfig",
    "TrialRecord",
    "WeightId",
    "make_network",
    "__version__",
]
