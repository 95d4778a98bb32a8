from .dual import DualState, HierarchyPath, OdeState, OdeTrajectory, Z0ExtinctionSummary
from .graphical import GraphicalElements, TypeConfig
from .population import ClickStatistics, PopState, SimOutput
from .profile import EquilibriumMasses, ProfileWeights, ShapeClass, ShapeKind
from .yule import ClassPopulation, MinLoadSamples, YuleSample

# Ensure all models are available
__all__ = [
    "ClassPopulation",
    "ClickStatistics",
    "DualState",
    "EquilibriumMasses",
    "GraphicalElements",
    "HierarchyPath",
    "MinLoadSamples",
    "OdeState",
    "OdeTrajectory",
    "PopState",
    "ProfileWeights",
    "ShapeClass",
    "ShapeKind",
    "SimOutput",
    "TypeConfig",
    "YuleSample",
    "Z0ExtinctionSummary",
]
