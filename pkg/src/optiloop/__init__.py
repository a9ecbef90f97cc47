"""Energy-aware joint VNF placement, node activation and routing."""

from optiloop.errors import (
    BudgetExceeded,
    CyclicLogicalGraph,
    DisconnectedTopology,
    InconsistentPolicy,
    InfeasibleDemand,
    ModelError,
    NonConvergence,
    NumericalFailure,
    OptiLoopError,
    SchemaViolation,
)
from optiloop.model import (
    EnergyModel,
    LinkSpec,
    LogicalGraph,
    PhysicalGraph,
    Solution,
    derive_logical_flows,
    energy_breakdown,
    total_energy,
)

__version__ = "0.1.0"
