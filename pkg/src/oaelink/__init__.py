"""Open Atomic Ethernet link semantics: FSM, indefinite timestamps, KBP registers, simulator."""

from .analysis import check_invariants, dco_project, relation_matrix
from .ilt import CausalRelation, TensorClock
from .link_fsm import EndpointFsm, EventKind, LinkEvent, LinkState, step
from .netsim import LinkParams, Scenario, Simulator, pif_condition, run
from .trace import Trace

__version__ = "0.1.0"

__all__ = [
    "CausalRelation",
    "EndpointFsm",
    "EventKind",
    "LinkEvent",
    "LinkParams",
    "LinkState",
    "Scenario",
    "Simulator",
    "TensorClock",
    "Trace",
    "check_invariants",
    "dco_project",
    "pif_condition",
    "relation_matrix",
    "run",
    "step",
]
