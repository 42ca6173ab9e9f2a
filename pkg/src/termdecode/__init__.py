"""Terminology-constrained beam search over finite-state acceptors."""

from termdecode.acceptor import (
    Acceptor,
    Arc,
    ConstraintSpec,
    Label,
    Span,
    State,
    accepts,
    active_arcs,
    build_acceptor,
    step_state,
    to_dot,
)

__version__ = "0.1.0"

__all__ = [
    "Acceptor",
    "Arc",
    "ConstraintSpec",
    "Label",
    "Span",
    "State",
    "accepts",
    "active_arcs",
    "build_acceptor",
    "step_state",
    "to_dot",
]
