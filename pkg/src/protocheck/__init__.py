"""protocheck: a workbench for checking authentication protocols.

Three engines over one protocol description:

- ``checker``: bounded state-space search against a network attacker;
  finds shortest counterexample traces to secrecy and agreement goals.
- ``ban``: belief-logic derivation of what each principal is entitled to
  believe after a run, with an audit of which assumptions carry the load.
- ``strands``: causal bundles lifted from traces, origination analysis,
  and the responder's agreement guarantee.

The ``cli`` module ties them together behind one command.
"""

from .terms import (
    AgentName,
    AsymEnc,
    Nonce,
    Pair,
    PrivKey,
    PubKey,
    SymEnc,
    SymKey,
    TermError,
    TermSyntaxError,
    format_term,
    parse_term,
)
from .intruder import KnowledgeSet, analz_close, can_synthesize, knowledge, observe
from .dsl import DslParseError, InexecutabilityError, ProtocolError, ProtocolSpec, parse, parse_file
from .checker import (
    AttackReport,
    Bounds,
    BoundsError,
    BudgetExceededError,
    Event,
    Exhausted,
    ReplayError,
    honest_trace,
    instantiate,
    replay_trace,
    search,
)

__version__ = "0.1.0"

__all__ = [
    "AgentName", "Nonce", "SymKey", "PubKey", "PrivKey", "Pair", "AsymEnc", "SymEnc",
    "TermError", "TermSyntaxError", "parse_term", "format_term",
    "KnowledgeSet", "knowledge", "analz_close", "can_synthesize", "observe",
    "ProtocolSpec", "ProtocolError", "DslParseError", "InexecutabilityError",
    "parse", "parse_file",
    "Bounds", "BoundsError", "BudgetExceededError", "ReplayError",
    "Event", "AttackReport", "Exhausted",
    "search", "instantiate", "replay_trace", "honest_trace",
    "__version__",
]
