"""PEAR: a deterministic simulator for a loop-free, provenance-enforcing,
address-swapping datagram forwarding plane, with a classic ttl-decrement
baseline for contrast."""

from .addressing import (
    AddressExhausted,
    IntervalError,
    ListTable,
    LocalInterval,
    Prefix,
    SecretOffset,
    map_in,
    map_out,
)
from .datapath import Action, Datagram, Mode, Reason, RouterState, VerdictRecord
from .scenario import Scenario, ScenarioError, load_scenario
from .simnet import (
    HopTrace,
    InvariantError,
    TraceEntry,
    TracebackResult,
    World,
    build_world,
    check_invariants,
    host_send,
    metrics,
    observe_link,
    run,
    traceback,
)
from .tables import Drt, Fib, Hrt

__all__ = [
    "Action",
    "AddressExhausted",
    "Datagram",
    "Drt",
    "Fib",
    "HopTrace",
    "Hrt",
    "IntervalError",
    "InvariantError",
    "ListTable",
    "LocalInterval",
    "Mode",
    "Prefix",
    "Reason",
    "RouterState",
    "Scenario",
    "ScenarioError",
    "SecretOffset",
    "TraceEntry",
    "TracebackResult",
    "VerdictRecord",
    "World",
    "build_world",
    "check_invariants",
    "host_send",
    "load_scenario",
    "map_in",
    "map_out",
    "metrics",
    "observe_link",
    "run",
    "traceback",
]

__version__ = "0.1.0"
