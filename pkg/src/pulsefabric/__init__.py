"""Discrete-event simulator of inter-chip pulse communication: spiking-chip event
sources, per-FPGA deadline/lookup/aggregation pipelines, a 3D-torus packet fabric,
and the notification-synchronized host transport."""

from .chip import Chip, ChipConfig, ChipEvent, NonMonotonicSchedule, UnknownNeuron
from .engine import Scheduler, SchedulingInPast, SimTime, seeded_rng
from .fabric import (
    Fabric,
    HOST_ADDRESS,
    InvalidNode,
    LinkConfig,
    LinkModel,
    NoRoute,
    TorusTopology,
    route_next_hop,
    route_path,
)
from .pipeline import (
    BucketConfig,
    DuplicateSource,
    MisroutedPacket,
    Pipeline,
    PulsePacket,
    RouteEntry,
    RoutedEvent,
    expand_timestamp,
)
from .registers import RegisterFile, UnknownRegister
from .scenario import (
    ConfigError,
    InvariantViolation,
    Scenario,
    ScenarioConfig,
    load_config,
    parse_config,
    run_scenario,
    sweep_aggregation,
    validate_config,
)
from .transport import (
    FpgaEndpoint,
    Host,
    Notification,
    PayloadTooLarge,
    RingBuffer,
    RmaMessage,
    UnregisteredRegion,
)

__version__ = "0.1.0"
