from .engine import (MESSAGE_BUDGET, ParallelEngine, ParallelStepResult, StabilityConfig,
                     VelocityCheck, audit_messages, check_velocity_criterion, gather,
                     maybe_reorthonormalize, parallel_timestep, scatter)
from .partition import PUBLISHED_PLANS, PartitionPlan, plan_partitions
from .transport import (BoundaryMessage, Links, MessageKind, PipeEndpoint, ProcessTransport,
                        ProtocolError, QueueEndpoint, ThreadTransport, TransportError,
                        make_transport)
from .worker import OwnershipError, WorkerReport, WorkerState, sweeps_left_first, worker_timestep
