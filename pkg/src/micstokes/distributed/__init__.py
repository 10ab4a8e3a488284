"""Domain-decomposed marker transfers over an in-process rank transport."""
from .ops import (MigrationError, distributed_advect_step, distributed_markers_to_grid,
                  halo_exchange, halo_reduce, local_grid_to_markers, local_stencil,
                  message_counts, migrate_markers)
from .topology import (DIRECTIONS, OFFSETS, OPPOSITE, ConfigurationError, RankTopology,
                       Subdomain, build_topology, decompose)
from .transport import (CommunicationError, Endpoint, InProcessTransport, decode, encode,
                        run_ranks)

__all__ = [
    "MigrationError", "distributed_advect_step", "distributed_markers_to_grid",
    "halo_exchange", "halo_reduce", "local_grid_to_markers", "local_stencil",
    "message_counts", "migrate_markers", "DIRECTIONS", "OFFSETS", "OPPOSITE",
    "ConfigurationError", "RankTopology", "Subdomain", "build_topology", "decompose",
    "CommunicationError", "Endpoint", "InProcessTransport", "decode", "encode", "run_ranks",
]
