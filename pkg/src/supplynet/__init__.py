"""Supply-network reconstruction from inter-firm communication data and
economic systemic risk cascades on the reconstructed networks."""
from .model import (
    LEONTIEF,
    LINEAR,
    CommunicationNetwork,
    FirmRecord,
    SectorFlowTable,
    SupplyNetwork,
    ValidationError,
    build_supply_network,
    induced_subgraph,
    regime_for_sector,
)

__version__ = "0.1.0"
