"""Split K-d tree approximate neighbor search with a banked-SRAM timing
model, streaming DRAM accounting, and energy decomposition."""

from .errors import (CapacityError, CrescentError, InvalidArgument, ParseError,
                     ValidationError)
from .geometry import PointCloud, QueryBatch, generate_cloud, load_cloud, save_cloud
from .kdtree import (KdNode, KdTree, SplitTree, build_kdtree, node_level,
                     permissible_ht_range, split_tree)
from .exact_search import NeighborList, brute_force_search, kdtree_search
from .split_search import (NeighborMatrix, RoutedQueries, SearchConfig,
                           approximate_search, recall, route_queries,
                           subtree_search)
from .memsim import (BankConfig, PEConfig, SimStats, arbitration, bank_of,
                     simulate_search, skipped_fraction)
from .aggregate import GatherResult, gather, gather_distortion
from .traffic import (EnergyModel, QueueConfig, TrafficReport, account_split_tree,
                      baseline_exhaustive, baseline_reload, energy_report,
                      energy_total)

__version__ = "0.1.0"
