"""Batch pipeline that reconstructs coordinated cyber-physical attacks on power grids.

The package turns raw cyber alarm logs and PMU measurement traces into
frequent coordinated attack patterns in three stages: per-attacker cyber
attack sequence recognition, physical attack event classification, and
temporal-topological pattern mining.
"""

__version__ = "0.1.0"

from cpsmine.topology import ComponentId, TopologyMap, load_topology

__all__ = ["ComponentId", "TopologyMap", "load_topology", "__version__"]
