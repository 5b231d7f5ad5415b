"""Drone survey routing over damaged road networks.

Subpackages are imported lazily by callers; the top level only re-exports
the names most scripts touch.
"""

from .errors import SkysweepError
from .instancegen import (AttributeConfig, GenConfig, Instance, SampleConfig,
                          generate_instance, parse_variant)
from .network import RoadNetwork, TransformedNetwork, build_road_network, transform

__all__ = [
    "SkysweepError",
    "AttributeConfig", "GenConfig", "Instance", "SampleConfig",
    "generate_instance", "parse_variant",
    "RoadNetwork", "TransformedNetwork", "build_road_network", "transform",
]

__version__ = "0.1.0"
