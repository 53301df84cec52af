"""Transport densities and Lax-Hopf fields for sandpiles on polygonal trays.

The package solves the stationary table problem on a polygon with a convex
slope constraint: the Lax-Hopf function ``u_phi``, its projection rays and
singular sets, the transport density ``v_f``, and uniqueness diagnostics.
"""

from .config import ScenarioConfig, preset_config
from .convex import ConvexBody, gauge, polar_gauge
from .domain import PolygonalDomain, sample_boundary, validate_datum
from .lax_hopf import solve_uf, solve_uphi
from .pipeline import run_pipeline
from .rays import detect_singular_sets, ray_field
from .transport import solve_transport

__all__ = [
    "ConvexBody", "PolygonalDomain", "ScenarioConfig", "detect_singular_sets", "gauge",
    "polar_gauge", "preset_config", "ray_field", "run_pipeline", "sample_boundary",
    "solve_transport", "solve_uf", "solve_uphi", "validate_datum",
]
