"""Numerical laboratory for the insecurity of smooth convex plane billiards."""

__version__ = "0.1.0"

from .billiard_map import PhasePoint, next_collision, orbit, symplectic_check
from .curve import ArcSpec, Curve, CurveSpec, arc_coordinates, geometry_at, make_curve
from .insecurity import (
    BlockerSet,
    EscapeCertificate,
    Irrational,
    Rational,
    build_moduli,
    collision_bounds_check,
    compute_delta,
    equidistribution_scan,
    escape_search,
    verify_certificate,
)
from .lazutkin import SigmaMap, build_sigma, equipartition_points, hamiltonian_at, shift_consistency
from .trajectory import (
    Trajectory,
    brute_force_min,
    initial_guess,
    length_gradient,
    solve_min_polyline,
)

__all__ = [
    "ArcSpec", "BlockerSet", "Curve", "CurveSpec", "EscapeCertificate", "Irrational",
    "PhasePoint", "Rational", "SigmaMap", "Trajectory", "arc_coordinates", "brute_force_min",
    "build_moduli", "build_sigma", "collision_bounds_check", "compute_delta",
    "equidistribution_scan", "equipartition_points", "escape_search", "geometry_at",
    "hamiltonian_at", "initial_guess", "length_gradient", "make_curve", "next_collision",
    "orbit", "shift_consistency", "solve_min_polyline", "symplectic_check",
    "verify_certificate",
]
