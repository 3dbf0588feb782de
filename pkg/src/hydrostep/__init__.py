"""Velocity-level time stepping with hydroelastic pressure-field contact."""
from .contact_surface import (POLYGONAL, TRIANGULATED, ContactPolygon, ContactSurface,
                              compute_contact_surface, triangulate)
from .discrete_contact import (ConstraintSet, ContactConstraint, DissipationModel,
                               effective_gradient, polygon_to_constraint, surface_constraints)
from .mesh import Bvh, RigidPose, SurfaceMesh, TetMesh, build_bvh, candidate_pairs
from .multibody import RigidBody, SystemState, make_state
from .pressure_field import (PressureMesh, RigidGeometry, make_box, make_cylinder,
                             make_half_space_slab, make_rigid_box, make_rigid_plane)
from .stepper import SolverConfig, SolverError, StepDiagnostics, World, solve_velocities, step

__all__ = [
    "POLYGONAL", "TRIANGULATED", "ContactPolygon", "ContactSurface", "compute_contact_surface",
    "triangulate", "ConstraintSet", "ContactConstraint", "DissipationModel", "effective_gradient",
    "polygon_to_constraint", "surface_constraints", "Bvh", "RigidPose", "SurfaceMesh", "TetMesh",
    "build_bvh", "candidate_pairs", "RigidBody", "SystemState", "make_state", "PressureMesh",
    "RigidGeometry", "make_box", "make_cylinder", "make_half_space_slab", "make_rigid_box",
    "make_rigid_plane", "SolverConfig", "SolverError", "StepDiagnostics", "World",
    "solve_velocities", "step",
]
__version__ = "0.1.0"
