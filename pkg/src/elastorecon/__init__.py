"""Recovery of the two isotropic elastic moduli from interior displacement fields.

Two measured displacement fields, differentiated by local L2 projection onto
coarse broken polynomial spaces, define a first-order gradient system for the
moduli pair. The pair is recovered by least squares on a Gauss-Lobatto
spectral-element space, or pointwise by integration along curves.
"""
__version__ = "0.1.0"

from ._accel import HAVE_NUMBA, backend
from .differentiation import (ProjectionPlan, choose_mesh_sizes, hessian_from_projection, l2_project,
                              strain_from_projection)
from .fem import Field, evaluate_field, interpolate
from .forward import (Bump, DirichletBC, MaterialField, ModuliSpec, frequency_bcs, prototype_fields, solve_forward,
                      static_bcs, synthesize_moduli)
from .measurements import AliasingWarning, add_noise, noise_profile, read_field, write_field
from .mesh import FeSpace, MeshSpec, build_mesh
from .operators import GradientSystemData, InvertibilityError, build_gradient_system
from .reconstruction import (CurveSpec, GradientSystemSampler, assemble_normal_system, build_lifting,
                             h1_relative_error, integrate_ode, reconstruct, solve_least_squares)
from .solvers import ConvergenceError, IndefiniteOperatorError, cg

__all__ = [
    "HAVE_NUMBA", "backend", "ProjectionPlan", "choose_mesh_sizes", "hessian_from_projection", "l2_project",
    "strain_from_projection", "Field", "evaluate_field", "interpolate", "Bump", "DirichletBC", "MaterialField",
    "ModuliSpec", "frequency_bcs", "prototype_fields", "solve_forward", "static_bcs", "synthesize_moduli",
    "AliasingWarning", "add_noise", "noise_profile", "read_field", "write_field", "FeSpace", "MeshSpec",
    "build_mesh", "GradientSystemData", "InvertibilityError", "build_gradient_system", "CurveSpec",
    "GradientSystemSampler", "assemble_normal_system", "build_lifting", "h1_relative_error", "integrate_ode",
    "reconstruct", "solve_least_squares", "ConvergenceError", "IndefiniteOperatorError", "cg", "__version__",
]
