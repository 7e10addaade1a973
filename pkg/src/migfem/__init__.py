"""Blended local polynomial reconstructions on C0 triangle meshes.

Nodal patches carry constrained weighted least-squares fits of the shared
nodal unknowns; a linear partition of unity blends them into a global field
whose derivatives are taken patch-wise.  On top of that sit strong-form
collocation solvers (with local absorption of derivative boundary data),
a symmetric-Nitsche Galerkin solver, and the study harness that measures
smoothness, convergence, conditioning, and admissibility diagnostics.
"""

from .basis import basis_dim, eval_basis, eval_basis_table
from .cases import get_case
from .field import Discretization, GlobalField, eval_in_element, eval_leibniz_derivatives
from .mesh import (
    Mesh,
    Topology,
    build_structured_tri_mesh,
    compute_topology,
    load_mesh_text,
    perturb_interior_nodes,
    save_mesh_text,
)
from .patches import build_all_patches, build_patch, compact_layer_depth, default_layer_depth
from .quadrature import triangle_quadrature
from .recon import (
    build_all_patch_maps,
    build_ba_cwls_map,
    build_cwls_map,
    patch_coefficients,
)
from .norms import error_norms, max_errors
from .smoothness import compute_jumps, fit_rate
from .strong import ProblemSpec, solve_problem
from .study import StudyConfig, normalize_config, run_study, write_study_csv
from .weak import WeakOptions, solve_weak

__version__ = "0.1.0"

__all__ = [
    "Mesh",
    "Topology",
    "build_structured_tri_mesh",
    "compute_topology",
    "perturb_interior_nodes",
    "save_mesh_text",
    "load_mesh_text",
    "basis_dim",
    "eval_basis",
    "eval_basis_table",
    "triangle_quadrature",
    "build_patch",
    "build_all_patches",
    "default_layer_depth",
    "compact_layer_depth",
    "build_cwls_map",
    "build_ba_cwls_map",
    "build_all_patch_maps",
    "patch_coefficients",
    "Discretization",
    "GlobalField",
    "eval_in_element",
    "eval_leibniz_derivatives",
    "compute_jumps",
    "fit_rate",
    "get_case",
    "error_norms",
    "max_errors",
    "ProblemSpec",
    "solve_problem",
    "WeakOptions",
    "solve_weak",
    "StudyConfig",
    "normalize_config",
    "run_study",
    "write_study_csv",
    "__version__",
]
