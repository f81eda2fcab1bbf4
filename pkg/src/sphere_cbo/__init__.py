"""
Consensus-based global optimization on the unit hypersphere.

Agents on S^{d-1} drift towards a softmin-weighted consensus point and are
perturbed by (an)isotropic noise projected onto the tangent space; see
:func:`sphere_cbo.dynamics.run` for the full loop.
"""

from .consensus import ConsensusPoint, consensus_point, partition_batches, select_batch
from .dynamics import RunReport, SolverParams, run, step_anisotropic, step_isotropic
from .errors import SphereCBOError
from .gradient import GkvParams, armijo_linesearch, gkv_inject, tangential_gradient
from .objectives import (
    Objective,
    gaussian_frame,
    haystack,
    make_test_function,
    pca_energy,
    phase_retrieval_risk,
)
from .sphere import ensemble_stats, project_tangent, renormalize, sample_uniform, sample_vmf

__version__ = "0.1.0"
