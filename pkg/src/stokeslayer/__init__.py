"""Layer-potential machinery for the 2D unsteady Stokes Dirichlet problem.

Subpackages cover discrete parabolic Holder/Dini norm estimation, whole-space
heat potentials, periodic-box Helmholtz projection, boundary layer potentials
and their second-kind systems, a boundary-regularity divergence demo, and a
coupled chemotaxis-fluid fixed-point scheme.
"""

__version__ = "0.1.0"

from .fields import DiniModulus, SampledField
from .norms import (dini_integral, dini_seminorm, mixed_boundary_seminorm,
                    parabolic_norm, space_seminorm, time_seminorm)

__all__ = [
    "DiniModulus", "SampledField",
    "dini_integral", "dini_seminorm", "mixed_boundary_seminorm",
    "parabolic_norm", "space_seminorm", "time_seminorm",
]
