"""conplan: connectivity-aware start/goal selection for constrained planning.

The toolkit learns an embedding of robot configuration spaces in which
feature-space distance predicts whether two configurations are mutually
reachable, and uses it to pick start/goal IK pairs before running a
projection-based bidirectional RRT on the constraint manifold.

Numerical hot loops run on compiled Cython kernels when built, with a pure
NumPy fallback (see ``conplan._kernels``).
"""

__version__ = "0.1.0"

from ._kernels import available_backends, kernel_backend  # noqa: F401
from .geometry import PlanarPose, wrap_angle  # noqa: F401
from .kinematics import ChainSpec  # noqa: F401
from .constraints import ConstraintSpec, SystemSpec  # noqa: F401
