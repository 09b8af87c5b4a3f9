"""Joint face mesh and landmark regression with pose recovered by PnP.

Modules: geometry (poses, projection), topology (mesh connectivity),
losses (L1 vertex, edge and landmark losses), pnp (DLT + Levenberg-Marquardt),
metrics (camera-space reconstruction error), synth (synthetic faces),
regressor (small joint-output network), cli.
"""

from .errors import FaceReconError, InputError, NumericalError
from .geometry import CameraIntrinsics, LandmarkSet2D, Pose6DoF, VertexSet
from .topology import FaceTopology

__all__ = [
    "CameraIntrinsics",
    "FaceReconError",
    "FaceTopology",
    "InputError",
    "LandmarkSet2D",
    "NumericalError",
    "Pose6DoF",
    "VertexSet",
]
__version__ = "0.1.0"
