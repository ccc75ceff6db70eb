from importlib.metadata import PackageNotFoundError, version

from .config import ExperimentConfig as ExperimentConfig
from .embedding import cca as cca
from .embedding import classical_mds as classical_mds
from .errors import SensorimotorError as SensorimotorError
from .errors import SensorimotorWarning as SensorimotorWarning
from .kernel_sampler import KernelManifold as KernelManifold
from .kernel_sampler import sample_manifold as sample_manifold
from .kinematics import RetinaPose as RetinaPose
from .kinematics import WorkingSpace as WorkingSpace
from .kinematics import forward_kinematics as forward_kinematics
from .metric import DistanceMatrix as DistanceMatrix
from .metric import distance_matrix as distance_matrix
from .metric import hausdorff as hausdorff
from .progress import StageMeter as StageMeter
from .sensor import Environment as Environment
from .sensor import retina_response as retina_response

try:
    __version__ = version("sensorimotor")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"
