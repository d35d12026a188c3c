from importlib import metadata

from .config_reader import ConfigReader, load_experiment_config  # noqa: F401
from .dynamics_sim import NoiseSpec, SimConfig, propagate_truth  # noqa: F401
from .error_analysis import alignment_transform, error_vector, metrics  # noqa: F401
from .gain_synthesis import build_lti, decompose_gains, place_poles  # noqa: F401
from .lie_core import GroupElement, compose, exp_so3, inverse  # noqa: F401
from .log import Timer, setup_logging  # noqa: F401
from .observer_core import ObserverGains, ObserverState, step  # noqa: F401

__version__: str = metadata.version("lgslam")
