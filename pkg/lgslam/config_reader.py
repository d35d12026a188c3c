"""
Read the experiment configuration. Every value is addressed by a
`section` and a `key` and looked up in a chain of readers; the first
reader that knows the value wins.

argparse arguments (`argparse`): either the generated `--section-key`
options or a mapping to other destinations:

.. code::

    mapping = {
        'noise.seed': 'seed'
    }

A python dictionary (`dictionary`):

.. code:: python

    {
        'sim':  {
            'n': 4
        }
    }

Environment variables (`environ`):

.. code:: shell

    export LGSLAM__output__dir=/tmp/run

INI file (`ini`):

.. code:: ini

    [sim]
    n = 15
    gravity = [0.0, 0.0, -9.81]

Values are converted with :func:`auto_type`, so lists are written as
Python literals. The defaults in :data:`CONFIG_READER_SPEC` reproduce the
simulation scenario of the circular trajectory with fifteen landmarks.
"""

import abc
import argparse
import ast
import configparser
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, TypedDict

import numpy as np

from .dynamics_sim import InvalidSimConfigError, NoiseSpec, SimConfig

logger = logging.getLogger(__name__)

ENVIRON_PREFIX = "LGSLAM"


class ConfigValueError(Exception):
    """Configuration value can’t be found."""


class IniReaderError(Exception):
    """Ini file not valid."""


class ConfigError(ValueError):
    """The configuration is incomplete or inconsistent."""


def validate_key(key: str) -> bool:
    """:param key: Validate the name of a section or a key."""
    if re.match(r"^[a-zA-Z0-9_]+$", key):
        return True
    raise ValueError(
        "The key “{}” contains invalid characters "
        "(allowed: a-zA-Z0-9_).".format(key)
    )


# Reader classes ##############################################################


class ReaderBase(object, metaclass=abc.ABCMeta):
    """Base class for all readers"""

    def _exception(self, msg: str):
        """:raises: ConfigValueError"""
        raise ConfigValueError(msg)

    @abc.abstractmethod
    def get(self, section: str, key: str) -> Any:
        raise NotImplementedError("A reader class must have a `get` method.")


Mapping = Dict[str, str]
"""A dictionary like this one: `{'section.key': 'dest'}`.
      `dest` is the property name of the `args` object."""


class KeySpec(TypedDict, total=False):
    description: str
    default: Any


Spec = Dict[str, Dict[str, KeySpec]]
"""A dictionary like this example:

.. code:: python

    spec = {
        'sim': {
            'n': {
                'description': 'Number of landmarks.',
                'default': 15,
            }
        }
    }
"""


class ArgparseReader(ReaderBase):
    """Read values from an `argparse` namespace. A mapped destination is
    tried first, then the destination `section_key` of the generated option
    `--section-key`. Attributes set to `None` count as missing.

    :param args: The parsed `argparse` object.
    :param mapping: A dictionary like this one: `{'section.key': 'dest'}`.
    """

    _mapping: Mapping

    def __init__(self, args: argparse.Namespace, mapping: Optional[Mapping] = None):
        self._args = args
        self._mapping = mapping or {}

    def get(self, section: str, key: str) -> Any:
        """
        :raises ConfigValueError: Configuration value couldn’t be found.
        """
        destinations: List[str] = []
        mapping_key = "{}.{}".format(section, key)
        if mapping_key in self._mapping:
            destinations.append(self._mapping[mapping_key])
        destinations.append("{}_{}".format(section, key).lower())

        for destination in destinations:
            value = getattr(self._args, destination, None)
            if value is not None:
                return value

        self._exception(
            "Configuration value could not be found by "
            "Argparse (section “{}” key “{}”).".format(section, key)
        )


class DictionaryReader(ReaderBase):
    """Values given in code, mostly by tests.

    :param dictionary: A nested dictionary.
    """

    def __init__(self, dictionary: Dict[str, Dict[str, Any]]):
        self._dictionary = dictionary

    def get(self, section: str, key: str) -> Any:
        try:
            return self._dictionary[section][key]
        except KeyError:
            self._exception(
                "In the dictionary is no value at dict[{}][{}]".format(section, key)
            )


class EnvironReader(ReaderBase):
    """Read configuration values from environment variables named
    `prefix__section__key`. Note the two following underscores.

    :param prefix: A environment prefix"""

    def __init__(self, prefix: Optional[str] = ENVIRON_PREFIX):
        self._prefix = prefix

    def get(self, section: str, key: str) -> Any:
        if self._prefix:
            name = "{}__{}__{}".format(self._prefix, section, key)
        else:
            name = "{}__{}".format(section, key)
        if name in os.environ:
            return os.environ[name]
        self._exception("Environment variable not found: {}".format(name))


class IniReader(ReaderBase):
    """Read configuration files in the INI format.

    :param path: The path of the INI file.

    :raises IniReaderError: If the file is missing or not valid INI.
    """

    def __init__(self, path: str):
        self._config = configparser.ConfigParser()
        if not path or not os.path.exists(path):
            raise IniReaderError(
                "Ini configuration path “{}” couldn’t be opened.".format(path)
            )
        try:
            with open(path) as ini_file:
                self._config.read_file(ini_file)
        except configparser.Error as error:
            raise IniReaderError(
                "Ini configuration “{}” is not valid: {}".format(path, error)
            ) from error

    def get(self, section: str, key: str) -> Any:
        try:
            return self._config[section][key]
        except KeyError:
            self._exception(
                "Configuration value could not be found "
                "(section “{}” key “{}”).".format(section, key)
            )

    def unknown_keys(self, spec: Spec) -> List[str]:
        """Keys of the file that the specification does not know."""
        unknown: List[str] = []
        for section in self._config.sections():
            for key in self._config[section]:
                if section not in spec or key not in spec[section]:
                    unknown.append("{}.{}".format(section, key))
        return unknown


class SpecReader(ReaderBase):
    """Read the default values from the `spec` (specification) dictionary.

    :param spec: The `spec` (specification) dictionary.
    """

    _spec: Spec

    def __init__(self, spec: Spec):
        self._spec = spec

    def get(self, section: str, key: str) -> Any:
        try:
            return self._spec[section][key]["default"]
        except KeyError:
            self._exception(
                "Configuration value could not be found "
                "(section “{}” key “{}”).".format(section, key)
            )


# Common code #################################################################


class ReaderSelector(ReaderBase):
    """Select for each get request which reader to use."""

    def __init__(self, *readers: ReaderBase):
        self.readers = readers
        """A list of readers."""

    def get(self, section: str, key: str) -> Any:
        validate_key(section)
        validate_key(key)
        for reader in self.readers:
            try:
                return reader.get(section, key)
            except ConfigValueError:
                pass
        raise ConfigError(
            "Configuration value could not be found "
            "(section “{}” key “{}”).".format(section, key)
        )


def auto_type(value: Any) -> Any:
    """Evaluate strings as Python literals; anything else, and strings that
    are no literal, pass unchanged."""
    if not isinstance(value, str):
        return value
    try:
        return ast.literal_eval(value)
    except (ValueError, SyntaxError):
        return value


class ClassInterfaceKey:
    def __init__(self, reader: ReaderBase, section: str):
        self._reader = reader
        self._section = section

    def __getattr__(self, name: str) -> Any:
        return auto_type(self._reader.get(self._section, name))


class ClassInterface:
    """Attribute access, `config.sim.n`."""

    def __init__(self, reader: ReaderBase):
        self._reader = reader

    def __getattr__(self, name: str) -> ClassInterfaceKey:
        return ClassInterfaceKey(self._reader, section=name)


def load_readers_by_keyword(**kwargs: Any) -> List[ReaderBase]:
    """Available readers: `argparse`, `dictionary`, `environ`, `ini` and
    `spec`. The order of the keywords is the lookup order. Keywords with the
    value `None` are skipped.

    :param tuple argparse: A tuple `(args, mapping)` or only the `argparse`
      object (Namespace).
    :param dict dictionary: A two dimensional nested dictionary
      `{'section': {'key': 'value'}}`
    :param str environ: The prefix of the environment variables.
    :param str ini: The path of the INI file.
    :param dict spec: The specification with the defaults.
    """
    readers: List[ReaderBase] = []
    for keyword, value in kwargs.items():
        if value is None:
            continue
        if keyword == "argparse":
            if isinstance(value, (tuple, list)):
                readers.append(ArgparseReader(args=value[0], mapping=value[1]))
            else:
                readers.append(ArgparseReader(args=value))
        elif keyword == "dictionary":
            readers.append(DictionaryReader(dictionary=value))
        elif keyword == "environ":
            readers.append(EnvironReader(prefix=value))
        elif keyword == "ini":
            readers.append(IniReader(path=value))
        elif keyword == "spec":
            readers.append(SpecReader(spec=value))
    return readers


class ConfigReader:
    """Look up values of a specification in a chain of readers given as
    keyword arguments, see :func:`load_readers_by_keyword`. The spec
    defaults are the last resort."""

    spec: Spec
    reader: ReaderBase

    def __init__(self, spec: Spec, **kwargs: Any):
        self.spec = spec
        """The specification dictionary."""

        self.reader = ReaderSelector(*load_readers_by_keyword(**kwargs, spec=spec))
        """:py:class:`ReaderSelector`"""

    def get_class_interface(self) -> ClassInterface:
        return ClassInterface(self.reader)


def spec_to_argparse(spec: Spec, parser: argparse.ArgumentParser) -> None:
    """Add one `--section-key` option per specified key. The options have
    no default, so unset options fall through to the next reader."""
    for section, keys in spec.items():
        group = parser.add_argument_group(
            title=section, description="Overrides of the [{}] section.".format(section)
        )
        for key, value in keys.items():
            argument = "--{}-{}".format(section, key).replace("_", "-")
            help_text = value.get("description", "")
            if "default" in value:
                help_text = "{} (default: {!r})".format(help_text, value["default"])
            group.add_argument(argument, help=help_text, metavar="VALUE")


# Experiment specification ####################################################

CONFIG_READER_SPEC: Spec = {
    "sim": {
        "n": {"description": "Number of landmarks.", "default": 15},
        "duration": {"description": "Simulated time in seconds.", "default": 60.0},
        "dt": {"description": "Integration step in seconds.", "default": 0.001},
        "gravity": {
            "description": "The gravity vector in m/s^2.",
            "default": [0.0, 0.0, -9.81],
        },
        "trajectory": {
            "description": "“circle” (analytic) or “twist” (constant inputs).",
            "default": "circle",
        },
        "twist_omega": {
            "description": "Angular velocity of the twist trajectory (rad/s).",
            "default": [0.0, 0.0, 0.5],
        },
        "twist_accel": {
            "description": "Specific force of the twist trajectory (m/s^2).",
            "default": [0.0, 0.0, 9.81],
        },
        "initial_position": {
            "description": "Start position of the twist trajectory (m).",
            "default": [0.0, 0.0, 0.0],
        },
        "initial_velocity": {
            "description": "Start velocity of the twist trajectory (m/s).",
            "default": [1.0, 0.0, 0.0],
        },
        "landmark_box": {
            "description": "Bounds (low, high) per axis of the landmark box (m).",
            "default": [[-10.0, 10.0], [-10.0, 10.0], [0.0, 5.0]],
        },
        "landmark_seed": {"description": "Seed of the landmark map.", "default": 0},
        "decimation": {
            "description": "Landmark measurements every that many steps.",
            "default": 1,
        },
    },
    "noise": {
        "enabled": {"description": "Corrupt the measurements.", "default": True},
        "var_omega": {"description": "Gyroscope variance per axis.", "default": 0.01},
        "var_accel": {
            "description": "Accelerometer variance per axis.",
            "default": 0.2,
        },
        "var_landmark": {
            "description": "Landmark measurement variance per axis.",
            "default": 0.1,
        },
        "seed": {"description": "Seed of the measurement noise.", "default": 1},
    },
    "observer": {
        "attitude_angle_deg": {
            "description": "Angle of the initial attitude estimate.",
            "default": 90.0,
        },
        "attitude_axis": {
            "description": "Axis of the initial attitude estimate (normalized).",
            "default": [1.0, 1.0, 1.0],
        },
    },
    "gains": {
        "eigenvalues": {
            "description": "The n+2 eigenvalues of A-LC; None cycles -1..-4.",
            "default": None,
        },
        "k_r": {"description": "Attitude gain k_R.", "default": 1.0},
        "k_p_mode": {
            "description": "K_p choice: zeros, ones or custom.",
            "default": "ones",
        },
        "k_p": {"description": "The custom K_p.", "default": None},
        "seed": {"description": "Seed of the pole placement.", "default": 0},
        "file": {
            "description": "A saved gain matrix L used instead of a design.",
            "default": None,
        },
    },
    "log": {
        "every": {"description": "Log every that many steps.", "default": 10},
        "level": {"description": "Threshold of the console log.", "default": "INFO"},
    },
    "output": {
        "dir": {"description": "Directory of the results.", "default": "output"},
    },
    "align": {
        "window": {
            "description": "Final fraction of the run used for the alignment.",
            "default": 0.1,
        },
    },
    "mc": {
        "runs": {"description": "Number of Monte Carlo runs.", "default": 100},
        "seed": {"description": "Master seed of the runs.", "default": 0},
        "dispersion": {
            "description": "Standard deviation of the initial translation errors.",
            "default": 1.0,
        },
        "duration": {"description": "Simulated time per run.", "default": 30.0},
        "dt": {
            "description": "Integration step per run; None uses sim.dt.",
            "default": None,
        },
        "workers": {
            "description": "Worker processes; 0 uses every CPU.",
            "default": 0,
        },
        "model": {
            "description": "“full” simulation or “reduced” error cascade.",
            "default": "full",
        },
        "noiseless": {"description": "Run without noise.", "default": True},
        "antipodal": {
            "description": "Start every run at g_breve = -g with x = 0, on the "
            "reduced model.",
            "default": False,
        },
        "cap": {
            "description": "Excluded angle (rad) around the antipodal attitude.",
            "default": 1e-3,
        },
        "rot_threshold_deg": {
            "description": "Largest rotation error of a converged run.",
            "default": 0.1,
        },
        "pos_threshold_m": {
            "description": "Largest position and landmark error of a converged run.",
            "default": 1e-3,
        },
    },
}

ARGPARSE_MAPPING: Mapping = {
    "output.dir": "out",
    "noise.seed": "seed",
    "noise.enabled": "noise_enabled_flag",
    "mc.runs": "runs",
}


# Experiment configuration ####################################################


@dataclass(frozen=True)
class GainSpec:
    eigenvalues: Optional[Tuple[complex, ...]] = None
    k_r: float = 1.0
    k_p_mode: str = "ones"
    k_p: Optional[Tuple[float, ...]] = None
    seed: int = 0
    file: Optional[str] = None


@dataclass(frozen=True)
class ObserverSpec:
    attitude_angle_deg: float = 90.0
    attitude_axis: Tuple[float, ...] = (1.0, 1.0, 1.0)

    @property
    def attitude_angle(self) -> float:
        return math.radians(self.attitude_angle_deg)


@dataclass(frozen=True)
class MonteCarloSpec:
    runs: int = 100
    seed: int = 0
    dispersion: float = 1.0
    duration: float = 30.0
    dt: Optional[float] = None
    workers: int = 0
    model: str = "full"
    noiseless: bool = True
    antipodal: bool = False
    cap: float = 1e-3
    rot_threshold_deg: float = 0.1
    pos_threshold_m: float = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    observer: ObserverSpec = field(default_factory=ObserverSpec)
    gains: GainSpec = field(default_factory=GainSpec)
    mc: MonteCarloSpec = field(default_factory=MonteCarloSpec)
    log_every: int = 10
    log_level: str = "INFO"
    output_dir: str = "output"
    align_window: float = 0.1


def _tuple(value: Any) -> Tuple[Any, ...]:
    return tuple(np.asarray(value).ravel().tolist())


def _bool(value: Any) -> bool:
    if isinstance(value, str):
        if value.strip().lower() in ("true", "yes", "on", "1"):
            return True
        if value.strip().lower() in ("false", "no", "off", "0"):
            return False
        raise ConfigError("“{}” is no boolean value.".format(value))
    return bool(value)


def _build(config: ClassInterface) -> ExperimentConfig:
    noise_enabled = _bool(config.noise.enabled)
    if noise_enabled:
        noise = NoiseSpec(
            var_omega=float(config.noise.var_omega),
            var_accel=float(config.noise.var_accel),
            var_landmark=float(config.noise.var_landmark),
            seed=int(config.noise.seed),
        )
    else:
        noise = NoiseSpec.noiseless(seed=int(config.noise.seed))
    sim = SimConfig(
        n=int(config.sim.n),
        duration=float(config.sim.duration),
        dt=float(config.sim.dt),
        gravity=_tuple(config.sim.gravity),
        trajectory=str(config.sim.trajectory),
        landmark_box=tuple(tuple(row) for row in config.sim.landmark_box),
        landmark_seed=int(config.sim.landmark_seed),
        noise=noise,
        decimation=int(config.sim.decimation),
        twist_omega=_tuple(config.sim.twist_omega),
        twist_accel=_tuple(config.sim.twist_accel),
        initial_position=_tuple(config.sim.initial_position),
        initial_velocity=_tuple(config.sim.initial_velocity),
    )
    eigenvalues = config.gains.eigenvalues
    k_p = config.gains.k_p
    gains = GainSpec(
        eigenvalues=None
        if eigenvalues is None
        else tuple(complex(e) for e in np.asarray(eigenvalues).ravel()),
        k_r=float(config.gains.k_r),
        k_p_mode=str(config.gains.k_p_mode),
        k_p=None if k_p is None else tuple(float(v) for v in np.ravel(k_p)),
        seed=int(config.gains.seed),
        file=config.gains.file,
    )
    mc_dt = config.mc.dt
    mc = MonteCarloSpec(
        runs=int(config.mc.runs),
        seed=int(config.mc.seed),
        dispersion=float(config.mc.dispersion),
        duration=float(config.mc.duration),
        dt=None if mc_dt is None else float(mc_dt),
        workers=int(config.mc.workers),
        model=str(config.mc.model),
        noiseless=_bool(config.mc.noiseless),
        antipodal=_bool(config.mc.antipodal),
        cap=float(config.mc.cap),
        rot_threshold_deg=float(config.mc.rot_threshold_deg),
        pos_threshold_m=float(config.mc.pos_threshold_m),
    )
    return ExperimentConfig(
        sim=sim,
        observer=ObserverSpec(
            attitude_angle_deg=float(config.observer.attitude_angle_deg),
            attitude_axis=_tuple(config.observer.attitude_axis),
        ),
        gains=gains,
        mc=mc,
        log_every=int(config.log.every),
        log_level=str(config.log.level).upper(),
        output_dir=str(config.output.dir),
        align_window=float(config.align.window),
    )


def validate_experiment_config(cfg: ExperimentConfig) -> None:
    """:raises ConfigError: On the first violated constraint."""
    n = cfg.sim.n
    eigenvalues = cfg.gains.eigenvalues
    if eigenvalues is not None:
        if len(eigenvalues) != n + 2:
            raise ConfigError(
                "gains.eigenvalues: expected n+2 = {} values, got {}.".format(
                    n + 2, len(eigenvalues)
                )
            )
        positive = [e for e in eigenvalues if e.real >= 0]
        if positive:
            raise ConfigError(
                "gains.eigenvalues: every real part must be negative "
                "(got {}).".format(", ".join(str(e) for e in positive))
            )
    if cfg.gains.file is not None and not os.path.exists(cfg.gains.file):
        raise ConfigError(
            "gains.file: the gain file “{}” does not exist.".format(cfg.gains.file)
        )
    if cfg.gains.k_r <= 0:
        raise ConfigError("gains.k_r must be positive (got {}).".format(cfg.gains.k_r))
    if cfg.gains.k_p_mode not in ("zeros", "ones", "custom"):
        raise ConfigError(
            "gains.k_p_mode: unknown mode “{}”.".format(cfg.gains.k_p_mode)
        )
    if cfg.gains.k_p_mode == "custom" and (
        cfg.gains.k_p is None or len(cfg.gains.k_p) != n
    ):
        raise ConfigError("gains.k_p: a custom K_p needs n = {} entries.".format(n))
    if not np.linalg.norm(cfg.observer.attitude_axis) > 0:
        raise ConfigError("observer.attitude_axis must not be the zero vector.")
    if cfg.log_every < 1:
        raise ConfigError("log.every must be at least 1.")
    if not 0 < cfg.align_window <= 1:
        raise ConfigError(
            "align.window must lie in (0, 1] (got {}).".format(cfg.align_window)
        )
    if cfg.mc.runs < 1:
        raise ConfigError("mc.runs must be at least 1.")
    if cfg.mc.model not in ("full", "reduced"):
        raise ConfigError("mc.model: unknown model “{}”.".format(cfg.mc.model))
    mc_dt = cfg.mc.dt if cfg.mc.dt is not None else cfg.sim.dt
    if mc_dt <= 0 or cfg.mc.duration < mc_dt:
        raise ConfigError("mc.duration must cover at least one step of mc.dt.")


def load_experiment_config(
    path: Optional[str] = None,
    args: Optional[argparse.Namespace] = None,
    dictionary: Optional[Dict[str, Dict[str, Any]]] = None,
    environ: Optional[str] = ENVIRON_PREFIX,
) -> ExperimentConfig:
    """Read and validate the experiment configuration.

    Lookup order: command line arguments, the dictionary, environment
    variables, the INI file and finally the defaults.

    :raises ConfigError: If a value is missing, malformed or inconsistent.
    """
    try:
        reader = ConfigReader(
            CONFIG_READER_SPEC,
            argparse=None if args is None else (args, ARGPARSE_MAPPING),
            dictionary=dictionary,
            environ=environ,
            ini=path,
        )
        cfg = _build(reader.get_class_interface())
        if path is not None:
            unknown = IniReader(path).unknown_keys(CONFIG_READER_SPEC)
            if unknown:
                logger.warning("Ignoring unknown keys: %s", ", ".join(unknown))
    except IniReaderError as error:
        raise ConfigError(str(error)) from error
    except (InvalidSimConfigError, TypeError, ValueError) as error:
        if isinstance(error, ConfigError):
            raise
        raise ConfigError("Invalid configuration: {}".format(error)) from error
    validate_experiment_config(cfg)
    return cfg
