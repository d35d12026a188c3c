import argparse
import os
import unittest
from unittest import mock

from lgslam import config_reader
from lgslam.config_reader import (
    ARGPARSE_MAPPING,
    CONFIG_READER_SPEC,
    ArgparseReader,
    ConfigError,
    ConfigReader,
    ConfigValueError,
    DictionaryReader,
    EnvironReader,
    IniReader,
    ReaderBase,
    ReaderSelector,
    auto_type,
    load_experiment_config,
    load_readers_by_keyword,
    spec_to_argparse,
    validate_key,
)

FILES_DIR = os.path.join(os.path.dirname(__file__), "files")

# [sim]
# n = 3
# ...
INI_FILE = os.path.join(FILES_DIR, "experiment.ini")

parser = argparse.ArgumentParser()
parser.add_argument("--sim-n")
parser.add_argument("--out")
ARGPARSER_NAMESPACE = parser.parse_args(["--sim-n", "9", "--out", "/tmp/lgslam"])


class TestFunctionValidateKey(unittest.TestCase):
    def test_valid(self):
        self.assertTrue(validate_key("sim"))
        self.assertTrue(validate_key("var_omega"))
        self.assertTrue(validate_key("1"))
        self.assertTrue(validate_key("ABC_abc_123"))

    def test_invalid(self):
        with self.assertRaises(ValueError) as context:
            validate_key("l o l")
        self.assertEqual(
            str(context.exception),
            "The key “l o l” contains invalid characters " "(allowed: a-zA-Z0-9_).",
        )
        with self.assertRaises(ValueError):
            validate_key("ö")


# Reader classes ##############################################################


class FalseReader(ReaderBase):
    def not_get(self):
        return "It’s not get"


class TestClassReaderBase(unittest.TestCase):
    def test_exception(self):
        with self.assertRaises(TypeError):
            FalseReader()  # pylint: disable=abstract-class-instantiated


class TestClassArgparseReader(unittest.TestCase):
    def test_method_get_without_mapping(self):
        reader = ArgparseReader(args=ARGPARSER_NAMESPACE)
        self.assertEqual(reader.get("sim", "n"), "9")

    def test_method_get_with_mapping(self):
        reader = ArgparseReader(args=ARGPARSER_NAMESPACE, mapping=ARGPARSE_MAPPING)
        self.assertEqual(reader.get("output", "dir"), "/tmp/lgslam")

    def test_none_is_missing(self):
        args = argparse.Namespace(sim_n=None)
        with self.assertRaises(ConfigValueError):
            ArgparseReader(args=args).get("sim", "n")

    def test_exception(self):
        reader = ArgparseReader(args=ARGPARSER_NAMESPACE, mapping=ARGPARSE_MAPPING)
        with self.assertRaises(ConfigValueError) as context:
            reader.get("noise", "seed")
        self.assertEqual(
            str(context.exception),
            "Configuration value could not be found by Argparse "
            "(section “noise” key “seed”).",
        )


class TestClassDictionaryReader(unittest.TestCase):

    dictionary = {"sim": {"n": 4}}

    def test_method_get(self):
        reader = DictionaryReader(dictionary=self.dictionary)
        self.assertEqual(reader.get("sim", "n"), 4)

    def test_exception(self):
        reader = DictionaryReader(dictionary=self.dictionary)
        with self.assertRaises(ConfigValueError):
            reader.get("noise", "seed")


class TestClassEnvironReader(unittest.TestCase):
    @mock.patch.dict(os.environ, {"AAA__sim__n": "12"})
    def test_method_get(self):
        reader = EnvironReader(prefix="AAA")
        self.assertEqual(reader.get("sim", "n"), "12")

    def test_exception(self):
        reader = EnvironReader(prefix="AAA")
        with self.assertRaises(ConfigValueError) as context:
            reader.get("lol", "lol")
        self.assertEqual(
            str(context.exception),
            "Environment variable not found: AAA__lol__lol",
        )

    @mock.patch.dict(os.environ, {"sim__dt": "0.01"})
    def test_without_prefix(self):
        self.assertEqual(EnvironReader(prefix=None).get("sim", "dt"), "0.01")


class TestClassIniReader(unittest.TestCase):
    def test_method_get(self):
        ini = IniReader(path=INI_FILE)
        self.assertEqual(ini.get("sim", "n"), "3")
        self.assertEqual(ini.get("gains", "k_p_mode"), "zeros")

    def test_exception(self):
        ini = IniReader(path=INI_FILE)
        with self.assertRaises(ConfigValueError) as context:
            ini.get("lol", "lol")
        self.assertEqual(
            str(context.exception),
            "Configuration value could not be found "
            "(section “lol” key “lol”).",
        )

    def test_non_existent_ini_file(self):
        with self.assertRaises(config_reader.IniReaderError):
            IniReader(path=os.path.join(FILES_DIR, "xxx.ini"))

    def test_empty_path(self):
        with self.assertRaises(config_reader.IniReaderError):
            IniReader(path="")

    def test_invalid_syntax(self):
        with self.assertRaises(config_reader.IniReaderError) as context:
            IniReader(path=os.path.join(FILES_DIR, "invalid.ini"))
        self.assertIn("is not valid", str(context.exception))

    def test_unknown_keys(self):
        ini = IniReader(path=os.path.join(FILES_DIR, "unknown_key.ini"))
        self.assertEqual(ini.unknown_keys(CONFIG_READER_SPEC), ["sim.landmarks"])


# Common code #################################################################


class TestClassReaderSelector(unittest.TestCase):
    def test_first_reader_wins(self):
        reader = ReaderSelector(
            DictionaryReader({"sim": {"n": 5}}), IniReader(INI_FILE)
        )
        self.assertEqual(reader.get("sim", "n"), 5)
        self.assertEqual(reader.get("sim", "dt"), "0.01")

    def test_exception(self):
        reader = ReaderSelector(IniReader(INI_FILE))
        with self.assertRaises(ConfigError) as context:
            reader.get("lol", "lol")
        self.assertEqual(
            str(context.exception),
            "Configuration value could not be found "
            "(section “lol” key “lol”).",
        )


class TestFunctionAutoType(unittest.TestCase):
    def test_literals(self):
        self.assertEqual(auto_type("3"), 3)
        self.assertEqual(auto_type("1e-3"), 0.001)
        self.assertEqual(auto_type("[0, 0, -9.81]"), [0, 0, -9.81])
        self.assertIsNone(auto_type("None"))
        self.assertEqual(auto_type("(-1+2j)"), -1 + 2j)

    def test_plain_strings(self):
        self.assertEqual(auto_type("circle"), "circle")
        self.assertEqual(auto_type("/tmp/out"), "/tmp/out")

    def test_no_string(self):
        self.assertEqual(auto_type(4), 4)


class TestFunctionLoadReadersByKeyword(unittest.TestCase):
    def test_without_keywords_arguments(self):
        with self.assertRaises(TypeError):
            load_readers_by_keyword(INI_FILE, "XXX")  # pylint: disable=E1121

    def test_order(self):
        readers = load_readers_by_keyword(environ="XXX", ini=INI_FILE)
        self.assertIsInstance(readers[0], EnvironReader)
        self.assertIsInstance(readers[1], IniReader)

    def test_skip_none(self):
        readers = load_readers_by_keyword(argparse=None, ini=INI_FILE)
        self.assertEqual(len(readers), 1)

    def test_argparse_single_argument(self):
        readers = load_readers_by_keyword(argparse=ARGPARSER_NAMESPACE)
        self.assertIsInstance(readers[0], ArgparseReader)


class TestClassConfigReader(unittest.TestCase):
    def test_spec_defaults(self):
        config = ConfigReader(CONFIG_READER_SPEC).get_class_interface()
        self.assertEqual(config.sim.n, 15)
        self.assertEqual(config.noise.var_accel, 0.2)

    def test_ini_before_defaults(self):
        config = ConfigReader(CONFIG_READER_SPEC, ini=INI_FILE).get_class_interface()
        self.assertEqual(config.sim.n, 3)
        self.assertEqual(config.sim.trajectory, "circle")

    def test_missing_key(self):
        config = ConfigReader(CONFIG_READER_SPEC).get_class_interface()
        with self.assertRaises(ConfigError):
            config.sim.unknown


class TestFunctionSpecToArgparse(unittest.TestCase):
    def test_options(self):
        parser = argparse.ArgumentParser()
        spec_to_argparse(CONFIG_READER_SPEC, parser)
        args = parser.parse_args(["--sim-n", "6", "--noise-var-omega", "0"])
        self.assertEqual(args.sim_n, "6")
        self.assertEqual(args.noise_var_omega, "0")
        self.assertIsNone(args.mc_runs)


# Experiment configuration ####################################################


class TestFunctionLoadExperimentConfig(unittest.TestCase):
    def test_defaults(self):
        cfg = load_experiment_config(environ=None)
        self.assertEqual(cfg.sim.n, 15)
        self.assertEqual(cfg.sim.dt, 0.001)
        self.assertEqual(cfg.sim.duration, 60.0)
        self.assertEqual(cfg.sim.noise.var_landmark, 0.1)
        self.assertEqual(cfg.observer.attitude_angle_deg, 90.0)
        self.assertIsNone(cfg.gains.eigenvalues)
        self.assertEqual(cfg.gains.k_p_mode, "ones")
        self.assertEqual(cfg.mc.runs, 100)
        self.assertEqual(cfg.log_level, "INFO")

    def test_ini(self):
        cfg = load_experiment_config(INI_FILE, environ=None)
        self.assertEqual(cfg.sim.n, 3)
        self.assertTrue(cfg.sim.noise.silent)
        self.assertEqual(cfg.sim.noise.seed, 7)
        self.assertEqual(cfg.gains.k_r, 0.5)
        self.assertEqual(cfg.observer.attitude_axis, (0.0, 0.0, 1.0))
        self.assertEqual(cfg.log_every, 5)
        self.assertEqual(cfg.log_level, "WARNING")
        self.assertEqual(cfg.mc.model, "reduced")
        self.assertEqual(cfg.mc.workers, 1)

    def test_argparse_overrides_ini(self):
        args = argparse.Namespace(sim_n="4", out="/tmp/x", seed=11)
        cfg = load_experiment_config(INI_FILE, args=args, environ=None)
        self.assertEqual(cfg.sim.n, 4)
        self.assertEqual(cfg.output_dir, "/tmp/x")
        self.assertEqual(cfg.sim.noise.seed, 11)

    @mock.patch.dict(os.environ, {"LGSLAM__sim__n": "6"})
    def test_environ(self):
        self.assertEqual(load_experiment_config().sim.n, 6)
        self.assertEqual(load_experiment_config(environ=None).sim.n, 15)

    def test_eigenvalues(self):
        cfg = load_experiment_config(
            dictionary={
                "sim": {"n": 2},
                "gains": {"eigenvalues": "[-1, -2, -1+1j, -1-1j]"},
            },
            environ=None,
        )
        self.assertEqual(cfg.gains.eigenvalues, (-1, -2, -1 + 1j, -1 - 1j))

    def test_wrong_eigenvalue_count(self):
        with self.assertRaises(ConfigError) as context:
            load_experiment_config(
                dictionary={"sim": {"n": 2}, "gains": {"eigenvalues": [-1, -2]}},
                environ=None,
            )
        self.assertEqual(
            str(context.exception),
            "gains.eigenvalues: expected n+2 = 4 values, got 2.",
        )

    def test_unstable_eigenvalue(self):
        with self.assertRaises(ConfigError) as context:
            load_experiment_config(
                os.path.join(FILES_DIR, "bad_eigenvalues.ini"), environ=None
            )
        self.assertIn("every real part must be negative", str(context.exception))

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_experiment_config(os.path.join(FILES_DIR, "xxx.ini"))

    def test_missing_gain_file(self):
        with self.assertRaises(ConfigError) as context:
            load_experiment_config(
                dictionary={"gains": {"file": "/nonexistent/gain_matrix.txt"}},
                environ=None,
            )
        self.assertIn("does not exist", str(context.exception))

    def test_invalid_sim_value(self):
        with self.assertRaises(ConfigError) as context:
            load_experiment_config(dictionary={"sim": {"dt": -1}}, environ=None)
        self.assertIn("dt must be positive", str(context.exception))

    def test_invalid_values(self):
        for section, key, value in (
            ("gains", "k_r", 0),
            ("gains", "k_p_mode", "random"),
            ("gains", "k_p_mode", "custom"),
            ("observer", "attitude_axis", [0, 0, 0]),
            ("log", "every", 0),
            ("align", "window", 1.5),
            ("mc", "runs", 0),
            ("mc", "model", "exact"),
            ("noise", "enabled", "maybe"),
            ("noise", "var_omega", -1),
        ):
            with self.subTest(key="{}.{}".format(section, key)):
                with self.assertRaises(ConfigError):
                    load_experiment_config(
                        dictionary={section: {key: value}}, environ=None
                    )

    def test_unknown_key_warning(self):
        with self.assertLogs("lgslam.config_reader", level="WARNING") as logs:
            load_experiment_config(
                os.path.join(FILES_DIR, "unknown_key.ini"), environ=None
            )
        self.assertIn("sim.landmarks", logs.output[0])
