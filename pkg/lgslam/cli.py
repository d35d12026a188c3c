"""
Command line interface.

.. code:: shell

    lgslam design-gains --config experiment.ini --out gains/
    lgslam simulate --config experiment.ini --noiseless --seed 3
    lgslam mc --config experiment.ini --runs 100

Exit codes: 0 success, 2 configuration error, 3 numerical divergence.
"""

import argparse
import csv
import logging
import os
import sys
from typing import Callable, Dict, List, Optional

import numpy as np

from . import __version__
from .config_reader import (
    CONFIG_READER_SPEC,
    ConfigError,
    ExperimentConfig,
    load_experiment_config,
    spec_to_argparse,
)
from .experiment import (
    design_from_config,
    gains_from_config,
    monte_carlo,
    run_simulation,
    summarize_mc,
    write_landmarks_csv,
    write_mc_csv,
    write_metrics_csv,
    write_run_csv,
)
from .gain_synthesis import (
    EigenvalueRequestError,
    GainFileError,
    LtiDimensionError,
    PolePlacementError,
    build_lti,
    eigenvalue_match_distance,
    observability_rank,
    save_gain_design,
    save_observer_gains,
)
from .log import LoggingHandler, Timer, setup_logging
from .observer_core import DivergenceError
from .plot_script import write_plot_script
from .report import STATUS_CONFIG_ERROR, STATUS_DIVERGED, STATUS_OK, Report

logger = logging.getLogger(__name__)

GAIN_MATRIX_FILE = "gain_matrix.txt"
OBSERVER_GAINS_FILE = "observer_gains.txt"

DESIGN_ERRORS = (
    EigenvalueRequestError,
    GainFileError,
    LtiDimensionError,
    PolePlacementError,
)


def _format_eigenvalue(value: complex) -> str:
    if abs(value.imag) < 1e-12:
        return "{:.9f}".format(value.real)
    return "{:.9f}{:+.9f}j".format(value.real, value.imag)


def _output_dir(cfg: ExperimentConfig) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg.output_dir


def cmd_design_gains(cfg: ExperimentConfig, handler: LoggingHandler) -> Report:
    """Design ``L``, write it and the decomposed gains."""
    timer = Timer()
    design = design_from_config(cfg)
    gains = gains_from_config(cfg, design)
    sys_ = build_lti(cfg.sim.n)
    rank = observability_rank(sys_)
    out = _output_dir(cfg)
    save_gain_design(design, os.path.join(out, GAIN_MATRIX_FILE))
    save_observer_gains(gains, os.path.join(out, OBSERVER_GAINS_FILE))
    distance = eigenvalue_match_distance(design.achieved_eigs, design.requested_eigs)
    logger.info("Observability rank %d of %d", rank, sys_.order)
    logger.info("Wrote %s and %s to %s", GAIN_MATRIX_FILE, OBSERVER_GAINS_FILE, out)
    body = [
        "Observability rank: {} (n+2 = {})".format(rank, sys_.order),
        "Requested eigenvalues: {}".format(
            " ".join(_format_eigenvalue(e) for e in design.requested_eigs)
        ),
        "Achieved eigenvalues: {}".format(
            " ".join(
                _format_eigenvalue(e) for e in np.sort_complex(design.achieved_eigs)
            )
        ),
        "Matching distance: {:.3e}".format(distance),
        "Gain digest: {}".format(design.digest),
    ]
    return Report(
        status=STATUS_OK,
        command="design-gains",
        custom_message="placed {} eigenvalues".format(sys_.order),
        performance_data={
            "runtime": timer.result(),
            "rank": rank,
            "match": "{:.3e}".format(distance),
            "condition": "{:.3e}".format(design.condition),
        },
        body="\n".join(body),
        log_records=handler.all_records,
    )


def cmd_simulate(cfg: ExperimentConfig, handler: LoggingHandler) -> Report:
    """Run one simulation and write ``run.csv``, ``metrics.csv``,
    ``landmarks.csv`` and ``plot.py``."""
    timer = Timer()
    design = design_from_config(cfg)
    gains = gains_from_config(cfg, design)
    out = _output_dir(cfg)
    try:
        run_log = run_simulation(cfg, gains)
    except DivergenceError as error:
        partial = getattr(error, "run_log", None)
        if partial is not None and len(partial) > 0:
            window = max(cfg.align_window, 1.0 / len(partial))
            align = partial.alignment(window)
            write_run_csv(partial, align, os.path.join(out, "run.csv"))
            write_metrics_csv(
                partial.metric_records(align), os.path.join(out, "metrics.csv")
            )
            logger.error("Flushed %d samples before the divergence", len(partial))
        return Report(
            status=STATUS_DIVERGED,
            command="simulate",
            custom_message=str(error),
            performance_data={"runtime": timer.result()},
            log_records=handler.all_records,
        )
    align = run_log.alignment(cfg.align_window)
    records = run_log.metric_records(align)
    write_run_csv(run_log, align, os.path.join(out, "run.csv"))
    write_metrics_csv(records, os.path.join(out, "metrics.csv"))
    write_landmarks_csv(run_log.landmarks, os.path.join(out, "landmarks.csv"))
    write_plot_script(out, cfg.sim.n)
    final = records[-1]
    logger.info(
        "Final aligned errors: rotation %.3e deg, position %.3e m, landmarks %.3e m",
        final.err_rot_deg,
        final.err_pos_m,
        final.landmark_rmse_m,
    )
    return Report(
        status=STATUS_OK,
        command="simulate",
        custom_message="{} samples written".format(len(records)),
        performance_data={
            "runtime": timer.result(),
            "rows": len(records),
            "err_rot_deg": "{:.3e}".format(final.err_rot_deg),
            "err_pos_m": "{:.3e}".format(final.err_pos_m),
            "landmark_rmse_m": "{:.3e}".format(final.landmark_rmse_m),
        },
        body="Gain digest: {}\nObserver gains digest: {}\n"
        "Alignment: R* = {}, p* = {}".format(
            design.digest,
            run_log.metadata["gains_digest"],
            align.r_star.round(6).tolist(),
            align.p_star.round(6).tolist(),
        ),
        log_records=handler.all_records,
    )


def cmd_monte_carlo(cfg: ExperimentConfig, handler: LoggingHandler) -> Report:
    """Run the Monte Carlo study and write ``mc.csv`` and
    ``mc_summary.csv``."""
    timer = Timer()
    gains = gains_from_config(cfg)
    out = _output_dir(cfg)
    results = monte_carlo(cfg, gains)
    write_mc_csv(results, os.path.join(out, "mc.csv"))
    summary = summarize_mc(results)
    with open(os.path.join(out, "mc_summary.csv"), "w", newline="") as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(["key", "value"])
        for key, value in summary.items():
            writer.writerow([key, repr(value)])
    logger.info(
        "%d of %d runs converged", summary["converged"], summary["runs"]
    )
    return Report(
        status=STATUS_OK,
        command="mc",
        custom_message="{}/{} converged".format(summary["converged"], summary["runs"]),
        performance_data={
            "runtime": timer.result(),
            "converged_fraction": summary["converged_fraction"],
            "diverged": summary["diverged"],
        },
        body="\n".join("{}: {}".format(k, v) for k, v in summary.items()),
        log_records=handler.all_records,
    )


COMMANDS: Dict[str, Callable[[ExperimentConfig, LoggingHandler], Report]] = {
    "design-gains": cmd_design_gains,
    "simulate": cmd_simulate,
    "mc": cmd_monte_carlo,
}


def get_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="An INI file with the experiment.")
    common.add_argument("--out", help="The output directory.")
    common.add_argument(
        "--quiet", action="store_true", help="Do not print the log messages."
    )
    spec_to_argparse(CONFIG_READER_SPEC, common)

    parser = argparse.ArgumentParser(
        prog="lgslam",
        description="Simulate and verify the SE_{3+n}(3) SLAM observer.",
    )
    parser.add_argument(
        "--version", action="version", version="%(prog)s {}".format(__version__)
    )
    subcommands = parser.add_subparsers(dest="command", required=True)
    subcommands.add_parser(
        "design-gains", parents=[common], help="Place the observer poles."
    )
    simulate = subcommands.add_parser(
        "simulate", parents=[common], help="Run one simulation."
    )
    simulate.add_argument(
        "--noiseless",
        dest="noise_enabled_flag",
        action="store_const",
        const=False,
        help="Switch the measurement noise off.",
    )
    simulate.add_argument("--seed", type=int, help="The seed of the noise.")
    mc = subcommands.add_parser("mc", parents=[common], help="Monte Carlo study.")
    mc.add_argument("--runs", type=int, help="The number of runs.")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = get_parser().parse_args(argv)
    _, handler = setup_logging(quiet=args.quiet)
    try:
        cfg = load_experiment_config(path=args.config, args=args)
    except ConfigError as error:
        logger.error("Configuration error: %s", error)
        if args.out and os.path.isdir(args.out):
            Report(
                status=STATUS_CONFIG_ERROR,
                command=args.command,
                custom_message=str(error),
                log_records=handler.all_records,
            ).write(args.out)
        return STATUS_CONFIG_ERROR
    logging.getLogger("lgslam").setLevel(cfg.log_level)
    try:
        report = COMMANDS[args.command](cfg, handler)
    except (ConfigError, ValueError) + DESIGN_ERRORS as error:
        logger.error("%s: %s", error.__class__.__name__, error)
        report = Report(
            status=STATUS_CONFIG_ERROR,
            command=args.command,
            custom_message=str(error),
            log_records=handler.all_records,
        )
    report.write(_output_dir(cfg))
    logger.info(report.message)
    return report.status


if __name__ == "__main__":
    sys.exit(main())
