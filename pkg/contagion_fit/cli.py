"""
Command-line entry point: fit, simulate, validate and report.

Exit status: 0 success, 1 input or usage error, 2 numerical or sampler failure.
"""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np
import pandas as pd

from contagion_fit.config import RunConfig, log_level, read_config_file
from contagion_fit.errors import InputError, IntegrationError, SamplerError
from contagion_fit.mcmc_engine import (
    PosteriorSamples,
    diagnostics,
    map_estimate,
    read_posterior_csv,
    run_chains,
)
from contagion_fit.outbreak_analysis import (
    PEAK_I0,
    effective_r_envelope,
    envelope_frame,
    extinction_probability,
    incidence_envelope,
    peak_timing,
    posterior_predictive,
    summarize,
    validate,
)
from contagion_fit.sir_dynamics import SirParams, final_size_oracle, integrate
from contagion_fit.trends_ingest import load_csv, prepare_window

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NUMERICAL_ERROR = 2

POSTERIOR_FILE = "posterior.csv"
FIT_REPORT_FILE = "fit_report.json"
ENVELOPE_FILE = "envelope.csv"
VALIDATION_FILE = "validation.json"
TRAJECTORY_FILE = "trajectory.csv"
ENSEMBLE_FILE = "ensemble.csv"
PEAK_TIMING_FILE = "peak_timing.json"
SUMMARY_FILE = "report.txt"

# Independent random streams derived from the run seed.
STREAM_PREDICTIVE = 1
STREAM_EFFECTIVE_R = 2
STREAM_PEAK = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT_ERROR, f"{self.prog}: error: {message}\n")


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def _clean(value):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_clean(payload), f, indent=2)
        f.write("\n")
    logger.info(f"Wrote {path}")


def _write_frame(path, frame: pd.DataFrame) -> None:
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info(f"Wrote {path}")


def _params_dict(params: SirParams) -> dict:
    return {"beta": params.beta, "gamma": params.gamma, "r": params.r, "i0": params.i0}


def _load_window(path):
    return prepare_window(load_csv(path))


def cmd_fit(config: RunConfig) -> int:
    config.require("input", "seed")
    config.check_paths("input", "validate_input")
    mcmc = config.mcmc_config()
    prior = config.prior()

    window = _load_window(config.input)
    window_b = _load_window(config.validate_input) if config.validate_input else None
    logger.info(f"Fitting '{window.label}': {len(window)} days from {window.start_date}")

    chains = run_chains(window, prior, mcmc, n_chains=config.chains, workers=config.worker_count)
    samples = PosteriorSamples.concatenate(chains)
    summary = summarize(samples)
    diag = diagnostics(chains)
    validation = validate(samples, window, window_b)

    fit_band = posterior_predictive(samples, window, config.ensemble, _stream(config.seed, STREAM_PREDICTIVE))
    rt_band = effective_r_envelope(samples, window, config.ensemble, _stream(config.seed, STREAM_EFFECTIVE_R))
    peaks = peak_timing(samples, config.ensemble, PEAK_I0, _stream(config.seed, STREAM_PEAK))
    r0_median = summary.r0.median
    extinction = extinction_probability(r0_median)

    report = {
        "config": config.to_dict(),
        "seed": config.seed,
        "mcmc": mcmc.to_dict(),
        "prior": {"shape": prior.shape, "rate": prior.rate},
        "series": {
            "label": window.label,
            "start_date": window.start_date.isoformat(),
            "days": len(window),
        },
        "summary": summary.to_dict(),
        "map": _params_dict(map_estimate(samples)),
        "diagnostics": diag.to_dict(),
        "validation": validation.to_dict(),
        "effective_r": {
            "day0_median": rt_band.median[0],
            "crossing_day": rt_band.crossing_day,
        },
        "peak_timing": {k: v for k, v in peaks.to_dict().items() if k != "days"},
        "extinction": {
            "r0": r0_median,
            "extinction_probability": extinction,
            "complement": 1.0 - extinction,
        },
    }

    os.makedirs(config.out_dir, exist_ok=True)
    samples.to_csv(os.path.join(config.out_dir, POSTERIOR_FILE))
    _write_frame(os.path.join(config.out_dir, ENVELOPE_FILE), envelope_frame(window, fit_band, rt_band))
    _write_json(os.path.join(config.out_dir, FIT_REPORT_FILE), report)
    logger.info(f"R0 {summary.r0}, generation time {summary.generation_time} days")
    return EXIT_OK


def cmd_simulate(config: RunConfig) -> int:
    config.require("horizon")
    if config.horizon < 1:
        raise InputError(f"--horizon must be at least 1, got {config.horizon}")
    i0 = config.i0 if config.i0 is not None else PEAK_I0
    if not 0 < i0 < 1:
        raise InputError(f"--i0 must lie in (0, 1), got {i0}")
    os.makedirs(config.out_dir, exist_ok=True)

    if config.posterior:
        config.require("seed")
        samples = read_posterior_csv(config.posterior)
        band = incidence_envelope(
            samples, config.horizon, config.ensemble, i0=i0, rng=np.random.default_rng(config.seed)
        )
        peaks = peak_timing(
            samples, config.ensemble, i0, np.random.default_rng(config.seed), horizon=config.horizon
        )
        frame = pd.DataFrame(
            {
                "day": np.arange(1, config.horizon + 1),
                "incidence_median": band.median,
                "incidence_lo95": band.lower,
                "incidence_hi95": band.upper,
            }
        )
        _write_frame(os.path.join(config.out_dir, ENSEMBLE_FILE), frame)
        _write_json(
            os.path.join(config.out_dir, PEAK_TIMING_FILE),
            {"config": config.to_dict(), "seed": config.seed, **peaks.to_dict()},
        )
        return EXIT_OK

    config.require("beta", "gamma")
    try:
        params = SirParams(beta=config.beta, gamma=config.gamma, r=config.r or 1.0, i0=i0)
    except ValueError as e:
        raise InputError(str(e))
    traj = integrate(params, config.horizon)
    _write_frame(os.path.join(config.out_dir, TRAJECTORY_FILE), traj.to_frame())
    day = int(np.argmax(traj.incidence)) + 1
    _write_json(
        os.path.join(config.out_dir, PEAK_TIMING_FILE),
        {
            "config": config.to_dict(),
            "params": _params_dict(params),
            "peak_day": day,
            "peak_interior": day < config.horizon,
            "final_cumulative": float(traj.c[-1]),
            "final_size_oracle": final_size_oracle(params.r0, 1.0 - params.i0) if params.beta > 0 else None,
        },
    )
    return EXIT_OK


def cmd_validate(config: RunConfig) -> int:
    config.require("posterior", "input")
    config.check_paths("posterior", "input", "validate_input")
    samples = read_posterior_csv(config.posterior)
    window = _load_window(config.input)
    window_b = _load_window(config.validate_input) if config.validate_input else None
    report = validate(samples, window, window_b)
    logger.info(f"R^2 in-sample {report.r2_in_sample:.4f}, out-of-sample {report.r2_out_sample}")

    os.makedirs(config.out_dir, exist_ok=True)
    _write_json(
        os.path.join(config.out_dir, VALIDATION_FILE),
        {"config": config.to_dict(), **report.to_dict()},
    )
    return EXIT_OK


def _fmt(interval: dict) -> str:
    return f"{interval['median']:.3f} ({interval['lower95']:.3f}-{interval['upper95']:.3f})"


def summary_text(report: dict) -> str:
    summary = report["summary"]
    validation = report["validation"]
    peaks = report["peak_timing"]
    extinction = report["extinction"]
    series = report["series"]
    map_params = report["map"]
    out_sample = validation.get("r2_out_sample")
    crossing = report["effective_r"].get("crossing_day")
    lines = [
        f"Series: {series['label']} (first positive day {series['start_date']}, {series['days']} days)",
        f"Seed: {report['seed']}",
        f"R0: {_fmt(summary['r0'])}",
        f"Generation time (days): {_fmt(summary['generation_time'])}",
        f"r: {_fmt(summary['r'])}",
        f"I0: {summary['i0']['median']:.3g} ({summary['i0']['lower95']:.3g}-{summary['i0']['upper95']:.3g})",
        "MAP: " + ", ".join(f"{k}={v:.4g}" for k, v in map_params.items()),
        f"R^2 in-sample: {validation['r2_in_sample']:.3f}",
        f"R^2 out-of-sample: {out_sample:.3f}" if out_sample is not None else "R^2 out-of-sample: n/a",
        f"Effective R below 1 from day: {crossing if crossing is not None else 'never'}",
        f"Peak day (I0={peaks['i0']:g}): {peaks['mean_days']:.2f} +/- {peaks['sd_days']:.2f}",
        f"Extinction probability at median R0 (1-1/R0): {extinction['extinction_probability']:.3f}",
    ]
    return "\n".join(lines) + "\n"


def cmd_report(config: RunConfig) -> int:
    run_dir = config.out_dir
    required = [POSTERIOR_FILE, FIT_REPORT_FILE, ENVELOPE_FILE]
    missing = [name for name in required if not os.path.exists(os.path.join(run_dir, name))]
    if missing:
        raise InputError(f"Run directory {run_dir} is missing artifacts: {', '.join(missing)}")

    with open(os.path.join(run_dir, FIT_REPORT_FILE), encoding="utf-8") as f:
        try:
            report = json.load(f)
        except json.JSONDecodeError as e:
            raise InputError(f"Malformed {FIT_REPORT_FILE}: {e}")

    text = summary_text(report)
    sys.stdout.write(text)
    with open(os.path.join(run_dir, SUMMARY_FILE), "w", encoding="utf-8") as f:
        f.write(text)

    if config.emit_svg:
        from contagion_fit import plots

        envelope = pd.read_csv(os.path.join(run_dir, ENVELOPE_FILE))
        samples = read_posterior_csv(os.path.join(run_dir, POSTERIOR_FILE))
        label = report["series"]["label"]
        plots.plot_fit(envelope, os.path.join(run_dir, "fit.svg"), title=label)
        plots.plot_effective_r(envelope, os.path.join(run_dir, "effective_r.svg"), title=label)
        plots.plot_posterior_histograms(samples, os.path.join(run_dir, "posterior.svg"), bins=config.bins)
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--out-dir", help="output (or, for report, run) directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--log-level")

    parser = _Parser(prog="contagion-fit", description=__doc__.strip().splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", parents=[common], help="sample the posterior for one series")
    fit.add_argument("--input")
    fit.add_argument("--validate-input", help="second region's series for out-of-sample R^2")
    fit.add_argument("--chains", type=int)
    fit.add_argument("--workers", type=int)
    fit.add_argument("--burn-in", type=int)
    fit.add_argument("--samples", type=int)
    fit.add_argument("--thin", type=int)
    fit.add_argument("--step-sizes", help="comma-separated beta,gamma,r,i0 working-scale sds")
    fit.add_argument("--ensemble", type=int)
    fit.add_argument("--prior-mean", type=float)
    fit.add_argument("--prior-var", type=float)

    simulate = commands.add_parser("simulate", parents=[common], help="simulate outbreaks")
    simulate.add_argument("--posterior")
    simulate.add_argument("--beta", type=float)
    simulate.add_argument("--gamma", type=float)
    simulate.add_argument("--r", type=float)
    simulate.add_argument("--i0", type=float)
    simulate.add_argument("--horizon", type=int)
    simulate.add_argument("--ensemble", type=int)

    validate_cmd = commands.add_parser("validate", parents=[common], help="R^2 of the MAP fit")
    validate_cmd.add_argument("--posterior")
    validate_cmd.add_argument("--input")
    validate_cmd.add_argument("--validate-input")

    report = commands.add_parser("report", parents=[common], help="summarise a fit run directory")
    report.add_argument("--emit-svg", action="store_true", default=None)
    report.add_argument("--bins", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    file_values = read_config_file(args.config) if args.config else {}
    return RunConfig.from_sources(file_values, flags)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except InputError as e:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr)
        logger.error(str(e))
        return EXIT_INPUT_ERROR

    logging.basicConfig(
        level=log_level(config),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        return COMMANDS[args.command](config)
    except (InputError, FileNotFoundError) as e:
        logger.error(f"Input error: {e}")
        return EXIT_INPUT_ERROR
    except (IntegrationError, SamplerError) as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL_ERROR
