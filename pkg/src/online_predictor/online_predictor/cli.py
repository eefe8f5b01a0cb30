#! /usr/bin/env python3
# -*- coding: utf-8 -*-

"""
cli.py: Configuration-driven experiments comparing the online predictor with
the Kalman filter over seeded simulations.

Usage:
    online_predictor run params/rotation_regret.yaml --jobs 4
    online_predictor summarize output/<config_hash>
    online_predictor presets
    online_predictor validate params/rotation_regret.yaml
"""

import argparse
from concurrent.futures import ProcessPoolExecutor, as_completed
import contextlib
from dataclasses import dataclass, field, fields
import hashlib
import json
import logging
import os
from pathlib import Path
import sys
import tempfile
import time
from typing import Tuple, Union
import warnings

import numpy as np
import pandas as pd
import yaml

from .analysis import (
    alternative_regret,
    check_arma_bound,
    check_persistency,
    compute_regret,
    epoch_logdet_checks,
    estimation_error,
    multistep_regret,
    regret_curve,
    state_predictions,
    state_regret,
)
from .exceptions import (
    ConfigError,
    ConfigParseError,
    ConfigValidationError,
    ExperimentError,
    ModelError,
    NumericalError,
    OnlinePredictorError,
)
from .kalman import (
    innovation_whiteness,
    run_filter,
    state_covariances,
    stationary_model,
)
from .parameters import BETA, LAMBDA
from .predictor import EpochSchedule, past_windows, run_multistep, run_online
from .sysmodel import (
    PRESETS,
    StateSpaceModel,
    get_preset,
    observability_matrix,
    simulate,
    theoretical_beta_floor,
    validate,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
HASH_LENGTH = 12
CONFIG_KEYS = {
    "model",
    "N",
    "seeds",
    "schedule",
    "diagnostics",
    "checkpoints",
    "output",
}
SUBLINEARITY_FACTOR = 8  # ratios R_c / R_{c/8} are reported

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


@dataclass(frozen=True)
class Diagnostics:
    logdet: bool = True
    arma: bool = False
    pe: bool = False
    whiteness: bool = False
    max_lag: int = 5
    alternative_regret: bool = False
    p_star: int = None  # default ceil(3 ln N)
    f_step: bool = False
    f: int = 4
    state_prediction: bool = False
    consistency: bool = False

    def to_dict(self):
        return {key.name: getattr(self, key.name) for key in fields(self)}


@dataclass(frozen=True)
class ExperimentConfig:
    """
    model is a preset name or a mapping with A, C, Q, R (and optionally
    Sigma0, name, kappa). N is the number of observations y_0 ... y_{N-1}.
    """

    model: Union[str, dict]
    N: int
    seeds: Tuple[int, ...]
    schedule: EpochSchedule
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    checkpoints: Tuple[int, ...] = ()
    output: str = "output"

    def build_model(self):
        if isinstance(self.model, str):
            return get_preset(self.model)
        return StateSpaceModel.from_dict(self.model)

    def to_dict(self):
        return dict(
            model=self.model,
            N=self.N,
            seeds=list(self.seeds),
            schedule=self.schedule.to_dict(),
            diagnostics=self.diagnostics.to_dict(),
            checkpoints=list(self.checkpoints),
            output=self.output,
        )

    def canonical(self):
        """ Sorted-key JSON of everything that determines the results. """
        dict_ = self.to_dict()
        dict_.pop("output")
        return json.dumps(dict_, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self):
        digest = hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()
        return digest[:HASH_LENGTH]


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    regret_curve: dict  # checkpoint -> cumulative regret
    regret: dict
    diagnostics: dict = field(default_factory=dict)
    validation: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)  # seconds per phase

    def to_dict(self):
        return dict(
            config_hash=self.config_hash,
            seed=self.seed,
            regret_curve={str(c): value for c, value in self.regret_curve.items()},
            regret=self.regret,
            diagnostics=self.diagnostics,
            validation=self.validation,
            timings=self.timings,
        )

    @classmethod
    def from_dict(cls, dict_):
        return cls(
            config_hash=dict_["config_hash"],
            seed=dict_["seed"],
            regret_curve={int(c): v for c, v in dict_["regret_curve"].items()},
            regret=dict_["regret"],
            diagnostics=dict_.get("diagnostics", {}),
            validation=dict_.get("validation", {}),
            timings=dict_.get("timings", {}),
        )


def _check_type(value, types, name):
    if isinstance(value, bool) and bool not in types:
        raise ConfigParseError(f"expected {types[0].__name__}, got bool", field=name)
    if not isinstance(value, types):
        raise ConfigParseError(
            f"expected {types[0].__name__}, got {type(value).__name__}", field=name
        )
    return value


def _check_keys(dict_, allowed, prefix=""):
    for key in dict_:
        if key not in allowed:
            raise ConfigParseError("unknown key", field=f"{prefix}{key}")


def _parse_model(model):
    if isinstance(model, str):
        if model not in PRESETS:
            raise ConfigValidationError(
                f"unknown preset {model}, available: {sorted(PRESETS)}",
                invariant="model is a preset name",
            )
        return model
    _check_type(model, (dict,), "model")
    _check_keys(model, {"A", "C", "Q", "R", "Sigma0", "name", "kappa"}, "model.")
    for key in ["A", "C", "Q", "R"]:
        if key not in model:
            raise ConfigParseError("missing matrix", field=f"model.{key}")
    try:
        StateSpaceModel.from_dict(model)
    except (ModelError, TypeError, ValueError) as e:
        raise ConfigValidationError(str(e), invariant="model matrices") from e
    return {key: model[key] for key in sorted(model)}


def _parse_schedule(schedule):
    schedule = {} if schedule is None else _check_type(schedule, (dict,), "schedule")
    _check_keys(schedule, {"T_init", "beta", "lambda"}, "schedule.")
    beta = float(_check_type(schedule.get("beta", BETA), (int, float), "schedule.beta"))
    lambda_ = float(
        _check_type(schedule.get("lambda", LAMBDA), (int, float), "schedule.lambda")
    )
    try:
        if schedule.get("T_init") is None:
            return EpochSchedule.default(beta=beta, lambda_=lambda_)
        T_init = _check_type(schedule["T_init"], (int,), "schedule.T_init")
        return EpochSchedule(T_init=T_init, beta=beta, lambda_=lambda_)
    except ModelError as e:
        raise ConfigValidationError(
            str(e), invariant="T_init > beta ln T_init, beta > 0, lambda > 0"
        ) from e


def _parse_diagnostics(diagnostics, N):
    diagnostics = {} if diagnostics is None else diagnostics
    _check_type(diagnostics, (dict,), "diagnostics")
    defaults = Diagnostics().to_dict()
    _check_keys(diagnostics, defaults, "diagnostics.")
    values = dict(defaults, **diagnostics)
    for key in defaults:
        if key == "p_star" and values[key] is None:
            continue
        if key in ["max_lag", "p_star", "f"]:
            _check_type(values[key], (int,), f"diagnostics.{key}")
        else:
            _check_type(values[key], (bool,), f"diagnostics.{key}")
    if values["p_star"] is None:
        values["p_star"] = int(np.ceil(3 * np.log(N)))
    return Diagnostics(**values)


def parse_config(dict_):
    """ Validate a configuration mapping and fill in defaults. """
    if not isinstance(dict_, dict):
        raise ConfigParseError("configuration must be a mapping")
    _check_keys(dict_, CONFIG_KEYS)
    for key in ["model", "N", "seeds"]:
        if key not in dict_:
            raise ConfigParseError("missing key", field=key)

    model = _parse_model(dict_["model"])
    N = _check_type(dict_["N"], (int,), "N")
    seeds = dict_["seeds"]
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = list(range(seeds))
    _check_type(seeds, (list,), "seeds")
    for seed in seeds:
        _check_type(seed, (int,), "seeds")
    schedule = _parse_schedule(dict_.get("schedule"))
    diagnostics = _parse_diagnostics(dict_.get("diagnostics"), N)

    checkpoints = dict_.get("checkpoints")
    if checkpoints is None:
        checkpoints = [N]
        if N >= 2 * SUBLINEARITY_FACTOR:
            checkpoints = [N // SUBLINEARITY_FACTOR, N]
    _check_type(checkpoints, (list,), "checkpoints")
    for checkpoint in checkpoints:
        _check_type(checkpoint, (int,), "checkpoints")
    output = str(_check_type(dict_.get("output", "output"), (str,), "output"))

    config = ExperimentConfig(
        model=model,
        N=N,
        seeds=tuple(seeds),
        schedule=schedule,
        diagnostics=diagnostics,
        checkpoints=tuple(sorted(set(checkpoints))),
        output=output,
    )
    check_config(config)
    return config


def check_config(config):
    """ Invariants that involve several fields. """
    if config.N < config.schedule.T_init:
        raise ConfigValidationError(
            f"N={config.N} is below T_init={config.schedule.T_init}",
            invariant="N >= T_init",
        )
    if not config.seeds or len(set(config.seeds)) != len(config.seeds):
        raise ConfigValidationError(
            "seeds must be a non-empty list of distinct integers"
        )
    if any(seed < 0 for seed in config.seeds):
        raise ConfigValidationError("seeds must be non-negative", invariant="seed >= 0")
    if not config.checkpoints or not all(1 < c <= config.N for c in config.checkpoints):
        raise ConfigValidationError(
            f"checkpoints must lie in (1, N={config.N}]",
            invariant="1 < checkpoint <= N",
        )

    diagnostics = config.diagnostics
    if diagnostics.whiteness and config.N < 100 * diagnostics.max_lag:
        raise ConfigValidationError(
            "whiteness needs N >= 100 max_lag", invariant="N >= 100 max_lag"
        )
    if diagnostics.alternative_regret and not 1 <= diagnostics.p_star < config.N:
        raise ConfigValidationError(
            "p_star must be in [1, N)", invariant="1 <= p_star < N"
        )
    if diagnostics.f_step or diagnostics.state_prediction:
        p_first = config.schedule.horizon(config.schedule.T_init)
        if diagnostics.f < 1 or config.schedule.T_init - diagnostics.f < p_first:
            raise ConfigValidationError(
                f"f={diagnostics.f} with T_init={config.schedule.T_init}, p_1={p_first}",
                invariant="1 <= f and T_init - f >= p_1",
            )
    if diagnostics.state_prediction:
        n = config.build_model().n
        if diagnostics.f < n:
            raise ConfigValidationError(
                f"state prediction needs f >= n={n}", invariant="f >= n"
            )


def load_config(path):
    """ Read and validate a YAML experiment configuration. """
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigParseError(f"cannot read {path}: {e}") from e
    try:
        dict_ = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise ConfigParseError(f"invalid YAML: {e.problem}", line=line) from e
    except yaml.YAMLError as e:
        raise ConfigParseError(f"invalid YAML: {e}") from e
    return parse_config(dict_)


def dump_config(config, path):
    with open(path, "w") as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=True)


@contextlib.contextmanager
def _phase(seed, name, timings):
    """ Time a phase of one seed and tag its errors with seed and phase. """
    start = time.perf_counter()
    try:
        yield
    except ExperimentError:
        raise
    except Exception as e:
        raise ExperimentError(seed, name, e) from e
    finally:
        timings[name] = time.perf_counter() - start


def _curve(function, checkpoints):
    return {int(c): function(c) for c in checkpoints}


def run_seed(config, seed):
    """ One simulation of the configured experiment; returns its RunRecord. """
    timings = {}
    diagnostics = {}
    options = config.diagnostics
    schedule = config.schedule

    with _phase(seed, "model", timings):
        model, kalman = stationary_model(config.build_model())
        validation = validate(model, kalman)
    with _phase(seed, "simulate", timings):
        traj = simulate(model, config.N - 1, seed)
        y = traj.observations
    with _phase(seed, "filter", timings):
        run = run_filter(kalman, model, traj)
    with _phase(seed, "predictor", timings):
        log = run_online(y, schedule)
    with _phase(seed, "regret", timings):
        report = compute_regret(y, run, log)
        curve = regret_curve(report, config.checkpoints)

    if options.logdet:
        with _phase(seed, "logdet", timings):
            checks = epoch_logdet_checks(y, log)
            diagnostics["logdet"] = dict(
                passed=all(check.passed for check in checks),
                epochs=[
                    dict(record.to_dict(), check=check.to_dict())
                    for record, check in zip(log.epochs, checks)
                ],
            )
    if options.whiteness:
        with _phase(seed, "whiteness", timings):
            diagnostics["whiteness"] = innovation_whiteness(
                run, options.max_lag
            ).to_dict()
    if options.arma:
        with _phase(seed, "arma", timings):
            p = log.p if log.p is not None else schedule.horizon(schedule.T_init)
            diagnostics["arma"] = check_arma_bound(y, model, run, p, kalman).to_dict()
    if options.pe and log.state is not None:
        with _phase(seed, "pe", timings):
            diagnostics["pe"] = _persistency(config, model, kalman, y, log)
    if options.consistency and log.state is not None:
        with _phase(seed, "consistency", timings):
            diagnostics["consistency"] = dict(
                p=log.p, error=estimation_error(log, model, kalman)
            )
    if options.alternative_regret:
        with _phase(seed, "alternative_regret", timings):
            diagnostics["alternative_regret"] = alternative_regret(
                y, run, options.p_star, online_log=log
            ).to_dict()
    if options.f_step or options.state_prediction:
        with _phase(seed, "multistep", timings):
            multistep_log = run_multistep(y, schedule, options.f)
            diagnostics["f_step"] = dict(
                f=options.f,
                regret_curve=_curve(
                    lambda c: multistep_regret(y, run, model, multistep_log, stop=c),
                    config.checkpoints,
                ),
            )
        if options.state_prediction:
            with _phase(seed, "state_prediction", timings):
                O_f = observability_matrix(model.A, model.C, options.f)
                x_tilde = state_predictions(multistep_log, O_f)
                diagnostics["state_prediction"] = dict(
                    f=options.f,
                    regret_curve=_curve(
                        lambda c: state_regret(traj.states, run.x_hat, x_tilde, stop=c),
                        config.checkpoints,
                    ),
                )

    logger.info("seed %d: R_N = %.4g", seed, report.regret)
    return RunRecord(
        config_hash=config.config_hash,
        seed=seed,
        regret_curve=curve,
        regret=report.to_dict(),
        diagnostics=_jsonable(diagnostics),
        validation=validation.to_dict(),
        timings=timings,
    )


def _persistency(config, model, kalman, y, log):
    p = log.p
    n_obs = y.shape[0]
    windows = past_windows(y, p, p, n_obs)  # Z_p, ..., Z_{N-1}
    covariances = state_covariances(kalman, model, k_max=n_obs)
    gamma_z = None
    if covariances.Gamma_inf is not None:
        gamma_z = lambda k: covariances.gamma_z(k, p)
    record = log.epochs[-1]
    regularizer = config.schedule.lambda_ * np.eye(p * model.m)
    reference = (record.stop, record.V_bar - regularizer)
    return check_persistency(
        windows, model.R, p, gamma_z=gamma_z, reference_gram=reference
    ).to_dict()


def _jsonable(value):
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(dict_, path):
    """ Write sorted-key JSON atomically through a temporary file and a rename. """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(
        "w", dir=path.parent, suffix=".tmp", delete=False
    ) as f:
        temporary = f.name
        try:
            json.dump(dict_, f, sort_keys=True, indent=2)
        except BaseException:
            f.close()
            os.unlink(temporary)
            raise
    os.replace(temporary, path)


def output_directory(config, output=None):
    return Path(output if output is not None else config.output) / config.config_hash


def run_experiment(config, output_dir=None, jobs=1, seed_offset=0):
    """
    Run every seed of the configuration, in parallel when jobs > 1.

    Records are written to output_dir/runs/<seed>.json as they complete.
    """
    seeds = [seed + seed_offset for seed in config.seeds]
    if output_dir is not None:
        output_dir = Path(output_dir)
        write_json(json.loads(config.canonical()), output_dir / "config.json")

    def finish(record):
        if output_dir is not None:
            write_json(record.to_dict(), output_dir / "runs" / f"{record.seed}.json")
        return record

    if jobs <= 1:
        records = [finish(run_seed(config, seed)) for seed in seeds]
    else:
        records = []
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            futures = [executor.submit(run_seed, config, seed) for seed in seeds]
            try:
                for future in as_completed(futures):
                    records.append(finish(future.result()))
            except ExperimentError:
                for future in futures:
                    future.cancel()
                raise
    return sorted(records, key=lambda record: record.seed)


def _records_curves(records):
    """ {curve name: {checkpoint: [values across records]}}. """
    curves = {}
    for record in records:
        if isinstance(record, dict):
            record = RunRecord.from_dict(record)
        named = {"regret": record.regret_curve}
        for key in ["f_step", "state_prediction"]:
            if key in record.diagnostics:
                named[key] = record.diagnostics[key]["regret_curve"]
        for name, curve in named.items():
            for checkpoint, value in curve.items():
                values = curves.setdefault(name, {}).setdefault(int(checkpoint), [])
                values.append(value)
    return curves


def summarize(records):
    """
    Per checkpoint median and quartiles of the cumulative regret across seeds,
    and sublinearity ratios median R_c / median R_{c/8}.

    :return: pandas DataFrame with columns checkpoint_N, stat, value.
    """
    if not records:
        raise ValueError("summarize needs at least one record")
    rows = []
    for name, curve in _records_curves(records).items():
        prefix = "" if name == "regret" else f"{name}_"
        medians = {}
        for checkpoint in sorted(curve):
            values = np.asarray(curve[checkpoint], dtype=float)
            q1, median, q3 = np.percentile(values, [25, 50, 75])
            medians[checkpoint] = median
            rows += [
                (checkpoint, f"{prefix}median", float(median)),
                (checkpoint, f"{prefix}q1", float(q1)),
                (checkpoint, f"{prefix}q3", float(q3)),
                (checkpoint, f"{prefix}n_records", float(values.size)),
            ]
        for checkpoint, median in medians.items():
            base = checkpoint // SUBLINEARITY_FACTOR
            if checkpoint % SUBLINEARITY_FACTOR == 0 and base in medians:
                ratio = median / medians[base] if medians[base] != 0 else float("nan")
                rows.append((checkpoint, f"{prefix}sublinearity_ratio", float(ratio)))
    return pd.DataFrame(rows, columns=["checkpoint_N", "stat", "value"])


def write_summary(summary, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    summary.to_csv(directory / "summary.csv", index=False)
    records = json.loads(summary.to_json(orient="records"))
    write_json(records, directory / "summary.json")


def load_records(directory):
    paths = sorted(Path(directory, "runs").glob("*.json"))
    records = []
    for path in paths:
        with open(path) as f:
            records.append(RunRecord.from_dict(json.load(f)))
    return records


def presets_table():
    """ Structural facts of every preset, with Sigma0 := P. """
    rows = []
    for name in PRESETS:
        model, kalman = stationary_model(get_preset(name))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            validation = validate(model, kalman)
        rows.append(
            dict(
                name=name,
                n=model.n,
                m=model.m,
                kappa=model.kappa,
                rho_A=validation.rho_A,
                rho_closed_loop=validation.rho_closed_loop,
                beta_floor=theoretical_beta_floor(kalman, model.kappa),
                observable=validation.observable,
                controllable_process=validation.controllable_process,
                controllable_gain=validation.controllable_gain,
                non_explosive=validation.non_explosive,
            )
        )
    return pd.DataFrame(rows)


def dir_path(string):
    if os.path.isdir(string):
        return string
    raise argparse.ArgumentTypeError(f"{string} is not a directory")


def exp_parser(description=""):
    parser = argparse.ArgumentParser(prog="online_predictor", description=description)
    parser.add_argument("--verbose", action="store_true", help="debug logging.")
    verbs = parser.add_subparsers(dest="verb", required=True)

    run = verbs.add_parser("run", help="run all seeds of a configuration.")
    run.add_argument("config", type=str, help="YAML experiment configuration.")
    run.add_argument("--jobs", type=int, default=1, help="number of worker processes.")
    run.add_argument(
        "--output", type=str, default=None, help="output root, overrides the config."
    )
    run.add_argument(
        "--seed-offset", type=int, default=0, help="added to every configured seed."
    )

    summarize_ = verbs.add_parser(
        "summarize", help="summarize the runs of a directory."
    )
    summarize_.add_argument(
        "directory", type=dir_path, help="output/<config_hash> folder."
    )

    verbs.add_parser("presets", help="list the preset models.")

    validate_ = verbs.add_parser("validate", help="check a configuration.")
    validate_.add_argument("config", type=str, help="YAML experiment configuration.")
    return parser


def _run(args):
    config = load_config(args.config)
    directory = output_directory(config, args.output)
    logger.info(
        "running %d seeds of %s into %s", len(config.seeds), args.config, directory
    )
    records = run_experiment(
        config, output_dir=directory, jobs=args.jobs, seed_offset=args.seed_offset
    )
    summary = summarize(records)
    write_summary(summary, directory)
    print(summary.to_string(index=False))


def _summarize(args):
    records = load_records(args.directory)
    if not records:
        raise ConfigError(f"no runs found in {args.directory}")
    summary = summarize(records)
    write_summary(summary, args.directory)
    print(summary.to_string(index=False))


def _presets(args):
    print(presets_table().to_string(index=False))


def _validate(args):
    config = load_config(args.config)
    print(f"{args.config}: valid, config hash {config.config_hash}")
    print(config.canonical())


def main(argv=None):
    parser = exp_parser(description="Online prediction vs. Kalman filter.")
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT
    )
    logging.captureWarnings(True)

    commands = dict(
        run=_run, summarize=_summarize, presets=_presets, validate=_validate
    )
    try:
        commands[args.verb](args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentError as e:
        print(f"seed {e.seed}, phase {e.phase}: {e.error}", file=sys.stderr)
        if isinstance(e.error, (NumericalError, ArithmeticError)):
            return EXIT_NUMERICAL
        return EXIT_FAILURE
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OnlinePredictorError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
