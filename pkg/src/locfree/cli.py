"""Command-line front end.

Subcommands: ``scenario`` (generate a world and its ground-truth map),
``fit`` (train and persist a map), ``predict`` (evaluate a persisted map),
``experiment`` (named Monte Carlo presets), ``features`` (dump extracted
features at random sensor locations).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import experiments, features, io, kernels, localization
from .errors import ConfigurationError, SolverError
from .evaluation import ExperimentConfig, mask_features, precompute_grid, _draw_world
from .propagation import sample_sensor_locations, simulate_points
from .scenario import (
    SCENARIO_PRESETS,
    load_scenario,
    preset,
    save_scenario,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"cannot parse JSON {path}: {exc}") from exc


def _scenario_from_config(doc):
    """Scenario from a config section: preset name, file path, or inline."""
    if isinstance(doc, str):
        doc = {"preset": doc}
    if not isinstance(doc, dict):
        raise ConfigurationError("scenario section must be a name, path or object")
    if "preset" in doc:
        kwargs = {
            k: doc[k]
            for k in ("n_transmitters", "bandwidth_hz", "wall_count", "noise_dbm", "seed")
            if k in doc
        }
        return preset(doc["preset"], **kwargs)
    if "path" in doc:
        return load_scenario(doc["path"])
    from .scenario import scenario_from_dict

    return scenario_from_dict(doc)


_FIT_KEYS = {
    "estimator": str,
    "n_train": int,
    "seed": int,
    "lambda": float,
    "sigma": float,
    "lambda_loc": float,
    "sigma_loc": float,
    "eta": float,
    "rank": int,
    "mu": float,
    "gamma_dbw": float,
    "n_features": int,
    "noisy_query": bool,
    "measurement_noise": bool,
    "center_targets": bool,
    "grid_step": float,
    "runs": int,
}


def _experiment_config(doc, seed_override=None):
    if "scenario" not in doc:
        raise ConfigurationError("config is missing the required field 'scenario'")
    scenario = _scenario_from_config(doc["scenario"])
    kwargs = {"scenario": scenario}
    rename = {"lambda": "lam", "lambda_loc": "lam_loc"}
    for key, value in doc.items():
        if key == "scenario":
            continue
        if key not in _FIT_KEYS:
            raise ConfigurationError(f"unknown config field {key!r}")
        kwargs[rename.get(key, key)] = _FIT_KEYS[key](value)
    if seed_override is not None:
        kwargs["seed"] = seed_override
    return ExperimentConfig(**kwargs)


def cmd_scenario(args):
    if args.preset is not None:
        scn = preset(args.preset, seed=args.seed or 0)
        name = args.preset
    elif args.config is not None:
        scn = _scenario_from_config(_load_json(args.config))
        name = os.path.splitext(os.path.basename(args.config))[0]
    else:
        raise ConfigurationError("scenario needs --preset NAME or --config PATH")
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    save_scenario(scn, os.path.join(out, f"{name}.json"))
    grid = precompute_grid(scn)
    io.write_truth_csv(grid, os.path.join(out, f"{name}_true_map.csv"))
    io.write_pgm(
        io.lattice_field(grid, grid.truth), os.path.join(out, f"{name}_true_map.pgm")
    )
    print(f"wrote {name}.json, {name}_true_map.csv, {name}_true_map.pgm in {out}")
    return EXIT_OK


def cmd_fit(args):
    if args.config is None:
        raise ConfigurationError("fit needs --config PATH")
    doc = _load_json(args.config)
    config = _experiment_config(doc, seed_override=args.seed)
    if config.estimator == "locf_completion":
        raise ConfigurationError(
            "estimator 'locf_completion' is experiment-only; fit supports "
            "locf, locf_reduced and locb"
        )
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    grid = precompute_grid(config.scenario, config.grid_step)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        world = _draw_world(config, grid, 0)
        t_samp = config.scenario.sample_period
        if config.estimator == "locb":
            anchors = localization.AnchorSet.from_scenario(config.scenario)
            fitted, report = localization.locb_fit(
                anchors, world.train_pilots, world.targets, t_samp,
                kernels.GaussianKernel(config.sigma_loc), config.lam_loc,
                iters=config.loc_iters, center_targets=config.center_targets,
            )
            train_features = fitted.features
        else:
            train_features = features.feature_matrix_nosync(world.train_pilots, t_samp)
            kernel = kernels.GaussianKernel(config.sigma)
            if config.estimator == "locf_reduced":
                from . import reduction

                if config.rank is not None:
                    basis, reduced = reduction.reduce_features(train_features, rank=config.rank)
                else:
                    basis, reduced = reduction.reduce_features(
                        train_features, eta=config.eta or 0.99
                    )
                fitted = kernels.fit(
                    reduced, world.targets, kernel, config.lam,
                    center_targets=config.center_targets,
                )
                fitted = kernels.with_basis(fitted, basis)
            else:
                fitted = kernels.fit(
                    train_features, world.targets, kernel, config.lam,
                    center_targets=config.center_targets,
                )
    model_path = os.path.join(out, "model.json")
    kernels.save_model(fitted, model_path)
    io.write_feature_csv(
        world.train_points, train_features, os.path.join(out, "training_features.csv")
    )
    print(f"wrote {model_path} and training_features.csv in {out}")
    return EXIT_OK


def cmd_predict(args):
    if args.model is None or args.config is None:
        raise ConfigurationError("predict needs --model PATH and --config PATH")
    doc = _load_json(args.config)
    config = _experiment_config(doc, seed_override=args.seed)
    fitted = kernels.load_model(args.model)
    scenario = config.scenario
    rng = np.random.default_rng(config.seed)
    if args.points is not None:
        pts = np.loadtxt(args.points, delimiter=",", ndmin=2)
    else:
        grid = precompute_grid(scenario, config.grid_step)
        pts = grid.points
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tables = simulate_points(scenario, pts, check_domain=False)
        from .propagation import pilot_noise

        pilots = tables.channels
        if config.noisy_query:
            pilots = pilots + pilot_noise(scenario, pilots.shape, rng)
        t_samp = scenario.sample_period
        if config.estimator == "locb":
            anchors = localization.AnchorSet.from_scenario(scenario)
            values = np.array(
                [
                    localization.locb_predict(fitted, anchors, pilots[i], t_samp,
                                              iters=config.loc_iters)
                    for i in range(pts.shape[0])
                ]
            )
        else:
            query = features.feature_matrix_nosync(pilots, t_samp)
            values = kernels.predict(fitted, query)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "predictions.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y,pred_dbw\n")
        for (x, y), v in zip(pts, np.atleast_1d(values)):
            fh.write(f"{x!r},{y!r},{'' if not np.isfinite(v) else repr(float(v))}\n")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_experiment(args):
    gamma_sweep = None
    if args.gamma_sweep is not None:
        try:
            gamma_sweep = [float(v) for v in args.gamma_sweep.split(",")]
        except ValueError as exc:
            raise ConfigurationError(
                "--gamma-sweep expects comma-separated numbers"
            ) from exc
    out = args.out or args.name
    if args.name in experiments.PRESETS:
        summary = experiments.run_preset(
            args.name, out, runs=args.runs, seed=args.seed or 0,
            jobs=args.jobs, gamma_sweep=gamma_sweep, verbose=args.verbose,
        )
    elif os.path.exists(args.name):
        doc = _load_json(args.name)
        config = _experiment_config(doc, seed_override=args.seed)
        if args.runs is not None:
            from dataclasses import replace

            config = replace(config, runs=args.runs)
        os.makedirs(out, exist_ok=True)
        from .evaluation import run_experiment

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = run_experiment(config, jobs=args.jobs)
        summary = {
            config.estimator: {
                "mean": result.mean,
                "std": result.std,
                "per_run": list(result.per_run),
                "failed": result.failed,
                "avg_missing": result.avg_missing,
            }
        }
        io.write_results_csv(
            [(config.estimator, config.n_train, i, v) for i, v in enumerate(result.per_run)],
            os.path.join(out, "results.csv"),
        )
        io.write_summary_json(summary, os.path.join(out, "summary.json"))
    else:
        raise ConfigurationError(
            f"unknown experiment {args.name!r}; presets: "
            + ", ".join(sorted(experiments.PRESETS))
        )
    print(json.dumps({k: v for k, v in summary.items() if k != "per_run"}, default=str)[:2000])
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_features(args):
    if args.config is None:
        raise ConfigurationError("features needs --config PATH")
    doc = _load_json(args.config)
    config = _experiment_config(doc, seed_override=args.seed)
    scenario = config.scenario
    rng = np.random.default_rng(config.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pts = sample_sensor_locations(scenario, config.n_train, rng)
        tables = simulate_points(scenario, pts, check_domain=False)
        from .propagation import pilot_noise

        pilots = tables.channels + pilot_noise(scenario, tables.channels.shape, rng)
        matrix = features.feature_matrix_nosync(pilots, scenario.sample_period)
        if np.isfinite(config.gamma_dbw):
            incomplete = mask_features(matrix, tables.pilot_powers, config.gamma_dbw)
            matrix = np.where(incomplete.observed, incomplete.values, np.nan)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "features.csv")
    io.write_feature_csv(pts, matrix, path)
    print(f"wrote {path}")
    return EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="locfree",
        description="Location-free spectrum cartography toolkit",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config path")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="RNG seed override")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers")
    common.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario", parents=[common], help="generate a scenario + truth map")
    p.add_argument("--preset", choices=SCENARIO_PRESETS)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("fit", parents=[common], help="fit and persist a power map")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="evaluate a persisted map")
    p.add_argument("--model", help="model blob path")
    p.add_argument("--points", help="CSV of x,y query points (default: whole grid)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("experiment", parents=[common], help="run a named preset or config")
    p.add_argument("name", help="preset name or config path")
    p.add_argument("--runs", type=int, default=None, help="Monte Carlo run count")
    p.add_argument("--gamma-sweep", default=None,
                   help="comma-separated sensitivity thresholds in dBW; use --gamma-sweep=-90,-80 for negative values")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("features", parents=[common], help="dump extracted features")
    p.set_defaults(func=cmd_features)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
