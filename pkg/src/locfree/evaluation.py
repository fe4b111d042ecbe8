"""Monte Carlo evaluation: NMSE, sensitivity masking, experiment runner.

A run draws sensor locations, synthesizes noisy pilots and power
measurements, fits the configured estimator, predicts the map at every
admissible grid point from (by default noisy) query pilots, and scores

    NMSE = mean (p - p_hat)^2 / mean (p - p_bar)^2

against the true map, where p_bar is the spatial average -- the error of
the best data-agnostic estimator, so NMSE = 1 means "no better than
predicting the average everywhere".

Runs are independent and reproducible: run i uses a fresh generator
seeded with ``seed + i``, and all noise draws happen in a fixed order
before estimator-specific work, so different estimator kinds under the
same seed see identical worlds (common random numbers).
"""

import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import completion, features, kernels, localization, reduction
from .errors import ConfigurationError, SolverError
from .propagation import (
    evaluation_grid,
    measurement_noise_std,
    pilot_noise,
    sample_sensor_locations,
    simulate_points,
)

log = logging.getLogger(__name__)

ESTIMATORS = ("locf", "locf_reduced", "locf_completion", "locb")


def nmse(truth, prediction, p_bar):
    """Normalized mean square error of a map prediction over a grid."""
    truth = np.asarray(truth, dtype=float)
    prediction = np.asarray(prediction, dtype=float)
    if truth.shape != prediction.shape:
        raise ValueError("truth and prediction grids must be aligned")
    denom = np.mean((truth - p_bar) ** 2)
    if denom <= 0:
        raise ConfigurationError("constant truth field: NMSE denominator is zero")
    return float(np.mean((truth - prediction) ** 2) / denom)


def mask_features(feature_matrix, tx_powers, gamma_dbw, pairs=None):
    """Missing-feature mask from a pilot sensitivity threshold.

    A pairwise feature at one location is missing when the received power
    of either associated pilot falls below ``gamma_dbw``.  Entries that are
    non-finite (failed extraction) are missing regardless of power.

    feature_matrix -- (M, N) pairwise features
    tx_powers      -- (N, L) per-location received pilot powers in dBW
    """
    values = np.asarray(feature_matrix, dtype=float)
    powers = np.asarray(tx_powers, dtype=float)
    if pairs is None:
        pairs = features.pair_indices(powers.shape[1])
    if len(pairs) != values.shape[0]:
        raise ValueError("one pair per feature row is required")
    pair_min = np.stack(
        [np.minimum(powers[:, i], powers[:, j]) for i, j in pairs], axis=0
    )
    observed = (pair_min >= gamma_dbw) & np.isfinite(values)
    return completion.IncompleteFeatureMatrix(values=values, observed=observed)


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo experiment: scenario, estimator kind, hyperparameters."""

    scenario: object
    estimator: str = "locf"
    n_train: int = 300
    runs: int = 20
    seed: int = 0
    grid_step: float = 1.0
    lam: float = 1.9e-4          # feature-based ridge weight
    sigma: float = 37.0          # feature-based kernel bandwidth (m)
    lam_loc: float = 3.3e-3      # location-based ridge weight
    sigma_loc: float = 0.5       # location-based kernel bandwidth (m)
    eta: float = None            # energy fraction for rank selection
    rank: int = None             # fixed reduced rank (defaults to L-1 where needed)
    mu: float = 5.42             # query-recovery regularization
    gamma_dbw: float = -np.inf   # pilot sensitivity threshold
    n_features: int = None       # random feature subset size (locf only)
    noisy_query: bool = True     # noisy pilots at evaluation points
    measurement_noise: bool = True
    center_targets: bool = False
    loc_iters: int = 3
    diagnostics_dir: str = None  # completion iteration logs land here if set

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(
                f"unknown estimator {self.estimator!r}; choose from {ESTIMATORS}"
            )
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        if self.n_train < 2:
            raise ConfigurationError("n_train must be >= 2")


@dataclass(frozen=True)
class NmseResult:
    """Mean/std NMSE across runs, per-run values, and the exclusion count."""

    mean: float
    std: float
    per_run: tuple
    failed: int = 0
    avg_missing: float = 0.0  # average missing feature count per location


@dataclass(frozen=True)
class PrecomputedGrid:
    """Scenario-level tables shared by every run (expensive, compute once)."""

    points: np.ndarray        # (n, 2) admissible cell centers
    shape: tuple              # (ny, nx) full lattice shape
    flat_index: np.ndarray    # positions of admissible cells in the lattice
    truth: np.ndarray         # (n,) true map in dBW
    channels: np.ndarray      # (n, L, K) noiseless query channels
    pilot_powers: np.ndarray  # (n, L) received pilot powers in dBW
    p_bar: float              # spatial average of the true map
    noise_std: float          # power-measurement noise sigma_eps (dB)
    xs: np.ndarray
    ys: np.ndarray


def precompute_grid(scenario, step=1.0):
    points, shape, flat_index, xs, ys = evaluation_grid(scenario, step)
    if points.shape[0] == 0:
        raise ConfigurationError("evaluation grid is empty")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tables = simulate_points(scenario, points, check_domain=False)
    p_bar = float(np.mean(tables.true_power))
    return PrecomputedGrid(
        points=points,
        shape=shape,
        flat_index=flat_index,
        truth=tables.true_power,
        channels=tables.channels,
        pilot_powers=tables.pilot_powers,
        p_bar=p_bar,
        noise_std=measurement_noise_std(scenario, p_bar=p_bar),
        xs=xs,
        ys=ys,
    )


@dataclass
class RunWorld:
    """Everything a single run draws before estimator-specific work."""

    train_points: np.ndarray
    train_pilots: np.ndarray
    train_powers: np.ndarray   # (N, L) pilot powers in dBW at training points
    targets: np.ndarray
    query_pilots: np.ndarray
    rng: np.random.Generator


def _draw_world(config, grid, run_idx):
    scenario = config.scenario
    rng = np.random.default_rng(config.seed + run_idx)
    pts = sample_sensor_locations(scenario, config.n_train, rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tables = simulate_points(scenario, pts, check_domain=False)
    train_pilots = tables.channels + pilot_noise(scenario, tables.channels.shape, rng)
    noise_std = grid.noise_std if config.measurement_noise else 0.0
    targets = tables.true_power + (
        rng.normal(0.0, noise_std, config.n_train) if noise_std > 0 else 0.0
    )
    query_pilots = grid.channels
    if config.noisy_query:
        query_pilots = query_pilots + pilot_noise(scenario, grid.channels.shape, rng)
    return RunWorld(
        train_points=pts,
        train_pilots=train_pilots,
        train_powers=tables.pilot_powers,
        targets=targets,
        query_pilots=query_pilots,
        rng=rng,
    )


def _predict_locf(config, grid, world):
    t_samp = config.scenario.sample_period
    train_f = features.feature_matrix_nosync(world.train_pilots, t_samp)
    query_f = features.feature_matrix_nosync(world.query_pilots, t_samp)
    if config.n_features is not None:
        subset = np.sort(
            world.rng.choice(train_f.shape[0], size=config.n_features, replace=False)
        )
        train_f = train_f[subset]
        query_f = query_f[subset]
    kernel = kernels.GaussianKernel(config.sigma)
    fitted = kernels.fit(
        train_f, world.targets, kernel, config.lam, center_targets=config.center_targets
    )
    return kernels.predict(fitted, query_f)


def _predict_locf_reduced(config, grid, world):
    t_samp = config.scenario.sample_period
    train_f = features.feature_matrix_nosync(world.train_pilots, t_samp)
    query_f = features.feature_matrix_nosync(world.query_pilots, t_samp)
    if config.rank is not None:
        basis, reduced = reduction.reduce_features(train_f, rank=config.rank)
    else:
        basis, reduced = reduction.reduce_features(train_f, eta=config.eta or 0.99)
    kernel = kernels.GaussianKernel(config.sigma)
    fitted = kernels.fit(
        reduced, world.targets, kernel, config.lam, center_targets=config.center_targets
    )
    fitted = kernels.with_basis(fitted, basis)
    return kernels.predict(fitted, query_f)


def _predict_locf_completion(config, grid, world, run_idx=0):
    scenario = config.scenario
    t_samp = scenario.sample_period
    train_f = features.feature_matrix_nosync(world.train_pilots, t_samp)
    query_f = features.feature_matrix_nosync(world.query_pilots, t_samp)
    incomplete = mask_features(train_f, world.train_powers, config.gamma_dbw)
    rank = config.rank if config.rank is not None else scenario.n_transmitters - 1
    # Noisy structured masks: run the plain monotone iteration to its noise
    # floor rather than the accelerated steps (which can park in a worse
    # basin on approximately-low-rank data).
    completed = completion.svp_complete(
        incomplete,
        completion.CompletionConfig(rank=rank, max_iters=2000, adaptive_step=False),
    )
    if config.diagnostics_dir:
        completion.write_iteration_log(
            completed,
            os.path.join(
                config.diagnostics_dir,
                f"svp_gamma{config.gamma_dbw:+.1f}_run{run_idx}.csv",
            ),
        )
    basis = completion.gram_schmidt_basis(completed.matrix, rank)
    reduced_train = basis.T @ completed.matrix
    ctx = completion.build_recovery_context(basis, reduced_train, config.mu)
    kernel = kernels.GaussianKernel(config.sigma)
    fitted = kernels.fit(
        reduced_train, world.targets, kernel, config.lam,
        center_targets=config.center_targets,
    )
    query_masked = mask_features(query_f, grid.pilot_powers, config.gamma_dbw)
    fallback = float(np.mean(world.targets))
    n_query = query_f.shape[1]
    predictions = np.empty(n_query)
    for i in range(n_query):
        recovered = completion.rls_recover_query(
            ctx, query_masked.values[:, i], query_masked.observed[:, i]
        )
        if recovered.status == "empty":
            predictions[i] = fallback
        else:
            predictions[i] = kernels.predict(fitted, recovered.reduced)
    missing = float(np.mean(np.sum(~incomplete.observed, axis=0)))
    return predictions, missing


def _predict_locb(config, grid, world):
    scenario = config.scenario
    t_samp = scenario.sample_period
    anchors = localization.AnchorSet.from_scenario(scenario)
    kernel = kernels.GaussianKernel(config.sigma_loc)
    fitted, report = localization.locb_fit(
        anchors, world.train_pilots, world.targets, t_samp, kernel,
        config.lam_loc, iters=config.loc_iters,
        center_targets=config.center_targets,
    )
    if report.n_dropped:
        log.warning("dropped %d unlocalizable measurements", report.n_dropped)
    estimates, _ = localization.localize_batch(
        anchors, world.query_pilots, t_samp, iters=config.loc_iters
    )
    located = np.isfinite(estimates[:, 0])
    predictions = np.full(estimates.shape[0], float(np.mean(world.targets)))
    if np.any(located):
        predictions[located] = kernels.predict(fitted, estimates[located].T)
    if np.any(~located):
        log.warning(
            "substituted the training average at %d unlocalizable query points",
            int(np.sum(~located)),
        )
    return predictions


def run_once(config, grid, run_idx):
    """One Monte Carlo run; returns (nmse, avg_missing_feature_count)."""
    world = _draw_world(config, grid, run_idx)
    missing = 0.0
    if config.estimator == "locf":
        predictions = _predict_locf(config, grid, world)
    elif config.estimator == "locf_reduced":
        predictions = _predict_locf_reduced(config, grid, world)
    elif config.estimator == "locf_completion":
        predictions, missing = _predict_locf_completion(config, grid, world, run_idx)
    else:
        predictions = _predict_locb(config, grid, world)
    return nmse(grid.truth, predictions, grid.p_bar), missing


def _run_safely(args):
    config, grid, run_idx = args
    try:
        return run_idx, run_once(config, grid, run_idx), None
    except (SolverError, np.linalg.LinAlgError) as exc:
        return run_idx, None, f"{type(exc).__name__}: {exc}"


def run_experiment(config, grid=None, jobs=1):
    """Monte Carlo NMSE of one estimator configuration.

    Runs are seeded ``config.seed + run_index`` and are order-insensitive;
    failed runs are excluded and counted.  ``grid`` may carry a shared
    PrecomputedGrid to amortize the scenario tables across experiments.
    """
    if grid is None:
        grid = precompute_grid(config.scenario, config.grid_step)
    tasks = [(config, grid, i) for i in range(config.runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_safely, tasks))
    else:
        outcomes = [_run_safely(t) for t in tasks]
    outcomes.sort(key=lambda item: item[0])
    values, missing, failed = [], [], 0
    for run_idx, result, error in outcomes:
        if error is None:
            values.append(result[0])
            missing.append(result[1])
        else:
            failed += 1
            log.warning("run %d excluded: %s", run_idx, error)
    if not values:
        raise SolverError("every Monte Carlo run failed")
    values = np.asarray(values)
    return NmseResult(
        mean=float(values.mean()),
        std=float(values.std(ddof=1)) if len(values) > 1 else 0.0,
        per_run=tuple(values.tolist()),
        failed=failed,
        avg_missing=float(np.mean(missing)),
    )


def pooled_std(result_a, result_b):
    """Pooled spread of two run sets: sqrt((std_a^2 + std_b^2) / 2)."""
    return float(np.sqrt((result_a.std**2 + result_b.std**2) / 2.0))
