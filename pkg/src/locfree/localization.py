"""Location-based baseline: TDoA multilateration plus a kernel map over
estimated coordinates.

The localizer first solves the squared-range-difference system.  With
anchor 1 as reference, measured range differences
r_l = ||x - a_1|| - ||x - a_l|| give, for the unknowns (x, d_1) with
d_1 = ||x - a_1||,

    2 (a_l - a_1)^T x - 2 r_l d_1 = ||a_l||^2 - ||a_1||^2 - r_l^2 ,

a linear system solved by least squares.  The squared system amplifies
measurement error and ignores the coupling d_1 = ||x - a_1||, so the
linear solution only initializes an iteratively reweighted Gauss-Newton
descent on the raw range-difference residuals

    g_l(x) = ||x - a_1|| - ||x - a_l|| - r_l ,

with weights w_l = 1/(g_l^2 + eps) recomputed each round to down-weight
multipath-corrupted rows.  Estimates are never clamped to the region:
badly corrupted features yield wild but finite coordinates, which is
exactly what the map learner then has to cope with.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .features import cross_correlate, estimate_tdoa
from .kernels import fit, predict
from .scenario import SPEED_OF_LIGHT

_REWEIGHT_EPS = 1e-6
# Weight of the quadratic pull toward the anchor centroid (m^-2 scale);
# irrelevant at in-region scales, decisive against asymptote ghosts.
_CENTROID_PRIOR = 1e-4


@dataclass(frozen=True)
class AnchorSet:
    """Pilot transmitter positions; index 0 is the reference anchor."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[0] < 3 or pos.shape[1] != 2:
            raise ConfigurationError("2-D localization needs at least 3 anchors")
        centered = pos - pos.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
            raise ConfigurationError("anchors must not be collinear")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_scenario(cls, scenario):
        return cls(scenario.tx_positions())

    def __len__(self):
        return self.positions.shape[0]


@dataclass(frozen=True)
class LocationEstimate:
    """Estimated coordinates and the final weighted least-squares cost."""

    x: float
    y: float
    residual: float

    @property
    def xy(self):
        return np.array([self.x, self.y])


def tdoa_feature_set(pilot, sample_period):
    """Range differences c * TDoA(1, l') against the reference pilot.

    Returns an (L-1,) vector in meters with NaN where the pair correlation
    carries no energy (dead pilot).
    """
    pilot = np.asarray(pilot)
    if pilot.shape[0] < 2:
        raise ValueError("need at least two pilot rows")
    return np.array(
        [
            SPEED_OF_LIGHT
            * estimate_tdoa(cross_correlate(pilot[0], pilot[l]), sample_period)
            for l in range(1, pilot.shape[0])
        ]
    )


def _batch_residuals(x, a0, others, r):
    """Residuals and Jacobians for stacked points x (n, 2).

    Returns g (n, P) and jac (n, P, 2) for P usable range differences.
    """
    d0 = np.maximum(np.linalg.norm(x - a0, axis=1), 1e-12)
    dl = np.maximum(np.linalg.norm(x[:, None, :] - others[None], axis=2), 1e-12)
    g = (d0[:, None] - dl) - r
    jac = (x - a0)[:, None, :] / d0[:, None, None] - (
        x[:, None, :] - others[None]
    ) / dl[:, :, None]
    return g, jac


def _batch_cost(x, g, weights, center, tau):
    return np.sum(weights * g**2, axis=1) + tau * np.sum((x - center) ** 2, axis=1)


def _batch_gauss_newton(x, a0, others, r, weights, center, tau, steps=12):
    """Damped Gauss-Newton descent of sum_l w_l g_l(x)^2 + tau ||x - c||^2,
    vectorized over stacked points.

    The tiny quadratic prior toward the anchor centroid is negligible at
    in-region scales but removes the spurious minima the range-difference
    cost has along hyperbola asymptotes (quantized measurements can be
    "explained" by points at astronomic distances).
    """
    g, jac = _batch_residuals(x, a0, others, r)
    cost = _batch_cost(x, g, weights, center, tau)
    for _ in range(steps):
        jw = jac * weights[:, :, None]
        h11 = np.sum(jw[:, :, 0] * jac[:, :, 0], axis=1) + tau
        h22 = np.sum(jw[:, :, 1] * jac[:, :, 1], axis=1) + tau
        h12 = np.sum(jw[:, :, 0] * jac[:, :, 1], axis=1)
        damp = 1e-12 * (h11 + h22)
        h11 = h11 + damp
        h22 = h22 + damp
        b1 = -(np.sum(jw[:, :, 0] * g, axis=1) + tau * (x[:, 0] - center[0]))
        b2 = -(np.sum(jw[:, :, 1] * g, axis=1) + tau * (x[:, 1] - center[1]))
        det = h11 * h22 - h12**2
        det = np.where(np.abs(det) > 1e-300, det, 1.0)
        delta = np.stack([(h22 * b1 - h12 * b2) / det, (h11 * b2 - h12 * b1) / det], axis=1)
        # Backtracking line search, vectorized: halve steps where the full
        # Gauss-Newton step does not decrease the cost.
        scale = np.ones(x.shape[0])
        accepted = np.zeros(x.shape[0], dtype=bool)
        x_new = x.copy()
        for _ in range(12):
            trial = np.where(accepted[:, None], x_new, x + scale[:, None] * delta)
            g_t, _ = _batch_residuals(trial, a0, others, r)
            cost_t = _batch_cost(trial, g_t, weights, center, tau)
            improve = cost_t <= cost
            newly = improve & ~accepted
            x_new[newly] = trial[newly]
            accepted |= improve
            if accepted.all():
                break
            scale = np.where(accepted, scale, scale / 2.0)
        x = np.where(accepted[:, None], x_new, x)
        g, jac = _batch_residuals(x, a0, others, r)
        new_cost = _batch_cost(x, g, weights, center, tau)
        if np.all(cost - new_cost < 1e-14 * (1.0 + new_cost)):
            cost = new_cost
            break
        cost = new_cost
    return x, cost


def _srdls_batch(pos, diffs, iters):
    """Vectorized iteratively reweighted range-difference localization.

    pos   -- (L, 2) anchor positions, row 0 the reference
    diffs -- (n, L-1) range differences, all finite.
    Returns estimates (n, 2) with NaN rows for rank-deficient systems, and
    the final data costs (n,).
    """
    a0 = pos[0]
    others = pos[1:]
    n = diffs.shape[0]
    # Linear squared-range-difference init.
    a_cols = np.broadcast_to(2.0 * (others - a0), (n,) + others.shape)
    a = np.concatenate([a_cols, -2.0 * diffs[:, :, None]], axis=2)
    b = (np.sum(others**2, axis=1) - np.sum(a0**2))[None, :] - diffs**2
    if a.shape[1] < 3:
        # fewer rows than unknowns (x, y, d_0): rank-deficient by construction
        return np.full((n, 2), np.nan), np.full(n, np.nan)
    s = np.linalg.svd(a, compute_uv=False)
    solvable = s[:, -1] > 1e-9 * s[:, 0]
    if not np.any(solvable):
        return np.full((n, 2), np.nan), np.full(n, np.nan)
    gram = np.einsum("npi,npj->nij", a, a)
    gram[~solvable] = np.eye(3)
    rhs = np.einsum("npi,np->ni", a, b)
    linear = np.linalg.solve(gram, rhs[:, :, None])[:, :2, 0]
    centroid = pos.mean(axis=0)
    starts = [linear, np.broadcast_to(centroid, (n, 2))]
    starts += [np.broadcast_to(p + 0.5, (n, 2)) for p in pos]
    tau = _CENTROID_PRIOR
    best_x = np.full((n, 2), np.nan)
    best_cost = np.full(n, np.inf)
    for start in starts:
        x = np.array(start, dtype=float)
        weights = np.ones_like(diffs)
        cost = np.full(n, np.inf)
        for _ in range(max(iters, 1)):
            x, cost = _batch_gauss_newton(x, a0, others, diffs, weights, centroid, tau)
            g, _ = _batch_residuals(x, a0, others, diffs)
            # Scale-aware reweighting: eps at the residual noise floor keeps
            # rows within the floor equally weighted (averaging preserved)
            # while still suppressing multipath-biased outlier rows.
            eps = np.maximum(np.median(g**2, axis=1), _REWEIGHT_EPS)
            weights = 1.0 / (g**2 + eps[:, None])
        better = cost < best_cost
        best_x[better] = x[better]
        best_cost[better] = cost[better]
    # Prior-free polish: the prior has done its job (basin selection); a last
    # local descent without it removes its small bias, restoring exactness on
    # consistent inputs.
    g, _ = _batch_residuals(best_x, a0, others, diffs)
    eps = np.maximum(np.median(g**2, axis=1), _REWEIGHT_EPS)
    weights = 1.0 / (g**2 + eps[:, None])
    best_x, _ = _batch_gauss_newton(
        best_x, a0, others, diffs, weights, centroid, 0.0, steps=8
    )
    g, _ = _batch_residuals(best_x, a0, others, diffs)
    data_cost = np.sum(weights * g**2, axis=1)
    best_x[~solvable] = np.nan
    data_cost[~solvable] = np.nan
    return best_x, data_cost


def srdls_localize(anchors, range_diffs, iters=3):
    """Iteratively reweighted range-difference least squares.

    range_diffs[l-1] = ||x - a_0|| - ||x - a_l||, NaN entries are skipped.
    The squared-range-difference linear solve initializes ``iters`` rounds
    of residual-reweighted Gauss-Newton refinement (multi-started to avoid
    the squared system's occasional blowups and near-anchor ghost valleys).
    Returns a LocationEstimate, or None when fewer than two usable rows
    remain or the linear system is rank-deficient (collinear usable
    anchors).
    """
    diffs = np.asarray(range_diffs, dtype=float)
    if diffs.shape[0] != len(anchors) - 1:
        raise ValueError("expected one range difference per non-reference anchor")
    usable = np.flatnonzero(np.isfinite(diffs))
    if usable.size < 2:
        return None
    pos = anchors.positions
    sub = np.vstack([pos[0], pos[usable + 1]])
    xy, cost = _srdls_batch(sub, diffs[usable][None, :], iters)
    if not np.isfinite(xy[0, 0]):
        return None
    return LocationEstimate(x=float(xy[0, 0]), y=float(xy[0, 1]), residual=float(cost[0]))


@dataclass(frozen=True)
class LocBFitReport:
    """Per-measurement localization outcomes of a baseline fit.

    estimates -- (N, 2) estimated coordinates, NaN rows where localization
                 failed (those measurements were dropped from the fit)
    residuals -- (N,) final weighted costs (NaN for failures)
    """

    estimates: np.ndarray
    residuals: np.ndarray

    @property
    def used(self):
        return np.isfinite(self.estimates[:, 0])

    @property
    def n_dropped(self):
        return int(np.sum(~self.used))


def localize_batch(anchors, pilots, sample_period, iters=3):
    """Localize every pilot matrix in an (N, L, K) stack.

    Points whose range-difference vector is fully observed go through one
    vectorized solve; points with missing differences fall back to the
    per-point path.
    """
    pilots = np.asarray(pilots)
    n = pilots.shape[0]
    diffs = np.stack([tdoa_feature_set(pilots[i], sample_period) for i in range(n)])
    estimates = np.full((n, 2), np.nan)
    residuals = np.full(n, np.nan)
    complete = np.all(np.isfinite(diffs), axis=1)
    if np.any(complete):
        xy, cost = _srdls_batch(anchors.positions, diffs[complete], iters)
        estimates[complete] = xy
        residuals[complete] = cost
    for i in np.flatnonzero(~complete):
        est = srdls_localize(anchors, diffs[i], iters=iters)
        if est is not None:
            estimates[i] = (est.x, est.y)
            residuals[i] = est.residual
    return estimates, residuals


def locb_fit(anchors, pilots, targets, sample_period, kernel, lam, iters=3,
             center_targets=False):
    """Localization-based map fit: estimate coordinates, then ridge-regress.

    Measurements whose localization fails are dropped (reported in the
    LocBFitReport).  The regression is the same closed-form kernel ridge
    solver used by the feature-based estimator.
    """
    targets = np.asarray(targets, dtype=float)
    estimates, residuals = localize_batch(anchors, pilots, sample_period, iters=iters)
    report = LocBFitReport(estimates=estimates, residuals=residuals)
    used = report.used
    if used.sum() < 2:
        raise ConfigurationError("too few localizable measurements to fit a map")
    fitted = fit(
        estimates[used].T, targets[used], kernel, lam, center_targets=center_targets
    )
    return fitted, report


def locb_predict(fitted, anchors, pilot, sample_period, iters=3):
    """Map value at a query pilot matrix; NaN when localization fails."""
    est = srdls_localize(
        anchors, tdoa_feature_set(np.asarray(pilot), sample_period), iters=iters
    )
    if est is None:
        return np.nan
    return predict(fitted, est.xy)


def write_location_csv(path, true_xy, estimates, residuals):
    """Location-estimate dump: x_true,y_true,x_est,y_est,residual rows."""
    true_xy = np.asarray(true_xy, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_true", "y_true", "x_est", "y_est", "residual"])
        for (xt, yt), (xe, ye), res in zip(true_xy, estimates, residuals):
            row = [repr(float(xt)), repr(float(yt))]
            row += (
                ["", "", ""]
                if not np.isfinite(xe)
                else [repr(float(xe)), repr(float(ye)), repr(float(res))]
            )
            writer.writerow(row)
