"""Location-free features extracted from received pilot matrices.

Thresholded time-of-arrival and argmax time-difference-of-arrival are the
classic localization features; both jump discontinuously across space in
multipath.  The center-of-mass (CoM) features replace the argmin/argmax by
an energy-weighted mean lag, which varies smoothly with position:

* synchronized receivers: CoM of each estimated impulse response,
* unsynchronized receivers: CoM of the cross-correlation of every pilot
  pair, scaled by T*c into a range difference in meters.

A feature that cannot be extracted (no tap above threshold, all-zero
correlation) is reported as NaN; downstream code treats non-finite entries
as missing.
"""

from dataclasses import dataclass

import numpy as np

from .scenario import SPEED_OF_LIGHT

MISSING = np.nan


def is_missing(values):
    """Missing-entry mask (non-finite entries are missing)."""
    return ~np.isfinite(np.asarray(values, dtype=float))


@dataclass(frozen=True)
class CrossCorrelation:
    """Deterministic finite-sample cross-correlation over the full lag range.

    ``values[j]`` is ``sum_k a[k] * conj(b[k - lags[j]])`` for
    ``lags = -(K-1) ... K-1`` (length 2K-1, unnormalized).
    """

    lags: np.ndarray
    values: np.ndarray


def estimate_impulse_response(pilot_row):
    """Channel estimate from one pilot row.

    For unit-sample pilots the received row already is the (noisy) impulse
    response, so this is a pass-through; it exists as a seam where
    matched-filter deconvolution could be substituted for other pilots.
    """
    return np.asarray(pilot_row)


def estimate_toa(h, gamma, sample_period):
    """Thresholded time of arrival: T * first tap index with |h[k]| >= gamma.

    Returns NaN when no tap reaches the threshold.
    """
    if gamma <= 0:
        raise ValueError("threshold gamma must be > 0")
    hits = np.flatnonzero(np.abs(np.asarray(h)) >= gamma)
    if hits.size == 0:
        return MISSING
    return sample_period * float(hits[0])


def default_toa_threshold(noise_variance):
    """Detection threshold: 4 noise standard deviations per complex sample."""
    return 4.0 * np.sqrt(noise_variance)


def com_impulse(h):
    """Energy-weighted mean tap index of an impulse response (NaN if empty)."""
    energy = np.abs(np.asarray(h)) ** 2
    total = energy.sum()
    if total == 0.0:
        return MISSING
    return float(energy @ np.arange(len(energy)) / total)


def cross_correlate(row_a, row_b):
    """Finite-sample cross-correlation c[i] = sum_k a[k] conj(b[k-i]).

    Unnormalized (pilots carry unit energy); full lag range -(K-1)..K-1.
    """
    a = np.asarray(row_a, dtype=complex)
    b = np.asarray(row_b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError("pilot rows must have equal length")
    k = a.shape[0]
    return CrossCorrelation(
        lags=np.arange(-(k - 1), k),
        values=np.correlate(a, b, mode="full"),
    )


def estimate_tdoa(corr, sample_period):
    """Argmax time difference of arrival: T * lag of maximum |c[i]|.

    Exact magnitude ties break toward the smallest |lag|, then toward the
    negative lag.  Returns NaN for an all-zero correlation.
    """
    mag = np.abs(corr.values)
    peak = mag.max()
    if peak == 0.0:
        return MISSING
    candidates = corr.lags[mag == peak]
    best = min(candidates, key=lambda lag: (abs(lag), lag))
    return sample_period * float(best)


def com_crosscorr(corr):
    """Energy-weighted mean lag of a cross-correlation (NaN if all-zero)."""
    energy = np.abs(corr.values) ** 2
    total = energy.sum()
    if total == 0.0:
        return MISSING
    return float(energy @ corr.lags / total)


def pair_indices(n_transmitters):
    """Lexicographic transmitter pairs (0,1), (0,2), ..., (L-2, L-1)."""
    return [
        (i, j)
        for i in range(n_transmitters - 1)
        for j in range(i + 1, n_transmitters)
    ]


@dataclass(frozen=True)
class FeatureVector:
    """Feature entries plus the kind/scale they were extracted with.

    kind  -- "toa" | "com_sync" | "tdoa" | "com_nosync"
    scale -- "lag" (sample/lag units) or "meters"
    """

    values: np.ndarray
    kind: str
    scale: str

    def __len__(self):
        return len(self.values)


def feature_vector_sync(pilot):
    """Per-transmitter impulse-response CoM features (lag units), length L."""
    pilot = np.asarray(pilot)
    values = np.array([com_impulse(estimate_impulse_response(row)) for row in pilot])
    return FeatureVector(values=values, kind="com_sync", scale="lag")


def feature_vector_nosync(pilot, sample_period):
    """Pairwise cross-correlation CoM features scaled to meters.

    Entry order follows pair_indices; length M = L(L-1)/2.  Requires at
    least two pilot rows.
    """
    pilot = np.asarray(pilot)
    if pilot.shape[0] < 2:
        raise ValueError("nosync features need at least two pilot rows")
    scale = sample_period * SPEED_OF_LIGHT
    values = np.array(
        [
            scale * com_crosscorr(cross_correlate(pilot[i], pilot[j]))
            for i, j in pair_indices(pilot.shape[0])
        ]
    )
    return FeatureVector(values=values, kind="com_nosync", scale="meters")


def toa_feature_vector(pilot, gamma, sample_period):
    """Per-transmitter thresholded-ToA features scaled to meters, length L."""
    pilot = np.asarray(pilot)
    values = np.array(
        [SPEED_OF_LIGHT * estimate_toa(row, gamma, sample_period) for row in pilot]
    )
    return FeatureVector(values=values, kind="toa", scale="meters")


def feature_matrix_nosync(pilots, sample_period):
    """Stacked nosync feature columns for a batch of pilot matrices.

    pilots -- (n, L, K) array of received pilot matrices
    returns (M, n) with M = L(L-1)/2
    """
    pilots = np.asarray(pilots)
    n = pilots.shape[0]
    m = pilots.shape[1] * (pilots.shape[1] - 1) // 2
    out = np.empty((m, n))
    for idx in range(n):
        out[:, idx] = feature_vector_nosync(pilots[idx], sample_period).values
    return out


def feature_matrix_sync(pilots):
    """Stacked sync (impulse CoM) feature columns: (L, n) for (n, L, K) pilots."""
    pilots = np.asarray(pilots)
    out = np.empty((pilots.shape[1], pilots.shape[0]))
    for idx in range(pilots.shape[0]):
        out[:, idx] = feature_vector_sync(pilots[idx]).values
    return out
