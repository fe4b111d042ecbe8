"""Multipath synthesis: ray tracing, band-limited channels, pilots, power maps.

The propagation model is a 2-D multi-wall ray model.  For a transmitter /
receiver pair it enumerates

* the direct ray,
* up to ``MAX_FIRST_ORDER`` strongest single-bounce specular reflections
  (image method, one image per wall),
* up to ``MAX_SECOND_ORDER`` strongest wall-to-wall double bounces
  (double-image method over ordered wall pairs).

Path amplitude combines the free-space magnitude law
``alpha = c / (4 pi f_c d)`` over the unfolded path length d, an
angle-dependent reflection coefficient at each bounce, and a fixed
transmission loss for every wall crossed by any leg of the ray.  A path's
delay is its unfolded length divided by the speed of light.

Band-limited sampling at the Nyquist rate T = 1/B turns a path set into K
complex taps::

    h[k] = sum_p alpha_p * exp(-j 2 pi f_c t_p) * sinc(k - t_p / T)

which is also the noiseless received pilot row for unit-sample pilots.
"""

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, DomainError
from .scenario import FAR_FIELD_WAVELENGTHS, SPEED_OF_LIGHT

MAX_FIRST_ORDER = 5
MAX_SECOND_ORDER = 5

# Strict-interior tolerance for "the leg crosses this wall"; keeps the
# reflection point itself from counting as a crossing of its own wall.
_EPS_T = 1e-9


@dataclass(frozen=True)
class PathComponent:
    """One ray: real amplitude, positive delay (s), bounce count 0/1/2."""

    amplitude: float
    delay: float
    order: int


@dataclass(frozen=True)
class PointTables:
    """Batched per-point synthesis products for one scenario.

    channels     -- (n, L, K) complex noiseless channel taps
    pilot_powers -- (n, L) received pilot power in dBW (noiseless)
    true_power   -- (n,) aggregate received power map value in dBW
    """

    channels: np.ndarray
    pilot_powers: np.ndarray
    true_power: np.ndarray


def _wall_geometry(scenario):
    """Stacked wall arrays: endpoints, unit normals, crossing amplitude factors."""
    walls = scenario.walls
    if not walls:
        zeros = np.zeros((0, 2))
        return zeros, zeros, zeros, np.zeros(0)
    p1 = np.array([w.p1 for w in walls], dtype=float)
    p2 = np.array([w.p2 for w in walls], dtype=float)
    d = p2 - p1
    normals = np.stack([-d[:, 1], d[:, 0]], axis=1)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    cross_factor = 10.0 ** (-np.array([w.loss_db for w in walls]) / 20.0)
    return p1, p2, normals, cross_factor


def _segment_params(starts, ends, a, b):
    """Intersection parameters of segments (starts->ends) with segment (a, b).

    Returns (t, u, ok): ``t`` along start->end, ``u`` along a->b, ``ok``
    False where the segment is parallel to the wall.
    """
    starts = np.atleast_2d(starts)
    ends = np.atleast_2d(ends)
    r = ends - starts
    s = b - a
    denom = r[:, 0] * s[1] - r[:, 1] * s[0]
    ok = np.abs(denom) > 1e-15
    safe = np.where(ok, denom, 1.0)
    qp = a - starts
    t = (qp[:, 0] * s[1] - qp[:, 1] * s[0]) / safe
    u = (qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]) / safe
    return t, u, ok


def _crossing_factors(starts, ends, geom, exclude=()):
    """Amplitude factor from wall crossings along each leg (strict interior)."""
    p1, p2, _, factors = geom
    n = np.atleast_2d(ends).shape[0]
    out = np.ones(n)
    for w in range(p1.shape[0]):
        if w in exclude:
            continue
        t, u, ok = _segment_params(starts, ends, p1[w], p2[w])
        crossed = ok & (t > _EPS_T) & (t < 1.0 - _EPS_T) & (u >= 0.0) & (u <= 1.0)
        out = np.where(crossed, out * factors[w], out)
    return out


def _mirror(point, p1, normal):
    return point - 2.0 * np.dot(point - p1, normal) * normal


def _friis_amplitude(distance, carrier_hz):
    return SPEED_OF_LIGHT / (4.0 * np.pi * carrier_hz * distance)


def _top_k(amps, delays, k):
    """Keep the k strongest |amplitude| per row; weaker entries zeroed out."""
    n, c = amps.shape
    if c <= k:
        return amps, delays
    idx = np.argpartition(-np.abs(amps), k - 1, axis=1)[:, :k]
    rows = np.arange(n)[:, None]
    return amps[rows, idx], delays[rows, idx]


def _trace_tx(scenario, tx, rx, geom):
    """All kept ray amplitudes/delays from one transmitter to rx (n, 2).

    Returns (amps, delays, orders): (n, P) float arrays plus a (P,) order
    vector; invalid candidate slots carry zero amplitude.
    """
    walls = scenario.walls
    n_walls = len(walls)
    p1, p2, normals, _ = geom
    rx = np.atleast_2d(np.asarray(rx, dtype=float))
    n = rx.shape[0]
    fc = scenario.carrier_hz

    # Direct ray.
    d = np.linalg.norm(rx - tx, axis=1)
    if np.any(d <= 0.0):
        raise DomainError("receiver coincides with a transmitter (near-field singularity)")
    amp_direct = _friis_amplitude(d, fc) * _crossing_factors(tx, rx, geom)
    amps = [amp_direct[:, None]]
    delays = [(d / SPEED_OF_LIGHT)[:, None]]
    orders = [np.zeros(1, dtype=int)]

    # Single-bounce candidates, one per wall.
    first_amp = np.zeros((n, 0))
    first_delay = np.ones((n, 0))
    if n_walls:
        cand_a, cand_d = [], []
        for w in range(n_walls):
            offset = np.dot(tx - p1[w], normals[w])
            if abs(offset) < 1e-12:
                continue  # transmitter on the wall plane: no image
            image = _mirror(tx, p1[w], normals[w])
            t, u, ok = _segment_params(image, rx, p1[w], p2[w])
            valid = ok & (t > _EPS_T) & (t < 1.0 - _EPS_T) & (u >= 0.0) & (u <= 1.0)
            q = image + t[:, None] * (rx - image)
            length = np.linalg.norm(rx - image, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                cos_inc = np.abs((rx - image) @ normals[w]) / length
            refl = walls[w].reflection_amplitude(cos_inc)
            amp = (
                _friis_amplitude(np.maximum(length, 1e-12), fc)
                * refl
                * _crossing_factors(tx, q, geom, exclude=(w,))
                * _crossing_factors(q, rx, geom, exclude=(w,))
            )
            cand_a.append(np.where(valid, amp, 0.0))
            cand_d.append(length / SPEED_OF_LIGHT)
        if cand_a:
            first_amp, first_delay = _top_k(
                np.stack(cand_a, axis=1), np.stack(cand_d, axis=1), MAX_FIRST_ORDER
            )
    if first_amp.shape[1]:
        amps.append(first_amp)
        delays.append(first_delay)
        orders.append(np.ones(first_amp.shape[1], dtype=int))

    # Double-bounce candidates over ordered wall pairs.
    second_amp = np.zeros((n, 0))
    second_delay = np.ones((n, 0))
    if n_walls >= 2:
        cand_a, cand_d = [], []
        for w1 in range(n_walls):
            if abs(np.dot(tx - p1[w1], normals[w1])) < 1e-12:
                continue
            image1 = _mirror(tx, p1[w1], normals[w1])
            for w2 in range(n_walls):
                if w2 == w1:
                    continue
                if abs(np.dot(image1 - p1[w2], normals[w2])) < 1e-12:
                    continue
                image2 = _mirror(image1, p1[w2], normals[w2])
                t2, u2, ok2 = _segment_params(image2, rx, p1[w2], p2[w2])
                valid = ok2 & (t2 > _EPS_T) & (t2 < 1.0 - _EPS_T) & (u2 >= 0.0) & (u2 <= 1.0)
                q2 = image2 + t2[:, None] * (rx - image2)
                t1, u1, ok1 = _segment_params(image1, q2, p1[w1], p2[w1])
                valid &= ok1 & (t1 > _EPS_T) & (t1 < 1.0 - _EPS_T) & (u1 >= 0.0) & (u1 <= 1.0)
                q1 = image1 + t1[:, None] * (q2 - image1)
                length = np.linalg.norm(rx - image2, axis=1)
                leg2 = np.linalg.norm(q2 - image1, axis=1)
                with np.errstate(invalid="ignore", divide="ignore"):
                    cos2 = np.abs((rx - image2) @ normals[w2]) / length
                    cos1 = np.abs((q2 - image1) @ normals[w1]) / np.maximum(leg2, 1e-12)
                refl = walls[w1].reflection_amplitude(cos1) * walls[w2].reflection_amplitude(cos2)
                amp = (
                    _friis_amplitude(np.maximum(length, 1e-12), fc)
                    * refl
                    * _crossing_factors(tx, q1, geom, exclude=(w1,))
                    * _crossing_factors(q1, q2, geom, exclude=(w1, w2))
                    * _crossing_factors(q2, rx, geom, exclude=(w2,))
                )
                cand_a.append(np.where(valid, amp, 0.0))
                cand_d.append(length / SPEED_OF_LIGHT)
        if cand_a:
            second_amp, second_delay = _top_k(
                np.stack(cand_a, axis=1), np.stack(cand_d, axis=1), MAX_SECOND_ORDER
            )
    if second_amp.shape[1]:
        amps.append(second_amp)
        delays.append(second_delay)
        orders.append(np.full(second_amp.shape[1], 2, dtype=int))

    return np.concatenate(amps, axis=1), np.concatenate(delays, axis=1), np.concatenate(orders)


def trace_paths(scenario, tx, rx):
    """Rays between one transmitter and one receiver, sorted by delay.

    Returns the direct path plus the strongest single- and double-bounce
    reflections as a list of PathComponent.
    """
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if np.array_equal(tx, rx):
        raise DomainError("receiver coincides with transmitter (near-field singularity)")
    if not scenario.contains(rx)[0]:
        raise DomainError(f"receiver {tuple(rx)} lies outside the region")
    geom = _wall_geometry(scenario)
    amps, delays, orders = _trace_tx(scenario, tx, rx[None, :], geom)
    paths = [
        PathComponent(float(a), float(t), int(o))
        for a, t, o in zip(amps[0], delays[0], orders)
        if a != 0.0
    ]
    return sorted(paths, key=lambda p: p.delay)


def discretize_channel(paths, scenario):
    """K complex taps of the band-limited channel for a traced path list.

    Implements ``h[k] = sum_p alpha_p exp(-j 2 pi f_c t_p) sinc(k - t_p/T)``
    with sinc(x) = sin(pi x)/(pi x).  Paths whose delay exceeds the tap
    window (t/T > K-1) are kept, with a warning: their energy leaks into
    the sinc tails, and K should be sized to avoid this.
    """
    k_taps = scenario.num_samples
    taps = np.zeros(k_taps, dtype=complex)
    if not paths:
        return taps
    t_samp = scenario.sample_period
    k_grid = np.arange(k_taps)
    overflow = False
    for p in paths:
        frac = p.delay / t_samp
        if frac > k_taps - 1:
            overflow = True
        phase = np.exp(-2j * np.pi * scenario.carrier_hz * p.delay)
        taps += p.amplitude * phase * np.sinc(k_grid - frac)
    if overflow:
        warnings.warn(
            "path delay exceeds the tap window (t/T > K-1); energy leaks into sinc tails",
            stacklevel=2,
        )
    return taps


def _batch_channels(scenario, amps, delays):
    """Taps for (n, P) amplitude/delay path tables -> (n, K) complex."""
    k_taps = scenario.num_samples
    t_samp = scenario.sample_period
    k_grid = np.arange(k_taps)
    out = np.zeros((amps.shape[0], k_taps), dtype=complex)
    for p in range(amps.shape[1]):
        a = amps[:, p]
        if not np.any(a):
            continue
        t = delays[:, p]
        phase = np.exp(-2j * np.pi * scenario.carrier_hz * t)
        out += (a * phase)[:, None] * np.sinc(k_grid[None, :] - (t / t_samp)[:, None])
    return out


def simulate_points(scenario, points, check_domain=True):
    """Noiseless channels, pilot powers and the true power map at given points.

    The true map value aggregates the received power from every transmitter
    over all traced paths::

        p(x) = 10 log10( sum_l sigma_a_l^2 sum_p alpha_{l,p}(x)^2 )  [dBW]
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if check_domain:
        if not np.all(scenario.contains(pts)):
            raise DomainError("all points must lie inside the region")
        if not np.all(scenario.far_field(pts)):
            raise DomainError(
                f"all points must lie at least {FAR_FIELD_WAVELENGTHS} wavelengths "
                "from every transmitter"
            )
    geom = _wall_geometry(scenario)
    txs = scenario.tx_positions()
    powers = scenario.pilot_powers()
    n, n_tx = pts.shape[0], txs.shape[0]
    channels = np.zeros((n, n_tx, scenario.num_samples), dtype=complex)
    rx_power = np.zeros((n, n_tx))
    overflow_limit = (scenario.num_samples - 1) * scenario.sample_period
    overflow = False
    for l in range(n_tx):
        amps, delays, _ = _trace_tx(scenario, txs[l], pts, geom)
        channels[:, l, :] = _batch_channels(scenario, amps, delays)
        rx_power[:, l] = powers[l] * np.sum(amps**2, axis=1)
        if np.any((amps != 0.0) & (delays > overflow_limit)):
            overflow = True
    if overflow:
        warnings.warn(
            "some path delays exceed the tap window (t/T > K-1); "
            "consider increasing num_samples",
            stacklevel=2,
        )
    with np.errstate(divide="ignore"):
        pilot_powers = 10.0 * np.log10(rx_power)
        true_power_dbw = 10.0 * np.log10(np.sum(rx_power, axis=1))
    return PointTables(channels=channels, pilot_powers=pilot_powers, true_power=true_power_dbw)


def true_power(scenario, point):
    """Aggregate noiseless received power at one point, in dBW."""
    tables = simulate_points(scenario, np.asarray(point, dtype=float)[None, :])
    return float(tables.true_power[0])


def synthesize_pilot_matrix(scenario, rx, rng):
    """L x K received pilot matrix: noiseless channel rows plus circular
    complex Gaussian noise of per-sample variance sigma_w^2."""
    tables = simulate_points(scenario, np.asarray(rx, dtype=float)[None, :])
    noiseless = tables.channels[0]
    return noiseless + pilot_noise(scenario, noiseless.shape, rng)


def pilot_noise(scenario, shape, rng):
    """Circular complex Gaussian pilot noise, variance sigma_w^2 per sample."""
    if scenario.noise_variance == 0.0:
        return np.zeros(shape, dtype=complex)
    scale = np.sqrt(scenario.noise_variance / 2.0)
    return rng.normal(0.0, scale, shape) + 1j * rng.normal(0.0, scale, shape)


def sample_sensor_locations(scenario, count, rng):
    """Uniform draws over the region, rejecting the far-field exclusion discs."""
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    x_min, y_min, x_max, y_max = scenario.region
    out = np.empty((count, 2))
    filled = 0
    attempts = 0
    max_attempts = 1000 * count + 10000
    while filled < count:
        draw = min(count - filled, count) * 2
        pts = rng.uniform((x_min, y_min), (x_max, y_max), size=(draw, 2))
        keep = pts[scenario.far_field(pts)]
        take = min(len(keep), count - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
        attempts += draw
        if attempts > max_attempts:
            raise ConfigurationError(
                "far-field exclusion discs leave (almost) no admissible area"
            )
    return out


def evaluation_grid(scenario, step=1.0):
    """Cell-center lattice over the admissible region.

    Returns (points, shape, flat_index, xs, ys): ``points`` are the
    admissible cell centers; ``flat_index`` maps them into the row-major
    (ny, nx) lattice whose rows run from the top (max y) down, which is the
    scan order used by all grid exports.
    """
    x_min, y_min, x_max, y_max = scenario.region
    xs = np.arange(x_min + step / 2.0, x_max, step)
    ys = np.arange(y_min + step / 2.0, y_max, step)[::-1]
    gx, gy = np.meshgrid(xs, ys)
    lattice = np.stack([gx.ravel(), gy.ravel()], axis=1)
    admissible = scenario.far_field(lattice)
    return (
        lattice[admissible],
        (len(ys), len(xs)),
        np.flatnonzero(admissible),
        xs,
        ys,
    )


@lru_cache(maxsize=32)
def spatial_average_power(scenario, step=1.0):
    """Spatial average of the true map over the admissible region.

    Uniform grid quadrature over the cell-center lattice; cached per
    scenario (Scenario is immutable and hashable).
    """
    points, _, _, _, _ = evaluation_grid(scenario, step)
    tables = simulate_points(scenario, points, check_domain=False)
    return float(np.mean(tables.true_power))


def measurement_noise_std(scenario, p_bar=None, snr_db=40.0, step=1.0):
    """Power-measurement noise sigma_eps from the dB-domain SNR rule.

    Solves ``10 log10(p_bar^2 / sigma_eps^2) = snr_db`` for the spatial
    average ``p_bar`` of the map.
    """
    if p_bar is None:
        p_bar = spatial_average_power(scenario, step)
    return abs(p_bar) / 10.0 ** (snr_db / 20.0)


def measure_power(scenario, point, rng, noise_std=None):
    """Noisy power measurement: true map value plus N(0, sigma_eps^2) in dB."""
    if noise_std is None:
        noise_std = measurement_noise_std(scenario)
    value = true_power(scenario, point)
    if noise_std == 0.0:
        return value
    return value + rng.normal(0.0, noise_std)
