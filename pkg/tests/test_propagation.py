import math

import numpy as np
import pytest

from locfree.errors import ConfigurationError, DomainError
from locfree.propagation import (
    PathComponent,
    discretize_channel,
    measure_power,
    measurement_noise_std,
    sample_sensor_locations,
    simulate_points,
    spatial_average_power,
    synthesize_pilot_matrix,
    trace_paths,
    true_power,
)
from locfree.scenario import SPEED_OF_LIGHT, Scenario, Transmitter, WallSegment


def test_free_space_single_path(free_space):
    paths = trace_paths(free_space, (0.0, 0.0), (30.0, 0.0))
    assert len(paths) == 1
    assert paths[0].order == 0
    assert paths[0].delay == pytest.approx(30.0 / SPEED_OF_LIGHT, rel=1e-12)


def test_wall_between_attenuates_by_its_loss(free_space):
    walled = Scenario(
        region=free_space.region,
        walls=(WallSegment(15.0, -4.0, 15.0, 44.0, loss_db=6.0),),
        transmitters=free_space.transmitters,
        noise_variance=0.0,
    )
    direct = [p for p in trace_paths(walled, (0, 0), (30, 0)) if p.order == 0][0]
    reference = trace_paths(free_space, (0, 0), (30, 0))[0]
    assert direct.amplitude == pytest.approx(
        reference.amplitude * 10 ** (-6.0 / 20.0), rel=1e-12
    )


def test_wall_between_never_increases_direct_amplitude(free_space):
    reference = trace_paths(free_space, (0, 0), (30, 0))[0].amplitude
    for loss in (0.0, 3.0, 9.0):
        walled = Scenario(
            region=free_space.region,
            walls=(WallSegment(10.0, -4.0, 10.0, 44.0, loss_db=loss),),
            transmitters=free_space.transmitters,
            noise_variance=0.0,
        )
        direct = [p for p in trace_paths(walled, (0, 0), (30, 0)) if p.order == 0][0]
        assert direct.amplitude <= reference + 1e-18


def _unfolded_reflection_length(tx, rx, y_wall):
    """Image-method oracle: shortest tx -> wall -> rx path by brute search."""
    xs = np.linspace(-5.0, 5.0, 200001)
    lengths = np.hypot(xs - tx[0], y_wall - tx[1]) + np.hypot(rx[0] - xs, rx[1] - y_wall)
    return lengths.min()


def test_single_mirror_wall_reflection_length():
    scn = Scenario(
        region=(-6.0, -1.0, 10.0, 10.0),
        walls=(WallSegment(-5.0, 0.0, 5.0, 0.0),),
        transmitters=(Transmitter(0.0, 1.0),),
        noise_variance=0.0,
    )
    paths = trace_paths(scn, (0.0, 1.0), (2.0, 1.0))
    reflections = [p for p in paths if p.order == 1]
    assert len(reflections) == 1
    length = reflections[0].delay * SPEED_OF_LIGHT
    assert length == pytest.approx(math.sqrt(8.0), rel=1e-9)
    oracle = _unfolded_reflection_length((0.0, 1.0), (2.0, 1.0), 0.0)
    assert length == pytest.approx(oracle, rel=1e-8)


def test_path_count_cap():
    walls = tuple(
        WallSegment(x, 0.5, x, 39.0, loss_db=3.0) for x in (5.0, 15.0, 25.0, 35.0, 45.0, 55.0)
    )
    scn = Scenario(
        region=(0.0, 0.0, 60.0, 40.0),
        walls=walls,
        transmitters=(Transmitter(2.0, 20.0),),
        noise_variance=0.0,
    )
    paths = trace_paths(scn, (2.0, 20.0), (50.0, 21.0))
    assert len(paths) <= 11
    assert sum(1 for p in paths if p.order == 1) <= 5
    assert sum(1 for p in paths if p.order == 2) <= 5


def test_geometry_reciprocity_free_space(free_space):
    a = trace_paths(free_space, (0.0, 0.0), (25.0, 13.0))
    b = trace_paths(free_space, (25.0, 13.0), (0.0, 0.0))
    pa = sorted((abs(p.amplitude), p.delay) for p in a)
    pb = sorted((abs(p.amplitude), p.delay) for p in b)
    assert pa == pytest.approx(pb)


def test_near_field_and_region_domain_errors(free_space):
    with pytest.raises(DomainError, match="near-field"):
        trace_paths(free_space, (0.0, 0.0), (0.0, 0.0))
    with pytest.raises(DomainError):
        trace_paths(free_space, (0.0, 0.0), (100.0, 0.0))


# ---------------------------------------------------------------------------
# discretize_channel
# ---------------------------------------------------------------------------


def _channel_scenario(k=8, bandwidth=1e6, carrier=1e6):
    return Scenario(
        region=(0, 0, 10, 10),
        transmitters=(Transmitter(5, 5),),
        bandwidth_hz=bandwidth,
        carrier_hz=carrier,
        num_samples=k,
        noise_variance=0.0,
    )


def test_discretize_integer_delay_collapses_to_kronecker():
    scn = _channel_scenario(k=8, bandwidth=1e6, carrier=1e6)
    t = scn.sample_period
    taps = discretize_channel([PathComponent(1.0, 3 * t, 0)], scn)
    expected = np.zeros(8, dtype=complex)
    expected[3] = 1.0  # f_c * t = 3 -> phase term is exactly 1
    assert np.allclose(taps, expected, atol=1e-15)


def test_discretize_magnitude_ignores_carrier_phase():
    scn = _channel_scenario(k=8, bandwidth=1e6, carrier=812.37e6)
    t = scn.sample_period
    taps = discretize_channel([PathComponent(1.0, 3 * t, 0)], scn)
    assert abs(taps[3]) == pytest.approx(1.0, abs=1e-12)
    others = np.delete(np.abs(taps), 3)
    assert np.all(others < 1e-12)


def test_discretize_matches_scalar_sum_of_sincs():
    scn = _channel_scenario(k=16, bandwidth=5e6, carrier=791.3e6)
    t = scn.sample_period
    paths = [PathComponent(1.0, 2.0 * t, 0), PathComponent(0.5, 2.5 * t, 1)]
    taps = discretize_channel(paths, scn)

    def sinc(x):
        return 1.0 if x == 0 else math.sin(math.pi * x) / (math.pi * x)

    for k in range(16):
        expected = 0.0 + 0.0j
        for p in paths:
            phase = complex(
                math.cos(-2 * math.pi * scn.carrier_hz * p.delay),
                math.sin(-2 * math.pi * scn.carrier_hz * p.delay),
            )
            expected += p.amplitude * phase * sinc(k - p.delay / t)
        assert taps[k] == pytest.approx(expected, abs=1e-12)


def test_discretize_empty_paths_gives_zero_channel():
    scn = _channel_scenario()
    assert np.array_equal(discretize_channel([], scn), np.zeros(8, dtype=complex))


def test_discretize_overflow_warns_but_keeps_path():
    scn = _channel_scenario(k=4, bandwidth=1e6)
    t = scn.sample_period
    with pytest.warns(UserWarning, match="tap window"):
        taps = discretize_channel([PathComponent(1.0, 9.5 * t, 0)], scn)
    assert np.linalg.norm(taps) > 0


def test_tap_magnitudes_invariant_to_carrier_on_grid_delays():
    t = 1e-6
    paths = [PathComponent(1.0, 2 * t, 0), PathComponent(0.4, 5 * t, 1)]
    mags = []
    for carrier in (1e6, 537e6, 800e6):
        scn = _channel_scenario(k=10, bandwidth=1e6, carrier=carrier)
        mags.append(np.abs(discretize_channel(paths, scn)))
    assert np.allclose(mags[0], mags[1], atol=1e-12)
    assert np.allclose(mags[0], mags[2], atol=1e-12)


# ---------------------------------------------------------------------------
# pilot synthesis
# ---------------------------------------------------------------------------


def test_noiseless_pilot_matrix_equals_channel(free_space):
    rng = np.random.default_rng(0)
    pilot = synthesize_pilot_matrix(free_space, (30.0, 0.0), rng)
    taps = discretize_channel(trace_paths(free_space, (0.0, 0.0), (30.0, 0.0)), free_space)
    assert np.array_equal(pilot[0], taps)


def test_pilot_matrix_shape_matches_preset(indoor):
    rng = np.random.default_rng(1)
    pilot = synthesize_pilot_matrix(indoor, (33.0, 22.0), rng)
    assert pilot.shape == (5, 10)


def test_pilot_noise_power_calibration(free_space):
    sigma2 = 4e-9
    noisy = Scenario(
        region=free_space.region,
        transmitters=free_space.transmitters,
        noise_variance=sigma2,
        num_samples=32,
    )
    rng = np.random.default_rng(42)
    tables = simulate_points(noisy, np.array([[30.0, 0.0]]))
    clean = tables.channels[0]
    draws = 400
    samples = np.empty((draws, clean.size))
    for i in range(draws):
        pilot = synthesize_pilot_matrix(noisy, (30.0, 0.0), rng)
        samples[i] = np.abs(pilot - clean).ravel() ** 2
    mean_power = samples.mean()
    n = samples.size
    std_err = sigma2 / math.sqrt(n)  # var(|w|^2) = sigma^4 for circular Gaussian
    assert abs(mean_power - sigma2) < 3 * std_err


def test_pilot_matrix_deterministic(indoor):
    a = synthesize_pilot_matrix(indoor, (33.0, 22.0), np.random.default_rng(9))
    b = synthesize_pilot_matrix(indoor, (33.0, 22.0), np.random.default_rng(9))
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# power map
# ---------------------------------------------------------------------------


def test_free_space_inverse_square_law(free_space):
    p1 = true_power(free_space, (10.0, 0.0))
    p2 = true_power(free_space, (20.0, 0.0))
    assert p1 - p2 == pytest.approx(20.0 * math.log10(2.0), rel=1e-9)


def test_true_power_near_field_rejected(free_space):
    with pytest.raises(DomainError):
        true_power(free_space, (0.5 * free_space.wavelength, 0.0))


def _scalar_power_oracle(scn, x):
    """Per-pixel re-trace with independent scalar geometry (direct + single
    mirror off one wall), for a one-wall scenario."""
    total = 0.0
    wall = scn.walls[0]
    assert wall.x1 == wall.x2  # vertical wall
    for tx in scn.transmitters:
        d = math.hypot(x[0] - tx.x, x[1] - tx.y)
        amp = SPEED_OF_LIGHT / (4 * math.pi * scn.carrier_hz * d)
        crosses = (tx.x - wall.x1) * (x[0] - wall.x1) < 0
        if crosses:
            t_cross = (wall.x1 - tx.x) / (x[0] - tx.x)
            y_cross = tx.y + t_cross * (x[1] - tx.y)
            if wall.y1 <= y_cross <= wall.y2 or wall.y2 <= y_cross <= wall.y1:
                amp *= 10 ** (-wall.loss_db / 20)
        total += tx.power_w * amp**2
        # single-bounce image across the wall line
        image = (2 * wall.x1 - tx.x, tx.y)
        same_side = (tx.x - wall.x1) * (x[0] - wall.x1) > 0
        if same_side:
            length = math.hypot(x[0] - image[0], x[1] - image[1])
            t_hit = (wall.x1 - image[0]) / (x[0] - image[0])
            y_hit = image[1] + t_hit * (x[1] - image[1])
            lo, hi = sorted((wall.y1, wall.y2))
            if 0 < t_hit < 1 and lo <= y_hit <= hi:
                cos_inc = abs(x[0] - image[0]) / length
                refl = wall.max_reflection * cos_inc
                amp_r = SPEED_OF_LIGHT / (4 * math.pi * scn.carrier_hz * length) * refl
                total += tx.power_w * amp_r**2
    return 10 * math.log10(total)


def test_power_map_matches_scalar_retrace_oracle():
    scn = Scenario(
        region=(0, 0, 40, 30),
        walls=(WallSegment(20.0, 2.0, 20.0, 28.0, loss_db=5.0, max_reflection=0.6),),
        transmitters=(Transmitter(5.0, 15.0), Transmitter(35.0, 10.0)),
        noise_variance=0.0,
    )
    probes = [(10.0, 10.0), (25.0, 20.0), (30.0, 5.0), (12.0, 25.0)]
    for x in probes:
        assert true_power(scn, x) == pytest.approx(_scalar_power_oracle(scn, x), rel=1e-9)


# ---------------------------------------------------------------------------
# sensor sampling and noisy measurements
# ---------------------------------------------------------------------------


def test_sample_sensor_locations_respects_exclusion(indoor):
    rng = np.random.default_rng(3)
    pts = sample_sensor_locations(indoor, 300, rng)
    assert pts.shape == (300, 2)
    assert np.all(indoor.far_field(pts))
    assert np.all(indoor.contains(pts))


def test_sample_sensor_locations_deterministic(indoor):
    a = sample_sensor_locations(indoor, 1, np.random.default_rng(5))
    b = sample_sensor_locations(indoor, 1, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_min_distance_over_many_draws(indoor):
    rng = np.random.default_rng(11)
    pts = sample_sensor_locations(indoor, 10_000, rng)
    txs = indoor.tx_positions()
    d = np.linalg.norm(pts[:, None, :] - txs[None], axis=2).min()
    assert d >= 3.0 * SPEED_OF_LIGHT / indoor.carrier_hz


def test_exclusion_covering_region_is_configuration_error():
    tiny = Scenario(
        region=(0.0, 0.0, 0.5, 0.5),
        transmitters=(Transmitter(0.25, 0.25),),
        carrier_hz=800e6,  # 3 wavelengths = 1.12 m covers the whole region
    )
    with pytest.raises(ConfigurationError):
        sample_sensor_locations(tiny, 10, np.random.default_rng(0))


def test_measurement_noise_free_case(free_space):
    value = measure_power(free_space, (30.0, 0.0), np.random.default_rng(0), noise_std=0.0)
    assert value == true_power(free_space, (30.0, 0.0))


def test_measurement_noise_variance(free_space):
    rng = np.random.default_rng(21)
    truth = true_power(free_space, (30.0, 0.0))
    sigma = 0.7
    draws = np.array(
        [measure_power(free_space, (30.0, 0.0), rng, noise_std=sigma) for _ in range(10_000)]
    )
    sample_var = np.var(draws - truth, ddof=1)
    std_err = sigma**2 * math.sqrt(2.0 / (len(draws) - 1))
    assert abs(sample_var - sigma**2) < 3 * std_err


def test_snr_rule_is_exact_by_construction(indoor):
    p_bar = spatial_average_power(indoor)
    sigma = measurement_noise_std(indoor, p_bar=p_bar)
    snr = 10.0 * math.log10(p_bar**2 / sigma**2)
    assert snr == pytest.approx(40.0, abs=0.01)
