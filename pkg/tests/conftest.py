import warnings

import pytest

from locfree.scenario import Scenario, Transmitter, preset


@pytest.fixture(scope="session")
def free_space():
    """Large empty region with one corner transmitter (noiseless pilots)."""
    return Scenario(
        region=(-5.0, -5.0, 65.0, 45.0),
        transmitters=(Transmitter(0.0, 0.0),),
        noise_variance=0.0,
    )


@pytest.fixture(scope="session")
def indoor():
    """The default five-wall indoor preset at 20 MHz."""
    return preset("indoor-fig4")


@pytest.fixture(scope="session")
def indoor_grid(indoor):
    from locfree.evaluation import precompute_grid

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return precompute_grid(indoor)


def grid_aligned_free_space(delays_in_samples, bandwidth=20e6, carrier=None, k=None):
    """Free-space scenario whose direct delays are integer sample multiples.

    Transmitters are placed on the x axis at distances d_l = n_l * c * T
    from the origin receiver, so every channel is a pure Kronecker tap and
    correlation-based features are exact.
    """
    from locfree.scenario import SPEED_OF_LIGHT

    t = 1.0 / bandwidth
    xs = [n * SPEED_OF_LIGHT * t for n in delays_in_samples]
    span = max(xs) + 10.0
    return Scenario(
        region=(-5.0, -5.0, span, 40.0),
        transmitters=tuple(Transmitter(x, 0.0) for x in xs),
        bandwidth_hz=bandwidth,
        carrier_hz=carrier if carrier is not None else 800e6,
        num_samples=k if k is not None else max(delays_in_samples) + 4,
        noise_variance=0.0,
    )
