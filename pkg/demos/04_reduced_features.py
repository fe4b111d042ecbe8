"""Dimensionality reduction of the pairwise feature matrix.

Pairwise differences of L per-transmitter delays span at most L-1
dimensions, so the M = L(L-1)/2 = 10 features of the default scenario sit
close to a 4-dimensional subspace.  This demo shows the singular value
spectrum, the energy rule for picking the rank, and that a map learned on
the reduced features matches the full-feature map.
"""

import numpy as np

from locfree import GaussianKernel, fit, nmse, predict, preset
from locfree.evaluation import precompute_grid
from locfree.features import feature_matrix_nosync
from locfree.kernels import with_basis
from locfree.experiments import LOCF_TUNED
from locfree.propagation import pilot_noise, sample_sensor_locations, simulate_points
from locfree.reduction import reduce_features, select_rank

scenario = preset("indoor-dense")  # six walls: the richer multipath case
grid = precompute_grid(scenario)
rng = np.random.default_rng(2)

points = sample_sensor_locations(scenario, 300, rng)
tables = simulate_points(scenario, points)
pilots = tables.channels + pilot_noise(scenario, tables.channels.shape, rng)
targets = tables.true_power + rng.normal(0.0, grid.noise_std, 300)
t = scenario.sample_period
features = feature_matrix_nosync(pilots, t)

basis, reduced = reduce_features(features, eta=0.99)
s = basis.singular_values
print("singular values of the centered 10 x 300 feature matrix:")
for m, val in enumerate(s, start=1):
    energy = np.sum(s[:m] ** 2) / np.sum(s**2)
    print(f"  m={m:2d}  sigma={val:10.2f}   cumulative energy {100 * energy:6.2f} %")
print(f"\nrank keeping 99% of the energy: r = {select_rank(s, 0.99)}")

query = feature_matrix_nosync(grid.channels + pilot_noise(scenario, grid.channels.shape, rng), t)
sigma, lam = LOCF_TUNED[scenario.bandwidth_hz]
kernel = GaussianKernel(sigma)
full_map = fit(features, targets, kernel, lam)
print(f"\nNMSE with all 10 features:    {nmse(grid.truth, predict(full_map, query), grid.p_bar):.3f}")
for rank in (2, 3, 4):
    basis_r, reduced_r = reduce_features(features, rank=rank)
    reduced_map = with_basis(fit(reduced_r, targets, kernel, lam), basis_r)
    value = nmse(grid.truth, predict(reduced_map, query), grid.p_bar)
    print(f"NMSE with r={rank} reduced features: {value:.3f}")
