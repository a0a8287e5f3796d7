import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sinkgan.generator import make_network, mlp_new
from sinkgan.latent import (
    LatentBatch,
    LatentError,
    NonFiniteGradient,
    apply_flow_updates,
    init_latent,
    make_latent,
    sample_batch,
    sample_model,
)
from sinkgan.measure import make_measure
from sinkgan.training import objective_gradient_particles

IDENTITY_1D = make_network([1, 1], [], [1.0, 0.0])


def test_zero_delta_batch_copies_particles():
    lat = init_latent(5, 2, 0.0, seed=0)
    b = sample_batch(lat, 50, seed=1)
    np.testing.assert_array_equal(b.perturbations, 0.0)
    np.testing.assert_array_equal(b.points, lat.particles[b.indices])


def test_single_particle_indices():
    b = sample_batch(init_latent(1, 3, 0.1, seed=0), 20, seed=2)
    np.testing.assert_array_equal(b.indices, 0)
    assert len(b) == 20


def test_index_frequencies_binomial():
    ell, m = 100_000, 4
    b = sample_batch(init_latent(m, 1, 0.05, seed=0), ell, seed=3)
    counts = np.bincount(b.indices, minlength=m)
    sigma = np.sqrt(ell * (1 / m) * (1 - 1 / m))
    assert np.all(np.abs(counts - ell / m) <= 3 * sigma)


def test_batch_mean_matches_particle_mean():
    ell, delta = 100_000, 0.3
    lat = init_latent(10, 2, delta, seed=4)
    b = sample_batch(lat, ell, seed=5)
    var = lat.particles.var(axis=0) + delta**2
    se = np.sqrt(var / ell)
    assert np.all(np.abs(b.points.mean(axis=0) - lat.particles.mean(axis=0)) <= 4 * se)


def test_batch_determinism_and_errors():
    lat = init_latent(7, 2, 0.1, seed=0)
    a, b = sample_batch(lat, 30, seed=9), sample_batch(lat, 30, seed=9)
    np.testing.assert_array_equal(a.points, b.points)
    with pytest.raises(LatentError):
        sample_batch(lat, 0, seed=0)


@pytest.mark.parametrize("particles, delta", [
    (np.zeros((0, 2)), 0.1),
    ([[np.nan, 0.0]], 0.1),
    ([[0.0, 0.0]], -1.0),
])
def test_invalid_latents(particles, delta):
    with pytest.raises(LatentError):
        make_latent(particles, delta)


def test_zero_gradient_leaves_particles():
    lat = init_latent(6, 2, 0.05, seed=0)
    out = apply_flow_updates(lat, np.zeros((6, 2)), 0.5)
    np.testing.assert_array_equal(out.particles, lat.particles)


def test_zero_step_is_identity():
    lat = init_latent(6, 2, 0.05, seed=0)
    g = np.random.default_rng(1).standard_normal((6, 2))
    assert apply_flow_updates(lat, g, 0.0).particles is lat.particles


def test_untouched_particles_are_bitwise_equal():
    lat = init_latent(8, 3, 0.05, seed=2)
    g = np.zeros((8, 3))
    g[[1, 5]] = np.random.default_rng(3).standard_normal((2, 3))
    out = apply_flow_updates(lat, g, 0.37)
    keep = [0, 2, 3, 4, 6, 7]
    assert out.particles[keep].tobytes() == lat.particles[keep].tobytes()
    np.testing.assert_array_equal(out.particles[[1, 5]], lat.particles[[1, 5]] - 0.37 * g[[1, 5]])


def test_non_finite_gradient_is_refused():
    lat = init_latent(3, 1, 0.0, seed=0)
    g = np.array([[0.0], [np.inf], [1.0]])
    with pytest.raises(NonFiniteGradient):
        apply_flow_updates(lat, g, 0.1)
    with pytest.raises(LatentError):
        apply_flow_updates(lat, np.zeros((2, 1)), 0.1)


def singleton_gradient(z, y, eps=0.5):
    lat = make_latent([[z]], 0.0)
    batch = LatentBatch(np.array([0]), np.zeros((1, 1)), lat.particles.copy())
    return lat, objective_gradient_particles(IDENTITY_1D, lat, make_measure([[y]]), batch, eps, tol=1e-13)


def test_singleton_flow_step():
    z, y, alpha = 1.3, -0.4, 0.1
    lat, g = singleton_gradient(z, y)
    assert g[0, 0] == pytest.approx(2 * (z - y), rel=1e-12)
    out = apply_flow_updates(lat, g, alpha)
    assert out.particles[0, 0] == pytest.approx(z - 2 * alpha * (z - y), rel=1e-12)


def test_singleton_flow_contracts_geometrically():
    z, y, alpha = 2.0, 0.5, 0.1
    for _ in range(10):
        lat, g = singleton_gradient(z, y)
        z_next = apply_flow_updates(lat, g, alpha).particles[0, 0]
        assert abs(z_next - y) == pytest.approx(0.8 * abs(z - y), rel=1e-10)
        z = z_next


def test_sample_model_degenerate_latent():
    mu = sample_model(make_network([2, 2], [], [1, 0, 0, 1, 0, 0]), make_latent([[0.3, -1.0]], 0.0), 5, seed=0)
    np.testing.assert_array_equal(mu.points, [[0.3, -1.0]] * 5)
    np.testing.assert_array_equal(mu.weights, 0.2)


def test_sample_model_determinism_and_mismatch():
    net = mlp_new([2, 8, 3], ["tanh"], seed=0)
    lat = init_latent(20, 2, 0.05, seed=1)
    assert sample_model(net, lat, 40, seed=3).same_as(sample_model(net, lat, 40, seed=3))
    with pytest.raises(LatentError):
        sample_model(net, init_latent(20, 3, 0.05, seed=1), 4, seed=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 4), st.floats(0, 2), st.integers(0, 2**32 - 1))
def test_batch_shapes_and_ranges(m, k, delta, seed):
    lat = init_latent(m, k, delta, seed=seed)
    b = sample_batch(lat, 17, seed=seed)
    assert b.indices.shape == (17,) and b.points.shape == (17, k)
    assert b.indices.min() >= 0 and b.indices.max() < m
    np.testing.assert_array_equal(b.points, lat.particles[b.indices] + b.perturbations)
