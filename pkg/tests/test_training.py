import numpy as np
import pytest

from oracles import finite_difference, rel_err
from sinkgan.generator import make_network, mlp_new
from sinkgan.latent import LatentBatch, make_latent
from sinkgan.measure import make_measure
from sinkgan.sinkhorn import ot_value
from sinkgan.synthdata import ExperimentSpec
from sinkgan.training import (
    METRIC_COLUMNS,
    TrainConfig,
    adam_update,
    epsilon_schedule,
    fit,
    init_state,
    objective,
    objective_gradient_particles,
    objective_gradient_theta,
    read_metrics_csv,
    train_step,
    write_metrics_csv,
)


def full_batch(points):
    points = np.asarray(points, dtype=float).reshape(len(points), -1)
    return LatentBatch(np.arange(len(points)), np.zeros_like(points), points)


def tiny_config(**kw):
    base = dict(batch_size=8, n_particles=12, latent_dim=1, out_dim=2, hidden=(8,), activations=("tanh",),
                eps0=0.1, eps_floor=0.1, lr_theta=1e-2, lr_particles=1e-2, max_iters=5, sinkhorn_tol=1e-6,
                sinkhorn_max_iter=2000, seed=3)
    base.update(kw)
    return TrainConfig(**base)


def spiral_target(n=40, seed=0):
    return ExperimentSpec("spiral", n_train=n, seed=seed).train_sample()


# --- gradients ---------------------------------------------------------------

def test_singleton_linear_generator():
    theta, a, z, eps = 1.7, -0.6, 1.0, 0.3
    net = make_network([1, 1], [], [theta, 0.0])
    g = objective_gradient_theta(net, make_measure([[a]]), full_batch([z]), eps, tol=1e-13)
    assert g[0] == pytest.approx(2 * (theta - a) * z, rel=1e-12)
    assert g[1] == pytest.approx(2 * (theta * z - a), rel=1e-12)


def test_singleton_linear_generator_off_unit_latent():
    theta, a, z, eps = 0.8, 2.0, -1.5, 1.0
    net = make_network([1, 1], [], [theta, 0.0])
    g = objective_gradient_theta(net, make_measure([[a]]), full_batch([z]), eps, tol=1e-13)
    assert g[0] == pytest.approx(2 * (theta * z - a) * z, rel=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_theta_gradient_matches_finite_differences_tiny_net(seed):
    rng = np.random.default_rng(seed)
    net = make_network([1, 1, 1], ["tanh"], rng.standard_normal(4))
    z = rng.standard_normal((5, 1))
    rho = make_measure(rng.standard_normal((5, 1)), rng.uniform(0.5, 1.0, 5))
    eps = 0.5
    fd = finite_difference(lambda p: objective(net.with_params(p), z, rho, eps, tol=1e-12), net.params, 1e-4)
    g = objective_gradient_theta(net, rho, full_batch(z), eps, tol=1e-12)
    assert rel_err(g, fd) <= 1e-3


def test_theta_gradient_matches_finite_differences_2d():
    rng = np.random.default_rng(4)
    net = mlp_new([1, 3, 2], ["tanh"], seed=4)
    assert net.n_params <= 20
    net = net.with_params(net.params + 0.2 * rng.standard_normal(net.n_params))
    z = rng.standard_normal((6, 1))
    rho = make_measure(rng.standard_normal((5, 2)))
    eps = 0.2
    fd = finite_difference(lambda p: objective(net.with_params(p), z, rho, eps, tol=1e-12), net.params, 1e-4)
    g = objective_gradient_theta(net, rho, full_batch(z), eps, tol=1e-12)
    assert rel_err(g, fd) <= 1e-3


def test_biased_gradient_is_the_cross_term_alone():
    rng = np.random.default_rng(5)
    net = make_network([1, 1, 1], ["tanh"], rng.standard_normal(4))
    z = rng.standard_normal((5, 1))
    rho = make_measure(rng.standard_normal((4, 1)))
    eps = 0.5

    def cross(p):
        return ot_value(make_measure(net.with_params(p)(z)), rho, eps, tol=1e-12)

    fd = finite_difference(cross, net.params, 1e-4)
    g = objective_gradient_theta(net, rho, full_batch(z), eps, tol=1e-12, biased=True)
    assert rel_err(g, fd) <= 1e-3


def test_particle_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    net = mlp_new([2, 4, 2], ["tanh"], seed=6)
    lat = make_latent(rng.standard_normal((5, 2)), 0.0)
    rho = make_measure(rng.standard_normal((5, 2)))
    eps = 0.3
    g = objective_gradient_particles(net, lat, rho, full_batch(lat.particles), eps, tol=1e-12)

    def f(flat):
        return objective(net, flat.reshape(5, 2), rho, eps, tol=1e-12)

    fd = finite_difference(f, lat.particles.ravel(), 1e-4).reshape(5, 2)
    assert rel_err(g[2], fd[2]) <= 1e-3
    assert rel_err(g, fd) <= 1e-3


def test_particle_gradient_identity_singleton():
    z, a, eps = 0.9, 0.1, 0.4
    lat = make_latent([[z]], 0.0)
    net = make_network([1, 1], [], [1.0, 0.0])
    # three draws of the one particle: each contributes 2(z - a) / l
    batch = LatentBatch(np.zeros(3, dtype=int), np.zeros((3, 1)), np.full((3, 1), z))
    g = objective_gradient_particles(net, lat, make_measure([[a]]), batch, eps, tol=1e-13)
    assert g[0, 0] == pytest.approx(3 * 2 * (z - a) / 3, rel=1e-12)


@pytest.mark.parametrize("eps", [1.0, pytest.param(0.1, marks=pytest.mark.slow)])
def test_matched_model_is_stationary(eps):
    pts = np.random.default_rng(7).standard_normal((6, 2))
    net = make_network([2, 2], [], [1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    lat = make_latent(pts, 0.0)
    rho = make_measure(pts)
    batch = full_batch(pts)
    # at eps = 0.1 the alternating cross solve needs ~9e5 sweeps to reach 1e-12 on this support
    kw = dict(tol=1e-12, max_iter=2_000_000)
    assert np.linalg.norm(objective_gradient_theta(net, rho, batch, eps, **kw)) <= 1e-6
    assert np.abs(objective_gradient_particles(net, lat, rho, batch, eps, **kw)).max() <= 1e-6


# --- schedule and optimizer --------------------------------------------------

def test_epsilon_schedule():
    cfg = TrainConfig(eps0=2.0, eps_floor=1e-3, eps_decay=0.9, eps_period=50)
    assert epsilon_schedule(0, cfg) == 2.0
    assert epsilon_schedule(49, cfg) == 2.0
    assert epsilon_schedule(100, cfg) == pytest.approx(1.62, rel=1e-14)
    assert epsilon_schedule(10**6, cfg) == 1e-3
    with pytest.raises(ValueError):
        epsilon_schedule(-1, cfg)


def test_adam_zero_gradient():
    p = np.array([1.0, -2.0, 3.0])
    out, _ = adam_update(p, np.zeros(3), (np.zeros(3), np.zeros(3)), 0.1, 1)
    np.testing.assert_array_equal(out, p)


def test_adam_first_step():
    p = np.array([0.5, 0.5, 0.5, 0.5])
    g = np.array([2.0, -1e-3, 1e-9, 0.0])
    out, (m, v) = adam_update(p, g, (np.zeros(4), np.zeros(4)), 0.01, 1)
    # at t = 1 bias correction restores m_hat = g and v_hat = g^2
    np.testing.assert_allclose(out - p, -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12, atol=1e-18)
    np.testing.assert_allclose(m, 0.1 * g, rtol=1e-15)
    np.testing.assert_allclose(v, 0.001 * g * g, rtol=1e-15)


def test_adam_constant_gradient_step_tends_to_lr():
    p, lr = np.zeros(2), 1e-3
    moments = (np.zeros(2), np.zeros(2))
    g = np.array([0.3, -5.0])
    for t in range(1, 2001):
        new, moments = adam_update(p, g, moments, lr, t)
        step = new - p
        p = new
    np.testing.assert_allclose(np.abs(step), lr, rtol=0.01)
    np.testing.assert_array_equal(np.sign(step), -np.sign(g))


def test_adam_inputs_untouched():
    m, v = np.ones(2), np.ones(2)
    adam_update(np.zeros(2), np.ones(2), (m, v), 0.1, 3)
    np.testing.assert_array_equal(m, 1.0)
    np.testing.assert_array_equal(v, 1.0)


@pytest.mark.parametrize("kw", [
    dict(eps_floor=1.0, eps0=0.5),
    dict(eps_decay=1.5),
    dict(optimizer="rmsprop"),
    dict(schedule="alternating"),
    dict(hidden=(4, 4), activations=("tanh",)),
    dict(lr_theta=-1.0),
])
def test_invalid_configs(kw):
    with pytest.raises(ValueError):
        tiny_config(**kw)


# --- loop --------------------------------------------------------------------

def test_zero_rates_leave_state_unchanged():
    cfg = tiny_config(lr_theta=0.0, lr_particles=0.0)
    st = init_state(cfg)
    out = train_step(st, spiral_target(), cfg)
    np.testing.assert_array_equal(out.net.params, st.net.params)
    np.testing.assert_array_equal(out.latent.particles, st.latent.particles)
    assert len(out.metrics) == 1 and out.iteration == 1
    assert st.iteration == 0 and st.metrics == []


def test_step_does_not_mutate_input_state():
    cfg = tiny_config()
    st = init_state(cfg)
    params, moments = st.net.params.copy(), [m.copy() for m in st.moments]
    out = train_step(st, spiral_target(), cfg)
    assert not np.array_equal(out.net.params, params)
    np.testing.assert_array_equal(st.net.params, params)
    for a, b in zip(st.moments, moments):
        np.testing.assert_array_equal(a, b)


def test_non_finite_step_is_rejected():
    cfg = tiny_config()
    st = init_state(cfg)
    p = st.net.params.copy()
    p[-1] = np.nan
    st.net = st.net.with_params(p)
    out = train_step(st, spiral_target(), cfg)
    assert out.rejected == 1 and out.iteration == 1
    np.testing.assert_array_equal(out.net.params, st.net.params)
    np.testing.assert_array_equal(out.latent.particles, st.latent.particles)
    assert out.adam_t == 0


def test_fit_zero_iterations_returns_initialization():
    cfg = tiny_config(max_iters=0)
    model = fit(spiral_target(), cfg)
    st = init_state(cfg)
    np.testing.assert_array_equal(model.net.params, st.net.params)
    np.testing.assert_array_equal(model.latent.particles, st.latent.particles)
    assert model.metrics == []


def test_fit_is_deterministic():
    cfg = tiny_config(max_iters=6)
    rho = spiral_target()
    a, b = fit(rho, cfg), fit(rho, cfg)
    np.testing.assert_array_equal(a.net.params, b.net.params)
    np.testing.assert_array_equal(a.latent.particles, b.latent.particles)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows]  # noqa: E731
    assert strip(a.metrics) == strip(b.metrics)


def test_resume_matches_uninterrupted_run():
    rho = spiral_target()
    whole = fit(rho, tiny_config(max_iters=6))
    half = fit(rho, tiny_config(max_iters=3))
    rest = fit(rho, tiny_config(max_iters=3), state=half.state)
    np.testing.assert_array_equal(rest.net.params, whole.net.params)
    np.testing.assert_array_equal(rest.latent.particles, whole.latent.particles)
    assert [r["iter"] for r in rest.metrics] == list(range(6))


def test_fixed_latent_freezes_particles():
    cfg = tiny_config(fixed_latent=True)
    model = fit(spiral_target(), cfg)
    init = init_state(cfg)
    np.testing.assert_array_equal(model.latent.particles, init.latent.particles)
    assert not np.array_equal(model.net.params, init.net.params)


def test_block_schedule_alternates():
    cfg = tiny_config(schedule="block", gen_iters=2, latent_iters=1, eps0=0.4, eps_floor=0.01, eps_decay=0.5,
                      eps_period=1)
    rho = spiral_target()
    st = init_state(cfg)
    eps_seen = []
    for it in range(6):
        prev = st
        st = train_step(st, rho, cfg)
        eps_seen.append(st.epsilon)
        gen_moved = not np.array_equal(prev.net.params, st.net.params)
        lat_moved = not np.array_equal(prev.latent.particles, st.latent.particles)
        assert (gen_moved, lat_moved) == ((True, False) if it % 3 < 2 else (False, True))
    # the schedule only advances on generator iterations
    assert eps_seen == [0.4, 0.2, 0.1, 0.1, 0.05, 0.025]


def test_dimension_mismatch_is_reported():
    with pytest.raises(ValueError):
        fit(make_measure(np.zeros((4, 3))), tiny_config())


def test_spiral_estimate_trends_down():
    cfg = TrainConfig(batch_size=100, n_particles=200, latent_dim=1, out_dim=2, hidden=(32, 32),
                      activations=("relu", "tanh"), eps0=0.01, eps_floor=0.01, lr_theta=1e-3, lr_particles=1e-3,
                      max_iters=300, sinkhorn_tol=1e-3, sinkhorn_max_iter=200, seed=0)
    model = fit(spiral_target(1000), cfg)
    s = np.array([r["sinkhorn_estimate"] for r in model.metrics])
    tenth = len(s) // 10
    assert np.median(s[-tenth:]) < np.median(s[:tenth])


def test_metrics_csv_round_trip(tmp_path):
    model = fit(spiral_target(), tiny_config(max_iters=3))
    path = tmp_path / "m.csv"
    write_metrics_csv(model.metrics, path)
    assert path.read_text().splitlines()[0] == ",".join(METRIC_COLUMNS)
    assert read_metrics_csv(path) == model.metrics
    path.write_text("iter,epsilon\n0,1\n")
    with pytest.raises(ValueError):
        read_metrics_csv(path)
