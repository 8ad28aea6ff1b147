import numpy as np
import pytest

from sdenet import SdeNet, Tensor
from sdenet.errors import ConfigError
from sdenet.model import SIGMA_FLOOR, time_augment
from sdenet.rng import path_stream
from sdenet.uncertainty import batch_epistemic

from conftest import fd_gradient, rel_error


@pytest.fixture
def classifier():
    return SdeNet("classification", input_dim=2, n_classes=3, state_dim=8,
                  drift_hidden=12, diffusion_hidden=10, init_seed=5)


@pytest.fixture
def regressor():
    return SdeNet("regression", input_dim=2, state_dim=8, drift_hidden=12,
                  diffusion_hidden=10, init_seed=6)


def test_forward_paths_deterministic(classifier):
    x = np.random.default_rng(0).normal(size=(4, 2))
    a = classifier.forward_paths(x, 10, seed=3)
    b = classifier.forward_paths(x, 10, seed=3)
    assert np.array_equal(a.final_states, b.final_states)
    assert np.array_equal(a.probs, b.probs)
    assert np.array_equal(a.g_values, b.g_values)


def test_more_paths_do_not_change_existing_ones(classifier):
    x = np.random.default_rng(0).normal(size=(3, 2))
    small = classifier.forward_paths(x, 3, seed=11)
    large = classifier.forward_paths(x, 8, seed=11)
    assert np.array_equal(small.final_states, large.final_states[:3])


def test_probabilities_normalized_and_sigma_floored(classifier, regressor):
    x = np.random.default_rng(1).normal(size=(5, 2))
    pb = classifier.forward_paths(x, 4, seed=0)
    np.testing.assert_allclose(pb.probs.sum(axis=-1), 1.0, atol=1e-9)
    pbr = regressor.forward_paths(x, 4, seed=0)
    assert (pbr.sigma >= SIGMA_FLOOR).all()


def test_diffusion_bound(classifier):
    x = np.random.default_rng(2).normal(size=(50, 2)) * 10.0
    for sigma_max in (0.5, 1.0, 10.0):
        g = classifier.diffusion_value(
            classifier.initial_state(Tensor(x)), sigma_max).data
        assert (g > 0.0).all() and (g < sigma_max).all()


def test_zero_diffusion_degenerates_to_residual_net():
    model = SdeNet("classification", input_dim=2, n_classes=2, state_dim=6,
                   sigma_max_train=0.0, sigma_max_test=0.0, init_seed=1)
    x = np.random.default_rng(3).normal(size=(4, 2))
    pb = model.forward_paths(x, 10, seed=99)
    for m in range(1, 10):
        assert np.array_equal(pb.final_states[m], pb.final_states[0])
        assert np.array_equal(pb.probs[m], pb.probs[0])
    assert (batch_epistemic(pb) == 0.0).all()

    # matches an explicit residual-style iteration x <- x + f(x, t) dt
    state = model.initial_state(Tensor(x))
    dt = model.solver.dt
    for k in range(model.solver.steps):
        state = state + model.drift_fn(state, model.solver.time_at(k)) * dt
    np.testing.assert_array_equal(pb.final_states[0], state.data)


def test_vanishing_sigma_max_squeezes_paths():
    model = SdeNet("classification", input_dim=2, n_classes=2, state_dim=6,
                   sigma_max_train=1e-12, sigma_max_test=1e-12, init_seed=1)
    x = np.random.default_rng(4).normal(size=(3, 2))
    pb = model.forward_paths(x, 10, seed=5)
    spread = np.abs(pb.probs - pb.probs[0]).max()
    assert spread < 1e-9


def test_time_conditioning_widens_input_and_matters():
    state = Tensor(np.ones((2, 3)))
    assert time_augment(state, 0.25).data.shape == (2, 4)
    np.testing.assert_array_equal(time_augment(state, 0.25).data[:, 3], 0.25)

    model = SdeNet("classification", input_dim=2, n_classes=2, state_dim=3,
                   drift_hidden=4, init_seed=0)
    # weight the time column explicitly so drift depends on t
    model.drift_a.w.data[:] = 0.0
    model.drift_a.w.data[3, :] = 1.0
    model.drift_a.b.data[:] = 1.0  # keep the ReLU active
    s = Tensor(np.ones((1, 3)))
    d0 = model.drift_fn(s, 0.0).data
    d1 = model.drift_fn(s, 0.5).data
    assert not np.allclose(d0, d1)
    assert model.solver.time_at(0) == 0.0


def test_save_load_round_trip(tmp_path, classifier):
    x = np.random.default_rng(5).normal(size=(4, 2))
    before = classifier.forward_paths(x, 5, seed=2)
    classifier.save(tmp_path / "ckpt")
    restored = SdeNet.load(tmp_path / "ckpt")
    after = restored.forward_paths(x, 5, seed=2)
    assert np.array_equal(before.final_states, after.final_states)
    assert np.array_equal(before.probs, after.probs)


def test_load_rejects_missing_files(tmp_path):
    with pytest.raises(ConfigError):
        SdeNet.load(tmp_path / "nope")


def test_reparameterized_gradient_through_noise(regressor):
    # the only path from the diffusion parameters to x_T is g * sqrt(dt) * z
    rng = np.random.default_rng(8)
    x = Tensor(rng.normal(size=(5, 2)))
    z = regressor.path_noise(5, seed=77, path_index=0)

    def loss_value():
        fp = regressor.forward_graph(x, z, sigma_max=1.5)
        return fp.x_final.pow(2.0).mean().item()

    regressor.zero_grad()
    regressor.forward_graph(x, z, sigma_max=1.5).x_final.pow(2.0).mean().backward()
    for name, p in regressor.named_parameters():
        if not name.startswith("diff_"):
            continue
        numeric = fd_gradient(loss_value, p.data)
        assert rel_error(p.grad, numeric) < 1e-4, name


def test_pooled_noise_draws_match_brownian_definition():
    # pooled z over many streams: mean ~ 0, var ~ 1; disjoint-interval
    # increments uncorrelated across paths
    steps, n = 8, 4000
    z = np.empty((n, steps))
    for i in range(n):
        z[i] = path_stream(13, i, 0).standard_normal(steps)
    pooled = z.ravel()
    n_total = pooled.size
    assert abs(pooled.mean()) < 4.0 / np.sqrt(n_total)
    assert abs(pooled.var(ddof=1) - 1.0) < 4.0 * np.sqrt(2.0 / n_total)

    first = z[:, :4].sum(axis=1)   # increment over [t0, t4)
    second = z[:, 4:].sum(axis=1)  # increment over [t4, t8)
    r = np.corrcoef(first, second)[0, 1]
    assert abs(r) < 4.0 / np.sqrt(n)


def test_invalid_configs_rejected():
    with pytest.raises(ConfigError):
        SdeNet("classification", input_dim=2)  # n_classes missing
    with pytest.raises(ConfigError):
        SdeNet("ranking", input_dim=2)
    with pytest.raises(ConfigError):
        SdeNet("regression", input_dim=2, sigma_max_train=-1.0)
    model = SdeNet("regression", input_dim=2, init_seed=0)
    with pytest.raises(ConfigError):
        model.forward_paths(np.zeros((1, 2)), 0, seed=0)
