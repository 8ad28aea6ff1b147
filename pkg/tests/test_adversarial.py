import numpy as np
import pytest

from sdenet import SdeNet
from sdenet.adversarial import (AttackConfig, adversarial_detection_experiment,
                                attack, fgsm, input_gradient, pgd)
from sdenet.errors import ConfigError
from sdenet.tensor import Tensor, concat, softmax_cross_entropy
from sdenet.training import task_loss
from sdenet.uncertainty import EPISTEMIC, MAX_PROB

from conftest import fd_gradient, rel_error


@pytest.fixture
def model():
    return SdeNet("classification", input_dim=2, n_classes=2, state_dim=8,
                  drift_hidden=12, diffusion_hidden=10, init_seed=21)


def test_zero_epsilon_returns_input(model):
    x = np.random.default_rng(0).normal(size=(6, 2))
    y = np.zeros(6, dtype=int)
    np.testing.assert_array_equal(fgsm(model, x, y, epsilon=0.0), x)


def test_budget_never_exceeded(model):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(8, 2))
    y = rng.integers(0, 2, size=8)
    for eps in (0.1, 0.5, 2.0):
        adv = fgsm(model, x, y, epsilon=eps, clamp=(-4.0, 4.0))
        assert np.abs(adv - x).max() <= eps + 1e-12
        config = AttackConfig(kind="pgd", epsilon=eps, step_size=eps / 3,
                              iterations=7, clamp=(-4.0, 4.0))
        adv = pgd(model, x, y, config)
        assert np.abs(adv - x).max() <= eps + 1e-12
        assert adv.min() >= -4.0 and adv.max() <= 4.0


def test_logistic_gradient_closed_form():
    # two-class logits [0, x.w]; true label 1: grad_x of the loss is (p-1) w
    rng = np.random.default_rng(2)
    w = rng.normal(size=(3, 1))
    x_val = rng.normal(size=(1, 3))
    x = Tensor(x_val, requires_grad=True)
    logits = concat([Tensor(np.zeros((1, 1))), x @ Tensor(w)], axis=1)
    softmax_cross_entropy(logits, np.array([1])).mean().backward()
    z = float(x_val @ w)
    p = 1.0 / (1.0 + np.exp(-z))
    np.testing.assert_allclose(x.grad, (p - 1.0) * w.T, atol=1e-12)
    # so the single-step attack moves against sign(w) (p < 1 strictly)
    epsilon = 0.25
    stepped = np.clip(x_val + epsilon * np.sign(x.grad), -2.0, 2.0)
    expected = np.clip(x_val - epsilon * np.sign(w.T), -2.0, 2.0)
    np.testing.assert_allclose(stepped, expected, atol=1e-12)


def test_single_projected_step_equals_fgsm(model):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10, 2))
    y = rng.integers(0, 2, size=10)
    clamp = (-3.0, 3.0)
    for step in (0.5, 0.9):
        direct = fgsm(model, x, y, epsilon=0.5, clamp=clamp, seed=4)
        config = AttackConfig(kind="pgd", epsilon=0.5, step_size=step,
                              iterations=1, clamp=clamp, noise_seed=4)
        np.testing.assert_array_equal(pgd(model, x, y, config), direct)


def test_attack_increases_loss(trained_two_gaussian):
    model, ds, _ = trained_two_gaussian
    x, y = ds.subset("test")
    x, y = x[:80], y[:80]
    config = AttackConfig(kind="pgd", epsilon=0.5, step_size=0.1, iterations=10,
                          noise_seed=5)
    adv = pgd(model, x, y, config)

    def per_example_loss(inputs):
        z = model.path_noise(len(inputs), seed=5, path_index=0)
        fp = model.forward_graph(Tensor(inputs), z, model.sigma_max_train)
        return np.array([softmax_cross_entropy(fp.logits, y).data]).ravel()

    clean_loss = per_example_loss(x)
    adv_loss = per_example_loss(adv)
    assert (adv_loss >= clean_loss).mean() >= 0.95


def test_attacks_deterministic(model):
    rng = np.random.default_rng(6)
    x = rng.normal(size=(5, 2))
    y = rng.integers(0, 2, size=5)
    config = AttackConfig(kind="pgd", epsilon=0.3, step_size=0.1, iterations=5,
                          noise_seed=9)
    np.testing.assert_array_equal(attack(model, x, y, config),
                                  attack(model, x, y, config))
    config_rs = AttackConfig(kind="pgd", epsilon=0.3, step_size=0.1, iterations=5,
                             noise_seed=9, random_start=True, clamp=(-5.0, 5.0))
    a = pgd(model, x, y, config_rs)
    np.testing.assert_array_equal(a, pgd(model, x, y, config_rs))
    assert np.abs(a - x).max() <= 0.3 + 1e-12


def test_input_gradient_matches_finite_differences(model):
    rng = np.random.default_rng(7)
    x = rng.normal(size=(4, 2))
    y = rng.integers(0, 2, size=4)
    grad = input_gradient(model, x, y, seed=11)

    def loss_at():
        z = model.path_noise(4, seed=11, path_index=0)
        return task_loss(model, Tensor(x), y, z, model.sigma_max_train).item()

    numeric = fd_gradient(loss_at, x)
    assert rel_error(grad, numeric) < 1e-4


def test_gradient_paths_average(model):
    rng = np.random.default_rng(8)
    x = rng.normal(size=(3, 2))
    y = rng.integers(0, 2, size=3)
    g1 = input_gradient(model, x, y, seed=13, gradient_paths=1)
    g3 = input_gradient(model, x, y, seed=13, gradient_paths=3)
    assert not np.array_equal(g1, g3)


def test_zero_epsilon_detection_is_chance(trained_two_gaussian):
    model, ds, _ = trained_two_gaussian
    x, y = ds.subset("test")
    config = AttackConfig(kind="fgsm", epsilon=0.0)
    report, clean, attacked = adversarial_detection_experiment(
        model, x[:60], y[:60], config, MAX_PROB, n_paths=5, seed=3)
    np.testing.assert_array_equal(clean, attacked)
    assert report.auroc == 0.5
    for value in (report.tnr_at_tpr95, report.auroc, report.aupr_in,
                  report.aupr_out, report.detection_accuracy):
        assert 0.0 <= value <= 1.0


def test_epistemic_mode_orients_scores(trained_two_gaussian):
    model, ds, _ = trained_two_gaussian
    x, y = ds.subset("test")
    config = AttackConfig(kind="fgsm", epsilon=3.0)
    report, _, _ = adversarial_detection_experiment(
        model, x[:80], y[:80], config, EPISTEMIC, n_paths=10, seed=3)
    # far-out attacked inputs carry more path spread, so clean should rank higher
    assert report.auroc > 0.5


def test_attack_config_validation():
    with pytest.raises(ConfigError):
        AttackConfig(kind="carlini")
    with pytest.raises(ConfigError):
        AttackConfig(epsilon=-0.1)
    with pytest.raises(ConfigError):
        AttackConfig(iterations=0)
    with pytest.raises(ConfigError):
        AttackConfig(clamp=(1.0, 1.0))
    assert AttackConfig(epsilon=0.4).effective_step == pytest.approx(0.1)
