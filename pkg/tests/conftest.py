import numpy as np
import pytest

from sdenet import SdeNet
from sdenet.data import gen_two_gaussians
from sdenet.training import TrainConfig, train


def fd_gradient(make_loss, array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar closure w.r.t. one array."""
    flat = array.ravel()
    grad = np.zeros_like(flat)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        up = make_loss()
        flat[j] = orig - h
        down = make_loss()
        flat[j] = orig
        grad[j] = (up - down) / (2.0 * h)
    return grad.reshape(array.shape)


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum.reduce([np.abs(analytic), np.abs(numeric),
                               np.full_like(analytic, 1e-3)])
    return float((np.abs(analytic - numeric) / denom).max())


TWO_GAUSSIAN_TRAIN = TrainConfig(epochs=30, batch_size=128, lr_drift=0.1,
                                 lr_diffusion=0.05, seed=0)


def train_two_gaussian(seed: int, epochs: int = 30, n_per_class: int = 600,
                       **model_kwargs):
    """Shared recipe: small classifier on the two-blob synthetic set."""
    ds = gen_two_gaussians(n_per_class, seed=seed)
    x_train, y_train = ds.subset("train")
    model = SdeNet("classification", input_dim=2, n_classes=2, state_dim=16,
                   init_seed=seed, **model_kwargs)
    config = TrainConfig(epochs=epochs, batch_size=128, lr_drift=0.1,
                         lr_diffusion=0.05, seed=seed)
    log = train(model, x_train, y_train, config)
    return model, ds, log


@pytest.fixture(scope="session")
def trained_two_gaussian():
    """One trained classifier, shared read-only across tests."""
    return train_two_gaussian(seed=0)
