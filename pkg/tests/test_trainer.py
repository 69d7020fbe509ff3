import numpy as np
import pytest

from protoloss.data import Dataset, gaussian_blobs
from protoloss.errors import ConfigError, ContractError, TrainingDiverged
from protoloss.losses import LossWeights
from protoloss.model import FeatureExtractor, MlpConfig
from protoloss.prototypes import PrototypeBank, init_prototypes
from protoloss.tensor import Tensor
from protoloss.trainer import (
    Method,
    MomentumSGD,
    TrainConfig,
    evaluate,
    lr_at_epoch,
    spread_prototypes,
    train,
)
from protoloss.geometry import inter_class_angles


def setup(M=2, D=2, d=2, hidden=(8,), n=50, seed=0, noise=0.5):
    train_ds, test_ds = gaussian_blobs(M, D, n, center_scale=5.0, noise_sigma=noise, seed=seed)
    fx = FeatureExtractor.from_config(MlpConfig([D, *hidden, d], seed=seed))
    bank = init_prototypes(M, d, 40.0, seed=seed + 1)
    return fx, bank, train_ds, test_ds


@pytest.mark.parametrize("epoch,expected", [(0, 0.1), (49, 0.1), (50, 0.01), (100, 0.001), (149, 0.001), (150, 1e-4), (199, 1e-4)])
def test_lr_schedule(epoch, expected):
    assert lr_at_epoch(TrainConfig(epochs=200), epoch) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("kw", [{"epochs": 0}, {"eta": 0.0}, {"momentum": 1.0}, {"lr_drop_points": (0.5, 0.25)},
                                {"method": "XX"}, {"weight_decay": -1.0}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_method_parse():
    assert Method.parse("dpnp") is Method.DPNP
    assert TrainConfig(method="ce").effective_weights() == LossWeights(0, 0, 0)
    assert TrainConfig(method="DPP", loss_weights=LossWeights(0.3, 0.2, 0.1)).effective_weights() == LossWeights(0.3, 0, 0)


def test_momentum_sgd():
    opt = MomentumSGD(0.9, weight_decay=0.1)
    p = [np.array([1.0, 2.0])]
    p = opt.step(p, [np.array([1.0, 0.0])], lr=0.5)
    # v = g + wd p = (1.1, 0.2)
    np.testing.assert_allclose(p[0], [1.0 - 0.55, 2.0 - 0.1])
    p2 = opt.step(p, [np.zeros(2)], lr=0.5)
    v = 0.9 * np.array([1.1, 0.2]) + 0.1 * p[0]
    np.testing.assert_allclose(p2[0], p[0] - 0.5 * v)


def test_separable_blobs_reach_full_accuracy():
    fx, bank, tr, te = setup()
    cfg = TrainConfig(epochs=30, batch_size=16, loss_weights=LossWeights.low_dim(), seed=3)
    res = train(fx, bank, tr, cfg, te)
    assert res.history[-1].train_accuracy == 1.0
    assert evaluate(res.fx, res.bank, te) == 1.0


def test_training_is_deterministic():
    runs = []
    for _ in range(2):
        fx, bank, tr, te = setup(M=3, D=4, d=3)
        res = train(fx, bank, tr, TrainConfig(epochs=4, batch_size=16, seed=9, loss_weights=LossWeights.low_dim()), te)
        runs.append(([m.row() for m in res.history], res.bank.values.tobytes()))
    assert runs[0] == runs[1]


def test_ce_equals_dpnp_with_zero_weights():
    streams = []
    for method in ("CE", "DPNP"):
        fx, bank, tr, te = setup(M=3, D=4, d=3)
        cfg = TrainConfig(epochs=3, batch_size=16, seed=2, method=method, loss_weights=LossWeights(0, 0, 0))
        res = train(fx, bank, tr, cfg, te)
        streams.append(([m.row() for m in res.history], res.bank.values.tobytes()))
    assert streams[0] == streams[1]


def test_norms_reset_every_epoch():
    fx, bank, tr, _ = setup(M=3, D=4, d=3)
    seen = []

    def hook(epoch, b):
        seen.append(np.linalg.norm(b.values, axis=1))

    res = train(fx, bank, tr, TrainConfig(epochs=5, batch_size=16, loss_weights=LossWeights.low_dim()), on_epoch_start=hook)
    assert len(seen) == 5 and res.norm_checks == [0] * 5
    for norms in seen:
        np.testing.assert_allclose(norms, 40.0, rtol=1e-12)


def test_cl_returns_centers():
    fx, bank, tr, _ = setup(M=3, D=4, d=3)
    res = train(fx, bank, tr, TrainConfig(epochs=2, batch_size=16, method="CL"))
    assert res.centers.shape == (3, 3) and np.any(res.centers != 0)


def test_loss_goes_down():
    fx, bank, tr, _ = setup(M=3, D=4, d=3, noise=1.0)
    res = train(fx, bank, tr, TrainConfig(epochs=10, batch_size=16, loss_weights=LossWeights.low_dim()))
    assert res.history[-1].loss.ce < res.history[0].loss.ce


def test_random_model_is_at_chance():
    accs = []
    for seed in range(20):
        _, te = gaussian_blobs(10, 8, 50, seed=seed)
        fx = FeatureExtractor.from_config(MlpConfig([8, 16, 3], seed=seed + 100))
        accs.append(evaluate(fx, init_prototypes(10, 3, seed=seed + 200), te))
    assert np.mean(accs) == pytest.approx(0.1, abs=0.05)


def test_single_class_accuracy():
    ds = Dataset(np.ones((3, 2)), [0, 0, 0], 1)
    fx = FeatureExtractor.from_config(MlpConfig([2, 2]))
    assert evaluate(fx, init_prototypes(1, 2), ds) == 1.0


def test_mismatched_shapes_rejected():
    fx, bank, tr, _ = setup()
    with pytest.raises(ContractError):
        train(fx, init_prototypes(3, 2), tr, TrainConfig(epochs=1))
    with pytest.raises(ContractError):
        train(fx, init_prototypes(2, 3), tr, TrainConfig(epochs=1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_with_state():
    fx, bank, tr, _ = setup()
    with pytest.raises(TrainingDiverged) as err:
        train(fx, bank, tr, TrainConfig(epochs=5, eta=1e6, eta_c=1e6, loss_weights=LossWeights(10, 10, 10)))
    assert "epoch" in err.value.state and "prototype_norms" in err.value.state


def test_spread_prototypes_separates_pair():
    bank = PrototypeBank(Tensor(np.array([[40.0, 0.0, 0.0], [39.0, 8.0, 0.0]]), True), 40.0)
    spread_prototypes(bank, epochs=50)
    assert inter_class_angles(bank)[0, 1] > 170.0
