import numpy as np
import pytest

from protoloss.data import Dataset, batches, class_means, gaussian_blobs, load_csv, save_csv
from protoloss.errors import ConfigError, ContractError, ParseError


def test_blobs_shapes_and_split():
    train, test = gaussian_blobs(4, 6, 50, seed=1)
    assert (len(train), len(test)) == (160, 40)
    assert train.D == 6 and train.M == 4
    assert np.bincount(train.labels).tolist() == [40] * 4
    assert np.bincount(test.labels).tolist() == [10] * 4


def test_blobs_deterministic():
    a, _ = gaussian_blobs(3, 2, 10, seed=5)
    b, _ = gaussian_blobs(3, 2, 10, seed=5)
    assert a.features.tobytes() == b.features.tobytes()


def test_zero_noise_collapses_to_centers():
    train, test = gaussian_blobs(3, 4, 10, center_scale=5.0, noise_sigma=0.0, seed=2)
    means = class_means(train)
    np.testing.assert_allclose(np.linalg.norm(means, axis=1), 5.0)
    np.testing.assert_allclose(train.features, means[train.labels], rtol=1e-14)
    np.testing.assert_allclose(test.features, means[test.labels], rtol=1e-14)


@pytest.mark.parametrize("kw", [{"M": 0}, {"D": -1}, {"n_per_class": 1}, {"noise_sigma": -1.0}])
def test_blobs_validation(kw):
    args = {"M": 2, "D": 2, "n_per_class": 10, **kw}
    with pytest.raises(ConfigError):
        gaussian_blobs(**args)


def test_csv_roundtrip(tmp_path):
    train, _ = gaussian_blobs(3, 2, 10, seed=0)
    path = tmp_path / "train.csv"
    save_csv(path, train)
    back = load_csv(path, 3)
    assert back.features.tobytes() == train.features.tobytes()
    assert back.labels.tolist() == train.labels.tolist()


def test_load_small_file(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("0,1.0,2.0\n1,3.0,4.0\n")
    ds = load_csv(path, 2)
    assert len(ds) == 2 and ds.D == 2


@pytest.mark.parametrize("body,line", [
    ("0,1,2\n2,3,4\n", 2),
    ("0,1,2\n1,3\n", 2),
    ("0,1,2\n1,x,4\n", 2),
    ("0,1,2\n\n1,1,nan\n", 3),
])
def test_load_errors_name_line(tmp_path, body, line):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(ParseError) as err:
        load_csv(path, 2)
    assert err.value.line == line
    assert f":{line}" in str(err.value)


def test_rescale(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("0,0,5\n1,10,5\n0,5,5\n")
    ds = load_csv(path, 2, rescale=True)
    np.testing.assert_allclose(ds.features[:, 0], [0.0, 1.0, 0.5])
    np.testing.assert_allclose(ds.features[:, 1], 0.0)


def test_batch_sizes():
    ds = Dataset(np.zeros((10, 2)), np.zeros(10, int), 1)
    sizes = [len(y) for _, y in batches(ds, 3, np.random.default_rng(0))]
    assert sizes == [3, 3, 3, 1]
    assert [len(y) for _, y in batches(ds, 50, np.random.default_rng(0))] == [10]


def test_batches_cover_every_row():
    ds = Dataset(np.arange(14.0)[:, None], np.zeros(14, int), 1)
    seen = np.concatenate([x[:, 0] for x, _ in batches(ds, 4, np.random.default_rng(3))])
    assert sorted(seen.tolist()) == list(range(14))


def test_dataset_validation():
    with pytest.raises(ContractError):
        Dataset(np.zeros((2, 2)), [0, 2], 2)
    with pytest.raises(ContractError):
        Dataset(np.zeros((0, 2)), [], 2)
