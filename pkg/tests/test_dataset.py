import math

import numpy as np
import pytest

from rfprune.dataset import (DataError, Dataset, MODEL_TABLE, csv_text, generate_model,
                             model_spec, noisy_variant, read_csv, regression_function,
                             split_train_test, tilde_transform, write_csv)


def centre(d):
    return np.full((1, d), 0.5)


@pytest.mark.parametrize("model_id, expected", [
    (1, 1.0),                 # 0 + exp(0)
    (2, 0.0),
    (3, -1.0),                # -sin 0 + 0 + 0 - exp(0)
    (4, 0 + 1 + 0 + 0 + 2 + 0 + 4),
    (5, 0 + 0 + 0 + 1.0),     # indicators are strict at the centre
    (6, 0.0),
    (7, 0.0),
    (8, -2.0),
])
def test_regression_functions_at_centre(model_id, expected):
    d = MODEL_TABLE[model_id][1]
    assert regression_function(model_id, centre(d))[0] == pytest.approx(expected, abs=1e-12)


def test_model1_at_a_corner():
    x = np.zeros((1, 50))
    # x1~ = x2~ = -1
    assert regression_function(1, x)[0] == pytest.approx(1 + math.exp(-1))


def test_model6_counts_negative_coordinates():
    x = np.full((1, 30), 0.75)
    x[0, :4] = 0.25
    x[0, 20] = 0.1  # beyond the first ten coordinates, ignored
    assert regression_function(6, x)[0] == 4.0


def test_tilde_transform():
    assert np.allclose(tilde_transform([0.0, 0.5, 1.0]), [-1.0, 0.0, 1.0])


def test_unknown_model():
    with pytest.raises(DataError, match="unknown model id"):
        model_spec(9)


def test_noise_readings():
    assert model_spec(2).gaussian_sd == pytest.approx(math.sqrt(0.5))
    assert model_spec(2, noise_interpretation="sd").gaussian_sd == pytest.approx(0.5)
    assert model_spec(1).noise_kind == "none"
    noisy = noisy_variant(model_spec(1))
    assert noisy.noise_kind == "gaussian" and noisy.noise_scale == 1.0


def test_generated_features_are_uniform():
    data = generate_model(model_spec(5), 4000, seed=1)
    assert data.features.shape == (4000, 20)
    assert 0.0 <= data.features.min() and data.features.max() <= 1.0
    # Kolmogorov-Smirnov distance against U(0, 1) on one column
    v = np.sort(data.features[:, 0])
    grid = np.arange(1, v.size + 1) / v.size
    ks = max(np.max(grid - v), np.max(v - (grid - 1 / v.size)))
    assert ks < 1.63 / math.sqrt(v.size)  # 1% critical value


def test_noise_matches_its_variance():
    data = generate_model(model_spec(2), 20000, seed=2, debug=True)
    assert np.var(data.noise) == pytest.approx(0.5, rel=0.05)
    resid = data.responses - regression_function(2, data.features)
    assert np.allclose(resid, data.noise)


def test_model6_indicator_noise():
    data = generate_model(model_spec(6), 20000, seed=3, debug=True)
    assert set(np.unique(data.noise)) <= {0.0, -1.0}
    # P(Z > 1.25) = 0.10565
    assert np.mean(data.noise == -1.0) == pytest.approx(0.10565, abs=0.01)


def test_design_does_not_depend_on_noise():
    a = generate_model(model_spec(1), 50, seed=4)
    b = generate_model(model_spec(1, noise_scale=2.0), 50, seed=4)
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.responses, b.responses)


def test_split_sizes_and_partition():
    data = generate_model(model_spec(1), 101, seed=5)
    train, test = split_train_test(data, 0.8, seed=6)
    assert (train.n, test.n) == (81, 20)
    rows = {tuple(r) for r in train.features} | {tuple(r) for r in test.features}
    assert len(rows) == 101


def test_split_is_deterministic():
    data = generate_model(model_spec(1), 40, seed=5)
    a, _ = split_train_test(data, 0.8, seed=6)
    b, _ = split_train_test(data, 0.8, seed=6)
    assert np.array_equal(a.features, b.features)


def test_dataset_rejects_out_of_cube():
    with pytest.raises(DataError, match="row 1"):
        Dataset(np.array([[0.5], [1.5]]), np.zeros(2))


def test_csv_round_trip(tmp_path):
    data = generate_model(model_spec(3), 30, seed=7)
    path = tmp_path / "d.csv"
    write_csv(data, path)
    back = read_csv(path)
    assert np.array_equal(back.features, data.features)
    assert np.array_equal(back.responses, data.responses)
    assert path.read_text() == csv_text(data)


def test_csv_without_response(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text("x1,x2\n0.1,0.2\n0.3,0.4\n")
    data = read_csv(path, require_response=False)
    assert data.features.shape == (2, 2)
    with pytest.raises(DataError):
        read_csv(path)


@pytest.mark.parametrize("body, message", [
    ("", "empty file"),
    ("x1,y\n", "no data rows"),
    ("x1,y\n0.5,1\n0.5\n", "row 1"),
    ("x1,y\n0.5,abc\n", "row 0"),
    ("x1,y\n0.5,1\n1.2,1\n", "row 1"),
])
def test_csv_errors(tmp_path, body, message):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(DataError, match=message):
        read_csv(path)
