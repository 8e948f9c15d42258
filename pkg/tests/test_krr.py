import io
import itertools

import numpy as np
import pytest

from lungdeform import krr
from lungdeform._kernels import available_backends
from lungdeform.dataset import FeatureSample
from lungdeform.errors import ConditioningError
from lungdeform.krr import (
    KernelHyperparams,
    build_kernel_matrix,
    fit,
    gaussian_kernel,
    grid_search,
    load_model,
    predict,
    predict_batch,
    save_model,
)


def hyper(k_a=1.0, k_b=1.0, lam=0.0):
    return KernelHyperparams(k_a, k_b, lam)


# ---------------------------------------------------------------- kernel fn


def test_kernel_zero_distance_gives_ka():
    assert gaussian_kernel([1.0, 2.0], [1.0, 2.0], hyper(k_a=3.5)) == 3.5


def test_kernel_value_against_mpmath():
    mp = pytest.importorskip("mpmath")
    got = gaussian_kernel([0.0, 0.0], [1.0, 1.0], hyper(k_a=1.0, k_b=0.5))
    expected = float(mp.exp(-1))
    assert got == pytest.approx(expected, abs=1e-16)
    assert got == pytest.approx(0.36787944117144233, abs=1e-16)


def test_kernel_underflows_to_zero_without_nan():
    val = gaussian_kernel([0.0], [1.0], hyper(k_b=1e6))
    assert val == 0.0 and not np.isnan(val)


def test_kernel_dimension_mismatch():
    with pytest.raises(ValueError):
        gaussian_kernel([0.0, 1.0], [0.0], hyper())


def test_hyper_validation():
    with pytest.raises(ValueError):
        KernelHyperparams(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        KernelHyperparams(1.0, -1.0, 0.0)
    with pytest.raises(ValueError):
        KernelHyperparams(1.0, 1.0, -1e-9)


# ------------------------------------------------------------ kernel matrix


def test_matrix_single_sample():
    k = build_kernel_matrix(np.array([[1.0, 2.0, 3.0]]), hyper(k_a=2.0))
    assert k.shape == (1, 1) and k[0, 0] == 2.0


def test_matrix_bitwise_symmetric():
    xs = np.random.default_rng(0).normal(size=(40, 7))
    k = build_kernel_matrix(xs, hyper(k_b=0.3))
    assert np.array_equal(k, k.T)
    assert (np.diag(k) == 1.0).all()


def test_matrix_matches_entrywise_kernel():
    xs = np.random.default_rng(1).normal(size=(3, 5))
    h = hyper(k_a=1.7, k_b=0.21)
    k = build_kernel_matrix(xs, h)
    for i, j in itertools.product(range(3), range(3)):
        assert k[i, j] == pytest.approx(gaussian_kernel(xs[i], xs[j], h), rel=1e-10)


def test_matrix_positive_semidefinite():
    for seed in range(5):
        xs = np.random.default_rng(seed).normal(size=(60, 6))
        k = build_kernel_matrix(xs, hyper(k_b=0.5))
        smallest = np.linalg.eigvalsh(k).min()
        assert smallest >= -1e-10 * len(xs)


def test_backends_agree():
    backends = available_backends()
    if len(backends) < 2:
        pytest.skip("compiled backend not built")
    xs = np.random.default_rng(2).normal(size=(50, 9))
    q = np.random.default_rng(3).normal(size=(7, 9))
    grams = [b.gaussian_gram(xs, 1.3, 0.07) for b in backends.values()]
    crosses = [b.gaussian_cross(q, xs, 1.3, 0.07) for b in backends.values()]
    assert np.allclose(grams[0], grams[1], rtol=1e-12, atol=0)
    assert np.allclose(crosses[0], crosses[1], rtol=1e-12, atol=0)


# -------------------------------------------------------------------- fit


def test_fit_near_identity_kernel_recovers_targets():
    xs = np.arange(5, dtype=float)[:, None] * 1e4
    ys = np.random.default_rng(4).normal(size=(5, 3))
    model = fit(xs, ys, hyper(k_b=1e-2, lam=0.0))
    assert np.allclose(model.weights, ys, atol=1e-12)


def test_fit_heavy_regularization_shrinks_weights():
    xs = np.random.default_rng(5).normal(size=(20, 4))
    ys = np.random.default_rng(6).normal(size=(20, 3))
    model = fit(xs, ys, hyper(lam=1e9))
    assert np.linalg.norm(model.weights) < 1e-7


def test_fit_two_by_two_hand_inverse():
    # Arrange two points so K = [[1, 0.5], [0.5, 1]]: exp(-kb*d^2) = 0.5.
    d2 = np.log(2.0)
    xs = np.array([[0.0], [np.sqrt(d2)]])
    ys = np.array([[1.0], [0.0]])
    model = fit(xs, ys, hyper(k_b=1.0, lam=0.1))
    # Explicit 2x2 inversion of [[1.1, 0.5], [0.5, 1.1]]:
    # det = 1.1^2 - 0.25 = 0.96, W = [1.1, -0.5] / det.
    assert model.weights[:, 0] == pytest.approx([1.1 / 0.96, -0.5 / 0.96], rel=1e-12)


def test_fit_interpolates_at_lambda_zero():
    rng = np.random.default_rng(7)
    xs = rng.normal(size=(30, 6))
    ys = rng.normal(size=(30, 3))
    model = fit(xs, ys, hyper(k_b=0.4, lam=0.0))
    for i in range(len(xs)):
        got = predict(model, xs[i])
        assert np.linalg.norm(got - ys[i]) <= 1e-6 * max(np.linalg.norm(ys[i]), 1e-12)


def test_fit_normal_equation_residual():
    rng = np.random.default_rng(8)
    xs = rng.normal(size=(40, 5))
    ys = rng.normal(size=(40, 3))
    for lam in (0.0, 1e-3, 1e-1):
        model = fit(xs, ys, hyper(k_b=0.5, lam=lam))
        assert krr.normal_equation_residual(model) <= 1e-8 * np.linalg.norm(ys)


def test_fit_singular_kernel_raises_conditioning_error():
    xs = np.zeros((3, 2))  # identical inputs, lambda 0: exactly singular
    ys = np.ones((3, 1))
    with pytest.raises(ConditioningError):
        fit(xs, ys, hyper(lam=0.0))


def test_prediction_linear_in_targets():
    rng = np.random.default_rng(9)
    xs = rng.normal(size=(25, 4))
    ys = rng.normal(size=(25, 3))
    h = hyper(k_b=0.7, lam=1e-2)
    q = rng.normal(size=(6, 4))
    base = predict_batch(fit(xs, ys, h), q)
    doubled = predict_batch(fit(xs, 2.0 * ys, h), q)
    assert np.array_equal(doubled, 2.0 * base)  # power-of-two scaling is exact


# ------------------------------------------------------------------ predict


def test_predict_far_input_decays_to_zero():
    xs = np.random.default_rng(10).normal(size=(10, 3))
    ys = np.random.default_rng(11).normal(size=(10, 3))
    model = fit(xs, ys, hyper(k_b=1.0, lam=1e-3))
    far = predict(model, np.full(3, 1e4))
    assert np.allclose(far, 0.0, atol=1e-200)


def test_predict_matches_double_loop_oracle():
    rng = np.random.default_rng(12)
    xs = rng.normal(size=(20, 4))
    ys = rng.normal(size=(20, 3))
    h = hyper(k_a=1.4, k_b=0.3, lam=1e-2)
    model = fit(xs, ys, h)
    x_new = rng.normal(size=4)
    expected = np.zeros(3)
    for d in range(20):
        expected += gaussian_kernel(x_new, xs[d], h) * model.weights[d]
    assert np.allclose(predict(model, x_new), expected, rtol=1e-10)


def test_predict_dimension_mismatch():
    model = fit(np.zeros((2, 3)) + np.arange(2)[:, None], np.ones((2, 1)), hyper(lam=0.1))
    with pytest.raises(ValueError):
        predict(model, np.zeros(4))


# -------------------------------------------------------------- grid search


def _toy_samples(n_cases=4, per_case=15, noise=0.05, k_true=1.5):
    rng = np.random.default_rng(13)
    samples = []
    for c in range(n_cases):
        xs = rng.uniform(-2, 2, size=(per_case, 2))
        ys = np.stack(
            [np.sin(k_true * xs[:, 0]), np.cos(k_true * xs[:, 1]), xs[:, 0] * 0]
        ).T + noise * rng.normal(size=(per_case, 3))
        for i in range(per_case):
            samples.append(
                FeatureSample(x=xs[i], y=ys[i], case_id=f"c{c}", vertex_index=i)
            )
    return samples


def test_grid_search_single_point():
    samples = _toy_samples()
    best, table = grid_search(samples, [1.0], [0.5], [1e-3], folds=2)
    assert len(table) == 1
    assert best == KernelHyperparams(1.0, 0.5, 1e-3)


def test_grid_search_tie_breaks_to_first():
    samples = _toy_samples()
    best, table = grid_search(samples, [1.0, 1.0], [0.5], [1e-3], folds=2)
    assert len(table) == 2
    assert table[0][3] == table[1][3]
    assert best == KernelHyperparams(1.0, 0.5, 1e-3)


def test_grid_search_interior_optimum_on_smooth_data():
    samples = _toy_samples()
    xs = np.stack([s.x for s in samples])
    scale = 1.0 / krr.median_sq_dist(xs)
    kb_grid = [scale * 10.0**e for e in range(-4, 5)]
    best, table = grid_search(samples, [1.0], kb_grid, [1e-3], folds=4)
    assert best.k_b not in (kb_grid[0], kb_grid[-1])


def test_grid_search_requires_enough_cases():
    samples = _toy_samples(n_cases=2)
    with pytest.raises(ValueError):
        grid_search(samples, [1.0], [0.5], [1e-3], folds=3)


def test_grid_search_keeps_cases_whole_and_excludes_tainted_augmentations():
    samples = _toy_samples(n_cases=4)
    # augmented samples inherit both parents; they must never train against
    # a fold validating either parent
    aug = [
        FeatureSample(
            x=s.x + 0.01, y=s.y, case_id="mid(c0,c1)",
            vertex_index=s.vertex_index, source_ids=("c0", "c1"),
        )
        for s in samples[:10]
    ]
    best, table = grid_search(samples + aug, [1.0], [0.5], [1e-3, 1e-2], folds=2)
    assert len(table) == 2
    assert isinstance(best, KernelHyperparams)


# -------------------------------------------------------------- persistence


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    xs = rng.normal(size=(12, 5))
    ys = rng.normal(size=(12, 3))
    model = fit(xs, ys, hyper(k_b=0.2, lam=1e-3), landmark_count=6,
                lobe_label="lower")
    path = tmp_path / "model.json"
    save_model(model, path)
    back = load_model(path)
    assert back.hyper == model.hyper
    assert np.array_equal(back.train_x, model.train_x)
    assert np.array_equal(back.train_y, model.train_y)
    assert np.array_equal(back.weights, model.weights)
    assert back.landmark_count == 6
    assert back.lobe_label == "lower"
    assert back.feature_order_tag == model.feature_order_tag
    x_new = rng.normal(size=5)
    assert np.array_equal(predict(back, x_new), predict(model, x_new))


def test_model_stream_round_trip():
    model = fit(np.eye(3), np.ones((3, 2)), hyper(lam=0.1))
    buf = io.StringIO()
    save_model(model, buf)
    buf.seek(0)
    back = load_model(buf)
    assert np.array_equal(back.weights, model.weights)


def test_load_model_rejects_other_json(tmp_path):
    path = tmp_path / "junk.json"
    path.write_text('{"schema": "something-else"}')
    with pytest.raises(ValueError):
        load_model(path)
