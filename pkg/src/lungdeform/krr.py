"""Gaussian kernel ridge regression.

The estimator is trained on per-vertex samples and solves
(K + lambda*E) W = Y for the weight matrix, where K is the Gaussian kernel
matrix of the training inputs. Prediction of a new input is the kernel
row against the training inputs times W.
"""

import base64
import io
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ._kernels import gaussian_cross, gaussian_gram
from .errors import ConditioningError

FEATURE_ORDER_TAG = "r_inf[1..l],r_def[1..l],V_inf,VR;unnormalized"


@dataclass(frozen=True)
class KernelHyperparams:
    k_a: float
    k_b: float
    lam: float

    def __post_init__(self):
        if not self.k_a > 0:
            raise ValueError("k_a must be positive")
        if not self.k_b > 0:
            raise ValueError("k_b must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


@dataclass(frozen=True)
class KernelModel:
    """Frozen fit: training inputs, ridge weights, and metadata."""

    hyper: KernelHyperparams
    train_x: np.ndarray
    train_y: np.ndarray
    weights: np.ndarray
    landmark_count: int = 0
    feature_order_tag: str = FEATURE_ORDER_TAG
    lobe_label: str = "upper"

    def __post_init__(self):
        if len(self.weights) != len(self.train_x) or self.weights.shape != self.train_y.shape:
            raise ValueError(
                f"weight rows must match training rows: weights "
                f"{self.weights.shape}, train_x {self.train_x.shape}"
            )

    @property
    def n_features(self):
        return self.train_x.shape[1]

    @property
    def n_outputs(self):
        return self.weights.shape[1]


def gaussian_kernel(x, x_prime, hyper):
    """k_a * exp(-k_b * ||x - x'||^2) for a single pair of vectors."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(x_prime, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return hyper.k_a * math.exp(-hyper.k_b * float(np.dot(d, d)))


def build_kernel_matrix(xs, hyper):
    """Gaussian kernel matrix of the rows of xs (symmetric, diagonal k_a)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    return gaussian_gram(xs, hyper.k_a, hyper.k_b)


def fit(xs, ys, hyper, landmark_count=0, lobe_label="upper",
        feature_order_tag=FEATURE_ORDER_TAG):
    """Solve (K + lambda*E) W = Y by Cholesky factorization.

    Raises ConditioningError when the regularized kernel matrix is not
    numerically positive definite.
    """
    xs = np.ascontiguousarray(np.atleast_2d(xs), dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if ys.ndim == 1:
        ys = ys[:, None]
    if len(xs) != len(ys):
        raise ValueError("xs and ys must have the same number of rows")
    # the gram matrix is regularized and factored in place: at the largest
    # training sizes (~14k samples) every extra D x D copy costs gigabytes
    a = build_kernel_matrix(xs, hyper)
    a[np.diag_indices_from(a)] += hyper.lam
    try:
        factor = cho_factor(a, lower=True, overwrite_a=True, check_finite=False)
    except LinAlgError as exc:
        raise ConditioningError(
            f"K + lambda*E not positive definite (smallest pivot at "
            f"leading minor of order reported by LAPACK: {exc}); "
            f"min diagonal {hyper.k_a + hyper.lam:.3e}"
        ) from exc
    # canonical C layout so persisted and in-memory models predict identically
    weights = np.ascontiguousarray(cho_solve(factor, ys, check_finite=False))
    return KernelModel(
        hyper=hyper,
        train_x=xs,
        train_y=ys,
        weights=weights,
        landmark_count=landmark_count,
        feature_order_tag=feature_order_tag,
        lobe_label=lobe_label,
    )


def predict(model, x_new):
    """Estimate the output for one new input vector."""
    x = np.asarray(x_new, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise ValueError(
            f"input has dimension {x.shape}, model expects ({model.n_features},)"
        )
    return predict_batch(model, x[None, :])[0]


def predict_batch(model, xs_new):
    """Estimate outputs for a (Q, N) block of new inputs."""
    q = np.atleast_2d(np.asarray(xs_new, dtype=np.float64))
    if q.shape[1] != model.n_features:
        raise ValueError(
            f"inputs have dimension {q.shape[1]}, model expects {model.n_features}"
        )
    k = gaussian_cross(q, model.train_x, model.hyper.k_a, model.hyper.k_b)
    return k @ model.weights


def normal_equation_residual(model):
    """Frobenius norm of (K + lambda*E) W - Y, for diagnostics."""
    k = build_kernel_matrix(model.train_x, model.hyper)
    a = k + model.hyper.lam * np.eye(len(k))
    return float(np.linalg.norm(a @ model.weights - model.train_y))


def median_sq_dist(xs, max_samples=1024):
    """Median squared pairwise distance, on a deterministic subsample.

    The reciprocal is the default bandwidth (median heuristic).
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if len(xs) > max_samples:
        stride = int(np.ceil(len(xs) / max_samples))
        xs = xs[::stride]
    sq = np.einsum("ij,ij->i", xs, xs)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (xs @ xs.T)
    vals = d2[np.triu_indices(len(xs), 1)]
    vals = vals[vals > 0]
    if len(vals) == 0:
        return 1.0
    return float(np.median(vals))


def default_hyper_grids(xs):
    """Bandwidth grid of decade steps around the median heuristic, plus a
    standard ridge grid. k_a is left at 1."""
    scale = 1.0 / median_sq_dist(xs)
    return (
        [1.0],
        [scale * 10.0**e for e in range(-6, 1)],
        [1e-4, 1e-3, 1e-2, 1e-1],
    )


def grid_search(samples, ka_grid, kb_grid, lambda_grid, folds):
    """Cross-validated hyperparameter selection.

    Folds partition the ORIGINAL source cases, never individual vertices:
    all samples of a case stay together, and augmented samples are dropped
    from training whenever either parent case sits in the validation fold.
    Returns (best KernelHyperparams, table); the table has one row per grid
    point: (k_a, k_b, lambda, mean_rmse, std_rmse) with the RMSE computed on
    reconstructed positions. Ties break to the first grid point in
    iteration order.
    """
    if not (ka_grid and kb_grid and lambda_grid):
        raise ValueError("hyperparameter grids must be nonempty")
    if folds < 2:
        raise ValueError("folds must be at least 2")
    xs = np.stack([s.x for s in samples])
    ys = np.stack([s.y for s in samples])
    sources = [getattr(s, "source_ids", (s.case_id,)) for s in samples]
    originals = sorted({s.case_id for s in samples if len(getattr(s, "source_ids", (s.case_id,))) == 1})
    if len(originals) < folds:
        raise ValueError(f"{len(originals)} cases cannot fill {folds} folds")
    fold_of = {cid: i % folds for i, cid in enumerate(originals)}

    masks = []
    for f in range(folds):
        val_cases = {c for c in originals if fold_of[c] == f}
        val = np.array([s.case_id in val_cases and len(src) == 1
                        for s, src in zip(samples, sources)])
        train = np.array([not (set(src) & val_cases) for src in sources])
        if val.any() and train.any():
            masks.append((train, val))
    if not masks:
        raise ValueError("fold construction left no usable train/validation split")

    table = []
    best = None
    best_score = np.inf
    for k_a, k_b, lam in itertools.product(ka_grid, kb_grid, lambda_grid):
        hyper = KernelHyperparams(k_a, k_b, lam)
        fold_rmse = []
        for train, val in masks:
            model = fit(xs[train], ys[train], hyper)
            pred = predict_batch(model, xs[val])
            fold_rmse.append(
                float(np.sqrt(np.mean(np.sum((pred - ys[val]) ** 2, axis=1))))
            )
        mean = float(np.mean(fold_rmse))
        std = float(np.std(fold_rmse))
        table.append((k_a, k_b, lam, mean, std))
        if mean < best_score:
            best_score = mean
            best = hyper
    return best, table


# ---------------------------------------------------------------------------
# Model persistence (JSON with base64 little-endian float64 arrays)


def _encode(arr):
    return base64.b64encode(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
    ).decode("ascii")


def _decode(text, shape):
    return np.frombuffer(base64.b64decode(text), dtype="<f8").reshape(shape).copy()


def save_model(model, path):
    doc = {
        "schema": "lungdeform-model-v1",
        "hyper": {"k_a": model.hyper.k_a, "k_b": model.hyper.k_b,
                  "lambda": model.hyper.lam},
        "n_features": model.n_features,
        "n_outputs": model.n_outputs,
        "n_samples": len(model.train_x),
        "landmark_count": model.landmark_count,
        "feature_order_tag": model.feature_order_tag,
        "lobe_label": model.lobe_label,
        "train_x": _encode(model.train_x),
        "train_y": _encode(model.train_y),
        "weights": _encode(model.weights),
    }
    if isinstance(path, io.IOBase):
        json.dump(doc, path)
    else:
        with open(path, "w") as fh:
            json.dump(doc, fh)


def load_model(path):
    if isinstance(path, io.IOBase):
        doc = json.load(path)
    else:
        with open(path) as fh:
            doc = json.load(fh)
    if doc.get("schema") != "lungdeform-model-v1":
        raise ValueError(f"not a model file: schema={doc.get('schema')!r}")
    d, n, m = doc["n_samples"], doc["n_features"], doc["n_outputs"]
    return KernelModel(
        hyper=KernelHyperparams(
            doc["hyper"]["k_a"], doc["hyper"]["k_b"], doc["hyper"]["lambda"]
        ),
        train_x=_decode(doc["train_x"], (d, n)),
        train_y=_decode(doc["train_y"], (d, m)),
        weights=_decode(doc["weights"], (d, m)),
        landmark_count=doc["landmark_count"],
        feature_order_tag=doc["feature_order_tag"],
        lobe_label=doc["lobe_label"],
    )
