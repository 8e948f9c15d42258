"""First-order propagation of landmark measurement error through the
kernel predictor.

Linearizing the prediction around an input x gives dy = A dx with A the
analytic Jacobian of the Gaussian-kernel sum. The largest eigenvalue of
A^T A (the squared top singular value of A) bounds the amplification of a
small input perturbation; its mean/std over test samples is the reported
statistic.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import gaussian_cross
from .krr import predict_batch


@dataclass(frozen=True)
class SensitivityReport:
    per_vertex_max_singular_sq: np.ndarray = field(repr=False)
    vertex_indices: np.ndarray = field(repr=False)
    lambda_mean: float = 0.0
    lambda_std: float = 0.0
    lobe_label: str = "upper"
    column_selection: str = "all"
    n_samples: int = 0


def prediction_jacobian(model, x_new):
    """M x N Jacobian of the prediction at x_new.

    Each entry is sum_d W[d, m] * dK(x_new, x_d)/dx_n with the Gaussian
    derivative -2*k_b*(x_new - x_d)_n * K(x_new, x_d).
    """
    x = np.asarray(x_new, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise ValueError(
            f"input has dimension {x.shape}, model expects ({model.n_features},)"
        )
    krow = gaussian_cross(x[None, :], model.train_x,
                          model.hyper.k_a, model.hyper.k_b)[0]
    grad = (-2.0 * model.hyper.k_b) * (krow[:, None] * (x[None, :] - model.train_x))
    return model.weights.T @ grad


def max_singular_sq(a):
    """Largest eigenvalue of A^T A, computed from the singular values of A."""
    return float(np.linalg.svd(a, compute_uv=False)[0] ** 2)


def deflated_landmark_columns(landmark_count):
    """Input columns holding the intraoperatively measured deflated-landmark
    block (the only components subject to pointer measurement error)."""
    return list(range(3 * landmark_count, 6 * landmark_count))


def per_sample_lambda(model, xs, columns=None):
    """Largest eigenvalue of A^T A for each row of xs."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    values = np.empty(len(xs))
    for i, x in enumerate(xs):
        a = prediction_jacobian(model, x)
        if columns is not None:
            a = a[:, list(columns)]
        values[i] = max_singular_sq(a)
    return values


def aggregate_report(values, vertex_indices, lobe_label="upper", column_selection="all"):
    """Pool per-sample values (possibly from several folds) into a report."""
    values = np.asarray(values, dtype=np.float64)
    vidx = np.asarray(vertex_indices)
    if len(values) == 0:
        raise ValueError("need at least one sample")
    uniq = np.unique(vidx)
    per_vertex = np.array([values[vidx == u].mean() for u in uniq])
    return SensitivityReport(
        per_vertex_max_singular_sq=per_vertex,
        vertex_indices=uniq,
        lambda_mean=float(values.mean()),
        lambda_std=float(values.std()),
        lobe_label=lobe_label,
        column_selection=column_selection,
        n_samples=len(values),
    )


def lambda_statistics(model, test_samples, columns=None, lobe_label=None):
    """Top-eigenvalue statistics of A^T A across test samples.

    columns optionally restricts the perturbed input components (pass
    deflated_landmark_columns(l) to model pointer measurement error only).
    Per-vertex values are means over all samples sharing a vertex index.
    """
    samples = list(test_samples)
    if not samples:
        raise ValueError("need at least one test sample")
    values = per_sample_lambda(model, np.stack([s.x for s in samples]), columns)
    return aggregate_report(
        values,
        [s.vertex_index for s in samples],
        lobe_label=lobe_label or model.lobe_label,
        column_selection="all" if columns is None else "deflated_landmarks",
    )


def first_order_prediction_error(model, x, dx):
    """|| predict(x+dx) - predict(x) - A dx ||, the linearization residual."""
    a = prediction_jacobian(model, x)
    exact = predict_batch(model, np.stack([x + dx, x]))
    return float(np.linalg.norm(exact[0] - exact[1] - a @ dx))


def report_to_dict(report):
    return {
        "schema": "lungdeform-sensitivity-v1",
        "lobe": report.lobe_label,
        "column_selection": report.column_selection,
        "lambda_mean": report.lambda_mean,
        "lambda_std": report.lambda_std,
        "n_samples": report.n_samples,
        "vertex_indices": [int(i) for i in report.vertex_indices],
        "per_vertex_max_singular_sq": [float(v) for v in report.per_vertex_max_singular_sq],
    }
