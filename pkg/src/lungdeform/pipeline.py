"""Experiment runners: leave-one-out evaluation against ground truth,
landmark-count and case-count sweeps, and sensitivity reports.

All runners are deterministic given the manifest and the seed. CSV bodies
carry only reproducible values; wall-clock metadata goes to a separate
run_meta.json so reruns are byte-identical.
"""

import csv
import itertools
import json
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from . import krr, sensitivity
from ._kernels import BACKEND
from .baselines import apply_affine, apply_tps, fit_affine, fit_tps
from .dataset import (
    build_dataset,
    feature_matrix,
    load_manifest,
    reconstruct_positions,
    split_leave_one_out,
    stack_samples,
)
from .errors import DataError, DegenerateConfigurationError
from .landmarks import LandmarkConfig, select_landmarks
from .metrics import EvaluationReport, default_dsc_spacing, dsc, hausdorff, rmse
from .mesh import save_ply

DEFAULT_VOLUME_RATIO = 0.60


@dataclass(frozen=True)
class RunConfig:
    manifest_path: str
    out_dir: str
    lobes: tuple | None = None
    ordering: str = "experiment2"
    landmark_count: int = 6
    methods: tuple = ("kernel", "affine", "tps")
    augment: bool = True
    seed: int = 0
    volume_ratio: float = DEFAULT_VOLUME_RATIO
    dsc_spacing: float | None = None
    k_a: float = 1.0
    k_b: float | None = None
    lam: float = 1e-3
    grid_search: bool = False
    ka_grid: tuple | None = None
    kb_grid: tuple | None = None
    lam_grid: tuple | None = None
    cv_folds: int = 4
    error_maps: bool = True
    error_map_saturation_mm: float = 8.5
    sweep_counts: tuple = tuple(range(1, 13))
    sweep_orderings: tuple = ("experiment1", "experiment2")
    case_counts: tuple | None = None
    case_models: tuple = (3, 6)
    max_combos: int = 200
    with_dsc_in_sweeps: bool = False
    sensitivity_ply: bool = False

    def __post_init__(self):
        if not self.methods:
            raise ValueError("methods must be nonempty")


def _fmt(value):
    if value is None or value == "":
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row.get(k)) for k in fieldnames])


def write_run_meta(out_dir, cfg, extra=None):
    meta = {
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in cfg.__dict__.items()},
        "kernel_backend": BACKEND,
        "finished_unix_time": time.time(),
    }
    if extra:
        meta.update(extra)
    with open(os.path.join(out_dir, "run_meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load(cfg):
    cases, lm_map, meta = load_manifest(cfg.manifest_path)
    originals = [c for c in cases if not c.is_augmented]
    missing = [c.case_id for c in originals if c.deflated is None]
    if missing:
        raise DataError(
            f"cases without deflated meshes cannot be evaluated: {missing}"
        )
    lobes = cfg.lobes or tuple(sorted({c.lobe_label for c in originals}))
    return originals, lm_map, lobes


def _lobe_cases(cases, lobe):
    chosen = [c for c in cases if c.lobe_label == lobe]
    if len(chosen) < 2:
        raise ValueError(f"lobe {lobe!r} has {len(chosen)} cases; need at least 2")
    return chosen


def _active_landmarks(lm_map, case, count, ordering):
    config = LandmarkConfig(
        full_indices=tuple(lm_map[(case.case_id, case.lobe_label)]),
        active_count=count,
        ordering=ordering,
    )
    return select_landmarks(config)


def _resolve_hyper(cfg, samples):
    if cfg.grid_search:
        xs, _ = stack_samples(samples)
        ka_grid, kb_grid, lam_grid = krr.default_hyper_grids(xs)
        ka_grid = list(cfg.ka_grid or ka_grid)
        kb_grid = list(cfg.kb_grid or kb_grid)
        lam_grid = list(cfg.lam_grid or lam_grid)
        n_cases = len({s.case_id for s in samples if len(s.source_ids) == 1})
        folds = min(cfg.cv_folds, n_cases)
        best, _ = krr.grid_search(samples, ka_grid, kb_grid, lam_grid, folds)
        return best
    if cfg.k_b is not None:
        return krr.KernelHyperparams(cfg.k_a, cfg.k_b, cfg.lam)
    xs, _ = stack_samples(samples)
    return krr.KernelHyperparams(cfg.k_a, 1.0 / krr.median_sq_dist(xs), cfg.lam)


def kernel_predict_mesh(train_cases, test_case, active, cfg, lobe):
    """Fit on the training split and estimate the test case's deflated mesh.

    Only intraoperatively available data enter the test features: the
    inflated mesh, the measured deflated landmark positions, and the
    volume-ratio parameter. Landmark vertices of the output mesh carry the
    measured positions since they are observed, not estimated.
    """
    samples = build_dataset(train_cases, active, augment=cfg.augment)
    hyper = _resolve_hyper(cfg, samples)
    xs, ys = stack_samples(samples)
    model = krr.fit(xs, ys, hyper, landmark_count=len(active), lobe_label=lobe)

    target_idx = [i for i in range(test_case.inflated.vertex_count) if i not in set(active)]
    measured = test_case.deflated.vertices[active]
    x_test = feature_matrix(
        test_case.inflated.vertices,
        target_idx,
        test_case.inflated.vertices[active],
        measured,
        test_case.v_inf,
        cfg.volume_ratio,
    )
    pred = reconstruct_positions(krr.predict_batch(model, x_test), measured)
    vertices = np.array(test_case.inflated.vertices)
    vertices[target_idx] = pred
    vertices[active] = measured
    return test_case.inflated.with_vertices(vertices), model, x_test, target_idx


def baseline_predict_mesh(method, test_case, active):
    src = test_case.inflated.vertices[active]
    dst = test_case.deflated.vertices[active]
    if method == "affine":
        return apply_affine(fit_affine(src, dst), test_case.inflated)
    if method == "tps":
        return apply_tps(fit_tps(src, dst), test_case.inflated)
    raise ValueError(f"unknown baseline {method!r}")


def _metric_row(predicted, truth, active, cfg, with_dsc=True):
    value, per_vertex = rmse(predicted, truth, landmark_indices=active)
    row = {
        "status": "ok",
        "rmse_mm": value,
        "hd_mm": hausdorff(predicted, truth),
    }
    if with_dsc:
        spacing = cfg.dsc_spacing or default_dsc_spacing(predicted, truth)
        row["dsc"] = dsc(predicted, truth, spacing)
        row["spacing_mm"] = spacing
    return row, per_vertex


def _summary(rows, keys, metrics=("rmse_mm", "dsc", "hd_mm")):
    """Mean/std aggregation of ok rows grouped by `keys`."""
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for group_key in sorted(groups, key=str):
        group = groups[group_key]
        ok = [r for r in group if r["status"] == "ok"]
        summary = dict(zip(keys, group_key))
        summary.update(
            row_type="summary",
            status="ok" if ok else "degenerate",
            n_cases=len(group),
            n_degenerate=len(group) - len(ok),
        )
        for m in metrics:
            vals = [r[m] for r in ok if r.get(m) is not None and r.get(m) != ""]
            if vals:
                summary[m] = float(np.mean(vals))
                summary[m + "_std"] = float(np.std(vals))
        out.append(summary)
    return out


EVAL_FIELDS = [
    "row_type", "lobe", "method", "ordering", "landmark_count", "case_id",
    "status", "rmse_mm", "dsc", "hd_mm", "spacing_mm",
    "rmse_mm_std", "dsc_std", "hd_mm_std", "n_cases", "n_degenerate",
]


def run_evaluate(cfg):
    """Leave-one-out evaluation of every requested method at one landmark
    count. Writes results.csv (case rows then summary rows), one JSON report
    per (case, method), and color-mapped error PLYs for the kernel method."""
    originals, lm_map, lobes = _load(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    reports_dir = os.path.join(cfg.out_dir, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    case_rows = []
    for lobe in lobes:
        lobe_cases = _lobe_cases(originals, lobe)
        for test in lobe_cases:
            active = _active_landmarks(lm_map, test, cfg.landmark_count, cfg.ordering)
            train, test = split_leave_one_out(lobe_cases, test.case_id)
            base = {
                "row_type": "case",
                "lobe": lobe,
                "ordering": cfg.ordering,
                "landmark_count": cfg.landmark_count,
                "case_id": test.case_id,
            }
            for method in cfg.methods:
                row = dict(base, method=method)
                try:
                    if method == "kernel":
                        predicted, _, _, _ = kernel_predict_mesh(
                            train, test, active, cfg, lobe
                        )
                    else:
                        predicted = baseline_predict_mesh(method, test, active)
                except DegenerateConfigurationError:
                    row.update(status="degenerate")
                    case_rows.append(row)
                    continue
                metric_row, per_vertex = _metric_row(predicted, test.deflated, active, cfg)
                row.update(metric_row)
                case_rows.append(row)
                _write_case_report(reports_dir, row, per_vertex)
                if method == "kernel" and cfg.error_maps:
                    sat = cfg.error_map_saturation_mm
                    scalars = np.clip(per_vertex / sat, 0.0, 1.0)
                    save_ply(
                        predicted,
                        os.path.join(
                            cfg.out_dir,
                            f"errormap_{lobe}_{test.case_id}_l{cfg.landmark_count}.ply",
                        ),
                        vertex_scalars=scalars,
                    )
    summary_rows = _summary(
        case_rows, keys=("lobe", "method", "ordering", "landmark_count")
    )
    rows = sorted(case_rows, key=lambda r: (r["lobe"], r["method"], r["case_id"]))
    rows += summary_rows
    out_csv = os.path.join(cfg.out_dir, "results.csv")
    write_csv(out_csv, EVAL_FIELDS, rows)
    write_run_meta(cfg.out_dir, cfg)
    return out_csv


def _write_case_report(reports_dir, row, per_vertex):
    report = EvaluationReport(
        rmse_mm=row["rmse_mm"],
        dsc=row["dsc"],
        hausdorff_mm=row["hd_mm"],
        per_vertex_error_mm=per_vertex,
        method=row["method"],
        landmark_count=row["landmark_count"],
        case_id=row["case_id"],
    )
    doc = {k: v for k, v in row.items() if not k.startswith("_")}
    doc["per_vertex_error_mm"] = [float(v) for v in report.per_vertex_error_mm]
    name = f"{row['lobe']}_{row['case_id']}_{row['method']}.json"
    with open(os.path.join(reports_dir, name), "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


SWEEP_LM_FIELDS = [
    "row_type", "lobe", "method", "ordering", "landmark_count", "named_model",
    "status", "n_cases", "n_degenerate",
    "rmse_mm", "rmse_mm_std", "dsc", "dsc_std", "hd_mm", "hd_mm_std",
]


def run_sweep_landmarks(cfg):
    """Summary metrics per (ordering, landmark count, method, lobe), the
    data behind accuracy-versus-observation-count curves."""
    originals, lm_map, lobes = _load(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    rows = []
    for lobe in lobes:
        lobe_cases = _lobe_cases(originals, lobe)
        for ordering, count in itertools.product(cfg.sweep_orderings, cfg.sweep_counts):
            sub_cfg = replace(cfg, ordering=ordering, landmark_count=count)
            case_rows = []
            for test in lobe_cases:
                active = _active_landmarks(lm_map, test, count, ordering)
                train, test = split_leave_one_out(lobe_cases, test.case_id)
                for method in cfg.methods:
                    row = {
                        "lobe": lobe, "ordering": ordering,
                        "landmark_count": count, "method": method,
                        "case_id": test.case_id,
                    }
                    try:
                        if method == "kernel":
                            predicted, _, _, _ = kernel_predict_mesh(
                                train, test, active, sub_cfg, lobe
                            )
                        else:
                            predicted = baseline_predict_mesh(method, test, active)
                    except DegenerateConfigurationError:
                        row["status"] = "degenerate"
                        case_rows.append(row)
                        continue
                    metric_row, _ = _metric_row(
                        predicted, test.deflated, active, cfg,
                        with_dsc=cfg.with_dsc_in_sweeps,
                    )
                    case_rows.append(dict(row, **metric_row))
            for summary in _summary(
                case_rows, keys=("lobe", "method", "ordering", "landmark_count")
            ):
                named = ""
                if summary["ordering"] == "experiment2":
                    named = {3: "3lm", 6: "6lm"}.get(summary["landmark_count"], "")
                summary["named_model"] = named
                rows.append(summary)
    rows.sort(key=lambda r: (r["lobe"], r["method"], r["ordering"], r["landmark_count"]))
    out_csv = os.path.join(cfg.out_dir, "sweep_landmarks.csv")
    write_csv(out_csv, SWEEP_LM_FIELDS, rows)
    write_run_meta(cfg.out_dir, cfg)
    return out_csv


SWEEP_CASE_FIELDS = [
    "row_type", "lobe", "model", "train_cases", "n_evaluations", "exhaustive",
    "status", "rmse_mm", "rmse_mm_std", "dsc", "dsc_std", "hd_mm", "hd_mm_std",
]


def _combo_subsample(combos, cap, seed_key):
    if len(combos) <= cap:
        return combos, True
    rng = np.random.default_rng(seed_key)
    idx = np.sort(rng.choice(len(combos), size=cap, replace=False))
    return [combos[i] for i in idx], False


def run_sweep_cases(cfg):
    """Kernel accuracy versus number of training cases.

    For every test case and training-set size c, all C(n-1, c) training
    subsets are evaluated (or a seeded subsample of max_combos when there
    are more). Means and stds are pooled per (lobe, model, c)."""
    originals, lm_map, lobes = _load(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    rows = []
    for lobe_idx, lobe in enumerate(lobes):
        lobe_cases = _lobe_cases(originals, lobe)
        n = len(lobe_cases)
        counts = cfg.case_counts or tuple(range(1, n))
        eval_rows = []
        for count in counts:
            if not 1 <= count <= n - 1:
                raise ValueError(f"train_cases={count} impossible with {n} cases")
        for test_idx, test in enumerate(lobe_cases):
            rest = [c for c in lobe_cases if c.case_id != test.case_id]
            for count in counts:
                combos = list(itertools.combinations(range(len(rest)), count))
                combos, exhaustive = _combo_subsample(
                    combos, cfg.max_combos, [cfg.seed, lobe_idx, test_idx, count]
                )
                for model_count in cfg.case_models:
                    active = _active_landmarks(lm_map, test, model_count, cfg.ordering)
                    for combo in combos:
                        train = [rest[i] for i in combo]
                        predicted, _, _, _ = kernel_predict_mesh(
                            train, test, active, cfg, lobe
                        )
                        metric_row, _ = _metric_row(
                            predicted, test.deflated, active, cfg,
                            with_dsc=cfg.with_dsc_in_sweeps,
                        )
                        eval_rows.append(
                            dict(
                                metric_row,
                                lobe=lobe,
                                model=f"{model_count}lm",
                                train_cases=count,
                                exhaustive=exhaustive,
                            )
                        )
        for summary in _summary(eval_rows, keys=("lobe", "model", "train_cases")):
            matching = [
                r for r in eval_rows
                if (r["lobe"], r["model"], r["train_cases"])
                == (summary["lobe"], summary["model"], summary["train_cases"])
            ]
            summary["n_evaluations"] = len(matching)
            summary["exhaustive"] = all(r["exhaustive"] for r in matching)
            summary.pop("n_cases", None)
            summary.pop("n_degenerate", None)
            rows.append(summary)
    rows.sort(key=lambda r: (r["lobe"], r["model"], r["train_cases"]))
    out_csv = os.path.join(cfg.out_dir, "sweep_cases.csv")
    write_csv(out_csv, SWEEP_CASE_FIELDS, rows)
    write_run_meta(cfg.out_dir, cfg)
    return out_csv


def run_sensitivity(cfg):
    """Leave-one-out measurement-error amplification statistics per lobe,
    for the full input vector and for the measured deflated-landmark block
    alone. Optionally writes a per-vertex sqrt(amplification) PLY map."""
    originals, lm_map, lobes = _load(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    doc = {"schema": "lungdeform-sensitivity-run-v1", "lobes": {}}
    for lobe in lobes:
        lobe_cases = _lobe_cases(originals, lobe)
        values_all = []
        values_lm = []
        vidx = []
        for test in lobe_cases:
            active = _active_landmarks(lm_map, test, cfg.landmark_count, cfg.ordering)
            train, test = split_leave_one_out(lobe_cases, test.case_id)
            _, model, x_test, target_idx = kernel_predict_mesh(
                train, test, active, cfg, lobe
            )
            values_all.append(sensitivity.per_sample_lambda(model, x_test))
            values_lm.append(
                sensitivity.per_sample_lambda(
                    model, x_test,
                    columns=sensitivity.deflated_landmark_columns(len(active)),
                )
            )
            vidx.append(np.asarray(target_idx))
        report_all = sensitivity.aggregate_report(
            np.concatenate(values_all), np.concatenate(vidx), lobe, "all"
        )
        report_lm = sensitivity.aggregate_report(
            np.concatenate(values_lm), np.concatenate(vidx), lobe, "deflated_landmarks"
        )
        doc["lobes"][lobe] = {
            "all": sensitivity.report_to_dict(report_all),
            "deflated_landmarks": sensitivity.report_to_dict(report_lm),
        }
        if cfg.sensitivity_ply:
            amp = np.sqrt(report_all.per_vertex_max_singular_sq)
            scalars = np.zeros(lobe_cases[0].deflated.vertex_count)
            scalars[report_all.vertex_indices] = amp / max(amp.max(), 1e-12)
            save_ply(
                lobe_cases[0].deflated,
                os.path.join(cfg.out_dir, f"sensitivity_{lobe}.ply"),
                vertex_scalars=scalars,
            )
    out_json = os.path.join(cfg.out_dir, "sensitivity.json")
    with open(out_json, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_run_meta(cfg.out_dir, cfg)
    return out_json
