"""Procedural generation of corresponded inflated/deflated lobe-like mesh
pairs, so the full estimation protocol can run without animal CT data.

A case starts from a deterministic Fibonacci-sphere triangulation that is
smoothly perturbed into a lobe shape: anisotropic radii, a low-frequency
radial bump field, an out-of-plane twist (so the outer contour is genuinely
non-planar), and a flattened side standing in for the major fissure. Every
inflated mesh in a cohort is rescaled to the same whole volume, mirroring
the volume standardization applied to the real data and keeping the raw
volume feature on a comparable scale across cases.

The deflated state maps the inflated vertices through a smooth non-affine
field: anisotropic compression toward the fissure plane whose strength
varies across the lobe, composed with a gravity-like quadratic bend, then a
uniform rescale enforcing the target deflated/inflated volume ratio. The
map is injective by construction, so correspondence is by vertex index and
the deflated surface stays a closed manifold.
"""

import hashlib
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull
from scipy.special import expit

from .dataset import CaseRecord, save_manifest
from .errors import GenerationError
from .landmarks import outer_contour, place_contour_landmarks
from .mesh import Mesh, mesh_volume, save_ply

_FLATTEN_BASE = 0.35
_TWIST_BASE = 0.15
_COMPRESS_UNIFORM = 0.70
_COMPRESS_FOCAL = 0.60
_RATIO_TOL = 1e-4


@dataclass(frozen=True)
class GeneratorParams:
    seed: int = 0
    vertex_count: int = 400
    base_radii: tuple = (30.0, 16.0, 22.0)
    shape_perturbation: float = 0.08
    target_volume_ratio: float = 0.60
    bend_strength: float = 0.25
    fissure_axis: tuple = (0.0, 0.0, 1.0)
    lobe_label: str = "upper"

    def __post_init__(self):
        if self.vertex_count < 50:
            raise ValueError("vertex_count must be at least 50")
        if min(self.base_radii) <= 0:
            raise ValueError("radii must be positive")
        if not 0 < self.target_volume_ratio <= 1:
            raise ValueError("target_volume_ratio must be in (0, 1]")
        if not 0 <= self.shape_perturbation <= 0.3:
            raise ValueError("shape_perturbation must be in [0, 0.3]")
        if not 0 <= self.bend_strength <= 0.5:
            raise ValueError("bend_strength must be in [0, 0.5]")
        f = np.asarray(self.fissure_axis, dtype=np.float64)
        if abs(np.linalg.norm(f) - 1.0) > 1e-9:
            raise ValueError("fissure_axis must be a unit vector")


@dataclass(frozen=True)
class SynthCase:
    record: CaseRecord
    landmark_indices: tuple
    corner_hints: np.ndarray
    view_axis: np.ndarray


def _fibonacci_sphere(n):
    i = np.arange(n)
    golden = (1.0 + 5.0**0.5) / 2.0
    z = 1.0 - (2.0 * i + 1.0) / n
    theta = 2.0 * np.pi * i / golden
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])


def _sphere_triangulation(n):
    pts = _fibonacci_sphere(n)
    hull = ConvexHull(pts)
    if len(hull.vertices) != n:
        raise GenerationError(f"sphere lattice lost {n - len(hull.vertices)} vertices")
    tris = hull.simplices.astype(np.int32)
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    inward = np.einsum("ij,ij->i", np.cross(b - a, c - a), (a + b + c) / 3.0) < 0
    tris[inward] = tris[inward][:, [0, 2, 1]]
    return pts, tris


def _frame(params):
    """Orthonormal (fissure, long, view) frame with per-axis radii.

    The view axis is the flatter of the two directions orthogonal to the
    fissure axis; the long axis is the other one.
    """
    f = np.asarray(params.fissure_axis, dtype=np.float64)
    radii = np.asarray(params.base_radii, dtype=np.float64)
    ref = np.eye(3)[int(np.argmin(np.abs(f)))]
    a = ref - np.dot(ref, f) * f
    a /= np.linalg.norm(a)
    b = np.cross(f, a)

    def radius_along(d):
        return float(np.sqrt(np.sum((radii * d) ** 2)))

    if radius_along(a) >= radius_along(b):
        g, n = a, b
    else:
        g, n = b, a
    return f, g, n, radius_along(f), radius_along(g), radius_along(n)


def _case_rng(params, case_index):
    lobe_code = 0 if params.lobe_label == "upper" else 1
    return np.random.default_rng([params.seed, case_index, lobe_code])


def _draws(rng, params):
    sp = params.shape_perturbation
    alphas = rng.uniform(-1.0, 1.0, 4)
    total = np.abs(alphas).sum()
    if total > 0:
        alphas = alphas / total
    return {
        "radii_jitter": 1.0 + 0.5 * sp * rng.uniform(-1.0, 1.0, 3),
        "bump_dirs": _unit_rows(rng.standard_normal((4, 3))),
        "bump_amps": sp * alphas,
        "flatten": _FLATTEN_BASE * (1.0 + 0.3 * rng.uniform(-1.0, 1.0)),
        "twist": _TWIST_BASE * (1.0 + 0.5 * rng.uniform(-1.0, 1.0)),
        "g_uniform": _COMPRESS_UNIFORM * (1.0 + 0.15 * rng.uniform(-1.0, 1.0)),
        "g_focal": _COMPRESS_FOCAL * (1.0 + 0.3 * rng.uniform(-1.0, 1.0)),
        "focus_offset": rng.uniform(-0.35, 0.35, 2),
        "focus_width": 0.50 * (1.0 + 0.2 * rng.uniform(-1.0, 1.0)),
        "bend_gain": 1.0 + 0.3 * rng.uniform(-1.0, 1.0),
    }


def _unit_rows(m):
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def _zero_draws():
    return {
        "radii_jitter": np.ones(3),
        "bump_dirs": np.eye(3)[[0, 1, 2, 0]].astype(float),
        "bump_amps": np.zeros(4),
        "flatten": _FLATTEN_BASE,
        "twist": _TWIST_BASE,
        "g_uniform": _COMPRESS_UNIFORM,
        "g_focal": _COMPRESS_FOCAL,
        "focus_offset": np.zeros(2),
        "focus_width": 0.50,
        "bend_gain": 1.0,
    }


def _inflated_vertices(unit_pts, params, draws):
    f, g, n, r_f, r_g, r_n = _frame(params)
    radii = np.asarray(params.base_radii) * draws["radii_jitter"]
    bump = 1.0 + (draws["bump_amps"][None, :] * (unit_pts @ draws["bump_dirs"].T) ** 2).sum(axis=1)
    v = unit_pts * bump[:, None] * radii
    s_f = v @ f
    s_g = v @ g
    # out-of-plane twist keeps the silhouette contour off a single plane
    v = v + np.outer(draws["twist"] * r_n * (s_g / r_g) * (s_f / r_f), n)
    # smooth one-sided flattening: the major-fissure side of the lobe
    s = (v @ f) / r_f
    flattened = s - draws["flatten"] * s * expit(4.0 * s)
    v = v + np.outer(r_f * flattened - v @ f, f)
    return v


def canonical_mesh(params):
    """The jitter-free lobe shape shared by a cohort. Its volume is the
    standardization target and its contour anchors the landmark indices,
    which therefore correspond across all cases of a cohort by vertex
    index (the synthetic analog of anatomical correspondence)."""
    unit_pts, tris = _sphere_triangulation(params.vertex_count)
    v = _inflated_vertices(unit_pts, params, _zero_draws())
    return Mesh(v, tris, params.lobe_label)


def _deflation_field(v, params, draws):
    f, g, n, r_f, r_g, r_n = _frame(params)
    intensity = 1.0 - params.target_volume_ratio
    if intensity == 0 and params.bend_strength == 0:
        return v
    s_f = v @ f
    s_g = v @ g
    s_n = v @ n
    p0 = s_f.max()
    qg, qn = draws["focus_offset"] * (r_g, r_n)
    width = draws["focus_width"] * r_g
    focal = np.exp(-(((s_g - qg) ** 2) + (s_n - qn) ** 2) / width**2)
    gamma = 1.0 - intensity * (draws["g_uniform"] + draws["g_focal"] * focal)
    out = v + np.outer((p0 + (s_f - p0) * gamma) - s_f, f)
    depth = (p0 - out @ f) / r_f
    bend = params.bend_strength * draws["bend_gain"] * np.mean(params.base_radii)
    out = out + np.outer(bend * 0.4 * depth**2, g)
    return out


def _rescale_to_ratio(deflated, tris, label, v_inf, target):
    mesh = Mesh(deflated, tris, label)
    ratio = mesh_volume(mesh) / v_inf
    if abs(ratio - target) <= _RATIO_TOL:
        return mesh
    center = deflated.mean(axis=0)
    base = mesh_volume(mesh)
    ideal = (target * v_inf / base) ** (1.0 / 3.0)
    lo, hi = 0.25 * ideal, 2.0 * ideal

    def ratio_at(scale):
        m = Mesh(center + scale * (deflated - center), tris, label)
        return mesh_volume(m) / v_inf, m

    r_lo, _ = ratio_at(lo)
    r_hi, _ = ratio_at(hi)
    if not (r_lo <= target <= r_hi):
        raise GenerationError("volume-ratio rescale bracket failed")
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        r_mid, m = ratio_at(mid)
        if abs(r_mid - target) <= _RATIO_TOL:
            return m
        if r_mid < target:
            lo = mid
        else:
            hi = mid
    raise GenerationError(
        f"volume-ratio rescale did not converge in 50 bisection steps "
        f"(last ratio {r_mid:.6f}, target {target:.6f})"
    )


def _corner_hints(mesh, params):
    f, g, n, r_f, r_g, r_n = _frame(params)
    ring = outer_contour(mesh, view_axis=n)
    pts = mesh.vertices[ring]
    s_f = pts @ f
    s_g = pts @ g
    nf = np.abs(s_f).max() or 1.0
    ng = np.abs(s_g).max() or 1.0
    ia = int(np.argmax(s_f / nf - s_g / ng))
    ib = int(np.argmax(s_f / nf + s_g / ng))
    ic = int(np.argmin(s_f / nf))
    return np.stack([pts[ia], pts[ib], pts[ic]]), n


def generate_case(params, case_index):
    """One deterministic corresponded mesh pair with its 12 landmarks."""
    rng = _case_rng(params, case_index)
    draws = _draws(rng, params)
    unit_pts, tris = _sphere_triangulation(params.vertex_count)
    canonical = canonical_mesh(params)

    inflated = _inflated_vertices(unit_pts, params, draws)
    v_std = mesh_volume(canonical)
    scale = (v_std / mesh_volume(Mesh(inflated, tris, params.lobe_label))) ** (1.0 / 3.0)
    inflated = inflated * scale
    inflated_mesh = Mesh(inflated, tris, params.lobe_label)
    v_inf = mesh_volume(inflated_mesh)

    deflated = _deflation_field(inflated, params, draws)
    deflated_mesh = _rescale_to_ratio(
        deflated, tris, params.lobe_label, v_inf, params.target_volume_ratio
    )

    record = CaseRecord.from_meshes(
        case_id=f"case{case_index:02d}",
        inflated=inflated_mesh,
        deflated=deflated_mesh,
    )
    hints, view_axis = _corner_hints(canonical, params)
    config = place_contour_landmarks(canonical, hints, view_axis=view_axis)
    return SynthCase(
        record=record,
        landmark_indices=config.full_indices,
        corner_hints=hints,
        view_axis=view_axis,
    )


def lobe_params(params, lobe_label):
    """Per-lobe variation: the lower lobe is slightly larger with the
    fissure side flipped to face the upper lobe."""
    if lobe_label == "upper":
        return GeneratorParams(**{**params.__dict__, "lobe_label": "upper"})
    return GeneratorParams(
        **{
            **params.__dict__,
            "lobe_label": "lower",
            "base_radii": tuple(1.08 * r for r in params.base_radii),
            "fissure_axis": tuple(-x for x in params.fissure_axis),
        }
    )


def generate_cohort(params, n_cases, out_dir, lobes=("upper", "lower")):
    """Generate a cohort and write its PLY pairs plus the manifest JSON.

    Returns the manifest path. Byte-identical output for identical inputs.
    """
    if n_cases < 1:
        raise ValueError("n_cases must be at least 1")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for lobe in lobes:
        lp = lobe_params(params, lobe)
        for idx in range(n_cases):
            synth = generate_case(lp, idx)
            rec = synth.record
            inflated_name = f"{rec.case_id}_{lobe}_inflated.ply"
            deflated_name = f"{rec.case_id}_{lobe}_deflated.ply"
            save_ply(rec.inflated, os.path.join(out_dir, inflated_name))
            save_ply(rec.deflated, os.path.join(out_dir, deflated_name))
            entries.append(
                {
                    "case_id": rec.case_id,
                    "lobe": lobe,
                    "inflated_ply": inflated_name,
                    "deflated_ply": deflated_name,
                    "landmark_indices": list(synth.landmark_indices),
                    "is_augmented": False,
                    "corner_metadata": {
                        "corner_hints": synth.corner_hints.tolist(),
                        "view_axis": synth.view_axis.tolist(),
                    },
                }
            )
    manifest = os.path.join(out_dir, "manifest.json")
    save_manifest(
        manifest,
        entries,
        seed=params.seed,
        generator={
            "vertex_count": params.vertex_count,
            "base_radii": list(params.base_radii),
            "shape_perturbation": params.shape_perturbation,
            "target_volume_ratio": params.target_volume_ratio,
            "bend_strength": params.bend_strength,
            "fissure_axis": list(params.fissure_axis),
            "n_cases": n_cases,
            "lobes": list(lobes),
        },
    )
    return manifest


def file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
