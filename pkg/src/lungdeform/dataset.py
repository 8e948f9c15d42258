"""Per-vertex labeled samples, midpoint augmentation, leave-one-out splits,
and the JSON cohort manifest.

One training sample is one mesh vertex of one case. Its input vector
concatenates, in this fixed order: the target vertex position relative to
every inflated landmark, the deflated landmark positions relative to their
centroid, the inflated whole volume, and the deflated/inflated volume
ratio. The regression target is the deflated vertex position relative to
the deflated landmark centroid, so the input has 6*l + 2 components for l
landmarks and the output is a 3-vector.
"""

import json
import os
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DataError
from .mesh import Mesh, centroid, load_ply, mesh_volume

_VOL_RTOL = 1e-6


@dataclass(frozen=True)
class CaseRecord:
    """A corresponded inflated/deflated mesh pair."""

    case_id: str
    inflated: Mesh
    deflated: Mesh | None
    lobe_label: str
    v_inf: float
    volume_ratio: float | None
    is_augmented: bool = False
    source_ids: tuple = ()

    def __post_init__(self):
        if self.deflated is not None:
            if self.inflated.vertex_count != self.deflated.vertex_count or not np.array_equal(
                self.inflated.triangles, self.deflated.triangles
            ):
                raise ValueError(
                    f"case {self.case_id}: inflated/deflated topology mismatch"
                )
        v = mesh_volume(self.inflated)
        if abs(v - self.v_inf) > _VOL_RTOL * max(v, 1.0):
            raise ValueError(
                f"case {self.case_id}: v_inf {self.v_inf} != mesh volume {v}"
            )
        if self.volume_ratio is not None and self.deflated is not None:
            r = mesh_volume(self.deflated) / v
            if abs(r - self.volume_ratio) > _VOL_RTOL * max(r, 1.0):
                raise ValueError(
                    f"case {self.case_id}: volume_ratio {self.volume_ratio} != {r}"
                )
        if not self.source_ids:
            object.__setattr__(self, "source_ids", (self.case_id,))

    @classmethod
    def from_meshes(cls, case_id, inflated, deflated, is_augmented=False,
                    source_ids=()):
        v_inf = mesh_volume(inflated)
        ratio = mesh_volume(deflated) / v_inf if deflated is not None else None
        return cls(
            case_id=case_id,
            inflated=inflated,
            deflated=deflated,
            lobe_label=inflated.lobe_label,
            v_inf=v_inf,
            volume_ratio=ratio,
            is_augmented=is_augmented,
            source_ids=source_ids,
        )


@dataclass(frozen=True)
class FeatureSample:
    """One (input, target) pair for one vertex of one case."""

    x: np.ndarray
    y: np.ndarray
    case_id: str
    vertex_index: int
    source_ids: tuple = ()

    def __post_init__(self):
        if not self.source_ids:
            object.__setattr__(self, "source_ids", (self.case_id,))


def feature_dimension(landmark_count):
    """Input dimension for l landmarks: 3*l relative vectors in each state
    plus the two volume scalars."""
    return 3 * landmark_count * 2 + 2


def feature_matrix(inflated_vertices, target_indices, inflated_landmarks,
                   deflated_landmarks, v_inf, volume_ratio):
    """Input vectors for a block of target vertices (rows follow
    target_indices). Usable at prediction time: only the deflated LANDMARK
    positions are consumed, never the deflated target positions."""
    inf_lm = np.asarray(inflated_landmarks, dtype=np.float64)
    def_lm = np.asarray(deflated_landmarks, dtype=np.float64)
    if len(inf_lm) == 0:
        raise ValueError("landmark list must be nonempty")
    targets = np.asarray(inflated_vertices, dtype=np.float64)[target_indices]
    r_inf = (targets[:, None, :] - inf_lm[None, :, :]).reshape(len(targets), -1)
    r_def = (def_lm - centroid(def_lm)).reshape(-1)
    tail = np.concatenate([r_def, [v_inf, volume_ratio]])
    return np.hstack([r_inf, np.tile(tail, (len(targets), 1))])


def build_features(case, landmarks, target_vertex):
    """The labeled sample of one non-landmark vertex of one case."""
    landmarks = list(landmarks)
    if not landmarks:
        raise ValueError("landmark list must be nonempty")
    if target_vertex in landmarks:
        raise ValueError(f"target vertex {target_vertex} is a landmark")
    if case.deflated is None:
        raise ValueError(f"case {case.case_id} has no deflated mesh")
    x = feature_matrix(
        case.inflated.vertices,
        [target_vertex],
        case.inflated.vertices[landmarks],
        case.deflated.vertices[landmarks],
        case.v_inf,
        case.volume_ratio,
    )[0]
    y = case.deflated.vertices[target_vertex] - centroid(case.deflated.vertices[landmarks])
    return FeatureSample(
        x=x,
        y=y,
        case_id=case.case_id,
        vertex_index=int(target_vertex),
        source_ids=case.source_ids,
    )


def build_case_samples(case, landmarks):
    """Samples for every non-landmark vertex, ordered by vertex index."""
    landmarks = list(landmarks)
    if not landmarks:
        raise ValueError("landmark list must be nonempty")
    if case.deflated is None:
        raise ValueError(f"case {case.case_id} has no deflated mesh")
    target_idx = [i for i in range(case.inflated.vertex_count) if i not in set(landmarks)]
    xs = feature_matrix(
        case.inflated.vertices,
        target_idx,
        case.inflated.vertices[landmarks],
        case.deflated.vertices[landmarks],
        case.v_inf,
        case.volume_ratio,
    )
    lm_centroid = centroid(case.deflated.vertices[landmarks])
    ys = case.deflated.vertices[target_idx] - lm_centroid
    return [
        FeatureSample(x=xs[i], y=ys[i], case_id=case.case_id,
                      vertex_index=v, source_ids=case.source_ids)
        for i, v in enumerate(target_idx)
    ]


def augment_midpoint(a, b):
    """Interpolated case at the coordinate-wise midpoint of two cases."""
    if a.lobe_label != b.lobe_label:
        raise ValueError("cannot interpolate across lobes")
    if a.inflated.vertex_count != b.inflated.vertex_count or not np.array_equal(
        a.inflated.triangles, b.inflated.triangles
    ):
        raise ValueError("cannot interpolate cases with different topology")
    if a.deflated is None or b.deflated is None:
        raise ValueError("both cases need deflated meshes")
    inflated = a.inflated.with_vertices((a.inflated.vertices + b.inflated.vertices) / 2.0)
    deflated = a.deflated.with_vertices((a.deflated.vertices + b.deflated.vertices) / 2.0)
    return CaseRecord.from_meshes(
        case_id=f"mid({a.case_id},{b.case_id})",
        inflated=inflated,
        deflated=deflated,
        is_augmented=True,
        source_ids=(a.case_id, b.case_id),
    )


def build_dataset(cases, landmarks, augment=True):
    """All samples of the given cases plus, when augment is set, of every
    pairwise midpoint case: (V - l) * (c + C(c, 2)) samples total."""
    cases = list(cases)
    if not cases:
        raise ValueError("need at least one case")
    lobes = {c.lobe_label for c in cases}
    if len(lobes) > 1:
        raise ValueError(f"cases mix lobes {sorted(lobes)}; build one dataset per lobe")
    pool = list(cases)
    if augment:
        pool += [augment_midpoint(a, b) for a, b in combinations(cases, 2)]
    samples = []
    for case in pool:
        samples.extend(build_case_samples(case, landmarks))
    return samples


def split_leave_one_out(cases, test_id):
    """Hold one original case out; the rest train. Augmented records are
    rejected here because interpolations are created downstream from the
    training split only."""
    cases = list(cases)
    augmented = [c.case_id for c in cases if c.is_augmented]
    if augmented:
        raise ValueError(f"split expects original cases only, got {augmented}")
    ids = [c.case_id for c in cases]
    if test_id not in ids:
        raise ValueError(f"unknown test case {test_id!r}")
    train = [c for c in cases if c.case_id != test_id]
    if not train:
        raise ValueError("leave-one-out needs at least two cases")
    test = cases[ids.index(test_id)]
    return train, test


def reconstruct_positions(y_predictions, deflated_landmark_positions):
    """Absolute deflated positions from centroid-relative predictions."""
    lm = np.asarray(deflated_landmark_positions, dtype=np.float64)
    if len(lm) == 0:
        raise ValueError("landmark list must be nonempty")
    return np.atleast_2d(np.asarray(y_predictions, dtype=np.float64)) + centroid(lm)


def stack_samples(samples):
    """(X, Y) design matrices from a sample list."""
    return np.stack([s.x for s in samples]), np.stack([s.y for s in samples])


# ---------------------------------------------------------------------------
# Cohort manifest

MANIFEST_SCHEMA = "lungdeform-cohort-v1"


def save_manifest(path, case_entries, seed=None, generator=None):
    """Write the cohort manifest. Each entry: case_id, lobe, inflated_ply,
    deflated_ply (optional), landmark_indices[12], is_augmented, plus
    optional corner metadata from the generator."""
    doc = {"schema": MANIFEST_SCHEMA, "cases": list(case_entries)}
    if seed is not None:
        doc["seed"] = seed
    if generator is not None:
        doc["generator"] = generator
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path):
    """Read a cohort manifest.

    Returns (cases, landmarks, meta): the CaseRecords, a (case_id, lobe) ->
    landmark-index-list mapping, and the remaining manifest metadata.
    """
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != MANIFEST_SCHEMA:
        raise DataError(f"not a cohort manifest: schema={doc.get('schema')!r}")
    base = os.path.dirname(os.path.abspath(path))
    cases = []
    landmarks = {}
    for entry in doc.get("cases", []):
        inflated = load_ply(os.path.join(base, entry["inflated_ply"]))
        inflated = Mesh(inflated.vertices, inflated.triangles, entry["lobe"])
        deflated = None
        if entry.get("deflated_ply"):
            d = load_ply(os.path.join(base, entry["deflated_ply"]))
            deflated = Mesh(d.vertices, d.triangles, entry["lobe"])
        record = CaseRecord.from_meshes(
            case_id=entry["case_id"],
            inflated=inflated,
            deflated=deflated,
            is_augmented=bool(entry.get("is_augmented", False)),
        )
        cases.append(record)
        landmarks[(entry["case_id"], entry["lobe"])] = list(entry["landmark_indices"])
    meta = {k: v for k, v in doc.items() if k != "cases"}
    return cases, landmarks, meta
