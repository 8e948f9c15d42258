from itertools import combinations

import numpy as np
import pytest

from lungdeform.dataset import (
    CaseRecord,
    augment_midpoint,
    build_case_samples,
    build_dataset,
    build_features,
    feature_dimension,
    feature_matrix,
    load_manifest,
    reconstruct_positions,
    split_leave_one_out,
    stack_samples,
)
from lungdeform.mesh import Mesh, centroid, mesh_volume
from lungdeform.synthgen import _sphere_triangulation

from conftest import make_cube


def bipyramid(scale=1.0, shift=(0.0, 0.0, 0.0)):
    v = np.array(
        [
            [0.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.5, 0.5, 1.0],
            [0.5, 0.5, -1.0],
        ]
    )
    t = np.array([[0, 1, 3], [1, 2, 3], [2, 0, 3], [1, 0, 4], [2, 1, 4], [0, 2, 4]])
    return Mesh(v * scale + np.asarray(shift), t)


def sphere_case(case_id, n_vertices=80, radius=10.0, shift=(0.0, 0.0, 0.0), squash=1.0):
    pts, tris = _sphere_triangulation(n_vertices)
    inflated = Mesh(pts * radius + np.asarray(shift), tris)
    deflated = inflated.with_vertices(inflated.vertices * [1.0, 1.0, squash])
    return CaseRecord.from_meshes(case_id, inflated, deflated)


@pytest.fixture
def hand_case():
    inflated = bipyramid()
    deflated = bipyramid(scale=0.8, shift=(0.1, -0.2, 0.05))
    return CaseRecord.from_meshes("hand", inflated, deflated)


# ------------------------------------------------------------------ records


def test_case_record_checks_volume_fields(hand_case):
    with pytest.raises(ValueError):
        CaseRecord(
            case_id="bad",
            inflated=hand_case.inflated,
            deflated=hand_case.deflated,
            lobe_label="upper",
            v_inf=hand_case.v_inf * 1.5,
            volume_ratio=hand_case.volume_ratio,
        )
    with pytest.raises(ValueError):
        CaseRecord(
            case_id="bad",
            inflated=hand_case.inflated,
            deflated=hand_case.deflated,
            lobe_label="upper",
            v_inf=hand_case.v_inf,
            volume_ratio=0.123,
        )


def test_case_record_topology_mismatch(hand_case):
    other = make_cube()
    with pytest.raises(ValueError):
        CaseRecord.from_meshes("bad", hand_case.inflated, other)


# ----------------------------------------------------------------- features


def test_feature_dimension_identities():
    assert feature_dimension(6) == 38
    assert feature_dimension(3) == 20
    assert feature_dimension(1) == 8


def test_feature_vector_dimensions(hand_case):
    for l in (1, 2, 3):
        sample = build_features(hand_case, list(range(l)), target_vertex=4)
        assert sample.x.shape == (feature_dimension(l),)
        assert sample.y.shape == (3,)


def test_features_match_hand_computation(hand_case):
    landmarks = [0, 1, 3]
    target = 4
    sample = build_features(hand_case, landmarks, target)

    vi = hand_case.inflated.vertices
    vd = hand_case.deflated.vertices
    expected = []
    for k in landmarks:  # r_inf block
        for axis in range(3):
            expected.append(vi[target][axis] - vi[k][axis])
    lm_centroid = [
        sum(vd[k][axis] for k in landmarks) / len(landmarks) for axis in range(3)
    ]
    for k in landmarks:  # r_def block
        for axis in range(3):
            expected.append(vd[k][axis] - lm_centroid[axis])
    expected.append(hand_case.v_inf)
    expected.append(hand_case.volume_ratio)
    assert np.allclose(sample.x, expected, atol=1e-12)
    assert np.allclose(
        sample.y, [vd[target][axis] - lm_centroid[axis] for axis in range(3)],
        atol=1e-12,
    )


def test_feature_zero_offset_when_target_on_landmark():
    verts = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [1.0, 2.0, 3.0]])
    x = feature_matrix(
        verts, [2], inflated_landmarks=verts[[0, 1]],
        deflated_landmarks=verts[[0, 1]], v_inf=1.0, volume_ratio=1.0,
    )
    assert np.array_equal(x[0, 0:3], np.zeros(3))  # coincides with landmark 1
    assert not np.array_equal(x[0, 3:6], np.zeros(3))


def test_features_reject_landmark_target(hand_case):
    with pytest.raises(ValueError):
        build_features(hand_case, [0, 1], target_vertex=1)
    with pytest.raises(ValueError):
        build_features(hand_case, [], target_vertex=2)


def test_features_translation_invariant(hand_case):
    landmarks = [0, 2, 4]
    rng = np.random.default_rng(5)
    base = build_features(hand_case, landmarks, 1)
    for _ in range(5):
        t_inf = rng.uniform(-50, 50, 3)
        t_def = rng.uniform(-50, 50, 3)
        moved = CaseRecord.from_meshes(
            "moved",
            hand_case.inflated.with_vertices(hand_case.inflated.vertices + t_inf),
            hand_case.deflated.with_vertices(hand_case.deflated.vertices + t_def),
        )
        shifted = build_features(moved, landmarks, 1)
        assert np.allclose(shifted.x, base.x, atol=1e-9)


# ------------------------------------------------------------- augmentation


def test_augment_midpoint_idempotent_on_equal_inputs(hand_case):
    mid = augment_midpoint(hand_case, hand_case)
    assert np.array_equal(mid.inflated.vertices, hand_case.inflated.vertices)
    assert np.array_equal(mid.deflated.vertices, hand_case.deflated.vertices)
    assert mid.is_augmented
    assert mid.source_ids == ("hand", "hand")


def test_augment_midpoint_of_translated_cubes():
    a = CaseRecord.from_meshes("a", make_cube(), make_cube())
    b = CaseRecord.from_meshes("b", make_cube(offset=(2, 0, 0)), make_cube(offset=(2, 0, 0)))
    mid = augment_midpoint(a, b)
    assert np.allclose(mid.inflated.vertices, make_cube(offset=(1, 0, 0)).vertices)
    assert mid.v_inf == pytest.approx(1.0)


def test_augment_midpoint_rejects_mismatch(hand_case):
    cube_case = CaseRecord.from_meshes("cube", make_cube(), make_cube())
    with pytest.raises(ValueError):
        augment_midpoint(hand_case, cube_case)


# ------------------------------------------------------------ dataset sizes


def test_dataset_size_eight_cases_six_landmarks():
    cases = [sphere_case(f"c{i}", n_vertices=400, shift=(3.0 * i, 0, 0)) for i in range(8)]
    samples = build_dataset(cases, landmarks=list(range(6)), augment=True)
    assert len(samples) == 14184  # (400-6) * (8 + C(8,2))


def test_dataset_size_single_case():
    cases = [sphere_case("only", n_vertices=400)]
    samples = build_dataset(cases, landmarks=[0, 1, 2], augment=True)
    assert len(samples) == 397


def test_dataset_size_three_cases():
    cases = [sphere_case(f"c{i}", n_vertices=400, shift=(3.0 * i, 0, 0)) for i in range(3)]
    samples = build_dataset(cases, landmarks=list(range(6)), augment=True)
    assert len(samples) == 394 * 6 == 2364


def test_dataset_size_formula_random_combinations():
    rng = np.random.default_rng(7)
    for _ in range(10):
        c = int(rng.integers(1, 5))
        l = int(rng.integers(1, 13))
        v = int(rng.integers(50, 90))
        cases = [
            sphere_case(f"c{i}", n_vertices=v, shift=(3.0 * i, 0, 0)) for i in range(c)
        ]
        landmarks = list(range(l))
        with_aug = build_dataset(cases, landmarks, augment=True)
        without = build_dataset(cases, landmarks, augment=False)
        n_pairs = c * (c - 1) // 2
        assert len(with_aug) == (v - l) * (c + n_pairs)
        assert len(without) == (v - l) * c


def test_dataset_pairwise_augmentation_count():
    cases = [sphere_case(f"c{i}", n_vertices=60, shift=(3.0 * i, 0, 0)) for i in range(5)]
    samples = build_dataset(cases, landmarks=[0], augment=True)
    augmented_ids = {s.case_id for s in samples if len(s.source_ids) == 2}
    assert len(augmented_ids) == len(list(combinations(range(5), 2)))


def test_dataset_rejects_empty_and_mixed_lobes():
    with pytest.raises(ValueError):
        build_dataset([], [0], augment=False)
    a = sphere_case("a", n_vertices=60)
    pts, tris = _sphere_triangulation(60)
    lower = Mesh(pts * 10.0, tris, "lower")
    b = CaseRecord.from_meshes("b", lower, lower)
    with pytest.raises(ValueError):
        build_dataset([a, b], [0], augment=False)


# ------------------------------------------------------------------- splits


def test_split_leave_one_out_basic():
    cases = [sphere_case(f"c{i}", shift=(3.0 * i, 0, 0)) for i in range(9)]
    train, test = split_leave_one_out(cases, "c3")
    assert len(train) == 8
    assert test.case_id == "c3"
    assert all(c.case_id != "c3" for c in train)


def test_split_unknown_and_degenerate():
    cases = [sphere_case("c0")]
    with pytest.raises(ValueError):
        split_leave_one_out(cases, "nope")
    with pytest.raises(ValueError):
        split_leave_one_out(cases, "c0")


def test_split_rejects_augmented_inputs(hand_case):
    mid = augment_midpoint(hand_case, hand_case)
    with pytest.raises(ValueError):
        split_leave_one_out([hand_case, mid], "hand")


def test_no_test_provenance_in_training_samples():
    cases = [sphere_case(f"c{i}", shift=(3.0 * i, 0, 0)) for i in range(4)]
    train, test = split_leave_one_out(cases, "c1")
    samples = build_dataset(train, landmarks=[0, 5, 9], augment=True)
    assert all("c1" not in s.source_ids for s in samples)
    # and augmented pairs among train cases are present
    assert any(len(s.source_ids) == 2 for s in samples)


# -------------------------------------------------------------- reconstruct


def test_reconstruct_zero_gives_centroid():
    lm = np.array([[0.0, 0, 0], [2.0, 0, 0], [1.0, 3.0, 0]])
    out = reconstruct_positions(np.zeros((1, 3)), lm)
    assert np.allclose(out[0], centroid(lm))


def test_reconstruct_inverts_build_features(hand_case):
    landmarks = [0, 1, 2]
    samples = build_case_samples(hand_case, landmarks)
    ys = np.stack([s.y for s in samples])
    out = reconstruct_positions(ys, hand_case.deflated.vertices[landmarks])
    truth = hand_case.deflated.vertices[[s.vertex_index for s in samples]]
    assert np.allclose(out, truth, atol=1e-9, rtol=0)


def test_reconstruct_translation_equivariant():
    lm = np.random.default_rng(8).normal(size=(4, 3))
    ys = np.random.default_rng(9).normal(size=(6, 3))
    t = np.array([5.0, -1.0, 2.0])
    assert np.allclose(
        reconstruct_positions(ys, lm + t), reconstruct_positions(ys, lm) + t,
        atol=1e-12,
    )


def test_reconstruct_requires_landmarks():
    with pytest.raises(ValueError):
        reconstruct_positions(np.zeros((1, 3)), np.empty((0, 3)))


# ----------------------------------------------------------------- manifest


def test_manifest_round_trip(small_cohort):
    cases, landmarks, meta = load_manifest(small_cohort)
    assert len(cases) == 5
    assert meta["schema"] == "lungdeform-cohort-v1"
    assert meta["seed"] == 23
    for case in cases:
        assert case.lobe_label == "upper"
        assert not case.is_augmented
        assert case.volume_ratio == pytest.approx(0.60, abs=1e-4)
        key = (case.case_id, case.lobe_label)
        assert len(set(landmarks[key])) == 12
        assert mesh_volume(case.inflated) == pytest.approx(case.v_inf, rel=1e-9)


def test_stack_samples_shapes(hand_case):
    samples = build_case_samples(hand_case, [0, 1])
    xs, ys = stack_samples(samples)
    assert xs.shape == (3, feature_dimension(2))
    assert ys.shape == (3, 3)
