import io

import numpy as np
import pytest

from habitmask.datamodel import (
    BBox,
    ClipAnnotation,
    ClipTensor,
    Joint,
    LabelSpace,
    PersonFrame,
    Skeleton,
    assign_person_ids,
    crop_resize,
    parse_annotation,
    read_clip,
    write_annotation,
    write_clip,
)
from habitmask.errors import (
    EmptyInput,
    FormatError,
    InvalidGeometry,
    InvariantError,
    ParseError,
    SchemaError,
)


def make_skeleton(rng, scale=100.0):
    arr = np.column_stack(
        [
            rng.uniform(0, scale, 15),
            rng.uniform(0, scale, 15),
            rng.uniform(0, 1, 15),
        ]
    )
    return Skeleton.from_array(arr)


def make_annotation(rng, clip_id="clip", n_frames=3, n_people=2):
    frames = []
    for _ in range(n_frames):
        persons = []
        for k in range(n_people):
            persons.append(
                PersonFrame(
                    person_id=f"P{k + 1}",
                    bbox=BBox(10.0 * k, 5.0, 10.0 * k + 8.0, 50.0),
                    skeleton=make_skeleton(rng),
                    label="rub hands" if k == 0 else "cross legs",
                )
            )
        frames.append(tuple(persons))
    return ClipAnnotation(clip_id=clip_id, fps=25.0, frames=tuple(frames))


class TestTypes:
    def test_joint_conf_range(self):
        with pytest.raises(InvariantError):
            Joint(1.0, 2.0, 1.5)

    def test_joint_finite(self):
        with pytest.raises(InvariantError):
            Joint(float("nan"), 0.0, 0.5)

    def test_skeleton_requires_15(self):
        with pytest.raises(InvariantError):
            Skeleton(tuple(Joint(0, 0, 0.5) for _ in range(14)))

    def test_bbox_degenerate(self):
        with pytest.raises(InvalidGeometry):
            BBox(5, 0, 5, 10)

    def test_annotation_dense_ids(self):
        rng = np.random.default_rng(0)
        persons = (
            PersonFrame("P1", BBox(0, 0, 5, 5), make_skeleton(rng)),
            PersonFrame("P3", BBox(6, 0, 9, 5), make_skeleton(rng)),
        )
        with pytest.raises(InvariantError):
            ClipAnnotation("c", 30.0, (persons,))

    def test_label_space_unknown(self):
        with pytest.raises(SchemaError):
            LabelSpace().index("no such action")

    def test_label_space_default_size(self):
        assert len(LabelSpace()) == 30

    def test_clip_tensor_range(self):
        with pytest.raises(InvariantError):
            ClipTensor(data=np.full((1, 1, 2, 2), 1.5))


class TestAssignPersonIds:
    def test_left_to_right(self):
        boxes = [BBox(40, 0, 60, 10), BBox(190, 0, 210, 10)]
        assert assign_person_ids(boxes) == ["P1", "P2"]

    def test_singleton(self):
        assert assign_person_ids([BBox(0, 0, 1, 1)]) == ["P1"]

    def test_tie_breaks_by_y_min(self):
        a = BBox(0, 10, 10, 20)  # y_min 10
        b = BBox(0, 40, 10, 50)  # y_min 40
        assert assign_person_ids([b, a]) == ["P2", "P1"]

    def test_empty(self):
        with pytest.raises(EmptyInput):
            assign_person_ids([])

    def test_invalid_entry(self):
        with pytest.raises(InvalidGeometry):
            assign_person_ids([(0, 0, 1, 1)])

    def test_permutation_invariant_mapping(self):
        rng = np.random.default_rng(7)
        boxes = [
            BBox(x, y, x + 5, y + 5)
            for x, y in zip(rng.uniform(0, 100, 6), rng.uniform(0, 100, 6))
        ]
        ids = assign_person_ids(boxes)
        mapping = {id(b): i for b, i in zip(boxes, ids)}
        for _ in range(20):
            perm = rng.permutation(len(boxes))
            shuffled = [boxes[i] for i in perm]
            ids2 = assign_person_ids(shuffled)
            for b, i in zip(shuffled, ids2):
                assert mapping[id(b)] == i


class TestAnnotationRoundtrip:
    def test_minimal_single_person(self):
        rng = np.random.default_rng(1)
        ann = make_annotation(rng, n_frames=1, n_people=1)
        parsed = parse_annotation(write_annotation(ann))
        assert parsed.clip_id == ann.clip_id
        assert len(parsed.frames) == 1
        assert parsed.frames[0][0].label == "rub hands"

    def test_multi_label_clip(self):
        rng = np.random.default_rng(2)
        ann = make_annotation(rng)
        ann2 = ClipAnnotation(
            ann.clip_id,
            ann.fps,
            tuple(
                tuple(
                    PersonFrame(p.person_id, p.bbox, p.skeleton, "cross legs & touch ear" if p.person_id == "P2" else p.label)
                    for p in persons
                )
                for persons in ann.frames
            ),
        )
        parsed = parse_annotation(io.StringIO(write_annotation(ann2)))
        assert "cross legs & touch ear" in parsed.labels()

    def test_roundtrip_fuzz(self):
        rng = np.random.default_rng(3)
        for trial in range(100):
            ann = make_annotation(
                rng,
                clip_id=f"clip{trial}",
                n_frames=int(rng.integers(1, 4)),
                n_people=int(rng.integers(1, 3)),
            )
            parsed = parse_annotation(write_annotation(ann))
            assert parsed.clip_id == ann.clip_id
            assert parsed.fps == ann.fps
            for fa, fb in zip(parsed.frames, ann.frames):
                for pa, pb in zip(fa, fb):
                    assert pa.person_id == pb.person_id
                    assert pa.label == pb.label
                    np.testing.assert_allclose(
                        pa.skeleton.as_array(), pb.skeleton.as_array(), atol=1e-6
                    )

    def test_wrong_joint_count(self):
        rng = np.random.default_rng(4)
        text = write_annotation(make_annotation(rng, n_frames=1, n_people=1))
        import json

        obj = json.loads(text)
        obj["persons"][0]["joints"] = obj["persons"][0]["joints"][:14]
        with pytest.raises((SchemaError, ParseError)):
            parse_annotation(json.dumps(obj))

    def test_non_dense_ids(self):
        rng = np.random.default_rng(5)
        text = write_annotation(make_annotation(rng, n_frames=1, n_people=2))
        with pytest.raises(SchemaError):
            parse_annotation(text.replace('"P2"', '"P5"'))

    def test_malformed_line(self):
        with pytest.raises(ParseError) as exc:
            parse_annotation('{"clip_id": "x", not json}')
        assert exc.value.line_no == 1

    def test_empty_frames_refused(self):
        with pytest.raises(InvariantError):
            ClipAnnotation("c", 30.0, ())


class TestClipContainer:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        data = rng.uniform(0, 1, (3, 32, 64, 64)).astype(np.float32)
        path = tmp_path / "a.hclip"
        write_clip(path, ClipTensor(data=data))
        back = read_clip(path)
        assert back.dims == (3, 32, 64, 64)
        assert back.data.tobytes() == data.tobytes()

    def test_roundtrip_fuzz(self, tmp_path):
        rng = np.random.default_rng(7)
        path = tmp_path / "f.hclip"
        for _ in range(100):
            data = rng.uniform(0, 1, (3, 8, 16, 16)).astype(np.float32)
            write_clip(path, ClipTensor(data=data))
            assert read_clip(path).data.tobytes() == data.tobytes()

    def test_truncated(self, tmp_path):
        rng = np.random.default_rng(8)
        path = tmp_path / "t.hclip"
        write_clip(path, ClipTensor(data=rng.uniform(0, 1, (1, 2, 4, 4)).astype(np.float32)))
        blob = path.read_bytes()
        path.write_bytes(blob[:-7])
        with pytest.raises(FormatError):
            read_clip(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "b.hclip"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(FormatError):
            read_clip(path)


class TestCropResize:
    def test_identity_on_full_frame(self):
        rng = np.random.default_rng(9)
        frame = rng.uniform(0, 1, (3, 16, 16))
        out = crop_resize(frame, BBox(0, 0, 16, 16), 16)
        np.testing.assert_allclose(out, frame, atol=1e-12)

    def test_constant_region(self):
        frame = np.full((1, 20, 20), 0.37)
        out = crop_resize(frame, BBox(2.5, 3.5, 17.0, 12.0), 8)
        np.testing.assert_allclose(out, 0.37, atol=1e-12)

    def test_checkerboard_matches_direct_bilinear(self):
        # independent direct evaluation of 2x2 -> 4x4 upsampling
        frame = np.array([[[0.0, 1.0], [1.0, 0.0]]])  # (1, 2, 2)
        out = crop_resize(frame, BBox(0, 0, 2, 2), 4)

        def oracle(i, j):
            sx = np.clip((i + 0.5) * 2 / 4 - 0.5, 0, 1)
            sy = np.clip((j + 0.5) * 2 / 4 - 0.5, 0, 1)
            x0, y0 = int(np.floor(sx)), int(np.floor(sy))
            x1, y1 = min(x0 + 1, 1), min(y0 + 1, 1)
            fx, fy = sx - x0, sy - y0
            f = frame[0]
            return (
                f[x0, y0] * (1 - fx) * (1 - fy)
                + f[x1, y0] * fx * (1 - fy)
                + f[x0, y1] * (1 - fx) * fy
                + f[x1, y1] * fx * fy
            )

        for i in range(4):
            for j in range(4):
                assert out[0, i, j] == pytest.approx(oracle(i, j), abs=1e-12)

    def test_clamps_out_of_frame(self):
        frame = np.ones((1, 8, 8)) * 0.5
        out = crop_resize(frame, BBox(-5, -5, 4, 4), 4)
        assert out.shape == (1, 4, 4)
        np.testing.assert_allclose(out, 0.5)

    def test_degenerate_after_clamp(self):
        frame = np.ones((1, 8, 8))
        with pytest.raises(InvalidGeometry):
            crop_resize(frame, BBox(10, 10, 12, 12), 4)

    def test_range_preserved(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            frame = rng.uniform(0, 1, (3, 12, 9))
            out = crop_resize(frame, BBox(1.3, 0.2, 10.7, 8.9), 5)
            assert out.min() >= 0.0 and out.max() <= 1.0
