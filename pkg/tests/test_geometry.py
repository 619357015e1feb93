import numpy as np
import pytest

from crescent.errors import InvalidArgument, ParseError, ValidationError
from crescent.geometry import (PointCloud, QueryBatch, generate_cloud, load_cloud,
                               morton_sort, point3, save_cloud)


def test_grid_8_is_unit_cube_corners():
    cloud = generate_cloud("grid", 8, seed=123)
    corners = [[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)]
    assert cloud.points.tolist() == corners


def test_uniform_single_point_in_unit_cube():
    cloud = generate_cloud("uniform-cube", 1, seed=7)
    assert cloud.points.shape == (1, 3)
    assert np.all(cloud.points >= 0.0) and np.all(cloud.points < 1.0)


@pytest.mark.parametrize("kind", ["uniform-cube", "gaussian-clusters", "grid"])
def test_generation_deterministic(kind):
    a = generate_cloud(kind, 10_000, seed=1)
    b = generate_cloud(kind, 10_000, seed=1)
    assert a.points.tobytes() == b.points.tobytes()
    assert np.all(np.isfinite(a.points))


def test_generation_rejects_zero_points():
    with pytest.raises(InvalidArgument):
        generate_cloud("uniform-cube", 0, seed=1)
    with pytest.raises(InvalidArgument):
        generate_cloud("no-such-kind", 10, seed=1)


def test_xyz_text_round_trip(tmp_path):
    cloud = generate_cloud("uniform-cube", 257, seed=5)
    path = tmp_path / "c.xyz"
    save_cloud(cloud, str(path))
    back = load_cloud(str(path))
    # 9 significant digits round-trip float32 exactly
    assert np.array_equal(back.points, cloud.points)


def test_f32le_round_trip_byte_identical(tmp_path):
    cloud = generate_cloud("gaussian-clusters", 300, seed=5)
    path = tmp_path / "c.f32le"
    save_cloud(cloud, str(path))
    raw1 = path.read_bytes()
    back = load_cloud(str(path))
    save_cloud(back, str(tmp_path / "c2.f32le"))
    assert (tmp_path / "c2.f32le").read_bytes() == raw1


def test_xyz_parses_example(tmp_path):
    p = tmp_path / "two.xyz"
    p.write_text("0 0 0\n1 2 3\n")
    cloud = load_cloud(str(p))
    assert cloud.points.tolist() == [[0, 0, 0], [1, 2, 3]]


def test_f32le_parses_example(tmp_path):
    import struct
    p = tmp_path / "two.f32le"
    p.write_bytes(struct.pack("<6f", 0, 0, 0, 1, 2, 3))
    cloud = load_cloud(str(p))
    assert cloud.points.tolist() == [[0, 0, 0], [1, 2, 3]]


def test_xyz_arity_error_names_line(tmp_path):
    p = tmp_path / "bad.xyz"
    p.write_text("0 0\n")
    with pytest.raises(ParseError) as e:
        load_cloud(str(p))
    assert e.value.line == 1


def test_xyz_comments_and_blank_lines_ignored(tmp_path):
    p = tmp_path / "c.xyz"
    p.write_text("# header\n\n1 2 3\n  # more\n4 5 6\n")
    assert load_cloud(str(p)).points.tolist() == [[1, 2, 3], [4, 5, 6]]


def test_xyz_line_numbers_count_comments(tmp_path):
    p = tmp_path / "c.xyz"
    p.write_text("# header\n1 2 3\n4 5\n")
    with pytest.raises(ParseError) as e:
        load_cloud(str(p))
    assert e.value.line == 3


def test_f32le_truncated_names_byte_offset(tmp_path):
    p = tmp_path / "bad.f32le"
    p.write_bytes(b"\x00" * 20)  # not a multiple of 12
    with pytest.raises(ParseError) as e:
        load_cloud(str(p))
    assert e.value.byte == 12


def test_non_finite_rejected(tmp_path):
    p = tmp_path / "nan.xyz"
    p.write_text("0 0 nan\n")
    with pytest.raises(ValidationError):
        load_cloud(str(p))
    with pytest.raises(ValidationError):
        point3(0.0, float("inf"), 0.0)
    with pytest.raises(ValidationError):
        PointCloud(np.array([[0, 0, np.nan]], dtype=np.float32))


def test_cloud_requires_points():
    with pytest.raises(InvalidArgument):
        PointCloud(np.zeros((0, 3), np.float32))
    with pytest.raises(InvalidArgument):
        QueryBatch(np.zeros((4, 2), np.float32))


def test_morton_sort_permutes(cloud_2k):
    sorted_cloud = morton_sort(cloud_2k)
    a = np.sort(cloud_2k.points.view("u4").reshape(-1, 3), axis=0)
    b = np.sort(sorted_cloud.points.view("u4").reshape(-1, 3), axis=0)
    assert np.array_equal(a, b)
    # spatial coherence: mean step between consecutive points shrinks
    step = lambda pts: float(np.linalg.norm(np.diff(pts, axis=0), axis=1).mean())
    assert step(sorted_cloud.points) < 0.5 * step(cloud_2k.points)
