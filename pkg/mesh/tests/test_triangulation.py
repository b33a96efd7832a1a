import numpy as np
import pytest

import mesh.triangulation as tri


@pytest.mark.parametrize('n, num_tri, num_edges, num_bnd', [
    (1, 2, 5, 4),
    (2, 8, 16, 8),
    (4, 32, 56, 16),
])
def test_unit_square_counts(n, num_tri, num_edges, num_bnd):
    m = tri.triangulate_unit_square(n)
    assert m.num_triangles == num_tri
    assert m.num_edges == num_edges
    assert m.num_boundary_edges == num_bnd
    assert m.num_vertices == (n + 1) ** 2


def test_unit_square_h():
    m = tri.triangulate_unit_square(4)
    assert m.h == pytest.approx(np.sqrt(2.0) / 4.0)
    assert m.area == pytest.approx(1.0)
    assert m.perimeter == pytest.approx(4.0)


def test_unit_square_min_angle():
    assert tri.triangulate_unit_square(3).min_angle == pytest.approx(45.0)


def test_bad_square_size():
    with pytest.raises(tri.MeshError):
        tri.triangulate_unit_square(0)


@pytest.mark.parametrize('sides', [3, 4, 5, 8])
def test_fan_counts(sides):
    m = tri.triangulate_polygon_fan(tri.regular_polygon(sides))
    assert m.num_triangles == sides
    assert m.num_boundary_edges == sides
    assert m.num_vertices == sides + 1
    assert tri.validate(m) == []


def test_fan_rejects_reflex_corner():
    corners = [(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (1.0, 0.5), (0.0, 2.0)]
    with pytest.raises(tri.MeshError):
        tri.triangulate_polygon_fan(corners)


def test_fan_rejects_clockwise_corners():
    with pytest.raises(tri.MeshError):
        tri.triangulate_polygon_fan(tri.regular_polygon(5)[::-1])


def test_refine_counts(pentagon):
    m = tri.refine_uniform(tri.refine_uniform(pentagon))
    assert m.num_triangles == 80
    assert m.num_boundary_edges == 20


def test_refine_halves_h(square2):
    assert tri.refine_uniform(square2).h == pytest.approx(square2.h / 2.0)


def test_refine_keeps_min_angle(pentagon):
    fine = tri.refine_uniform(pentagon)
    assert fine.min_angle == pytest.approx(pentagon.min_angle, abs=1e-9)


def test_ensure_odd_keeps_odd_mesh(pentagon):
    assert tri.ensure_odd_boundary(pentagon) is pentagon


def test_ensure_odd_square(square2, odd_square2):
    assert odd_square2.num_boundary_edges == 9
    assert odd_square2.num_triangles == 9
    assert odd_square2.num_vertices == square2.num_vertices + 1
    assert odd_square2.num_edges == square2.num_edges + 2
    assert odd_square2.perimeter == pytest.approx(4.0)
    assert tri.validate(odd_square2) == []
    assert odd_square2.min_angle > 10.0


def test_mesh_family_is_odd(pentagon):
    family = tri.mesh_family(pentagon, 4)
    assert len(family) == 4
    assert all(m.num_boundary_edges % 2 == 1 for m in family)
    hs = [m.h for m in family]
    assert all(b < a for a, b in zip(hs, hs[1:]))


@pytest.mark.parametrize('n', [1, 2, 5, 16, 64])
def test_validate_square(n):
    assert tri.validate(tri.triangulate_unit_square(n)) == []


def test_validate_flipped_triangle(square2):
    triangles = np.array(square2.triangles)
    triangles[0] = triangles[0][[0, 2, 1]]
    m = tri.build_mesh(square2.vertices, triangles)
    report = tri.validate(m)
    assert any('clockwise' in line for line in report)


def test_validate_degenerate_triangle():
    m = tri.build_mesh([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], [[0, 1, 2]])
    assert any('degenerate' in line for line in tri.validate(m))


def test_validate_unused_vertex():
    m = tri.build_mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]],
                       [[0, 1, 2]])
    assert any('vertex 3' in line for line in tri.validate(m))


def test_validate_min_angle_floor(square2):
    assert any('minimum angle' in line
               for line in tri.validate(square2, min_angle=50.0))


@pytest.mark.parametrize('levels', [1, 2, 3])
def test_euler_relation(pentagon, levels):
    for m in tri.mesh_family(pentagon, levels):
        assert m.num_vertices - m.num_edges + m.num_triangles == 1


def test_boundary_cycle_is_ccw_loop(odd_square4):
    m = odd_square4
    nb = m.num_boundary_edges
    ends = m.edges[m.boundary_cycle]
    for i in range(nb):
        v0 = m.boundary_vertices[i]
        v1 = m.boundary_vertices[(i + 1) % nb]
        assert set(ends[i]) == {v0, v1}
    x, y = m.vertices[m.boundary_vertices].T
    enclosed = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert enclosed == pytest.approx(m.area)


def test_boundary_cycle_starts_at_smallest_vertex(odd_square4):
    m = odd_square4
    assert m.boundary_vertices[0] == m.boundary_vertices.min()


def test_boundary_arclength(odd_square2):
    s = odd_square2.boundary_arclength
    assert s[0] == 0.0
    assert s[-1] == pytest.approx(4.0)
    assert len(s) == odd_square2.num_boundary_edges + 1


def test_records(odd_square2):
    m = odd_square2
    b = m.edge(m.boundary_cycle[3])
    assert b.boundary_index == 3
    assert len(b.triangles) == 1
    inner = m.edge(m.interior_edges[0])
    assert inner.boundary_index is None
    assert len(inner.triangles) == 2
    t = m.triangle(0)
    assert t.area == pytest.approx(m.areas[0])
    assert m.vertex(m.boundary_vertices[0]).on_boundary


def test_bary_grads_sum_to_zero(odd_square4):
    assert np.allclose(odd_square4.bary_grads.sum(axis=1), 0.0, atol=1e-12)


def test_locate_centroids(odd_square4):
    m = odd_square4
    ids, bary = tri.locate_points(m, m.centroids)
    assert np.array_equal(ids, np.arange(m.num_triangles))
    assert np.allclose(bary, 1.0 / 3.0)


def test_locate_corner(odd_square4):
    ids, bary = tri.locate_points(odd_square4, [[1.0, 1.0]])
    assert bary.min() >= -1e-10
    assert bary.max() == pytest.approx(1.0)


def test_write_read_round_trip(tmp_path, odd_pentagon1):
    path = tmp_path / 'pentagon.mesh'
    tri.write_mesh(odd_pentagon1, path)
    m = tri.read_mesh(path)
    assert np.array_equal(m.vertices, odd_pentagon1.vertices)
    assert np.array_equal(m.triangles, odd_pentagon1.triangles)
    assert np.array_equal(m.boundary_cycle, odd_pentagon1.boundary_cycle)


def test_read_mesh_bad_line(tmp_path):
    path = tmp_path / 'bad.mesh'
    path.write_text('v 0 0\nquad 0 1 2 3\n')
    with pytest.raises(tri.MeshError):
        tri.read_mesh(path)


def test_read_polygon(tmp_path):
    path = tmp_path / 'corners.txt'
    path.write_text('# unit square\n0 0\n1, 0\n1 1\n0 1\n')
    corners = tri.read_polygon(path)
    m = tri.triangulate_polygon_fan(corners)
    assert m.area == pytest.approx(1.0)
    assert m.num_boundary_edges == 4
