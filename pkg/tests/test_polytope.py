import numpy as np
import pytest

from impc import Box, Polytope, ShapeError


def unit_square():
    return Polytope.from_bounds([-1.0, -1.0], [1.0, 1.0])


class TestConstruction:
    def test_from_box_row_order(self):
        p = Polytope.from_box(Box(np.array([1.0, -2.0]), np.array([0.5, 3.0])))
        assert np.array_equal(p.h, np.vstack([np.eye(2), -np.eye(2)]))
        assert np.allclose(p.b, [1.5, 1.0, -0.5, 5.0])

    def test_bad_shapes(self):
        with pytest.raises(ShapeError):
            Polytope(np.zeros(3), np.zeros(3))
        with pytest.raises(ShapeError):
            Polytope(np.zeros((2, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            Polytope(np.array([[np.inf, 0.0]]), np.array([1.0]))


class TestQueries:
    def test_contains(self):
        p = unit_square()
        assert p.contains([0.0, 0.0])
        assert p.contains([1.0, 1.0])
        assert p.contains([1.0 + 1e-10, 0.0])
        assert not p.contains([1.01, 0.0])

    def test_support_square(self):
        p = unit_square()
        assert p.support([1.0, 0.0]) == pytest.approx(1.0, abs=1e-9)
        assert p.support([1.0, 1.0]) == pytest.approx(2.0, abs=1e-9)
        assert p.support([-3.0, 0.0]) == pytest.approx(3.0, abs=1e-9)

    def test_support_unbounded(self):
        half = Polytope(np.array([[1.0, 0.0]]), np.array([2.0]))
        assert half.support([1.0, 0.0]) == pytest.approx(2.0, abs=1e-9)
        assert half.support([-1.0, 0.0]) == np.inf
        assert half.support([0.0, 1.0]) == np.inf

    def test_empty(self):
        p = Polytope(np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0]))
        assert p.is_empty()
        assert not unit_square().is_empty()
        assert p.support([1.0]) == -np.inf

    def test_bounding_box(self):
        p = Polytope(np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]),
                     np.array([2.0, 0.0, 0.0]))  # triangle (0,0),(2,0),(0,2)
        box = p.bounding_box()
        assert np.allclose(box.lower, [0.0, 0.0], atol=1e-9)
        assert np.allclose(box.upper, [2.0, 2.0], atol=1e-9)
        with pytest.raises(ValueError):
            Polytope(np.array([[1.0, 0.0]]), np.array([1.0])).bounding_box()

    def test_intersect(self):
        p = unit_square().intersect(
            Polytope(np.array([[1.0, 0.0]]), np.array([0.25])))
        assert p.support([1.0, 0.0]) == pytest.approx(0.25, abs=1e-9)
        assert p.support([0.0, 1.0]) == pytest.approx(1.0, abs=1e-9)
        with pytest.raises(ShapeError):
            unit_square().intersect(Polytope(np.zeros((1, 3)), np.zeros(1)))

    def test_contains_polytope_and_box(self):
        big = unit_square()
        small = Polytope.from_bounds([-0.5, -0.5], [0.5, 0.5])
        assert big.contains_polytope(small)
        assert not small.contains_polytope(big)
        assert big.contains_box(Box(np.zeros(2), np.array([1.0, 1.0])))
        assert not big.contains_box(Box(np.zeros(2), np.array([1.0, 1.0001])))


class TestRewrites:
    def test_normalized(self):
        p = Polytope(np.array([[2.0, 0.0], [0.0, 0.0], [0.0, -4.0]]),
                     np.array([4.0, 1.0, 8.0]))
        q = p.normalized()
        assert q.n_rows == 2  # zero row dropped
        assert np.allclose(q.h, [[1.0, 0.0], [0.0, -1.0]])
        assert np.allclose(q.b, [2.0, 2.0])

    def test_remove_redundant(self):
        # unit square plus two slack rows
        h = np.vstack([np.eye(2), -np.eye(2),
                       np.array([[1.0, 0.0], [1.0, 1.0]])])
        b = np.array([1.0, 1.0, 1.0, 1.0, 5.0, 10.0])
        q = Polytope(h, b).remove_redundant()
        assert q.n_rows == 4
        for d in (np.array([1.0, 0.0]), np.array([0.0, 1.0]),
                  np.array([-1.0, -1.0])):
            assert q.support(d) == pytest.approx(Polytope(h, b).support(d), abs=1e-8)

    def test_remove_redundant_keeps_tight_rows(self):
        p = unit_square()
        q = p.remove_redundant()
        assert q.n_rows == 4


class TestSampling:
    def test_samples_inside(self):
        rng = np.random.default_rng(0)
        tri = Polytope(np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]),
                       np.array([2.0, 0.0, 0.0]))
        pts = tri.sample(rng, 500)
        assert pts.shape == (500, 2)
        assert np.all(tri.h @ pts.T <= tri.b[:, None] + 1e-9)
