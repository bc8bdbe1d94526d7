import numpy as np
import pytest

from swarmlearn.domain import Domain, ScalarField, StateField, integrate_field, make_grid
from swarmlearn.macro import initial_conditions_1d


def test_grid_spacing_and_centre():
    g = make_grid(Domain(1, np.pi), 101)
    assert g.dx == pytest.approx(2 * np.pi / 101, rel=1e-15)
    assert abs(g.centers[50]) < 1e-15
    assert g.cells_per_axis * g.dx == pytest.approx(g.length, rel=1e-15)


def test_grid_rejects_too_few_cells():
    with pytest.raises(ValueError):
        make_grid(Domain(1, 1.0), 2)


@pytest.mark.parametrize("dim,hw", [(0, 1.0), (3, 1.0), (1, 0.0), (2, -1.0)])
def test_domain_validation(dim, hw):
    with pytest.raises(ValueError):
        Domain(dim, hw)


def test_centres_symmetric():
    g = make_grid(Domain(1, 1.3), 17)
    np.testing.assert_allclose(g.centers, -g.centers[::-1], atol=1e-15)


def test_integrate_constants(grid1d):
    assert integrate_field(ScalarField(grid1d, np.zeros(101))) == 0.0
    assert integrate_field(ScalarField(grid1d, np.ones(101))) == pytest.approx(2 * np.pi, abs=1e-12)


def test_integrate_linear_exact(grid1d):
    f = ScalarField(grid1d, 3.0 + 2.0 * grid1d.centers)
    assert integrate_field(f) == pytest.approx(3.0 * 2 * np.pi, abs=1e-12)


def test_integrate_initial_density(grid1d):
    assert integrate_field(initial_conditions_1d(grid1d).rho) == pytest.approx(1.0, abs=1e-3)


def test_field_shape_checked(grid1d):
    with pytest.raises(ValueError):
        ScalarField(grid1d, np.zeros(100))


def test_2d_layout_y_fastest():
    g = make_grid(Domain(2, 1.0), 4)
    X, Y = g.mesh()
    pts = g.points()
    assert pts[1, 0] == X.ravel()[1] == g.centers[0]
    assert pts[1, 1] == g.centers[1]


def test_state_stack_round_trip(grid2d, rng):
    U = rng.random((3,) + grid2d.shape)
    s = StateField.from_stack(grid2d, U)
    np.testing.assert_array_equal(s.stack(), U)
    assert len(s.momentum) == 2
