import numpy as np
import pytest

from viscodamage.problems import TimeProfile, bar_problem, cosine_profile, healing_problem, standard_problem


def test_time_profiles():
    assert TimeProfile("sine", 2.0)(1.0) == pytest.approx(1.0)
    assert TimeProfile("ramp", 2.0)(3.0) == 1.0
    assert TimeProfile("constant")(0.7) == 1.0
    with pytest.raises(ValueError):
        TimeProfile("square")


def test_cosine_profile_has_zero_normal_derivative():
    P = standard_problem(cells=8)
    chi0 = cosine_profile(P.grid, 0.3)
    assert chi0.min() == pytest.approx(0.7) and chi0.max() == pytest.approx(1.3)
    assert P.grid.max_normal_derivative(chi0) < 0.5


def test_presets():
    assert standard_problem(cells=2).grid.dim == 2
    assert bar_problem(cells=3).grid.n_nodes == 4
    H = healing_problem(cells=2)
    assert H.traction is None
    np.testing.assert_allclose(H.initial.chi0, 0.5)
