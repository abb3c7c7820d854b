import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from bayespop.stats import reflect, student_t_logpdf, truncnorm_logpdf


@pytest.mark.parametrize("mean,sd,lo,hi", [
    (0.0, 1.0, -1.0, 2.0),
    (2.0, 0.3, 0.0, 2.1),
    (0.9, 0.2, 0.0, 1.0),
    (50.0, 5.0, 0.0, 100.0),
    (-3.0, 0.5, 0.0, np.inf),   # far lower tail
    (12.0, 0.5, 0.0, 1.15),     # far upper tail
])
def test_truncnorm_matches_scipy(mean, sd, lo, hi):
    x = np.linspace(lo, min(hi, lo + 5), 7)
    a, b = (lo - mean) / sd, (hi - mean) / sd
    ref = sps.truncnorm.logpdf(x, a, b, loc=mean, scale=sd)
    np.testing.assert_allclose(truncnorm_logpdf(x, mean, sd, lo, hi), ref, rtol=1e-9)


def test_truncnorm_outside_support():
    assert truncnorm_logpdf(1.2, 0.5, 0.2, 0, 1.15) == -np.inf
    assert truncnorm_logpdf(0.5, 0.5, 0.0, 0, 1.15) == -np.inf


def test_student_t_matches_scipy():
    x = np.linspace(-3, 3, 11)
    np.testing.assert_allclose(student_t_logpdf(x, 0.25, 2.0),
                               sps.t.logpdf(x, 2.0, scale=0.25), rtol=1e-12)


@given(st.floats(-50, 50), st.floats(-3, 0), st.floats(0.1, 4))
def test_reflect_lands_in_box(x, lo, width):
    y = reflect(np.array([x]), lo, lo + width)[0]
    assert lo - 1e-9 <= y <= lo + width + 1e-9


def test_reflect_identity_inside_and_mirror():
    np.testing.assert_allclose(reflect(np.array([0.3, 1.2, -0.2]), 0.0, 1.0), [0.3, 0.8, 0.2])
    np.testing.assert_allclose(reflect(np.array([-0.5, 3.0]), 0.0, np.inf), [0.5, 3.0])
