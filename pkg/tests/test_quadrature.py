from math import factorial

import numpy as np
import pytest

from oldroyd_isvd.quadrature import collapsed_gauss, dunavant6, triangle_rule


def monomial_integral(a, b):
    # int over the reference triangle of x^a y^b
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("rule", [dunavant6(), collapsed_gauss(6), triangle_rule(10)])
def test_exact_for_monomials_up_to_degree(rule):
    x, y = rule.points.T
    for a in range(rule.degree + 1):
        for b in range(rule.degree + 1 - a):
            got = np.sum(rule.weights * x ** a * y ** b)
            assert got == pytest.approx(monomial_integral(a, b), rel=1e-13, abs=1e-16)


def test_weights_and_barycentric_rows():
    for rule in (dunavant6(), collapsed_gauss(4)):
        assert rule.weights.sum() == pytest.approx(0.5, rel=1e-15)
        np.testing.assert_allclose(rule.bary.sum(axis=1), 1.0, rtol=0, atol=1e-15)
        assert np.all(rule.bary >= 0)


def test_triangle_rule_picks_degree():
    assert triangle_rule(4).degree == 6
    assert triangle_rule(10).degree >= 10
    assert len(dunavant6()) == 12
