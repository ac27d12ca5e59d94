"""Cap domains and quadrature rules: closed-form area oracles and refinement."""

import numpy as np
import pytest
from scipy import integrate

from negrefractor.geometry import (
    build_quadrature,
    cap_measure,
    integrate as quad_integrate,
    make_cap,
    neighbor_pairs,
)


def test_full_sphere_half_angle_rejected():
    with pytest.raises(ValueError):
        make_cap([0.0, 0.0, 1.0], np.pi, 3)
    with pytest.raises(ValueError):
        make_cap([0.0, 0.0, 1.0], 0.0, 3)


def test_non_unit_axis_rejected():
    with pytest.raises(ValueError):
        make_cap([0.0, 0.0, 2.0], np.pi / 6, 3)


def test_axis_inside_cap():
    cap = make_cap([0.0, 0.0, 1.0], np.pi / 6, 3)
    assert cap.contains([0.0, 0.0, 1.0])


def test_half_circle_boundary_membership():
    cap = make_cap([1.0, 0.0], np.pi / 2, 2)
    assert cap.contains([0.0, 1.0])  # exactly on the boundary
    assert not cap.contains([-1.0, 0.0])


def test_semicircle_weight_sum():
    cap = make_cap([1.0, 0.0], np.pi / 2, 2)
    for level in (4, 10):
        rule = build_quadrature(cap, level)
        assert cap_measure(rule) == pytest.approx(np.pi, rel=1e-10)


@pytest.mark.parametrize("half_angle,expected", [
    (np.pi / 3, np.pi),                       # 2*pi*(1 - cos(pi/3))
    (np.pi / 2, 2 * np.pi),                   # hemisphere
    (np.pi / 6, 2 * np.pi * (1 - np.cos(np.pi / 6))),
])
def test_cap_area_closed_form(half_angle, expected):
    cap = make_cap([0.0, 0.0, 1.0], half_angle, 3)
    rule = build_quadrature(cap, 6)
    assert cap_measure(rule) == pytest.approx(expected, rel=1e-8)


def test_zonal_moment_against_reference_integrator():
    theta0 = np.pi / 5
    cap = make_cap([0.0, 0.0, 1.0], theta0, 3)
    rule = build_quadrature(cap, 6)
    got = quad_integrate(rule, rule.nodes @ cap.axis)
    # reference: independent adaptive quadrature of the polar integral
    ref, err = integrate.quad(lambda t: np.cos(t) * np.sin(t) * 2 * np.pi, 0.0, theta0)
    assert abs(ref - np.pi * np.sin(theta0) ** 2) < 1e-12
    assert got == pytest.approx(ref, abs=max(1e-12, 10 * err))


def test_all_nodes_satisfy_membership():
    for dim, axis in ((2, [0.0, 1.0]), (3, [0.0, 0.6, 0.8])):
        cap = make_cap(axis, 0.7, dim)
        rule = build_quadrature(cap, 4)
        assert np.all(rule.domain.contains_many(rule.nodes))
        assert np.all(rule.weights > 0.0)
        assert np.allclose(np.linalg.norm(rule.nodes, axis=1), 1.0, atol=1e-12)


def test_quadrature_linear_and_monotone():
    cap = make_cap([0.0, 0.0, 1.0], 0.9, 3)
    rule = build_quadrature(cap, 4)
    f = rule.nodes[:, 2] ** 2
    g = np.exp(rule.nodes[:, 0])
    a, b = 2.5, -1.25
    lin = quad_integrate(rule, a * f + b * g)
    assert lin == pytest.approx(a * quad_integrate(rule, f) + b * quad_integrate(rule, g), rel=1e-14)
    assert quad_integrate(rule, np.ones(rule.count)) == pytest.approx(cap_measure(rule), rel=1e-15)
    assert quad_integrate(rule, f) >= 0.0


def test_refinement_quadruples_nodes():
    cap3 = make_cap([0.0, 0.0, 1.0], 0.8, 3)
    cap2 = make_cap([1.0, 0.0], 0.8, 2)
    for cap in (cap3, cap2):
        counts = [build_quadrature(cap, lv).count for lv in (1, 2, 3, 4)]
        for lo, hi in zip(counts, counts[1:]):
            assert hi >= 4 * lo


def test_refinement_error_decreases_on_smooth_integrands():
    theta0 = np.pi / 4
    cap = make_cap([0.0, 0.0, 1.0], theta0, 3)
    integrands = [
        lambda X: np.exp(3.0 * X[:, 0] + 0.5 * X[:, 1]),
        lambda X: 1.0 / (1.5 + X[:, 0] + 0.2 * X[:, 2]),
        lambda X: np.sin(4.0 * X[:, 1]) + X[:, 2] ** 3,
    ]
    # reference values from a much finer rule of the same family
    ref_rule = build_quadrature(cap, 9)
    for f in integrands:
        ref = quad_integrate(ref_rule, f(ref_rule.nodes))
        errs = []
        for lv in (2, 3, 4, 5, 6):
            rule = build_quadrature(cap, lv)
            errs.append(abs(quad_integrate(rule, f(rule.nodes)) - ref))
        floor = 1e-12 * abs(ref)
        for e0, e1 in zip(errs, errs[1:]):
            if e0 <= floor:
                break
            assert e1 < e0


def test_small_cap_measure_vanishes_with_angle():
    areas = []
    for angle in (0.5, 0.1, 0.02):
        cap = make_cap([0.0, 0.0, 1.0], angle, 3)
        areas.append(cap_measure(build_quadrature(cap, 3)))
    assert areas[0] > areas[1] > areas[2] > 0.0


def test_neighbor_pairs_are_close():
    cap = make_cap([0.0, 0.0, 1.0], 0.6, 3)
    rule = build_quadrature(cap, 4)
    ia, ib = neighbor_pairs(rule)
    gaps = np.linalg.norm(rule.nodes[ia] - rule.nodes[ib], axis=1)
    # adjacent nodes are within a few grid spacings
    assert gaps.max() < 6.0 * (0.6 / 2**4)
    assert gaps.min() > 0.0
