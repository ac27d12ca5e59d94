"""Shared fixtures: admissible-parameter samplers and solvable configurations."""

import numpy as np
import pytest

import negrefractor as nr
from negrefractor.ovals import Regime

DEG = np.pi / 180.0
CAP30 = 2.0 * np.pi * (1.0 - np.cos(30 * DEG))


def sample_ovals(regime, n_ovals, seed, kappa_range=None, p_range=(0.5, 2.0),
                 b_margin=1e-3):
    """Random admissible (kappa, P, b) triples for one regime."""
    rng = np.random.default_rng(seed)
    if regime is Regime.STRONG:
        lo, hi = kappa_range or (-3.0, -1.05)
        kappas = rng.uniform(lo, hi, n_ovals)
    elif regime is Regime.MILD:
        lo, hi = kappa_range or (-0.95, -0.05)
        kappas = rng.uniform(lo, hi, n_ovals)
    else:
        kappas = np.full(n_ovals, -1.0)
    dirs = rng.normal(size=(n_ovals, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    pnorms = rng.uniform(*p_range, n_ovals)
    P = dirs * pnorms[:, None]
    if regime is Regime.CRITICAL:
        b_lo, b_hi = -pnorms, pnorms
    else:
        b_lo, b_hi = kappas * pnorms, pnorms
    span = b_hi - b_lo
    b = b_lo + span * rng.uniform(b_margin, 1.0 - b_margin, n_ovals)
    return kappas, P, b


def sample_directions_in_support(kappa, P, b, n_dirs, rng, cos_margin=0.02):
    """Unit directions inside the sheet's polar domain (away from its rim)."""
    p = float(np.linalg.norm(P))
    if kappa < -1.0:
        oval = nr.OvalParams(P, b, kappa)
        c_lo = nr.ovals.support_cut(oval)
    elif kappa == -1.0:
        c_lo = b / p
    else:
        c_lo = max(b / p, -1.0)
    span = 1.0 - c_lo
    cosu = c_lo + span * rng.uniform(cos_margin, 1.0, n_dirs)
    phi = rng.uniform(-np.pi, np.pi, n_dirs)
    sinu = np.sqrt(np.maximum(1.0 - cosu * cosu, 0.0))
    axis = P / p
    helper = np.array([0.0, 0.0, 1.0])
    if abs(axis @ helper) > 0.9:
        helper = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(helper, axis)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return (
        np.outer(sinu * np.cos(phi), e1)
        + np.outer(sinu * np.sin(phi), e2)
        + np.outer(cosu, axis)
    )


def separated_targets(rng, m, max_angle, min_sep, radial=(0.97, 1.03)):
    """Random targets near the cap axis with pairwise separation >= min_sep."""
    pts = []
    while len(pts) < m:
        ang = rng.uniform(0.0, max_angle)
        az = rng.uniform(-np.pi, np.pi)
        rad = rng.uniform(*radial)
        cand = rad * np.array(
            [np.sin(ang) * np.cos(az), np.sin(ang) * np.sin(az), np.cos(ang)]
        )
        if all(np.linalg.norm(cand - q) >= min_sep for q in pts):
            pts.append(cand)
    return np.array(pts)


def solvable_config(kappa, m, seed, level=8, share=0.6, epsilon=0.4,
                    max_angle=5 * DEG, min_sep=0.03):
    """A feasible configuration of the standard desk-scale shape: 30-degree
    cap, unit-distance targets near the axis, uniform source."""
    rng = np.random.default_rng(seed)
    cap = nr.make_cap([0.0, 0.0, 1.0], 30 * DEG, 3)
    pts = separated_targets(rng, m, max_angle, min_sep)
    rad0 = float(np.linalg.norm(pts[0]))
    if kappa < -1.0:
        tau, r0, b1 = 1.2, 0.08, kappa * rad0 + 0.004
    elif kappa == -1.0:
        tau, r0, b1 = 0.3, 0.3, -0.9 * rad0
    else:
        tau, r0 = 0.3, 0.17
        b1 = kappa * rad0 + 0.8 * r0 * (1.0 + kappa)
    g = rng.uniform(0.5, 1.5, m)
    g = g / g.sum() * share * CAP30
    return nr.ProblemConfig(
        domain=cap,
        density=nr.EmissionDensity.uniform(1.0),
        medium=nr.MediumPair(kappa=kappa, sigma=1.0, alpha=0.5),
        margin=nr.AdmissibilityMargin(epsilon),
        targets=nr.TargetSpec(pts, g),
        b1=b1,
        tau=tau,
        r0=r0,
        quadrature_level=level,
        seed=seed,
    )


def symmetric_pair_config(kappa, level=6, offset_deg=5.0, g=None):
    """Two targets mirrored across the x=0 plane (tie locus on the grid seam)."""
    a = offset_deg * DEG
    P1 = np.array([np.sin(a), 0.0, np.cos(a)])
    P2 = np.array([-np.sin(a), 0.0, np.cos(a)])
    cap = nr.make_cap([0.0, 0.0, 1.0], 30 * DEG, 3)
    if kappa < -1.0:
        tau, r0, b1 = 1.2, 0.085, kappa + 0.0028
        g = 0.3 if g is None else g
    elif kappa == -1.0:
        tau, r0, b1 = 0.3, 0.3, -0.9
        g = 0.3 if g is None else g
    else:
        tau, r0 = 0.3, 0.17
        b1 = kappa + 0.8 * r0 * (1.0 + kappa)
        g = 0.25 if g is None else g
    return nr.ProblemConfig(
        domain=cap,
        density=nr.EmissionDensity.uniform(1.0),
        medium=nr.MediumPair(kappa=kappa, sigma=1.0, alpha=0.5),
        margin=nr.AdmissibilityMargin(0.4),
        targets=nr.TargetSpec(np.array([P1, P2]), np.array([g, g])),
        b1=b1,
        tau=tau,
        r0=r0,
        quadrature_level=level,
    )


@pytest.fixture(scope="session")
def strong_pair_solution():
    cfg = symmetric_pair_config(-1.5, level=7)
    sol = nr.solve_discrete(cfg)
    assert sol.converged
    return cfg, sol
