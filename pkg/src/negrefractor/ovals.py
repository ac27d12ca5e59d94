"""Closed-form refracting surfaces for a negative relative index.

A point source at the origin in medium I refracts into medium II whose
relative index is kappa = n2/n1 < 0.  The surface that focuses every
admissible ray onto a single interior point P is a Cartesian-oval-type
surface, written in polar form z = h(x) x over unit directions x.  Three
regimes:

  strong   kappa < -1    |z| + kappa |z - P| = b,  kappa|P| < b < |P|,
                         defined where x.P/|P| >= support_cut(P, b)
  mild     -1 < kappa < 0 same implicit equation, defined where x.P >= b
  critical kappa = -1    semi-hyperboloid |z| - |z - P| = b, |b| <= |P|,
                         defined where x.P > b

The parameter b shifts the surface monotonically along each ray
(dh/db = 1/(x . n) > 0 with n the unnormalized outward normal), which is the
bracketing fact the envelope solver relies on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

# |kappa + 1| below this means the critical (kappa = -1) regime.
CRITICAL_TOL = 1e-14
# Relative slack for clipping a tiny negative discriminant at the support rim.
DISC_SLACK = 1e-12


class Regime(enum.Enum):
    STRONG = "strong"      # kappa < -1
    MILD = "mild"          # -1 < kappa < 0
    CRITICAL = "critical"  # kappa = -1


class SupportConditionError(ValueError):
    """Direction lies outside the surface's polar domain."""


class DiscriminantError(SupportConditionError):
    """Radicand of the polar-radius formula is negative."""


def regime_of(kappa: float) -> Regime:
    if not np.isfinite(kappa) or kappa >= 0.0:
        raise ValueError(f"relative index must be negative, got {kappa}")
    if abs(kappa + 1.0) <= CRITICAL_TOL:
        return Regime.CRITICAL
    return Regime.STRONG if kappa < -1.0 else Regime.MILD


@dataclass(frozen=True)
class Interval:
    """Admissible parameter range; open endpoints unless closed is True."""

    lo: float
    hi: float
    closed: bool = False

    def contains(self, value: float, *, slack: float = 0.0) -> bool:
        if self.closed:
            return self.lo - slack <= value <= self.hi + slack
        return self.lo + slack < value < self.hi - slack

    @property
    def width(self) -> float:
        return self.hi - self.lo


def admissible_b(focus, kappa: float) -> Interval:
    """Range of the surface parameter b for which the oval exists.

    Strong/mild: open (kappa|P|, |P|).  Critical: closed [-|P|, |P|].
    """
    reg = regime_of(kappa)
    p = float(np.linalg.norm(np.asarray(focus, dtype=float)))
    if p <= 0.0:
        raise ValueError("focus must be away from the source origin")
    if reg is Regime.CRITICAL:
        return Interval(-p, p, closed=True)
    return Interval(kappa * p, p, closed=False)


@dataclass(frozen=True)
class OvalParams:
    """One refracting sheet: focus P, parameter b, relative index kappa."""

    focus: np.ndarray
    b: float
    kappa: float
    regime: Regime = field(init=False)

    def __post_init__(self):
        focus = np.asarray(self.focus, dtype=float)
        object.__setattr__(self, "focus", focus)
        object.__setattr__(self, "regime", regime_of(self.kappa))
        rng = admissible_b(focus, self.kappa)
        if not rng.contains(self.b):
            raise ValueError(
                f"parameter b={self.b} outside admissible range "
                f"({rng.lo}, {rng.hi}) for |P|={np.linalg.norm(focus)}"
            )

    @property
    def focus_norm(self) -> float:
        return float(np.linalg.norm(self.focus))


@dataclass(frozen=True)
class GeometryBounds:
    """Closed-form extremes of the polar radius and of |P - h x|."""

    h_min: float
    h_max: float
    dist_min: float
    dist_max: float
    support_cut: float | None = None


# ---------------------------------------------------------------------------
# vectorized kernels (X is an (N, dim) array of unit directions)
# ---------------------------------------------------------------------------

def radii(kappa: float, focus: np.ndarray, b: float, X: np.ndarray):
    """Polar radii h(x) and support mask for a node batch.

    Returns (h, ok); h is only meaningful where ok is True.  The discriminant
    is clipped to zero within a relative DISC_SLACK so rim-tangent rays
    (a measure-zero set that does occur in tests) evaluate cleanly.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    focus = np.asarray(focus, dtype=float)
    return radii_from_dots(kappa, float(focus @ focus), b, X @ focus)


def radii_from_dots(kappa: float, p2: float, b: float, dots: np.ndarray):
    """radii() with the node-focus dot products precomputed (solver hot path)."""
    k2 = kappa * kappa
    reg = regime_of(kappa)
    if reg is Regime.STRONG:
        u = k2 * dots - b
        disc = u * u - (k2 - 1.0) * (k2 * p2 - b * b)
        scale = np.maximum(u * u, (k2 - 1.0) * abs(k2 * p2 - b * b))
        ok = (disc >= -DISC_SLACK * scale) & (u > 0.0)
        disc = np.where(ok, np.maximum(disc, 0.0), np.nan)
        h = (u - np.sqrt(disc)) / (k2 - 1.0)
        return h, ok
    if reg is Regime.MILD:
        ok = dots >= b
        v = b - k2 * dots
        disc = v * v - (1.0 - k2) * (b * b - k2 * p2)
        scale = np.maximum(v * v, (1.0 - k2) * abs(b * b - k2 * p2))
        ok &= disc >= -DISC_SLACK * scale
        disc = np.where(ok, np.maximum(disc, 0.0), np.nan)
        h = (v + np.sqrt(disc)) / (1.0 - k2)
        return h, ok
    denom = b - dots
    ok = denom < 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(ok, (b * b - p2) / (2.0 * denom), np.nan)
    return h, ok


def polar_radius(oval: OvalParams, x) -> float:
    """Radius h(x) of the sheet along unit direction x."""
    x = np.asarray(x, dtype=float)
    h, ok = radii(oval.kappa, oval.focus, oval.b, x[None, :])
    if not ok[0]:
        dots = float(x @ oval.focus)
        if oval.regime is Regime.STRONG:
            cut = support_cut(oval) * oval.focus_norm
            if dots < cut:
                raise SupportConditionError(
                    f"x.P = {dots} below the support cut {cut}"
                )
            raise DiscriminantError("negative discriminant in polar radius")
        raise SupportConditionError(
            f"x.P = {dots} violates the support condition (b = {oval.b})"
        )
    return float(h[0])


def support_cut(oval: OvalParams) -> float:
    """Cosine threshold of the strong sheet's polar domain.

    The sheet exists for x . P/|P| >= cut, with cut in (1/kappa, 1].
    """
    if oval.regime is not Regime.STRONG:
        raise ValueError(f"support cut applies to the strong regime only, got {oval.regime}")
    k2 = oval.kappa * oval.kappa
    p = oval.focus_norm
    return float(
        (oval.b + np.sqrt((k2 - 1.0) * (k2 * p * p - oval.b * oval.b))) / (k2 * p)
    )


def normal_at(oval: OvalParams, x) -> np.ndarray:
    """Unit surface normal at z = h(x) x, oriented into medium II.

    The implicit equation gives the (unnormalized) normal  x - kappa m  with
    m the unit vector from z toward the focus.  Its x-component 1 - kappa x.m
    is strictly positive on admissible inputs, so dh/db = 1/(x . n) > 0.
    """
    x = np.asarray(x, dtype=float)
    h = polar_radius(oval, x)
    z = h * x
    to_focus = oval.focus - z
    dist = float(np.linalg.norm(to_focus))
    if dist <= 1e-15 * oval.focus_norm:
        raise ValueError("surface point coincides with the focus")
    n = x - oval.kappa * (to_focus / dist)
    return n / np.linalg.norm(n)


def bounds(oval: OvalParams) -> GeometryBounds:
    """Global extremes of h and of the focus distance |P - h x|.

    Critical sheets are half-open (h is unbounded near the support rim), so
    no bounds are reported for them.
    """
    k, b, p = oval.kappa, oval.b, oval.focus_norm
    if oval.regime is Regime.STRONG:
        # dist is linear in h along the sheet (h + k dist = b), so its max
        # sits at the support rim where h peaks; (b - p)/k only bounds it
        # when b <= -|P|
        h_max = float(np.sqrt((k * k * p * p - b * b) / (k * k - 1.0)))
        return GeometryBounds(
            h_min=(k * p - b) / (k - 1.0),
            h_max=h_max,
            dist_min=(b - p) / (k - 1.0),
            dist_max=(h_max - b) / (-k),
            support_cut=support_cut(oval),
        )
    if oval.regime is Regime.MILD:
        return GeometryBounds(
            h_min=(b - k * p) / (1.0 - k),
            h_max=(b - k * p) / (1.0 + k),
            dist_min=(p - b) / (1.0 - k),
            dist_max=float(np.sqrt((p * p - b * b) / (1.0 - k * k))),
            support_cut=None,
        )
    raise ValueError("critical sheets are unbounded; no closed-form extremes")


def defect(oval: OvalParams, x) -> float:
    """Signed residual of the implicit surface equation at z = h(x) x.

    Strong/mild: |z| + kappa |z - P| - b.  Critical: |z| - |z - P| - b.
    Positive when the point sits outside the sheet in the +b direction.
    """
    x = np.asarray(x, dtype=float)
    h = polar_radius(oval, x)
    dist = float(np.linalg.norm(oval.focus - h * x))
    if oval.regime is Regime.CRITICAL:
        return h - dist - oval.b
    return h + oval.kappa * dist - oval.b


def defect_many(kappa: float, focus: np.ndarray, b: float, X: np.ndarray) -> np.ndarray:
    """Vectorized defect over a batch of supported directions."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    h, ok = radii(kappa, focus, b, X)
    if not np.all(ok):
        raise SupportConditionError("batch contains unsupported directions")
    dist = np.linalg.norm(focus[None, :] - h[:, None] * X, axis=1)
    if regime_of(kappa) is Regime.CRITICAL:
        return h - dist - b
    return h + kappa * dist - b
