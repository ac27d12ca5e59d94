"""Envelope refractor built from finitely many refracting sheets.

Each target point P_j carries one closed-form sheet h_j; the surface is their
pointwise envelope over the source cap:

    strong regime          rho(x) = max_j h_j(x)
    mild / critical regime rho(x) = min_j h_j(x)

A direction x "belongs" to the sheet attaining the envelope there; points
where several sheets agree within a relative tie tolerance form the discrete
stand-in for the (measure-zero) singular set, and are assigned to the lowest
index for energy bookkeeping but skipped by normal-dependent queries.

The energy delivered to target j is the quadrature sum of f(x) t(x) over the
directions assigned to j, with t the Fresnel transmittance at the incidence
the sheet produces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fresnel, ovals
from .fresnel import AdmissibilityMargin, MediumPair
from .geometry import QuadratureRule, neighbor_pairs
from .ovals import Regime


class ConfigurationError(ValueError):
    """A sheet is not evaluable somewhere on the aperture."""


class TiePointError(ValueError):
    """Query needs a unique supporting sheet but the point is a tie."""


@dataclass(frozen=True)
class TargetSpec:
    """Discrete target measure: points P_j (away from the origin) with
    positive energy weights g_j.  Index 0 is the anchor."""

    points: np.ndarray   # (m, dim)
    weights: np.ndarray  # (m,)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        wts = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if pts.shape[0] != wts.shape[0] or pts.shape[0] < 1:
            raise ValueError("need one positive weight per target point")
        if np.any(np.linalg.norm(pts, axis=1) <= 0.0):
            raise ValueError("target points must be away from the origin")
        if np.any(wts <= 0.0):
            raise ValueError("target weights must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class EmissionDensity:
    """Source intensity f over the aperture with inf f > 0.

    Uniform, callable-of-direction, or tabulated per quadrature node
    (tables enter only through node values, so their length must match the
    rule they are used with).
    """

    kind: str
    value: float = 1.0
    fn: Callable | None = None
    table: np.ndarray | None = None

    @staticmethod
    def uniform(value: float = 1.0) -> "EmissionDensity":
        if not (value > 0.0):
            raise ValueError("uniform density must be positive")
        return EmissionDensity(kind="uniform", value=float(value))

    @staticmethod
    def from_function(fn: Callable) -> "EmissionDensity":
        return EmissionDensity(kind="function", fn=fn)

    @staticmethod
    def from_table(values) -> "EmissionDensity":
        values = np.asarray(values, dtype=float)
        if np.any(values <= 0.0):
            raise ValueError("tabulated density must be positive everywhere")
        return EmissionDensity(kind="table", table=values)

    def values_on(self, rule: QuadratureRule) -> np.ndarray:
        if self.kind == "uniform":
            return np.full(rule.count, self.value)
        if self.kind == "function":
            vals = np.apply_along_axis(self.fn, 1, rule.nodes).astype(float)
            if np.any(vals <= 0.0):
                raise ValueError("density function must be positive on all nodes")
            return vals
        if self.table.shape != (rule.count,):
            raise ValueError(
                f"tabulated density has {self.table.shape[0]} entries, "
                f"rule has {rule.count} nodes"
            )
        return self.table

    def floor_on(self, rule: QuadratureRule) -> float:
        return float(np.min(self.values_on(rule)))


@dataclass(frozen=True)
class RefractorState:
    """Envelope surface: medium, targets, one parameter b_j per sheet."""

    medium: MediumPair
    targets: TargetSpec
    b: np.ndarray
    tie_tol: float = 1e-9
    regime: Regime = field(init=False)

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if b.shape != (self.targets.count,):
            raise ValueError("need one parameter b_j per target")
        for point, bj in zip(self.targets.points, b):
            if not ovals.admissible_b(point, self.medium.kappa).contains(bj):
                raise ValueError(
                    f"b={bj} inadmissible for target at {point} "
                    f"(kappa={self.medium.kappa})"
                )
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "regime", self.medium.regime)

    @property
    def envelope_sense(self) -> str:
        return "max" if self.regime is Regime.STRONG else "min"

    def sheet(self, j: int) -> ovals.OvalParams:
        return ovals.OvalParams(
            focus=self.targets.points[j], b=float(self.b[j]), kappa=self.medium.kappa
        )

    def with_b(self, b: np.ndarray) -> "RefractorState":
        return RefractorState(self.medium, self.targets, b, self.tie_tol)


# ---------------------------------------------------------------------------
# vectorized evaluation
# ---------------------------------------------------------------------------

def sheet_radii(state: RefractorState, X: np.ndarray) -> np.ndarray:
    """(m, N) matrix of sheet radii; raises if any sheet is unsupported."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    H = np.empty((state.targets.count, X.shape[0]))
    for j in range(state.targets.count):
        h, ok = ovals.radii(
            state.medium.kappa, state.targets.points[j], float(state.b[j]), X
        )
        if not np.all(ok):
            bad = int(np.argmin(ok))
            raise ConfigurationError(
                f"sheet {j} not evaluable at node {bad} "
                f"(x={X[bad]}, b={state.b[j]})"
            )
        H[j] = h
    return H


def assign_envelope(H: np.ndarray, sense: str, tie_tol: float):
    """Envelope rho, lowest-index assignment, and tie flags from a radii matrix.

    A sheet is 'in band' when within tie_tol * rho of the envelope; ties are
    nodes with more than one sheet in band.
    """
    if sense == "max":
        rho = H.max(axis=0)
        band = H >= rho * (1.0 - tie_tol)
    else:
        rho = H.min(axis=0)
        band = H <= rho * (1.0 + tie_tol)
    assigned = np.argmax(band, axis=0)
    tie = band.sum(axis=0) > 1
    return rho, assigned, tie


def evaluate(state: RefractorState, x):
    """Radius, active sheet index set, and tie flag at one direction."""
    x = np.asarray(x, dtype=float)
    H = sheet_radii(state, x[None, :])[:, 0]
    if state.envelope_sense == "max":
        rho = float(H.max())
        active = np.nonzero(H >= rho * (1.0 - state.tie_tol))[0]
    else:
        rho = float(H.min())
        active = np.nonzero(H <= rho * (1.0 + state.tie_tol))[0]
    return rho, active, len(active) > 1


def trace_indicator(state: RefractorState, j: int, x) -> bool:
    """True iff direction x is assigned to sheet j (lowest index on ties)."""
    _, active, _ = evaluate(state, x)
    return int(active[0]) == j


def surface_normal(state: RefractorState, x) -> np.ndarray:
    """Outward unit normal of the unique active sheet; ties are singular."""
    _, active, tie = evaluate(state, x)
    if tie:
        raise TiePointError(f"{len(active)} sheets active at x={x}")
    return ovals.normal_at(state.sheet(int(active[0])), x)


def transmission_at(state: RefractorState, x, margin: AdmissibilityMargin | None = None) -> float:
    """Fresnel transmittance at x for the active sheet's refraction cosine."""
    rho, active, tie = evaluate(state, x)
    if tie:
        raise TiePointError(f"tie at x={x}; transmittance undefined")
    x = np.asarray(x, dtype=float)
    j = int(active[0])
    to_focus = state.targets.points[j] - rho * x
    c = float(x @ to_focus) / float(np.linalg.norm(to_focus))
    return float(fresnel.transmittance(c, state.medium, margin))


def refraction_cosines(state: RefractorState, X, rho, assigned) -> np.ndarray:
    """Per-node cosine x . m toward the assigned target, m = (P - z)/|P - z|."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    c = np.empty(X.shape[0])
    for j in range(state.targets.count):
        mask = assigned == j
        if not np.any(mask):
            continue
        P = state.targets.points[j]
        dots = X[mask] @ P
        r = rho[mask]
        dist = np.sqrt(np.maximum(P @ P - 2.0 * r * dots + r * r, 0.0))
        c[mask] = (dots - r) / dist
    return c


@dataclass(frozen=True)
class FieldEvaluation:
    """Cached per-node envelope data for one state on one rule."""

    rho: np.ndarray
    assigned: np.ndarray
    tie: np.ndarray
    cosines: np.ndarray
    transmittance: np.ndarray


def evaluate_field(
    state: RefractorState,
    rule: QuadratureRule,
    margin: AdmissibilityMargin | None = None,
) -> FieldEvaluation:
    H = sheet_radii(state, rule.nodes)
    rho, assigned, tie = assign_envelope(H, state.envelope_sense, state.tie_tol)
    c = refraction_cosines(state, rule.nodes, rho, assigned)
    t = fresnel.transmittance(c, state.medium, margin)
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        t = np.full(rule.count, float(t))
    return FieldEvaluation(rho=rho, assigned=assigned, tie=tie, cosines=c, transmittance=t)


def measures(
    state: RefractorState,
    rule: QuadratureRule,
    density: EmissionDensity,
    margin: AdmissibilityMargin | None = None,
    fieldeval: FieldEvaluation | None = None,
) -> np.ndarray:
    """Energy per target: G_j = sum_i w_i f_i t_i [assigned_i = j]."""
    fe = fieldeval or evaluate_field(state, rule, margin)
    contrib = rule.weights * density.values_on(rule) * fe.transmittance
    return np.bincount(fe.assigned, weights=contrib, minlength=state.targets.count)


def measure_of_target(
    state: RefractorState,
    j: int,
    rule: QuadratureRule,
    density: EmissionDensity,
    margin: AdmissibilityMargin | None = None,
) -> float:
    return float(measures(state, rule, density, margin)[j])


def total_transmitted(
    state: RefractorState,
    rule: QuadratureRule,
    density: EmissionDensity,
    margin: AdmissibilityMargin | None = None,
) -> float:
    """Total transmitted energy; equals the sum of the per-target measures
    exactly (same weighted sums, reordered)."""
    return float(np.sum(measures(state, rule, density, margin)))


def lipschitz_estimate(state: RefractorState, rule: QuadratureRule) -> float:
    """Max finite-difference slope |rho(x)-rho(y)|/|x-y| over adjacent nodes."""
    H = sheet_radii(state, rule.nodes)
    rho, _, _ = assign_envelope(H, state.envelope_sense, state.tie_tol)
    ia, ib = neighbor_pairs(rule)
    dr = np.abs(rho[ia] - rho[ib])
    dx = np.linalg.norm(rule.nodes[ia] - rule.nodes[ib], axis=1)
    return float(np.max(dr / dx))
