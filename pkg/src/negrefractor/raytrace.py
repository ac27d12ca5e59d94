"""Forward-optics audit of a synthesized refractor.

Independent of the measure pipeline: each source direction is intersected
with the envelope, refracted with the vector Snell law at the local surface
normal, and scored by the distance from the refracted half-line to its
target.  Perfect sheets focus exactly, so nonzero focus errors expose bugs;
binning ray energy by nearest focus must reproduce the quadrature measures
bin for bin, because the two paths share only the sheet formulas.

Reflected energy is accounted for (f * r per node) but reflected rays are not
propagated further.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fresnel, ovals, refractor
from .fresnel import AdmissibilityMargin
from .geometry import QuadratureRule
from .refractor import EmissionDensity, RefractorState, assign_envelope, sheet_radii


@dataclass(frozen=True)
class TraceResult:
    x: np.ndarray
    z: np.ndarray
    nu: np.ndarray | None
    m: np.ndarray | None
    active: int
    focus_error: float
    r: float
    t: float
    skipped: bool


@dataclass(frozen=True)
class AuditReport:
    per_target: np.ndarray        # ray-binned transported energy
    reflected: float
    incident: float
    skipped_fraction: float
    measures: np.ndarray          # quadrature measures on the same rule
    max_discrepancy: float        # max |per_target - measures| (absolute)
    max_focus_error: float
    miss_count: int               # rays whose best focus error exceeds the miss threshold

    def to_dict(self) -> dict:
        return {
            "per_target": self.per_target.tolist(),
            "reflected": self.reflected,
            "incident": self.incident,
            "skipped_fraction": self.skipped_fraction,
            "measures": self.measures.tolist(),
            "max_discrepancy": self.max_discrepancy,
            "max_focus_error": self.max_focus_error,
            "miss_count": self.miss_count,
        }


def _focus_error(z: np.ndarray, m: np.ndarray, target: np.ndarray) -> float:
    """Distance from the half-line {z + s m, s >= 0} to the target point."""
    rel = target - z
    s = max(float(rel @ m), 0.0)
    return float(np.linalg.norm(rel - s * m))


def trace_one(
    state: RefractorState,
    x,
    margin: AdmissibilityMargin | None = None,
) -> TraceResult:
    """Trace a single source direction through the envelope."""
    x = np.asarray(x, dtype=float)
    rho, active, tie = refractor.evaluate(state, x)
    j = int(active[0])
    z = rho * x
    if tie:
        return TraceResult(x, z, None, None, j, np.nan, np.nan, np.nan, True)
    nu = ovals.normal_at(state.sheet(j), x)
    m = fresnel.refract(x, nu, state.medium.kappa)
    c = float(x @ m)
    r = float(fresnel.reflectance(c, state.medium, margin))
    t = 1.0 - r
    err = _focus_error(z, m, state.targets.points[j])
    return TraceResult(x, z, nu, m, j, err, r, t, False)


def trace_field(
    state: RefractorState,
    rule: QuadratureRule,
    margin: AdmissibilityMargin | None = None,
):
    """Vectorized trace of every quadrature node.

    Returns (z, m, assigned, tie, focus_err (N, m_targets), r, t) where m is
    the Snell-refracted direction of the assigned sheet (NaN on ties).
    """
    X = rule.nodes
    H = sheet_radii(state, X)
    rho, assigned, tie = assign_envelope(H, state.envelope_sense, state.tie_tol)
    Z = rho[:, None] * X
    kappa = state.medium.kappa
    m_dir = np.full_like(X, np.nan)
    ok = ~tie
    for j in range(state.targets.count):
        mask = ok & (assigned == j)
        if not np.any(mask):
            continue
        to_focus = state.targets.points[j][None, :] - Z[mask]
        mhat = to_focus / np.linalg.norm(to_focus, axis=1)[:, None]
        nu = X[mask] - kappa * mhat
        nu /= np.linalg.norm(nu, axis=1)[:, None]
        lam = fresnel.phi(np.einsum("ij,ij->i", X[mask], nu), kappa)
        m_dir[mask] = (X[mask] - lam[:, None] * nu) / kappa

    # distance from each refracted half-line to every target
    focus_err = np.full((rule.count, state.targets.count), np.nan)
    rel_all = state.targets.points[None, :, :] - Z[:, None, :]
    s = np.einsum("ntk,nk->nt", rel_all, np.where(ok[:, None], m_dir, 0.0))
    s = np.maximum(s, 0.0)
    res = rel_all - s[:, :, None] * m_dir[:, None, :]
    focus_err[ok] = np.linalg.norm(res, axis=2)[ok]

    c = np.einsum("ij,ij->i", X, np.where(ok[:, None], m_dir, 0.0))
    r = np.zeros(rule.count)
    if state.medium.regime is not ovals.Regime.CRITICAL:
        r[ok] = np.asarray(fresnel.reflectance(c[ok], state.medium, margin))
    t = 1.0 - r
    return Z, m_dir, assigned, tie, focus_err, r, t


# Diagnostic threshold: a ray "misses" when even its best focus error exceeds
# this fraction of the target radius.  Reported, never reassigned.
MISS_FRACTION = 1e-6


def energy_audit(
    state: RefractorState,
    rule: QuadratureRule,
    density: EmissionDensity,
    margin: AdmissibilityMargin | None = None,
) -> AuditReport:
    """Bin ray energy by nearest focus and reconcile with the measures.

    Tie nodes cannot be traced (no unique normal); their energy is assigned
    by the same lowest-index rule the measures use, so the two ledgers stay
    comparable.  Non-tie rays are binned by minimal focus error.
    """
    Z, m_dir, assigned, tie, focus_err, r, t = trace_field(state, rule, margin)
    fvals = density.values_on(rule)
    w = rule.weights
    ok = ~tie

    bins = assigned.copy()
    best = np.nanargmin(focus_err[ok], axis=1) if np.any(ok) else np.empty(0, int)
    bins[ok] = best
    best_err = focus_err[ok, best] if np.any(ok) else np.empty(0)

    # tie nodes transmit with the assigned sheet's geometric cosine
    t_full = t.copy()
    r_full = r.copy()
    if np.any(tie):
        c_tie = refractor.refraction_cosines(
            state, rule.nodes[tie], np.linalg.norm(Z[tie], axis=1), assigned[tie]
        )
        r_tie = np.asarray(fresnel.reflectance(c_tie, state.medium, margin), dtype=float)
        r_full[tie] = r_tie
        t_full[tie] = 1.0 - r_tie

    transported = np.bincount(
        bins, weights=w * fvals * t_full, minlength=state.targets.count
    )
    reflected = float(np.sum(w * fvals * r_full))
    incident = float(np.sum(w * fvals))
    measures = refractor.measures(state, rule, density, margin)
    scale = max(float(np.linalg.norm(state.targets.points, axis=1).min()), 1e-300)
    return AuditReport(
        per_target=transported,
        reflected=reflected,
        incident=incident,
        skipped_fraction=float(np.sum(tie)) / rule.count,
        measures=measures,
        max_discrepancy=float(np.max(np.abs(transported - measures))),
        max_focus_error=float(best_err.max()) if best_err.size else 0.0,
        miss_count=int(np.sum(best_err > MISS_FRACTION * scale)) if best_err.size else 0,
    )
