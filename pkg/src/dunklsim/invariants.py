"""Runnable suite of the package's algebraic and analytic identities.

Each check samples random points (seeded) and reports the worst violation
against its pinned tolerance.  The suite backs the `invariants` CLI command;
the same identities are exercised independently by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .coeff import singular_drift, truncated_drift, truncated_reciprocal
from .rootsys import (RootSystem, alternating_poly, harmonic_identity_residual,
                      in_chamber, random_chamber_points)
from .solver import solve_exact

_EPS_GRID = (0.1, 0.5, 1.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_violation: float  # worst (measured - allowed); <= 0 means pass
    tolerance_note: str
    samples: int

    def to_dict(self) -> dict:
        return asdict(self)


def _fd_laplacian(rs: RootSystem, x: np.ndarray, step: float) -> float:
    d = rs.dim
    total = -2.0 * d * alternating_poly(rs, x)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        total += alternating_poly(rs, x + e) + alternating_poly(rs, x - e)
    return total / step ** 2


def run_invariant_suite(rs: RootSystem, n_points: int = 1000, n_pairs: int = 10000,
                        seed: int = 0) -> list[CheckResult]:
    """Evaluate every identity/bound on `rs` and return one result each."""
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    pts = random_chamber_points(rs, n_points, rng, clearance=0.3, spread=1.0)

    # exact identity between the two quadratic wall sums
    worst = max(harmonic_identity_residual(rs, x) for x in pts) - 1e-10
    results.append(CheckResult("harmonic_identity", worst <= 0, worst,
                               "relative residual <= 1e-10", n_points))

    # the alternating polynomial is harmonic: FD Laplacian vanishes
    fd_pts = random_chamber_points(rs, min(n_points, 100), rng, clearance=0.5,
                                   spread=1.0)
    worst = max(
        abs(_fd_laplacian(rs, x, 1e-3)) - 1e-6 * (1.0 + abs(alternating_poly(rs, x)))
        for x in fd_pts)
    results.append(CheckResult("alternating_poly_harmonic", worst <= 0, worst,
                               "|FD Laplacian| <= 1e-6 (1+|poly|), step 1e-3",
                               len(fd_pts)))

    # one-sided Lipschitz of the singular drift on chamber pairs
    xs = random_chamber_points(rs, n_pairs, rng, clearance=0.05, spread=1.0)
    ys = random_chamber_points(rs, n_pairs, rng, clearance=0.05, spread=1.0)
    fx, fy = singular_drift(rs, xs), singular_drift(rs, ys)
    lhs = np.einsum("nd,nd->n", xs - ys, fx - fy)
    allowance = 1e-12 * (1.0 + np.einsum("nd,nd->n", xs - ys, xs - ys))
    worst = float(np.max(lhs - allowance))
    results.append(CheckResult("one_sided_lipschitz", worst <= 0, worst,
                               "<x-y, f(x)-f(y)> <= 1e-12 (1+|x-y|^2)", n_pairs))

    # truncated-drift bounds over unconstrained pairs, for several eps
    us = 3.0 * rng.standard_normal((n_pairs, rs.dim))
    vs = 3.0 * rng.standard_normal((n_pairs, rs.dim))
    diff = us - vs
    diff_sq = np.einsum("nd,nd->n", diff, diff)
    lips = rs.lipschitz_scale
    worst_mono, worst_lip, worst_radial = -np.inf, -np.inf, -np.inf
    for eps in _EPS_GRID:
        fu, fv = truncated_drift(rs, us, eps), truncated_drift(rs, vs, eps)
        mono = np.einsum("nd,nd->n", diff, fu - fv) - 1e-12 * (1.0 + diff_sq)
        worst_mono = max(worst_mono, float(np.max(mono)))
        df = fu - fv
        ratio = np.sqrt(np.einsum("nd,nd->n", df, df) / np.maximum(diff_sq, 1e-300))
        worst_lip = max(worst_lip, float(np.max(ratio - lips / eps ** 2 * (1 + 1e-12))))
        radial = np.einsum("nd,nd->n", us, fu) - rs.total_multiplicity * (1 + 1e-12) - 1e-12
        worst_radial = max(worst_radial, float(np.max(radial)))
    results.append(CheckResult("truncated_monotonicity", worst_mono <= 0, worst_mono,
                               "<x-y, f_eps(x)-f_eps(y)> <= 1e-12 (1+|x-y|^2)",
                               n_pairs * len(_EPS_GRID)))
    results.append(CheckResult("truncated_global_lipschitz", worst_lip <= 0, worst_lip,
                               "|df|/|dx| <= L eps^-2 (1+1e-12)", n_pairs * len(_EPS_GRID)))
    results.append(CheckResult("truncated_radial_bound", worst_radial <= 0, worst_radial,
                               "<x, f_eps(x)> <= sum k(a)", n_pairs * len(_EPS_GRID)))

    # pointwise truncation error bound on chamber points
    worst = -np.inf
    gaps = np.einsum("nd,md->nm", pts, rs.positive_roots)
    norms_sq = rs.root_square_norms
    for eps in _EPS_GRID:
        fk = singular_drift(rs, pts)
        fe = truncated_drift(rs, pts, eps)
        lhs_v = np.einsum("nd,nd->n", fk - fe, fk - fe)
        bound = (eps ** 2 * rs.n_positive
                 * np.sum(rs.multiplicities ** 2 * norms_sq / gaps ** 4, axis=1))
        worst = max(worst, float(np.max(lhs_v - bound * (1 + 1e-12) - 1e-300)))
    results.append(CheckResult("truncation_error_bound", worst <= 0, worst,
                               "|f-f_eps|^2 <= eps^2 m sum k^2|a|^2/<a,x>^4",
                               n_points * len(_EPS_GRID)))

    # scalar reciprocal-truncation bounds
    u = 4.0 * rng.standard_normal(n_pairs)
    v = 4.0 * rng.standard_normal(n_pairs)
    upos = np.abs(u) + 1e-4
    worst = -np.inf
    for eps in _EPS_GRID:
        gu, gv = truncated_reciprocal(u, eps), truncated_reciprocal(v, eps)
        worst = max(worst, float(np.max(np.abs(gu - gv) - np.abs(u - v) / eps ** 2
                                        - 1e-12)))
        worst = max(worst, float(np.max((u - v) * (gu - gv) - 1e-12)))
        gap = 1.0 / upos - truncated_reciprocal(upos, eps)
        worst = max(worst, float(np.max(-gap - 1e-12)))
        worst = max(worst, float(np.max(gap - eps / upos ** 2 - 1e-12)))
    results.append(CheckResult("scalar_truncation_bounds", worst <= 0, worst,
                               "Lipschitz, monotone, 0 <= 1/x - g_eps <= eps/x^2",
                               n_pairs * len(_EPS_GRID)))

    # implicit chamber step: residual and strict chamber membership
    n_solve = min(n_points, 200)
    starts = random_chamber_points(rs, n_solve, rng, clearance=0.05, spread=1.0)
    kicks = rng.standard_normal((n_solve, rs.dim))
    worst = -np.inf
    for x, z in zip(starts, kicks):
        h = float(rng.uniform(1e-4, 0.05))
        res = solve_exact(rs, x + np.sqrt(h) * z, h)
        worst = max(worst, res.residual - 1e-12)
        if rs.multiplicities.min() > 0 and not in_chamber(rs, res.y, 0.0):
            worst = max(worst, 1.0)
    results.append(CheckResult("implicit_step_chamber", worst <= 0, worst,
                               "residual <= 1e-12 and state strictly inside",
                               n_solve))

    # signed-pair drift rearrangement used by the squared-process construction
    if rs.name in ("B", "C", "D"):
        worst = -np.inf
        for x in pts[: min(n_points, 500)]:
            d = rs.dim
            for i in range(d):
                lhs_s = sum(1.0 / (x[i] - x[j]) + 1.0 / (x[i] + x[j])
                            for j in range(d) if j != i)
                rhs_s = (sum((x[i] ** 2 + x[j] ** 2) / (x[i] ** 2 - x[j] ** 2)
                             for j in range(d) if j != i) + (d - 1)) / x[i]
                rel = abs(lhs_s - rhs_s) / max(1.0, abs(lhs_s))
                worst = max(worst, rel - 1e-10)
        results.append(CheckResult("signed_pair_drift_identity", worst <= 0, worst,
                                   "relative residual <= 1e-10",
                                   min(n_points, 500) * rs.dim))

    return results
