"""Per-step implicit equation solvers.

Each implicit Euler step reduces to solving y = a + h * drift(y) for a given
input point a.  Two solvers are provided:

* `solve_truncated` - the globally contractive fixed-point iteration for the
  truncated drift, valid whenever h < eps^2 / L with L the drift's Lipschitz
  scale.  The iterate error admits an a-priori geometric bound, exposed as
  `iteration_error_bound`.
* `solve_exact` - the chamber-valued equation for the singular drift.  The
  solution exists and is unique in the chamber for every h > 0, but no
  closed form exists in general.  Strategy: single-root systems solve a
  scalar quadratic; otherwise run the truncated fixed point at
  eps0 = sqrt(2 h L) and accept when the truncation was provably inactive;
  remaining cases fall back to a damped Newton method with a chamber-keeping
  line search.

All kernels are batched over rows, and every row's result depends only on
that row's data (converged rows are frozen, never re-updated), so batching
is a pure performance knob: per-instance and batched calls agree bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeff import DriftSpec, _as_spec
from .errors import ContractViolationError, ConvergenceFailureError, InvalidParameterError
from .rootsys import RootSystem

DEFAULT_TOL = 1e-12
DEFAULT_FIXED_POINT_MAX_ITER = 200
DEFAULT_NEWTON_MAX_ITER = 50

_LINE_SEARCH_HALVINGS = 60
_ARMIJO = 1e-4


@dataclass(frozen=True)
class SolveResult:
    """Outcome of one implicit-step solve.

    residual is the Euclidean norm of y - a - h * drift(y) for the returned
    point; method records which stage produced it.
    """

    y: np.ndarray
    iterations: int
    residual: float
    method: str  # "closed_form" | "fixed_point" | "continuation_newton"
    history: list[np.ndarray] | None = None


def _check_contraction(rs: RootSystem, h: float, eps: float) -> float:
    """Validate h < eps^2 / L and return the contraction ratio L h / eps^2."""
    if h <= 0.0:
        raise InvalidParameterError("step size h must be positive")
    if eps <= 0.0:
        raise InvalidParameterError("truncation parameter eps must be positive")
    lips = rs.lipschitz_scale
    ratio = lips * h / (eps * eps)
    if ratio >= 1.0:
        raise ContractViolationError(
            f"step size violates the contraction condition h < eps^2/L: "
            f"h={h}, eps={eps}, L={lips} (ratio {ratio:.6g} >= 1)"
        )
    return ratio


def iteration_error_bound(rs: RootSystem, h: float, eps: float, n_iter: int) -> float:
    """A-priori bound on |y* - y_n| for the truncated fixed point started at
    the step input: (sum_a k|a| / (L (1 - L h/eps^2))) * eps * (L h/eps^2)^n."""
    if n_iter < 0:
        raise InvalidParameterError("n_iter must be nonnegative")
    ratio = _check_contraction(rs, h, eps)
    lips = rs.lipschitz_scale
    if lips == 0.0:
        return 0.0
    weight_sum = float(np.sum(rs.multiplicities * np.sqrt(rs.root_square_norms)))
    return weight_sum / (lips * (1.0 - ratio)) * eps * ratio ** n_iter


# ---------------------------------------------------------------------------
# batched kernels
# ---------------------------------------------------------------------------


def _drift_eval(roots: np.ndarray, mults: np.ndarray, y: np.ndarray,
                eps: float | None) -> np.ndarray:
    """Batched drift: truncated when eps is given, raw reciprocal otherwise.

    The raw form may divide by nonpositive gaps; callers mask such rows.
    """
    gaps = np.einsum("nd,md->nm", y, roots)
    if eps is not None:
        gaps = np.maximum(gaps, eps)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        weights = mults / gaps
        return np.einsum("nm,md->nd", weights, roots)


def _residual_norms(roots, mults, y, a, h, eps) -> np.ndarray:
    f = _drift_eval(roots, mults, y, eps)
    r = y - a - h * f
    return np.sqrt(np.einsum("nd,nd->n", r, r))


def _fixed_point_batch(rs: RootSystem, a: np.ndarray, h: float, eps: float,
                       tol: float, max_iter: int,
                       history: list | None = None):
    """Iterate y <- a + h * truncated_drift(y) from y0 = a, freezing each row
    at its first iterate whose update step is within tol.

    Returns (y, iterations, residuals, converged_mask).
    """
    roots = rs.positive_roots
    mults = rs.multiplicities
    n = a.shape[0]
    y = a.copy()
    iters = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    if history is not None:
        history.append(y.copy())
    for _ in range(max_iter):
        f = _drift_eval(roots, mults, y, eps)
        y_next = a + h * f
        step = np.sqrt(np.einsum("nd,nd->n", y_next - y, y_next - y))
        y = np.where(active[:, None], y_next, y)
        iters[active] += 1
        if history is not None:
            history.append(y.copy())
        active &= ~(step <= tol)
        if not active.any():
            break
    residuals = _residual_norms(roots, mults, y, a, h, eps)
    return y, iters, residuals, ~active


def _closed_form_single_root(alpha: np.ndarray, k: float, a: np.ndarray,
                             h: float) -> np.ndarray:
    """Exact chamber solution when a single root carries positive weight.

    Projecting on alpha gives the scalar quadratic z^2 - <alpha,a> z = h k |alpha|^2
    whose positive branch is the chamber solution; the orthogonal complement
    of a is untouched.
    """
    norm_sq = float(alpha @ alpha)
    za = a @ alpha
    c = h * k * norm_sq
    disc = np.sqrt(za * za + 4.0 * c)
    # positive branch, in the cancellation-safe form on each sign of za
    z = np.where(za >= 0.0, 0.5 * (za + disc), 2.0 * c / (disc - za))
    # rebuild from the alpha-orthogonal part so y carries z's full precision
    a_perp = a - (za / norm_sq)[:, None] * alpha
    return a_perp + (z / norm_sq)[:, None] * alpha


def _newton_batch(rs: RootSystem, a: np.ndarray, y0: np.ndarray, h: float,
                  tol: float, max_iter: int):
    """Damped Newton on F(y) = y - a - h * drift(y) over the positive-weight
    roots, with a backtracking line search that keeps every iterate strictly
    inside the chamber (margin 1e-3 of the current wall clearance)."""
    eff = rs.multiplicities > 0.0
    roots = rs.positive_roots[eff]
    mults = rs.multiplicities[eff]
    n, d = a.shape
    eye = np.eye(d)

    y = y0.copy()
    fvec = y - a - h * _drift_eval(roots, mults, y, None)
    fnorm = np.sqrt(np.einsum("nd,nd->n", fvec, fvec))
    iters = np.zeros(n, dtype=np.int64)
    converged = fnorm <= tol
    dead = np.zeros(n, dtype=bool)

    for _ in range(max_iter):
        act = ~converged & ~dead
        if not act.any():
            break
        gaps = np.einsum("nd,md->nm", y, roots)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            w = mults / (gaps * gaps)
        jac = eye[None, :, :] + h * np.einsum("nm,mi,mj->nij", w, roots, roots)
        direction = np.linalg.solve(jac, -fvec[..., None])[..., 0]

        margin = 1e-3 * np.min(gaps, axis=1)
        tau = np.ones(n)
        accepted = np.zeros(n, dtype=bool)
        y_acc = y.copy()
        f_acc = fvec.copy()
        fn_acc = fnorm.copy()
        for _ in range(_LINE_SEARCH_HALVINGS):
            trying = act & ~accepted
            if not trying.any():
                break
            trial = y + tau[:, None] * direction
            tgaps = np.einsum("nd,md->nm", trial, roots)
            feasible = np.min(tgaps, axis=1) > margin
            ftrial = trial - a - h * _drift_eval(roots, mults, trial, None)
            with np.errstate(invalid="ignore"):
                fn_trial = np.sqrt(np.einsum("nd,nd->n", ftrial, ftrial))
                good = trying & feasible & (fn_trial <= (1.0 - _ARMIJO * tau) * fnorm)
            y_acc = np.where(good[:, None], trial, y_acc)
            f_acc = np.where(good[:, None], ftrial, f_acc)
            fn_acc = np.where(good, fn_trial, fn_acc)
            accepted |= good
            tau = np.where(trying & ~accepted, tau * 0.5, tau)
        stalled = act & ~accepted
        dead |= stalled
        moved = act & accepted
        y = np.where(moved[:, None], y_acc, y)
        fvec = np.where(moved[:, None], f_acc, fvec)
        fnorm = np.where(moved, fn_acc, fnorm)
        iters[moved] += 1
        converged = fnorm <= tol

    return y, iters, fnorm, converged


def _solve_exact_batch(rs: RootSystem, a: np.ndarray, h: float, tol: float,
                       max_fixed_iter: int, max_newton_iter: int):
    """Batched chamber-valued solve of y = a + h * drift(y).

    Returns (y, iterations, residuals, method_codes, converged_mask) with
    method codes 0 = closed_form, 1 = fixed_point, 2 = continuation_newton.
    """
    if h <= 0.0:
        raise InvalidParameterError("step size h must be positive")
    n = a.shape[0]
    eff = rs.multiplicities > 0.0
    n_eff = int(np.count_nonzero(eff))

    if n_eff == 0:
        # drift vanishes identically: the equation is y = a
        zeros = np.zeros(n)
        return a.copy(), np.zeros(n, dtype=np.int64), zeros, np.zeros(n, dtype=np.int64), \
            np.ones(n, dtype=bool)

    if n_eff == 1:
        idx = int(np.argmax(eff))
        y = _closed_form_single_root(rs.positive_roots[idx], float(rs.multiplicities[idx]), a, h)
        res = _residual_norms(rs.positive_roots[eff], rs.multiplicities[eff], y, a, h, None)
        return y, np.zeros(n, dtype=np.int64), res, np.zeros(n, dtype=np.int64), res <= tol

    roots_eff = rs.positive_roots[eff]
    mults_eff = rs.multiplicities[eff]

    eps0 = np.sqrt(2.0 * h * rs.lipschitz_scale)
    y, iters, _, fp_ok = _fixed_point_batch(rs, a, h, eps0, tol, max_fixed_iter)
    clearance = np.min(np.einsum("nd,md->nm", y, roots_eff), axis=1)
    exact = fp_ok & (clearance > eps0)
    method = np.ones(n, dtype=np.int64)
    ok = exact.copy()

    need_newton = ~exact
    if need_newton.any():
        sub = np.flatnonzero(need_newton)
        # project the truncated iterate to wall clearance eps0/2 along the witness
        y_sub = y[sub]
        gaps = np.einsum("nd,md->nm", y_sub, roots_eff)
        wgaps = roots_eff @ rs.witness
        shift = np.max((0.5 * eps0 - gaps) / wgaps[None, :], axis=1)
        y_start = y_sub + np.maximum(shift, 0.0)[:, None] * rs.witness
        y_n, it_n, _, ok_n = _newton_batch(rs, a[sub], y_start, h, tol, max_newton_iter)
        y[sub] = y_n
        iters[sub] += it_n
        method[sub] = 2
        ok[sub] = ok_n

    res = _residual_norms(roots_eff, mults_eff, y, a, h, None)
    return y, iters, res, method, ok


# ---------------------------------------------------------------------------
# single-instance API
# ---------------------------------------------------------------------------

_METHOD_NAMES = {0: "closed_form", 1: "fixed_point", 2: "continuation_newton"}


def solve_truncated(spec_or_rs, x: np.ndarray, h: float, eps: float,
                    tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_FIXED_POINT_MAX_ITER,
                    keep_history: bool = False) -> SolveResult:
    """Solve y = x + h * truncated_drift(y) by the contractive fixed point.

    Requires h < eps^2 / L strictly; the iteration starts at x and each
    iterate stays within the geometric a-priori bound of
    `iteration_error_bound`.
    """
    spec = _as_spec(spec_or_rs)
    rs = spec.rs
    if tol <= 0.0:
        raise InvalidParameterError("tol must be positive")
    _check_contraction(rs, h, eps)
    a = np.asarray(x, dtype=float).reshape(1, -1)
    if a.shape[1] != rs.dim:
        raise InvalidParameterError("dimension mismatch between x and the root system")
    history: list | None = [] if keep_history else None
    y, iters, res, okmask = _fixed_point_batch(rs, a, h, eps, tol, max_iter, history)
    if not okmask[0]:
        raise ConvergenceFailureError(
            f"fixed point failed to reach tol={tol} in {max_iter} iterations",
            last_iterate=y[0].copy(), residual=float(res[0]), iterations=int(iters[0]),
        )
    hist = [row[0].copy() for row in history] if history is not None else None
    return SolveResult(y=y[0].copy(), iterations=int(iters[0]), residual=float(res[0]),
                       method="fixed_point", history=hist)


def solve_exact(spec_or_rs, x: np.ndarray, h: float,
                tol: float = DEFAULT_TOL,
                max_fixed_iter: int = DEFAULT_FIXED_POINT_MAX_ITER,
                max_newton_iter: int = DEFAULT_NEWTON_MAX_ITER) -> SolveResult:
    """Solve the chamber-valued equation y = x + h * singular_drift(y).

    The solution is unique in the chamber for every h > 0.  The returned
    point is strictly inside the chamber (over the roots carrying positive
    multiplicity) with residual at most tol.

    The residual is evaluated in double precision, so its attainable floor
    is roughly machine epsilon * |y| * (1 + h * sum k|a|^2/<a,y>^2).  Inputs
    deep outside the chamber with small h push the solution so close to a
    wall that this floor can exceed a tight tol, in which case the solve
    fails honestly rather than report an unverifiable residual; pass a
    larger tol for such inputs.  Step inputs arising from the schemes
    themselves stay far from this regime.
    """
    spec = _as_spec(spec_or_rs)
    rs = spec.rs
    if tol <= 0.0:
        raise InvalidParameterError("tol must be positive")
    a = np.asarray(x, dtype=float).reshape(1, -1)
    if a.shape[1] != rs.dim:
        raise InvalidParameterError("dimension mismatch between x and the root system")
    y, iters, res, method, okmask = _solve_exact_batch(
        rs, a, h, tol, max_fixed_iter, max_newton_iter)
    if not okmask[0]:
        raise ConvergenceFailureError(
            f"implicit chamber step failed: residual {res[0]:.3e} after "
            f"{iters[0]} iterations (method {_METHOD_NAMES[int(method[0])]})",
            last_iterate=y[0].copy(), residual=float(res[0]), iterations=int(iters[0]),
        )
    return SolveResult(y=y[0].copy(), iterations=int(iters[0]), residual=float(res[0]),
                       method=_METHOD_NAMES[int(method[0])])
