"""Monte Carlo engine: coupled-resolution strong-error studies, log-log rate
fitting, change-of-measure (reweighted) expectations, and moment scans.

Randomness contract
-------------------
All drivers draw from a `BrownianLattice`: a counter-based construction in
which path m's fine increments are produced by a Philox generator keyed by
(seed, m).  Each path's variates are therefore a pure function of
(seed, path index, step index, coordinate) at a fixed lattice shape,
independent of batching, thread count, or evaluation order.  Coarse
increments at a resolution n dividing the fine one are *defined* as the
per-cell sums of fine increments, so the coupling between resolutions is
exact by construction.

Work is processed in fixed-size path chunks; worker threads write each
path's results into its own slot and the reduction runs in fixed order, so
reports are bit-identical for any thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats as _scipy_stats

from .errors import (ConfigurationError, ConvergenceFailureError,
                     InvalidParameterError, OutsideChamberError)
from .rootsys import RootSystem, with_multiplicities
from .coeff import DriftSpec
from .models import ModelSpec
from .scheme import EpsRule, Path, SchemeConfig, _BatchStepper, _validate_start

# Fixed batch width for chunked drivers; a pure performance knob that does
# not affect any output bit.
CHUNK_PATHS = 1024
# Fine steps generated per slab inside a chunk (caps memory); slabs read the
# per-path generator stream sequentially so slab size does not affect values.
_SLAB_STEPS = 256

_Z975 = float(_scipy_stats.norm.ppf(0.975))


@dataclass(frozen=True)
class BrownianLattice:
    """Coupled Brownian increments on a fine dyadic grid.

    seed is a 64-bit integer; path m uses a Philox generator keyed by
    (seed, m).  Coarse increments at any resolution dividing n_fine are the
    exact per-cell sums of the fine increments.
    """

    seed: int
    n_fine: int
    horizon: float
    dim: int

    def __post_init__(self):
        if not (0 <= self.seed < 2 ** 64):
            raise InvalidParameterError("seed must fit in 64 bits")
        if self.n_fine < 1 or (self.n_fine & (self.n_fine - 1)) != 0:
            raise InvalidParameterError("n_fine must be a power of two")
        if self.horizon <= 0.0:
            raise InvalidParameterError("horizon must be positive")
        if self.dim < 1:
            raise InvalidParameterError("dim must be positive")

    @property
    def dt_fine(self) -> float:
        return self.horizon / self.n_fine

    def generator(self, path_index: int) -> np.random.Generator:
        if path_index < 0 or path_index >= 2 ** 64:
            raise InvalidParameterError("path_index must fit in 64 bits")
        key = (int(self.seed) << 64) | int(path_index)
        return np.random.Generator(np.random.Philox(key=key))

    def fine_increments(self, path_index: int) -> np.ndarray:
        """All n_fine Gaussian increments of one path, shape (n_fine, dim)."""
        gen = self.generator(path_index)
        return gen.standard_normal((self.n_fine, self.dim)) * math.sqrt(self.dt_fine)

    def increments(self, path_index: int, n: int) -> np.ndarray:
        """Increments at a coarser resolution n | n_fine, shape (n, dim)."""
        fine = self.fine_increments(path_index)
        return coarsen_increments(fine, n)


def path_increments(seed: int, path_index: int, n_steps: int, horizon: float,
                    dim: int) -> np.ndarray:
    """Increments for one standalone path at resolution n_steps, using the
    same (seed, path_index) keying as the lattice.  When n_steps is a power
    of two this equals BrownianLattice(...).fine_increments(path_index)."""
    if n_steps < 1:
        raise InvalidParameterError("n_steps must be positive")
    key = (int(seed) << 64) | int(path_index)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.standard_normal((n_steps, dim)) * math.sqrt(horizon / n_steps)


def coarsen_increments(fine: np.ndarray, n: int) -> np.ndarray:
    """Per-cell sums of fine increments along the leading axis.

    This is the definitional coupling: each coarse increment is the
    sequential sum of its cell's fine increments.
    """
    n_fine = fine.shape[0]
    if n < 1 or n_fine % n != 0:
        raise InvalidParameterError(f"{n} does not divide the fine resolution {n_fine}")
    if n == n_fine:
        return fine.copy()
    starts = np.arange(0, n_fine, n_fine // n)
    return np.add.reduceat(fine, starts, axis=0)


def _cell_sum_slab(slab: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Sequential sum of slab[:, start:stop, :] along axis 1, matching
    `coarsen_increments` cell arithmetic bit-for-bit."""
    return np.add.reduceat(slab[:, start:stop, :], np.array([0]), axis=1)[:, 0, :]


def _run_chunks(total: int, worker, threads: int | None) -> None:
    """Dispatch worker(i0, i1) over fixed-size chunks; workers write into
    preallocated per-path slots, so scheduling cannot affect results."""
    spans = [(s, min(s + CHUNK_PATHS, total)) for s in range(0, total, CHUNK_PATHS)]
    if threads is None or threads <= 1 or len(spans) <= 1:
        for a, b in spans:
            worker(a, b)
        return
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        futures = [pool.submit(worker, a, b) for a, b in spans]
        for fut in futures:
            fut.result()


def _slab_spans(n_steps: int, slab: int):
    return [(s, min(s + slab, n_steps)) for s in range(0, n_steps, slab)]


def _draw_slab(gens: list, length: int, dim: int, sqrt_dt: float) -> np.ndarray:
    arr = np.empty((len(gens), length, dim))
    for i, g in enumerate(gens):
        arr[i] = g.standard_normal((length, dim))
    arr *= sqrt_dt
    return arr


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------


def fit_loglog_slope(n_values, errors, std_errors=None):
    """Least-squares fit of log(error) against log(n).

    Returns (slope, (lo, hi), intercept) where log(err) ~ intercept -
    slope * log(n); a decay like C n^{-1/2} therefore reports slope 0.5.
    When positive standard errors are supplied the fit is weighted by the
    inverse squared relative errors and the 95% interval uses those known
    variances; otherwise plain least squares with residual variance.
    """
    n_values = np.asarray(n_values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if n_values.shape != errors.shape or n_values.ndim != 1:
        raise InvalidParameterError("n_values and errors must be 1-d and aligned")
    if n_values.shape[0] < 2:
        raise InvalidParameterError("need at least two resolutions to fit a slope")
    if np.any(errors <= 0.0):
        raise InvalidParameterError("errors must be positive for a log-log fit")

    x = np.log(n_values)
    y = np.log(errors)
    known_variance = False
    if std_errors is not None:
        std_errors = np.asarray(std_errors, dtype=float)
        if np.all(std_errors > 0.0):
            sigma = std_errors / errors  # se of log(err), delta method
            weights = 1.0 / sigma ** 2
            known_variance = True
    if not known_variance:
        weights = np.ones_like(x)

    design = np.column_stack([np.ones_like(x), x])
    wd = design * weights[:, None]
    gram = design.T @ wd
    rhs = wd.T @ y
    beta = np.linalg.solve(gram, rhs)
    cov = np.linalg.inv(gram)
    if not known_variance:
        resid = y - design @ beta
        dof = x.shape[0] - 2
        s2 = float(resid @ resid) / dof if dof > 0 else 0.0
        cov = cov * s2
    slope = -float(beta[1])
    half = _Z975 * math.sqrt(max(float(cov[1, 1]), 0.0))
    return slope, (slope - half, slope + half), float(beta[0])


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-resolution strong errors with their Monte Carlo uncertainty and
    the fitted log-log rate."""

    label: str
    p: float
    n_values: tuple[int, ...]
    errors: np.ndarray
    std_errors: np.ndarray
    slope: float
    slope_ci: tuple[float, float]
    intercept: float

    def to_csv(self, fh) -> None:
        fh.write("n,p,error,std_error\n")
        for n, err, se in zip(self.n_values, self.errors, self.std_errors):
            fh.write(f"{n},{self.p:.17g},{err:.17g},{se:.17g}\n")

    def summary_dict(self) -> dict:
        return {
            "label": self.label,
            "p": self.p,
            "slope": self.slope,
            "slope_ci": [self.slope_ci[0], self.slope_ci[1]],
            "intercept": self.intercept,
        }


def _lp_mean_and_se(sup_values: np.ndarray, p: float) -> tuple[float, float]:
    """L^p Monte Carlo average of per-path sup errors with the delta-method
    standard error of the 1/p-th power of the p-th moment."""
    a = sup_values ** p
    mean_a = float(np.mean(a))
    se_a = float(np.std(a, ddof=1)) / math.sqrt(a.shape[0])
    if mean_a <= 0.0:
        return 0.0, 0.0
    err = mean_a ** (1.0 / p)
    se = se_a * mean_a ** (1.0 / p - 1.0) / p
    return err, se


# ---------------------------------------------------------------------------
# strong error study
# ---------------------------------------------------------------------------


def strong_error_study(
    model: ModelSpec,
    variant: str,
    n_values,
    n_ref: int,
    num_paths: int,
    p: float,
    seed: int,
    *,
    horizon: float = 1.0,
    eps_rule: EpsRule | None = None,
    solver_tol: float = 1e-12,
    threads: int | None = None,
    apply_transform: bool = True,
) -> ConvergenceReport:
    """Estimate E[sup over coarse grid points |X_ref - X^(n)|^p]^{1/p} per
    resolution on the coupled lattice and fit the log-log rate.

    The reference is the same scheme at n_ref (at least 8x the largest
    requested resolution); its own bias sits an order of magnitude below the
    measured errors.  Any path-level solver failure aborts the study with
    the offending path and step: silently dropping such paths would bias the
    near-wall statistics.
    """
    n_values = tuple(int(n) for n in n_values)
    n_ref = int(n_ref)
    if len(n_values) == 0:
        raise ConfigurationError("n_values must be non-empty")
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ConfigurationError("n_values must be strictly increasing")
    if n_ref < 1 or (n_ref & (n_ref - 1)) != 0:
        raise ConfigurationError("n_ref must be a power of two")
    for n in n_values:
        if n < 1 or n_ref % n != 0:
            raise ConfigurationError(f"every n must divide n_ref; got n={n}, n_ref={n_ref}")
    if n_ref // max(n_values) < 8:
        raise ConfigurationError("n_ref must be at least 8 times the largest resolution")
    if num_paths < 100:
        raise ConfigurationError("at least 100 paths are required")
    if p < 1.0:
        raise ConfigurationError("p must be at least 1")
    if eps_rule is None:
        eps_rule = EpsRule.scaled(2.0)

    configs = {n: SchemeConfig(variant, n, horizon, eps_rule, solver_tol)
               for n in (*n_values, n_ref)}
    for cfg in configs.values():
        # raises before any stepping; the theorem's eps-vs-clearance
        # hypothesis is not a well-posedness condition, so studies skip it
        _validate_start(model, cfg, enforce_truncation_clearance=False)

    rs = model.drift_spec.rs
    lattice = BrownianLattice(seed=seed, n_fine=n_ref, horizon=horizon, dim=rs.dim)
    transform = model.derived_transform if apply_transform else None

    sup_all = np.zeros((num_paths, len(n_values)))

    def worker(i0: int, i1: int) -> None:
        _study_chunk(model, configs, n_values, n_ref, lattice, i0, i1,
                     transform, sup_all)

    _run_chunks(num_paths, worker, threads)

    errors = np.empty(len(n_values))
    std_errors = np.empty(len(n_values))
    for q in range(len(n_values)):
        errors[q], std_errors[q] = _lp_mean_and_se(sup_all[:, q], p)
    if np.all(errors > 0.0):
        slope, slope_ci, intercept = fit_loglog_slope(n_values, errors, std_errors)
    else:
        # degenerate (e.g. zero drift, exact coupling): no rate to fit
        slope, slope_ci, intercept = float("nan"), (float("nan"), float("nan")), float("nan")
    return ConvergenceReport(label=model.label, p=float(p), n_values=n_values,
                             errors=errors, std_errors=std_errors, slope=slope,
                             slope_ci=slope_ci, intercept=intercept)


def _study_chunk(model, configs, n_values, n_ref, lattice, i0, i1, transform,
                 sup_all) -> None:
    rs = model.drift_spec.rs
    d = rs.dim
    c = i1 - i0
    dt_ref = configs[n_ref].dt
    ratios = [n_ref // n for n in n_values]
    slab = max(max(ratios), _SLAB_STEPS)
    slab = min(slab, n_ref)

    steppers = {}
    for n, cfg in configs.items():
        eps = cfg.epsilon(rs) if cfg.variant == "truncated" else None
        steppers[n] = _BatchStepper(model.drift_spec, cfg.variant, cfg.dt, eps,
                                    cfg.solver_tol)

    x0 = np.asarray(model.x0, dtype=float)
    state_ref = np.tile(x0, (c, 1))
    states = [np.tile(x0, (c, 1)) for _ in n_values]
    sup = np.zeros((c, len(n_values)))
    squared = transform == "square_components"

    gens = [lattice.generator(i) for i in range(i0, i1)]
    sqrt_dt = math.sqrt(dt_ref)
    for s0, s1 in _slab_spans(n_ref, slab):
        arr = _draw_slab(gens, s1 - s0, d, sqrt_dt)
        for j_local in range(s1 - s0):
            j = s0 + j_local
            state_ref = _checked_step(steppers[n_ref], state_ref, arr[:, j_local],
                                      j * dt_ref, j, i0)
            for q, n in enumerate(n_values):
                r = ratios[q]
                if (j + 1) % r != 0:
                    continue
                ell = (j + 1) // r  # coarse grid index just reached
                db = _cell_sum_slab(arr, j_local + 1 - r, j_local + 1)
                dt_n = configs[n].dt
                states[q] = _checked_step(steppers[n], states[q], db,
                                          (ell - 1) * dt_n, ell - 1, i0)
                a = np.square(states[q]) if squared else states[q]
                b = np.square(state_ref) if squared else state_ref
                diff = a - b
                dist = np.sqrt(np.einsum("nd,nd->n", diff, diff))
                np.maximum(sup[:, q], dist, out=sup[:, q])
    sup_all[i0:i1] = sup


def _checked_step(stepper, state, db, t_prev, step_index, path_offset):
    try:
        return stepper.step(state, db, t_prev, step_index)
    except ConvergenceFailureError as exc:
        raise ConvergenceFailureError(
            f"study aborted: solver failure on path {path_offset + exc.path_index} "
            f"at step {step_index}: {exc}",
            last_iterate=exc.last_iterate, residual=exc.residual,
            iterations=exc.iterations,
            path_index=path_offset + exc.path_index, step_index=step_index,
        ) from exc


# ---------------------------------------------------------------------------
# change of measure
# ---------------------------------------------------------------------------


def _nu_array(rs: RootSystem, nu) -> np.ndarray:
    arr = np.asarray(nu, dtype=float)
    if arr.ndim == 0:
        arr = np.full(rs.n_positive, float(arr))
    if arr.shape != (rs.n_positive,):
        raise InvalidParameterError(
            "nu must be a scalar or align with the positive roots by index")
    if rs.orbit_labels is not None:
        for lab in np.unique(rs.orbit_labels):
            vals = arr[rs.orbit_labels == lab]
            if np.max(vals) - np.min(vals) > 1e-9:
                raise InvalidParameterError(
                    "nu must be constant on each reflection orbit")
    return arr


def girsanov_weight(path: Path, rs: RootSystem, nu) -> float:
    """Change-of-measure weight relating the minimal-multiplicity process
    (all multiplicities 1/2) to the one with multiplicities nu + 1/2,
    evaluated along a simulated path of the former.

    The product factor uses the terminal and initial states; the clock
    integral of nu(a)^2 |a|^2 / <a, X(s)>^2 uses the left-endpoint rectangle
    rule on the path's own grid.
    """
    nu_arr = _nu_array(rs, nu)
    gaps = rs.root_gaps(path.states)  # (n+1, m)
    if np.any(gaps <= 0.0):
        raise OutsideChamberError("weight undefined: path leaves the chamber")
    log_gaps = np.log(gaps)
    log_prod = float(np.sum(nu_arr * (log_gaps[-1] - log_gaps[0])))
    dt = np.diff(path.times)
    integrand = np.sum((nu_arr ** 2 * rs.root_square_norms) / gaps[:-1] ** 2, axis=1)
    integral = float(dt @ integrand)
    return math.exp(log_prod - 0.5 * integral)


def _weights_batch(states: np.ndarray, times: np.ndarray, rs: RootSystem,
                   nu_arr: np.ndarray) -> np.ndarray:
    """girsanov_weight for a batch of paths, states (c, n+1, d)."""
    gaps = np.einsum("cnd,md->cnm", states, rs.positive_roots)
    if np.any(gaps <= 0.0):
        raise OutsideChamberError("weight undefined: some path leaves the chamber")
    log_gaps = np.log(gaps)
    log_prod = np.einsum("m,cm->c", nu_arr, log_gaps[:, -1, :] - log_gaps[:, 0, :])
    dt = np.diff(times)
    integrand = np.einsum("m,cnm->cn", nu_arr ** 2 * rs.root_square_norms,
                          1.0 / gaps[:, :-1, :] ** 2)
    integral = integrand @ dt
    return np.exp(log_prod - 0.5 * integral)


@dataclass(frozen=True)
class WeightedComparison:
    """Direct vs reweighted estimates of one path functional, plus the
    estimated mean of the weight itself (which targets exactly 1)."""

    direct_mean: float
    direct_se: float
    weighted_mean: float
    weighted_se: float
    z_mean: float
    z_se: float


def weighted_expectation(
    g,
    rs: RootSystem,
    nu,
    x0,
    num_paths: int,
    n: int,
    seed: int,
    *,
    horizon: float = 1.0,
    solver_tol: float = 1e-12,
    threads: int | None = None,
) -> WeightedComparison:
    """Estimate E[g] two ways on a shared increment lattice: directly under
    multiplicities nu + 1/2, and as E[g * Z] under multiplicities 1/2.

    g is a path functional g(times, states) -> float; it must be pure.
    Both simulations use the chamber-preserving scheme at resolution n.
    """
    nu_arr = _nu_array(rs, nu)
    if num_paths < 2:
        raise ConfigurationError("at least 2 paths are required")
    rs_direct = with_multiplicities(rs, nu_arr + 0.5)
    rs_base = with_multiplicities(rs, np.full(rs.n_positive, 0.5))
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    model_direct = ModelSpec(DriftSpec(rs=rs_direct), x0, "direct")
    model_base = ModelSpec(DriftSpec(rs=rs_base), x0, "base")
    config = SchemeConfig("semi_implicit", int(n), horizon, solver_tol=solver_tol)
    _validate_start(model_direct, config)
    _validate_start(model_base, config)

    lattice = BrownianLattice(seed=seed, n_fine=int(n), horizon=horizon, dim=rs.dim)
    direct_vals = np.empty(num_paths)
    weighted_vals = np.empty(num_paths)
    z_vals = np.empty(num_paths)
    times = np.arange(int(n) + 1) * config.dt

    def worker(i0: int, i1: int) -> None:
        states_direct = _simulate_chunk_states(model_direct, config, lattice, i0, i1)
        states_base = _simulate_chunk_states(model_base, config, lattice, i0, i1)
        z = _weights_batch(states_base, times, rs, nu_arr)
        z_vals[i0:i1] = z
        for m in range(i0, i1):
            direct_vals[m] = g(times, states_direct[m - i0])
            weighted_vals[m] = g(times, states_base[m - i0]) * z[m - i0]

    _run_chunks(num_paths, worker, threads)

    def mean_se(vals):
        return float(np.mean(vals)), float(np.std(vals, ddof=1)) / math.sqrt(len(vals))

    dm, dse = mean_se(direct_vals)
    wm, wse = mean_se(weighted_vals)
    zm, zse = mean_se(z_vals)
    return WeightedComparison(direct_mean=dm, direct_se=dse, weighted_mean=wm,
                              weighted_se=wse, z_mean=zm, z_se=zse)


def _simulate_chunk_states(model, config: SchemeConfig, lattice: BrownianLattice,
                           i0: int, i1: int) -> np.ndarray:
    """Simulate paths i0..i1 storing all grid states, shape (c, n+1, d)."""
    rs = model.drift_spec.rs
    c = i1 - i0
    n = config.n_steps
    eps = config.epsilon(rs) if config.variant == "truncated" else None
    stepper = _BatchStepper(model.drift_spec, config.variant, config.dt, eps,
                            config.solver_tol)
    out = np.empty((c, n + 1, rs.dim))
    out[:, 0, :] = np.asarray(model.x0, dtype=float)
    state = out[:, 0, :].copy()
    gens = [lattice.generator(i) for i in range(i0, i1)]
    sqrt_dt = math.sqrt(lattice.dt_fine)
    j = 0
    for s0, s1 in _slab_spans(n, _SLAB_STEPS):
        arr = _draw_slab(gens, s1 - s0, rs.dim, sqrt_dt)
        for j_local in range(s1 - s0):
            state = _checked_step(stepper, state, arr[:, j_local], j * config.dt, j, i0)
            out[:, j + 1, :] = state
            j += 1
    return out


# ---------------------------------------------------------------------------
# moment scans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentRow:
    """One estimate from a moment scan.

    kind is "sup_abs" (running maximum of |X| raised to q) or
    "inverse_terminal" (a terminal root gap raised to -q, per root).
    in_window_terminal / in_window_sup flag whether q sits inside the
    regimes where the corresponding inverse moments are provably finite
    (q <= index(a), respectively 2 <= q <= min index / 3).  The heavy-tail
    flag marks estimates whose top decile carries over half of the mean.
    """

    kind: str
    q: float
    root_index: int | None
    estimate: float
    std_error: float
    in_window_terminal: bool
    in_window_sup: bool
    heavy_tail_flag: bool


def _heavy_tail(vals: np.ndarray) -> bool:
    total = float(np.sum(vals))
    if total <= 0.0:
        return False
    k_top = max(1, math.ceil(0.1 * vals.shape[0]))
    top = float(np.sum(np.sort(vals)[::-1][:k_top]))
    return top > 0.5 * total


def moment_scan(
    model: ModelSpec,
    q_list,
    num_paths: int,
    n: int,
    seed: int,
    *,
    horizon: float = 1.0,
    solver_tol: float = 1e-12,
    threads: int | None = None,
) -> list[MomentRow]:
    """Estimate E[sup over the grid of |X|^q] and, per positive root a,
    E[<a, X(T)>^{-q}], with standard errors and stability flags."""
    q_list = [float(q) for q in q_list]
    if any(q < 0 for q in q_list):
        raise ConfigurationError("moment exponents must be nonnegative")
    config = SchemeConfig("semi_implicit", int(n), horizon, solver_tol=solver_tol)
    _validate_start(model, config)
    rs = model.drift_spec.rs
    lattice = BrownianLattice(seed=seed, n_fine=int(n), horizon=horizon, dim=rs.dim)

    sup_norm = np.empty(num_paths)
    terminal_gaps = np.empty((num_paths, rs.n_positive))

    def worker(i0: int, i1: int) -> None:
        c = i1 - i0
        stepper = _BatchStepper(model.drift_spec, config.variant, config.dt, None,
                                config.solver_tol)
        state = np.tile(np.asarray(model.x0, dtype=float), (c, 1))
        running = np.sqrt(np.einsum("nd,nd->n", state, state))
        gens = [lattice.generator(i) for i in range(i0, i1)]
        sqrt_dt = math.sqrt(lattice.dt_fine)
        j = 0
        for s0, s1 in _slab_spans(int(n), _SLAB_STEPS):
            arr = _draw_slab(gens, s1 - s0, rs.dim, sqrt_dt)
            for j_local in range(s1 - s0):
                state = _checked_step(stepper, state, arr[:, j_local],
                                      j * config.dt, j, i0)
                np.maximum(running, np.sqrt(np.einsum("nd,nd->n", state, state)),
                           out=running)
                j += 1
        sup_norm[i0:i1] = running
        terminal_gaps[i0:i1] = np.einsum("nd,md->nm", state, rs.positive_roots)

    _run_chunks(num_paths, worker, threads)

    indices = rs.indices
    min_index = rs.min_index
    rows: list[MomentRow] = []
    root_m = math.sqrt(num_paths)
    for q in q_list:
        vals = sup_norm ** q
        rows.append(MomentRow(
            kind="sup_abs", q=q, root_index=None,
            estimate=float(np.mean(vals)),
            std_error=float(np.std(vals, ddof=1)) / root_m,
            in_window_terminal=True, in_window_sup=True,
            heavy_tail_flag=_heavy_tail(vals),
        ))
        for j in range(rs.n_positive):
            vals = terminal_gaps[:, j] ** (-q) if q > 0 else np.ones(num_paths)
            rows.append(MomentRow(
                kind="inverse_terminal", q=q, root_index=j,
                estimate=float(np.mean(vals)),
                std_error=float(np.std(vals, ddof=1)) / root_m,
                in_window_terminal=bool(0.0 < q <= indices[j]) if q > 0 else True,
                in_window_sup=bool(2.0 <= q <= min_index / 3.0),
                heavy_tail_flag=_heavy_tail(vals),
            ))
    return rows


# ---------------------------------------------------------------------------
# scheme-variant discrepancy
# ---------------------------------------------------------------------------


def variant_discrepancy(
    model: ModelSpec,
    n: int,
    num_paths: int,
    p: float,
    seed: int,
    *,
    horizon: float = 1.0,
    eps_rule: EpsRule | None = None,
    solver_tol: float = 1e-12,
    threads: int | None = None,
) -> tuple[float, float]:
    """L^p distance between the terminal states of the chamber-preserving and
    truncated schemes driven by the same increments at resolution n."""
    if eps_rule is None:
        eps_rule = EpsRule.scaled(2.0)
    cfg_semi = SchemeConfig("semi_implicit", int(n), horizon, solver_tol=solver_tol)
    cfg_trunc = SchemeConfig("truncated", int(n), horizon, eps_rule, solver_tol)
    _validate_start(model, cfg_semi)
    _validate_start(model, cfg_trunc, enforce_truncation_clearance=False)
    rs = model.drift_spec.rs
    lattice = BrownianLattice(seed=seed, n_fine=int(n), horizon=horizon, dim=rs.dim)
    diffs = np.empty(num_paths)

    def worker(i0: int, i1: int) -> None:
        a = _simulate_chunk_states(model, cfg_semi, lattice, i0, i1)[:, -1, :]
        b = _simulate_chunk_states(model, cfg_trunc, lattice, i0, i1)[:, -1, :]
        if model.derived_transform == "square_components":
            a, b = np.square(a), np.square(b)
        delta = a - b
        diffs[i0:i1] = np.sqrt(np.einsum("nd,nd->n", delta, delta))

    _run_chunks(num_paths, worker, threads)
    return _lp_mean_and_se(diffs, float(p))
