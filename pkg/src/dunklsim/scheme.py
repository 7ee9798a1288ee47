"""Time-stepping engines on uniform grids with exogenous Brownian increments.

Two variants:

* semi_implicit - each step solves the chamber-valued implicit equation
  y = x + dB + (singular_drift(y) + b(t, x)) dt, so every grid state stays
  strictly inside the Weyl chamber (for systems with positive multiplicity).
* truncated - the drift is replaced by its eps-truncation and the step is
  solved by the contractive fixed point; states may leave the chamber, and
  the step size must satisfy dt < eps^2 / L.

The extra drift b is evaluated explicitly at the left endpoint (t_prev,
x_prev) while the singular part is implicit in the right state; mixing these
conventions would change the scheme being analysed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from .coeff import DriftSpec
from .errors import ConfigurationError, ConvergenceFailureError, InvalidParameterError
from .rootsys import RootSystem, in_chamber
from . import solver as _solver

_VARIANTS = ("semi_implicit", "truncated")


@dataclass(frozen=True)
class EpsRule:
    """Truncation-parameter rule: fixed value, or scaled with the grid as
    eps = sqrt(c * L * dt) for c > 1, which makes the contraction condition
    dt < eps^2 / L hold automatically with ratio 1/c."""

    kind: str  # "fixed" | "scaled"
    value: float

    @staticmethod
    def fixed(eps: float) -> "EpsRule":
        if eps <= 0.0:
            raise InvalidParameterError("fixed eps must be positive")
        return EpsRule("fixed", float(eps))

    @staticmethod
    def scaled(c: float = 2.0) -> "EpsRule":
        if c <= 1.0:
            raise InvalidParameterError("scaled eps rule needs c > 1")
        return EpsRule("scaled", float(c))

    def epsilon(self, rs: RootSystem, dt: float) -> float:
        if self.kind == "fixed":
            return self.value
        lips = rs.lipschitz_scale
        if lips == 0.0:
            # drift vanishes identically; any positive value works
            return 1.0
        return sqrt(self.value * lips * dt)


@dataclass(frozen=True)
class SchemeConfig:
    variant: str
    n_steps: int
    horizon: float
    eps_rule: EpsRule = field(default_factory=lambda: EpsRule.scaled(2.0))
    solver_tol: float = _solver.DEFAULT_TOL
    initial_margin: float = 0.0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ConfigurationError(f"unknown scheme variant {self.variant!r}")
        if self.n_steps < 1:
            raise ConfigurationError("n_steps must be >= 1: no scheme is defined on an empty grid")
        if self.horizon <= 0.0:
            raise ConfigurationError("horizon must be positive")
        if self.solver_tol <= 0.0:
            raise ConfigurationError("solver_tol must be positive")
        if self.initial_margin < 0.0:
            raise ConfigurationError("initial_margin must be nonnegative")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    def epsilon(self, rs: RootSystem) -> float:
        return self.eps_rule.epsilon(rs, self.dt)

    def validate_against(self, rs: RootSystem) -> None:
        """Re-check the numeric preconditions that involve the root system."""
        if self.variant == "truncated":
            eps = self.epsilon(rs)
            lips = rs.lipschitz_scale
            if lips > 0.0 and self.dt * lips >= eps * eps:
                raise ConfigurationError(
                    "truncated scheme requires h in (0, eps^2/L_k): "
                    f"dt={self.dt}, eps={eps}, L={lips}"
                )


@dataclass(frozen=True)
class Path:
    """One realization on a uniform grid: times (n+1,), states (n+1, d)."""

    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times.setflags(write=False)
        self.states.setflags(write=False)

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def terminal(self) -> np.ndarray:
        return self.states[-1]


def path_to_csv(path: Path, fh) -> None:
    """Write `t,x1,...,xd` rows at full double precision (17 significant digits)."""
    d = path.dim
    header = "t," + ",".join(f"x{i + 1}" for i in range(d))
    fh.write(header + "\n")
    for t, row in zip(path.times, path.states):
        fh.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")


def path_to_csv_string(path: Path) -> str:
    buf = io.StringIO()
    path_to_csv(path, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------


class _BatchStepper:
    """Advances a batch of states by one grid step; rows are independent.

    Accumulates solver statistics.  Solver failures raise
    ConvergenceFailureError carrying the failing row and step index.
    """

    def __init__(self, spec: DriftSpec, variant: str, dt: float, eps: float | None,
                 tol: float):
        self.spec = spec
        self.rs = spec.rs
        self.variant = variant
        self.dt = dt
        self.eps = eps
        self.tol = tol
        self.iterations_total = 0
        self.iterations_max = 0
        self.newton_rows = 0
        if variant == "truncated":
            _solver._check_contraction(self.rs, dt, eps)

    def step(self, states: np.ndarray, d_brownian: np.ndarray, t_prev: float,
             step_index: int) -> np.ndarray:
        a = states + d_brownian
        if self.spec.extra_drift is not None:
            a = a + self.dt * self.spec.extra_drift(t_prev, states)
        if self.variant == "semi_implicit":
            y, iters, res, method, ok = _solver._solve_exact_batch(
                self.rs, a, self.dt, self.tol,
                _solver.DEFAULT_FIXED_POINT_MAX_ITER, _solver.DEFAULT_NEWTON_MAX_ITER)
            self.newton_rows += int(np.count_nonzero(method == 2))
        else:
            y, iters, res, ok = _solver._fixed_point_batch(
                self.rs, a, self.dt, self.eps, self.tol,
                _solver.DEFAULT_FIXED_POINT_MAX_ITER)
        if not ok.all():
            row = int(np.flatnonzero(~ok)[0])
            raise ConvergenceFailureError(
                f"solver failed at step {step_index}, batch row {row} "
                f"(residual {res[row]:.3e})",
                last_iterate=y[row].copy(), residual=float(res[row]),
                iterations=int(iters[row]), path_index=row, step_index=step_index,
            )
        self.iterations_total += int(np.sum(iters))
        self.iterations_max = max(self.iterations_max, int(np.max(iters)))
        return y

    def stats(self) -> dict:
        return {
            "solver_iterations_total": self.iterations_total,
            "solver_iterations_max": self.iterations_max,
            "newton_rows": self.newton_rows,
        }


def step_semi_implicit(spec_or_rs, x_prev, d_brownian, t_prev: float, dt: float,
                       tol: float = _solver.DEFAULT_TOL) -> np.ndarray:
    """One chamber-valued implicit step from x_prev with increment d_brownian."""
    spec = spec_or_rs if isinstance(spec_or_rs, DriftSpec) else DriftSpec(rs=spec_or_rs)
    stepper = _BatchStepper(spec, "semi_implicit", dt, None, tol)
    x = np.asarray(x_prev, dtype=float).reshape(1, -1)
    db = np.asarray(d_brownian, dtype=float).reshape(1, -1)
    return stepper.step(x, db, t_prev, 0)[0]


def step_truncated(spec_or_rs, x_prev, d_brownian, t_prev: float, dt: float,
                   eps: float, tol: float = _solver.DEFAULT_TOL) -> np.ndarray:
    """One truncated implicit step; requires dt < eps^2 / L."""
    spec = spec_or_rs if isinstance(spec_or_rs, DriftSpec) else DriftSpec(rs=spec_or_rs)
    stepper = _BatchStepper(spec, "truncated", dt, eps, tol)
    x = np.asarray(x_prev, dtype=float).reshape(1, -1)
    db = np.asarray(d_brownian, dtype=float).reshape(1, -1)
    return stepper.step(x, db, t_prev, 0)[0]


def _validate_start(model, config: SchemeConfig,
                    enforce_truncation_clearance: bool = True,
                    ) -> tuple[np.ndarray, float | None]:
    """Numeric preconditions shared by path simulation and the studies.

    The requirement eps < min_a <a, x(0)> mirrors the convergence theorem's
    hypothesis for the truncated scheme and is enforced for single-path
    simulation; rate studies deliberately skip it (the scheme itself is well
    posed whenever the contraction condition holds, and measuring behaviour
    outside the theorem's hypotheses is part of their job).
    """
    rs = model.drift_spec.rs
    config.validate_against(rs)
    x0 = np.asarray(model.x0, dtype=float)
    if x0.shape != (rs.dim,):
        raise ConfigurationError(
            f"initial condition has shape {x0.shape}, expected ({rs.dim},)")
    if not in_chamber(rs, x0, config.initial_margin):
        raise ConfigurationError(
            "initial condition must lie strictly inside the chamber "
            f"with margin {config.initial_margin}")
    eps = None
    if config.variant == "truncated":
        eps = config.epsilon(rs)
        if enforce_truncation_clearance and rs.wall_clearance(x0) <= eps:
            raise ConfigurationError(
                "truncated scheme requires eps < min_a <a, x(0)>: "
                f"eps={eps}, clearance={rs.wall_clearance(x0)}")
    return x0, eps


def simulate_path(model, config: SchemeConfig, increments: np.ndarray) -> Path:
    """Run the configured stepper over the given Brownian increments.

    increments must have shape (n_steps, d).  The result holds the n_steps+1
    grid states, starting from the model's initial condition.
    """
    x0, eps = _validate_start(model, config)
    rs = model.drift_spec.rs
    increments = np.asarray(increments, dtype=float)
    if increments.shape != (config.n_steps, rs.dim):
        raise ConfigurationError(
            f"increments have shape {increments.shape}, expected "
            f"({config.n_steps}, {rs.dim})")

    dt = config.dt
    stepper = _BatchStepper(model.drift_spec, config.variant, dt, eps, config.solver_tol)
    states = np.empty((config.n_steps + 1, rs.dim))
    states[0] = x0
    current = x0.reshape(1, -1).copy()
    for ell in range(config.n_steps):
        try:
            current = stepper.step(current, increments[ell].reshape(1, -1), ell * dt, ell)
        except ConvergenceFailureError as exc:
            raise ConvergenceFailureError(
                f"path aborted at step {ell}: {exc}", last_iterate=exc.last_iterate,
                residual=exc.residual, iterations=exc.iterations, step_index=ell,
            ) from exc
        states[ell + 1] = current[0]
    times = np.arange(config.n_steps + 1) * dt
    meta = stepper.stats()
    meta["variant"] = config.variant
    if eps is not None:
        meta["eps"] = eps
    return Path(times=times, states=states, meta=meta)
