"""Drift coefficients: the singular chamber drift, its truncation, and the
library of bounded extra drifts.

The singular drift sum_a k(a) a / <a, x> blows up on the chamber walls; its
truncation replaces each reciprocal 1/u by 1/max(u, eps), which is globally
Lipschitz and defined on all of R^d.  Extra drifts b(t, x) are bounded
corrections carrying their own declared bound/Lipschitz constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidParameterError, OutsideChamberError
from .rootsys import RootSystem

# Below this argument the direct formula coth(u) - 1/u cancels
# catastrophically; the odd series is exact to 1e-14 there.
_COTH_SERIES_CUTOFF = 1e-2


@dataclass(frozen=True)
class BoundedDrift:
    """A bounded extra drift b(t, x) with declared global properties.

    The declared bound and Lipschitz constant cannot be inferred from a
    callback, so callers must supply them; tests spot-check the bound on
    random inputs but the values are otherwise trusted.

    smoothness is one of "measurable", "lipschitz_holder" (Lipschitz in
    space, 1/2-Hoelder in time) or "c12_bounded" (C^{1,2} with bounded
    derivatives); it records which convergence-theorem hypothesis the drift
    satisfies.
    """

    kind: str
    fn: Callable[[float, np.ndarray], np.ndarray]
    declared_bound: float
    declared_lipschitz: float
    smoothness: str = "lipschitz_holder"

    _KINDS = ("none", "constant", "heckman_opdam", "user_callback")
    _SMOOTHNESS = ("measurable", "lipschitz_holder", "c12_bounded")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise InvalidParameterError(f"unknown drift kind {self.kind!r}")
        if self.smoothness not in self._SMOOTHNESS:
            raise InvalidParameterError(f"unknown smoothness class {self.smoothness!r}")
        if self.declared_bound < 0.0 or self.declared_lipschitz < 0.0:
            raise InvalidParameterError("declared bound and Lipschitz constant must be >= 0")

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.fn(t, x)


def no_drift(dim: int) -> BoundedDrift:
    """The zero extra drift."""
    zero = np.zeros(dim)

    def fn(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(zero, x.shape).copy()

    return BoundedDrift(kind="none", fn=fn, declared_bound=0.0,
                        declared_lipschitz=0.0, smoothness="c12_bounded")


def constant_drift(vector) -> BoundedDrift:
    """A constant extra drift."""
    v = np.asarray(vector, dtype=float).reshape(-1)

    def fn(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(v, x.shape).copy()

    return BoundedDrift(kind="constant", fn=fn, declared_bound=float(np.linalg.norm(v)),
                        declared_lipschitz=0.0, smoothness="c12_bounded")


def callback_drift(fn: Callable[[float, np.ndarray], np.ndarray],
                   declared_bound: float,
                   declared_lipschitz: float,
                   smoothness: str = "lipschitz_holder") -> BoundedDrift:
    """Wrap a user callback.  The callback must be pure and safe to call
    concurrently, and must accept batched points (leading axes)."""
    return BoundedDrift(kind="user_callback", fn=fn, declared_bound=float(declared_bound),
                        declared_lipschitz=float(declared_lipschitz), smoothness=smoothness)


@dataclass(frozen=True)
class DriftSpec:
    """A root system together with an optional bounded extra drift."""

    rs: RootSystem
    extra_drift: BoundedDrift | None = None

    def extra(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.extra_drift is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        return self.extra_drift(t, x)


def _as_spec(spec_or_rs) -> DriftSpec:
    if isinstance(spec_or_rs, RootSystem):
        return DriftSpec(rs=spec_or_rs)
    return spec_or_rs


def singular_drift(spec_or_rs, x: np.ndarray) -> np.ndarray:
    """Evaluate sum_a k(a) a / <a, x> strictly inside the chamber.

    Points on or outside the chamber raise; callers that must handle wall
    contact use the truncated drift instead.  Batched points are supported
    in the leading axes.
    """
    spec = _as_spec(spec_or_rs)
    rs = spec.rs
    gaps = rs.root_gaps(x)
    if np.any(gaps <= 0.0):
        raise OutsideChamberError(
            "singular drift undefined: some root inner product <a, x> <= 0"
        )
    weights = rs.multiplicities / gaps
    return np.einsum("...m,md->...d", weights, rs.positive_roots)


def truncated_reciprocal(x, eps: float):
    """1 / max(x, eps): positive, nonincreasing, globally (1/eps^2)-Lipschitz."""
    if eps <= 0.0:
        raise InvalidParameterError("truncation parameter eps must be positive")
    return 1.0 / np.maximum(np.asarray(x, dtype=float), eps)


def truncated_drift(spec_or_rs, x: np.ndarray, eps: float) -> np.ndarray:
    """Evaluate the truncated drift sum_a k(a) a / max(<a,x>, eps).

    Defined on all of R^d; agrees with the singular drift wherever every
    root inner product is at least eps.
    """
    spec = _as_spec(spec_or_rs)
    rs = spec.rs
    if eps <= 0.0:
        raise InvalidParameterError("truncation parameter eps must be positive")
    gaps = rs.root_gaps(x)
    weights = rs.multiplicities / np.maximum(gaps, eps)
    return np.einsum("...m,md->...d", weights, rs.positive_roots)


def coth_minus_reciprocal(u):
    """coth(u) - 1/u, the smooth bounded odd factor of the hyperbolic drift.

    Direct evaluation cancels catastrophically near zero, so small arguments
    use the odd series u/3 - u^3/45 + 2u^5/945; the two branches agree to
    1e-14 at the switchover.
    """
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < _COTH_SERIES_CUTOFF
    u_safe = np.where(small, 1.0, u)
    direct = 1.0 / np.tanh(u_safe) - 1.0 / u_safe
    series = u / 3.0 - u ** 3 / 45.0 + 2.0 * u ** 5 / 945.0
    out = np.where(small, series, direct)
    return float(out) if out.ndim == 0 else out


def heckman_opdam_drift(rs: RootSystem, t: float, x: np.ndarray) -> np.ndarray:
    """Bounded correction turning the singular chamber drift into the
    hyperbolic-interaction drift: sum_a (k(a)/2) phi(<a,x>/2) a with
    phi(u) = coth(u) - 1/u.

    phi increases from 0 to 1 on (0, inf), so the Euclidean norm is bounded
    by (1/2) sum_a k(a) |a|.
    """
    gaps = rs.root_gaps(x)
    if np.any(gaps <= 0.0):
        raise OutsideChamberError("hyperbolic correction drift needs x strictly in chamber")
    phi = coth_minus_reciprocal(gaps / 2.0)
    weights = 0.5 * rs.multiplicities * phi
    return np.einsum("...m,md->...d", weights, rs.positive_roots)


def heckman_opdam(rs: RootSystem) -> BoundedDrift:
    """The hyperbolic correction packaged as a BoundedDrift.

    Bound: (1/2) sum k(a)|a| since phi < 1.  Lipschitz constant: the
    Jacobian is sum (k/4) phi'(<a,x>/2) a a^T with 0 < phi' <= 1/3, giving
    sum k(a)|a|^2 / 12.
    """
    norms = np.sqrt(rs.root_square_norms)
    bound = 0.5 * float(np.sum(rs.multiplicities * norms))
    lip = float(np.sum(rs.multiplicities * rs.root_square_norms)) / 12.0

    def fn(t, x):
        return heckman_opdam_drift(rs, t, x)

    return BoundedDrift(kind="heckman_opdam", fn=fn, declared_bound=bound,
                        declared_lipschitz=lip, smoothness="c12_bounded")
