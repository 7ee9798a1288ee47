"""Named process presets binding root systems, drifts, and initial conditions.

Presets cover the classical families: the one-dimensional square-root-drift
process (``bessel``), non-colliding particles with pairwise repulsion
(``dyson``), the signed-pair families B/C/D, the hyperbolic-interaction
variant (``heckman_opdam``), and ``wishart``, whose paths are obtained by
squaring the components of a type B/C/D path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coeff import DriftSpec, heckman_opdam
from .errors import InvalidParameterError
from .rootsys import (RootSystem, build_bessel, build_type_a, build_type_bcd,
                      in_chamber)
from .scheme import Path

PRESET_NAMES = ("bessel", "dyson", "type_b", "type_c", "type_d", "wishart",
                "heckman_opdam")

# Default interior starting points with O(1) wall clearance.
_DEFAULT_MARGIN = 1e-6


@dataclass(frozen=True)
class ModelSpec:
    """A fully bound process: drift specification plus initial condition.

    derived_transform is either None or "square_components" (paths are
    squared componentwise after simulation, as for the wishart preset).
    warnings records constructed-but-outside-theory parameter choices,
    e.g. a multiplicity below 1/2.
    """

    drift_spec: DriftSpec
    x0: np.ndarray
    label: str
    derived_transform: str | None = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        self.x0.setflags(write=False)
        rs = self.drift_spec.rs
        if self.x0.shape != (rs.dim,):
            raise InvalidParameterError(
                f"x0 has shape {self.x0.shape}, expected ({rs.dim},)")
        if not in_chamber(rs, self.x0, 0.0):
            raise InvalidParameterError("x0 must lie strictly inside the chamber")
        if self.derived_transform not in (None, "square_components"):
            raise InvalidParameterError(
                f"unknown derived transform {self.derived_transform!r}")

    @property
    def rs(self) -> RootSystem:
        return self.drift_spec.rs

    def theory_tags(self) -> dict[str, bool]:
        """Which convergence-theorem hypotheses the multiplicities satisfy:
        strong order 1/2 needs min index >= 3, order 1 needs >= 16, and the
        truncated-scheme rate needs > 6."""
        m = self.rs.min_index
        return {
            "order_half": m >= 3.0,
            "order_one": m >= 16.0,
            "truncated_rate": m > 6.0,
        }


def _default_dyson_x0(d: int) -> np.ndarray:
    return np.array([(d + 1.0 - 2.0 * i) / 2.0 for i in range(1, d + 1)])


def _default_bcd_x0(d: int) -> np.ndarray:
    return np.array([float(d + 1 - i) for i in range(1, d + 1)])


def _as_x0(x0, default: np.ndarray) -> np.ndarray:
    if x0 is None:
        return default.astype(float)
    return np.atleast_1d(np.asarray(x0, dtype=float)).copy()


def _multiplicity_warnings(rs: RootSystem) -> tuple[str, ...]:
    if rs.min_index < 0.0:
        return ("multiplicity below 1/2: the process theory (wall avoidance, "
                "convergence rates) does not cover this regime",)
    return ()


def preset(name: str, **params) -> ModelSpec:
    """Build a named model.  Common params: k (multiplicity), d (dimension),
    x0 (initial condition, defaulted per family), r (0/1/2, wishart only)."""
    if name not in PRESET_NAMES:
        raise InvalidParameterError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")

    k = float(_pop_required(name, params, "k"))
    if name == "bessel":
        x0 = _as_x0(params.pop("x0", None), np.array([1.0]))
        _reject_extra(name, params)
        rs = build_bessel(k)
        return ModelSpec(DriftSpec(rs=rs), x0, "bessel",
                         warnings=_multiplicity_warnings(rs))

    if name == "dyson":
        d = int(_pop_required(name, params, "d"))
        x0 = _as_x0(params.pop("x0", None), _default_dyson_x0(d))
        _reject_extra(name, params)
        rs = build_type_a(d, k)
        return ModelSpec(DriftSpec(rs=rs), x0, "dyson",
                         warnings=_multiplicity_warnings(rs))

    if name in ("type_b", "type_c", "type_d"):
        d = int(_pop_required(name, params, "d"))
        r = {"type_b": 1, "type_c": 2, "type_d": 0}[name]
        x0 = _as_x0(params.pop("x0", None), _default_bcd_x0(d))
        _reject_extra(name, params)
        rs = build_type_bcd(d, k, r)
        return ModelSpec(DriftSpec(rs=rs), x0, name,
                         warnings=_multiplicity_warnings(rs))

    if name == "wishart":
        d = int(_pop_required(name, params, "d"))
        r = int(params.pop("r", 1))
        x0 = _as_x0(params.pop("x0", None), _default_bcd_x0(d))
        _reject_extra(name, params)
        rs = build_type_bcd(d, k, r)
        return ModelSpec(DriftSpec(rs=rs), x0, "wishart",
                         derived_transform="square_components",
                         warnings=_multiplicity_warnings(rs))

    # heckman_opdam: type A base with the bounded hyperbolic correction
    d = int(_pop_required(name, params, "d"))
    x0 = _as_x0(params.pop("x0", None), _default_dyson_x0(d))
    _reject_extra(name, params)
    rs = build_type_a(d, k)
    return ModelSpec(DriftSpec(rs=rs, extra_drift=heckman_opdam(rs)), x0,
                     "heckman_opdam", warnings=_multiplicity_warnings(rs))


def _pop_required(name: str, params: dict, key: str):
    if key not in params:
        raise InvalidParameterError(f"preset {name!r} requires parameter {key!r}")
    return params.pop(key)


def _reject_extra(name: str, params: dict) -> None:
    if params:
        raise InvalidParameterError(
            f"unknown parameters for preset {name!r}: {sorted(params)}")


def wishart_transform(path: Path) -> Path:
    """Square the path components; the grid is unchanged.

    On a source path confined to the B/C chamber the output components are
    nonincreasing across the coordinate axis and nonnegative.
    """
    states = np.square(path.states)
    meta = dict(path.meta)
    meta["transform"] = "square_components"
    return Path(times=path.times.copy(), states=states, meta=meta)
