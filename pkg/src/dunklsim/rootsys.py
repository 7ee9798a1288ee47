"""Finite root systems, reflections, Weyl chambers, and the alternating polynomial.

A root system here is a finite set R of nonzero vectors such that the only
scalar multiples of a root inside R are the root and its negative, and R is
stable under all of its own reflections.  The package works with a chosen
positive half R_+ together with a reflection-invariant weight per root (the
multiplicity).  Everything downstream (drifts, schemes, estimators) consumes
the validated `RootSystem` produced by the constructors in this module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, OutsideChamberError, RootSystemValidationError

# Matching tolerances.  Reflections of small-integer roots are exact; custom
# inputs inherit these scales (documented contract, not adaptive).
_SET_MATCH_TOL = 1e-12     # per-coordinate, for reflection closure of R
_ORBIT_MATCH_TOL = 1e-9    # per-coordinate, for orbit bookkeeping
_INTEGER_TOL = 1e-9        # for the crystallographic flag


def reflect(alpha: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Orthogonal reflection of x in the hyperplane normal to alpha.

    Accepts a batch of points in the leading axes; the last axis is the
    coordinate axis and must match alpha's length.
    """
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x, dtype=float)
    if alpha.ndim != 1:
        raise InvalidParameterError("alpha must be a single vector")
    norm_sq = float(alpha @ alpha)
    if norm_sq <= 0.0:
        raise InvalidParameterError("alpha must be nonzero")
    if x.shape[-1] != alpha.shape[0]:
        raise InvalidParameterError(
            f"dimension mismatch: point has dim {x.shape[-1]}, root has dim {alpha.shape[0]}"
        )
    coeff = 2.0 * np.einsum("...d,d->...", x, alpha) / norm_sq
    return x - coeff[..., None] * alpha


@dataclass(frozen=True, eq=False)
class RootSystem:
    """A validated positive root system with multiplicities.

    Attributes
    ----------
    dim : int
        Ambient dimension d.
    positive_roots : ndarray, shape (m, d)
        The chosen positive roots, one per row.
    multiplicities : ndarray, shape (m,)
        Nonnegative reflection-invariant weight per positive root, aligned
        by index with `positive_roots`.
    name : str
        Label ("A", "B", "C", "D", "Bessel", "custom").
    crystallographic : bool
        Informational flag: all Cartan-like integers 2<a,b>/|a|^2 are integers.
    witness : ndarray, shape (d,)
        A vector with strictly positive inner product against every positive
        root; certifies that R_+ is cut out by a hyperplane.
    orbit_labels : ndarray, shape (m,)
        Connected-component id of each positive root under the reflection
        action on the full set R; multiplicities are constant per label.
    """

    dim: int
    positive_roots: np.ndarray
    multiplicities: np.ndarray
    name: str = "custom"
    crystallographic: bool = True
    witness: np.ndarray = field(default=None)  # type: ignore[assignment]
    orbit_labels: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        for arr in (self.positive_roots, self.multiplicities, self.witness, self.orbit_labels):
            if arr is not None:
                arr.setflags(write=False)

    # -- derived scalar quantities -------------------------------------

    @property
    def n_positive(self) -> int:
        return self.positive_roots.shape[0]

    @property
    def root_square_norms(self) -> np.ndarray:
        return np.einsum("md,md->m", self.positive_roots, self.positive_roots)

    @property
    def total_multiplicity(self) -> float:
        """Sum of the multiplicities over the positive roots; equals the
        radial component <x, drift(x)> of the singular drift everywhere."""
        return float(np.sum(self.multiplicities))

    @property
    def indices(self) -> np.ndarray:
        """Per-root index: multiplicity minus one half.  Every convergence
        hypothesis downstream is a lower bound on min(indices)."""
        return self.multiplicities - 0.5

    @property
    def min_index(self) -> float:
        return float(np.min(self.indices))

    @property
    def lipschitz_scale(self) -> float:
        """Global Lipschitz scale of the truncated drift:
        sqrt(m * sum_a k(a)^2 |a|^4) over the m positive roots.  The
        truncated implicit step is a contraction iff h < eps^2 / this."""
        norms4 = self.root_square_norms ** 2
        return float(np.sqrt(self.n_positive * np.sum(self.multiplicities ** 2 * norms4)))

    # -- geometry ------------------------------------------------------

    def root_gaps(self, x: np.ndarray) -> np.ndarray:
        """Inner products <a, x> for every positive root a.

        x may carry leading batch axes; returns shape (..., m).
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise InvalidParameterError(
                f"dimension mismatch: point has dim {x.shape[-1]}, system has dim {self.dim}"
            )
        return np.einsum("...d,md->...m", x, self.positive_roots)

    def wall_clearance(self, x: np.ndarray) -> np.ndarray | float:
        """Minimum of <a, x> over positive roots (distance-like to the walls)."""
        gaps = self.root_gaps(x)
        out = np.min(gaps, axis=-1)
        return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# validation machinery
# ---------------------------------------------------------------------------


def _nearest_member(candidates: np.ndarray, v: np.ndarray) -> tuple[int, float]:
    """Index of the row of `candidates` closest to v in max-norm, and the distance."""
    dist = np.max(np.abs(candidates - v), axis=1)
    j = int(np.argmin(dist))
    return j, float(dist[j])


def _orbit_labels(full_set: np.ndarray) -> np.ndarray | None:
    """Union-find components of the reflection action on the finite set R.

    Returns None if some reflection image fails to match a member, i.e. (R2)
    is violated and orbits are undefined.
    """
    n = full_set.shape[0]
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj

    for b in range(n):
        images = reflect(full_set[b], full_set)
        for i in range(n):
            j, dist = _nearest_member(full_set, images[i])
            if dist > _ORBIT_MATCH_TOL:
                return None
            union(i, j)

    roots_of = np.array([find(i) for i in range(n)])
    _, labels = np.unique(roots_of, return_inverse=True)
    return labels


def _collect_violations(dim: int, pos: np.ndarray, mults: np.ndarray) -> tuple[list[str], dict]:
    """Check every axiom and return (violations, derived data).

    Derived data holds the witness, crystallographic flag, and orbit labels
    when they are computable.
    """
    violations: list[str] = []
    derived: dict = {"witness": None, "crystallographic": False, "orbit_labels": None}

    m = pos.shape[0]
    norms = np.sqrt(np.einsum("md,md->m", pos, pos))
    if np.any(norms <= 0.0):
        violations.append("zero root in positive_roots")
        return violations, derived

    full = np.vstack([pos, -pos])

    # (R1): the only scalar multiples of a root inside R are +-root.
    for i in range(2 * m):
        a = full[i]
        na2 = float(a @ a)
        for j in range(i + 1, 2 * m):
            b = full[j]
            c = float(a @ b) / na2
            perp = b - c * a
            scale = max(1.0, float(np.max(np.abs(b))))
            if np.max(np.abs(perp)) <= _ORBIT_MATCH_TOL * scale:
                # parallel pair; legal only as an exact opposite
                if abs(c + 1.0) > _ORBIT_MATCH_TOL:
                    violations.append(
                        f"(R1) violated by roots {full[i].tolist()} and {full[j].tolist()}"
                    )

    # (R2): closure of R under every reflection of R.
    r2_ok = True
    for b_idx in range(2 * m):
        images = reflect(full[b_idx], full)
        for i in range(2 * m):
            _, dist = _nearest_member(full, images[i])
            if dist > _SET_MATCH_TOL:
                r2_ok = False
                violations.append(
                    f"(R2) violated: reflection of {full[i].tolist()} in "
                    f"{full[b_idx].tolist()} is not in R"
                )
                break
        if not r2_ok:
            break

    # separating hyperplane witness: the sum of normalized positive roots
    # must see every positive root on its strictly positive side.
    witness = np.sum(pos / norms[:, None], axis=0)
    if np.all(pos @ witness > 0.0):
        derived["witness"] = witness
    else:
        violations.append(
            "no separating hyperplane certificate: the averaged-root witness "
            "fails strict positivity on R_+"
        )

    if r2_ok:
        labels_full = _orbit_labels(full)
        if labels_full is not None:
            mults_full = np.concatenate([mults, mults])
            for lab in np.unique(labels_full):
                orbit_vals = mults_full[labels_full == lab]
                if np.max(orbit_vals) - np.min(orbit_vals) > _ORBIT_MATCH_TOL:
                    members = full[labels_full == lab]
                    violations.append(
                        "multiplicity not reflection-invariant on orbit containing "
                        f"{members[0].tolist()} (values range "
                        f"{np.min(orbit_vals)}..{np.max(orbit_vals)})"
                    )
            derived["orbit_labels"] = labels_full[:m]

    # (R3) is informational only: non-crystallographic reduced systems are
    # legal inputs for everything downstream.
    cartan = 2.0 * (full @ full.T) / np.einsum("md,md->m", full, full)[:, None]
    derived["crystallographic"] = bool(
        np.all(np.abs(cartan - np.round(cartan)) <= _INTEGER_TOL)
    )

    return violations, derived


def build_custom(
    dim: int,
    positive_roots,
    multiplicities,
    name: str = "custom",
) -> RootSystem:
    """Validate and construct a root system from raw positive roots.

    Raises `RootSystemValidationError` listing every violated axiom among
    (R1), (R2), multiplicity invariance, and the separating-hyperplane
    certificate.  The crystallographic property is recorded as a flag, never
    enforced.
    """
    pos = np.atleast_2d(np.asarray(positive_roots, dtype=float)).copy()
    mults = np.asarray(multiplicities, dtype=float).reshape(-1).copy()
    dim = int(dim)
    if dim <= 0:
        raise InvalidParameterError("dim must be positive")
    if pos.shape[1] != dim:
        raise InvalidParameterError(
            f"positive_roots have dimension {pos.shape[1]}, expected {dim}"
        )
    if mults.shape[0] != pos.shape[0]:
        raise InvalidParameterError(
            "multiplicities must align with positive_roots by index"
        )
    if np.any(mults < 0.0):
        raise InvalidParameterError("multiplicities must be nonnegative")

    violations, derived = _collect_violations(dim, pos, mults)
    if violations:
        raise RootSystemValidationError(violations)

    return RootSystem(
        dim=dim,
        positive_roots=pos,
        multiplicities=mults,
        name=name,
        crystallographic=derived["crystallographic"],
        witness=derived["witness"],
        orbit_labels=derived["orbit_labels"],
    )


def load_custom(source) -> RootSystem:
    """Build a custom system from a JSON document or an already-parsed dict.

    Schema: {"dim": int, "positive_roots": [[...], ...], "multiplicities": [...]}
    with multiplicities aligned to positive_roots by index.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    if not isinstance(doc, dict):
        raise InvalidParameterError("custom system document must be a JSON object")
    required = {"dim", "positive_roots", "multiplicities"}
    unknown = set(doc) - required
    if unknown:
        raise InvalidParameterError(f"unknown keys in custom system document: {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise InvalidParameterError(f"missing keys in custom system document: {sorted(missing)}")
    return build_custom(doc["dim"], doc["positive_roots"], doc["multiplicities"])


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------


def build_bessel(k: float) -> RootSystem:
    """One-dimensional system {+-1} with multiplicity k; chamber (0, inf)."""
    k = float(k)
    if k < 0.0:
        raise InvalidParameterError("multiplicity k must be nonnegative")
    return _validated_builtin(1, np.array([[1.0]]), np.array([k]), "Bessel")


def build_type_a(d: int, k: float) -> RootSystem:
    """Type A system on d coordinates: roots e_i - e_j for i < j.

    Chamber is the strictly decreasing cone x_1 > x_2 > ... > x_d (the
    non-colliding configuration of d particles).
    """
    d = int(d)
    k = float(k)
    if d < 2:
        raise InvalidParameterError("type A needs d >= 2")
    if k < 0.0:
        raise InvalidParameterError("multiplicity k must be nonnegative")
    roots = []
    for i in range(d):
        for j in range(i + 1, d):
            v = np.zeros(d)
            v[i], v[j] = 1.0, -1.0
            roots.append(v)
    pos = np.array(roots)
    return _validated_builtin(d, pos, np.full(len(roots), k), "A")


def build_type_bcd(d: int, k: float, r: int) -> RootSystem:
    """Types B (r=1), C (r=2) and D (r=0) on d coordinates with one shared
    multiplicity k across all root lengths.

    Positive roots are e_i - e_j and e_i + e_j for i < j, plus r*e_i for
    every i when r > 0.  Chamber: x_1 > ... > x_d > 0 for r in {1, 2} and
    x_1 > ... > x_{d-1} > |x_d| for r = 0.
    """
    d = int(d)
    k = float(k)
    if d < 2:
        raise InvalidParameterError("types B/C/D need d >= 2")
    if r not in (0, 1, 2):
        raise InvalidParameterError("r must be one of 0 (type D), 1 (type B), 2 (type C)")
    if k < 0.0:
        raise InvalidParameterError("multiplicity k must be nonnegative")
    roots = []
    for i in range(d):
        for j in range(i + 1, d):
            v = np.zeros(d)
            v[i], v[j] = 1.0, -1.0
            roots.append(v)
            w = np.zeros(d)
            w[i], w[j] = 1.0, 1.0
            roots.append(w)
    if r > 0:
        for i in range(d):
            v = np.zeros(d)
            v[i] = float(r)
            roots.append(v)
    pos = np.array(roots)
    name = {0: "D", 1: "B", 2: "C"}[r]
    return _validated_builtin(d, pos, np.full(len(roots), k), name)


def _validated_builtin(dim: int, pos: np.ndarray, mults: np.ndarray, name: str) -> RootSystem:
    violations, derived = _collect_violations(dim, pos, mults)
    if violations:  # pragma: no cover - built-ins are valid by construction
        raise RootSystemValidationError(violations)
    return RootSystem(
        dim=dim,
        positive_roots=pos,
        multiplicities=mults,
        name=name,
        crystallographic=derived["crystallographic"],
        witness=derived["witness"],
        orbit_labels=derived["orbit_labels"],
    )


# ---------------------------------------------------------------------------
# chamber queries
# ---------------------------------------------------------------------------


def with_multiplicities(rs: RootSystem, multiplicities) -> RootSystem:
    """A copy of rs carrying new multiplicities (must stay constant on each
    reflection orbit).  Geometry and derived certificates are shared."""
    mults = np.asarray(multiplicities, dtype=float).reshape(-1).copy()
    if mults.shape[0] != rs.n_positive:
        raise InvalidParameterError("multiplicities must align with positive_roots by index")
    if np.any(mults < 0.0):
        raise InvalidParameterError("multiplicities must be nonnegative")
    if rs.orbit_labels is not None:
        for lab in np.unique(rs.orbit_labels):
            vals = mults[rs.orbit_labels == lab]
            if np.max(vals) - np.min(vals) > _ORBIT_MATCH_TOL:
                raise InvalidParameterError(
                    "multiplicities must be constant on each reflection orbit")
    return RootSystem(
        dim=rs.dim,
        positive_roots=rs.positive_roots,
        multiplicities=mults,
        name=rs.name,
        crystallographic=rs.crystallographic,
        witness=rs.witness,
        orbit_labels=rs.orbit_labels,
    )


def in_chamber(rs: RootSystem, x: np.ndarray, margin: float = 0.0) -> bool | np.ndarray:
    """True iff <a, x> > margin for every positive root a (strict).

    Batched points return a boolean array over the leading axes.
    """
    if margin < 0.0:
        raise InvalidParameterError("margin must be nonnegative")
    gaps = rs.root_gaps(x)
    out = np.all(gaps > margin, axis=-1)
    return bool(out) if out.ndim == 0 else out


def alternating_poly(rs: RootSystem, x: np.ndarray) -> float | np.ndarray:
    """Product of <a, x> over the positive roots; harmonic in x, vanishing
    exactly on the chamber walls."""
    gaps = rs.root_gaps(x)
    out = np.prod(gaps, axis=-1)
    return float(out) if out.ndim == 0 else out


def harmonic_identity_residual(rs: RootSystem, x: np.ndarray) -> float:
    """Relative defect of the root-system identity
    sum_a |a|^2/<a,x>^2 = sum_{a,b} <a,b>/(<a,x><b,x>) at a chamber point.

    The identity is exact for every root system; the residual measures only
    floating-point noise and input errors.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidParameterError("x must be a single point")
    gaps = rs.root_gaps(x)
    if np.any(gaps <= 0.0):
        raise OutsideChamberError("x must lie strictly inside the chamber")
    lhs = float(np.sum(rs.root_square_norms / gaps ** 2))
    gram = rs.positive_roots @ rs.positive_roots.T
    rhs = float(np.sum(gram / np.outer(gaps, gaps)))
    return abs(lhs - rhs) / max(1.0, abs(lhs))


def random_chamber_points(
    rs: RootSystem,
    n: int,
    rng: np.random.Generator,
    clearance: float = 0.5,
    spread: float = 1.0,
) -> np.ndarray:
    """Sample n points strictly inside the chamber with wall clearance at
    least `clearance`, by shifting Gaussian points along the witness ray."""
    z = spread * rng.standard_normal((n, rs.dim))
    targets = clearance * (1.0 + rng.random(n))
    gaps = rs.root_gaps(z)
    wgaps = rs.root_gaps(rs.witness)
    t = np.max((targets[:, None] - gaps) / wgaps[None, :], axis=1)
    t = np.maximum(t, 0.0)
    return z + t[:, None] * rs.witness
