"""Root system construction, validation, and the harmonicity identities."""

import json

import numpy as np
import pytest

from dunklsim import rootsys
from dunklsim.errors import (InvalidParameterError, OutsideChamberError,
                             RootSystemValidationError)
from dunklsim.rootsys import (alternating_poly, build_bessel, build_custom,
                              build_type_a, build_type_bcd,
                              harmonic_identity_residual, in_chamber,
                              load_custom, random_chamber_points, reflect,
                              with_multiplicities)


def builtin_systems(k=1.5):
    return [
        build_bessel(k),
        build_type_a(3, k),
        build_type_a(4, k),
        build_type_bcd(3, k, 1),
        build_type_bcd(3, k, 2),
        build_type_bcd(3, k, 0),
    ]


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def test_bessel_basics():
    rs = build_bessel(1.0)
    assert rs.n_positive == 1
    assert rs.total_multiplicity == 1.0
    assert rs.dim == 1
    assert in_chamber(rs, np.array([0.5]))
    assert not in_chamber(rs, np.array([-0.5]))


def test_bessel_zero_multiplicity_has_zero_drift_scale():
    rs = build_bessel(0.0)
    assert rs.lipschitz_scale == 0.0
    assert rs.total_multiplicity == 0.0


def test_bessel_lipschitz_scale():
    # oracle: sqrt(|R+| * k^2 |a|^4) with one root of norm 1
    assert build_bessel(2.0).lipschitz_scale == pytest.approx(
        np.sqrt(1 * 2.0 ** 2 * 1.0 ** 4), abs=0)


def test_bessel_rejects_negative_multiplicity():
    with pytest.raises(InvalidParameterError):
        build_bessel(-0.1)


def test_type_a_roots_d3():
    rs = build_type_a(3, 1.0)
    expected = {(1, -1, 0), (1, 0, -1), (0, 1, -1)}
    got = {tuple(int(v) for v in row) for row in rs.positive_roots}
    assert got == expected
    assert rs.n_positive == 3
    assert np.allclose(rs.root_square_norms, 2.0)


def test_type_a_scales():
    rs2 = build_type_a(2, 1.0)
    assert rs2.total_multiplicity == 1.0
    assert rs2.lipschitz_scale == pytest.approx(np.sqrt(1 * 1 * 2.0 ** 2), abs=0)
    rs3 = build_type_a(3, 1.0)
    assert rs3.lipschitz_scale == pytest.approx(np.sqrt(3 * 3 * 4.0), abs=0)


def test_type_a_rejects_small_d():
    with pytest.raises(InvalidParameterError):
        build_type_a(1, 1.0)


def test_type_bcd_counts():
    # enumeration oracle: d(d-1)/2 pair differences + as many pair sums + r>0 axes
    assert build_type_bcd(2, 1.0, 1).n_positive == 4
    assert build_type_bcd(2, 1.0, 0).n_positive == 2
    c3 = build_type_bcd(3, 1.0, 2)
    assert c3.root_square_norms.max() == 4.0  # the 2 e_i roots


def test_type_bcd_rejects_bad_r():
    with pytest.raises(InvalidParameterError):
        build_type_bcd(2, 1.0, 3)


def test_bcd_chambers():
    b = build_type_bcd(3, 1.0, 1)
    assert in_chamber(b, np.array([3.0, 2.0, 1.0]))
    assert not in_chamber(b, np.array([3.0, 2.0, -1.0]))  # x_d > 0 required
    d = build_type_bcd(3, 1.0, 0)
    assert in_chamber(d, np.array([3.0, 2.0, 1.0]))
    assert in_chamber(d, np.array([3.0, 2.0, -1.0]))  # |x_d| < x_{d-1} suffices
    assert not in_chamber(d, np.array([3.0, 2.0, -2.5]))


def test_custom_scalar_multiple_is_r1_violation():
    with pytest.raises(RootSystemValidationError) as info:
        build_custom(1, [[1.0], [2.0]], [1.0, 1.0])
    assert any("(R1)" in v for v in info.value.violations)


def test_custom_missing_reflection_is_r2_violation():
    # reflection of e1+e2 in e1 gives -e1+e2 which is not in R
    with pytest.raises(RootSystemValidationError) as info:
        build_custom(2, [[1.0, 0.0], [1.0, 1.0]], [1.0, 1.0])
    assert any("(R2)" in v for v in info.value.violations)


def test_custom_equals_builtin_type_a():
    rs = build_custom(3, [[1, 0, -1], [0, 1, -1], [1, -1, 0]], [2.0, 2.0, 2.0])
    ref = build_type_a(3, 2.0)
    got = {tuple(row) for row in rs.positive_roots}
    exp = {tuple(row) for row in ref.positive_roots}
    assert got == exp
    assert rs.total_multiplicity == ref.total_multiplicity


def test_custom_orbit_inconsistent_multiplicities_rejected():
    # in type B2 the pair roots form one orbit; unequal weights there are invalid
    with pytest.raises(RootSystemValidationError) as info:
        build_custom(2, [[1, -1], [1, 1], [1, 0], [0, 1]], [1.0, 2.0, 1.0, 1.0])
    assert any("not reflection-invariant" in v for v in info.value.violations)


def test_custom_two_orbit_multiplicities_allowed():
    rs = build_custom(2, [[1, -1], [1, 1], [1, 0], [0, 1]], [1.0, 1.0, 3.0, 3.0])
    assert rs.orbit_labels is not None
    assert len(np.unique(rs.orbit_labels)) == 2


def test_crystallographic_flag():
    for rs in builtin_systems():
        assert rs.crystallographic
    # golden-ratio pentagon system (I2(5)) is reduced but not crystallographic
    ang = [np.pi * j / 5.0 for j in range(5)]
    roots = [[np.cos(a), np.sin(a)] for a in ang]
    rs = build_custom(2, roots, [1.0] * 5)
    assert not rs.crystallographic


def test_json_loading(tmp_path):
    doc = {"dim": 2, "positive_roots": [[1, -1], [1, 1], [1, 0], [0, 1]],
           "multiplicities": [1.0, 1.0, 2.0, 2.0]}
    f = tmp_path / "sys.json"
    f.write_text(json.dumps(doc))
    rs = load_custom(f)
    assert rs.n_positive == 4
    assert load_custom(doc).n_positive == 4
    with pytest.raises(InvalidParameterError):
        load_custom({"dim": 2, "positive_roots": [[1, 0]], "multiplicities": [1.0],
                     "extra": 1})


def test_with_multiplicities():
    b2 = build_type_bcd(2, 1.0, 1)
    rs = with_multiplicities(b2, [2.0, 2.0, 0.5, 0.5])
    assert rs.total_multiplicity == 5.0
    with pytest.raises(InvalidParameterError):
        with_multiplicities(b2, [2.0, 1.0, 0.5, 0.5])  # breaks orbit invariance


# ---------------------------------------------------------------------------
# reflections
# ---------------------------------------------------------------------------


def test_reflect_examples():
    assert np.allclose(reflect(np.array([1.0, 0.0]), np.array([3.0, 4.0])),
                       [-3.0, 4.0])
    alpha = np.array([2.0, 1.0, -1.0])
    assert np.allclose(reflect(alpha, alpha), -alpha)
    # e1 - e2 swaps the first two coordinates
    assert np.allclose(reflect(np.array([1.0, -1.0, 0.0]), np.array([5.0, 2.0, 7.0])),
                       [2.0, 5.0, 7.0])


def test_reflect_errors():
    with pytest.raises(InvalidParameterError):
        reflect(np.zeros(2), np.ones(2))
    with pytest.raises(InvalidParameterError):
        reflect(np.ones(2), np.ones(3))


def test_reflect_involution_and_isometry():
    rng = np.random.default_rng(42)
    for rs in builtin_systems():
        xs = rng.standard_normal((50, rs.dim))
        for alpha in rs.positive_roots:
            back = reflect(alpha, reflect(alpha, xs))
            assert np.max(np.abs(back - xs)) <= 1e-12
            assert np.max(np.abs(np.linalg.norm(reflect(alpha, xs), axis=1)
                                 - np.linalg.norm(xs, axis=1))) <= 1e-12


# ---------------------------------------------------------------------------
# chamber queries and the polynomial
# ---------------------------------------------------------------------------


def test_in_chamber_examples():
    rs = build_type_a(3, 1.0)
    assert in_chamber(rs, np.array([3.0, 2.0, 1.0]), 0.0)
    assert not in_chamber(rs, np.array([1.0, 2.0, 3.0]), 0.0)
    assert not in_chamber(rs, np.array([1.0, 1.0, 0.0]), 0.0)  # wall excluded
    assert not in_chamber(rs, np.array([3.0, 2.5, 1.0]), margin=0.6)
    with pytest.raises(InvalidParameterError):
        in_chamber(rs, np.array([1.0, 0.0, -1.0]), margin=-0.1)


def test_alternating_poly_examples():
    rs = build_type_a(3, 1.0)
    assert alternating_poly(rs, np.array([3.0, 2.0, 1.0])) == pytest.approx(2.0, abs=0)
    assert alternating_poly(rs, np.array([1.0, 1.0, 0.0])) == 0.0
    assert alternating_poly(build_bessel(1.0), np.array([5.0])) == 5.0


def test_harmonic_identity_examples():
    assert harmonic_identity_residual(build_bessel(1.0), np.array([2.0])) == 0.0
    assert harmonic_identity_residual(
        build_type_a(3, 1.0), np.array([3.0, 2.0, 1.0])) < 1e-12
    assert harmonic_identity_residual(
        build_type_bcd(2, 1.0, 1), np.array([2.0, 1.0])) < 1e-12
    with pytest.raises(OutsideChamberError):
        harmonic_identity_residual(build_type_a(3, 1.0), np.array([1.0, 2.0, 3.0]))


def test_harmonic_identity_random_points():
    rng = np.random.default_rng(7)
    for rs in builtin_systems():
        pts = random_chamber_points(rs, 1000, rng, clearance=0.2)
        worst = max(harmonic_identity_residual(rs, x) for x in pts)
        assert worst <= 1e-10, rs.name


def _fd_laplacian(rs, x, step):
    total = -2.0 * rs.dim * alternating_poly(rs, x)
    for i in range(rs.dim):
        e = np.zeros(rs.dim)
        e[i] = step
        total += alternating_poly(rs, x + e) + alternating_poly(rs, x - e)
    return total / step ** 2


def test_alternating_poly_is_harmonic_by_finite_differences():
    rng = np.random.default_rng(11)
    systems = [build_type_a(d, 1.0) for d in (2, 3, 4)]
    systems += [build_type_bcd(d, 1.0, r) for d in (2, 3) for r in (0, 1, 2)]
    for rs in systems:
        pts = random_chamber_points(rs, 100, rng, clearance=0.5)
        for x in pts:
            lap = _fd_laplacian(rs, x, 1e-3)
            assert abs(lap) <= 1e-6 * (1.0 + abs(alternating_poly(rs, x)))


# ---------------------------------------------------------------------------
# random valid custom systems
# ---------------------------------------------------------------------------


def _random_rotation(dim, rng):
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def random_valid_system(rng):
    """A rotated, scaled built-in with random per-orbit multiplicities."""
    base = rng.choice(["bessel", "a2", "a3", "b2", "d2"])
    if base == "bessel":
        rs = build_bessel(1.0)
    elif base == "a2":
        rs = build_type_a(2, 1.0)
    elif base == "a3":
        rs = build_type_a(3, 1.0)
    elif base == "b2":
        rs = build_type_bcd(2, 1.0, 1)
    else:
        rs = build_type_bcd(2, 1.0, 0)
    rot = _random_rotation(rs.dim, rng)
    scale = float(rng.uniform(0.5, 2.0))
    roots = scale * rs.positive_roots @ rot.T
    mults = np.empty(rs.n_positive)
    for lab in np.unique(rs.orbit_labels):
        mults[rs.orbit_labels == lab] = rng.uniform(0.5, 5.0)
    return build_custom(rs.dim, roots, mults)


def test_thousand_random_custom_systems_validate():
    rng = np.random.default_rng(2718)
    for _ in range(1000):
        rs = random_valid_system(rng)  # raises on any axiom failure
        x = rng.standard_normal(rs.dim)
        for alpha in rs.positive_roots:
            back = reflect(alpha, reflect(alpha, x))
            assert np.max(np.abs(back - x)) <= 1e-12
            assert abs(np.linalg.norm(reflect(alpha, x)) - np.linalg.norm(x)) <= 1e-12


def test_witness_certificate():
    for rs in builtin_systems():
        assert np.all(rs.positive_roots @ rs.witness > 0)


def test_immutable_after_construction():
    rs = build_type_a(3, 1.0)
    with pytest.raises(ValueError):
        rs.positive_roots[0, 0] = 5.0
