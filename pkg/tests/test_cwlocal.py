import math
import warnings

import numpy as np
import pytest
from hypothesis import given

from torsionkit import generators as gen
from torsionkit.cochain import betti, rho
from torsionkit.cwlocal import (AlternatingSystemFamily, BoundaryTerm, CWComplexData, LocalSystem,
                                build_cochain, circle, conjugate_cell, flip_cell,
                                hilbert_unimodular_defects, induced_matrix, is_unimodular,
                                milnor_torsion, parse_word, phi_hom, point, rebased_cochain, torus,
                                unimodular_defects)
from torsionkit.errors import (BoundaryNotSquareZero, DimensionMismatch, NotUnimodularWarning,
                               SingularInduced, SingularMap)
from torsionkit.suites import homotopic_perturbation_identity

from helpers import generator, seeds
from models import weighted_torus

LN2 = math.log(2)


def rotation(theta):
    return np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])


def test_word_parsing():
    assert parse_word("a b^-1 a^2") == (("a", 1), ("b", -1), ("a", 2))
    assert parse_word("1") == ()


def test_transport_is_ordered_product():
    a, b = np.array([[1.0, 1.0], [0.0, 1.0]]), np.array([[2.0, 0.0], [1.0, 1.0]])
    V = LocalSystem(2, {"a": a, "b": b})
    assert np.allclose(V.transport("a b^-1"), a @ np.linalg.inv(b))
    assert np.allclose(V.transport(""), np.eye(2))


def test_generators_must_be_invertible():
    with pytest.raises(SingularMap):
        LocalSystem(1, {"t": [[0.0]]})


def test_point_complex():
    V = LocalSystem(3, {}, np.diag([1.0, 2.0, 3.0]))
    C = build_cochain(point(), V)
    assert (C.lo, C.hi, C.dim(0)) == (0, 0, 3)
    assert milnor_torsion(point(), V) == pytest.approx(0.0, abs=1e-14)


def test_circle_with_scalar_system():
    C = build_cochain(circle(), LocalSystem.scalar("t", 3.0))
    assert C.diff(0)[0, 0] == pytest.approx(2.0)


def test_torus_betti_numbers():
    C = build_cochain(torus(), LocalSystem.trivial(1, ["a", "b"]))
    assert [betti(C, n) for n in range(3)] == [1, 2, 1]


def test_torus_needs_commuting_transports():
    V = LocalSystem(2, {"a": np.array([[1.0, 1.0], [0.0, 1.0]]), "b": np.array([[1.0, 0.0], [1.0, 1.0]])})
    with pytest.raises(BoundaryNotSquareZero):
        build_cochain(torus(), V)


def test_boundary_faces_must_have_the_right_dimension():
    with pytest.raises(DimensionMismatch):
        CWComplexData({0: ["v"], 2: ["f"]}, {"f": [BoundaryTerm(1.0, (), "v")]})


def test_grams_are_orthogonal_sums_of_fiber_grams():
    g = np.array([[2.0, 0.5], [0.5, 1.0]])
    C = build_cochain(torus(), LocalSystem.trivial(2, ["a", "b"], g))
    assert np.allclose(C.space(1).gram, np.kron(np.eye(2), g))


def test_unimodularity_examples():
    assert is_unimodular(LocalSystem(2, {"t": rotation(0.7)}))
    assert not is_unimodular(LocalSystem(1, {"t": [[2.0]]}))
    family = AlternatingSystemFamily([(1, LocalSystem.scalar("t", 2.0)), (-1, LocalSystem.scalar("t", 2.0))])
    assert is_unimodular(family)


def test_hilbert_unimodularity_per_word():
    family = AlternatingSystemFamily.alternating([LocalSystem.scalar("t", 2.0), LocalSystem.scalar("t", -2.0)])
    defects = hilbert_unimodular_defects(family, [parse_word("t t"), parse_word("t^-1")])
    assert all(abs(v) <= 1e-12 for v in defects.values())
    assert unimodular_defects(LocalSystem.scalar("t", 2.0))["t"] == pytest.approx(LN2)


@pytest.mark.parametrize("lam", [3.0, -1.0, 0.5])
def test_circle_torsion_closed_form(lam):
    assert milnor_torsion(circle(), LocalSystem.scalar("t", lam)) == pytest.approx(
        math.log(abs(lam - 1)), abs=1e-12)


def test_trivial_circle_and_point_vanish():
    assert milnor_torsion(circle(), LocalSystem.trivial(1, ["t"])) == pytest.approx(0.0, abs=1e-14)
    assert milnor_torsion(point(), LocalSystem.trivial(2)) == pytest.approx(0.0, abs=1e-14)


def test_non_unimodular_family_warns():
    family = AlternatingSystemFamily([(1, LocalSystem.scalar("t", 3.0))])
    with pytest.warns(NotUnimodularWarning):
        milnor_torsion(circle(), family)


def test_phi_of_trivial_units_vanishes():
    family = AlternatingSystemFamily.alternating([LocalSystem.scalar("t", 2.0), LocalSystem.scalar("t", 2.0)])
    assert phi_hom([[[(1.0, "t")]]], family) == pytest.approx(0.0, abs=1e-14)
    assert phi_hom([[[(-1.0, "t")]]], family) == pytest.approx(0.0, abs=1e-14)


def test_phi_of_constant():
    V = LocalSystem.trivial(3, ["t"])
    assert phi_hom([[[(2.0, "")]]], V) == pytest.approx(3 * LN2, abs=1e-14)


def test_phi_of_identity_matrix():
    V = LocalSystem(2, {"t": rotation(0.3)})
    unit = [[[(1.0, "")], []], [[], [(1.0, "")]]]
    assert phi_hom(unit, V) == pytest.approx(0.0, abs=1e-14)


def test_phi_of_one_minus_generator():
    assert phi_hom([[[(1.0, ""), (-1.0, "t")]]], LocalSystem.scalar("t", 3.0)) == pytest.approx(LN2)


def test_phi_requires_invertible_substitution():
    with pytest.raises(SingularInduced):
        phi_hom([[[(1.0, ""), (-1.0, "t")]]], LocalSystem.trivial(1, ["t"]))


def test_induced_matrix_blocks():
    V = LocalSystem(2, {"t": rotation(0.5)})
    m = induced_matrix([[[(2.0, "t")], []], [[(1.0, "")], [(1.0, "t^-1")]]], V)
    assert np.allclose(m[:2, :2], 2 * rotation(0.5))
    assert np.allclose(m[2:, :2], np.eye(2))
    assert np.allclose(m[2:, 2:], rotation(-0.5))


def random_torus_family(rng) -> AlternatingSystemFamily:
    """Two commuting diagonal systems on the torus whose determinants cancel."""
    d = int(rng.integers(1, 4))
    a = np.exp(rng.normal(size=d)) * rng.choice([-1, 1], size=d)
    b = np.exp(rng.normal(size=d)) * rng.choice([-1, 1], size=d)
    V0 = LocalSystem(d, {"a": np.diag(a), "b": np.diag(b)}, gen.random_gram(rng, d))
    V1 = LocalSystem(1, {"a": [[abs(np.prod(a))]], "b": [[-abs(np.prod(b))]]})
    return AlternatingSystemFamily([(1, V0), (-1, V1)])


def random_unit(rng):
    """A random 1×1 group-ring element ``c + c' w``."""
    word = " ".join(rng.choice(["a", "b", "a^-1", "b^-1"], size=int(rng.integers(1, 3))))
    return [[[(float(rng.normal()) + 3.0, ""), (float(rng.normal()), word)]]]


@given(seeds)
def test_comparison_law(seed):
    rng = generator(seed)
    family = random_torus_family(rng)
    X = torus()
    n = int(rng.integers(0, 3))
    u = random_unit(rng)
    if n == 1:
        u = [[u[0][0], []], [[], [(1.0, "")]]]
    try:
        value = phi_hom(u, family)
    except SingularInduced:
        return
    change = sum(sign * (rho(rebased_cochain(X, V, n, u)) - rho(build_cochain(X, V)))
                 for sign, V in family.members)
    # new coordinates U x shrink the torsion in even degrees
    assert abs(change + (-1) ** n * value) <= 1e-9 * (1 + abs(value))


@given(seeds)
def test_orientation_flip_invariance(seed):
    rng = generator(seed)
    family = random_torus_family(rng)
    X = torus()
    cell = str(rng.choice(sorted(X.cells)))
    assert abs(milnor_torsion(flip_cell(X, cell), family) - milnor_torsion(X, family)) <= 1e-9


@given(seeds)
def test_base_point_invariance(seed):
    rng = generator(seed)
    family = random_torus_family(rng)
    X = torus()
    cell = str(rng.choice(sorted(X.cells)))
    word = " ".join(rng.choice(["a", "b", "a^-1", "b^-1"], size=int(rng.integers(1, 3))))
    moved = conjugate_cell(X, cell, word)
    assert abs(milnor_torsion(moved, family) - milnor_torsion(X, family)) <= 1e-9


def test_conjugation_changes_single_system():
    V = LocalSystem(1, {"a": [[6.0]], "b": [[2.5]]})
    moved = conjugate_cell(torus(), "eb", "a")
    assert abs(rho(build_cochain(moved, V)) - rho(build_cochain(torus(), V))) == pytest.approx(math.log(6))


@given(seeds)
def test_fiber_cohomology_is_unimodular(seed):
    rng = generator(seed)
    fiber = gen.random_complex(rng, max_degrees=3, max_dim=3, lo=0)
    from torsionkit.fibration import FibrationModel
    model = FibrationModel.mapping_torus(fiber, homotopic_perturbation_identity(rng, fiber))
    words = [parse_word(w) for w in ("t", "t^-1", "t t", "t^3")]
    defects = hilbert_unimodular_defects(model.cohomology_family(), words)
    assert max(abs(v) for v in defects.values()) <= 1e-9


def test_weighted_fiber_cohomology_is_unimodular():
    defects = hilbert_unimodular_defects(weighted_torus().cohomology_family(), [parse_word("t"), parse_word("t^2")])
    assert max(abs(v) for v in defects.values()) <= 1e-9
