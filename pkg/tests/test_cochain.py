import math

import numpy as np
import pytest
from hypothesis import given

from torsionkit import generators as gen
from torsionkit.cochain import (ChainMap, CochainComplex, CohomologyStructure, ShortExactSequence,
                                betti, build_contraction, cone, harmonic_cohomology,
                                harmonic_structure, identity_map, is_acyclic, rho, rho_acyclic,
                                rho_closed_form, rho_closed_forms, rho_ses, t)
from torsionkit.errors import (DimensionMismatch, NotAcyclic, NotChainMap,
                               NotEquivalence, NotExact, NotSquareZero)
from torsionkit.linalg import HilbertSpace
from torsionkit.suites import (check_composition, check_contraction_independence, check_exactness,
                               check_homotopy, check_sum_formula, check_transformation)

from helpers import concentrated, generator, seeds, two_term

LN2 = math.log(2)


def test_differentials_must_square_to_zero():
    spaces = [HilbertSpace.euclidean(1)] * 3
    with pytest.raises(NotSquareZero):
        CochainComplex(0, spaces, [np.ones((1, 1)), np.ones((1, 1))])


def test_harmonic_of_zero_differential_is_everything():
    C = two_term(np.zeros((2, 3)))
    assert harmonic_cohomology(C, 0).dim == 3
    assert harmonic_cohomology(C, 1).dim == 2


def test_harmonic_of_acyclic_is_zero():
    C = two_term(np.diag([2.0, 3.0]))
    assert is_acyclic(C)
    assert harmonic_cohomology(C, 0).dim == harmonic_cohomology(C, 1).dim == 0


def test_circle_cellular_complex_cohomology():
    C = two_term([[0.0]])
    assert betti(C, 0) == betti(C, 1) == 1


def test_contraction_of_scalar_complex():
    gamma = build_contraction(two_term([[2.0]]))
    assert gamma.map(1)[0, 0] == pytest.approx(0.5)


def test_contraction_of_identity_is_identity_backwards():
    gamma = build_contraction(two_term(np.eye(3)))
    assert np.allclose(gamma.map(1), np.eye(3))


def test_contraction_requires_acyclic():
    with pytest.raises(NotAcyclic):
        build_contraction(two_term([[0.0]]))


@given(seeds)
def test_contraction_identity(seed):
    A = gen.random_complex(generator(seed), acyclic=True)
    assert build_contraction(A).residual() <= 1e-9


def test_rho_acyclic_examples():
    assert rho_acyclic(two_term([[2.0]])) == pytest.approx(LN2, abs=1e-14)
    assert rho_acyclic(two_term(np.eye(3))) == pytest.approx(0.0, abs=1e-14)
    assert rho_acyclic(two_term(np.diag([2.0, 3.0]))) == pytest.approx(math.log(6), abs=1e-14)


def test_rho_acyclic_odd_start_flips_sign():
    assert rho_acyclic(two_term([[2.0]], lo=1)) == pytest.approx(-LN2, abs=1e-14)


def test_cone_of_identity_is_acyclic():
    C = two_term([[0.0, 1.0]])
    assert is_acyclic(cone(identity_map(C)))


def test_cone_of_zero_map_has_cohomology():
    C = concentrated(1, 0)
    assert not is_acyclic(cone(ChainMap(C, C, {0: [[0.0]]})))


def test_cone_of_scalar():
    C = concentrated(1, 0)
    K = cone(ChainMap(C, C, {0: [[3.0]]}))
    assert (K.lo, K.hi) == (0, 1)
    assert K.diff(0)[0, 0] == pytest.approx(3.0)


def test_torsion_of_maps():
    C = concentrated(1, 1)
    assert t(identity_map(C)) == pytest.approx(0.0, abs=1e-14)
    assert t(ChainMap(C, C, {1: [[2.0]]})) == pytest.approx(-LN2, abs=1e-14)


def test_torsion_requires_equivalence():
    C = concentrated(1, 0)
    with pytest.raises(NotEquivalence):
        t(ChainMap(C, C, {0: [[0.0]]}))


def test_chain_maps_must_commute():
    C = two_term([[1.0]])
    with pytest.raises(NotChainMap):
        ChainMap(C, C, {0: [[1.0]], 1: [[2.0]]})


@given(seeds)
def test_torsion_of_isomorphism_is_alternating_log_vol(seed):
    rng = generator(seed)
    C = gen.random_complex(rng)
    D, f = gen.conjugate(rng, C)
    expected = sum((-1) ** n * np.linalg.slogdet(f.on_map(n))[1] for n in C.degrees if C.dim(n))
    assert abs(t(f) - expected) <= 1e-9 * (1 + abs(expected))


def test_rho_examples():
    assert rho(two_term([[2.0]])) == pytest.approx(LN2, abs=1e-14)
    assert rho(two_term(np.zeros((2, 2)))) == pytest.approx(0.0, abs=1e-14)
    assert rho(two_term([[0.0]])) == pytest.approx(0.0, abs=1e-14)


def test_rho_depends_on_cohomology_gram():
    C = two_term([[0.0]])
    H = harmonic_structure(C).with_gram(0, [[4.0]])
    # the degree-0 class has length 2, so i shrinks its unit vector by half
    assert rho(C, H) == pytest.approx(LN2, abs=1e-12)


def test_rho_rejects_wrong_structure_size():
    C = two_term([[0.0]])
    with pytest.raises(DimensionMismatch):
        rho(C, CohomologyStructure({}, {}))


def test_closed_form_examples():
    assert rho_closed_form(two_term([[2.0]])) == pytest.approx(LN2, abs=1e-14)
    assert rho_closed_form(two_term(np.zeros((3, 2)))) == 0.0


def split_sequence(C, E):
    from torsionkit.linalg import direct_sum
    spaces = [direct_sum(C.space(n), E.space(n)) for n in C.degrees]
    diffs = [np.block([[C.diff(n), np.zeros((C.dim(n + 1), E.dim(n)))],
                       [np.zeros((E.dim(n + 1), C.dim(n))), E.diff(n)]]) for n in range(C.lo, C.hi)]
    D = CochainComplex(C.lo, spaces, diffs)
    inc = ChainMap(C, D, {n: np.vstack([np.eye(C.dim(n)), np.zeros((E.dim(n), C.dim(n)))])
                          for n in C.degrees})
    proj = ChainMap(D, E, {n: np.hstack([np.zeros((E.dim(n), C.dim(n))), np.eye(E.dim(n))])
                           for n in C.degrees})
    return ShortExactSequence(inc, proj)


def test_rho_ses_split_orthogonal_is_zero():
    rng = np.random.default_rng(3)
    C = gen.random_complex(rng, lo=0, euclidean=True, max_degrees=3)
    E = gen.random_complex(rng, lo=0, euclidean=True, max_degrees=3)
    # match degree ranges by padding with zero spaces
    lo, hi = 0, max(C.hi, E.hi)
    pad = lambda X: CochainComplex(lo, [X.space(n) for n in range(lo, hi + 1)],
                                   [X.diff(n) for n in range(lo, hi)])
    assert rho_ses(split_sequence(pad(C), pad(E))) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("degree", [0, 1, 2])
def test_rho_ses_single_column(degree):
    C, D, E = concentrated(1, degree), concentrated(1, degree), concentrated(0, degree)
    ses = ShortExactSequence(ChainMap(C, D, {degree: [[2.0]]}), ChainMap(D, E, {}))
    assert rho_ses(ses) == pytest.approx((-1) ** degree * LN2, abs=1e-14)


def test_rho_ses_middle_scaling():
    C, D, E = concentrated(1, 0), concentrated(2, 0), concentrated(1, 0)
    base = ShortExactSequence(ChainMap(C, D, {0: [[1.0], [0.0]]}), ChainMap(D, E, {0: [[0.0, 1.0]]}))
    scaled = ShortExactSequence(ChainMap(C, D, {0: [[3.0], [0.0]]}), ChainMap(D, E, {0: [[0.0, 1.0]]}))
    assert rho_ses(base) == pytest.approx(0.0, abs=1e-14)
    assert rho_ses(scaled) - rho_ses(base) == pytest.approx(math.log(3), abs=1e-14)


def test_rho_ses_requires_exactness():
    C, D, E = concentrated(1, 0), concentrated(1, 0), concentrated(1, 0)
    ses = ShortExactSequence(ChainMap(C, D, {0: [[1.0]]}), ChainMap(D, E, {0: [[1.0]]}))
    with pytest.raises(NotExact):
        rho_ses(ses)


PROPERTY_TOL = 1e-9


@given(seeds)
def test_homotopy_invariance(seed):
    assert check_homotopy(generator(seed)) <= PROPERTY_TOL


@given(seeds)
def test_composition(seed):
    assert check_composition(generator(seed)) <= PROPERTY_TOL


@given(seeds)
def test_exactness(seed):
    assert check_exactness(generator(seed)) <= PROPERTY_TOL


@given(seeds)
def test_sum_formula(seed):
    assert check_sum_formula(generator(seed)) <= PROPERTY_TOL


@given(seeds)
def test_transformation(seed):
    assert check_transformation(generator(seed)) <= PROPERTY_TOL


@given(seeds)
def test_contraction_independence(seed):
    assert check_contraction_independence(generator(seed)) <= PROPERTY_TOL


@given(seeds)
def test_closed_forms_match_rho(seed):
    C = gen.random_complex(generator(seed))
    first, laplacian = rho_closed_forms(C)
    assert abs(first - rho(C)) <= PROPERTY_TOL
    assert abs(first - laplacian) <= PROPERTY_TOL


@given(seeds)
def test_acyclic_rho_agrees_with_rho_acyclic(seed):
    A = gen.random_complex(generator(seed), acyclic=True)
    assert abs(rho(A) - rho_acyclic(A)) <= PROPERTY_TOL
