import math

import numpy as np
import pytest
from hypothesis import given

from torsionkit import generators as gen
from torsionkit.cochain import ChainMap, CochainComplex, betti, harmonic_structure, rho
from torsionkit.cwlocal import LocalSystem, build_cochain, circle, point, torus
from torsionkit.errors import InvalidModel, NotTwoRow, NotUnimodular
from torsionkit.fibration import (FibrationModel, base_torsion, circle_fiber, gysin_torsion,
                                  leray_serre, point_fiber, rho_LS, rho_LS_induced,
                                  skeletal_filtration, verify_fibration_formula, wang_torsion)
from torsionkit.linalg import HilbertSpace, log_vol
from torsionkit.suites import check_fibration, homotopic_perturbation_identity

from helpers import generator, seeds
from models import (CIRCLE_BASED, FIXTURES, SPHERE_FIBERED, WEIGHTED_LS, klein_bottle, point_base,
                    sphere_over_torus, torus_product, weighted_torus)
from test_filtration import nonzero_d2_example

EQ = 1e-9


def build(name):
    return FIXTURES[name][0]()


# --- models and the skeletal filtration -----------------------------------------------------


def test_point_base_gives_fiber():
    fiber = gen.random_complex(np.random.default_rng(8), lo=0)
    model = point_base(fiber)
    E = model.total
    assert [E.dim(n) for n in E.degrees] == [fiber.dim(n) for n in fiber.degrees]
    assert skeletal_filtration(model).length == 1
    assert rho(E) == pytest.approx(rho(fiber), abs=1e-12)


def test_torus_product_complex():
    model = torus_product()
    E = model.total
    assert [E.dim(n) for n in E.degrees] == [1, 2, 1]
    assert [betti(E, n) for n in E.degrees] == [1, 2, 1]
    assert skeletal_filtration(model).length == 2


def test_klein_bottle_complex():
    E = klein_bottle().total
    assert [E.dim(n) for n in E.degrees] == [1, 2, 1]
    assert [betti(E, n) for n in E.degrees] == [1, 1, 0]
    # the fiber class is sent to twice itself
    assert sorted(np.abs(E.diff(1)).ravel().tolist()) == [0.0, 2.0]


def test_product_total_is_tensor_product():
    fiber = gen.random_complex(np.random.default_rng(9), max_degrees=3, max_dim=3, lo=0)
    E = FibrationModel.product(torus(), fiber).total
    base = build_cochain(torus(), LocalSystem.trivial(1, ["a", "b"]))
    for n in E.degrees:
        assert E.dim(n) == sum(base.dim(p) * fiber.dim(n - p) for p in base.degrees)
    assert E.euler_characteristic() == 0


def test_transports_must_be_chain_maps():
    with pytest.raises(Exception):
        FibrationModel.mapping_torus(circle_fiber(), {0: [[1.0]], 1: [[1.0, 2.0]]})


def test_transports_must_be_equivalences():
    with pytest.raises(InvalidModel):
        FibrationModel.mapping_torus(circle_fiber(), {0: [[0.0]], 1: [[1.0]]})


# --- Leray–Serre data --------------------------------------------------------------------------


def test_product_e2_dimensions():
    fiber = gen.random_complex(np.random.default_rng(10), max_degrees=3, max_dim=3, lo=0)
    model = FibrationModel.product(torus(), fiber)
    S = leray_serre(model).spectral
    base_betti = [1, 2, 1]
    for p in range(3):
        for q in fiber.degrees:
            assert S.dim_E(2, p, q) == base_betti[p] * betti(fiber, q)


def test_scalar_mapping_torus_e2():
    # both cohomology classes of the fiber are doubled, so each twisted base complex is R --1--> R
    model = FibrationModel.mapping_torus(circle_fiber(), {0: [[2.0]], 1: [[2.0]]})
    S = leray_serre(model).spectral
    assert all(S.dim_E(2, p, q) == 0 for p, q in S.spots())


def test_point_base_identification_is_isometric():
    fiber = gen.random_complex(np.random.default_rng(11), lo=0)
    data = leray_serre(point_base(fiber))
    for U in data.U2.values():
        assert abs(log_vol(U)) <= 1e-12
        assert np.allclose(np.abs(np.linalg.svd(U.orthonormal_matrix(), compute_uv=False)), 1.0)


def test_fiberwise_acyclic_pages_vanish():
    model = build("fiberwise_acyclic")
    S = leray_serre(model).spectral
    assert all(S.dim_E(2, p, q) == 0 for p, q in S.spots())
    report = verify_fibration_formula(model)
    assert abs(report.rho_total) <= EQ
    assert abs(report.rho_LS) <= EQ
    assert abs(report.rho_total - model.base.euler_characteristic() * rho(model.fiber)) <= EQ


# --- the fibration formula ---------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_fixture_values(name):
    factory, total, ls = FIXTURES[name]
    report = verify_fibration_formula(factory())
    assert report.passed
    assert report.rho_total == pytest.approx(total, abs=1e-10)
    assert report.rho_LS == pytest.approx(ls, abs=1e-10)


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_leray_serre_routes_agree(name):
    data = leray_serre(build(name))
    assert abs(rho_LS(data) - rho_LS_induced(data)) <= EQ


def test_weighted_torus_correction_without_filtration():
    model = weighted_torus()
    # ρ(E) minus the base term, both computed without the skeletal filtration
    direct = rho(model.total) - base_torsion(model)
    assert direct == pytest.approx(WEIGHTED_LS, abs=1e-12)
    assert rho_LS(leray_serre(model)) == pytest.approx(WEIGHTED_LS, abs=1e-12)


def test_torus_correction_reconstructed():
    model = torus_product()
    report = verify_fibration_formula(model)
    expected = rho(model.total) - model.base.euler_characteristic() * rho(model.fiber) - base_torsion(model)
    assert report.rho_LS == pytest.approx(expected, abs=EQ)


def test_non_unimodular_family_is_rejected():
    model = FibrationModel.mapping_torus(point_fiber(), {0: [[2.0]]})
    with pytest.raises(NotUnimodular):
        verify_fibration_formula(model)


def test_raw_models_support_filtration_quantities_only():
    model = FibrationModel.raw(nonzero_d2_example())
    assert rho_LS(leray_serre(model)) == pytest.approx(math.log(2), abs=1e-12)
    with pytest.raises(InvalidModel):
        verify_fibration_formula(model)


@given(seeds)
def test_formula_on_random_models(seed):
    residuals = check_fibration(generator(seed))
    assert max(residuals.values()) <= 1.0


@given(seeds)
def test_other_total_structure(seed):
    rng = generator(seed)
    fiber = gen.random_complex(rng, max_degrees=3, max_dim=3, lo=0)
    model = FibrationModel.mapping_torus(fiber, homotopic_perturbation_identity(rng, fiber))
    H = harmonic_structure(model.total)
    for n in model.total.degrees:
        k = H.gram(n).shape[0]
        if k:
            H = H.with_gram(n, gen.random_gram(rng, k))
    assert verify_fibration_formula(model, total_structure=H).passed


@given(seeds)
def test_fiber_isometry_invariance(seed):
    rng = generator(seed)
    fiber = gen.random_complex(rng, max_degrees=3, max_dim=3, lo=0)
    change = {n: gen.random_invertible(rng, fiber.dim(n)) for n in fiber.degrees}
    # same Hilbert complex written in another basis
    moved = CochainComplex(
        fiber.lo,
        [HilbertSpace(change[n].T @ fiber.space(n).gram @ change[n]) for n in fiber.degrees],
        [np.linalg.solve(change[n + 1], fiber.diff(n) @ change[n]) for n in range(fiber.lo, fiber.hi)])
    base = torus() if rng.integers(0, 2) else circle()
    before = verify_fibration_formula(FibrationModel.product(base, fiber))
    after = verify_fibration_formula(FibrationModel.product(base, moved))
    for a, b in [(before.rho_total, after.rho_total), (before.euler_times_fiber, after.euler_times_fiber),
                 (before.base_term, after.base_term), (before.rho_LS, after.rho_LS)]:
        assert abs(a - b) <= EQ


# --- two-line splices --------------------------------------------------------------------------


@pytest.mark.parametrize("name", CIRCLE_BASED)
def test_wang_matches_correction(name):
    model = build(name)
    assert abs(wang_torsion(model) - rho_LS(leray_serre(model))) <= EQ


@pytest.mark.parametrize("name", SPHERE_FIBERED)
def test_gysin_matches_correction(name):
    model = build(name)
    assert abs(gysin_torsion(model) - rho_LS(leray_serre(model))) <= EQ


def test_identity_and_reflection_wang_vanish():
    assert wang_torsion(build("identity_torus")) == pytest.approx(0.0, abs=1e-12)
    assert wang_torsion(klein_bottle()) == pytest.approx(0.0, abs=1e-12)


def test_gysin_over_torus():
    model = sphere_over_torus()
    assert abs(gysin_torsion(model) - rho_LS(leray_serre(model))) <= EQ


def test_splices_see_nonzero_d2():
    model = FibrationModel.raw(nonzero_d2_example())
    assert wang_torsion(model) == pytest.approx(math.log(2), abs=1e-12)
    assert gysin_torsion(model) == pytest.approx(math.log(2), abs=1e-12)


def test_wang_needs_two_columns():
    with pytest.raises(NotTwoRow):
        wang_torsion(sphere_over_torus())


def test_gysin_needs_two_rows():
    fiber = build_cochain(torus(), LocalSystem.trivial(1, ["a", "b"]))
    with pytest.raises(NotTwoRow):
        gysin_torsion(FibrationModel.product(circle(), fiber))


@given(seeds)
def test_wang_on_random_mapping_tori(seed):
    rng = generator(seed)
    fiber = gen.random_complex(rng, max_degrees=3, max_dim=3, lo=0)
    model = FibrationModel.mapping_torus(fiber, homotopic_perturbation_identity(rng, fiber))
    assert abs(wang_torsion(model) - rho_LS(leray_serre(model))) <= EQ
