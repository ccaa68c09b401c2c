"""Randomized verification drivers.

Each ``check_*`` function draws one random instance from ``rng`` and returns
a mapping from property name to its residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import generators as gen
from .cochain import (ChainContraction, ChainMap, build_contraction, cohomology_map,
                      harmonic_structure, long_exact_sequence, rho, rho_acyclic, rho_closed_forms,
                      rho_ses, t)
from .cwlocal import circle, torus
from .detline import rho_bar, rho_bar_LS
from .filtration import verify_filtered_torsion
from .fibration import (FibrationModel, leray_serre, rho_LS, rho_LS_induced,
                        verify_fibration_formula, wang_torsion)
from .linalg import log_vol

PROPERTY_TOL = 1e-9


def homotopic_perturbation(rng, f: ChainMap) -> ChainMap:
    """``f + d h + h c`` for a random degreewise ``h``."""
    C, D = f.source, f.target
    h = {n: rng.normal(size=(D.dim(n - 1), C.dim(n))) for n in f.degrees}
    maps = {}
    for n in f.degrees:
        m = f.map(n) + D.diff(n - 1) @ h[n]
        if n + 1 in h:
            m = m + h[n + 1] @ C.diff(n)
        maps[n] = m
    return ChainMap(C, D, maps)


def alternative_contraction(rng, contraction: ChainContraction) -> ChainContraction:
    """Another contraction ``γ + c k - k c`` with ``k`` of degree ``-2``."""
    A = contraction.complex
    k = {n: rng.normal(size=(A.dim(n - 2), A.dim(n))) for n in A.degrees}
    maps = {}
    for n in A.degrees:
        m = contraction.map(n) + A.diff(n - 2) @ k[n]
        if n + 1 in k:
            m = m - k[n + 1] @ A.diff(n)
        maps[n] = m
    return ChainContraction(A, maps)


def check_homotopy(rng) -> float:
    C = gen.random_complex(rng)
    _, f = gen.random_equivalence(rng, C)
    return abs(t(homotopic_perturbation(rng, f)) - t(f))


def check_composition(rng) -> float:
    C = gen.random_complex(rng)
    D, f = gen.random_equivalence(rng, C)
    _, g = gen.random_equivalence(rng, D)
    return abs(t(g @ f) - t(f) - t(g))


def check_exactness(rng) -> float:
    # vertical equivalences point from the lower row to the upper row
    lower = gen.random_ses(rng)
    upper, (f, g, h) = gen.conjugate_ses(rng, lower)
    return abs(t(f) - t(g) + t(h) - (rho_ses(lower) - rho_ses(upper)))


def check_sum_formula(rng) -> float:
    ses = gen.random_ses(rng)
    C, D, E = ses.sub, ses.middle, ses.quotient
    HC, HD, HE = (harmonic_structure(X) for X in (C, D, E))
    les = long_exact_sequence(ses, HC, HD, HE)
    return abs(rho(D) - rho(C) - rho(E) - (rho_acyclic(les) - rho_ses(ses)))


def check_transformation(rng) -> float:
    C = gen.random_complex(rng)
    D, f = gen.random_equivalence(rng, C)
    HC, HD = harmonic_structure(C), harmonic_structure(D)
    correction = sum((-1) ** n * log_vol(cohomology_map(f, n, HC, HD))
                     for n in C.degrees if HC.gram(n).size)
    return abs(rho(C) - rho(D) - (t(f) - correction))


def check_contraction_independence(rng) -> float:
    A = gen.random_complex(rng, acyclic=True)
    other = alternative_contraction(rng, build_contraction(A))
    return abs(rho_acyclic(A, other) - rho_acyclic(A))


def check_closed_forms(rng) -> dict[str, float]:
    C = gen.random_complex(rng)
    first, laplacian = rho_closed_forms(C)
    return {"closed_form": abs(first - rho(C)), "closed_forms_agree": abs(first - laplacian)}


PROPERTY_CHECKS: dict[str, Callable] = {
    "homotopy_invariance": check_homotopy,
    "composition": check_composition,
    "exactness": check_exactness,
    "sum_formula": check_sum_formula,
    "transformation": check_transformation,
    "contraction_independence": check_contraction_independence,
}


def check_props(rng) -> dict[str, float]:
    return {name: fn(rng) for name, fn in PROPERTY_CHECKS.items()}


def check_filtered(rng) -> dict[str, float]:
    report = verify_filtered_torsion(gen.random_filtered(rng))
    # scaled so that the pass threshold is 1
    return {"filtered_torsion": report.difference / report.tolerance}


def random_fibration(rng) -> FibrationModel:
    """Random mapping torus or product with a small random fiber."""
    fiber = gen.random_complex(rng, max_degrees=3, max_dim=3, lo=0)
    kind = int(rng.integers(0, 3))
    if kind == 0:
        return FibrationModel.product(torus() if rng.integers(0, 2) else circle(), fiber)
    return FibrationModel.mapping_torus(fiber, homotopic_perturbation_identity(rng, fiber))


def homotopic_perturbation_identity(rng, F, scale: float = 0.4) -> ChainMap:
    """``1 + d h + h d``, an automorphism chain homotopic to the identity."""
    while True:
        h = {n: scale * rng.normal(size=(F.dim(n - 1), F.dim(n))) for n in F.degrees}
        maps = {}
        for n in F.degrees:
            m = np.eye(F.dim(n)) + F.diff(n - 1) @ h[n]
            if n + 1 in h:
                m = m + h[n + 1] @ F.diff(n)
            maps[n] = m
        if all(not m.size or np.linalg.cond(m) < 1e3 for m in maps.values()):
            return ChainMap(F, F, maps)


def check_fibration(rng) -> dict[str, float]:
    model = random_fibration(rng)
    report = verify_fibration_formula(model)
    data = leray_serre(model)
    out = {"fibration_formula": report.residual / report.tolerance,
           "ls_routes": abs(rho_LS(data) - rho_LS_induced(data)) / PROPERTY_TOL}
    if model.base.dimension == 1:
        out["wang"] = abs(wang_torsion(model) - report.rho_LS) / PROPERTY_TOL
    return out


def check_detline(rng) -> dict[str, float]:
    C = gen.random_complex(rng)
    H = harmonic_structure(C)
    model = random_fibration(rng)
    data = leray_serre(model)
    return {"rho_bar": abs(rho_bar(C, H).log_magnitude - rho(C, H)) / PROPERTY_TOL,
            "rho_bar_LS": abs(rho_bar_LS(data).log_magnitude - rho_LS(data)) / PROPERTY_TOL}


def _props_scaled(rng) -> dict[str, float]:
    out = {k: v / PROPERTY_TOL for k, v in check_props(rng).items()}
    out.update({k: v / PROPERTY_TOL for k, v in check_closed_forms(rng).items()})
    return out


# every suite reports residuals normalized by their tolerance: pass means <= 1
SUITES: dict[str, Callable] = {
    "props2_9": _props_scaled,
    "filtered": check_filtered,
    "fibration": check_fibration,
    "detline": check_detline,
}


@dataclass
class SuiteResult:
    kind: str
    count: int
    seed: int
    passed: int
    worst: dict[str, float] = field(default_factory=dict)
    failures: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed == self.count


def run_suite(kind: str, count: int, seed: int) -> SuiteResult:
    """Run ``count`` instances; instance ``i`` uses its own generator seeded by ``(seed, i)``."""
    fn = SUITES[kind]
    result = SuiteResult(kind, count, seed, 0)
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        residuals = fn(rng)
        for name, value in residuals.items():
            result.worst[name] = max(result.worst.get(name, 0.0), float(value))
        if all(v <= 1.0 for v in residuals.values()):
            result.passed += 1
        else:
            result.failures.append(i)
    return result
