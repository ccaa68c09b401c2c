"""Finite Hilbert cochain complexes and their torsion invariants."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .errors import (DimensionMismatch, NotAcyclic, NotChainMap, NotEquivalence,
                     NotExact, NotSquareZero, TorsionError)
from .linalg import (DEFAULT_TOL, HilbertSpace, LinearMap, Subspace, Tolerance,
                     as_columns, direct_sum, null, opnorm, orth, pinv, sum_log_nonzero_sv, sum_log_sv)


def _zeros(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols))


class CochainComplex:
    """Cochain complex of finite-dimensional Hilbert spaces.

    ``spaces[k]`` sits in degree ``lo + k`` and ``differentials[k]`` maps
    degree ``lo + k`` to ``lo + k + 1``. Everything outside the listed
    degrees is zero.
    """

    def __init__(self, lo: int, spaces: Sequence[HilbertSpace],
                 differentials: Sequence, tol: Tolerance = DEFAULT_TOL, check: bool = True):
        spaces = list(spaces)
        diffs = list(differentials)
        if len(diffs) == len(spaces) and diffs and np.size(diffs[-1]) == 0:
            diffs = diffs[:-1]
        if len(spaces) and len(diffs) != len(spaces) - 1:
            raise DimensionMismatch(
                f"{len(spaces)} spaces need {len(spaces) - 1} differentials, got {len(diffs)}")
        self.lo = int(lo)
        self.spaces = tuple(spaces)
        self.tol = tol
        mats = []
        for k, d in enumerate(diffs):
            m = np.asarray(d, dtype=float)
            shape = (spaces[k + 1].dim, spaces[k].dim)
            m = m.reshape(shape) if m.size else _zeros(*shape)
            if m.shape != shape:
                raise DimensionMismatch(f"differential in degree {lo + k} has shape {m.shape}, "
                                        f"expected {shape}")
            m.setflags(write=False)
            mats.append(m)
        self.differentials = tuple(mats)
        if check:
            self.check_square_zero()

    @property
    def hi(self) -> int:
        return self.lo + len(self.spaces) - 1

    @property
    def degrees(self) -> range:
        return range(self.lo, self.hi + 1)

    def space(self, n: int) -> HilbertSpace:
        if self.lo <= n <= self.hi:
            return self.spaces[n - self.lo]
        return HilbertSpace.euclidean(0)

    def dim(self, n: int) -> int:
        return self.space(n).dim

    def diff(self, n: int) -> np.ndarray:
        if self.lo <= n < self.hi:
            return self.differentials[n - self.lo]
        return _zeros(self.dim(n + 1), self.dim(n))

    def diff_map(self, n: int) -> LinearMap:
        return LinearMap(self.space(n), self.space(n + 1), self.diff(n))

    def euler_characteristic(self) -> int:
        return sum((-1) ** n * self.dim(n) for n in self.degrees)

    def to_orthonormal(self, n: int) -> np.ndarray:
        return self.space(n).to_orthonormal()

    def from_orthonormal(self, n: int) -> np.ndarray:
        return self.space(n).from_orthonormal()

    @cached_property
    def _on_diffs(self) -> dict[int, np.ndarray]:
        return {n: self.to_orthonormal(n + 1) @ self.diff(n) @ self.from_orthonormal(n)
                for n in range(self.lo - 1, self.hi + 1)}

    @cached_property
    def scale(self) -> float:
        """Reference magnitude for rank decisions: the largest differential norm,
        but never below the unit length of orthonormal coordinates."""
        return max([opnorm(m) for m in self._on_diffs.values()] + [1.0])

    def on_diff(self, n: int) -> np.ndarray:
        """Differential in orthonormal coordinates."""
        if n in self._on_diffs:
            return self._on_diffs[n]
        return _zeros(self.dim(n + 1), self.dim(n))

    def square_zero_defect(self) -> float:
        worst = 0.0
        for n in range(self.lo, self.hi - 1):
            a, b = self.on_diff(n), self.on_diff(n + 1)
            prod = b @ a
            if prod.size:
                scale = max(1.0, opnorm(a) * opnorm(b))
                worst = max(worst, float(np.max(np.abs(prod))) / scale)
        return worst

    def check_square_zero(self):
        defect = self.square_zero_defect()
        if defect > self.tol.eq_tol:
            raise NotSquareZero(f"differentials do not square to zero (defect {defect:.3e})")

    def orthonormalized(self) -> "CochainComplex":
        """Isometric copy written in orthonormal coordinates."""
        return CochainComplex(self.lo, [HilbertSpace.euclidean(s.dim) for s in self.spaces],
                              [self.on_diff(n) for n in range(self.lo, self.hi)],
                              self.tol, check=False)

    def negated(self) -> "CochainComplex":
        return CochainComplex(self.lo, self.spaces, [-d for d in self.differentials],
                              self.tol, check=False)

    def shifted(self, k: int) -> "CochainComplex":
        """Re-grade so that old degree ``n`` becomes ``n + k``; no sign change."""
        return CochainComplex(self.lo + k, self.spaces, self.differentials, self.tol, check=False)

    def __repr__(self) -> str:
        dims = [s.dim for s in self.spaces]
        return f"CochainComplex(lo={self.lo}, dims={dims})"


FiniteHilbertCochainComplex = CochainComplex


# --- harmonic model ----------------------------------------------------------


def _harmonic_on(C: CochainComplex, n: int) -> np.ndarray:
    stacked = np.vstack([C.on_diff(n), C.on_diff(n - 1).T])
    return null(stacked, C.tol, C.scale) if C.dim(n) else _zeros(0, 0)


def harmonic_cohomology(C: CochainComplex, n: int) -> Subspace:
    """``ker c^n ∩ ker (c^{n-1})*`` as a subspace of ``C^n``."""
    return Subspace(C.space(n), C.from_orthonormal(n) @ _harmonic_on(C, n))


def betti(C: CochainComplex, n: int) -> int:
    return _harmonic_on(C, n).shape[1] if C.dim(n) else 0


def is_acyclic(C: CochainComplex) -> bool:
    return all(betti(C, n) == 0 for n in C.degrees)


def laplacian(C: CochainComplex, n: int) -> np.ndarray:
    """``Δ^n = (c^n)* c^n + c^{n-1} (c^{n-1})*`` in orthonormal coordinates."""
    a, b = C.on_diff(n), C.on_diff(n - 1)
    return a.T @ a + b @ b.T


# --- contractions and the acyclic torsion ----------------------------------------


@dataclass(frozen=True)
class ChainContraction:
    """Maps ``γ^n: C^n -> C^{n-1}`` in reference coordinates."""

    complex: CochainComplex
    maps: Mapping[int, np.ndarray]

    def map(self, n: int) -> np.ndarray:
        m = self.maps.get(n)
        return m if m is not None else _zeros(self.complex.dim(n - 1), self.complex.dim(n))

    def residual(self) -> float:
        C = self.complex
        worst = 0.0
        for n in C.degrees:
            lhs = C.diff(n - 1) @ self.map(n) + self.map(n + 1) @ C.diff(n)
            if lhs.size:
                worst = max(worst, float(np.max(np.abs(lhs - np.eye(C.dim(n))))))
        return worst


def build_contraction(C: CochainComplex) -> ChainContraction:
    """The contraction ``γ = c* Δ⁺``."""
    if not is_acyclic(C):
        raise NotAcyclic("complex has nonzero cohomology")
    maps = {}
    for n in C.degrees:
        maps[n] = C.from_orthonormal(n - 1) @ _gamma_on(C, n) @ C.to_orthonormal(n)
    return ChainContraction(C, maps)


def _gamma_on(C: CochainComplex, n: int) -> np.ndarray:
    # On an acyclic complex c* Δ⁺ equals the Moore-Penrose inverse of c^{n-1};
    # the latter avoids squaring singular values.
    return pinv(C.on_diff(n - 1), C.tol, C.scale)


def _even_to_odd(C: CochainComplex, gamma_on) -> np.ndarray:
    evens = [n for n in C.degrees if n % 2 == 0]
    odds = [n for n in C.degrees if n % 2 != 0]
    col_off, off = {}, 0
    for n in evens:
        col_off[n], off = off, off + C.dim(n)
    row_off, roff = {}, 0
    for n in odds:
        row_off[n], roff = roff, roff + C.dim(n)
    m = _zeros(roff, off)
    for n in evens:
        cs = slice(col_off[n], col_off[n] + C.dim(n))
        if n + 1 in row_off:
            m[row_off[n + 1]:row_off[n + 1] + C.dim(n + 1), cs] += C.on_diff(n)
        if n - 1 in row_off:
            m[row_off[n - 1]:row_off[n - 1] + C.dim(n - 1), cs] += gamma_on(n)
    return m


def rho_acyclic(C: CochainComplex, contraction: ChainContraction | None = None) -> float:
    """``log_vol`` of ``c + γ : C^ev -> C^odd``."""
    if contraction is None:
        if not is_acyclic(C):
            raise NotAcyclic("complex has nonzero cohomology")

        def gamma_on(n):
            return _gamma_on(C, n)
    else:
        def gamma_on(n):
            return C.to_orthonormal(n - 1) @ contraction.map(n) @ C.from_orthonormal(n)
    m = _even_to_odd(C, gamma_on)
    if m.shape[0] != m.shape[1]:
        raise NotAcyclic(f"even/odd dimensions differ: {m.shape}")
    try:
        return sum_log_sv(m, C.tol)
    except TorsionError as exc:
        raise NotAcyclic(str(exc)) from exc


# --- chain maps, cones, t(f) ---------------------------------------------------------


class ChainMap:
    """Degreewise maps ``f^n: C^n -> D^n`` commuting with the differentials."""

    def __init__(self, source: CochainComplex, target: CochainComplex,
                 maps: Mapping[int, object], check: bool = True):
        self.source = source
        self.target = target
        mats = {}
        for n in self.degrees:
            shape = (target.dim(n), source.dim(n))
            raw = maps.get(n)
            m = _zeros(*shape) if raw is None or np.size(raw) == 0 else \
                np.asarray(raw, dtype=float).reshape(shape)
            m.setflags(write=False)
            mats[n] = m
        extra = set(maps) - set(self.degrees)
        for n in extra:
            if np.size(maps[n]) and np.any(np.asarray(maps[n]) != 0):
                raise DimensionMismatch(f"map given in degree {n} where a complex vanishes")
        self.maps = mats
        if check:
            defect = self.commutation_defect()
            if defect > source.tol.eq_tol:
                raise NotChainMap(f"map does not commute with differentials (defect {defect:.3e})")

    @property
    def degrees(self) -> range:
        return range(min(self.source.lo, self.target.lo), max(self.source.hi, self.target.hi) + 1)

    def map(self, n: int) -> np.ndarray:
        m = self.maps.get(n)
        return m if m is not None else _zeros(self.target.dim(n), self.source.dim(n))

    def on_map(self, n: int) -> np.ndarray:
        return self.target.to_orthonormal(n) @ self.map(n) @ self.source.from_orthonormal(n)

    def commutation_defect(self) -> float:
        worst = 0.0
        for n in self.degrees:
            lhs = self.target.on_diff(n) @ self.on_map(n)
            rhs = self.on_map(n + 1) @ self.source.on_diff(n)
            if lhs.size:
                scale = max(1.0, opnorm(self.on_map(n)), opnorm(self.on_map(n + 1)))
                worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
        return worst

    def __matmul__(self, other: "ChainMap") -> "ChainMap":
        degs = set(self.degrees) | set(other.degrees)
        return ChainMap(other.source, self.target,
                        {n: self.map(n) @ other.map(n) for n in degs}, check=False)

    def __add__(self, other: "ChainMap") -> "ChainMap":
        return ChainMap(self.source, self.target,
                        {n: self.map(n) + other.map(n) for n in self.degrees}, check=False)


def identity_map(C: CochainComplex) -> ChainMap:
    return ChainMap(C, C, {n: np.eye(C.dim(n)) for n in C.degrees}, check=False)


def cone(f: ChainMap) -> CochainComplex:
    """``cone^n = C^n ⊕ D^{n-1}`` with differential ``(c, 0; f, -d)``."""
    C, D = f.source, f.target
    lo = min(C.lo, D.lo + 1)
    hi = max(C.hi, D.hi + 1)
    spaces = [direct_sum(C.space(n), D.space(n - 1)) for n in range(lo, hi + 1)]
    diffs = []
    for n in range(lo, hi):
        cn, dn1 = C.dim(n), D.dim(n - 1)
        cm, dm = C.dim(n + 1), D.dim(n)
        m = _zeros(cm + dm, cn + dn1)
        m[:cm, :cn] = C.diff(n)
        m[cm:, :cn] = f.map(n)
        m[cm:, cn:] = -D.diff(n - 1)
        diffs.append(m)
    return CochainComplex(lo, spaces, diffs, C.tol, check=False)


def t(f: ChainMap) -> float:
    """Torsion of a chain homotopy equivalence, ``ρ(cone f)``."""
    K = cone(f)
    try:
        return rho_acyclic(K)
    except NotAcyclic as exc:
        raise NotEquivalence(f"cone is not acyclic: {exc}") from exc


# --- cohomology structures ---------------------------------------------------------------


@dataclass(frozen=True)
class CohomologyStructure:
    """Hilbert structure on ``H(C)``.

    ``reps[n]`` holds cocycles (columns) representing a basis of ``H^n``;
    ``grams[n]`` is the inner product in that basis.
    """

    reps: Mapping[int, np.ndarray]
    grams: Mapping[int, np.ndarray]

    def rep(self, C: CochainComplex, n: int) -> np.ndarray:
        r = self.reps.get(n)
        return as_columns(r, C.dim(n)) if r is not None else _zeros(C.dim(n), 0)

    def gram(self, n: int) -> np.ndarray:
        g = self.grams.get(n)
        if g is None:
            return _zeros(0, 0)
        return np.atleast_2d(np.asarray(g, dtype=float)) if np.size(g) else _zeros(0, 0)

    def space(self, n: int) -> HilbertSpace:
        return HilbertSpace(self.gram(n))

    def with_gram(self, n: int, gram) -> "CohomologyStructure":
        grams = dict(self.grams)
        grams[n] = np.asarray(gram, dtype=float)
        return CohomologyStructure(self.reps, grams)


def harmonic_structure(C: CochainComplex) -> CohomologyStructure:
    reps, grams = {}, {}
    for n in C.degrees:
        k = harmonic_cohomology(C, n).basis
        if k.shape[1]:
            reps[n] = k
            grams[n] = np.eye(k.shape[1])
    return CohomologyStructure(reps, grams)


def check_structure(C: CochainComplex, H: CohomologyStructure):
    for n in C.degrees:
        b = betti(C, n)
        r = H.rep(C, n)
        if r.shape[1] != b or H.gram(n).shape != (b, b):
            raise DimensionMismatch(f"degree {n}: structure has {r.shape[1]} classes, "
                                    f"cohomology has dimension {b}")
        if b:
            HilbertSpace(H.gram(n))
            image = C.on_diff(n) @ C.to_orthonormal(n) @ r
            if image.size and np.max(np.abs(image)) > C.tol.eq_tol * max(1.0, np.linalg.norm(r)):
                raise DimensionMismatch(f"degree {n}: representatives are not cocycles")
            if np.linalg.matrix_rank(_harmonic_coords(C, n, r), tol=None) < b:
                raise DimensionMismatch(f"degree {n}: representatives are not independent")


def _harmonic_coords(C: CochainComplex, n: int, cocycles: np.ndarray) -> np.ndarray:
    k_on = _harmonic_on(C, n)
    return k_on.T @ C.to_orthonormal(n) @ cocycles


def class_coordinates(C: CochainComplex, n: int, H: CohomologyStructure, cocycles) -> np.ndarray:
    """Coordinates of the classes of ``cocycles`` in the basis carried by ``H``."""
    z = as_columns(cocycles, C.dim(n))
    r = H.rep(C, n)
    if r.shape[1] == 0:
        return _zeros(0, z.shape[1])
    basis_h = _harmonic_coords(C, n, r)
    return np.linalg.solve(basis_h, _harmonic_coords(C, n, z))


def cohomology_map(f: ChainMap, n: int, HC: CohomologyStructure,
                   HD: CohomologyStructure) -> LinearMap:
    """``H^n(f)`` between the given structures."""
    C, D = f.source, f.target
    m = class_coordinates(D, n, HD, f.map(n) @ HC.rep(C, n))
    return LinearMap(HC.space(n), HD.space(n), m)


def cohomology_complex(C: CochainComplex, H: CohomologyStructure) -> CochainComplex:
    """``H(C)`` as a complex with zero differentials."""
    spaces = [H.space(n) for n in C.degrees]
    return CochainComplex(C.lo, spaces, [_zeros(spaces[k + 1].dim, spaces[k].dim)
                                         for k in range(len(spaces) - 1)], C.tol, check=False)


def rho(C: CochainComplex, H: CohomologyStructure | None = None) -> float:
    """``ρ(C) = -t(i)`` for the inclusion ``i: H(C) -> C`` of representatives."""
    if H is None:
        H = harmonic_structure(C)
    else:
        check_structure(C, H)
    HC = cohomology_complex(C, H)
    i = ChainMap(HC, C, {n: H.rep(C, n) for n in C.degrees}, check=False)
    return -t(i)


def rho_closed_forms(C: CochainComplex) -> tuple[float, float]:
    """The two closed forms of ``ρ`` for the harmonic structure.

    First ``Σ (-1)^p [[c̄^p]]``, then ``-Σ (-1)^p p ½ ln det Δ̄^p`` where
    ``Δ̄`` is the Laplacian on the orthogonal complement of the harmonic part.
    """
    first = sum((-1) ** p * sum_log_nonzero_sv(C.on_diff(p), C.tol, C.scale) for p in C.degrees)
    second = 0.0
    for p in C.degrees:
        # Δ^p = MᵀM with M stacking c^p over (c^{p-1})ᵀ; ½ ln det Δ̄^p = Σ ln σ(M)
        root = np.vstack([C.on_diff(p), C.on_diff(p - 1).T])
        second -= (-1) ** p * p * sum_log_nonzero_sv(root, C.tol, C.scale)
    return first, second


def rho_closed_form(C: CochainComplex) -> float:
    first, second = rho_closed_forms(C)
    if abs(first - second) > C.tol.eq_tol * (1 + abs(first)):
        raise TorsionError(f"closed forms disagree: {first!r} vs {second!r}")
    return first


# --- short exact sequences --------------------------------------------------------------------


@dataclass(frozen=True)
class ShortExactSequence:
    """``0 -> C -i-> D -p-> E -> 0``, exact in every degree."""

    inclusion: ChainMap
    projection: ChainMap

    def __post_init__(self):
        if self.inclusion.target is not self.projection.source:
            raise DimensionMismatch("inclusion target must be projection source")

    @property
    def sub(self) -> CochainComplex:
        return self.inclusion.source

    @property
    def middle(self) -> CochainComplex:
        return self.inclusion.target

    @property
    def quotient(self) -> CochainComplex:
        return self.projection.target

    @property
    def degrees(self) -> range:
        return range(min(self.sub.lo, self.middle.lo, self.quotient.lo),
                     max(self.sub.hi, self.middle.hi, self.quotient.hi) + 1)

    def column(self, n: int) -> CochainComplex:
        C, D, E = self.sub, self.middle, self.quotient
        return CochainComplex(0, [C.space(n), D.space(n), E.space(n)],
                              [self.inclusion.map(n), self.projection.map(n)], D.tol, check=False)


def rho_ses(ses: ShortExactSequence) -> float:
    total = 0.0
    for n in ses.degrees:
        col = ses.column(n)
        defect = col.square_zero_defect()
        if defect > col.tol.eq_tol or not is_acyclic(col):
            raise NotExact(f"column in degree {n} is not exact")
        total += (-1) ** n * rho_acyclic(col)
    return total


def long_exact_sequence(ses: ShortExactSequence, HC: CohomologyStructure,
                        HD: CohomologyStructure, HE: CohomologyStructure) -> CochainComplex:
    """The long exact cohomology sequence as an acyclic complex.

    Degree ``3n`` holds ``H^n(C)``, ``3n+1`` holds ``H^n(D)`` and ``3n+2``
    holds ``H^n(E)``. Connecting maps come from explicit lifts.
    """
    C, D, E = ses.sub, ses.middle, ses.quotient
    i, p = ses.inclusion, ses.projection
    degs = list(ses.degrees)
    spaces, diffs = [], []
    for n in degs:
        spaces += [HC.space(n), HD.space(n), HE.space(n)]
        diffs.append(cohomology_map(i, n, HC, HD).matrix)
        diffs.append(cohomology_map(p, n, HD, HE).matrix)
        e = HE.rep(E, n)
        if e.shape[1] and HC.rep(C, n + 1).shape[1]:
            lift = np.linalg.lstsq(p.map(n), e, rcond=None)[0]
            pushed = D.diff(n) @ lift
            back = np.linalg.lstsq(i.map(n + 1), pushed, rcond=None)[0]
            diffs.append(class_coordinates(C, n + 1, HC, back))
        else:
            diffs.append(_zeros(HC.space(n + 1).dim, e.shape[1]))
    return CochainComplex(3 * degs[0], spaces, diffs[:-1], C.tol, check=False)
