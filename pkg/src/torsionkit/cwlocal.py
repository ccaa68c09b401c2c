"""Finite CW complexes with local coefficient systems.

A group word is a sequence of letters ``(name, exponent)``; the transport
along a word is the ordered product of the generator matrices raised to the
given exponents. Boundaries of cells are formal sums of
``(integer coefficient, word, face)`` terms.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cochain import CochainComplex, CohomologyStructure, rho
from .errors import (BoundaryNotSquareZero, DimensionMismatch, NotUnimodularWarning,
                     SingularInduced, SingularMap)
from .linalg import DEFAULT_TOL, HilbertSpace, Tolerance, sum_log_sv

Letter = tuple[str, int]
Word = tuple[Letter, ...]

_LETTER = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\^(-?\d+))?$")


def parse_word(text: str | Sequence) -> Word:
    """``"a b^-1 a^2"`` (or a list of such tokens) to a tuple of letters."""
    if isinstance(text, str):
        tokens = text.split()
    else:
        tokens = [str(t) for t in text]
    out: list[Letter] = []
    for tok in tokens:
        if tok in ("1", "e"):
            continue
        m = _LETTER.match(tok)
        if not m:
            raise ValueError(f"bad letter {tok!r}")
        exp = int(m.group(2)) if m.group(2) else 1
        if exp:
            out.append((m.group(1), exp))
    return tuple(out)


def coerce_word(word) -> Word:
    if isinstance(word, str):
        return parse_word(word)
    word = tuple(word)
    if all(isinstance(x, (tuple, list)) for x in word):
        return tuple((str(g), int(e)) for g, e in word)
    return parse_word(word)


def format_word(word: Word) -> str:
    return " ".join(g if e == 1 else f"{g}^{e}" for g, e in word)


def inverse_word(word: Word) -> Word:
    return tuple((g, -e) for g, e in reversed(word))


@dataclass(frozen=True)
class LocalSystem:
    """Fiber ``R^d`` with a Gram and one invertible matrix per generator."""

    fiber_dim: int
    generators: Mapping[str, np.ndarray]
    fiber_gram: np.ndarray | None = None
    tol: Tolerance = DEFAULT_TOL

    def __post_init__(self):
        d = self.fiber_dim
        gens = {}
        for name, m in self.generators.items():
            a = np.asarray(m, dtype=float).reshape(d, d) if d else np.zeros((0, 0))
            if d:
                try:
                    sum_log_sv(a, self.tol)
                except SingularMap as exc:
                    raise SingularMap(f"generator {name!r} is not invertible") from exc
            gens[name] = a
        object.__setattr__(self, "generators", gens)
        g = np.eye(d) if self.fiber_gram is None else np.asarray(self.fiber_gram, dtype=float)
        object.__setattr__(self, "fiber_gram", g.reshape(d, d) if d else np.zeros((0, 0)))
        HilbertSpace(self.fiber_gram)

    @classmethod
    def trivial(cls, dim: int = 1, names: Iterable[str] = (), gram=None) -> "LocalSystem":
        return cls(dim, {n: np.eye(dim) for n in names}, gram)

    @classmethod
    def scalar(cls, name: str, value: float) -> "LocalSystem":
        return cls(1, {name: np.array([[float(value)]])})

    @property
    def fiber(self) -> HilbertSpace:
        return HilbertSpace(self.fiber_gram)

    def generator(self, name: str) -> np.ndarray:
        # letters absent from the system act trivially
        m = self.generators.get(name)
        return np.eye(self.fiber_dim) if m is None else m

    def transport(self, word: Word | str) -> np.ndarray:
        word = coerce_word(word)
        out = np.eye(self.fiber_dim)
        for name, exp in word:
            m = self.generator(name)
            out = out @ np.linalg.matrix_power(m if exp > 0 else np.linalg.inv(m), abs(exp))
        return out


@dataclass(frozen=True)
class BoundaryTerm:
    coefficient: int
    word: Word
    face: str


@dataclass(frozen=True)
class CWComplexData:
    """Cells per dimension and the equivariant boundary of each positive-dimensional cell."""

    cells: Mapping[int, Sequence[str]]
    boundary: Mapping[str, Sequence[BoundaryTerm]] = field(default_factory=dict)

    def __post_init__(self):
        cells = {int(k): tuple(v) for k, v in self.cells.items()}
        object.__setattr__(self, "cells", cells)
        bd = {c: tuple(t if isinstance(t, BoundaryTerm)
                       else BoundaryTerm(int(t[0]), coerce_word(t[1]), t[2]) for t in terms)
              for c, terms in self.boundary.items()}
        object.__setattr__(self, "boundary", bd)
        dim_of = self.dimension_of
        for c, terms in bd.items():
            if c not in dim_of:
                raise DimensionMismatch(f"boundary given for unknown cell {c!r}")
            for term in terms:
                if dim_of.get(term.face) != dim_of[c] - 1:
                    raise DimensionMismatch(f"cell {c!r}: face {term.face!r} has wrong dimension")

    @property
    def dimension_of(self) -> dict[str, int]:
        return {c: n for n, cs in self.cells.items() for c in cs}

    @property
    def dimension(self) -> int:
        return max((n for n, cs in self.cells.items() if cs), default=0)

    def count(self, n: int) -> int:
        return len(self.cells.get(n, ()))

    def euler_characteristic(self) -> int:
        return sum((-1) ** n * len(cs) for n, cs in self.cells.items())

    def generators(self) -> set[str]:
        return {g for terms in self.boundary.values() for t in terms for g, _ in t.word}

    def incidence(self, n: int, transport) -> np.ndarray:
        """Block matrix of ``C^n -> C^{n+1}`` given a word-to-matrix function."""
        lower, upper = self.cells.get(n, ()), self.cells.get(n + 1, ())
        probe = transport(())
        d = probe.shape[0]
        m = np.zeros((len(upper) * d, len(lower) * d))
        index = {c: i for i, c in enumerate(lower)}
        for j, e in enumerate(upper):
            for term in self.boundary.get(e, ()):
                i = index[term.face]
                m[j * d:(j + 1) * d, i * d:(i + 1) * d] += term.coefficient * transport(term.word)
        return m


def point() -> CWComplexData:
    return CWComplexData({0: ["pt"]})


def circle(generator: str = "t") -> CWComplexData:
    """One 0-cell ``v`` and one 1-cell ``e`` with boundary ``(t - 1) v``."""
    return CWComplexData({0: ["v"], 1: ["e"]},
                         {"e": [BoundaryTerm(1, ((generator, 1),), "v"),
                                BoundaryTerm(-1, (), "v")]})


def torus(a: str = "a", b: str = "b") -> CWComplexData:
    """Standard CW torus; the 2-cell boundary is the Fox derivative of ``a b a⁻¹ b⁻¹``."""
    A, B = ((a, 1),), ((b, 1),)
    aba = ((a, 1), (b, 1), (a, -1))
    abab = ((a, 1), (b, 1), (a, -1), (b, -1))
    return CWComplexData(
        {0: ["v"], 1: ["ea", "eb"], 2: ["f"]},
        {"ea": [BoundaryTerm(1, A, "v"), BoundaryTerm(-1, (), "v")],
         "eb": [BoundaryTerm(1, B, "v"), BoundaryTerm(-1, (), "v")],
         "f": [BoundaryTerm(1, (), "ea"), BoundaryTerm(-1, aba, "ea"),
               BoundaryTerm(1, A, "eb"), BoundaryTerm(-1, abab, "eb")]})


def build_cochain(X: CWComplexData, V: LocalSystem) -> CochainComplex:
    """Cellular cochains: one fiber copy per cell, differential entries ``Σ coef · V(word)``."""
    top = X.dimension
    d = V.fiber_dim
    spaces = []
    for n in range(top + 1):
        k = X.count(n)
        spaces.append(HilbertSpace(np.kron(np.eye(k), V.fiber_gram)) if k and d
                      else HilbertSpace.euclidean(0))
    diffs = [X.incidence(n, V.transport) for n in range(top)]
    C = CochainComplex(0, spaces, diffs, V.tol, check=False)
    defect = C.square_zero_defect()
    if defect > V.tol.eq_tol:
        raise BoundaryNotSquareZero(f"boundary does not square to zero (defect {defect:.3e})")
    return C


# --- alternating families ---------------------------------------------------------


@dataclass(frozen=True)
class AlternatingSystemFamily:
    """``Σ_q sign_q · V^q`` over a shared generator alphabet."""

    members: Sequence[tuple[int, LocalSystem]]

    def __post_init__(self):
        for s, _ in self.members:
            if s not in (1, -1):
                raise ValueError("signs must be +1 or -1")

    @classmethod
    def alternating(cls, systems: Sequence[LocalSystem]) -> "AlternatingSystemFamily":
        return cls([((-1) ** q, V) for q, V in enumerate(systems)])

    def alphabet(self) -> set[str]:
        return set().union(*[set(V.generators) for _, V in self.members]) if self.members else set()


def as_family(V: LocalSystem | AlternatingSystemFamily) -> AlternatingSystemFamily:
    """A single system is the family with one positive member."""
    return AlternatingSystemFamily([(1, V)]) if isinstance(V, LocalSystem) else V


def unimodular_defects(family: LocalSystem | AlternatingSystemFamily,
                       words: Iterable[Word] | None = None) -> dict[str, float]:
    """``Σ_q sign_q ln|det V^q(w)|`` per generator (or per supplied word)."""
    family = as_family(family)
    if words is None:
        words = [((g, 1),) for g in sorted(family.alphabet())]
    out = {}
    for w in words:
        total = 0.0
        for sign, V in family.members:
            if V.fiber_dim:
                total += sign * sum_log_sv(V.transport(w), V.tol)
        out[format_word(w)] = total
    return out


def hilbert_unimodular_defects(family: LocalSystem | AlternatingSystemFamily,
                               words: Iterable[Word] | None = None) -> dict[str, float]:
    """``Σ_q sign_q [[V^q_w]]`` computed against the fiber Grams."""
    from .linalg import LinearMap, log_vol

    family = as_family(family)
    if words is None:
        words = [((g, 1),) for g in sorted(family.alphabet())]
    out = {}
    for w in words:
        total = 0.0
        for sign, V in family.members:
            if V.fiber_dim:
                total += sign * log_vol(LinearMap(V.fiber, V.fiber, V.transport(w)), V.tol)
        out[format_word(w)] = total
    return out


def is_unimodular(family: LocalSystem | AlternatingSystemFamily, tol: Tolerance = DEFAULT_TOL) -> bool:
    return all(abs(v) <= tol.eq_tol for v in unimodular_defects(family).values())


def milnor_torsion(X: CWComplexData, V: LocalSystem | AlternatingSystemFamily,
                   H: CohomologyStructure | Sequence[CohomologyStructure | None] | None = None) -> float:
    """Milnor torsion of ``X`` with coefficients in a system or an alternating family.

    For a family the result is ``Σ_q sign_q ρ(C(X; V^q), H^q)``; a family that
    fails the unimodularity check triggers :class:`NotUnimodularWarning`.
    """
    if isinstance(V, LocalSystem):
        return rho(build_cochain(X, V), H)
    if not is_unimodular(V):
        warnings.warn("family is not unimodular; the value depends on base-point choices",
                      NotUnimodularWarning, stacklevel=2)
    structures = list(H) if H is not None else [None] * len(V.members)
    return sum(sign * rho(build_cochain(X, Vq), Hq)
               for (sign, Vq), Hq in zip(V.members, structures))


# --- the Φ homomorphism ----------------------------------------------------------------

GroupRingElement = Sequence[tuple[float, Word]]


def induced_matrix(u: Sequence[Sequence[GroupRingElement]], V: LocalSystem) -> np.ndarray:
    """Substitute ``V`` into a square matrix over the group ring."""
    k = len(u)
    d = V.fiber_dim
    m = np.zeros((k * d, k * d))
    for i, row in enumerate(u):
        if len(row) != k:
            raise DimensionMismatch("group-ring matrix must be square")
        for j, entry in enumerate(row):
            block = np.zeros((d, d))
            for coef, word in entry:
                block += float(coef) * V.transport(coerce_word(word))
            m[i * d:(i + 1) * d, j * d:(j + 1) * d] = block
    return m


def phi_hom(u: Sequence[Sequence[GroupRingElement]],
            family: LocalSystem | AlternatingSystemFamily) -> float:
    """``Σ_q sign_q ln|det u^q|``."""
    total = 0.0
    for sign, V in as_family(family).members:
        m = induced_matrix(u, V)
        if not m.size:
            continue
        try:
            total += sign * sum_log_sv(m, V.tol)
        except SingularMap as exc:
            raise SingularInduced(f"induced matrix is singular: {exc}") from exc
    return total


def rebased_cochain(X: CWComplexData, V: LocalSystem, n: int,
                    u: Sequence[Sequence[GroupRingElement]]) -> CochainComplex:
    """Cochains of ``X`` after the degree-``n`` basis change ``u`` (same Grams).

    The new coordinates are ``U x`` with ``U`` the induced matrix, so
    ``c'^n = c^n U⁻¹`` and ``c'^{n-1} = U c^{n-1}``.
    """
    C = build_cochain(X, V)
    U = induced_matrix(u, V)
    if U.shape[0] != C.dim(n):
        raise DimensionMismatch(f"basis change has size {U.shape[0]}, C^{n} has dimension {C.dim(n)}")
    try:
        inv = np.linalg.inv(U)
    except np.linalg.LinAlgError as exc:
        raise SingularInduced("basis change is singular") from exc
    diffs = []
    for k in range(C.lo, C.hi):
        m = C.diff(k)
        if k == n:
            m = m @ inv
        if k + 1 == n:
            m = U @ m
        diffs.append(m)
    return CochainComplex(C.lo, [C.space(k) for k in C.degrees], diffs, V.tol)


def flip_cell(X: CWComplexData, cell: str) -> CWComplexData:
    """Reverse the orientation of one cell."""
    boundary = {}
    for e, terms in X.boundary.items():
        boundary[e] = [BoundaryTerm(-t.coefficient if (e == cell) != (t.face == cell) else t.coefficient,
                                    t.word, t.face) for t in terms]
    return CWComplexData(X.cells, boundary)


def conjugate_cell(X: CWComplexData, cell: str, word: Word | str) -> CWComplexData:
    """Move the chosen lift of ``cell`` by ``word``."""
    w = coerce_word(word)
    boundary = {}
    for e, terms in X.boundary.items():
        new = []
        for t in terms:
            wd = t.word
            if e == cell:
                wd = w + wd
            if t.face == cell:
                wd = wd + inverse_word(w)
            new.append(BoundaryTerm(t.coefficient, wd, t.face))
        boundary[e] = new
    return CWComplexData(X.cells, boundary)
