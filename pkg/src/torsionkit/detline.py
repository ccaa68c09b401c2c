"""Determinant lines at the level of norms.

Elements are stored by the logarithm of their magnitude relative to the
canonical unit (any Gram-orthonormal basis). Signs are not tracked.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cochain import (CochainComplex, CohomologyStructure, check_structure, harmonic_structure,
                      is_acyclic, rho_acyclic)
from .errors import DimensionMismatch, NotAcyclic, NotNested, SingularMap
from .linalg import (DEFAULT_TOL, HilbertSpace, LinearMap, Tolerance, as_columns, complement,
                     log_vol, orth, pinv)


@dataclass(frozen=True)
class DetLine:
    """Formal tensor product of determinant lines ``det(V)^{±1}``."""

    factors: tuple[tuple[str, int], ...] = ()

    @classmethod
    def of(cls, name: str, exponent: int = 1) -> "DetLine":
        return cls(((name, exponent),))

    def _counts(self) -> Counter:
        c = Counter()
        for name, e in self.factors:
            c[name] += e
        return c

    def normalized(self) -> "DetLine":
        return DetLine(tuple(sorted((n, e) for n, e in self._counts().items() if e)))

    def tensor(self, other: "DetLine") -> "DetLine":
        return DetLine(self.factors + other.factors).normalized()

    def dual(self) -> "DetLine":
        return DetLine(tuple((n, -e) for n, e in self.factors))

    @property
    def unit_norm(self) -> float:
        return 1.0

    def __eq__(self, other) -> bool:
        return isinstance(other, DetLine) and self.normalized().factors == other.normalized().factors

    def __hash__(self):
        return hash(self.normalized().factors)

    def __str__(self) -> str:
        if not self.factors:
            return "R"
        return " ⊗ ".join(f"det({n})" if e == 1 else f"det({n})^{e}" for n, e in self.normalized().factors)


@dataclass(frozen=True)
class DetElement:
    line: DetLine
    log_magnitude: float

    @property
    def magnitude(self) -> float:
        return math.exp(self.log_magnitude)

    def tensor(self, other: "DetElement") -> "DetElement":
        return DetElement(self.line.tensor(other.line), self.log_magnitude + other.log_magnitude)

    def inverse(self) -> "DetElement":
        return DetElement(self.line.dual(), -self.log_magnitude)

    def __mul__(self, other: "DetElement") -> "DetElement":
        return self.tensor(other)


def det_of_map(f: LinearMap, domain: str = "V", codomain: str = "W",
               tol: Tolerance = DEFAULT_TOL) -> DetElement:
    """``det(f) ∈ det(V)* ⊗ det(W)`` for an invertible map."""
    if f.domain.dim != f.codomain.dim:
        raise SingularMap("a map between spaces of different dimension has no determinant")
    line = DetLine.of(domain, -1).tensor(DetLine.of(codomain, 1))
    return DetElement(line, log_vol(f, tol))


def _slogabsdet(m: np.ndarray) -> float:
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"basis matrix has shape {m.shape}")
    if not m.size:
        return 0.0
    sign, logdet = np.linalg.slogdet(m)
    if sign == 0:
        raise SingularMap("collected vectors do not form a basis")
    return float(logdet)


def _structure_on_basis(C: CochainComplex, H: CohomologyStructure, n: int) -> np.ndarray:
    """Orthonormal basis of the ``H`` structure as cocycles in orthonormal coordinates."""
    reps = H.rep(C, n)
    if not reps.shape[1]:
        return np.zeros((C.dim(n), 0))
    return C.to_orthonormal(n) @ reps @ H.space(n).from_orthonormal()


def _complex_line(C: CochainComplex, prefix: str, sign: int) -> DetLine:
    line = DetLine()
    for n in C.degrees:
        line = line.tensor(DetLine.of(f"{prefix}^{n}", sign * (-1) ** n))
    return line


def rho_bar(C: CochainComplex, H: CohomologyStructure | None = None) -> DetElement:
    """Torsion element of ``C`` computed from Milnor-style bases.

    In each degree ``n`` the basis ``[b^n | h^n | s^n]`` is assembled from an
    orthonormal basis ``b^n`` of the coboundaries, an ``H``-orthonormal set of
    class representatives ``h^n`` and lifts ``s^n`` of ``b^{n+1}``; the log
    magnitude is ``Σ_n (-1)^{n+1} ln|det[b^n | h^n | s^n]|``.
    """
    tol = C.tol
    acyclic = is_acyclic(C)
    if H is None and not acyclic:
        raise NotAcyclic("a cohomology structure is required for a complex with cohomology")
    if H is not None:
        check_structure(C, H)
    total = 0.0
    boundaries = {C.lo: np.zeros((C.dim(C.lo), 0))}
    for n in C.degrees:
        c = C.on_diff(n) if n < C.hi else np.zeros((0, C.dim(n)))
        image = orth(c, tol, C.scale) if c.size else np.zeros((c.shape[0], 0))
        lifts = pinv(c, tol, C.scale) @ image if image.shape[1] else np.zeros((C.dim(n), 0))
        boundaries[n + 1] = image
        h = _structure_on_basis(C, H, n) if H is not None else np.zeros((C.dim(n), 0))
        basis = np.hstack([boundaries[n], h, lifts])
        total += (-1) ** (n + 1) * _slogabsdet(basis)
    line = _complex_line(C, "C", -1)
    if H is not None and not acyclic:
        line = line.tensor(_complex_line(C, "H", 1))
    return DetElement(line, total)


# --- flags ----------------------------------------------------------------------------------


def _flag_on(W: HilbertSpace, flag: Sequence[np.ndarray], tol: Tolerance) -> list[np.ndarray]:
    """Orthonormal bases (orthonormal coordinates of ``W``) of an ascending flag."""
    to_on = W.to_orthonormal()
    out = []
    for p, span in enumerate(flag):
        basis = orth(to_on @ as_columns(span, W.dim), tol) if W.dim else np.zeros((0, 0))
        if out and out[-1].shape[1]:
            residual = out[-1] - basis @ (basis.T @ out[-1])
            if np.max(np.abs(residual)) > tol.eq_tol:
                raise NotNested(f"F_{p - 1} is not contained in F_{p}")
        out.append(basis)
    if not out or out[-1].shape[1] != W.dim:
        raise NotNested("the last flag member must be the whole space")
    return out


def piece_bases(W: HilbertSpace, flag: Sequence[np.ndarray],
                tol: Tolerance = DEFAULT_TOL) -> list[np.ndarray]:
    """Orthonormal bases of ``F_p ⊖ F_{p-1}`` (orthonormal coordinates of ``W``).

    Gram matrices for graded pieces passed to :func:`rho_bar_fil` are taken
    in these bases.
    """
    levels = _flag_on(W, flag, tol)
    out, prev = [], np.zeros((W.dim, 0))
    for basis in levels:
        out.append(complement(prev, basis, tol))
        prev = basis
    return out


def _three_term(sub: np.ndarray, mid: np.ndarray, piece: np.ndarray, piece_gram: np.ndarray) -> float:
    """Log norm of ``det(A) ⊗ det(B/A) → det(B)`` with ``A``, ``B`` carrying the ambient structure."""
    # write everything in an orthonormal basis of B
    a = mid.T @ sub
    q = mid.T @ piece
    spaces = [HilbertSpace.euclidean(a.shape[1]), HilbertSpace.euclidean(mid.shape[1]),
              HilbertSpace(piece_gram)]
    C = CochainComplex(0, spaces, [a, q.T], check=False)
    return rho_acyclic(C)


def rho_bar_fil(W: HilbertSpace, flag: Sequence[np.ndarray],
                piece_grams: Mapping[int, np.ndarray] | None = None,
                tol: Tolerance = DEFAULT_TOL) -> DetElement:
    """Canonical isomorphism ``⊗_p det(F_p/F_{p-1}) → det(W)`` for an ascending flag.

    Graded pieces carry quotient structures unless ``piece_grams[p]`` is
    given (in the bases of :func:`piece_bases`). The value is assembled one
    step at a time from three-term sequences ``F_{p-1} → F_p → F_p/F_{p-1}``.
    """
    levels = _flag_on(W, flag, tol)
    pieces = piece_bases(W, flag, tol)
    grams = dict(piece_grams or {})
    total = 0.0
    for p, (level, piece) in enumerate(zip(levels, pieces)):
        g = np.asarray(grams.get(p, np.eye(piece.shape[1])), dtype=float).reshape(piece.shape[1], piece.shape[1])
        HilbertSpace(g)
        prev = levels[p - 1] if p else np.zeros((W.dim, 0))
        total += _three_term(prev, level, piece, g)
    line = DetLine.of("W", 1)
    for p in range(len(levels)):
        line = line.tensor(DetLine.of(f"F_{p}/F_{p - 1}", -1))
    return DetElement(line, total)


# --- the Leray–Serre element ------------------------------------------------------------------


def rho_bar_LS(data) -> DetElement:
    """Compose ``det H(B; H(F)) → det E_2 → … → det E_∞ → det gr H(E) → det H(E)``.

    ``U_2`` is taken against the induced ``E_2`` structures, page torsions
    come from :func:`rho_bar` and the last step from :func:`rho_bar_fil` on
    the filtration of each ``H^N(E)``.
    """
    S = data.spectral
    tol = data.model.tol
    total = 0.0
    for (p, q), U in data.U2.items():
        total += (-1) ** (p + q) * det_of_map(U, tol=tol).log_magnitude
    for r in range(2, S.r_max + 1):
        for p0, q0, page in S.page_complexes(r):
            total += (-1) ** (p0 + q0) * rho_bar(page, harmonic_structure(page)).log_magnitude
    for (p, q), m in S.psi.items():
        if m.size:
            total -= (-1) ** (p + q) * det_of_map(
                LinearMap(HilbertSpace.euclidean(m.shape[1]), HilbertSpace.euclidean(m.shape[0]), m),
                tol=tol).log_magnitude
    C = data.filtered.complex
    for N in C.degrees:
        k = data.total_structure.rep(C, N).shape[1]
        if not k:
            continue
        flag = [S.F[(p, N - p)] for p in range(S.length, -1, -1)]
        flag = [f if f.size else np.zeros((k, 0)) for f in flag]
        total += (-1) ** N * rho_bar_fil(HilbertSpace.euclidean(k), flag, tol=tol).log_magnitude
    return DetElement(DetLine.of("H(B;H(F))", -1).tensor(DetLine.of("H(E)", 1)), total)
