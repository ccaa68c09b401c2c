"""Filtered complexes, their spectral sequence and the filtered torsion.

All spectral objects are subspaces of concrete models: ``E_1^{p,q}`` is the
harmonic model of ``H^{p+q}(F_p/F_{p+1})`` written in orthonormal
coordinates, every ``Z_r``, ``B_r``, ``Z_∞``, ``B_∞`` is a subspace of it and
subquotients are realized as orthogonal complements. Spots are indexed by
``(p, q)`` with ``0 <= p < l``.

Internally the complex is first rewritten in orthonormal coordinates so
every ambient space is euclidean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .cochain import (CochainComplex, CohomologyStructure, _harmonic_on, check_structure,
                      harmonic_structure, rho)
from .errors import DimensionMismatch, InvalidFiltration
from .linalg import (DEFAULT_TOL, HilbertSpace, LinearMap, Subspace, as_columns, complement,
                     null, opnorm, orth, pinv, span_subspace, sum_log_sv)


class FilteredComplex:
    """Finite descending filtration ``C = F_0 ⊇ F_1 ⊇ … ⊇ F_l = 0``.

    ``levels[p][n]`` spans ``F_p`` in degree ``n`` (reference coordinates);
    missing degrees mean the zero subspace, except that ``F_0`` is always the
    whole complex.
    """

    def __init__(self, complex: CochainComplex, levels, check: bool = True):
        self.complex = C = complex
        self.tol = C.tol
        if len(levels) < 2:
            raise InvalidFiltration("a filtration needs at least F_0 and F_l")
        self.length = len(levels) - 1
        subs = []
        for p, lev in enumerate(levels):
            per = {}
            for n in C.degrees:
                raw = lev.get(n) if isinstance(lev, Mapping) else None
                span = _zero_span(C.dim(n)) if raw is None else as_columns(raw, C.dim(n))
                try:
                    per[n] = span_subspace(C.space(n), span, C.tol)
                except (ValueError, DimensionMismatch) as exc:
                    raise InvalidFiltration(f"F_{p} in degree {n}: {exc}") from exc
            subs.append(per)
        self.levels = subs
        # orthonormal coordinates of every level
        self._on = [{n: C.to_orthonormal(n) @ subs[p][n].basis for n in C.degrees}
                    for p in range(self.length + 1)]
        self.on_complex = C.orthonormalized()
        if check:
            self.validate()

    @property
    def degrees(self) -> range:
        return self.complex.degrees

    def validate(self):
        C, l = self.complex, self.length
        tol = C.tol
        for n in C.degrees:
            if self._on[0][n].shape[1] != C.dim(n):
                raise InvalidFiltration(f"F_0 must be the whole complex (degree {n})")
            if self._on[l][n].shape[1] != 0:
                raise InvalidFiltration(f"F_{l} must vanish (degree {n})")
        for p in range(l):
            for n in C.degrees:
                big, small = self._on[p][n], self._on[p + 1][n]
                if small.shape[1] and _residual(big, small) > tol.eq_tol:
                    raise InvalidFiltration(f"F_{p + 1} not contained in F_{p} (degree {n})")
        for p in range(l + 1):
            for n in C.degrees:
                img = self.on_complex.on_diff(n) @ self._on[p][n]
                target = self._on[p][n + 1] if n + 1 in C.degrees else np.zeros((0, 0))
                if img.size and _residual(target, img) > tol.eq_tol * max(1.0, opnorm(img)):
                    raise InvalidFiltration(f"differential does not preserve F_{p} (degree {n})")

    def level_on(self, p: int, n: int) -> np.ndarray:
        """Orthonormal basis of ``F_p^n`` in orthonormal coordinates."""
        if n not in self.complex.degrees:
            return np.zeros((0, 0))
        if p <= 0:
            return np.eye(self.complex.dim(n))
        if p >= self.length:
            return np.zeros((self.complex.dim(n), 0))
        return self._on[p][n]

    # quotient complexes F_a / F_b ---------------------------------------------------

    def quotient_basis(self, a: int, b: int, n: int) -> np.ndarray:
        return self._quotient(a, b)[0][n]

    def _quotient(self, a: int, b: int):
        a, b = _clamp(a, self.length), _clamp(b, self.length)
        key = (a, b)
        cache = self.__dict__.setdefault("_qcache", {})
        if key not in cache:
            C = self.on_complex
            bases = {n: complement(self.level_on(b, n), self.level_on(a, n), self.tol)
                     if b > a else np.zeros((C.dim(n), 0)) for n in C.degrees}
            diffs = [bases[n + 1].T @ C.diff(n) @ bases[n] for n in range(C.lo, C.hi)]
            Q = CochainComplex(C.lo, [HilbertSpace.euclidean(bases[n].shape[1]) for n in C.degrees],
                               diffs, self.tol, check=False)
            harm = {n: bases[n] @ _harmonic_on(Q, n) if Q.dim(n) else np.zeros((C.dim(n), 0))
                    for n in C.degrees}
            cache[key] = (bases, Q, harm)
        return cache[key]

    def quotient_complex(self, a: int, b: int) -> CochainComplex:
        return self._quotient(a, b)[1]

    def harmonic_on(self, a: int, b: int, n: int) -> np.ndarray:
        """Harmonic representatives of ``H^n(F_a/F_b)`` as orthonormal vectors of ``C^n``."""
        if n not in self.complex.degrees:
            return np.zeros((0, 0))
        return self._quotient(a, b)[2][n]

    def induced(self, src: tuple[int, int], dst: tuple[int, int], n: int) -> np.ndarray:
        """``H^n(F_a/F_b) -> H^n(F_a'/F_b')`` in harmonic coordinates."""
        return self.harmonic_on(*dst, n).T @ self.harmonic_on(*src, n)

    def connecting(self, a: int, b: int, c: int, n: int) -> np.ndarray:
        """Boundary ``H^n(F_a/F_b) -> H^{n+1}(F_b/F_c)`` in harmonic coordinates."""
        src = self.harmonic_on(a, b, n)
        dst = self.harmonic_on(b, c, n + 1)
        if not src.size or not dst.size:
            return np.zeros((dst.shape[1] if dst.ndim == 2 else 0, src.shape[1] if src.ndim == 2 else 0))
        return dst.T @ self.on_complex.on_diff(n) @ src


def _norm(m: np.ndarray) -> float:
    return max(opnorm(m), 1.0)


def _zero_span(dim: int) -> np.ndarray:
    return np.zeros((dim, 0))


def _clamp(p: int, length: int) -> int:
    return min(max(p, 0), length)


def _residual(basis: np.ndarray, vectors: np.ndarray) -> float:
    if vectors.size == 0:
        return 0.0
    if basis.size == 0:
        return float(np.max(np.linalg.norm(vectors, axis=0)))
    r = vectors - basis @ (basis.T @ vectors)
    return float(np.max(np.linalg.norm(r, axis=0)))


def subquotient_complex(FC: FilteredComplex, p: int) -> CochainComplex:
    """``F_p/F_{p+1}`` with the quotient Hilbert structures."""
    if not 0 <= p < FC.length:
        raise InvalidFiltration(f"p={p} outside 0..{FC.length - 1}")
    return FC.quotient_complex(p, p + 1)


def trivial_filtration(C: CochainComplex) -> FilteredComplex:
    return FilteredComplex(C, [{n: np.eye(C.dim(n)) for n in C.degrees}, {}])


# --- spectral sequence ---------------------------------------------------------


Spot = tuple[int, int]


@dataclass
class SpectralObjects:
    """Every object of the spectral sequence, keyed by ``(p, q, r)`` or ``(p, q)``.

    Subspaces are orthonormal bases (columns) inside the model of
    ``E_1^{p,q}``; maps are matrices between the orthonormal bases of the
    relevant subquotients.
    """

    length: int
    r_max: int
    e1_dim: dict[Spot, int]
    Z: dict[tuple[int, int, int], np.ndarray]
    B: dict[tuple[int, int, int], np.ndarray]
    Z_inf: dict[Spot, np.ndarray]
    B_inf: dict[Spot, np.ndarray]
    E: dict[tuple[int, int, int], np.ndarray]
    E_inf: dict[Spot, np.ndarray]
    d: dict[tuple[int, int, int], np.ndarray]
    gamma: dict[tuple[int, int, int], np.ndarray]
    phi: dict[tuple[int, int, int], np.ndarray]
    psi: dict[Spot, np.ndarray]
    F: dict[Spot, np.ndarray]
    e1_gram: dict[Spot, np.ndarray] = field(default_factory=dict)

    def spots(self) -> list[Spot]:
        return sorted(self.e1_dim)

    def dim_E(self, r: int, p: int, q: int) -> int:
        m = self.E.get((p, q, r))
        return 0 if m is None else m.shape[1]

    def dim_E_inf(self, p: int, q: int) -> int:
        m = self.E_inf.get((p, q))
        return 0 if m is None else m.shape[1]

    def page_dims(self, r: int) -> dict[Spot, int]:
        return {s: self.dim_E(r, *s) for s in self.spots()}

    def page_complexes(self, r: int) -> list[tuple[int, int, CochainComplex]]:
        """Complexes ``E_r^{p+r*, q-(r-1)*}`` for ``0 <= p < r`` as ``(p, q, complex)``."""
        starts = set()
        for (p, q) in self.spots():
            if self.dim_E(r, p, q) == 0:
                continue
            k = p // r
            starts.add((p - r * k, q + (r - 1) * k))
        out = []
        for p0, q0 in sorted(starts):
            spaces, diffs = [], []
            k = 0
            while p0 + r * k < self.length:
                p, q = p0 + r * k, q0 - (r - 1) * k
                spaces.append(HilbertSpace.euclidean(self.dim_E(r, p, q)))
                if k:
                    prev = (p - r, q + r - 1, r)
                    diffs.append(self.d.get(prev, np.zeros((spaces[-1].dim, spaces[-2].dim))))
                k += 1
            out.append((p0, q0, CochainComplex(0, spaces, diffs, check=False)))
        return out


def _e1_factor(e1_gram: Mapping[Spot, np.ndarray] | None, spot: Spot, dim: int) -> np.ndarray:
    """``Lᵀ`` sending harmonic coordinates of ``E_1`` to orthonormal coordinates."""
    if e1_gram is None or spot not in e1_gram:
        return np.eye(dim)
    return HilbertSpace(e1_gram[spot]).to_orthonormal()


def _cohomology_transform(C: CochainComplex, H: CohomologyStructure, n: int) -> np.ndarray:
    """Matrix from harmonic coordinates of ``H^n(C)`` to orthonormal coordinates of ``H``."""
    r = H.rep(C, n)
    if r.shape[1] == 0:
        return np.zeros((0, 0))
    k = _harmonic_on(C, n)
    t = k.T @ C.to_orthonormal(n) @ r
    return H.space(n).to_orthonormal() @ np.linalg.inv(t)


def spectral(FC: FilteredComplex, H: CohomologyStructure | None = None,
             e1_gram: Mapping[Spot, np.ndarray] | None = None,
             r_max: int | None = None) -> SpectralObjects:
    """Compute the spectral sequence of ``FC``.

    ``H`` is the Hilbert structure on ``H(C)`` (harmonic by default) and
    ``e1_gram`` optionally replaces the harmonic inner product of individual
    ``E_1`` spots (Gram in harmonic coordinates).
    """
    C, l, tol = FC.complex, FC.length, FC.tol
    if H is None:
        H = harmonic_structure(C)
    else:
        check_structure(C, H)
    span = C.hi - C.lo
    if r_max is None:
        r_max = l + span + 1
    spots: dict[Spot, int] = {}
    factor: dict[Spot, np.ndarray] = {}
    for p in range(l):
        for n in C.degrees:
            dim = FC.harmonic_on(p, p + 1, n).shape[1]
            if dim:
                spots[(p, n - p)] = dim
                factor[(p, n - p)] = _e1_factor(e1_gram, (p, n - p), dim)

    scale = FC.on_complex.scale

    def fac(p, q):
        return factor.get((p, q), np.zeros((0, 0)))

    def into(p, q, m):
        # a map landing in E_1^{p,q} harmonic coordinates -> orthonormal coordinates
        f = fac(p, q)
        return f @ m if f.size else np.zeros((0, m.shape[1] if m.ndim == 2 else 0))

    Z, B, E = {}, {}, {}
    Z_inf, B_inf, E_inf = {}, {}, {}
    lift: dict[tuple[int, int, int], np.ndarray] = {}
    for (p, q), dim in spots.items():
        n = p + q
        for r in range(1, r_max + 2):
            m = FC.induced((p, p + r), (p, p + 1), n)
            Z[(p, q, r)] = orth(into(p, q, m), tol, _norm(fac(p, q)))
            lift[(p, q, r)] = m
            dm = FC.connecting(p - r + 1, p, p + 1, n - 1)
            B[(p, q, r)] = orth(into(p, q, dm), tol, scale * _norm(fac(p, q))) if dm.size else np.zeros((dim, 0))
        Z_inf[(p, q)] = orth(into(p, q, FC.induced((p, l), (p, p + 1), n)), tol, _norm(fac(p, q)))
        dm = FC.connecting(0, p, p + 1, n - 1)
        B_inf[(p, q)] = orth(into(p, q, dm), tol, scale * _norm(fac(p, q))) if dm.size else np.zeros((dim, 0))
        for r in range(1, r_max + 2):
            E[(p, q, r)] = complement(B[(p, q, r)], Z[(p, q, r)], tol)
        E_inf[(p, q)] = complement(B_inf[(p, q)], Z_inf[(p, q)], tol)

    gamma, d, phi = {}, {}, {}
    for (p, q), dim in spots.items():
        n = p + q
        f_src = fac(p, q)
        for r in range(1, r_max + 1):
            dom = complement(Z[(p, q, r + 1)], Z[(p, q, r)], tol)
            tgt = (p + r, q - r + 1)
            if tgt in spots:
                cod = complement(B[(*tgt, r)], B[(*tgt, r + 1)], tol)
                m = lift[(p, q, r)]
                boundary = FC.connecting(p, p + r, p + r + 1, n)
                # orthonormal coords -> harmonic coords -> lift -> boundary -> orthonormal coords
                to_harm = np.linalg.inv(f_src)
                g = cod.T @ into(*tgt, boundary @ pinv(m, tol, 1.0) @ to_harm) @ dom
                e_src, e_tgt = E[(p, q, r)], E[(*tgt, r)]
                d[(p, q, r)] = e_tgt.T @ cod @ g @ dom.T @ e_src
            else:
                g = np.zeros((0, dom.shape[1]))
            gamma[(p, q, r)] = g
            # φ_r: harmonic part of the page complex at this spot -> E_{r+1}
            phi[(p, q, r)] = E[(p, q, r + 1)].T @ E[(p, q, r)]

    F, psi = {}, {}
    for n in C.degrees:
        t_on = _cohomology_transform(C, H, n)
        whole = FC.harmonic_on(0, l, n)
        for p in range(l + 1):
            sub = FC.harmonic_on(p, l, n)
            m = whole.T @ sub
            F[(p, n - p)] = orth(t_on @ m, tol, _norm(t_on)) if t_on.size else np.zeros((0, 0))
        for p in range(l):
            q = n - p
            dom = complement(F[(p + 1, q - 1)], F[(p, q)], tol) if F[(p, q)].size else F[(p, q)]
            if (p, q) not in spots:
                if dom.shape[1]:
                    raise InvalidFiltration(f"graded piece {(p, q)} has no E_∞ counterpart")
                continue
            m = whole.T @ FC.harmonic_on(p, l, n)
            push = FC.induced((p, l), (p, p + 1), n)
            to_harm = np.linalg.inv(t_on) if t_on.size else t_on
            psi[(p, q)] = E_inf[(p, q)].T @ into(p, q, push @ pinv(m, tol, 1.0) @ to_harm) @ dom

    return SpectralObjects(length=l, r_max=r_max, e1_dim=spots, Z=Z, B=B, Z_inf=Z_inf,
                           B_inf=B_inf, E=E, E_inf=E_inf, d=d, gamma=gamma, phi=phi, psi=psi,
                           F=F, e1_gram=dict(e1_gram or {}))


# --- consistency checks ------------------------------------------------------------------


def _contained(big: np.ndarray, small: np.ndarray) -> float:
    return _residual(big, small)


def inclusion_defects(S: SpectralObjects) -> dict[Spot, float]:
    """Largest containment residual along ``B_1 ⊂ … ⊂ B_∞ ⊂ Z_∞ ⊂ … ⊂ Z_1``."""
    out = {}
    for (p, q) in S.spots():
        worst = 0.0
        for r in range(1, S.r_max + 1):
            worst = max(worst, _contained(S.B[(p, q, r + 1)], S.B[(p, q, r)]),
                        _contained(S.Z[(p, q, r)], S.Z[(p, q, r + 1)]),
                        _contained(S.B_inf[(p, q)], S.B[(p, q, r)]),
                        _contained(S.Z[(p, q, r)], S.Z_inf[(p, q)]))
        worst = max(worst, _contained(S.Z_inf[(p, q)], S.B_inf[(p, q)]))
        out[(p, q)] = worst
    return out


def stabilization_defect(S: SpectralObjects) -> float:
    """Norm of the differentials that must vanish once ``r >= l``."""
    worst = 0.0
    for (p, q, r), m in S.d.items():
        if r >= S.length and m.size:
            worst = max(worst, opnorm(m))
    return worst


# --- torsion of the filtration ------------------------------------------------------


def _psi_term(S: SpectralObjects, tol) -> float:
    total = 0.0
    for (p, q), m in S.psi.items():
        total += (-1) ** (p + q) * sum_log_sv(m, tol)
    return total


def _page_term(S: SpectralObjects, r: int) -> float:
    total = 0.0
    for p0, q0, page in S.page_complexes(r):
        total += (-1) ** (p0 + q0) * rho(page)
    return total


def graded_torsion(FC: FilteredComplex) -> float:
    """``Σ_p ρ(F_p/F_{p+1})`` with harmonic structures."""
    return sum(rho(FC.quotient_complex(p, p + 1)) for p in range(FC.length))


def page_torsions(S: SpectralObjects, r_min: int = 1) -> dict[int, float]:
    return {r: _page_term(S, r) for r in range(r_min, S.r_max + 1)}


def rho_fil(FC: FilteredComplex, H: CohomologyStructure | None = None,
            S: SpectralObjects | None = None) -> float:
    if S is None:
        S = spectral(FC, H)
    return graded_torsion(FC) + sum(page_torsions(S, 1).values()) - _psi_term(S, FC.tol)


def e2_bases(S: SpectralObjects) -> dict[Spot, np.ndarray]:
    """Orthonormal bases of ``E_2`` spots inside ``E_1`` (the coordinates for E_2 Grams)."""
    return {(p, q): S.E[(p, q, 2)] for (p, q) in S.spots() if S.dim_E(2, p, q)}


def e1_gram_from_e2(S: SpectralObjects, e2_gram: Mapping[Spot, np.ndarray]) -> dict[Spot, np.ndarray]:
    """Inner products on ``E_1`` spots whose subquotient on ``E_2`` is ``e2_gram``.

    ``B_2``, the ``E_2`` part and the complement of ``Z_2`` are declared
    mutually orthogonal; only the middle block changes.
    """
    out = {}
    for spot, g2 in e2_gram.items():
        p, q = spot
        if spot not in S.e1_dim:
            if np.size(g2):
                raise DimensionMismatch(f"E_2 spot {spot} is zero")
            continue
        if S.e1_gram.get(spot) is not None:
            raise ValueError("re-equipping requires a spectral sequence with harmonic E_1")
        e2 = S.E[(p, q, 2)]
        g2 = np.atleast_2d(np.asarray(g2, dtype=float)) if np.size(g2) else np.zeros((0, 0))
        if g2.shape != (e2.shape[1], e2.shape[1]):
            raise DimensionMismatch(f"E_2 Gram at {spot} has shape {g2.shape}, "
                                    f"expected {(e2.shape[1],) * 2}")
        HilbertSpace(g2)
        dim = S.e1_dim[spot]
        rest = null(e2.T) if e2.shape[1] else np.eye(dim)
        out[spot] = rest @ rest.T + e2 @ g2 @ e2.T
    return out


def rho_fil_ge2(FC: FilteredComplex, e2_gram: Mapping[Spot, np.ndarray] | None = None,
                H: CohomologyStructure | None = None) -> float:
    """Page torsions for ``r >= 2`` minus the ``ψ`` term.

    ``e2_gram`` assigns Grams (in the bases of :func:`e2_bases` of the
    harmonic spectral sequence) to ``E_2`` spots; unspecified spots keep the
    induced structure.
    """
    S = spectral(FC, H)
    if e2_gram:
        S = spectral(FC, H, e1_gram=e1_gram_from_e2(S, e2_gram))
    return sum(page_torsions(S, 2).values()) - _psi_term(S, FC.tol)


def structure_change(S: SpectralObjects, e2_gram: Mapping[Spot, np.ndarray]) -> float:
    """``Σ (-1)^{p+q} [[U_2^{p,q}]]`` for the identity from the new ``E_2`` structure to the old."""
    total = 0.0
    for (p, q), g in e2_gram.items():
        g = np.atleast_2d(np.asarray(g, dtype=float)) if np.size(g) else np.zeros((0, 0))
        if not g.size:
            continue
        u = LinearMap(HilbertSpace(g), HilbertSpace.euclidean(g.shape[0]), np.eye(g.shape[0]))
        total += (-1) ** (p + q) * sum_log_sv(u.orthonormal_matrix())
    return total


# --- intermediate identities -------------------------------------------------------------


def gamma_term(S: SpectralObjects, tol=DEFAULT_TOL) -> float:
    """``Σ_{r,p,q} (-1)^{p+q} [[γ_r^{p,q}]]``."""
    total = 0.0
    for (p, q, r), g in S.gamma.items():
        if g.size:
            total += (-1) ** (p + q) * sum_log_sv(g, tol)
        elif g.shape[1]:
            raise InvalidFiltration(f"γ_{r}^{{{p},{q}}} has no target but a nonzero domain")
    return total


def main_step_sides(FC: FilteredComplex, H: CohomologyStructure | None = None) -> tuple[float, float]:
    """``ρ(C)`` and ``Σ ρ(F_p/F_{p+1}) + Σ[[γ]] - Σ[[ψ]]``."""
    S = spectral(FC, H)
    lhs = rho(FC.complex, H)
    rhs = graded_torsion(FC) + gamma_term(S, FC.tol) - _psi_term(S, FC.tol)
    return lhs, rhs


def final_step_sides(S: SpectralObjects, tol=DEFAULT_TOL) -> tuple[float, float]:
    """``Σ[[γ]]`` against the page-torsion sum over ``r >= 1``."""
    return gamma_term(S, tol), sum(page_torsions(S, 1).values())


@dataclass(frozen=True)
class FilteredTorsionReport:
    rho: float
    rho_fil: float
    difference: float
    tolerance: float
    passed: bool


def verify_filtered_torsion(FC: FilteredComplex,
                            H: CohomologyStructure | None = None) -> FilteredTorsionReport:
    lhs = rho(FC.complex, H)
    rhs = rho_fil(FC, H)
    diff = abs(lhs - rhs)
    tol = 1e-8 * (1 + abs(lhs))
    return FilteredTorsionReport(lhs, rhs, diff, tol, diff <= tol)
