"""Cellular fibration models and the Leray–Serre torsion.

A model is a finite CW base whose cells each carry a copy of a fiber
cochain complex; incidences of base cells act on fibers through chain-level
transports. The total complex uses ``δ = δ_base ⊗ T + (-1)^p · 1 ⊗ d_fiber``
and is filtered by base skeleta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .cochain import (ChainMap, CochainComplex, CohomologyStructure, betti, check_structure,
                      cohomology_map, cone, harmonic_structure, is_acyclic, rho, rho_acyclic)
from .cwlocal import (AlternatingSystemFamily, CWComplexData, LocalSystem, Word, build_cochain,
                      circle, hilbert_unimodular_defects, point)
from .errors import (DimensionMismatch, InvalidModel, NotTwoRow, NotUnimodular, SingularMap,
                     TorsionError)
from .filtration import (FilteredComplex, SpectralObjects, Spot, e1_gram_from_e2, page_torsions,
                         rho_fil_ge2, spectral, _psi_term)
from .linalg import DEFAULT_TOL, HilbertSpace, LinearMap, complement, log_vol, sum_log_sv


def _block_diag(*mats: np.ndarray) -> np.ndarray:
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    i = j = 0
    for m in mats:
        out[i:i + m.shape[0], j:j + m.shape[1]] = m
        i += m.shape[0]
        j += m.shape[1]
    return out


class FibrationModel:
    """Twisted product of a CW base and a fiber complex.

    ``transports`` maps base group generators to chain self-equivalences of
    the fiber; generators without an entry act as the identity. Words with
    negative exponents need invertible transports.
    """

    def __init__(self, base: CWComplexData, fiber: CochainComplex,
                 transports: Mapping[str, ChainMap] | None = None,
                 fiber_structure: CohomologyStructure | None = None):
        self.base = base
        self.fiber = fiber
        self.tol = fiber.tol
        self.transports = dict(transports or {})
        for name, T in self.transports.items():
            if T.source is not fiber or T.target is not fiber:
                if [T.source.dim(n) for n in fiber.degrees] != [fiber.dim(n) for n in fiber.degrees]:
                    raise InvalidModel(f"transport {name!r} is not a self-map of the fiber")
            if T.commutation_defect() > self.tol.eq_tol * max(1.0, fiber.scale):
                raise InvalidModel(f"transport {name!r} is not a chain map")
            if not is_acyclic(cone(T)):
                raise InvalidModel(f"transport {name!r} is not a homotopy equivalence")
        self.fiber_structure = fiber_structure or harmonic_structure(fiber)
        check_structure(fiber, self.fiber_structure)
        self._raw_filtered: FilteredComplex | None = None

    # constructors ------------------------------------------------------------------

    @classmethod
    def product(cls, base: CWComplexData, fiber: CochainComplex, **kw) -> "FibrationModel":
        return cls(base, fiber, {}, **kw)

    @classmethod
    def mapping_torus(cls, fiber: CochainComplex, transport: ChainMap | Mapping[int, np.ndarray],
                      generator: str = "t", **kw) -> "FibrationModel":
        if not isinstance(transport, ChainMap):
            transport = ChainMap(fiber, fiber, transport)
        return cls(circle(generator), fiber, {generator: transport}, **kw)

    @classmethod
    def raw(cls, filtered: FilteredComplex) -> "FibrationModel":
        """Wrap a filtered complex declared skeletal.

        Only quantities defined by the filtration alone (induced ``E_2``
        structures, ρ^LS, splices) are available for raw models.
        """
        model = cls.__new__(cls)
        model.base = None
        model.fiber = None
        model.tol = filtered.tol
        model.transports = {}
        model.fiber_structure = None
        model._raw_filtered = filtered
        return model

    @property
    def is_raw(self) -> bool:
        return self._raw_filtered is not None

    # transports --------------------------------------------------------------------

    def transport(self, word: Word, n: int) -> np.ndarray:
        """Fiber transport along ``word`` in fiber degree ``n``."""
        F = self.fiber
        out = np.eye(F.dim(n))
        for name, exp in word:
            T = self.transports.get(name)
            if T is None:
                continue
            m = T.map(n)
            if exp < 0:
                try:
                    m = np.linalg.inv(m)
                except np.linalg.LinAlgError as exc:
                    raise InvalidModel(f"transport {name!r} is not invertible in degree {n}") from exc
            out = out @ np.linalg.matrix_power(m, abs(exp))
        return out

    # total complex ---------------------------------------------------------------------

    @cached_property
    def layout(self) -> dict[int, list[tuple[int, str, int, int]]]:
        """Blocks of each total degree as ``(base_dim, cell, fiber_degree, offset)``."""
        if self.is_raw:
            raise InvalidModel("raw models have no cell layout")
        F, X = self.fiber, self.base
        out = {}
        for N in range(F.lo, F.hi + X.dimension + 1):
            blocks, offset = [], 0
            for p in range(X.dimension + 1):
                q = N - p
                if q not in F.degrees:
                    continue
                for c in X.cells.get(p, ()):
                    blocks.append((p, c, q, offset))
                    offset += F.dim(q)
            out[N] = blocks
        return out

    def _width(self, N: int) -> int:
        return sum(self.fiber.dim(q) for _, _, q, _ in self.layout[N])

    @cached_property
    def total(self) -> CochainComplex:
        if self.is_raw:
            return self._raw_filtered.complex
        F, X = self.fiber, self.base
        degrees = sorted(self.layout)
        spaces = [HilbertSpace(_block_diag(*[F.space(q).gram for _, _, q, _ in self.layout[N]]))
                  if self.layout[N] else HilbertSpace.euclidean(0) for N in degrees]
        diffs = []
        for N in degrees[:-1]:
            m = np.zeros((self._width(N + 1), self._width(N)))
            target = {(c, q): off for _, c, q, off in self.layout[N + 1]}
            for p, c, q, off in self.layout[N]:
                k = F.dim(q)
                if q + 1 in F.degrees and (c, q + 1) in target:
                    t = target[(c, q + 1)]
                    m[t:t + F.dim(q + 1), off:off + k] += (-1) ** p * F.diff(q)
                for e in X.cells.get(p + 1, ()):
                    for term in X.boundary.get(e, ()):
                        if term.face == c and (e, q) in target:
                            t = target[(e, q)]
                            m[t:t + k, off:off + k] += term.coefficient * self.transport(term.word, q)
            diffs.append(m)
        C = CochainComplex(degrees[0], spaces, diffs, self.tol, check=False)
        defect = C.square_zero_defect()
        if defect > self.tol.eq_tol:
            raise InvalidModel(f"transports are incompatible with the base relations (defect {defect:.3e})")
        return C

    def _levels(self) -> list[dict[int, np.ndarray]]:
        X = self.base
        levels = []
        for p in range(X.dimension + 2):
            lev = {}
            for N, blocks in self.layout.items():
                cols = [off + i for bp, _, q, off in blocks if bp >= p for i in range(self.fiber.dim(q))]
                lev[N] = np.eye(self._width(N))[:, cols]
            levels.append(lev)
        return levels

    @cached_property
    def filtered(self) -> FilteredComplex:
        if self.is_raw:
            return self._raw_filtered
        return FilteredComplex(self.total, self._levels())

    # coefficient systems on the base -----------------------------------------------------

    def fiber_betti(self) -> dict[int, int]:
        return {q: betti(self.fiber, q) for q in self.fiber.degrees}

    def cohomology_system(self, q: int) -> LocalSystem:
        """``H^q(F)`` as a local system in the coordinates of the fiber structure."""
        H = self.fiber_structure
        gens = {name: cohomology_map(T, q, H, H).matrix for name, T in self.transports.items()}
        b = H.rep(self.fiber, q).shape[1]
        return LocalSystem(b, gens, H.gram(q) if b else None, self.tol)

    def cohomology_family(self) -> AlternatingSystemFamily:
        return AlternatingSystemFamily([((-1) ** q, self.cohomology_system(q))
                                        for q in self.fiber.degrees])

    def base_complex(self, q: int) -> CochainComplex:
        return build_cochain(self.base, self.cohomology_system(q))

    def check_unimodular(self):
        defects = hilbert_unimodular_defects(self.cohomology_family())
        bad = {w: v for w, v in defects.items() if abs(v) > self.tol.eq_tol}
        if bad:
            raise NotUnimodular(f"alternating fiber cohomology is not unimodular: {bad}")

    # skeletal filtration -------------------------------------------------------------------

    def embed_cell(self, p: int, cell: str, q: int, vectors: np.ndarray) -> np.ndarray:
        """Place fiber cochains of degree ``q`` on ``cell`` inside the total degree ``p + q``."""
        N = p + q
        out = np.zeros((self._width(N), vectors.shape[1]))
        for bp, c, bq, off in self.layout[N]:
            if c == cell and bq == q:
                out[off:off + self.fiber.dim(q)] = vectors
                return out
        raise DimensionMismatch(f"no block for cell {cell!r} in degree {N}")


def skeletal_filtration(model: FibrationModel) -> FilteredComplex:
    return model.filtered


# --- Leray–Serre data -----------------------------------------------------------------------


@dataclass
class LeraySerreData:
    model: FibrationModel
    filtered: FilteredComplex
    spectral: SpectralObjects
    total_structure: CohomologyStructure
    base_structures: dict[int, CohomologyStructure]
    U2: dict[Spot, LinearMap]
    e2_gram: dict[Spot, np.ndarray] = field(default_factory=dict)

    @cached_property
    def transported_spectral(self) -> SpectralObjects:
        if not self.e2_gram:
            return self.spectral
        return spectral(self.filtered, self.total_structure,
                        e1_gram=e1_gram_from_e2(self.spectral, self.e2_gram))


def _u1_columns(model: FibrationModel, p: int, q: int) -> np.ndarray:
    """Cellular cochains ``C^p(B; H^q)`` (structure coordinates) as total cochains."""
    reps = model.fiber_structure.rep(model.fiber, q)
    b = reps.shape[1]
    cells = model.base.cells.get(p, ())
    N = p + q
    out = np.zeros((model._width(N), len(cells) * b))
    for i, c in enumerate(cells):
        out[:, i * b:(i + 1) * b] = model.embed_cell(p, c, q, reps)
    return out


def u1_matrix(model: FibrationModel, p: int, q: int) -> np.ndarray:
    """``C^p(B; H^q(F)) -> E_1^{p,q}`` in harmonic coordinates of ``E_1``."""
    FC = model.filtered
    N = p + q
    harm = FC.harmonic_on(p, p + 1, N)
    return harm.T @ FC.complex.to_orthonormal(N) @ _u1_columns(model, p, q)


def leray_serre(model: FibrationModel, total_structure: CohomologyStructure | None = None,
                base_structures: Mapping[int, CohomologyStructure] | None = None) -> LeraySerreData:
    """Spectral sequence of the skeletal filtration together with ``U_2``.

    ``base_structures[q]`` is a structure on ``H^*(B; H^q(F))``. For raw models
    ``U_2`` is the identity onto the induced ``E_2`` structures.
    """
    FC = model.filtered
    H = total_structure or harmonic_structure(FC.complex)
    S = spectral(FC, H)
    U2: dict[Spot, LinearMap] = {}
    grams: dict[Spot, np.ndarray] = {}
    structures: dict[int, CohomologyStructure] = {}
    if model.is_raw:
        for (p, q) in S.spots():
            k = S.dim_E(2, p, q)
            if k:
                U2[(p, q)] = LinearMap(HilbertSpace.euclidean(k), HilbertSpace.euclidean(k), np.eye(k))
        return LeraySerreData(model, FC, S, H, structures, U2, {})
    base_structures = dict(base_structures or {})
    for q in model.fiber.degrees:
        Bq = model.base_complex(q)
        Hq = base_structures.get(q) or harmonic_structure(Bq)
        check_structure(Bq, Hq)
        structures[q] = Hq
        for p in Bq.degrees:
            reps = Hq.rep(Bq, p)
            k = reps.shape[1]
            e2_dim = S.dim_E(2, p, q)
            if k != e2_dim:
                raise TorsionError(f"E_2^{{{p},{q}}} has dimension {e2_dim}, "
                                   f"base cohomology has {k}")
            if not k:
                continue
            m = S.E[(p, q, 2)].T @ u1_matrix(model, p, q) @ reps
            U = LinearMap(Hq.space(p), HilbertSpace.euclidean(k), m)
            try:
                sum_log_sv(m, model.tol)
            except SingularMap as exc:
                raise TorsionError(f"U_2 at {(p, q)} is not an isomorphism") from exc
            U2[(p, q)] = U
            # Gram on E_2 making U_2 an isometry
            inv = np.linalg.inv(m)
            grams[(p, q)] = inv.T @ Hq.space(p).gram @ inv
    return LeraySerreData(model, FC, S, H, structures, U2, grams)


def u2_term(data: LeraySerreData) -> float:
    """``Σ (-1)^{p+q} [[U_2^{p,q}]]`` against the induced ``E_2`` structures."""
    return sum((-1) ** (p + q) * log_vol(U, data.model.tol) for (p, q), U in data.U2.items())


def rho_LS(data: LeraySerreData) -> float:
    """Leray–Serre torsion: higher-page torsion with ``E_2`` carried over from the base side."""
    S = data.transported_spectral
    return sum(page_torsions(S, 2).values()) - _psi_term(S, data.model.tol)


def rho_LS_induced(data: LeraySerreData) -> float:
    """Same quantity computed from induced ``E_2`` structures plus the ``[[U_2]]`` correction."""
    S = data.spectral
    return sum(page_torsions(S, 2).values()) - _psi_term(S, data.model.tol) + u2_term(data)


# --- the fibration formula ----------------------------------------------------------------------


@dataclass(frozen=True)
class FibrationReport:
    rho_total: float
    euler_times_fiber: float
    base_term: float
    rho_LS: float
    residual: float
    tolerance: float
    passed: bool

    @property
    def rhs(self) -> float:
        return self.euler_times_fiber + self.base_term + self.rho_LS


def base_torsion(model: FibrationModel, base_structures: Mapping[int, CohomologyStructure] | None = None) -> float:
    """``Σ_q (-1)^q ρ(B; H^q(F))``."""
    base_structures = base_structures or {}
    return sum((-1) ** q * rho(model.base_complex(q), base_structures.get(q))
               for q in model.fiber.degrees)


def verify_fibration_formula(model: FibrationModel,
                             total_structure: CohomologyStructure | None = None,
                             base_structures: Mapping[int, CohomologyStructure] | None = None,
                             ) -> FibrationReport:
    if model.is_raw:
        raise InvalidModel("the fibration formula needs a base and a fiber")
    model.check_unimodular()
    data = leray_serre(model, total_structure, base_structures)
    lhs = rho(model.total, data.total_structure)
    chi = model.base.euler_characteristic() * rho(model.fiber, model.fiber_structure)
    base = base_torsion(model, data.base_structures)
    ls = rho_LS(data)
    residual = abs(lhs - (chi + base + ls))
    tol = 1e-8 * (1 + abs(lhs))
    return FibrationReport(lhs, chi, base, ls, residual, tol, residual <= tol)


# --- two-line splices ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lines:
    """Two rows (``kind="rows"``) or two columns of the ``E_2`` page, ``first < second``."""

    kind: str
    first: int
    second: int

    def high(self, N: int) -> Spot:
        """Spot of total degree ``N`` with the larger filtration index."""
        if self.kind == "rows":
            return (N - self.first, self.first)
        return (self.second, N - self.second)

    def low(self, N: int) -> Spot:
        if self.kind == "rows":
            return (N - self.second, self.second)
        return (self.first, N - self.first)

    def contains(self, spot: Spot) -> bool:
        idx = spot[1] if self.kind == "rows" else spot[0]
        return idx in (self.first, self.second)


def _check_lines(S: SpectralObjects, lines: Lines):
    for (p, q) in S.spots():
        if S.dim_E(2, p, q) and not lines.contains((p, q)):
            raise NotTwoRow(f"E_2^{{{p},{q}}} lies off the two {lines.kind}")


def splice_complex(data: LeraySerreData, lines: Lines) -> CochainComplex:
    """Acyclic complex ``… → E_2^high(N) → H^N(E) → E_2^low(N) → E_2^high(N+1) → …``.

    Degree ``3N`` holds the high spot, ``3N+1`` the cohomology ``H^N(E)`` and
    ``3N+2`` the low spot; ``E_2`` spots carry the structures transported from
    the base side.
    """
    S = data.transported_spectral
    _check_lines(S, lines)
    C = data.filtered.complex
    tol = data.model.tol

    def e2(spot):
        return S.E.get((*spot, 2), np.zeros((0, 0)))

    def dim2(spot):
        return S.dim_E(2, *spot)

    def graded(spot):
        # orthonormal basis of F^p H ⊖ F^{p+1} H in orthonormal coordinates of H^N(E)
        p, q = spot
        top = S.F[(p, q)]
        return complement(S.F[(p + 1, q - 1)], top, tol) if top.size else top

    degrees = list(C.degrees)
    dims, diffs = [], []
    for N in degrees:
        h, lo = lines.high(N), lines.low(N)
        hN = data.total_structure.rep(C, N).shape[1]
        dims += [dim2(h), hN, dim2(lo)]
        # high spot -> H^N(E): projection to E_∞ followed by ψ⁻¹
        if dim2(h) and h in S.psi and S.psi[h].size:
            einf = S.E_inf[h]
            to_inf = einf.T @ e2(h)
            m_h = graded(h) @ np.linalg.solve(S.psi[h], to_inf)
        else:
            m_h = np.zeros((hN, dim2(h)))
        # H^N(E) -> low spot: ψ then inclusion of E_∞ into E_2
        if dim2(lo) and lo in S.psi and S.psi[lo].size:
            m_lo = e2(lo).T @ S.E_inf[lo] @ S.psi[lo] @ graded(lo).T
        else:
            m_lo = np.zeros((dim2(lo), hN))
        diffs += [m_h, m_lo]
        if N != degrees[-1]:
            nxt = lines.high(N + 1)
            s = nxt[0] - lo[0]
            key = (*lo, s)
            if s >= 2 and key in S.d and dim2(lo) and dim2(nxt):
                es_lo, es_hi = S.E[key], S.E[(*nxt, s)]
                m = e2(nxt).T @ es_hi @ S.d[key] @ es_lo.T @ e2(lo)
            else:
                m = np.zeros((dim2(nxt), dim2(lo)))
            diffs.append(m)
    spaces = [HilbertSpace.euclidean(k) for k in dims]
    return CochainComplex(3 * degrees[0], spaces, diffs, tol, check=False)


def splice_torsion(data: LeraySerreData, lines: Lines) -> float:
    W = splice_complex(data, lines)
    return rho_acyclic(W)


def _two_values(values: set[int], what: str) -> tuple[int, int]:
    vals = sorted(values)
    if len(vals) > 2:
        raise NotTwoRow(f"{what} occupy {vals}, more than two lines")
    if len(vals) == 2:
        return vals[0], vals[1]
    if len(vals) == 1:
        return vals[0], vals[0] + 1
    return 0, 1


def wang_torsion(model: FibrationModel, total_structure: CohomologyStructure | None = None,
                 base_structures: Mapping[int, CohomologyStructure] | None = None) -> float:
    """Torsion of the Wang-type sequence for a base with cells in two dimensions."""
    data = leray_serre(model, total_structure, base_structures)
    if model.is_raw:
        cols = {p for (p, q) in data.spectral.spots() if data.spectral.dim_E(2, p, q)}
    else:
        cols = {n for n, cs in model.base.cells.items() if cs}
    a, b = _two_values(cols, "base cells")
    return splice_torsion(data, Lines("columns", a, b))


def gysin_torsion(model: FibrationModel, total_structure: CohomologyStructure | None = None,
                  base_structures: Mapping[int, CohomologyStructure] | None = None) -> float:
    """Torsion of the Gysin-type sequence for fibers with cohomology in two degrees."""
    data = leray_serre(model, total_structure, base_structures)
    if model.is_raw:
        rows = {q for (p, q) in data.spectral.spots() if data.spectral.dim_E(2, p, q)}
    else:
        rows = {q for q, b in model.fiber_betti().items() if b}
    a, b = _two_values(rows, "fiber cohomology degrees")
    return splice_torsion(data, Lines("rows", a, b))


# --- stock fibers ------------------------------------------------------------------------------------


def circle_fiber(gram0=None, gram1=None) -> CochainComplex:
    """Cellular cochains of S¹ with trivial coefficients (zero differential)."""
    g0 = np.eye(1) if gram0 is None else np.atleast_2d(gram0)
    g1 = np.eye(1) if gram1 is None else np.atleast_2d(gram1)
    return CochainComplex(0, [HilbertSpace(g0), HilbertSpace(g1)], [np.zeros((1, 1))])


def sphere_fiber(n: int) -> CochainComplex:
    """Minimal cochains of ``S^n``: one cell in degree 0 and one in degree ``n``."""
    if n < 1:
        raise ValueError("sphere dimension must be positive")
    spaces = [HilbertSpace.euclidean(1 if k in (0, n) else 0) for k in range(n + 1)]
    diffs = [np.zeros((spaces[k + 1].dim, spaces[k].dim)) for k in range(n)]
    return CochainComplex(0, spaces, diffs)


def point_fiber(dim: int = 1, gram=None) -> CochainComplex:
    g = np.eye(dim) if gram is None else np.asarray(gram, dtype=float)
    return CochainComplex(0, [HilbertSpace(g)], [])


def base_model(X: CWComplexData) -> FibrationModel:
    """Identity fibration ``X -> X`` with point fibers."""
    return FibrationModel.product(X, point_fiber())


__all__ = [
    "FibrationModel", "LeraySerreData", "FibrationReport", "Lines", "skeletal_filtration",
    "leray_serre", "rho_LS", "rho_LS_induced", "u1_matrix", "u2_term", "base_torsion",
    "verify_fibration_formula", "splice_complex", "splice_torsion", "wang_torsion",
    "gysin_torsion", "circle_fiber", "sphere_fiber", "point_fiber", "base_model", "point",
]
