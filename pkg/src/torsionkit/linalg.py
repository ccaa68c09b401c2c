"""Inner-product linear algebra on explicit Gram matrices.

Vectors are coordinate columns with respect to a reference basis; a
:class:`HilbertSpace` stores the Gram matrix of that basis. Most numerical
work happens after passing to orthonormal coordinates ``y = L.T @ x`` where
``gram = L @ L.T`` is the Cholesky factorization.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, InvalidGram, NotNested, SingularMap


@dataclass(frozen=True)
class Tolerance:
    """Numerical thresholds.

    Attributes:
        rel_rank_tol: singular values at or below
            ``rel_rank_tol * sigma_max * max(shape)`` count as zero.
        eq_tol: threshold for identity checks.
    """

    rel_rank_tol: float = 1e-10
    eq_tol: float = 1e-9

    def __post_init__(self):
        if not (self.rel_rank_tol > 0 and self.eq_tol > 0):
            raise ValueError("tolerances must be strictly positive")

    @classmethod
    def from_env(cls) -> "Tolerance":
        raw = os.environ.get("TORSION_TOL")
        return cls(rel_rank_tol=float(raw)) if raw else cls()


def _initial_tolerance() -> Tolerance:
    try:
        return Tolerance.from_env()
    except ValueError:
        warnings.warn("ignoring invalid TORSION_TOL", RuntimeWarning, stacklevel=2)
        return Tolerance()


# TORSION_TOL overrides the rank threshold library-wide
DEFAULT_TOL = _initial_tolerance()


def as_columns(a, rows: int) -> np.ndarray:
    """Reshape ``a`` into a matrix with ``rows`` rows (columns are vectors)."""
    arr = np.asarray(a, dtype=float)
    if arr.size == 0:
        cols = arr.shape[-1] if arr.ndim == 2 and arr.shape[0] == rows else 0
        return np.zeros((rows, cols))
    return arr.reshape(rows, -1)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


# --- euclidean helpers -------------------------------------------------------


def cutoff(s: np.ndarray, shape: tuple[int, ...], tol: Tolerance, scale: float = 0.0) -> float:
    """Singular values at or below this are zero.

    ``scale`` lets a caller supply a reference magnitude (for instance the
    largest differential of a complex) so that a block consisting purely of
    rounding noise is not mistaken for a full-rank map.
    """
    if s.size == 0:
        return 0.0
    return tol.rel_rank_tol * max(float(s[0]), scale) * max(shape)


def opnorm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2)) if np.size(a) else 0.0


def numerical_rank(a: np.ndarray, tol: Tolerance = DEFAULT_TOL, scale: float = 0.0) -> int:
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > cutoff(s, a.shape, tol, scale)))


def orth(a: np.ndarray, tol: Tolerance = DEFAULT_TOL, scale: float = 0.0) -> np.ndarray:
    """Orthonormal basis (euclidean) of the column space of ``a``."""
    a = np.asarray(a, dtype=float)
    if a.shape[1] == 0 or a.shape[0] == 0:
        return np.zeros((a.shape[0], 0))
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    k = int(np.sum(s > cutoff(s, a.shape, tol, scale)))
    return u[:, :k]


def null(a: np.ndarray, tol: Tolerance = DEFAULT_TOL, scale: float = 0.0) -> np.ndarray:
    """Orthonormal basis (euclidean) of the kernel of ``a``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[1]
    if a.shape[0] == 0 or n == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    k = int(np.sum(s > cutoff(s, a.shape, tol, scale)))
    return vt[k:].T.copy()


def complement(sub: np.ndarray, within: np.ndarray, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of ``within`` ⊖ ``sub`` (both orthonormal bases)."""
    if sub.shape[1] == 0:
        return within
    coords = within.T @ sub
    return within @ null(coords.T, tol, 1.0)


def sum_log_sv(a: np.ndarray, tol: Tolerance = DEFAULT_TOL) -> float:
    """Sum of log singular values of a square matrix assumed invertible."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got {a.shape}")
    if a.shape[0] == 0:
        return 0.0
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= cutoff(s, a.shape, tol):
        raise SingularMap(f"smallest singular value {s[-1]:.3e} below tolerance")
    return float(np.sum(np.log(s)))


def pinv(a: np.ndarray, tol: Tolerance = DEFAULT_TOL, scale: float = 0.0) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros(a.shape[::-1])
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    k = int(np.sum(s > cutoff(s, a.shape, tol, scale)))
    return (vt[:k].T / s[:k]) @ u[:, :k].T


def sum_log_nonzero_sv(a: np.ndarray, tol: Tolerance = DEFAULT_TOL, scale: float = 0.0) -> float:
    """Sum of logs of the numerically nonzero singular values."""
    if a.size == 0:
        return 0.0
    s = np.linalg.svd(a, compute_uv=False)
    s = s[s > cutoff(s, a.shape, tol, scale)]
    return float(np.sum(np.log(s)))


# --- Hilbert spaces ------------------------------------------------------------


class HilbertSpace:
    """Finite-dimensional real inner-product space given by a Gram matrix."""

    __slots__ = ("gram", "_chol")

    def __init__(self, gram, tol: Tolerance = DEFAULT_TOL):
        g = np.atleast_2d(np.array(gram, dtype=float)) if np.size(gram) else np.zeros((0, 0))
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise DimensionMismatch(f"gram must be square, got shape {g.shape}")
        scale = max(1.0, float(np.max(np.abs(g)))) if g.size else 1.0
        if g.size and np.max(np.abs(g - g.T)) > tol.eq_tol * scale:
            raise InvalidGram("gram is not symmetric")
        g = (g + g.T) / 2
        try:
            chol = np.linalg.cholesky(g) if g.size else np.zeros((0, 0))
        except np.linalg.LinAlgError as exc:
            raise InvalidGram("gram is not positive definite") from exc
        self.gram = _frozen(g)
        self._chol = _frozen(chol)

    @classmethod
    def euclidean(cls, dim: int) -> "HilbertSpace":
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.gram.shape[0]

    @property
    def chol(self) -> np.ndarray:
        return self._chol

    def to_orthonormal(self) -> np.ndarray:
        """Matrix sending reference coordinates to orthonormal coordinates."""
        return self._chol.T

    def from_orthonormal(self) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((0, 0))
        return sla.solve_triangular(self._chol, np.eye(self.dim), lower=True).T

    def inner(self, x, y) -> float:
        return float(np.asarray(x) @ self.gram @ np.asarray(y))

    def is_euclidean(self) -> bool:
        return bool(np.array_equal(self.gram, np.eye(self.dim)))

    def __eq__(self, other) -> bool:
        return isinstance(other, HilbertSpace) and np.array_equal(self.gram, other.gram)

    def __hash__(self):
        return hash(self.gram.tobytes())

    def __repr__(self) -> str:
        return f"HilbertSpace(dim={self.dim})"


def direct_sum(*spaces: HilbertSpace) -> HilbertSpace:
    """Orthogonal sum of Hilbert spaces."""
    if not spaces:
        return HilbertSpace.euclidean(0)
    return HilbertSpace(sla.block_diag(*[s.gram for s in spaces]) if any(s.dim for s in spaces)
                        else np.zeros((0, 0)))


@dataclass(frozen=True)
class LinearMap:
    domain: HilbertSpace
    codomain: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float).reshape(self.codomain.dim, -1) \
            if np.size(self.matrix) else np.zeros((self.codomain.dim, self.domain.dim))
        if m.shape != (self.codomain.dim, self.domain.dim):
            raise DimensionMismatch(
                f"matrix shape {m.shape} != ({self.codomain.dim}, {self.domain.dim})")
        object.__setattr__(self, "matrix", _frozen(m))

    def orthonormal_matrix(self) -> np.ndarray:
        """The matrix of the map in orthonormal bases of domain and codomain."""
        return self.codomain.to_orthonormal() @ self.matrix @ self.domain.from_orthonormal()

    def __matmul__(self, other: "LinearMap") -> "LinearMap":
        if other.codomain.dim != self.domain.dim:
            raise DimensionMismatch("maps are not composable")
        return LinearMap(other.domain, self.codomain, self.matrix @ other.matrix)


def identity(space: HilbertSpace) -> LinearMap:
    return LinearMap(space, space, np.eye(space.dim))


def log_vol(f: LinearMap, tol: Tolerance = DEFAULT_TOL) -> float:
    """``½ ln det(f* f)`` for an isomorphism ``f``.

    Accumulated as a sum of log singular values of the orthonormal-basis
    matrix, so no determinant is ever formed.
    """
    if f.domain.dim != f.codomain.dim:
        raise DimensionMismatch(
            f"log_vol needs equal dimensions, got {f.domain.dim} -> {f.codomain.dim}")
    return sum_log_sv(f.orthonormal_matrix(), tol)


def adjoint(f: LinearMap) -> LinearMap:
    """Gram adjoint ``G_dom⁻¹ Aᵀ G_cod``."""
    if f.domain.dim == 0 or f.codomain.dim == 0:
        return LinearMap(f.codomain, f.domain, np.zeros((f.domain.dim, f.codomain.dim)))
    m = sla.cho_solve((f.domain.chol, True), f.matrix.T @ f.codomain.gram)
    return LinearMap(f.codomain, f.domain, m)


# --- subspaces -----------------------------------------------------------------


@dataclass(frozen=True)
class Subspace:
    """Subspace of ``ambient`` with a Gram-orthonormal basis (columns)."""

    ambient: HilbertSpace
    basis: np.ndarray

    def __post_init__(self):
        b = as_columns(self.basis, self.ambient.dim)
        object.__setattr__(self, "basis", _frozen(b))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def orthonormality_defect(self) -> float:
        if self.dim == 0:
            return 0.0
        return float(np.max(np.abs(self.basis.T @ self.ambient.gram @ self.basis - np.eye(self.dim))))

    def projector(self) -> np.ndarray:
        """Orthogonal projection onto the subspace (reference coordinates)."""
        return self.basis @ self.basis.T @ self.ambient.gram

    def coordinates(self, vectors) -> np.ndarray:
        """Coefficients of the orthogonal projection of ``vectors`` on the basis."""
        return self.basis.T @ self.ambient.gram @ np.asarray(vectors, dtype=float)

    def residual(self, vectors) -> float:
        """Largest norm of the part of ``vectors`` orthogonal to the subspace."""
        v = as_columns(vectors, self.ambient.dim)
        if v.shape[1] == 0:
            return 0.0
        r = v - self.basis @ self.coordinates(v)
        return float(np.sqrt(np.max(np.einsum("ij,ik,kj->j", r, self.ambient.gram, r).clip(0))))

    def contains(self, other: "Subspace", tol: Tolerance = DEFAULT_TOL) -> bool:
        return self.residual(other.basis) <= tol.eq_tol

    def as_space(self) -> HilbertSpace:
        return HilbertSpace.euclidean(self.dim)


def span_subspace(ambient: HilbertSpace, span, tol: Tolerance = DEFAULT_TOL) -> Subspace:
    """Subspace spanned by the columns of ``span``, re-orthonormalized."""
    s = as_columns(span, ambient.dim)
    q = orth(ambient.to_orthonormal() @ s, tol)
    return Subspace(ambient, ambient.from_orthonormal() @ q)


def image_kernel(f: LinearMap, tol: Tolerance = DEFAULT_TOL) -> tuple[Subspace, Subspace]:
    a = f.orthonormal_matrix()
    if a.size == 0:
        img = np.zeros((f.codomain.dim, 0))
        ker = np.eye(f.domain.dim)
    else:
        u, s, vt = np.linalg.svd(a, full_matrices=True)
        k = int(np.sum(s > cutoff(s, a.shape, tol)))
        img, ker = u[:, :k], vt[k:].T
    return (Subspace(f.codomain, f.codomain.from_orthonormal() @ img),
            Subspace(f.domain, f.domain.from_orthonormal() @ ker))


def quotient_structure(z: Subspace, b: Subspace,
                       tol: Tolerance = DEFAULT_TOL) -> tuple[HilbertSpace, LinearMap]:
    """Model ``Z/B`` as the orthogonal complement of ``B`` inside ``Z``.

    Returns the quotient space (euclidean in the complement's orthonormal
    basis) and the projection ``Z -> Z/B`` written in the basis of ``Z``.
    The projection restricted to the complement is an isometry.
    """
    if b.ambient.dim != z.ambient.dim:
        raise DimensionMismatch("subspaces live in different ambient spaces")
    if not z.contains(b, tol):
        raise NotNested(f"subspace not contained (residual {z.residual(b.basis):.3e})")
    to_on = z.ambient.to_orthonormal()
    zc = to_on @ z.basis
    bc = to_on @ b.basis
    comp = complement(orth(bc, tol), zc, tol)
    q = HilbertSpace.euclidean(comp.shape[1])
    return q, LinearMap(z.as_space(), q, comp.T @ zc)
