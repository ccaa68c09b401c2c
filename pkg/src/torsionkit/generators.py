"""Random instances for property suites.

Complexes are sampled by composing Gaussian factors through random
subspaces so that ``c ∘ c = 0`` holds by construction.
"""

from __future__ import annotations

import numpy as np

from .cochain import ChainMap, CochainComplex, ShortExactSequence
from .linalg import HilbertSpace, Tolerance, null, orth


def random_gram(rng: np.random.Generator, dim: int, spread: float = 0.6) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) * spread
    return a @ a.T + np.eye(dim) * 0.5


def random_space(rng, dim: int, euclidean: bool = False) -> HilbertSpace:
    return HilbertSpace.euclidean(dim) if euclidean else HilbertSpace(random_gram(rng, dim))


def random_invertible(rng, dim: int) -> np.ndarray:
    while True:
        m = rng.normal(size=(dim, dim))
        if dim == 0 or np.linalg.cond(m) < 50:
            return m


def _differentials(rng, dims: list[int], ranks: list[int]) -> list[np.ndarray]:
    diffs = []
    prev_image = np.zeros((dims[0], 0))
    for k in range(len(dims) - 1):
        d, e, r = dims[k], dims[k + 1], ranks[k]
        if prev_image.shape[1]:
            q, _ = np.linalg.qr(prev_image)
            kill = np.eye(d) - q @ q.T
        else:
            kill = np.eye(d)
        x = rng.normal(size=(e, r))
        y = rng.normal(size=(d, r))
        m = x @ y.T @ kill
        diffs.append(m)
        prev_image = x
    return diffs


def random_complex(rng, max_degrees: int = 5, max_dim: int = 6, acyclic: bool = False,
                   euclidean: bool = False, lo: int | None = None,
                   min_degrees: int = 1) -> CochainComplex:
    """Random finite Hilbert cochain complex.

    Dimensions lie in ``0..max_dim``; ``acyclic=True`` forces exactness.
    """
    n = int(rng.integers(min_degrees, max_degrees + 1))
    if lo is None:
        lo = int(rng.integers(-1, 2))
    ranks = []
    dims = []
    prev = 0
    for k in range(n):
        if acyclic:
            if k == n - 1:
                r = 0
            else:
                r = int(rng.integers(0, max_dim - prev + 1))
            d = prev + r
        else:
            d = int(rng.integers(prev, max_dim + 1)) if prev <= max_dim else prev
            r = int(rng.integers(0, d - prev + 1)) if k < n - 1 else 0
        dims.append(d)
        ranks.append(r)
        prev = r
    diffs = _differentials(rng, dims, ranks[:-1])
    spaces = [random_space(rng, d, euclidean) for d in dims]
    return CochainComplex(lo, spaces, diffs)


def conjugate(rng, C: CochainComplex, euclidean: bool = False) -> tuple[CochainComplex, ChainMap]:
    """An isomorphic copy ``D`` of ``C`` with new Grams and the isomorphism ``C -> D``."""
    mats = {n: random_invertible(rng, C.dim(n)) for n in C.degrees}
    diffs = [mats[n + 1] @ C.diff(n) @ np.linalg.inv(mats[n]) for n in range(C.lo, C.hi)]
    D = CochainComplex(C.lo, [random_space(rng, C.dim(n), euclidean) for n in C.degrees], diffs)
    return D, ChainMap(C, D, mats)


def with_contractible(rng, C: CochainComplex, extra_dim: int = 2) -> tuple[CochainComplex, ChainMap, ChainMap]:
    """``D = C ⊕ A`` with ``A`` acyclic, plus inclusion and projection.

    The summand ``A`` is a sum of elementary complexes ``R -> R`` placed at
    random degrees inside the support of ``C``. The result is then conjugated
    by random isomorphisms so the splitting is not orthogonal.
    """
    lo, hi = C.lo, C.hi
    extra = {n: 0 for n in range(lo, hi + 1)}
    pairs = []
    if hi > lo:
        for _ in range(extra_dim):
            n = int(rng.integers(lo, hi))
            pairs.append((n, extra[n], extra[n + 1]))
            extra[n] += 1
            extra[n + 1] += 1
    dims = {n: C.dim(n) + extra[n] for n in range(lo, hi + 1)}
    diffs = []
    for n in range(lo, hi):
        m = np.zeros((dims[n + 1], dims[n]))
        m[:C.dim(n + 1), :C.dim(n)] = C.diff(n)
        diffs.append(m)
    for n, a, b in pairs:
        w = rng.uniform(0.5, 2.0) * rng.choice([-1, 1])
        diffs[n - lo][C.dim(n + 1) + b, C.dim(n) + a] = w
    base = CochainComplex(lo, [HilbertSpace.euclidean(dims[n]) for n in range(lo, hi + 1)], diffs)
    D, g = conjugate(rng, base)
    inc = {n: g.map(n)[:, :C.dim(n)] for n in range(lo, hi + 1)}
    proj = {n: np.eye(dims[n])[:C.dim(n), :] @ np.linalg.inv(g.map(n)) for n in range(lo, hi + 1)}
    return D, ChainMap(C, D, inc), ChainMap(D, C, proj)


def random_equivalence(rng, C: CochainComplex) -> tuple[CochainComplex, ChainMap]:
    """A chain homotopy equivalence out of ``C`` that is generally not an isomorphism."""
    D, inc, _ = with_contractible(rng, C, extra_dim=int(rng.integers(0, 3)))
    return D, inc


def random_ses(rng, max_degrees: int = 4, max_dim: int = 6) -> ShortExactSequence:
    """Random short exact sequence of complexes ``C -> D -> E``.

    ``D`` is random, ``C`` is a random subcomplex (spanned by a random
    subspace of cocycles plus its differential image closure) and ``E`` is
    the quotient written on a complement; all Grams are then randomized.
    """
    D0 = random_complex(rng, max_degrees, max_dim, euclidean=True)
    subs = {}
    for n in D0.degrees:
        k = int(rng.integers(0, D0.dim(n) + 1))
        subs[n] = rng.normal(size=(D0.dim(n), k))
    # close under the differential, degree by degree
    closed = {}
    carry = np.zeros((D0.dim(D0.lo), 0))
    for n in D0.degrees:
        span = np.hstack([carry, subs[n]]) if carry.shape[0] == D0.dim(n) else subs[n]
        q = _orth(span)
        closed[n] = q
        carry = D0.diff(n) @ q
    sub_dims = {n: closed[n].shape[1] for n in D0.degrees}
    comp = {n: _orth_complement(closed[n]) for n in D0.degrees}
    C_diffs, E_diffs = [], []
    for n in range(D0.lo, D0.hi):
        C_diffs.append(np.linalg.lstsq(closed[n + 1], D0.diff(n) @ closed[n], rcond=None)[0]
                       if sub_dims[n + 1] else np.zeros((0, sub_dims[n])))
        E_diffs.append(comp[n + 1].T @ D0.diff(n) @ comp[n])
    C0 = CochainComplex(D0.lo, [HilbertSpace.euclidean(sub_dims[n]) for n in D0.degrees], C_diffs)
    E0 = CochainComplex(D0.lo, [HilbertSpace.euclidean(comp[n].shape[1]) for n in D0.degrees], E_diffs)
    C, f = conjugate(rng, C0)
    D, g = conjugate(rng, D0)
    E, h = conjugate(rng, E0)
    inc = {n: g.map(n) @ closed[n] @ np.linalg.inv(f.map(n)) for n in D0.degrees}
    proj = {n: h.map(n) @ comp[n].T @ np.linalg.inv(g.map(n)) for n in D0.degrees}
    return ShortExactSequence(ChainMap(C, D, inc), ChainMap(D, E, proj))


def _orth(a: np.ndarray) -> np.ndarray:
    return orth(a, Tolerance(rel_rank_tol=1e-9))


def _orth_complement(q: np.ndarray) -> np.ndarray:
    return null(q.T) if q.shape[1] else np.eye(q.shape[0])


def random_filtration_levels(rng, C: CochainComplex, length: int) -> list[dict[int, np.ndarray]]:
    """Nested random spans closed under the differential, ``F_0 = C`` and ``F_length = 0``."""
    levels: list[dict[int, np.ndarray]] = [dict() for _ in range(length + 1)]
    levels[0] = {n: np.eye(C.dim(n)) for n in C.degrees}
    levels[length] = {n: np.zeros((C.dim(n), 0)) for n in C.degrees}
    for p in range(length - 1, 0, -1):
        level = {}
        carry = None
        for n in C.degrees:
            k = int(rng.integers(0, C.dim(n) + 1)) if C.dim(n) else 0
            parts = [levels[p + 1][n], rng.normal(size=(C.dim(n), k))]
            if carry is not None:
                parts.append(carry)
            level[n] = _orth(np.hstack(parts))
            carry = C.diff(n) @ level[n]
        levels[p] = level
    return levels


def random_filtered(rng, max_degrees: int = 5, max_dim: int = 6, max_length: int = 4,
                    euclidean: bool = False):
    from .filtration import FilteredComplex

    C = random_complex(rng, max_degrees, max_dim, euclidean=euclidean)
    length = int(rng.integers(1, max_length + 1))
    return FilteredComplex(C, random_filtration_levels(rng, C, length))


def conjugate_ses(rng, ses: ShortExactSequence):
    """A second exact row isomorphic to ``ses`` together with the vertical maps."""
    C, f = conjugate(rng, ses.sub)
    D, g = conjugate(rng, ses.middle)
    E, h = conjugate(rng, ses.quotient)
    inc = {n: g.map(n) @ ses.inclusion.map(n) @ np.linalg.inv(f.map(n)) for n in ses.degrees}
    proj = {n: h.map(n) @ ses.projection.map(n) @ np.linalg.inv(g.map(n)) for n in ses.degrees}
    return ShortExactSequence(ChainMap(C, D, inc), ChainMap(D, E, proj)), (f, g, h)
