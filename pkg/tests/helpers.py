"""Small builders shared by the test modules."""

import numpy as np
from hypothesis import strategies as st

from torsionkit.cochain import CochainComplex
from torsionkit.linalg import HilbertSpace

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def generator(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def line(gram: float = 1.0) -> HilbertSpace:
    return HilbertSpace(np.array([[gram]]))


def two_term(matrix, lo: int = 0, grams=None) -> CochainComplex:
    """``C^lo --matrix--> C^{lo+1}``."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if grams is None:
        spaces = [HilbertSpace.euclidean(m.shape[1]), HilbertSpace.euclidean(m.shape[0])]
    else:
        spaces = [HilbertSpace(np.atleast_2d(g)) for g in grams]
    return CochainComplex(lo, spaces, [m])


def concentrated(dim: int, degree: int, gram=None) -> CochainComplex:
    space = HilbertSpace.euclidean(dim) if gram is None else HilbertSpace(np.atleast_2d(gram))
    return CochainComplex(degree, [space], [])
