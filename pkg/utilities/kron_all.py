from functools import reduce

import numpy as np

def kron_all(factors: list[np.ndarray]) -> np.ndarray:
    """Kronecker product of a list of matrices, left to right"""
    return reduce(np.kron, factors, np.ones((1, 1), dtype=complex))
