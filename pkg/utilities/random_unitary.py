import numpy as np
from scipy.stats import unitary_group

def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary drawn from the given generator"""
    if dim == 1:
        return np.exp(2j * np.pi * rng.random()) * np.ones((1, 1))
    return unitary_group.rvs(dim, random_state=rng)
