import string
from math import prod

import numpy as np

def partial_trace(rho: np.ndarray, dims: list[int], keep: list[int]) -> np.ndarray:
    """Traces out every tensor factor of rho not listed in keep"""
    n = len(dims)
    if 2 * n > len(string.ascii_letters):
        raise ValueError(f'Too many tensor factors for einsum labels: {n}')
    keep = sorted(keep)
    tensor = np.asarray(rho).reshape(*dims, *dims)
    rows = list(string.ascii_letters[:n])
    cols = list(string.ascii_letters[n:2 * n])
    for i in range(n):
        if i not in keep:
            cols[i] = rows[i] # contract row and column index of a traced factor
    output = ''.join(rows[i] for i in keep) + ''.join(cols[i] for i in keep)
    kept = prod(dims[i] for i in keep)
    return np.einsum(f"{''.join(rows)}{''.join(cols)}->{output}", tensor).reshape(kept, kept)
