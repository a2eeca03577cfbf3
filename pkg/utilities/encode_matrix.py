import numpy as np

def encode_matrix(matrix: np.ndarray) -> list[list[list[float]]]:
    """Row-major [re, im] pairs for a complex matrix"""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    return [[[float(z.real), float(z.imag)] for z in row] for row in matrix]
