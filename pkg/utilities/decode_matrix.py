import numpy as np

def decode_matrix(rows: list, path: str = 'matrix') -> np.ndarray:
    """Parses row-major [re, im] pairs (or plain reals) into a complex matrix"""
    if not isinstance(rows, list) or not rows or not all(isinstance(row, list) for row in rows):
        raise ValueError(f'{path}: expected a non-empty list of rows')
    width = len(rows[0])
    matrix = np.zeros((len(rows), width), dtype=complex)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f'{path}[{r}]: expected {width} entries, got {len(row)}')
        for c, entry in enumerate(row):
            match entry:
                case [re, im] if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (re, im)):
                    matrix[r, c] = complex(re, im)
                case int() | float() if not isinstance(entry, bool):
                    matrix[r, c] = entry
                case _:
                    raise ValueError(f'{path}[{r}][{c}]: expected [re, im] pair, got {entry!r}')
    return matrix
