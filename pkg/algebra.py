"""
Finite-dimensional C*-algebras realised as direct sums of full matrix factors,
with their canonical traces, trace-preserving conditional expectations,
pinchings and the spectral calculus needed for Gibbs densities.
"""
import logging
from dataclasses import dataclass, field
from collections.abc import Hashable, Sequence

import numpy as np
import scipy.linalg as la

import tolerances
from tolerances import Tolerances

LOGGER = logging.getLogger('markov_states')

@dataclass(frozen=True)
class DirectSumAlgebra:
    """Direct sum of full matrix factors, one per minimal central projection"""
    blocks: tuple[tuple[Hashable, int], ...]

    def __post_init__(self) -> None:
        labels = [label for label, _ in self.blocks]
        if not self.blocks:
            raise ValueError('A direct sum algebra needs at least one block')
        if len(set(labels)) != len(labels):
            raise ValueError(f'Block labels must be unique, got {labels}')
        for label, dim in self.blocks:
            if int(dim) <= 0:
                raise ValueError(f'Block {label!r} has non-positive dimension {dim}')

    @classmethod
    def full(cls, dim: int, label: Hashable = 0) -> 'DirectSumAlgebra':
        return cls(((label, dim),))

    @property
    def labels(self) -> tuple[Hashable, ...]:
        return tuple(label for label, _ in self.blocks)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.blocks)

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    def index(self, label: Hashable) -> int:
        return self.labels.index(label)

    def element(self, blocks: Sequence[np.ndarray], hermitian: bool = False) -> 'AlgebraElement':
        return AlgebraElement(self, tuple(np.asarray(b, dtype=complex) for b in blocks), hermitian)

    def identity(self) -> 'AlgebraElement':
        return self.element([np.eye(d) for d in self.dims], hermitian=True)

    def zeros(self) -> 'AlgebraElement':
        return self.element([np.zeros((d, d)) for d in self.dims], hermitian=True)

    def matrix_units(self):
        """Yields (block index, row, column, element) over the matrix-unit basis"""
        for i, d in enumerate(self.dims):
            for a in range(d):
                for b in range(d):
                    blocks = [np.zeros((dd, dd), dtype=complex) for dd in self.dims]
                    blocks[i][a, b] = 1.0
                    yield i, a, b, self.element(blocks)

@dataclass(frozen=True, eq=False)
class AlgebraElement:
    parent: DirectSumAlgebra
    blocks: tuple[np.ndarray, ...]
    hermitian: bool = False

    def __post_init__(self) -> None:
        if len(self.blocks) != len(self.parent.blocks):
            raise ValueError(f'Element has {len(self.blocks)} blocks, algebra has {len(self.parent.blocks)}')
        for (label, dim), block in zip(self.parent.blocks, self.blocks):
            if block.shape != (dim, dim):
                raise ValueError(f'Block {label!r} has shape {block.shape}, expected {(dim, dim)}')
        if self.hermitian:
            tol = tolerances.current().hermitian
            for (label, _), block in zip(self.parent.blocks, self.blocks):
                if not is_hermitian(block, tol):
                    raise ValueError(f'Block {label!r} is not Hermitian')

    def dense(self) -> np.ndarray:
        return la.block_diag(*self.blocks).astype(complex)

    def block(self, label: Hashable) -> np.ndarray:
        return self.blocks[self.parent.index(label)]

    def adjoint(self) -> 'AlgebraElement':
        return AlgebraElement(self.parent, tuple(b.conj().T for b in self.blocks), self.hermitian)

    def _check_parent(self, other: 'AlgebraElement') -> None:
        if other.parent != self.parent:
            raise ValueError('Elements belong to different algebras')

    def __add__(self, other: 'AlgebraElement') -> 'AlgebraElement':
        self._check_parent(other)
        return AlgebraElement(self.parent, tuple(a + b for a, b in zip(self.blocks, other.blocks)))

    def __sub__(self, other: 'AlgebraElement') -> 'AlgebraElement':
        self._check_parent(other)
        return AlgebraElement(self.parent, tuple(a - b for a, b in zip(self.blocks, other.blocks)))

    def __matmul__(self, other: 'AlgebraElement') -> 'AlgebraElement':
        self._check_parent(other)
        return AlgebraElement(self.parent, tuple(a @ b for a, b in zip(self.blocks, other.blocks)))

    def __mul__(self, scalar: complex) -> 'AlgebraElement':
        return AlgebraElement(self.parent, tuple(scalar * b for b in self.blocks))

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(b))) for b in self.blocks)

def is_hermitian(x: np.ndarray, tol: float) -> bool:
    norm = np.linalg.norm(x)
    return bool(np.linalg.norm(x - x.conj().T) <= tol * max(norm, 1.0))

def as_element(x: 'AlgebraElement | np.ndarray', hermitian: bool = False) -> AlgebraElement:
    """Wraps a square matrix as an element of the full matrix algebra"""
    if isinstance(x, AlgebraElement):
        return x
    matrix = np.asarray(x, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f'Expected a square matrix, got shape {matrix.shape}')
    return DirectSumAlgebra.full(matrix.shape[0]).element([matrix], hermitian)

def as_matrix(x: 'AlgebraElement | np.ndarray') -> np.ndarray:
    if isinstance(x, AlgebraElement):
        return x.dense()
    matrix = np.asarray(x, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f'Expected a square matrix, got shape {matrix.shape}')
    return matrix

def canonical_trace(alg: DirectSumAlgebra, x: AlgebraElement) -> complex:
    """Trace taking the value one on every minimal projection"""
    if x.parent != alg:
        raise ValueError(f'Element belongs to {x.parent.blocks}, not {alg.blocks}')
    return complex(sum(np.trace(b) for b in x.blocks))

@dataclass(frozen=True, eq=False)
class InclusionDescriptor:
    """
    Unital inclusion sub -> sup. Sup block i contains sub block j with
    multiplicity m[i][j]; embeddings[(i, j)] has shape
    (dim sup_i, dim sub_j * m[i][j]) with columns ordered sub-index major,
    multiplicity minor.
    """
    sub: DirectSumAlgebra
    sup: DirectSumAlgebra
    multiplicity: np.ndarray
    embeddings: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    @classmethod
    def standard(cls, sub: DirectSumAlgebra, sup: DirectSumAlgebra, multiplicity) -> 'InclusionDescriptor':
        """Places each y_j (x) I_m consecutively along the diagonal of every sup block"""
        m = np.asarray(multiplicity, dtype=int)
        embeddings = {}
        for i, dim_i in enumerate(sup.dims):
            offset = 0
            identity = np.eye(dim_i)
            for j, dim_j in enumerate(sub.dims):
                width = dim_j * int(m[i, j])
                if width:
                    embeddings[(i, j)] = identity[:, offset:offset + width]
                offset += width
        return cls(sub, sup, m, embeddings)

    def validate(self, tol: Tolerances | None = None) -> None:
        tol = tolerances.resolve(tol)
        m = self.multiplicity
        if m.shape != (len(self.sup.dims), len(self.sub.dims)):
            raise ValueError(f'Multiplicity matrix shape {m.shape} does not match {len(self.sup.dims)}x{len(self.sub.dims)}')
        if np.any(m < 0):
            raise ValueError('Multiplicities must be non-negative')
        if np.any(m.sum(axis=0) == 0):
            raise ValueError('Every sub block must appear in some sup block')
        for i, dim_i in enumerate(self.sup.dims):
            filled = sum(int(m[i, j]) * dim_j for j, dim_j in enumerate(self.sub.dims))
            if filled != dim_i:
                raise ValueError(f'Sup block {i} has dimension {dim_i} but multiplicities fill {filled}')
            columns = []
            for j, dim_j in enumerate(self.sub.dims):
                if m[i, j] == 0:
                    continue
                v = self.embeddings.get((i, j))
                if v is None or v.shape != (dim_i, dim_j * int(m[i, j])):
                    raise ValueError(f'Embedding ({i}, {j}) missing or of wrong shape')
                columns.append(v)
            w = np.hstack(columns)
            if np.linalg.norm(w.conj().T @ w - np.eye(dim_i)) > tol.gram * max(1, dim_i):
                raise ValueError(f'Embeddings into sup block {i} are not jointly unitary')

    def embed(self, y: AlgebraElement) -> AlgebraElement:
        """iota(y), the unital *-homomorphism realising the inclusion"""
        if y.parent != self.sub:
            raise ValueError('Element does not belong to the subalgebra')
        blocks = []
        for i, dim_i in enumerate(self.sup.dims):
            out = np.zeros((dim_i, dim_i), dtype=complex)
            for j, _ in enumerate(self.sub.dims):
                mult = int(self.multiplicity[i, j])
                if mult:
                    v = self.embeddings[(i, j)]
                    out += v @ np.kron(y.blocks[j], np.eye(mult)) @ v.conj().T
            blocks.append(out)
        return self.sup.element(blocks)

@dataclass(frozen=True, eq=False)
class ExpectationMap:
    """E(x)_j = sum_i Tr_mult(V_ij^* x_i V_ij), the trace-preserving map onto the subalgebra"""
    inclusion: InclusionDescriptor

    def _reduce(self, i: int, j: int, x_i: np.ndarray) -> np.ndarray:
        mult = int(self.inclusion.multiplicity[i, j])
        dim_j = self.inclusion.sub.dims[j]
        v = self.inclusion.embeddings[(i, j)]
        compressed = (v.conj().T @ x_i @ v).reshape(dim_j, mult, dim_j, mult)
        return np.einsum('ambm->ab', compressed)

    def apply(self, x: AlgebraElement) -> AlgebraElement:
        if x.parent != self.inclusion.sup:
            raise ValueError('Element does not belong to the enclosing algebra')
        blocks = []
        for j, dim_j in enumerate(self.inclusion.sub.dims):
            out = np.zeros((dim_j, dim_j), dtype=complex)
            for i, _ in enumerate(self.inclusion.sup.dims):
                if self.inclusion.multiplicity[i, j]:
                    out += self._reduce(i, j, x.blocks[i])
            blocks.append(out)
        return self.inclusion.sub.element(blocks)

    def weights(self) -> np.ndarray:
        """c_j = total multiplicity of sub block j"""
        return self.inclusion.multiplicity.sum(axis=0)

    def project(self, x: AlgebraElement) -> AlgebraElement:
        """Idempotent trace-orthogonal projection of x onto the image of the subalgebra"""
        reduced = self.apply(x)
        scaled = self.inclusion.sub.element([b / c for b, c in zip(reduced.blocks, self.weights())])
        return self.inclusion.embed(scaled)

    def choi_blocks(self) -> dict[tuple[int, int], np.ndarray]:
        """Choi matrix of each block component x_i -> E(x)_j"""
        out = {}
        for (i, j), v in self.inclusion.embeddings.items():
            dim_i = self.inclusion.sup.dims[i]
            dim_j = self.inclusion.sub.dims[j]
            choi = np.zeros((dim_i * dim_j, dim_i * dim_j), dtype=complex)
            for a in range(dim_i):
                for b in range(dim_i):
                    unit = np.zeros((dim_i, dim_i), dtype=complex)
                    unit[a, b] = 1.0
                    choi += np.kron(unit, self._reduce(i, j, unit))
            out[(i, j)] = choi
        return out

    def is_completely_positive(self, tol: Tolerances | None = None) -> bool:
        tol = tolerances.resolve(tol)
        return all(la.eigvalsh(c).min() >= -tol.positivity for c in self.choi_blocks().values())

def trace_preserving_expectation(inc: InclusionDescriptor) -> ExpectationMap:
    inc.validate()
    return ExpectationMap(inc)

def restrict_density(T: AlgebraElement, inc: InclusionDescriptor, tol: Tolerances | None = None) -> AlgebraElement:
    """Density of the restricted functional: Tr_sub(result y) = Tr_sup(T iota(y))"""
    tol = tolerances.resolve(tol)
    for (label, _), block in zip(T.parent.blocks, T.blocks):
        smallest = la.eigvalsh(0.5 * (block + block.conj().T)).min()
        if smallest < -tol.positivity:
            raise ValueError(f'Density is not positive on block {label!r}: eigenvalue {smallest:.3e}')
    return trace_preserving_expectation(inc).apply(T)

def pinching_expectation(x: 'AlgebraElement | np.ndarray', projections: Sequence[np.ndarray], tol: Tolerances | None = None) -> np.ndarray:
    """Sum_k P_k x P_k for an orthogonal resolution of the identity"""
    tol = tolerances.resolve(tol)
    matrix = as_matrix(x)
    dim = matrix.shape[0]
    projections = [np.asarray(p, dtype=complex) for p in projections]
    total = np.zeros((dim, dim), dtype=complex)
    for a, p in enumerate(projections):
        if p.shape != (dim, dim):
            raise ValueError(f'Projection {a} has shape {p.shape}, expected {(dim, dim)}')
        if np.linalg.norm(p @ p - p) > tol.projection or np.linalg.norm(p - p.conj().T) > tol.projection:
            raise ValueError(f'Matrix {a} is not an orthogonal projection')
        for b in range(a):
            if np.linalg.norm(p @ projections[b]) > tol.projection:
                raise ValueError(f'Projections {b} and {a} are not orthogonal')
        total += p
    if np.linalg.norm(total - np.eye(dim)) > tol.projection:
        raise ValueError('Projections do not sum to the identity')
    return sum(p @ matrix @ p for p in projections)

def diagonal_expectation(x: 'AlgebraElement | np.ndarray', masa_basis: np.ndarray, tol: Tolerances | None = None) -> np.ndarray:
    """Keeps the diagonal matrix-unit coefficients of x in the given orthonormal basis"""
    tol = tolerances.resolve(tol)
    matrix = as_matrix(x)
    basis = np.asarray(masa_basis, dtype=complex)
    if basis.shape != matrix.shape:
        raise ValueError(f'Basis shape {basis.shape} does not match element shape {matrix.shape}')
    if np.max(np.abs(basis.conj().T @ basis - np.eye(basis.shape[1]))) > tol.gram:
        raise ValueError('Basis is not orthonormal')
    coefficients = np.einsum('ia,ij,ja->a', basis.conj(), matrix, basis)
    return (basis * coefficients) @ basis.conj().T

def _cluster(values: np.ndarray, gap: float) -> list[np.ndarray]:
    """Groups sorted values whose consecutive gaps are below the threshold"""
    if len(values) == 0:
        return []
    breaks = np.flatnonzero(np.diff(values) >= gap) + 1
    return np.split(np.arange(len(values)), breaks)

def _canonical_basis(columns: np.ndarray) -> np.ndarray:
    """Orthonormal basis of a subspace from its projections of standard vectors, in index order"""
    dim, rank = columns.shape
    projector = columns @ columns.conj().T
    threshold = 0.5 / np.sqrt(dim)
    chosen: list[int] = []
    accepted = np.zeros((dim, 0), dtype=complex)
    for index in range(dim):
        if len(chosen) == rank:
            break
        v = projector[:, index]
        residual = v - accepted @ (accepted.conj().T @ v)
        norm = np.linalg.norm(residual)
        if norm > threshold:
            chosen.append(index)
            accepted = np.hstack([accepted, (residual / norm)[:, None]])
    q, r = np.linalg.qr(projector[:, chosen])
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases.conj()

def simultaneous_diagonalization(ops: Sequence['AlgebraElement | np.ndarray'], tol: Tolerances | None = None) -> tuple[np.ndarray, list[np.ndarray]]:
    """
    One unitary U with U* A U diagonal for every commuting Hermitian A
    Eigenspaces are refined op by op, eigenvalues ascending; each final
    cluster gets the basis obtained from its projected standard vectors
    """
    tol = tolerances.resolve(tol)
    if not ops:
        raise ValueError('No input matrices')
    matrices = [as_matrix(a) for a in ops]
    dim = matrices[0].shape[0]
    for k, a in enumerate(matrices):
        if a.shape != (dim, dim):
            raise ValueError(f'Matrix {k} has shape {a.shape}, expected {(dim, dim)}')
        if not is_hermitian(a, tol.hermitian):
            raise ValueError(f'Matrix {k} is not Hermitian')
        for kk in range(k):
            b = matrices[kk]
            scale = max(np.linalg.norm(a) * np.linalg.norm(b), 1e-300)
            if np.linalg.norm(a @ b - b @ a) > tol.commutator * scale:
                raise ValueError(f'Matrices {kk} and {k} do not commute')

    clusters = [np.eye(dim, dtype=complex)]
    for a in matrices:
        scale = max(1.0, float(np.max(np.abs(la.eigvalsh(a)))))
        refined = []
        for columns in clusters:
            sub = columns.conj().T @ a @ columns
            values, vectors = la.eigh(0.5 * (sub + sub.conj().T))
            rotated = columns @ vectors
            for group in _cluster(values, tol.degeneracy_gap * scale):
                refined.append(rotated[:, group])
        clusters = refined

    unitary = np.hstack([_canonical_basis(columns) for columns in clusters])
    eigenvalues = [np.real(np.einsum('ia,ij,ja->a', unitary.conj(), a, unitary)) for a in matrices]
    LOGGER.debug(f'Simultaneously diagonalized {len(matrices)} operators of dimension {dim} into {len(clusters)} joint eigenspaces')
    return unitary, eigenvalues

def _spectral(x: 'AlgebraElement | np.ndarray', function, check=None):
    def apply(block: np.ndarray) -> np.ndarray:
        values, vectors = la.eigh(0.5 * (block + block.conj().T))
        if check is not None:
            check(values)
        return (vectors * function(values)) @ vectors.conj().T
    tol = tolerances.current()
    if isinstance(x, AlgebraElement):
        for (label, _), block in zip(x.parent.blocks, x.blocks):
            if not is_hermitian(block, tol.hermitian):
                raise ValueError(f'Block {label!r} is not Hermitian')
        return x.parent.element([apply(b) for b in x.blocks], hermitian=True)
    matrix = as_matrix(x)
    if not is_hermitian(matrix, tol.hermitian):
        raise ValueError('Matrix is not Hermitian')
    return apply(matrix)

def matrix_exp(x: 'AlgebraElement | np.ndarray', scale: float = 1.0):
    """exp(scale * x) for Hermitian x"""
    return _spectral(x, lambda values: np.exp(scale * values))

def matrix_log(x: 'AlgebraElement | np.ndarray', tol: Tolerances | None = None):
    """Principal logarithm of a strictly positive Hermitian element"""
    tol = tolerances.resolve(tol)
    def check(values: np.ndarray) -> None:
        if values.min() <= tol.log_positivity:
            raise ValueError(f'Logarithm of non-positive element: smallest eigenvalue {values.min():.3e}')
    return _spectral(x, np.log, check)
