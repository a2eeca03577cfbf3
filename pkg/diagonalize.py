"""
Diagonal algebra of a quantum Markov state on a segment [k, l].

N_[k,l] is the algebra generated by the terms of h_N: one full matrix block
per end-label pair (w_k, w_l) acting on Nbar^k (x) sites k+1..l-1 (x) N^l,
with N^k (x) Nbar^l as multiplicity. Inside each block the bond eigenbases
along every interior label path give the atoms of the diagonal algebra.
"""
import logging
import itertools
from math import prod
from dataclasses import dataclass

import numpy as np

import tolerances
from tolerances import Tolerances
from algebra import DirectSumAlgebra, AlgebraElement, InclusionDescriptor, ExpectationMap, restrict_density, simultaneous_diagonalization, matrix_exp, as_element
from markov_spec import InteractionSpec, Boundaries, SegmentState, default_boundaries, segment_density, assemble_operators, transfer_matrix, reduced_bond_exponential
from utilities import kron_all, partial_trace

LOGGER = logging.getLogger('markov_states')

@dataclass(frozen=True)
class AtomPath:
    segment: tuple[int, int]
    labels: tuple[str, ...]
    atoms: tuple[int, ...] # one bond eigenvector index per bond

@dataclass(frozen=True, eq=False)
class DiagonalAlgebraData:
    spec: InteractionSpec
    segment: tuple[int, int]
    bond_bases: dict[tuple[int, str, str], tuple[np.ndarray, np.ndarray]] # (bond, w, w') -> (U, eigenvalues)
    central_labels: dict[int, tuple[str, ...]]
    algebra: DirectSumAlgebra # N_[k,l], block labels (w_k, w_l)
    multiplicities: dict[tuple[str, str], int]
    frames: dict[tuple[str, str], np.ndarray]
    atoms: dict[tuple[str, str], tuple[AtomPath, ...]]

    def bond_basis(self, j: int, w: str, w_next: str) -> tuple[np.ndarray, np.ndarray]:
        return self.bond_bases[(self.spec.bond_index(j), w, w_next)]

    def block_embedding(self, key: tuple[str, str]) -> np.ndarray:
        """Columns (block index major, multiplicity minor) of block key inside the segment space"""
        k, l = self.segment
        spec = self.spec
        w_k, w_l = key
        if k == l:
            return spec.isometry(k, w_k)
        site_k, site_l = spec.site(k), spec.site(l)
        n_k, nbar_k = site_k.left_dim(w_k), site_k.right_dim(w_k)
        n_l, nbar_l = site_l.left_dim(w_l), site_l.right_dim(w_l)
        mid = prod(spec.dims(k + 1, l - 1)) if l - k > 1 else 1
        full = kron_all([spec.isometry(k, w_k), np.eye(mid), spec.isometry(l, w_l)])
        total_dim = full.shape[0]
        tensor = full.reshape(total_dim, n_k, nbar_k, mid, n_l, nbar_l).transpose(0, 2, 3, 4, 1, 5)
        return tensor.reshape(total_dim, -1)

    def inclusion(self, tol: Tolerances | None = None) -> InclusionDescriptor:
        """N_[k,l] inside the full matrix algebra of the segment"""
        tol = tolerances.resolve(tol)
        total_dim = prod(self.spec.dims(*self.segment))
        if total_dim > tol.dense_dim_limit:
            raise ValueError(f'Segment dimension {total_dim} exceeds the dense limit {tol.dense_dim_limit}')
        sup = DirectSumAlgebra.full(total_dim)
        multiplicity = np.array([[self.multiplicities[key] for key in self.algebra.labels]])
        embeddings = {(0, j): self.block_embedding(key) for j, key in enumerate(self.algebra.labels)}
        return InclusionDescriptor(self.algebra, sup, multiplicity, embeddings)

    def all_atoms(self) -> list[AtomPath]:
        return [atom for key in self.algebra.labels for atom in self.atoms[key]]

def _bond_bases(spec: InteractionSpec, k: int, l: int, tol: Tolerances) -> dict[tuple[int, str, str], tuple[np.ndarray, np.ndarray]]:
    bases = {}
    for j in range(k, l):
        b = spec.bond_index(j)
        for w in spec.site(j).labels:
            for w_next in spec.site(j + 1).labels:
                if (b, w, w_next) in bases:
                    continue
                unitary, (values,) = simultaneous_diagonalization([spec.bond(j, w, w_next)], tol)
                bases[(b, w, w_next)] = (unitary, values)
    return bases

def _path_columns(spec: InteractionSpec, k: int, l: int, w_k: str, w_l: str, interior: tuple[str, ...]) -> np.ndarray:
    """Standard-coordinate indices of one interior path inside block (w_k, w_l), ordered b_k, a_k+1, b_k+1, ..., a_l"""
    n_l = spec.site(l).left_dim(w_l)
    mid_dims = spec.dims(k + 1, l - 1) if l - k > 1 else []
    strides = [prod(mid_dims[p + 1:]) * n_l for p in range(len(mid_dims))]
    index = np.zeros(1, dtype=int)
    def extend(values: np.ndarray) -> None:
        nonlocal index
        index = (index[:, None] + values[None, :]).ravel()
    extend(np.arange(spec.site(k).right_dim(w_k)) * prod(mid_dims) * n_l)
    for p, w in enumerate(interior):
        site = spec.site(k + 1 + p)
        stride = strides[p]
        extend(site.offset(w) * stride + np.arange(site.left_dim(w)) * site.right_dim(w) * stride)
        extend(np.arange(site.right_dim(w)) * stride)
    extend(np.arange(n_l))
    return index

def build_diagonal_algebra(spec: InteractionSpec, segment: tuple[int, int], tol: Tolerances | None = None) -> DiagonalAlgebraData:
    """Eigenbases of every bond block and the atoms and frames of the diagonal algebra of N_[k,l]"""
    tol = tolerances.resolve(tol)
    k, l = segment
    segment = (k, l)
    spec.check_segment(k, l)
    bases = _bond_bases(spec, k, l, tol)
    central = {j: spec.site(j).labels for j in range(k, l + 1)}

    blocks = []
    multiplicities = {}
    frames = {}
    atoms = {}
    if k == l:
        site = spec.site(k)
        for w in site.labels:
            blocks.append(((w, w), 1))
            multiplicities[(w, w)] = site.block_dim(w)
            frames[(w, w)] = np.ones((1, 1), dtype=complex)
            atoms[(w, w)] = (AtomPath(segment, (w,), ()),)
    else:
        site_k, site_l = spec.site(k), spec.site(l)
        mid_embedding = kron_all([spec.embedding(j) for j in range(k + 1, l)])
        for w_k in site_k.labels:
            for w_l in site_l.labels:
                key = (w_k, w_l)
                n_l, nbar_k = site_l.left_dim(w_l), site_k.right_dim(w_k)
                physical = kron_all([np.eye(nbar_k), mid_embedding, np.eye(n_l)])
                columns = []
                block_atoms = []
                for interior in itertools.product(*(spec.site(j).labels for j in range(k + 1, l))):
                    labels = (w_k, *interior, w_l)
                    rotation = kron_all([bases[(spec.bond_index(j), labels[j - k], labels[j - k + 1])][0] for j in range(k, l)])
                    columns.append(physical[:, _path_columns(spec, k, l, w_k, w_l, interior)] @ rotation)
                    sizes = [len(bases[(spec.bond_index(j), labels[j - k], labels[j - k + 1])][1]) for j in range(k, l)]
                    block_atoms.extend(AtomPath(segment, labels, s) for s in itertools.product(*(range(n) for n in sizes)))
                frame = np.hstack(columns)
                blocks.append((key, frame.shape[0]))
                multiplicities[key] = site_k.left_dim(w_k) * site_l.right_dim(w_l)
                frames[key] = frame
                atoms[key] = tuple(block_atoms)
    algebra = DirectSumAlgebra(tuple(blocks))
    for key, frame in frames.items():
        if np.max(np.abs(frame.conj().T @ frame - np.eye(frame.shape[1]))) > tol.gram * max(1, frame.shape[0]):
            raise RuntimeError(f'Frame of block {key} is not unitary')
    LOGGER.debug(f'Diagonal algebra on [{k}, {l}]: {len(frames)} blocks, {sum(len(a) for a in atoms.values())} atoms')
    return DiagonalAlgebraData(spec, (k, l), bases, central, algebra, multiplicities, frames, atoms)

@dataclass(frozen=True, eq=False)
class BoundaryTerms:
    segment: tuple[int, int]
    left: dict[int, dict[str, float]] # K_j
    right: dict[int, dict[str, float]] # Khat_j
    shift: float
    log_partition: float
    source: Boundaries

def boundary_terms(spec: InteractionSpec, segment: tuple[int, int], boundaries: Boundaries | None = None, tol: Tolerances | None = None) -> BoundaryTerms:
    """K_j = -ln Tr exp(-h^j_w) and Khat_j = -ln Tr exp(-hhat^j_w) per label, with ln Z of the segment"""
    tol = tolerances.resolve(tol)
    k, l = segment
    spec.check_segment(k, l)
    boundaries = boundaries or default_boundaries(spec, tol)
    left = {}
    right = {}
    for j in range(k, l + 1):
        left[j] = {w: -float(np.log(np.real(np.trace(matrix_exp(block, -1.0))))) for w, block in boundaries.left(spec, j).items()}
        right[j] = {w: -float(np.log(np.real(np.trace(matrix_exp(block, -1.0))))) for w, block in boundaries.right(spec, j).items()}
    vector = np.exp([-right[l][w] for w in spec.site(l).labels])
    for j in range(l - 1, k - 1, -1):
        vector = transfer_matrix(spec, j, boundaries.shift) @ vector
    partition = float(np.exp([-left[k][w] for w in spec.site(k).labels]) @ vector)
    if not np.isfinite(partition) or partition <= 0:
        raise RuntimeError(f'Partition function of [{k}, {l}] is not positive and finite: {partition}')
    return BoundaryTerms((k, l), left, right, boundaries.shift, float(np.log(partition)), boundaries)

@dataclass(frozen=True, eq=False)
class DiagonalExpectation:
    """E_[k,l]: N_[k,l] -> D_[k,l], rotation into the atom frame followed by the diagonal strip"""
    data: DiagonalAlgebraData

    def apply(self, y: AlgebraElement) -> AlgebraElement:
        if y.parent != self.data.algebra:
            raise ValueError('Element does not belong to N of this segment')
        blocks = []
        for key, block in zip(self.data.algebra.labels, y.blocks):
            frame = self.data.frames[key]
            coefficients = np.einsum('ia,ij,ja->a', frame.conj(), block, frame)
            blocks.append((frame * coefficients) @ frame.conj().T)
        return self.data.algebra.element(blocks)

    def atom_projection(self, key: tuple[str, str], index: int) -> AlgebraElement:
        """Minimal projection of D_[k,l] for atom number index of block key"""
        blocks = []
        for label, dim in self.data.algebra.blocks:
            if label == key:
                f = self.data.frames[key][:, index]
                blocks.append(np.outer(f, f.conj()))
            else:
                blocks.append(np.zeros((dim, dim), dtype=complex))
        return self.data.algebra.element(blocks)

    def invariance_deviation(self, density: AlgebraElement, samples: list[AlgebraElement]) -> float:
        """max |Tr(T x) - Tr(T E(x))| over the samples"""
        worst = 0.0
        for x in samples:
            before = sum(np.trace(t @ b) for t, b in zip(density.blocks, x.blocks))
            after = sum(np.trace(t @ b) for t, b in zip(density.blocks, self.apply(x).blocks))
            worst = max(worst, abs(before - after))
        return float(worst)

def diagonal_umegaki_expectation(data: DiagonalAlgebraData, segment: tuple[int, int]) -> DiagonalExpectation:
    if tuple(segment) != data.segment:
        raise ValueError(f'Diagonal data was built for {data.segment}, not {tuple(segment)}')
    return DiagonalExpectation(data)

def density_restriction_check(spec: InteractionSpec, segment: tuple[int, int], data: DiagonalAlgebraData | None = None, terms: BoundaryTerms | None = None, tol: Tolerances | None = None) -> float:
    """Max entry of exp(-h_N) - E^M_N(rho), h_N assembled from K_k, the bonds and Khat_l"""
    tol = tolerances.resolve(tol)
    data = data or build_diagonal_algebra(spec, segment, tol)
    terms = terms or boundary_terms(spec, segment, tol=tol)
    k, l = segment
    state = segment_density(spec, segment, terms.source, dense=True, tol=tol)
    inclusion = data.inclusion(tol)
    restricted = restrict_density(as_element(state.rho), inclusion, tol)
    bond_sum = assemble_operators(spec, segment, terms.source, tol).bond_terms.values()
    compressed = ExpectationMap(inclusion).apply(as_element(sum(bond_sum, np.zeros_like(state.rho))))
    worst = 0.0
    for (key, dim), block, reduced in zip(data.algebra.blocks, compressed.blocks, restricted.blocks):
        w_k, w_l = key
        offset = terms.left[k][w_k] + terms.right[l][w_l] + terms.log_partition
        h_block = block / data.multiplicities[key] + offset * np.eye(dim)
        worst = max(worst, float(np.max(np.abs(matrix_exp(h_block, -1.0) - reduced))))
    return worst

def commuting_square_check(spec: InteractionSpec, segment: tuple[int, int], tol: Tolerances | None = None) -> float:
    """
    Max deviation of E_[k-1,l+1] from E_[k,l] on the frame matrix units |f_a><f_b| of N_[k,l],
    both evaluated inside the blocks of N_[k-1,l+1]
    """
    tol = tolerances.resolve(tol)
    k, l = segment
    spec.check_segment(k - 1, l + 1)
    inner = build_diagonal_algebra(spec, (k, l), tol)
    outer = build_diagonal_algebra(spec, (k - 1, l + 1), tol)
    worst = 0.0
    for outer_key in outer.algebra.labels:
        w_out, w_end = outer_key
        frame = outer.frames[outer_key]
        pad_left = np.eye(spec.site(k - 1).right_dim(w_out))
        pad_right = np.eye(spec.site(l + 1).left_dim(w_end))
        for key in inner.algebra.labels:
            embedding = inner.block_embedding(key)
            mult = inner.multiplicities[key]
            lifted = []
            for f in inner.frames[key].T:
                columns = embedding @ np.kron(f[:, None], np.eye(mult))
                lifted.append(kron_all([pad_left, columns, pad_right]))
            coefficients = np.stack([frame.conj().T @ phi for phi in lifted]) # (atom, outer atom, column)
            pairs = np.einsum('aAc,bAc->abA', coefficients, coefficients.conj())
            off_diagonal = pairs.copy()
            idx = np.arange(len(lifted))
            off_diagonal[idx, idx, :] = 0
            if off_diagonal.size:
                worst = max(worst, float(np.max(np.abs(off_diagonal))))
            for a, phi in enumerate(lifted):
                big = (frame * np.real(pairs[a, a])) @ frame.conj().T
                worst = max(worst, float(np.max(np.abs(big - phi @ phi.conj().T))))
    LOGGER.debug(f'Commuting square [{k}, {l}] in [{k - 1}, {l + 1}]: deviation {worst:.3e}')
    return worst

@dataclass(frozen=True, eq=False)
class ClassicalMarkovChain:
    segment: tuple[int, int]
    site_labels: dict[int, tuple[str, ...]]
    label_initial: np.ndarray
    label_transitions: list[np.ndarray] # bond j: P(w_j+1 | w_j)
    refined_states: list[list[tuple[str, str, int]]] # per bond: (w, w', s)
    initial: np.ndarray # over refined_states[0], or labels when k == l
    transitions: list[np.ndarray] # refined_states[j-1] -> refined_states[j]
    atoms: list[AtomPath]
    measure: np.ndarray
    certification: float

    def probability(self, atom: AtomPath) -> float:
        return float(self.measure[self.atoms.index(atom)])

def _atom_log_weight(atom: AtomPath, data: DiagonalAlgebraData, terms: BoundaryTerms) -> float:
    k, l = atom.segment
    total = terms.left[k][atom.labels[0]] + terms.right[l][atom.labels[-1]]
    for p, s in enumerate(atom.atoms):
        total += data.bond_basis(k + p, atom.labels[p], atom.labels[p + 1])[1][s] + terms.shift
    return total

def atom_weights_from_state(state: SegmentState, data: DiagonalAlgebraData) -> dict[AtomPath, float]:
    """phi(chi_atom) evaluated from the state itself, densely when possible, else along label paths"""
    out = {}
    k, l = data.segment
    if state.rho is not None:
        inclusion = data.inclusion()
        reduced = ExpectationMap(inclusion).apply(as_element(state.rho))
        for key, block in zip(data.algebra.labels, reduced.blocks):
            frame = data.frames[key]
            values = np.real(np.einsum('ia,ij,ja->a', frame.conj(), block, frame))
            out.update(zip(data.atoms[key], values))
        return out
    factors = {path.labels: path.factors for path in state.paths}
    for atom in data.all_atoms():
        path = factors[atom.labels]
        value = np.real(np.trace(path[0])) * np.real(np.trace(path[-1]))
        for p, s in enumerate(atom.atoms):
            u = data.bond_basis(k + p, atom.labels[p], atom.labels[p + 1])[0][:, s]
            value *= np.real(u.conj() @ path[p + 1] @ u)
        out[atom] = float(value)
    return out

def extract_markov_measure(spec: InteractionSpec, segment: tuple[int, int], data: DiagonalAlgebraData, terms: BoundaryTerms, state: SegmentState | None = None, tol: Tolerances | None = None) -> ClassicalMarkovChain:
    """
    Classical Markov chain of the atoms: closed-form weights from K, the bond
    eigenvalues and Khat, certified atom by atom against phi(chi_atom)
    """
    tol = tolerances.resolve(tol)
    k, l = segment
    if data.segment != (k, l) or terms.segment != (k, l):
        raise ValueError(f'Diagonal data {data.segment} and boundary terms {terms.segment} do not match segment {(k, l)}')
    labels = {j: spec.site(j).labels for j in range(k, l + 1)}

    def bond_weights(j: int, w: str, w_next: str) -> np.ndarray:
        return np.exp(-(data.bond_basis(j, w, w_next)[1] + terms.shift))

    beta = {l: np.exp([-terms.right[l][w] for w in labels[l]])}
    for j in range(l - 1, k - 1, -1):
        beta[j] = np.array([
            sum(bond_weights(j, w, w_next).sum() * beta[j + 1][b] for b, w_next in enumerate(labels[j + 1]))
            for w in labels[j]
        ])
    start = np.exp([-terms.left[k][w] for w in labels[k]])
    partition = float(start @ beta[k])
    if abs(np.log(partition) - terms.log_partition) > tol.agreement * max(1.0, abs(terms.log_partition)):
        raise RuntimeError(f'State is not normalised: ln Z = {np.log(partition):.12g}, recorded {terms.log_partition:.12g}')
    label_initial = start * beta[k] / partition

    label_transitions = []
    refined_states = []
    for j in range(k, l):
        matrix = np.zeros((len(labels[j]), len(labels[j + 1])))
        states = []
        for a, w in enumerate(labels[j]):
            for b, w_next in enumerate(labels[j + 1]):
                weights = bond_weights(j, w, w_next)
                matrix[a, b] = weights.sum() * beta[j + 1][b] / beta[j][a]
                states.extend((w, w_next, s) for s in range(len(weights)))
        label_transitions.append(matrix)
        refined_states.append(states)

    def step(j: int, state: tuple[str, str, int]) -> float:
        w, w_next, s = state
        a, b = labels[j].index(w), labels[j + 1].index(w_next)
        return bond_weights(j, w, w_next)[s] * beta[j + 1][b] / beta[j][a]

    if k == l:
        initial = label_initial
    else:
        initial = np.array([label_initial[labels[k].index(st[0])] * step(k, st) for st in refined_states[0]])
    transitions = []
    for j in range(k + 1, l):
        matrix = np.zeros((len(refined_states[j - k - 1]), len(refined_states[j - k])))
        for r, previous in enumerate(refined_states[j - k - 1]):
            for c, following in enumerate(refined_states[j - k]):
                if previous[1] == following[0]:
                    matrix[r, c] = step(j, following)
        transitions.append(matrix)

    atoms = data.all_atoms()
    measure = np.exp([-(_atom_log_weight(atom, data, terms) + np.log(partition)) for atom in atoms])
    if abs(measure.sum() - 1) > tol.round_trip * max(1, len(atoms)):
        raise RuntimeError(f'Atom measure sums to {measure.sum():.15g}')

    state = state if state is not None else segment_density(spec, segment, terms.source, tol=tol)
    observed = atom_weights_from_state(state, data)
    certification = float(max(abs(observed[atom] - w) for atom, w in zip(atoms, measure)))
    if certification > tol.agreement:
        raise RuntimeError(f'Closed-form atom weights disagree with phi(chi_atom) by {certification:.3e}')
    LOGGER.debug(f'Markov measure on [{k}, {l}]: {len(atoms)} atoms, certified to {certification:.3e}')
    return ClassicalMarkovChain((k, l), labels, label_initial, label_transitions, refined_states, initial, transitions, atoms, measure, certification)

def _end_reductions(data: DiagonalAlgebraData, j: int, w: str, w_next: str, keep: str) -> list[np.ndarray]:
    """Per eigenvector of bond j, the partial trace of its projection keeping N^{j+1} ('right') or Nbar^j ('left')"""
    spec = data.spec
    unitary, _ = data.bond_basis(j, w, w_next)
    nbar, n_next = spec.site(j).right_dim(w), spec.site(j + 1).left_dim(w_next)
    out = []
    for u in unitary.T:
        m = u.reshape(nbar, n_next)
        out.append(m.T @ m.conj() if keep == 'right' else m @ m.conj().T)
    return out

def _block_marginal(spec: InteractionSpec, segment: tuple[int, int], terms: BoundaryTerms) -> np.ndarray:
    """Tr over the end sites of the grown segment's density, assembled path by path"""
    k, l = segment
    source = terms.source
    total_dim = prod(spec.dims(k, l))
    out = np.zeros((total_dim, total_dim), dtype=complex)
    partition = np.exp(terms.log_partition)
    for labels in spec.label_paths(k, l):
        left = sum(
            np.real(np.trace(matrix_exp(source.left(spec, k - 1)[w], -1.0))) * reduced_bond_exponential(spec, k - 1, w, labels[0], source.shift, 'right')
            for w in spec.site(k - 1).labels
        )
        right = sum(
            reduced_bond_exponential(spec, l, labels[-1], w, source.shift, 'left') * np.real(np.trace(matrix_exp(source.right(spec, l + 1)[w], -1.0)))
            for w in spec.site(l + 1).labels
        )
        factors = [left]
        for p in range(l - k):
            block = spec.bond(k + p, labels[p], labels[p + 1])
            factors.append(matrix_exp(block + source.shift * np.eye(block.shape[0]), -1.0))
        factors.append(right)
        v = kron_all([spec.isometry(k + p, w) for p, w in enumerate(labels)])
        out += v @ kron_all(factors) @ v.conj().T / partition
    return out

def verify_diagonalization(spec: InteractionSpec, segment: tuple[int, int], boundaries: Boundaries | None = None, tol: Tolerances | None = None) -> float:
    """
    max |phi(A) - phi_mu(E(A))| over the matrix units A of M_[k,l], with E the
    expectation onto the diagonal algebra of [k-1, l+1]; evaluated through the
    density sigma that phi_mu o E induces on [k, l]
    """
    tol = tolerances.resolve(tol)
    k, l = segment
    spec.check_segment(k - 1, l + 1)
    total_dim = prod(spec.dims(k, l))
    if total_dim > tol.dense_dim_limit:
        raise ValueError(f'Segment dimension {total_dim} exceeds the dense limit {tol.dense_dim_limit}')
    grown = (k - 1, l + 1)
    boundaries = boundaries or default_boundaries(spec, tol)
    data = build_diagonal_algebra(spec, grown, tol)
    terms = boundary_terms(spec, grown, boundaries, tol)
    state = segment_density(spec, grown, boundaries, tol=tol)
    chain = extract_markov_measure(spec, grown, data, terms, state, tol)

    accumulated: dict[tuple[str, ...], dict[tuple[int, ...], np.ndarray]] = {}
    for atom, weight in zip(chain.atoms, chain.measure):
        inner_labels = atom.labels[1:-1]
        left = _end_reductions(data, k - 1, atom.labels[0], atom.labels[1], 'right')[atom.atoms[0]]
        right = _end_reductions(data, l, atom.labels[-2], atom.labels[-1], 'left')[atom.atoms[-1]]
        inner = accumulated.setdefault(inner_labels, {})
        key = atom.atoms[1:-1]
        inner[key] = inner.get(key, 0) + weight * np.kron(left, right)

    sigma = np.zeros((total_dim, total_dim), dtype=complex)
    for labels, blocks in accumulated.items():
        n_k, nbar_l = spec.site(k).left_dim(labels[0]), spec.site(l).right_dim(labels[-1])
        unitaries = [data.bond_basis(j, labels[j - k], labels[j - k + 1])[0] for j in range(k, l)]
        inner_dim = prod(u.shape[0] for u in unitaries)
        rotated = np.zeros((n_k, inner_dim, nbar_l, n_k, inner_dim, nbar_l), dtype=complex)
        sizes = [u.shape[0] for u in unitaries]
        for s_index, s in enumerate(itertools.product(*(range(n) for n in sizes))):
            if s in blocks:
                rotated[:, s_index, :, :, s_index, :] = blocks[s].reshape(n_k, nbar_l, n_k, nbar_l)
        rotated = rotated.reshape(n_k * inner_dim * nbar_l, -1)
        g = kron_all([spec.isometry(k + p, w) for p, w in enumerate(labels)]) @ kron_all([np.eye(n_k), *unitaries, np.eye(nbar_l)])
        sigma += g @ rotated @ g.conj().T

    if state.rho is not None:
        marginal = partial_trace(state.rho, list(state.dims), list(range(1, len(state.dims) - 1)))
    else:
        marginal = _block_marginal(spec, segment, terms)
    deviation = float(np.max(np.abs(sigma - marginal)))
    LOGGER.debug(f'Diagonalization of [{k}, {l}] through [{k - 1}, {l + 1}]: deviation {deviation:.3e}')
    return deviation

def markov_property_check(chain: ClassicalMarkovChain, n: int, seed: int = 0, tol: Tolerances | None = None) -> float:
    """
    max |P(A and B | w_n) - P(A | w_n) P(B | w_n)| for past events A on [k, n]
    and future events B on [n, l]; exhaustive over singletons for small atom
    spaces, seeded random event pairs otherwise
    """
    tol = tolerances.resolve(tol)
    k, l = chain.segment
    if not k <= n <= l:
        raise ValueError(f'Site {n} is outside the chain segment [{k}, {l}]')
    cut = n - k
    grouped: dict[str, dict[tuple, dict[tuple, float]]] = {}
    for atom, weight in zip(chain.atoms, chain.measure):
        past = (atom.labels[:cut + 1], atom.atoms[:cut])
        future = (atom.labels[cut:], atom.atoms[cut:])
        table = grouped.setdefault(atom.labels[cut], {})
        table.setdefault(past, {})
        table[past][future] = table[past].get(future, 0.0) + float(weight)

    rng = np.random.default_rng(seed)
    exhaustive = len(chain.atoms) <= tol.exhaustive_event_limit
    worst = 0.0
    for label in chain.site_labels[n]:
        table = grouped.get(label, {})
        pasts = list(table)
        futures = sorted({f for row in table.values() for f in row})
        joint = np.array([[table[p].get(f, 0.0) for f in futures] for p in pasts]) if pasts else np.zeros((0, 0))
        total = joint.sum()
        if total <= 0:
            raise ValueError(f'Label {label!r} at site {n} has zero probability')
        conditional = joint / total
        rows, cols = conditional.sum(axis=1), conditional.sum(axis=0)
        if exhaustive:
            worst = max(worst, float(np.max(np.abs(conditional - np.outer(rows, cols)))))
            continue
        for _ in range(tol.sampled_event_pairs):
            a = rng.random(len(pasts)) < 0.5
            b = rng.random(len(futures)) < 0.5
            both = conditional[np.ix_(a, b)].sum()
            worst = max(worst, float(abs(both - rows[a].sum() * cols[b].sum())))
    return worst

@dataclass(frozen=True, eq=False)
class DiagonalizationResult:
    data: DiagonalAlgebraData
    terms: BoundaryTerms
    expectation: DiagonalExpectation
    chain: ClassicalMarkovChain

def diagonalize(spec: InteractionSpec, segment: tuple[int, int], boundaries: Boundaries | None = None, tol: Tolerances | None = None) -> DiagonalizationResult:
    """Diagonal algebra, boundary terms, expectation and certified Markov measure of one segment"""
    tol = tolerances.resolve(tol)
    data = build_diagonal_algebra(spec, segment, tol)
    terms = boundary_terms(spec, segment, boundaries, tol)
    chain = extract_markov_measure(spec, segment, data, terms, tol=tol)
    return DiagonalizationResult(data, terms, diagonal_umegaki_expectation(data, segment), chain)
