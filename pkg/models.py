"""Generators for the Ising chain, diagonal Markov liftings and seeded random specs"""
import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

import tolerances
from tolerances import Tolerances
from exact import ExactLog
from markov_spec import SiteBlocks, InteractionSpec
from utilities import random_unitary

LOGGER = logging.getLogger('markov_states')

SPINS = {'+': 1, '-': -1}

MAX_RANDOM_DIM = 6

DEFAULT_POOL = tuple(ExactLog.parse(literal) for literal in ('0', 'ln(2)', '1/2*ln(2)', '2*ln(2)', 'ln(3)', 'ln(3/2)'))

def _is_exact_number(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)

def gen_ising(j1, j2, exact: bool | None = None) -> InteractionSpec:
    """Period-2 chain of spins with bond couplings J_1, J_2: h_{w,w'} = J w w'"""
    if exact is None:
        exact = _is_exact_number(j1) and _is_exact_number(j2)
    if exact and not (_is_exact_number(j1) and _is_exact_number(j2)):
        raise ValueError(f'Exact Ising couplings must be int or Fraction, got {j1!r}, {j2!r}')
    site = SiteBlocks.from_dims(('+', '-'), (1, 1), (1, 1))
    zero = {w: np.zeros((1, 1)) for w in SPINS}
    bonds = []
    spectra = []
    for coupling in (j1, j2):
        bonds.append({(w, v): np.array([[float(coupling) * SPINS[w] * SPINS[v]]]) for w in SPINS for v in SPINS})
        if exact:
            spectra.append({(w, v): (ExactLog.rational(Fraction(coupling) * SPINS[w] * SPINS[v]),) for w in SPINS for v in SPINS})
    return InteractionSpec(
        sites=(site, site),
        left_terms=(zero, zero),
        right_terms=(zero, zero),
        bonds=tuple(bonds),
        periodic=True,
        bond_spectra=tuple(spectra),
        name=f'ising({j1}, {j2})',
    )

def gen_markov_lifting(matrix, exact: bool | None = None, tol: Tolerances | None = None) -> InteractionSpec:
    """Period-1 diagonal lifting of a strictly positive stochastic matrix: h_{i,j} = -ln p_ij"""
    tol = tolerances.resolve(tol)
    rows = [list(row) for row in matrix]
    d = len(rows)
    if d == 0 or any(len(row) != d for row in rows):
        raise ValueError(f'Stochastic matrix must be square and non-empty, got row lengths {[len(r) for r in rows]}')
    if exact is None:
        exact = all(_is_exact_number(p) for row in rows for p in row)
    if exact:
        rows = [[Fraction(p) for p in row] for row in rows]
    values = np.array([[float(p) for p in row] for row in rows])
    if np.any(values <= 0):
        raise ValueError('Stochastic matrix entries must be strictly positive')
    for i, row in enumerate(rows):
        total = sum(row) if exact else float(np.sum(values[i]))
        if (exact and total != 1) or (not exact and abs(total - 1) > tol.stochastic):
            raise ValueError(f'Row {i} of the stochastic matrix sums to {total}')
    all_equal = len({p for row in rows for p in row}) == 1 if exact else bool(np.all(values == values[0, 0]))
    if all_equal:
        raise ValueError('Stochastic matrix entries must not all be equal')

    labels = tuple(str(i + 1) for i in range(d))
    site = SiteBlocks.from_dims(labels, (1,) * d, (1,) * d)
    zero = {w: np.zeros((1, 1)) for w in labels}
    bond = {(labels[i], labels[j]): np.array([[-np.log(values[i, j])]]) for i in range(d) for j in range(d)}
    spectra = ()
    if exact:
        spectra = ({(labels[i], labels[j]): (-ExactLog.log(rows[i][j]),) for i in range(d) for j in range(d)},)
    return InteractionSpec(
        sites=(site,),
        left_terms=(zero,),
        right_terms=(zero,),
        bonds=(bond,),
        periodic=True,
        bond_spectra=spectra,
        name=f'markov-lifting({d})',
    )

@dataclass(frozen=True)
class RandomParams:
    seed: int
    site_dims: tuple[int, ...] = (2, 2)
    periodic: bool = True
    lifting: bool = True
    exact: bool = True
    pool: tuple[ExactLog, ...] = DEFAULT_POOL
    partitions: tuple[tuple[tuple[int, int], ...] | None, ...] | None = None # explicit (n, nbar) blocks per site

def _random_partition(d: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Random composition of d into block sizes, each factored as n * nbar"""
    cuts = np.flatnonzero(rng.random(d - 1) < 0.5) + 1
    sizes = np.diff(np.concatenate([[0], cuts, [d]]))
    blocks = []
    for m in sizes:
        divisors = [n for n in range(1, int(m) + 1) if m % n == 0]
        n = int(divisors[rng.integers(len(divisors))])
        blocks.append((n, int(m) // n))
    return blocks

def _random_hermitian(eigenvalues: list[ExactLog], lifting: bool, rng: np.random.Generator) -> np.ndarray:
    diagonal = np.diag([float(v) for v in eigenvalues]).astype(complex)
    if not lifting:
        return diagonal
    u = random_unitary(len(eigenvalues), rng)
    block = u @ diagonal @ u.conj().T
    return 0.5 * (block + block.conj().T)

def gen_random(params: RandomParams) -> InteractionSpec:
    """
    Seeded random spec: block partitions and pool eigenvalues come from one
    stream, lifting unitaries from another, so lifted and unlifted specs of
    one seed share all eigenvalue data
    """
    dims = tuple(int(d) for d in params.site_dims)
    if not dims:
        raise ValueError('At least one site is required')
    if any(d < 1 or d > MAX_RANDOM_DIM for d in dims):
        raise ValueError(f'Random site dimensions must lie in [1, {MAX_RANDOM_DIM}], got {dims}')
    if not params.periodic and len(dims) < 2:
        raise ValueError('A finite random chain needs at least two sites')
    if not params.pool:
        raise ValueError('Eigenvalue pool is empty')
    if params.partitions is not None and len(params.partitions) != len(dims):
        raise ValueError(f'Expected {len(dims)} partitions, got {len(params.partitions)}')
    structure_seed, unitary_seed = np.random.SeedSequence(params.seed).spawn(2)
    structure = np.random.default_rng(structure_seed)
    unitaries = np.random.default_rng(unitary_seed)

    def draw(count: int) -> list[ExactLog]:
        return [params.pool[i] for i in structure.integers(len(params.pool), size=count)]

    sites = []
    for j, d in enumerate(dims):
        blocks = params.partitions[j] if params.partitions is not None and params.partitions[j] is not None else _random_partition(d, structure)
        if sum(n * m for n, m in blocks) != d or any(n < 1 or m < 1 for n, m in blocks):
            raise ValueError(f'Partition {blocks} of site {j} does not fill dimension {d}')
        labels = tuple(f'w{i}' for i in range(len(blocks)))
        sites.append(SiteBlocks.from_dims(labels, [n for n, _ in blocks], [m for _, m in blocks]))

    left_terms = []
    right_terms = []
    for site in sites:
        left_terms.append({w: _random_hermitian(draw(site.left_dim(w)), params.lifting, unitaries) for w in site.labels})
        right_terms.append({w: _random_hermitian(draw(site.right_dim(w)), params.lifting, unitaries) for w in site.labels})

    bond_count = len(sites) if params.periodic else len(sites) - 1
    bonds = []
    spectra = []
    for j in range(bond_count):
        site, following = sites[j], sites[(j + 1) % len(sites)]
        bond = {}
        spectrum = {}
        for w in site.labels:
            for v in following.labels:
                eigenvalues = draw(site.right_dim(w) * following.left_dim(v))
                bond[(w, v)] = _random_hermitian(eigenvalues, params.lifting, unitaries)
                spectrum[(w, v)] = tuple(eigenvalues)
        bonds.append(bond)
        spectra.append(spectrum)

    embeddings = tuple(random_unitary(site.dim, unitaries) for site in sites) if params.lifting else ()
    LOGGER.debug(f'Generated random spec with seed {params.seed}: dims {dims}, lifting {params.lifting}')
    return InteractionSpec(
        sites=tuple(sites),
        left_terms=tuple(left_terms),
        right_terms=tuple(right_terms),
        bonds=tuple(bonds),
        periodic=params.periodic,
        embeddings=embeddings,
        bond_spectra=tuple(spectra) if params.exact else (),
        seed=params.seed,
        name=f'random({params.seed})',
    )
