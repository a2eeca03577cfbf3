"""
JSON spec documents: parsing into InteractionSpec with field-path
diagnostics, and serialization of generated specs.

Matrices are row-major lists of [re, im] pairs (plain reals allowed).
In "rational-log" mode eigenvalue literals are ints or strings ("p/q",
"ln(q)", "r*ln(q)", sums of those); a bare rational r means r*ln(base),
or the number r itself when base is "e".
"""
import json
import logging
from pathlib import Path
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from exact import ExactLog
from markov_spec import SiteBlocks, InteractionSpec
from utilities import encode_matrix, decode_matrix

LOGGER = logging.getLogger('markov_states')

SCHEMA_VERSION = 1

TOP_LEVEL_FIELDS = {'schema', 'name', 'mode', 'base', 'chain', 'seed', 'sites', 'bonds', 'tolerances'}
SITE_FIELDS = {'blocks', 'embedding'}
SITE_BLOCK_FIELDS = {'label', 'left_dim', 'right_dim', 'left_term', 'right_term'}
BOND_FIELDS = {'blocks'}
BOND_BLOCK_FIELDS = {'labels', 'matrix', 'eigenvalues', 'basis'}
TERM_FIELDS = {'matrix', 'eigenvalues', 'basis'}

class DocumentError(ValueError):
    """Invalid document, with the field path and, for syntax errors, the position"""
    def __init__(self, path: str, message: str, line: int | None = None, column: int | None = None) -> None:
        self.path = path
        self.line = line
        self.column = column
        location = f' (line {line}, column {column})' if line is not None else ''
        super().__init__(f'{path}: {message}{location}')

@dataclass(frozen=True, eq=False)
class SpecDocument:
    schema: int
    mode: str # 'float' | 'rational-log'
    base: Fraction | None # None means natural units
    spec: InteractionSpec
    tolerances: dict = field(default_factory=dict)

def _require(data: dict, key: str, path: str):
    try:
        return data[key]
    except KeyError:
        raise DocumentError(f'{path}.{key}', 'missing required field')

def _reject_unknown(data, allowed: set[str], path: str) -> None:
    if not isinstance(data, dict):
        raise DocumentError(path, f'expected an object, got {type(data).__name__}')
    for key in data:
        if key not in allowed:
            raise DocumentError(f'{path}.{key}', 'unknown field')

def _positive_int(value, path: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
        raise DocumentError(path, f'expected a positive integer, got {value!r}')
    return value

def _matrix(value, path: str) -> np.ndarray:
    try:
        return decode_matrix(value, path)
    except ValueError as e:
        field_path, _, message = str(e).partition(': ')
        raise DocumentError(field_path, message)

def _literal(value, mode: str, base: Fraction | None, path: str) -> ExactLog | float:
    if mode == 'float':
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DocumentError(path, f'expected a number, got {value!r}')
        return float(value)
    match value:
        case bool() | float():
            raise DocumentError(path, f'decimal {value!r} is not an exact literal; use an int or a "p/q" string')
        case int():
            return ExactLog.log(base) * value if base is not None else ExactLog.rational(value)
        case str():
            try:
                return ExactLog.parse(value, base)
            except ValueError as e:
                raise DocumentError(path, str(e))
        case _:
            raise DocumentError(path, f'expected an exact literal, got {value!r}')

def _payload(data, allowed: set[str], dim: int, mode: str, base: Fraction | None, path: str) -> tuple[np.ndarray, tuple | None]:
    """Matrix of a block from 'matrix', or from 'eigenvalues' with an optional 'basis'"""
    _reject_unknown(data, allowed, path)
    eigenvalues = None
    if 'eigenvalues' in data:
        raw = data['eigenvalues']
        if not isinstance(raw, list) or len(raw) != dim:
            raise DocumentError(f'{path}.eigenvalues', f'expected a list of {dim} values')
        eigenvalues = tuple(_literal(v, mode, base, f'{path}.eigenvalues[{i}]') for i, v in enumerate(raw))
    if 'matrix' in data:
        if 'basis' in data:
            raise DocumentError(f'{path}.basis', 'basis is only allowed together with eigenvalues and no matrix')
        matrix = _matrix(data['matrix'], f'{path}.matrix')
        if matrix.shape != (dim, dim):
            raise DocumentError(f'{path}.matrix', f'shape {matrix.shape}, expected {(dim, dim)}')
    elif eigenvalues is not None:
        basis = _matrix(data['basis'], f'{path}.basis') if 'basis' in data else np.eye(dim)
        if basis.shape != (dim, dim):
            raise DocumentError(f'{path}.basis', f'shape {basis.shape}, expected {(dim, dim)}')
        matrix = (basis * np.array([float(v) for v in eigenvalues])) @ basis.conj().T
    else:
        raise DocumentError(path, 'expected "matrix" or "eigenvalues"')
    exact = eigenvalues if eigenvalues is not None and mode == 'rational-log' else None
    return matrix, exact

def _parse_base(data: dict) -> tuple[str, Fraction | None]:
    mode = data.get('mode', 'float')
    if mode not in ('float', 'rational-log'):
        raise DocumentError('$.mode', f'expected "float" or "rational-log", got {mode!r}')
    if mode == 'float':
        if 'base' in data:
            raise DocumentError('$.base', 'base is only meaningful in rational-log mode')
        return mode, None
    raw = data.get('base', 'e')
    if raw == 'e':
        return mode, None
    try:
        base = Fraction(raw) if isinstance(raw, (int, str)) and not isinstance(raw, bool) else None
    except (ValueError, ZeroDivisionError):
        base = None
    if base is None or base <= 1:
        raise DocumentError('$.base', f'expected a rational greater than 1 or "e", got {raw!r}')
    return mode, base

def parse_document(data) -> SpecDocument:
    """Builds a SpecDocument from decoded JSON, rejecting unknown fields"""
    _reject_unknown(data, TOP_LEVEL_FIELDS, '$')
    schema = data.get('schema', SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise DocumentError('$.schema', f'unsupported schema version {schema!r}')
    mode, base = _parse_base(data)
    chain = data.get('chain', 'periodic')
    if chain not in ('periodic', 'finite'):
        raise DocumentError('$.chain', f'expected "periodic" or "finite", got {chain!r}')
    seed = data.get('seed')
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise DocumentError('$.seed', f'expected an integer, got {seed!r}')
    overrides = data.get('tolerances', {})
    if not isinstance(overrides, dict):
        raise DocumentError('$.tolerances', 'expected an object')

    raw_sites = _require(data, 'sites', '$')
    if not isinstance(raw_sites, list) or not raw_sites:
        raise DocumentError('$.sites', 'expected a non-empty list')
    sites = []
    left_terms = []
    right_terms = []
    embeddings = []
    for j, raw_site in enumerate(raw_sites):
        path = f'$.sites[{j}]'
        _reject_unknown(raw_site, SITE_FIELDS, path)
        raw_blocks = _require(raw_site, 'blocks', path)
        if not isinstance(raw_blocks, list) or not raw_blocks:
            raise DocumentError(f'{path}.blocks', 'expected a non-empty list')
        labels, left_dims, right_dims = [], [], []
        left, right = {}, {}
        for b, block in enumerate(raw_blocks):
            block_path = f'{path}.blocks[{b}]'
            _reject_unknown(block, SITE_BLOCK_FIELDS, block_path)
            label = _require(block, 'label', block_path)
            if not isinstance(label, str) or label in labels:
                raise DocumentError(f'{block_path}.label', f'expected a unique string label, got {label!r}')
            n = _positive_int(_require(block, 'left_dim', block_path), f'{block_path}.left_dim')
            nbar = _positive_int(_require(block, 'right_dim', block_path), f'{block_path}.right_dim')
            labels.append(label)
            left_dims.append(n)
            right_dims.append(nbar)
            left[label] = _payload(block['left_term'], TERM_FIELDS, n, mode, base, f'{block_path}.left_term')[0] if 'left_term' in block else np.zeros((n, n))
            right[label] = _payload(block['right_term'], TERM_FIELDS, nbar, mode, base, f'{block_path}.right_term')[0] if 'right_term' in block else np.zeros((nbar, nbar))
        site = SiteBlocks.from_dims(labels, left_dims, right_dims)
        sites.append(site)
        left_terms.append(left)
        right_terms.append(right)
        if 'embedding' in raw_site and raw_site['embedding'] is not None:
            w = _matrix(raw_site['embedding'], f'{path}.embedding')
            if w.shape != (site.dim, site.dim):
                raise DocumentError(f'{path}.embedding', f'shape {w.shape}, expected {(site.dim, site.dim)}')
            embeddings.append(w)
        else:
            embeddings.append(None)

    raw_bonds = _require(data, 'bonds', '$')
    expected = len(sites) if chain == 'periodic' else len(sites) - 1
    if not isinstance(raw_bonds, list) or len(raw_bonds) != expected:
        raise DocumentError('$.bonds', f'expected a list of {expected} bonds for a {chain} chain of {len(sites)} sites')
    bonds = []
    spectra = []
    for j, raw_bond in enumerate(raw_bonds):
        path = f'$.bonds[{j}]'
        _reject_unknown(raw_bond, BOND_FIELDS, path)
        site, following = sites[j], sites[(j + 1) % len(sites)]
        bond = {}
        spectrum = {}
        raw_blocks = _require(raw_bond, 'blocks', path)
        if not isinstance(raw_blocks, list):
            raise DocumentError(f'{path}.blocks', 'expected a list')
        for b, block in enumerate(raw_blocks):
            block_path = f'{path}.blocks[{b}]'
            _reject_unknown(block, BOND_BLOCK_FIELDS, block_path)
            pair = _require(block, 'labels', block_path)
            if not isinstance(pair, list) or len(pair) != 2 or pair[0] not in site.labels or pair[1] not in following.labels:
                raise DocumentError(f'{block_path}.labels', f'expected a label pair from {site.labels} x {following.labels}, got {pair!r}')
            key = (pair[0], pair[1])
            if key in bond:
                raise DocumentError(f'{block_path}.labels', f'duplicate block {key}')
            dim = site.right_dim(key[0]) * following.left_dim(key[1])
            bond[key], exact = _payload(block, BOND_BLOCK_FIELDS, dim, mode, base, block_path)
            if exact is not None:
                spectrum[key] = tuple(sorted(exact, key=float))
        missing = {(w, v) for w in site.labels for v in following.labels} - set(bond)
        if missing:
            raise DocumentError(f'{path}.blocks', f'missing blocks {sorted(missing)}')
        bonds.append(bond)
        spectra.append(spectrum)

    if mode == 'rational-log':
        for j, spectrum in enumerate(spectra):
            if set(spectrum) != set(bonds[j]):
                raise DocumentError(f'$.bonds[{j}]', 'rational-log mode needs eigenvalues on every bond block')
    spec = InteractionSpec(
        sites=tuple(sites),
        left_terms=tuple(left_terms),
        right_terms=tuple(right_terms),
        bonds=tuple(bonds),
        periodic=chain == 'periodic',
        embeddings=tuple(embeddings) if any(w is not None for w in embeddings) else (),
        bond_spectra=tuple(spectra) if mode == 'rational-log' else (),
        seed=seed,
        name=str(data.get('name', '')),
    )
    return SpecDocument(schema, mode, base, spec, dict(overrides))

def load_document(path: Path | str) -> SpecDocument:
    """Reads and parses a document; OSError propagates for I/O failures"""
    with open(path, 'r') as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DocumentError('$', f'invalid JSON: {e.msg}', e.lineno, e.colno)
    LOGGER.debug(f'Loaded document {path}')
    return parse_document(data)

def _term(matrix: np.ndarray) -> dict:
    if not np.any(matrix):
        return {}
    return {'matrix': encode_matrix(matrix)}

def spec_to_document(spec: InteractionSpec) -> dict:
    """Serializable document of a spec; exact specs are written in rational-log mode with natural units"""
    exact = spec.is_exact
    data = {'schema': SCHEMA_VERSION, 'name': spec.name}
    data['mode'] = 'rational-log' if exact else 'float'
    if exact:
        data['base'] = 'e'
    data['chain'] = 'periodic' if spec.periodic else 'finite'
    if spec.seed is not None:
        data['seed'] = spec.seed
    sites = []
    for j, site in enumerate(spec.sites):
        blocks = []
        for w in site.labels:
            block = {'label': w, 'left_dim': site.left_dim(w), 'right_dim': site.right_dim(w)}
            if term := _term(spec.left_terms[j][w]):
                block['left_term'] = term
            if term := _term(spec.right_terms[j][w]):
                block['right_term'] = term
            blocks.append(block)
        entry = {'blocks': blocks}
        if spec.embeddings and spec.embeddings[j] is not None:
            entry['embedding'] = encode_matrix(spec.embeddings[j])
        sites.append(entry)
    data['sites'] = sites
    bonds = []
    for j, bond in enumerate(spec.bonds):
        blocks = []
        for (w, v), matrix in bond.items():
            block = {'labels': [w, v]}
            if exact:
                values = spec.bond_spectra[j][(w, v)]
                block['eigenvalues'] = [str(x) for x in values]
                if not np.array_equal(matrix, np.diag([float(x) for x in values])):
                    block['matrix'] = encode_matrix(matrix)
            else:
                block['matrix'] = encode_matrix(matrix)
            blocks.append(block)
        bonds.append({'blocks': blocks})
    data['bonds'] = bonds
    return data

def dump_document(spec: InteractionSpec) -> str:
    return json.dumps(spec_to_document(spec), indent=2) + '\n'
