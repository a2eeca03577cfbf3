"""
Factor-type classification from the spectrum of the leading term.

Spectra of h_{a,b} = sum of bond terms are path sums of bond eigenvalues,
computed label by label with multiplicities. Exact specs carry their bond
eigenvalues as ExactLog values and everything below stays exact for them.
"""
import math
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg as la

import tolerances
from tolerances import Tolerances
from exact import ExactLog
from markov_spec import InteractionSpec, leading_term
from utilities import best_rational

LOGGER = logging.getLogger('markov_states')

Scalar = float | ExactLog

CONVERSE_CAVEAT = (
    'Here, it should be noted that one might argue that the spectrum of the fundamental block of the Hamiltonian associated to the periodic Markov state '
    'completely determines the type. Unfortunately, we are not able to prove the reverse statements: rational difference '
    'ratios give a type III_lambda candidate, and irrational ratios do not establish type III_1.'
)
TRACIAL_NOTE = 'Leading term is a multiple of the identity on the fundamental block; the state is tracial and outside the type III analysis.'
NOT_III_ONE_NOTE = 'All difference ratios are rational, so the factor is not of type III_1.'

@dataclass(frozen=True)
class Spectrum:
    window: tuple[int, int]
    values: tuple[Scalar, ...] # ascending
    multiplicities: tuple[int, ...]
    exact: bool

    def expanded(self) -> np.ndarray:
        return np.repeat([float(v) for v in self.values], self.multiplicities)

    def floats(self) -> np.ndarray:
        return np.array([float(v) for v in self.values])

def _merge_float(values: np.ndarray, mults: np.ndarray, dedup: float) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(values, kind='stable')
    values, mults = values[order], mults[order]
    out_values: list[float] = []
    out_mults: list[int] = []
    for v, m in zip(values, mults):
        if out_values and abs(v - out_values[-1]) <= dedup * max(1.0, abs(v)):
            out_mults[-1] += int(m)
        else:
            out_values.append(float(v))
            out_mults.append(int(m))
    return np.array(out_values), np.array(out_mults, dtype=int)

def _bond_values(spec: InteractionSpec, j: int, w: str, w_next: str, exact: bool) -> list[Scalar]:
    if exact:
        return list(spec.bond_spectrum(j)[(w, w_next)])
    return list(la.eigvalsh(spec.bond(j, w, w_next)))

def block_spectrum(spec: InteractionSpec, a: int, b: int, exact: bool | None = None, tol: Tolerances | None = None) -> Spectrum:
    """Eigenvalues of h_{a,b} with multiplicities, as sums of bond eigenvalues along label paths"""
    tol = tolerances.resolve(tol)
    if exact is None:
        exact = spec.is_exact
    if exact and not spec.is_exact:
        raise ValueError('Exact spectrum requested for a spec without exact bond eigenvalues')
    if a > b:
        raise ValueError(f'Window [{a}, {b}] is empty')
    spec.check_segment(a, b)
    first = spec.site(a)
    zero = ExactLog() if exact else 0.0
    # per label at the current site: value -> multiplicity
    current: dict[str, dict] = {w: {zero: first.left_dim(w)} for w in first.labels}
    for j in range(a, b):
        following: dict[str, dict] = {}
        for w_next in spec.site(j + 1).labels:
            table: dict = {}
            for w, values in current.items():
                for lam in _bond_values(spec, j, w, w_next, exact):
                    for v, m in values.items():
                        key = v + lam
                        table[key] = table.get(key, 0) + m
            if not exact:
                merged_values, merged_mults = _merge_float(np.array(list(table)), np.array(list(table.values())), tol.dedup)
                table = dict(zip(merged_values.tolist(), merged_mults.tolist()))
            following[w_next] = table
        current = following
    last = spec.site(b)
    totals: dict = {}
    for w, values in current.items():
        for v, m in values.items():
            totals[v] = totals.get(v, 0) + m * last.right_dim(w)
    if exact:
        ordered = sorted(totals, key=float)
        return Spectrum((a, b), tuple(ordered), tuple(totals[v] for v in ordered), True)
    values, mults = _merge_float(np.array(list(totals)), np.array(list(totals.values())), tol.dedup)
    return Spectrum((a, b), tuple(values.tolist()), tuple(mults.tolist()), False)

def fundamental_spectrum(spec: InteractionSpec, exact: bool | None = None, tol: Tolerances | None = None) -> Spectrum:
    """Spectrum of h_{0,P}, the leading term over one period"""
    return block_spectrum(spec, 0, spec.period, exact, tol)

def leading_spectrum(spec: InteractionSpec, n: int, exact: bool | None = None, tol: Tolerances | None = None) -> Spectrum:
    """Spectrum of h_{-Pn,Pn}"""
    if n < 1:
        raise ValueError(f'Window size must be positive, got {n}')
    period = spec.period
    return block_spectrum(spec, -period * n, period * n, exact, tol)

def dense_spectrum(spec: InteractionSpec, a: int, b: int, tol: Tolerances | None = None) -> np.ndarray:
    tol = tolerances.resolve(tol)
    dim = math.prod(spec.dims(a, b))
    if dim > tol.dense_dim_limit:
        raise ValueError(f'Window [{a}, {b}] has dimension {dim}, above the dense limit {tol.dense_dim_limit}')
    return la.eigvalsh(leading_term(spec, a, b))

def spectrum_agreement(spec: InteractionSpec, a: int, b: int, tol: Tolerances | None = None) -> float:
    """Max difference between the sorted path-sum and dense eigenvalue lists"""
    path_sums = block_spectrum(spec, a, b, exact=False, tol=tol).expanded()
    dense = dense_spectrum(spec, a, b, tol)
    if len(path_sums) != len(dense):
        raise RuntimeError(f'Path sums give {len(path_sums)} eigenvalues, the dense matrix {len(dense)}')
    return float(np.max(np.abs(np.sort(path_sums) - dense)))

@dataclass(frozen=True)
class SpectralDifferenceSet:
    window: tuple[int, int]
    eigenvalues: tuple[Scalar, ...]
    differences: tuple[Scalar, ...] # ascending, symmetric about 0
    dedup: float
    exact: bool

    def positive(self) -> list[Scalar]:
        return [x for x in self.differences if float(x) > 0 and not (self.exact and x.is_zero())]

def difference_set(spectrum: Spectrum, tol: Tolerances | None = None) -> SpectralDifferenceSet:
    """All pairwise differences of the distinct eigenvalues, deduplicated"""
    tol = tolerances.resolve(tol)
    if not spectrum.values:
        raise ValueError('Empty spectrum')
    if spectrum.exact:
        differences = {h - k for h in spectrum.values for k in spectrum.values}
        ordered = tuple(sorted(differences, key=float))
    else:
        values = spectrum.floats()
        raw = (values[:, None] - values[None, :]).ravel()
        merged, _ = _merge_float(raw, np.ones(len(raw), dtype=int), tol.dedup)
        merged[np.abs(merged) <= tol.dedup] = 0.0
        ordered = tuple(merged.tolist())
    return SpectralDifferenceSet(spectrum.window, spectrum.values, ordered, tol.dedup, spectrum.exact)

def _ratio(x: Scalar, reference: Scalar, max_denominator: int, eps: float) -> Fraction | None:
    if isinstance(x, ExactLog):
        return x.ratio(reference)
    return best_rational(float(x) / float(reference), max_denominator, eps)

@dataclass(frozen=True)
class Alphas:
    alpha: float # exp(-|x_1| / prod p_j) for the given ordering
    best_alpha: float # smallest alpha with every x_i in Z ln(alpha)
    best_generator: Scalar # -ln(best alpha)
    scan_alpha: float # minimum of the product formula over every reference choice
    alpha_exact: str | None = None
    best_alpha_exact: str | None = None

def _ratio_multipliers(ratios: list[Fraction]) -> list[Fraction]:
    """x_1 / x_i = p_i / q_i from x_i / x_1; p_i is the absolute numerator"""
    return [1 / r for r in ratios[1:]]

def _product_alpha(reference: Scalar, multipliers: list[Fraction]) -> tuple[float, Scalar]:
    p = math.prod(abs(m.numerator) for m in multipliers)
    exponent = abs(reference) * Fraction(1, p) if isinstance(reference, ExactLog) else abs(float(reference)) / p
    return math.exp(-float(exponent)), exponent

def alpha_from_rationals(x_list: list[Scalar], multipliers: list[Fraction] | None = None, tol: Tolerances | None = None) -> Alphas:
    """
    alpha = exp(-|x_1| / prod p_j) where x_1 / x_j = p_j / q_j, and the best alpha
    from the rational gcd of the ratios x_i / |x_1|; membership of every x_i in
    Z ln(alpha) is verified for both
    """
    tol = tolerances.resolve(tol)
    if not x_list:
        raise ValueError('No values to build alpha from')
    reference = x_list[0]
    if float(reference) == 0 or any(float(x) == 0 for x in x_list):
        raise ValueError('Values must be non-zero')
    if multipliers is None:
        ratios = [Fraction(1)]
        for x in x_list[1:]:
            r = _ratio(x, reference, tol.max_denominator, tol.rationality)
            if r is None:
                raise ValueError(f'Ratio {float(x) / float(reference):.12g} is not rational within the configured bound')
            ratios.append(r)
        multipliers = _ratio_multipliers(ratios)
    else:
        if len(multipliers) != len(x_list) - 1:
            raise ValueError(f'Expected {len(x_list) - 1} multipliers, got {len(multipliers)}')
        multipliers = [Fraction(m) for m in multipliers]
        ratios = [Fraction(1)] + [1 / m for m in multipliers]
    alpha, exponent = _product_alpha(reference, multipliers)

    # x_i / |x_1|
    scaled = [r * (1 if float(reference) > 0 else -1) for r in ratios]
    numerators = math.gcd(*(abs(r.numerator) for r in scaled))
    denominators = math.lcm(*(r.denominator for r in scaled))
    unit = Fraction(numerators, denominators)
    best_generator = abs(reference) * unit if isinstance(reference, ExactLog) else abs(float(reference)) * float(unit)
    best_alpha = math.exp(-float(best_generator))

    scan = alpha
    for r in range(1, len(x_list)):
        reordered = [ratios[r]] + ratios[:r] + ratios[r + 1:]
        relative = [x / ratios[r] for x in reordered]
        candidate, _ = _product_alpha(x_list[r], _ratio_multipliers(relative))
        scan = min(scan, candidate)

    for generator, name in ((exponent, 'alpha'), (best_generator, 'best alpha')):
        for x in x_list:
            if isinstance(x, ExactLog):
                if x.ratio(generator) is None or x.ratio(generator).denominator != 1:
                    raise RuntimeError(f'{x} is not an integer multiple of ln({name})')
            else:
                m = float(x) / float(generator)
                if abs(m - round(m)) > tol.agreement * max(1.0, abs(m)):
                    raise RuntimeError(f'{x} is not an integer multiple of ln({name}): ratio {m:.12g}')
    exact = isinstance(reference, ExactLog)
    return Alphas(
        alpha, best_alpha, best_generator, scan,
        exponent.exp_negated() if exact else None,
        best_generator.exp_negated() if exact else None,
    )

@dataclass(frozen=True)
class RationalityReport:
    mode: str # 'exact' | 'float'
    reference: Scalar | None
    differences: tuple[Scalar, ...]
    ratios: tuple[Fraction | None, ...] # x_i / x_1
    accepted: bool
    witness: float | None # smallest irrational ratio between two positive differences
    max_denominator: int
    tolerance: float
    alphas: Alphas | None = None

def _irrational_witness(positives: list[Scalar], max_denominator: int, eps: float) -> float:
    """Smallest ratio x_j / x_i >= 1 over pairs of positive differences that fails the rational test"""
    witness = math.inf
    for i, small in enumerate(positives):
        for large in positives[i + 1:]:
            r = float(large) / float(small)
            if r < witness and _ratio(large, small, max_denominator, eps) is None:
                witness = r
    return witness

def rationality_check(differences: SpectralDifferenceSet, max_denominator: int | None = None, eps: float | None = None, tol: Tolerances | None = None) -> RationalityReport:
    """
    Ratios of the positive differences to the smallest one: exact in exact
    mode, continued-fraction approximations with bounded denominator otherwise
    """
    tol = tolerances.resolve(tol)
    max_denominator = max_denominator or tol.max_denominator
    eps = tol.rationality if eps is None else eps
    mode = 'exact' if differences.exact else 'float'
    positives = sorted(differences.positive(), key=float)
    if not positives:
        return RationalityReport(mode, None, (), (), True, None, max_denominator, eps)
    reference = positives[0]
    ratios = []
    witness = None
    for x in positives:
        ratios.append(_ratio(x, reference, max_denominator, eps))
    accepted = all(r is not None for r in ratios)
    if not accepted:
        witness = _irrational_witness(positives, max_denominator, eps)
    alphas = None
    if accepted:
        alphas = alpha_from_rationals(positives, _ratio_multipliers(ratios), tol)
    else:
        LOGGER.debug(f'Rejected ratio {witness:.12g} with denominators up to {max_denominator}')
    return RationalityReport(mode, reference, tuple(positives), tuple(ratios), accepted, witness, max_denominator, eps, alphas)

def lattice_generator(differences: SpectralDifferenceSet, tol: Tolerances | None = None) -> Scalar | None:
    """Positive generator of the subgroup spanned by the differences, None when some ratio is irrational"""
    tol = tolerances.resolve(tol)
    positives = sorted(differences.positive(), key=float)
    if not positives:
        return ExactLog() if differences.exact else 0.0
    report = rationality_check(differences, tol=tol)
    if not report.accepted:
        return None
    return report.alphas.best_generator

def _same_generator(a: Scalar | None, b: Scalar | None, tol: Tolerances) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, ExactLog) and isinstance(b, ExactLog):
        return a == b
    return abs(float(a) - float(b)) <= tol.rationality * max(1.0, abs(float(a)))

@dataclass(frozen=True)
class StabilizationTrace:
    generators: tuple[Scalar | None, ...] # per window n = 1..n_max
    generator: Scalar | None
    stabilized: bool
    lam: float | None
    lam_exact: str | None = None

def generator_stabilization(spec: InteractionSpec, n_max: int | None = None, exact: bool | None = None, tol: Tolerances | None = None) -> StabilizationTrace:
    """Difference-lattice generator of h_{-Pn,Pn} for n = 1..n_max; stable when the last two windows agree"""
    tol = tolerances.resolve(tol)
    n_max = n_max or tol.stabilization_windows
    if n_max < 1:
        raise ValueError(f'Window count must be positive, got {n_max}')
    generators = []
    for n in range(1, n_max + 1):
        g = lattice_generator(difference_set(leading_spectrum(spec, n, exact, tol), tol), tol)
        LOGGER.debug(f'Window n = {n}: generator {g}')
        generators.append(g)
    g = generators[-1]
    stabilized = len(generators) >= 2 and _same_generator(generators[-1], generators[-2], tol)
    if not stabilized:
        LOGGER.warning(f'Generator did not stabilize within {n_max} windows: {[str(x) for x in generators]}')
    lam = math.exp(-float(g)) if g is not None and float(g) > 0 else None
    lam_exact = g.exp_negated() if isinstance(g, ExactLog) and lam is not None else None
    return StabilizationTrace(tuple(generators), g, stabilized, lam, lam_exact)

@dataclass(frozen=True)
class Tracial:
    spread: float

@dataclass(frozen=True)
class IIILambdaCandidate:
    generator: Scalar
    lam: float
    windows: int
    stabilized: bool
    lam_exact: str | None = None
    multiple: int | None = None # generator / |ln best alpha|

@dataclass(frozen=True)
class IndeterminateIrrational:
    witness: float

@dataclass(frozen=True)
class ClassifyOptions:
    max_n: int | None = None
    max_denominator: int | None = None
    rationality: float | None = None
    exact: bool | None = None

@dataclass(frozen=True)
class FactorClassification:
    verdict: Tracial | IIILambdaCandidate | IndeterminateIrrational
    fundamental: Spectrum
    report: RationalityReport | None = None
    trace: StabilizationTrace | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def kind(self) -> str:
        match self.verdict:
            case Tracial():
                return 'tracial'
            case IIILambdaCandidate():
                return 'III_lambda_candidate'
            case IndeterminateIrrational():
                return 'indeterminate_irrational'

def classify(spec: InteractionSpec, options: ClassifyOptions | None = None, tol: Tolerances | None = None) -> FactorClassification:
    """Tracial, III_lambda candidate with its stabilized generator, or indeterminate with an irrational witness"""
    tol = tolerances.resolve(tol)
    options = options or ClassifyOptions()
    if not spec.periodic:
        raise ValueError('Classification needs a periodic spec')
    overrides = {}
    if options.max_denominator is not None:
        overrides['max_denominator'] = options.max_denominator
    if options.rationality is not None:
        overrides['rationality'] = options.rationality
    if options.max_n is not None:
        overrides['stabilization_windows'] = options.max_n
    tol = tol.overridden(overrides)

    fundamental = fundamental_spectrum(spec, options.exact, tol)
    floats = fundamental.floats()
    spread = float(floats.max() - floats.min())
    if spread <= tol.tracial * max(1.0, float(np.max(np.abs(floats)))):
        return FactorClassification(Tracial(spread), fundamental, notes=(TRACIAL_NOTE,))

    report = rationality_check(difference_set(fundamental, tol), tol=tol)
    if not report.accepted:
        LOGGER.debug(f'Irrational witness {report.witness:.12g}')
        return FactorClassification(IndeterminateIrrational(report.witness), fundamental, report, notes=(CONVERSE_CAVEAT,))

    trace = generator_stabilization(spec, tol.stabilization_windows, options.exact, tol)
    if trace.generator is None or trace.lam is None:
        witness = report.witness if report.witness is not None else float('nan')
        return FactorClassification(IndeterminateIrrational(witness), fundamental, report, trace, notes=(CONVERSE_CAVEAT,))
    multiple = None
    unit = report.alphas.best_generator
    if isinstance(trace.generator, ExactLog):
        m = trace.generator.ratio(unit)
        multiple = int(m) if m is not None and m.denominator == 1 else None
    else:
        m = float(trace.generator) / float(unit)
        multiple = int(round(m)) if abs(m - round(m)) <= tol.agreement * max(1.0, m) else None
    notes = [CONVERSE_CAVEAT, NOT_III_ONE_NOTE]
    if multiple is None:
        notes.append('Stabilized generator is not an integer multiple of the fundamental-block generator.')
    verdict = IIILambdaCandidate(trace.generator, trace.lam, len(trace.generators), trace.stabilized, trace.lam_exact, multiple)
    return FactorClassification(verdict, fundamental, report, trace, tuple(notes))
