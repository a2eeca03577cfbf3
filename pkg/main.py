import sys
import time
import logging
import argparse
from math import prod
from pathlib import Path
from fractions import Fraction
from contextlib import contextmanager

import tolerances
from tolerances import Tolerances
from documents import load_document, dump_document
from markov_spec import InteractionSpec, validate_spec, assemble_operators, verify_commutation, commutation_scale, segment_density, projectivity_residual
from diagonalize import diagonalize, verify_diagonalization, markov_property_check, density_restriction_check
from classify import ClassifyOptions, Tracial, IIILambdaCandidate, classify
from models import RandomParams, gen_ising, gen_markov_lifting, gen_random
from reports import EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO, RunReport, violation_line, error_line
from utilities import encode_matrix, input_digest

# Parse command line arguments
parser = argparse.ArgumentParser(prog='markov-states', description="Quantum Markov states on spin-chain segments: construction, diagonalization and factor classification")
parser.add_argument('-v', '--verbose', action='store_true', default=False, help='Enable verbose mode')
parser.add_argument('-p', '--profile', type=str, default=None, help='Tolerance profile from tolerances.json (default, strict, relaxed)')
parser.add_argument('-l', '--log-file', type=str, default=None, help='Also write log records to this file')
parser.add_argument('-o', '--out', type=str, default=None, help='Write the JSON output here instead of stdout')
parser.add_argument('-t', '--timing', action='store_true', default=False, help='Record per-stage timing in the report')
subparsers = parser.add_subparsers(dest='command', required=True)

# Subcommand copy of --out; SUPPRESS leaves a top-level value in place
_output = argparse.ArgumentParser(add_help=False)
_output.add_argument('-o', '--out', type=str, default=argparse.SUPPRESS, help='Write the JSON output here instead of stdout')

_validate = subparsers.add_parser('validate', parents=[_output], help='Parse and validate a spec document')
_validate.add_argument('path', type=str)

_build = subparsers.add_parser('build', parents=[_output], help='Build the Gibbs state of a segment')
_build.add_argument('path', type=str)
_build.add_argument('-s', '--segment', type=int, nargs=2, metavar=('K', 'L'), default=None, help='Segment [K, L] (default: one period, or the whole finite chain)')
_build.add_argument('-b', '--block-path-only', action='store_true', default=False, help='Skip the dense density, evaluate along label paths only')
_build.add_argument('-d', '--include-density', action='store_true', default=False, help='Write the dense density matrix into the output')

_diagonalize = subparsers.add_parser('diagonalize', parents=[_output], help='Diagonal algebra, expectation and classical Markov measure of a segment')
_diagonalize.add_argument('path', type=str)
_diagonalize.add_argument('-s', '--segment', type=int, nargs=2, metavar=('K', 'L'), default=None)
_diagonalize.add_argument('-b', '--block-path-only', action='store_true', default=False, help='Skip the dense verification stages')
_diagonalize.add_argument('--seed', type=int, default=0, help='Seed for sampled Markov-property events')

_classify = subparsers.add_parser('classify', parents=[_output], help='Classify the factor generated by a periodic spec')
_classify.add_argument('path', type=str)
_classify.add_argument('-n', '--max-n', type=int, default=None, help='Number of windows for generator stabilization')
_classify.add_argument('-q', '--max-denom', type=int, default=None, help='Largest denominator accepted for spectral ratios')
_classify.add_argument('--tol', type=float, default=None, help='Rationality tolerance for spectral ratios')

_report = subparsers.add_parser('report', parents=[_output], help='Run every stage and emit one report')
_report.add_argument('path', type=str)
_report.add_argument('-s', '--segment', type=int, nargs=2, metavar=('K', 'L'), default=None)
_report.add_argument('-b', '--block-path-only', action='store_true', default=False)
_report.add_argument('--seed', type=int, default=0)
_report.add_argument('-n', '--max-n', type=int, default=None)
_report.add_argument('-q', '--max-denom', type=int, default=None)
_report.add_argument('--tol', type=float, default=None)

_gen = subparsers.add_parser('gen', help='Generate a spec document')
_variants = _gen.add_subparsers(dest='variant', required=True)
_ising = _variants.add_parser('ising', parents=[_output], help='Period-2 Ising chain')
_ising.add_argument('--j1', type=str, required=True, help='Coupling of even bonds (int, p/q or decimal)')
_ising.add_argument('--j2', type=str, required=True, help='Coupling of odd bonds (int, p/q or decimal)')
_markov = _variants.add_parser('markov', parents=[_output], help='Diagonal lifting of a stochastic matrix')
_markov.add_argument('--matrix', type=str, required=True, help='Rows separated by ";", entries by ",", e.g. "2/3,1/3;1/3,2/3"')
_random = _variants.add_parser('random', parents=[_output], help='Seeded random spec')
_random.add_argument('--seed', type=int, required=True)
_random.add_argument('--dims', type=str, default='2,2', help='Site dimensions, comma separated')
_random.add_argument('--finite', action='store_true', default=False, help='Finite chain instead of a periodic one')
_random.add_argument('--no-lifting', action='store_true', default=False, help='Keep standard block coordinates')
_random.add_argument('--float', action='store_true', default=False, help='Drop the exact eigenvalue data')

LOGGER = logging.getLogger('markov_states')

def validate_args(args: argparse.Namespace) -> None:
    """Range checks that argparse cannot express"""
    segment = getattr(args, 'segment', None)
    if segment is not None and segment[0] > segment[1]:
        raise ValueError(f'FATAL: Segment must satisfy K <= L! Currently [{segment[0]}, {segment[1]}]')

    if getattr(args, 'max_n', None) is not None and args.max_n < 1:
        raise ValueError(f'FATAL: Window count must be positive! Currently {args.max_n}')

    if getattr(args, 'max_denom', None) is not None and args.max_denom < 1:
        raise ValueError(f'FATAL: Maximum denominator must be positive! Currently {args.max_denom}')

    if getattr(args, 'tol', None) is not None and not args.tol > 0:
        raise ValueError(f'FATAL: Rationality tolerance must be positive! Currently {args.tol}')

def configure_logging(verbose: bool, log_file: str | None) -> None:
    LOGGER.handlers.clear()
    _console_handler = logging.StreamHandler()
    handlers = [_console_handler]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    level = logging.DEBUG if verbose else logging.WARNING
    LOGGER.setLevel(level)

    _log_format = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"
    _date_format = "%Y-%m-%dT%H:%M:%SZ" # ISO 8601 style
    _formatter = logging.Formatter(fmt=_log_format, datefmt=_date_format)
    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(_formatter)
        LOGGER.addHandler(handler)

def parse_number(text: str) -> int | Fraction | float:
    """Integers and p/q stay exact, decimals become floats"""
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    if '/' in text:
        return Fraction(text)
    return float(text)

def parse_matrix(text: str) -> list[list]:
    return [[parse_number(entry) for entry in row.split(',')] for row in text.split(';') if row.strip()]

@contextmanager
def timed(report: RunReport, stage: str):
    start = time.perf_counter()
    yield
    if report.timing is not None:
        report.timing[stage] = time.perf_counter() - start

def default_segment(spec: InteractionSpec) -> tuple[int, int]:
    if spec.periodic:
        return (0, spec.period)
    return (0, spec.length - 1)

def has_room(spec: InteractionSpec, segment: tuple[int, int]) -> bool:
    """True when [k-1, l+1] still lies on the chain"""
    k, l = segment
    return spec.periodic or (k >= 1 and l + 2 <= spec.length)

def load_spec(path: str, args: argparse.Namespace) -> tuple[InteractionSpec, Tolerances, RunReport]:
    """Reads a document, applies its tolerance overrides and validates the spec"""
    data = Path(path).read_bytes()
    report = RunReport(args.command, input_digest(data), timing={} if args.timing else None)
    with timed(report, 'parse'):
        document = load_document(path)
    tol = tolerances.current().overridden(document.tolerances)
    with timed(report, 'validation'):
        violations = validate_spec(document.spec, tol)
    report.add('validation', {
        'name': document.spec.name,
        'mode': document.mode,
        'periodic': document.spec.periodic,
        'sites': document.spec.length,
        'violations': [{'path': v.path, 'message': v.message} for v in violations],
    })
    if violations:
        report.invalid = True
    return document.spec, tol, report

def stage_state(spec: InteractionSpec, segment: tuple[int, int], block_path_only: bool, include_density: bool, report: RunReport, tol: Tolerances) -> None:
    total_dim = prod(spec.dims(*segment))
    if total_dim > tol.dense_dim_limit and not block_path_only:
        raise ValueError(f'FATAL: Segment dimension {total_dim} exceeds the dense limit {tol.dense_dim_limit}; pass --block-path-only')
    with timed(report, 'state'):
        state = segment_density(spec, segment, dense=not block_path_only, tol=tol)
    result = {
        'segment': list(segment),
        'dims': list(state.dims),
        'log_partition': state.log_partition,
        'shift': state.boundaries.shift,
        'perron_value': state.boundaries.perron_value,
        'paths': [{'labels': list(p.labels), 'weight': p.weight} for p in state.paths],
    }
    if include_density:
        result['density'] = encode_matrix(state.require_dense())
    report.add('state', result)

def stage_commutation(spec: InteractionSpec, segment: tuple[int, int], report: RunReport, tol: Tolerances) -> None:
    if prod(spec.dims(*segment)) > tol.dense_dim_limit:
        LOGGER.warning(f'Skipping commutation check: segment {segment} exceeds the dense limit')
        return
    with timed(report, 'commutation'):
        H = assemble_operators(spec, segment, tol=tol)
        norm = verify_commutation(H)
    report.check('commutation', norm, tol.structural * commutation_scale(H))

def stage_projectivity(spec: InteractionSpec, segment: tuple[int, int], report: RunReport, tol: Tolerances) -> None:
    k, l = segment
    if not spec.periodic or prod(spec.dims(k, l + 1)) > tol.dense_dim_limit:
        LOGGER.debug(f'Skipping projectivity check for segment {segment}')
        return
    with timed(report, 'projectivity'):
        residual = projectivity_residual(spec, segment, tol=tol)
    report.check('projectivity', residual, tol.agreement)

def stage_diagonalization(spec: InteractionSpec, segment: tuple[int, int], block_path_only: bool, seed: int, report: RunReport, tol: Tolerances) -> None:
    with timed(report, 'diagonalization'):
        result = diagonalize(spec, segment, tol=tol)
    chain = result.chain
    k, l = segment
    report.add('diagonalization', {
        'segment': list(segment),
        'algebra_blocks': [{'labels': list(key), 'dim': dim, 'multiplicity': result.data.multiplicities[key]} for key, dim in result.data.algebra.blocks],
        'atoms': len(chain.atoms),
        'shift': result.terms.shift,
        'log_partition': result.terms.log_partition,
        'left_terms': {str(j): terms for j, terms in result.terms.left.items()},
        'right_terms': {str(j): terms for j, terms in result.terms.right.items()},
        'label_initial': chain.label_initial,
        'label_transitions': chain.label_transitions,
        'certification': chain.certification,
    })
    report.check('atom_certification', chain.certification, tol.agreement)
    with timed(report, 'markov_property'):
        report.check('markov_property', markov_property_check(chain, k + (l - k) // 2, seed, tol), tol.markov_property)
    if block_path_only:
        return
    dense_ok = prod(spec.dims(k, l)) <= tol.dense_dim_limit
    if dense_ok:
        with timed(report, 'density_restriction'):
            report.check('density_restriction', density_restriction_check(spec, segment, result.data, result.terms, tol), tol.agreement)
    if dense_ok and has_room(spec, segment) and prod(spec.dims(k - 1, l + 1)) <= tol.dense_dim_limit:
        with timed(report, 'verification'):
            report.check('diagonalization', verify_diagonalization(spec, segment, tol=tol), tol.agreement)
    else:
        LOGGER.warning(f'Skipping diagonalization verification for segment {segment}: no room to grow or too large')

def stage_classification(spec: InteractionSpec, args: argparse.Namespace, report: RunReport, tol: Tolerances) -> None:
    options = ClassifyOptions(max_n=args.max_n, max_denominator=args.max_denom, rationality=args.tol)
    with timed(report, 'classification'):
        result = classify(spec, options, tol)
    stage = {'verdict': result.kind, 'notes': list(result.notes)}
    stage['fundamental_spectrum'] = {'values': list(result.fundamental.values), 'multiplicities': result.fundamental.multiplicities}
    match result.verdict:
        case Tracial(spread):
            stage['spread'] = spread
        case IIILambdaCandidate() as v:
            stage.update({'generator': v.generator, 'lambda': v.lam, 'lambda_exact': v.lam_exact, 'windows': v.windows, 'stabilized': v.stabilized, 'multiple': v.multiple})
        case v:
            stage['witness'] = v.witness
    if result.report is not None and result.report.alphas is not None:
        alphas = result.report.alphas
        stage['alpha'] = {'alpha': alphas.alpha, 'best_alpha': alphas.best_alpha, 'best_alpha_exact': alphas.best_alpha_exact, 'scan_alpha': alphas.scan_alpha}
    if result.trace is not None:
        stage['stabilization'] = list(result.trace.generators)
    report.add('classification', stage)

def cmd_validate(args: argparse.Namespace) -> RunReport:
    _, _, report = load_spec(args.path, args)
    return report

def cmd_build(args: argparse.Namespace) -> RunReport:
    spec, tol, report = load_spec(args.path, args)
    if report.invalid:
        return report
    segment = tuple(args.segment) if args.segment else default_segment(spec)
    stage_state(spec, segment, args.block_path_only, args.include_density, report, tol)
    return report

def cmd_diagonalize(args: argparse.Namespace) -> RunReport:
    spec, tol, report = load_spec(args.path, args)
    if report.invalid:
        return report
    segment = tuple(args.segment) if args.segment else default_segment(spec)
    stage_diagonalization(spec, segment, args.block_path_only, args.seed, report, tol)
    return report

def cmd_classify(args: argparse.Namespace) -> RunReport:
    spec, tol, report = load_spec(args.path, args)
    if report.invalid:
        return report
    stage_classification(spec, args, report, tol)
    return report

def cmd_report(args: argparse.Namespace) -> RunReport:
    spec, tol, report = load_spec(args.path, args)
    if report.invalid:
        return report
    segment = tuple(args.segment) if args.segment else default_segment(spec)
    stage_state(spec, segment, args.block_path_only, False, report, tol)
    if not args.block_path_only:
        stage_commutation(spec, segment, report, tol)
        stage_projectivity(spec, segment, report, tol)
    stage_diagonalization(spec, segment, args.block_path_only, args.seed, report, tol)
    if spec.periodic:
        stage_classification(spec, args, report, tol)
    return report

def cmd_gen(args: argparse.Namespace) -> str:
    match args.variant:
        case 'ising':
            spec = gen_ising(parse_number(args.j1), parse_number(args.j2))
        case 'markov':
            spec = gen_markov_lifting(parse_matrix(args.matrix))
        case 'random':
            dims = tuple(int(d) for d in args.dims.split(',') if d.strip())
            spec = gen_random(RandomParams(args.seed, dims, periodic=not args.finite, lifting=not args.no_lifting, exact=not args.float))
    LOGGER.debug(f'Generated spec {spec.name}')
    return dump_document(spec)

COMMANDS = {
    'validate': cmd_validate,
    'build': cmd_build,
    'diagonalize': cmd_diagonalize,
    'classify': cmd_classify,
    'report': cmd_report,
    'gen': cmd_gen,
}

def emit(text: str, out: str | None) -> None:
    if out:
        with open(out, 'w') as f:
            f.write(text)
    else:
        sys.stdout.write(text)

def run(argv: list[str] | None = None) -> int:
    """Entry point: dispatches a subcommand and maps its outcome to an exit code"""
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_VALIDATION
    previous = tolerances.current()
    try:
        validate_args(args)
        configure_logging(args.verbose, args.log_file)
        if args.profile:
            tolerances.use_profile(args.profile)
        outcome = COMMANDS[args.command](args)
        if isinstance(outcome, str):
            emit(outcome, args.out)
            return EXIT_OK
        emit(outcome.to_json(), args.out)
        for v in outcome.stages.get('validation', {}).get('violations', []):
            print(violation_line(v['path'], v['message']), file=sys.stderr)
        for line in outcome.summary():
            print(line, file=sys.stderr)
        return outcome.exit_code()
    except ValueError as e: # DocumentError included
        print(error_line(str(e)), file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeError as e:
        print(error_line(str(e)), file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(error_line(str(e)), file=sys.stderr)
        return EXIT_IO
    finally:
        tolerances.use(previous)

if __name__ == '__main__':
    sys.exit(run())
