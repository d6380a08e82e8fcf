# entwit - variance-based entanglement witnesses
# Command-line entry point: check states, search witnesses, run validation campaigns, emit boundary curves.

import argparse
import csv
import json
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from criteria import (
    ConsistencyError,
    CriterionId,
    VIOLATION_TOLERANCE,
    boundary_envelope,
    collect_moments,
    evaluate_criterion,
    otilde_from_ensemble,
    otilde_strong_from_ensemble,
    partition_curves,
    product_criterion_check,
)
from gaussian import CV_CHECKS, EPR_CONFIG, CVConfig, GaussianState
from operators import SchemaError, pairs_from_json, preset_pairs
from oracles import SoundnessError, run_campaign
from search import SearchConfig, optimize_cv, optimize_violation
from states import CriterionConfig, DensityMatrix, SeparableEnsemble, ensemble_to_density

logger = logging.getLogger('entwit')

EXIT_OK = 0
EXIT_AUDIT_FAILURE = 1
EXIT_INPUT_ERROR = 2

DISCRETE_DEFAULT_CRITERIA = (
    CriterionId.HEISENBERG,
    CriterionId.GENERAL_MEASURABLE,
    CriterionId.SUM,
    CriterionId.PRL02_PRODUCT,
    CriterionId.LINEAR_FAMILY,
)
ENSEMBLE_CRITERIA = (CriterionId.GENERAL_ENSEMBLE, CriterionId.GENERAL_STRONG)
GAUSSIAN_DEFAULT_CRITERIA = (CriterionId.CV_PRODUCT, CriterionId.CV_SUM)


class InputError(Exception):
    """Invalid user input, reported as `path:line: message`."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
        self.message = message


def setup_logging(level: str = 'WARNING'):
    # stdout carries command output, so logs go to stderr only
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.WARNING),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stderr)]
    )


def read_settings() -> Dict[str, Any]:
    """ENTWIT_* settings from the environment (and .env, loaded by main)."""
    raw_tol = os.getenv('ENTWIT_TOLERANCE')
    tolerance = VIOLATION_TOLERANCE
    if raw_tol:
        try:
            tolerance = float(raw_tol)
        except ValueError:
            raise InputError('ENTWIT_TOLERANCE', 0, f"not a number: {raw_tol!r}")
        if not tolerance >= 0:
            raise InputError('ENTWIT_TOLERANCE', 0, f"must be nonnegative, got {raw_tol!r}")
    raw_workers = os.getenv('ENTWIT_WORKERS', '4')
    try:
        workers = int(raw_workers)
    except ValueError:
        raise InputError('ENTWIT_WORKERS', 0, f"not an integer: {raw_workers!r}")
    if workers < 1:
        raise InputError('ENTWIT_WORKERS', 0, f"must be >= 1, got {workers}")
    return {
        'tolerance': tolerance,
        'log_level': os.getenv('ENTWIT_LOG_LEVEL', 'WARNING'),
        'workers': workers,
    }


def locate_line(text: str, key_path: Sequence[str]) -> int:
    """Line of the first occurrence of the innermost named key in `key_path`, or 1."""
    for key in reversed(key_path):
        if key.isdigit():
            continue
        index = text.find(f'"{key}"')
        if index >= 0:
            return text.count('\n', 0, index) + 1
    return 1


def load_document(path: str, parser: Callable[[Any], Any]) -> Any:
    try:
        with open(path, 'r') as f:
            text = f.read()
    except OSError as e:
        raise InputError(path, 0, f"cannot read file: {e.strerror or e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(path, e.lineno, f"invalid JSON: {e.msg}")
    try:
        return parser(data)
    except SchemaError as e:
        raise InputError(path, locate_line(text, e.path), str(e))
    except ValueError as e:
        raise InputError(path, 1, str(e))


def parse_state(data: Any):
    if isinstance(data, dict) and 'cov' in data:
        return GaussianState.from_dict(data)
    if isinstance(data, dict) and 'terms' in data:
        return SeparableEnsemble.from_dict(data)
    state = DensityMatrix.from_dict(data)
    if not state.is_bipartite:
        raise SchemaError("State must declare two subsystem dims", ('dims',))
    return state


def parse_linear_weights(data: Any) -> Tuple[float, float]:
    alpha, beta = data.get('alpha', 1.0), data.get('beta', 1.0)
    for name, value in (('alpha', alpha), ('beta', beta)):
        if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
            raise SchemaError(f"'{name}' must be a nonnegative number, got {value!r}", (name,))
    return float(alpha), float(beta)


def parse_config(data: Any) -> Tuple[CriterionConfig, float, float]:
    cfg = CriterionConfig.from_dict(data)
    alpha, beta = parse_linear_weights(data)
    return cfg, alpha, beta


def parse_criteria(raw: Optional[str], allowed: Sequence[CriterionId],
                   default: Sequence[CriterionId]) -> List[CriterionId]:
    if not raw:
        return list(default)
    selected = []
    for name in raw.split(','):
        name = name.strip()
        try:
            criterion_id = CriterionId(name)
        except ValueError:
            raise InputError('--criteria', 0, f"unknown criterion '{name}'")
        if criterion_id not in allowed:
            raise InputError('--criteria', 0, f"criterion '{name}' does not apply to this state")
        selected.append(criterion_id)
    return selected


def load_pairs(path: Optional[str], dims: Tuple[int, int]):
    if path is None:
        return preset_pairs(dims[0])['xy'], preset_pairs(dims[1])['xy']
    return load_document(path, lambda data: pairs_from_json(data, dims))


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return '%.17g' % value
    return str(value)


def emit(payload: Any, rows: List[Dict[str, Any]], columns: Sequence[str], fmt: str):
    if fmt == 'csv':
        writer = csv.writer(sys.stdout, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])
    else:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + '\n')


VERDICT_COLUMNS = ('criterion', 'lhs', 'bound', 'violated', 'margin')


def cmd_check(args, settings) -> int:
    tol = settings['tolerance']
    state = load_document(args.state, parse_state)
    if isinstance(state, GaussianState):
        cfg = EPR_CONFIG
        if args.config:
            cfg = load_document(args.config, lambda data: CVConfig.from_config(CriterionConfig.from_dict(data)))
        criteria = parse_criteria(args.criteria, GAUSSIAN_DEFAULT_CRITERIA, GAUSSIAN_DEFAULT_CRITERIA)
        verdicts = [CV_CHECKS[criterion_id](state, cfg, tol) for criterion_id in criteria]
    else:
        cfg, alpha, beta = CriterionConfig(1.0, 1.0, 1.0, 1.0), 1.0, 1.0
        if args.config:
            cfg, alpha, beta = load_document(args.config, parse_config)
        ensemble = state if isinstance(state, SeparableEnsemble) else None
        rho = ensemble_to_density(ensemble) if ensemble is not None else state
        pairs = load_pairs(args.observables, rho.dims)
        allowed = DISCRETE_DEFAULT_CRITERIA + (ENSEMBLE_CRITERIA if ensemble is not None else ())
        criteria = parse_criteria(args.criteria, allowed, allowed)
        moments = collect_moments(rho, pairs)
        verdicts = []
        for criterion_id in criteria:
            if criterion_id == CriterionId.GENERAL_ENSEMBLE:
                otilde = otilde_from_ensemble(ensemble, pairs, cfg)
                verdicts.append(product_criterion_check(rho, otilde, pairs, cfg, tol))
            elif criterion_id == CriterionId.GENERAL_STRONG:
                otilde = otilde_strong_from_ensemble(ensemble, pairs, cfg)
                verdicts.append(product_criterion_check(rho, otilde, pairs, cfg, tol))
            else:
                verdicts.append(evaluate_criterion(criterion_id, moments, cfg, tol, alpha, beta))
    rows = [verdict.to_dict() for verdict in verdicts]
    logger.info(f"Checked {len(rows)} criteria on {args.state}")
    emit({'verdicts': rows}, rows, VERDICT_COLUMNS, args.format)
    return EXIT_OK


def parse_dims(raw: str) -> Tuple[int, int]:
    try:
        d1, d2 = (int(part) for part in raw.lower().split('x'))
    except ValueError:
        raise InputError('--dims', 0, f"expected DxD, got {raw!r}")
    if d1 < 2 or d2 < 2:
        raise InputError('--dims', 0, f"subsystem dims must be >= 2, got {raw!r}")
    return d1, d2


def cmd_validate(args, settings) -> int:
    dims = parse_dims(args.dims)
    if args.n < 0:
        raise InputError('--n', 0, f"must be >= 0, got {args.n}")
    try:
        audit = run_campaign(dims, args.n, args.seed, grid=args.grid, refine=args.refine,
                             search=not args.no_search, workers=settings['workers'],
                             tol=settings['tolerance'])
    except SoundnessError as e:
        sys.stderr.write(f"soundness failure: {e}\n")
        sys.stderr.write(json.dumps(e.dump, indent=2, sort_keys=True) + '\n')
        return EXIT_AUDIT_FAILURE
    report = audit.report()
    if args.format == 'text':
        sys.stdout.write(audit.text_report())
    elif args.format == 'csv':
        rows = [dict(criterion=name, **counts) for name, counts in report['criteria'].items()]
        emit(report, rows, ('criterion', 'checked', 'violated', 'sound', 'hit_rate'), 'csv')
    else:
        emit(report, [], (), 'json')
    return EXIT_OK if audit.passed else EXIT_AUDIT_FAILURE


def cmd_search(args, settings) -> int:
    tol = settings['tolerance']
    state = load_document(args.state, parse_state)
    if args.gaussian and not isinstance(state, GaussianState):
        raise InputError(args.state, 1, "--gaussian needs a state file with 'mean' and 'cov'")
    try:
        sc = SearchConfig(args.grid, args.refine, args.seed, CriterionId(args.criterion))
    except ValueError as e:
        raise InputError('--criterion', 0, str(e))
    if isinstance(state, GaussianState):
        result = optimize_cv(state, sc, tol)
    else:
        rho = ensemble_to_density(state) if isinstance(state, SeparableEnsemble) else state
        pairs = load_pairs(args.observables, rho.dims)
        try:
            result = optimize_violation(rho, pairs, sc, tol)
        except ValueError as e:
            raise InputError('--criterion', 0, str(e))
    payload = result.to_dict()
    row = {
        'criterion': result.verdict.criterion_id.value,
        'best_margin': result.best_margin,
        'violated': result.verdict.violated,
        'evaluations': result.evaluations,
    }
    row.update(result.best_config.to_dict())
    emit(payload, [row], list(row), args.format)
    return EXIT_OK


def parse_range(raw: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(part) for part in raw.split(':'))
    except ValueError:
        raise InputError('--range', 0, f"expected LO:HI, got {raw!r}")
    return lo, hi


def cmd_boundary(args, settings) -> int:
    lo, hi = parse_range(args.range)
    if args.points < 1:
        raise InputError('--points', 0, f"must be >= 1, got {args.points}")
    if not 0 <= args.otilde < float('inf'):
        raise InputError('--otilde', 0, f"must be a finite nonnegative number, got {args.otilde}")
    try:
        points = boundary_envelope(args.otilde, args.points, lo, hi)
    except ValueError as e:
        raise InputError('--range', 0, str(e))
    rows = [{'variance_u': p.variance_u, 'variance_v': p.variance_v,
             'tangent_alpha_over_beta': p.tangent_alpha_over_beta} for p in points]
    columns = ['variance_u', 'variance_v', 'tangent_alpha_over_beta']
    payload: Dict[str, Any] = {'otilde': args.otilde, 'points': rows}
    if args.state:
        state = load_document(args.state, parse_state)
        if isinstance(state, GaussianState):
            raise InputError(args.state, 1, "partition curves need a discrete state")
        rho = ensemble_to_density(state) if isinstance(state, SeparableEnsemble) else state
        pairs = load_pairs(args.observables, rho.dims)
        cfg = load_document(args.config, parse_config)[0] if args.config else CriterionConfig(1.0, 1.0, 1.0, 1.0)
        partition = partition_curves(collect_moments(rho, pairs), cfg, args.points, lo, hi)
        for row, curve in zip(rows, partition.rows):
            row.update(general=curve.general, prl02=curve.prl02, sum_line=curve.sum_line)
        columns += ['general', 'prl02', 'sum_line']
        payload['partition'] = {
            'state_point': list(partition.state_point),
            'general_bound': partition.general_bound,
            'prl02_bound': partition.prl02_bound,
            'sum_bound': partition.sum_bound,
        }
    emit(payload, rows, columns, args.format)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='entwit', description="Variance-based entanglement witnesses")
    sub = parser.add_subparsers(dest='command', required=True)

    check = sub.add_parser('check', help="Evaluate criteria on a state file")
    check.add_argument('--state', required=True)
    check.add_argument('--observables')
    check.add_argument('--config')
    check.add_argument('--criteria', help="Comma-separated criterion ids")
    check.add_argument('--format', choices=('json', 'csv'), default='json')
    check.set_defaults(handler=cmd_check)

    validate = sub.add_parser('validate', help="Run the seeded soundness campaign")
    validate.add_argument('--dims', default='2x2')
    validate.add_argument('--n', type=int, default=100)
    validate.add_argument('--seed', type=int, default=42)
    validate.add_argument('--grid', type=int, default=8)
    validate.add_argument('--refine', type=int, default=1)
    validate.add_argument('--no-search', action='store_true')
    validate.add_argument('--format', choices=('json', 'csv', 'text'), default='json')
    validate.set_defaults(handler=cmd_validate)

    search = sub.add_parser('search', help="Search coefficients for the strongest violation")
    search.add_argument('--state', required=True)
    search.add_argument('--gaussian', action='store_true')
    search.add_argument('--observables')
    search.add_argument('--criterion', default=CriterionId.PRL02_PRODUCT.value)
    search.add_argument('--grid', type=int, default=8)
    search.add_argument('--refine', type=int, default=1)
    search.add_argument('--seed', type=int, default=0)
    search.add_argument('--format', choices=('json', 'csv'), default='json')
    search.set_defaults(handler=cmd_search)

    boundary = sub.add_parser('boundary', help="Emit the product-criterion boundary curve")
    boundary.add_argument('--otilde', type=float, required=True)
    boundary.add_argument('--range', default='0.25:4')
    boundary.add_argument('--points', type=int, default=64)
    boundary.add_argument('--state')
    boundary.add_argument('--observables')
    boundary.add_argument('--config')
    boundary.add_argument('--format', choices=('json', 'csv'), default='csv')
    boundary.set_defaults(handler=cmd_boundary)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        settings = read_settings()
        setup_logging(settings['log_level'])
        return args.handler(args, settings)
    except InputError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_INPUT_ERROR
    except ConsistencyError as e:
        logger.error(f"Consistency check failed: {e}")
        sys.stderr.write(f"consistency failure: {e}\n")
        return EXIT_AUDIT_FAILURE
    except ValueError as e:
        # dimension mismatches between separately valid files
        sys.stderr.write(f"{getattr(args, 'state', None) or args.command}:1: {e}\n")
        return EXIT_INPUT_ERROR


if __name__ == '__main__':
    sys.exit(main())
