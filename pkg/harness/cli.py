"""
Command line entry point.

    python -m harness study --domain square --levels 4 --problem inactive
    python -m harness solve --domain pentagon --levels 2 --alpha 0.5
    python -m harness oracle-check --domain pentagon
    python -m harness operators --levels 5

Exit codes: 0 success, 2 usage error, 3 solver failure, 4 a result
missed the requested threshold.
"""
import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone

import numpy as np

import config.settings as cfg
import harness.manufactured as mfd
import harness.study as std
import harness.tables as tbl
import linalg.solvers as slv
import optimizer.control_problem as ocp
import optimizer.oracle as orc

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_THRESHOLD = 4

SOLVE = 'solve'
STUDY = 'study'
ORACLE_CHECK = 'oracle-check'
OPERATORS = 'operators'

ORACLE_THRESHOLD = 1e-8
ORACLE_INSTANCES = 5
ORTHOGONALITY_THRESHOLD = 1e-11


class UsageError(ValueError):
    pass


def _add_common(sub):
    sub.add_argument('--domain', nargs='+', default=[std.SQUARE],
                     metavar='DOMAIN',
                     help='square | pentagon | polygon FILE')
    sub.add_argument('--levels', type=int, default=None,
                     help='number of refinement levels')
    sub.add_argument('--seed', type=int, default=cfg.SEED)
    sub.add_argument('--out', default=None, help='output directory')
    sub.add_argument('--format', choices=tbl.FORMATS, default=tbl.CSV)
    sub.add_argument('-v', '--verbose', action='count', default=0)


def _add_problem(sub):
    sub.add_argument('--problem', nargs='+', default=[mfd.INACTIVE],
                     metavar='PROBLEM',
                     help='inactive | active | custom FILE')
    sub.add_argument('--alpha', type=float, default=1.0)
    sub.add_argument('--bounds', type=float, nargs=2, default=None,
                     metavar=('UA', 'UB'))
    sub.add_argument('--tol', type=float, default=None,
                     help='KKT residual tolerance')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='harness',
        description='Crouzeix-Raviart Dirichlet boundary control: solves, '
                    'convergence studies and operator checks')
    subs = parser.add_subparsers(dest='command', required=True)

    solve = subs.add_parser(SOLVE, help='solve one problem')
    _add_common(solve)
    _add_problem(solve)

    study = subs.add_parser(STUDY, help='convergence table with EOC')
    _add_common(study)
    _add_problem(study)
    study.add_argument('--min-eoc', type=float, default=None,
                       help='exit 4 if the control EOC drops below this')
    study.add_argument('--reference-gap', type=int, default=std.REFERENCE_GAP)
    study.add_argument('--max-workers', type=int, default=None)

    oracle = subs.add_parser(ORACLE_CHECK,
                             help='compare with the dense QP oracle')
    _add_common(oracle)
    oracle.add_argument('--instances', type=int, default=ORACLE_INSTANCES)

    ops = subs.add_parser(OPERATORS,
                          help='orthogonality and P1~ norm per level')
    _add_common(ops)
    ops.add_argument('--pairs', type=int, default=10)
    return parser


def _domain(tokens):
    name = tokens[0]
    if name not in std.DOMAINS:
        raise UsageError(f'Bad value for domain {name!r}')
    if name == std.POLYGON:
        if len(tokens) != 2:
            raise UsageError('--domain polygon needs a corner FILE')
        return std.base_mesh(name, tokens[1])
    if len(tokens) != 1:
        raise UsageError(f'--domain {name} takes no file')
    return std.base_mesh(name)


def _problem(args, m):
    tokens = args.problem
    name = tokens[0]
    if name not in mfd.PROBLEMS:
        raise UsageError(f'Bad value for problem {name!r}')
    path = None
    if name == mfd.CUSTOM:
        if len(tokens) != 2:
            raise UsageError('--problem custom needs a FILE')
        path = tokens[1]
    elif len(tokens) != 1:
        raise UsageError(f'--problem {name} takes no file')
    return mfd.make_problem(name, m, args.alpha, args.bounds, path)


def _levels(args, default):
    levels = default if args.levels is None else args.levels
    if levels < 1:
        raise UsageError(f'Bad value for {levels=}')
    return levels


def _out_path(args, stem):
    if args.out is None:
        return None
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, f'{stem}.{args.format}')


def _cmd_solve(args) -> int:
    base = _domain(args.domain)
    level = _levels(args, 1) - 1
    m = std.level_mesh(base, level)
    p = _problem(args, m)
    sol = ocp.solve_control(p, tol=args.tol)
    print(f'mesh          {m!r}')
    print(f'objective     {sol.objective:.12e}')
    print(f'kkt residual  {sol.kkt_residual:.3e}')
    print(f'iterations    {sol.iterations}')
    print(f'||P1~ u||     {sol.enriched_control_norm:.12e}')
    lower, upper = sol.active_set(p.bounds)
    print(f'active        {len(lower)} at u_a, {len(upper)} at u_b')
    path = _out_path(args, 'control')
    if path:
        _write_control(path, args.format, m, sol)
        print(f'wrote {path}')
    return EXIT_OK


def _write_control(path, fmt, m, sol):
    s = m.boundary_arclength
    mid = m.midpoints[m.boundary_cycle]
    rows = [[f'{s[i]:.16e}', f'{s[i + 1]:.16e}', f'{mid[i, 0]:.16e}',
             f'{mid[i, 1]:.16e}', f'{u:.16e}']
            for i, u in enumerate(sol.control.coefficients)]
    header = ['s_start', 's_end', 'x_mid', 'y_mid', 'control']
    with open(path, 'w', newline='') as out:
        if fmt == tbl.JSON:
            json.dump({tbl.META: {'objective': f'{sol.objective:.16e}',
                                  'kkt_residual': f'{sol.kkt_residual:.16e}',
                                  'iterations': sol.iterations},
                       tbl.ROWS: [dict(zip(header, r)) for r in rows]},
                      out, indent=2)
        else:
            writer = csv.writer(out, lineterminator='\n')
            writer.writerow(header)
            writer.writerows(rows)


def _flags(args) -> dict:
    """The invocation flags as JSON-friendly values."""
    flags = {}
    for key, val in sorted(vars(args).items()):
        if val is None or isinstance(val, (bool, int, float, str)):
            flags[key] = val
        elif isinstance(val, (list, tuple)):
            flags[key] = [v if isinstance(v, (int, float)) else str(v)
                          for v in val]
        else:
            flags[key] = str(val)
    return flags


def _cmd_study(args) -> int:
    base = _domain(args.domain)
    levels = _levels(args, 4)
    p = _problem(args, std.level_mesh(base, 0))
    table = std.convergence_study(p, levels, base=base, tol=args.tol,
                                  reference_gap=args.reference_gap,
                                  max_workers=args.max_workers)
    table.meta['domain'] = ' '.join(args.domain)
    table.meta['seed'] = args.seed
    table.meta['timestamp'] = datetime.now(timezone.utc).isoformat()
    table.meta['metrics'] = list(table.metrics)
    table.meta['solver'] = cfg.LINEAR_SOLVER
    table.meta['flags'] = _flags(args)
    print(table.format_text())
    path = _out_path(args, 'study')
    if path:
        table.write(path, args.format)
        print(f'wrote {path}')
    if args.min_eoc is not None:
        worst = table.min_eoc(tbl.CONTROL_L2)
        if not worst >= args.min_eoc:
            print(f'control EOC {worst:.3f} below {args.min_eoc}')
            return EXIT_THRESHOLD
    return EXIT_OK


def _cmd_oracle_check(args) -> int:
    base = _domain(args.domain)
    m = std.level_mesh(base, _levels(args, 1) - 1)
    rng = np.random.default_rng(args.seed)
    worst_u = worst_j = 0.0
    for k in range(args.instances):
        p = mfd.random_problem(m, rng)
        sol = ocp.solve_control(p, tol=1e-12, method=cfg.LU)
        dist, gap = orc.oracle_deviation(p, sol)
        logger.info('instance %d: control distance %.3e, J gap %.3e', k,
                    dist, gap)
        worst_u = max(worst_u, dist)
        worst_j = max(worst_j, gap / (1.0 + abs(sol.objective)))
    print(f'boundary edges        {m.num_boundary_edges}')
    print(f'max control distance  {worst_u:.3e}')
    print(f'max relative J gap    {worst_j:.3e}')
    return EXIT_OK if worst_u <= ORACLE_THRESHOLD else EXIT_THRESHOLD


def _cmd_operators(args) -> int:
    base = _domain(args.domain)
    report = std.operator_report(base, _levels(args, 5), args.seed,
                                 args.pairs)
    print(f'{"level":>6}  {"N":>6}  {"orthogonality":>14}  {"||P1~||":>12}')
    for row in report:
        print(f'{row[tbl.LEVEL]:>6d}  {row[tbl.BOUNDARY_EDGES]:>6d}  '
              f'{row["orthogonality"]:>14.3e}  {row["p1_norm"]:>12.6f}')
    path = _out_path(args, 'operators')
    if path:
        with open(path, 'w') as out:
            if args.format == tbl.JSON:
                json.dump({tbl.ROWS: report}, out, indent=2)
            else:
                writer = csv.DictWriter(out, fieldnames=list(report[0]),
                                        lineterminator='\n')
                writer.writeheader()
                writer.writerows(report)
        print(f'wrote {path}')
    worst = max(row['orthogonality'] for row in report)
    return EXIT_OK if worst <= ORTHOGONALITY_THRESHOLD else EXIT_THRESHOLD


COMMANDS = {
    SOLVE: _cmd_solve,
    STUDY: _cmd_study,
    ORACLE_CHECK: _cmd_oracle_check,
    OPERATORS: _cmd_operators,
}


def configure_logging(verbose: int) -> None:
    if verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = getattr(logging, cfg.LOG_LEVEL.upper(), logging.WARNING)
    logging.basicConfig(level=level,
                        format='%(asctime)s %(name)s %(levelname)s '
                               '%(message)s')


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except slv.SolverError as e:
        table = getattr(e, 'table', None)
        if table is not None and table.rows:
            print(table.format_text())
        print(f'solver failure: {e}', file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as e:
        print(f'{parser.prog}: error: {e}', file=sys.stderr)
        return EXIT_USAGE
