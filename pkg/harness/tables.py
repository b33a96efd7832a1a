"""
Convergence tables: rows of per-level metrics plus experimental orders
of convergence, written as CSV or JSON with 17 significant digits.
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

LEVEL = 'level'
H = 'h'
BOUNDARY_EDGES = 'boundary_edges'
CONTROL_L2 = 'control_l2'
STATE_L2 = 'state_l2'
FLUX_L2 = 'flux_l2'
ADJOINT_L2 = 'adjoint_l2'
P0_SANITY = 'p0_sanity'
ENRICHED_NORM = 'enriched_norm'
KKT = 'kkt_residual'
ITERATIONS = 'iterations'
WALL_TIME = 'wall_time'

ERROR_METRICS = [CONTROL_L2, STATE_L2, FLUX_L2, ADJOINT_L2, P0_SANITY]
INTEGER_COLUMNS = [LEVEL, BOUNDARY_EDGES, ITERATIONS]
BASE_COLUMNS = [LEVEL, H, BOUNDARY_EDGES]
TRAILING_COLUMNS = [ENRICHED_NORM, KKT, ITERATIONS, WALL_TIME]
EOC_PREFIX = 'eoc_'

CSV = 'csv'
JSON = 'json'
FORMATS = [CSV, JSON]
META = 'meta'
ROWS = 'rows'


def eoc_name(metric: str) -> str:
    return EOC_PREFIX + metric


def eoc(errors, h) -> list:
    """
    log(e_k / e_k+1) / log(h_k / h_k+1) for consecutive pairs; nan where
    an error is not positive.
    """
    errors = np.asarray(errors, dtype=float)
    h = np.asarray(h, dtype=float)
    if errors.shape != h.shape:
        raise ValueError(f'Bad shapes {errors.shape=}, {h.shape=}')
    rates = []
    for k in range(len(errors) - 1):
        e0, e1 = errors[k], errors[k + 1]
        if e0 > 0 and e1 > 0 and h[k] != h[k + 1]:
            rates.append(math.log(e0 / e1) / math.log(h[k] / h[k + 1]))
        else:
            rates.append(math.nan)
    return rates


def format_value(val) -> str:
    if val is None:
        return ''
    if isinstance(val, (int, np.integer)) and not isinstance(val, bool):
        return str(int(val))
    val = float(val)
    if math.isnan(val):
        return 'nan'
    return f'{val:.16e}'


def parse_value(text: str, column: str):
    if text == '':
        return None
    if column in INTEGER_COLUMNS:
        return int(text)
    return float(text)


@dataclass
class ConvergenceTable:
    metrics: list = field(default_factory=lambda: list(ERROR_METRICS))
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def columns(self) -> list:
        return (BASE_COLUMNS + list(self.metrics)
                + [eoc_name(m) for m in self.metrics] + TRAILING_COLUMNS)

    def add_row(self, row: dict) -> None:
        if self.rows and not row[H] < self.rows[-1][H]:
            raise ValueError(f'Bad row order: h={row[H]!r} after '
                             f'{self.rows[-1][H]!r}')
        self.rows.append(dict(row))
        self.fill_eoc()

    def column(self, name: str) -> list:
        return [row.get(name) for row in self.rows]

    def fill_eoc(self) -> None:
        h = self.column(H)
        for metric in self.metrics:
            errors = [np.nan if e is None else e for e in self.column(metric)]
            rates = [None] + eoc(errors, h)
            for row, rate in zip(self.rows, rates):
                row[eoc_name(metric)] = rate

    def is_monotone(self, metric: str) -> bool:
        errors = self.column(metric)
        return all(b < a for a, b in zip(errors, errors[1:]))

    def min_eoc(self, metric: str) -> float:
        rates = [r for r in self.column(eoc_name(metric))
                 if r is not None and not math.isnan(r)]
        return min(rates) if rates else math.nan

    def string_rows(self) -> list:
        return [[format_value(row.get(c)) for c in self.columns]
                for row in self.rows]

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(self.columns)
        writer.writerows(self.string_rows())
        return out.getvalue()

    def to_json(self) -> str:
        rows = [dict(zip(self.columns, r)) for r in self.string_rows()]
        return json.dumps({META: self.meta, ROWS: rows}, indent=2)

    def write(self, path, fmt: str = CSV) -> None:
        if fmt not in FORMATS:
            raise ValueError(f'Bad value for {fmt=}')
        text = self.to_csv() if fmt == CSV else self.to_json()
        with open(path, 'w') as out:
            out.write(text)

    @classmethod
    def _from_strings(cls, header, records, meta=None):
        metrics = [c for c in header
                   if c not in BASE_COLUMNS + TRAILING_COLUMNS
                   and not c.startswith(EOC_PREFIX)]
        table = cls(metrics=metrics, meta=meta or {})
        for rec in records:
            table.rows.append({c: parse_value(v, c)
                               for c, v in zip(header, rec)})
        return table

    @classmethod
    def from_csv(cls, text: str) -> 'ConvergenceTable':
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        return cls._from_strings(header, [r for r in reader if r])

    @classmethod
    def from_json(cls, text: str) -> 'ConvergenceTable':
        doc = json.loads(text)
        rows = doc.get(ROWS, [])
        header = list(rows[0]) if rows else BASE_COLUMNS
        return cls._from_strings(header, [[r[c] for c in header]
                                          for r in rows], doc.get(META))

    @classmethod
    def read(cls, path) -> 'ConvergenceTable':
        with open(path) as src:
            text = src.read()
        if text.lstrip().startswith('{'):
            return cls.from_json(text)
        return cls.from_csv(text)

    def format_text(self) -> str:
        """Aligned plain-text rendering for the terminal."""
        short = [LEVEL, H, BOUNDARY_EDGES]
        for m in self.metrics:
            short += [m, eoc_name(m)]
        short += [KKT, ITERATIONS]
        lines = ['  '.join(f'{c:>14}' for c in short)]
        for row in self.rows:
            cells = []
            for c in short:
                v = row.get(c)
                if v is None:
                    cells.append(f'{"":>14}')
                elif c in INTEGER_COLUMNS:
                    cells.append(f'{v:>14d}')
                else:
                    cells.append(f'{v:>14.4e}' if not c.startswith(EOC_PREFIX)
                                 else f'{v:>14.3f}')
            lines.append('  '.join(cells))
        return '\n'.join(lines)
