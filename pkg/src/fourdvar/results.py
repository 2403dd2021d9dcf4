"""Result rows and their CSV representation.

Floats are written with 17 significant digits so that a table survives a
write/read cycle bit for bit.
"""
import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional

COLUMNS = ("seed_index", "method", "l", "kJ", "cost_final", "cost_best",
           "grad_norm_final", "step_norm_final", "rmse", "stop_reason",
           "cost_initial")


@dataclass(frozen=True)
class EnsembleResultRow:
    seed_index: int
    method: str
    l: int
    kJ: int
    cost_final: float
    cost_best: float
    grad_norm_final: float
    step_norm_final: float
    rmse: float
    stop_reason: str
    cost_initial: float


_INT_FIELDS = {"seed_index", "l", "kJ"}
_STR_FIELDS = {"method", "stop_reason"}


def format_float(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def _format(name, value):
    if name in _STR_FIELDS:
        return str(value)
    if name in _INT_FIELDS:
        return str(int(value))
    return format_float(value)


def _parse(name, text):
    if name in _STR_FIELDS:
        return text
    if name in _INT_FIELDS:
        return int(text)
    return float(text)


class ResultTable:
    """Rows of (realization, method) outcomes, sorted by index then method."""

    def __init__(self, rows, traces: Optional[Dict] = None):
        self.rows: List[EnsembleResultRow] = list(rows)
        self.traces = traces or {}

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        if not isinstance(other, ResultTable):
            return NotImplemented
        return self.to_csv_string() == other.to_csv_string()

    @property
    def methods(self):
        seen = []
        for row in self.rows:
            if row.method not in seen:
                seen.append(row.method)
        return seen

    def by_realization(self):
        groups = {}
        for row in self.rows:
            groups.setdefault(row.seed_index, []).append(row)
        return groups

    def to_csv_string(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            data = asdict(row)
            writer.writerow([_format(c, data[c]) for c in COLUMNS])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv_string())

    @classmethod
    def from_csv_string(cls, text):
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty results file") from None
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise ValueError(f"results file lacks columns {missing}")
        pos = {name: header.index(name) for name in COLUMNS}
        names = [f.name for f in fields(EnsembleResultRow)]
        rows = []
        for line in reader:
            if not line:
                continue
            rows.append(EnsembleResultRow(
                **{n: _parse(n, line[pos[n]]) for n in names}))
        return cls(rows)

    @classmethod
    def read_csv(cls, path):
        with open(path, encoding="utf-8", newline="") as fh:
            return cls.from_csv_string(fh.read())
