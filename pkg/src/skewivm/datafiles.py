"""File formats: relation CSVs and single-tuple update streams.

Relation data lives in one CSV per relation symbol, columns in the atom's
schema order, with an optional trailing integer ``__mult`` column (default
multiplicity 1) and an optional header row naming the variables.  Update
streams hold one update per line, ``+|- symbol, v1, ..., vk [, m]``; the
sign negates ``m`` and blank lines or ``#`` comments are skipped.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterator

from .errors import EngineError, MissingRelationError
from .query import ConjunctiveQuery
from .storage import Interner

Row = tuple
Multiset = dict[Row, int]


def _candidate_files(data_dir: Path, symbol: str, occurrences: list[int]) -> list[Path]:
    names = [f"{symbol}.csv"] + [f"{symbol}.{o}.csv" for o in occurrences]
    return [data_dir / n for n in names if (data_dir / n).exists()]


def load_relation_csv(path: Path, schema: tuple[str, ...],
                      interner: Interner) -> Multiset:
    arity = len(schema)
    out: Multiset = {}
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return out
    start = 0
    header = [c.strip() for c in rows[0]]
    if header == list(schema) or header == list(schema) + ["__mult"]:
        start = 1
    for lineno, raw in enumerate(rows[start:], start + 1):
        cells = [c.strip() for c in raw]
        if not cells or cells == [""]:
            continue
        if len(cells) == arity:
            mult = 1
        elif len(cells) == arity + 1:
            try:
                mult = int(cells[-1])
            except ValueError as exc:
                raise EngineError(f"{path}:{lineno}: bad multiplicity {cells[-1]!r}") from exc
            cells = cells[:-1]
        else:
            raise EngineError(
                f"{path}:{lineno}: {len(cells)} columns for arity-{arity} relation")
        row = tuple(interner.intern(c) for c in cells)
        out[row] = out.get(row, 0) + mult
    return {r: m for r, m in out.items() if m != 0}


def load_database(q: ConjunctiveQuery, data_dir: str | Path,
                  interner: Interner) -> dict[str, Multiset]:
    """One multiset per relation symbol; occurrence-suffixed files are
    accepted but every file for the same symbol must agree."""
    data_dir = Path(data_dir)
    db: dict[str, Multiset] = {}
    for sym in q.symbols():
        occs = [a.occurrence for a in q.occurrences(sym)]
        schema = q.occurrences(sym)[0].schema
        files = _candidate_files(data_dir, sym, occs)
        if not files:
            raise MissingRelationError(f"no data file for relation {sym} in {data_dir}")
        contents = [load_relation_csv(f, schema, interner) for f in files]
        for other, f in zip(contents[1:], files[1:]):
            if other != contents[0]:
                raise EngineError(
                    f"{f}: occurrence file disagrees with {files[0]} for symbol {sym}")
        db[sym] = contents[0]
    return db


def parse_update_line(line: str, lineno: int, arities: dict[str, int],
                      interner: Interner) -> tuple[str, Row, int] | None:
    text = line.strip()
    if not text or text.startswith("#"):
        return None
    if text[0] not in "+-":
        raise EngineError(f"update line {lineno}: expected leading + or -")
    sign = 1 if text[0] == "+" else -1
    fields = [f.strip() for f in text[1:].split(",")]
    symbol = fields[0]
    if symbol not in arities:
        raise MissingRelationError(f"update line {lineno}: unknown relation {symbol}")
    arity = arities[symbol]
    values = fields[1:]
    mult = 1
    if len(values) == arity + 1:
        try:
            mult = int(values[-1])
        except ValueError as exc:
            raise EngineError(f"update line {lineno}: bad multiplicity") from exc
        values = values[:-1]
    if len(values) != arity:
        raise EngineError(
            f"update line {lineno}: {len(values)} values for arity-{arity} relation {symbol}")
    row = tuple(interner.intern(v) for v in values)
    return symbol, row, sign * abs(mult)


def read_updates(path: str | Path, q: ConjunctiveQuery,
                 interner: Interner) -> Iterator[tuple[str, Row, int]]:
    arities = {sym: len(q.occurrences(sym)[0].schema) for sym in q.symbols()}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parsed = parse_update_line(line, lineno, arities, interner)
            if parsed is not None:
                yield parsed


def format_result_row(row: Row, mult: int, interner: Interner) -> str:
    return ",".join([interner.lookup(v) for v in row] + [str(mult)])
