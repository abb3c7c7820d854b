"""CSV ingestion and emission for the command-line pipeline.

Every validation problem is reported as ``file:row:column: message`` with
rows counted from 1 at the header line. All problems in a file are collected
before an :class:`InputError` is raised.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .demog import AgePyramid
from .e0 import E0Series
from .tfr import TfrSeries
from .trajectory import (
    FertilityAgePattern,
    StandardLifeTable,
    bundled_standard,
    read_standard_life_table,
)

log = logging.getLogger(__name__)

GRID = 5
SEXES = ("female", "male")

SCHEMAS = {
    "tfr": ("country_id", "period_start", "tfr"),
    "e0": ("country_id", "period_start", "sex", "e0"),
    "population": ("country_id", "period_start", "sex", "age_group_start", "count"),
    "migration": ("country_id", "period_start", "sex", "age_group_start", "count"),
    "fertility_pattern": ("country_id", "age_group_start", "proportion"),
    "standard_life_table": ("sex", "age_group_start", "lx"),
}
INT_COLUMNS = {"period_start", "age_group_start"}
FLOAT_COLUMNS = {"tfr", "e0", "count", "proportion", "lx"}


class InputError(ValueError):
    """One or more problems in the input files; ``problems`` lists them individually."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


@dataclass
class InputTables:
    tfr: dict = field(default_factory=dict)            # country -> TfrSeries
    e0: dict = field(default_factory=dict)             # country -> E0Series
    population: dict = field(default_factory=dict)     # country -> AgePyramid
    migration: dict = field(default_factory=dict)      # country -> {period: (female, male)}
    patterns: dict = field(default_factory=dict)       # country -> FertilityAgePattern
    standard: StandardLifeTable | None = None
    warnings: list = field(default_factory=list)

    @property
    def countries(self) -> set:
        return set(self.tfr) | set(self.e0) | set(self.population) | set(self.patterns)


def _read_rows(path, table: str, problems: list) -> list:
    """Parse a CSV into typed row dicts, each carrying ``_row``."""
    path = Path(path)
    needed = SCHEMAS[table]
    rows = []
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        problems.append(f"{path}: cannot open ({exc.strerror})")
        return rows
    with fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in needed if c not in header]
        if missing:
            problems.append(f"{path}:1: missing column(s) {', '.join(missing)}")
            return rows
        reader.fieldnames = header
        for i, raw in enumerate(reader, start=2):
            row, ok = {"_row": i}, True
            for col in needed:
                cell = (raw.get(col) or "").strip()
                if col in INT_COLUMNS:
                    try:
                        row[col] = int(cell)
                    except ValueError:
                        problems.append(f"{path}:{i}:{col}: expected an integer, got {cell!r}")
                        ok = False
                elif col in FLOAT_COLUMNS:
                    try:
                        v = float(cell)
                    except ValueError:
                        v = np.nan
                    if not np.isfinite(v):
                        problems.append(f"{path}:{i}:{col}: expected a number, got {cell!r}")
                        ok = False
                    row[col] = v
                else:
                    if not cell:
                        problems.append(f"{path}:{i}:{col}: empty value")
                        ok = False
                    row[col] = cell
            if ok and "sex" in row and row["sex"] not in SEXES:
                problems.append(f"{path}:{i}:sex: expected female or male, got {row['sex']!r}")
                ok = False
            for col in ("period_start", "age_group_start"):
                if ok and col in row and row[col] % GRID:
                    problems.append(f"{path}:{i}:{col}: {row[col]} is not on the {GRID}-year grid")
                    ok = False
            if ok:
                rows.append(row)
    return rows


def _check_duplicates(path, rows, key_cols, problems):
    seen = {}
    for r in rows:
        key = tuple(r[c] for c in key_cols)
        if key in seen:
            problems.append(f"{path}:{r['_row']}:{key_cols[-1]}: duplicate "
                            f"({', '.join(map(str, key))}); first seen on row {seen[key]}")
        else:
            seen[key] = r["_row"]


def _check_contiguous(path, country, periods, rows_by_period, problems):
    periods = sorted(periods)
    for a, b in zip(periods, periods[1:]):
        if b - a != GRID:
            problems.append(f"{path}:{rows_by_period[b]}:period_start: {country} jumps from "
                            f"{a} to {b}; periods must be consecutive")


def parse_tfr(path, problems) -> dict:
    rows = _read_rows(path, "tfr", problems)
    _check_duplicates(path, rows, ("country_id", "period_start"), problems)
    by_c = defaultdict(dict)
    for r in rows:
        if r["tfr"] <= 0:
            problems.append(f"{path}:{r['_row']}:tfr: must be positive")
        by_c[r["country_id"]].setdefault(r["period_start"], r)
    out = {}
    for c, per in by_c.items():
        _check_contiguous(path, c, per, {p: r["_row"] for p, r in per.items()}, problems)
        years = sorted(per)
        try:
            out[c] = TfrSeries(c, [per[y]["tfr"] for y in years], years)
        except ValueError as exc:
            problems.append(f"{path}: {exc}")
    return out


def parse_e0(path, problems) -> dict:
    rows = _read_rows(path, "e0", problems)
    _check_duplicates(path, rows, ("country_id", "period_start", "sex"), problems)
    by_c = defaultdict(lambda: defaultdict(dict))
    for r in rows:
        if not 15 <= r["e0"] <= 100:
            problems.append(f"{path}:{r['_row']}:e0: {r['e0']} outside [15, 100]")
        by_c[r["country_id"]][r["period_start"]][r["sex"]] = r
    out = {}
    for c, per in by_c.items():
        for p, d in per.items():
            for sex in SEXES:
                if sex not in d:
                    other = next(iter(d.values()))
                    problems.append(f"{path}:{other['_row']}:sex: {c} {p} has no {sex} row")
        _check_contiguous(path, c, per, {p: next(iter(d.values()))["_row"] for p, d in per.items()},
                          problems)
        years = sorted(per)
        if any(len(per[y]) < 2 for y in years):
            continue
        try:
            out[c] = E0Series(c, [per[y]["female"]["e0"] for y in years],
                              [per[y]["male"]["e0"] for y in years], years)
        except ValueError as exc:
            problems.append(f"{path}: {exc}")
    return out


def _age_arrays(path, c, label, by_sex, problems, allow_negative: bool):
    ages_f, ages_m = sorted(by_sex["female"]), sorted(by_sex["male"])
    if ages_f != ages_m:
        problems.append(f"{path}: {c} {label}: female and male age groups differ")
        return None
    expected = list(range(0, GRID * len(ages_f), GRID))
    if ages_f != expected:
        first_bad = next(a for a, e in zip(ages_f + [None], expected + [None]) if a != e)
        problems.append(f"{path}:{by_sex['female'].get(first_bad, {}).get('_row', '?')}:"
                        f"age_group_start: {c} {label}: age groups must run 0, 5, 10, ... "
                        "without gaps")
        return None
    f = np.array([by_sex["female"][a]["count"] for a in ages_f])
    m = np.array([by_sex["male"][a]["count"] for a in ages_m])
    if not allow_negative:
        bad = [f"{path}:{by_sex[sex][a]['_row']}:count: negative count"
               for sex, arr in (("female", f), ("male", m)) for a, v in zip(ages_f, arr) if v < 0]
        if bad:
            problems.extend(bad)
            return None
    return f, m


def _parse_by_age(path, table, problems, allow_negative):
    rows = _read_rows(path, table, problems)
    _check_duplicates(path, rows, ("country_id", "period_start", "sex", "age_group_start"), problems)
    tree = defaultdict(lambda: defaultdict(lambda: {"female": {}, "male": {}}))
    for r in rows:
        tree[r["country_id"]][r["period_start"]][r["sex"]].setdefault(r["age_group_start"], r)
    out = defaultdict(dict)
    for c, per in tree.items():
        for p, by_sex in per.items():
            arrs = _age_arrays(path, c, p, by_sex, problems, allow_negative)
            if arrs is not None:
                out[c][p] = arrs
    return out


def parse_population(path, problems, warnings_out) -> dict:
    """Base pyramids; the latest period per country is used as the base."""
    out = {}
    for c, per in _parse_by_age(path, "population", problems, False).items():
        p = max(per)
        if len(per) > 1:
            warnings_out.append(f"{path}: {c} has {len(per)} periods; using {p} as the base")
        f, m = per[p]
        try:
            out[c] = AgePyramid(f, m, GRID, str(p))
        except ValueError as exc:
            problems.append(f"{path}: {c}: {exc}")
    return out


def parse_migration(path, problems) -> dict:
    return {c: dict(per) for c, per in _parse_by_age(path, "migration", problems, True).items()}


def parse_patterns(path, problems, warnings_out) -> dict:
    rows = _read_rows(path, "fertility_pattern", problems)
    _check_duplicates(path, rows, ("country_id", "age_group_start"), problems)
    by_c = defaultdict(dict)
    for r in rows:
        if r["proportion"] < 0:
            problems.append(f"{path}:{r['_row']}:proportion: negative proportion")
        by_c[r["country_id"]].setdefault(r["age_group_start"], r)
    out = {}
    for c, ages in by_c.items():
        a = sorted(ages)
        if a != list(range(a[0], a[0] + GRID * len(a), GRID)):
            problems.append(f"{path}:{ages[a[-1]]['_row']}:age_group_start: {c}: "
                            "reproductive age groups must be consecutive")
            continue
        p = np.array([ages[x]["proportion"] for x in a])
        total = p.sum()
        if abs(total - 1) > 1e-3:
            problems.append(f"{path}:{ages[a[0]]['_row']}:proportion: {c}: proportions sum to "
                            f"{total:.6g}, not 1")
            continue
        if abs(total - 1) > 1e-9:
            warnings_out.append(f"{path}: {c}: proportions sum to {total:.9g}; renormalised")
        if np.any(p < 0):
            continue
        out[c] = FertilityAgePattern(p / total, a[0] // GRID, GRID)
    return out


def parse_inputs(paths: dict) -> InputTables:
    """Read whichever of the known tables ``paths`` names and validate them.

    Keys follow :data:`SCHEMAS`; a missing ``standard_life_table`` falls back
    to the bundled synthetic standard.
    """
    problems, warns = [], []
    t = InputTables()
    unknown = set(paths) - set(SCHEMAS)
    if unknown:
        problems.append(f"unknown input table(s): {', '.join(sorted(unknown))}")
    if paths.get("tfr"):
        t.tfr = parse_tfr(paths["tfr"], problems)
    if paths.get("e0"):
        t.e0 = parse_e0(paths["e0"], problems)
    if paths.get("population"):
        t.population = parse_population(paths["population"], problems, warns)
    if paths.get("migration"):
        t.migration = parse_migration(paths["migration"], problems)
    if paths.get("fertility_pattern"):
        t.patterns = parse_patterns(paths["fertility_pattern"], problems, warns)
    if paths.get("standard_life_table"):
        sp = []
        _read_rows(paths["standard_life_table"], "standard_life_table", sp)
        problems.extend(sp)
        if not sp:
            try:
                t.standard = read_standard_life_table(paths["standard_life_table"])
            except (ValueError, KeyError, IndexError) as exc:
                problems.append(f"{paths['standard_life_table']}: {exc}")
    else:
        t.standard = bundled_standard()
    if problems:
        raise InputError(problems)

    # cross-table consistency is advisory: estimation uses every country,
    # projection checks the one it needs
    for name, tab in (("population", t.population), ("fertility_pattern", t.patterns)):
        for c in sorted(set(tab) - set(t.tfr) - set(t.e0)):
            warns.append(f"{name}: country {c} has no TFR or e0 series")
    for c in sorted(set(t.tfr) ^ set(t.e0)) if t.tfr and t.e0 else []:
        warns.append(f"country {c} appears in only one of the tfr and e0 tables")
    n = t.standard.lx_female.size if t.standard is not None else None
    for c, pyr in t.population.items():
        if n is not None and pyr.n_groups > n:
            raise InputError([f"population: {c} has {pyr.n_groups} age groups but the standard "
                              f"life table only {n}"])
    t.warnings = warns
    for w in warns:
        log.warning(w)
    return t


# --------------------------------------------------------------------------
# writers (inverse of the parsers)

def _writer(path, table):
    fh = Path(path).open("w", newline="", encoding="utf-8")
    w = csv.writer(fh)
    w.writerow(SCHEMAS[table])
    return fh, w


def write_tfr_csv(series, path) -> Path:
    fh, w = _writer(path, "tfr")
    with fh:
        for s in series:
            for y, v in zip(s.period_start_years, s.values):
                w.writerow([s.country_id, int(y), repr(float(v))])
    return Path(path)


def write_e0_csv(series, path) -> Path:
    fh, w = _writer(path, "e0")
    with fh:
        for s in series:
            for y, f, m in zip(s.period_start_years, s.female_e0, s.male_e0):
                w.writerow([s.country_id, int(y), "female", repr(float(f))])
                w.writerow([s.country_id, int(y), "male", repr(float(m))])
    return Path(path)


def write_population_csv(pyramids: dict, path) -> Path:
    fh, w = _writer(path, "population")
    with fh:
        for c, p in pyramids.items():
            for sex, arr in (("female", p.counts_female), ("male", p.counts_male)):
                for i, v in enumerate(arr):
                    w.writerow([c, int(p.base_period_label), sex, i * p.age_width_years,
                                repr(float(v))])
    return Path(path)


def write_migration_csv(migration: dict, path) -> Path:
    fh, w = _writer(path, "migration")
    with fh:
        for c, per in migration.items():
            for p, (f, m) in sorted(per.items()):
                for sex, arr in (("female", f), ("male", m)):
                    for i, v in enumerate(arr):
                        w.writerow([c, int(p), sex, i * GRID, repr(float(v))])
    return Path(path)


def write_pattern_csv(patterns: dict, path) -> Path:
    fh, w = _writer(path, "fertility_pattern")
    with fh:
        for c, pat in patterns.items():
            for i, v in enumerate(pat.proportions):
                w.writerow([c, (pat.first_group + i) * pat.age_width, repr(float(v))])
    return Path(path)


def migration_schedule(tables: InputTables, country: str, periods, n_groups: int):
    """Per-period (female, male) net migration for ``country``.

    A period without its own rows uses the latest earlier period in the
    file; periods before the first one (or a country without rows) get zero.
    """
    per = tables.migration.get(country, {})
    zero = (np.zeros(n_groups), np.zeros(n_groups))
    out = []
    for p in periods:
        earlier = [q for q in per if q <= p]
        if not earlier:
            out.append(zero)
            continue
        f, m = per[max(earlier)]
        if f.size != n_groups:
            raise InputError([f"migration: {country} has {f.size} age groups, population {n_groups}"])
        out.append((f, m))
    return out
