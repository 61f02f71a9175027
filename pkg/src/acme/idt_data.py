"""Integrated detection trial (IDT) records: parsing, validation, simulation.

File schemas (UTF-8, comma separated, header required)::

    carcasses.csv   id,species,t0,tp,ta      ta empty => still present (censored)
    searches.csv    carcass_id,search_time,discovered      discovered in {0, 1}

All times are decimal days from the start of the study.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .reduction import AcmeParams

CARCASS_HEADER = ("id", "species", "t0", "tp", "ta")
SEARCH_HEADER = ("carcass_id", "search_time", "discovered")
DEFAULT_PFM_CADENCE = 3.0


class IdtParseError(ValueError):
    """Raised with every row-level problem found, not just the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class CarcassRecord:
    id: str
    species_code: str
    t0: float
    tp: float
    ta: float | None = None

    @property
    def censored(self) -> bool:
        return self.ta is None

    @property
    def ta_or_inf(self) -> float:
        return math.inf if self.ta is None else self.ta


@dataclass(frozen=True)
class SearchRecord:
    carcass_id: str
    search_time: float
    discovered: bool


@dataclass(frozen=True)
class IdtDataset:
    carcasses: tuple
    searches: tuple

    def __post_init__(self):
        ids = {c.id for c in self.carcasses}
        last = {}
        for s in self.searches:
            if s.carcass_id not in ids:
                raise ValueError(f"search references unknown carcass {s.carcass_id!r}")
            if s.carcass_id in last and s.search_time <= last[s.carcass_id]:
                raise ValueError(f"search times for {s.carcass_id!r} are not increasing")
            last[s.carcass_id] = s.search_time

    def searches_for(self, carcass_id: str) -> list:
        return [s for s in self.searches if s.carcass_id == carcass_id]

    def grouped_searches(self) -> dict:
        out = defaultdict(list)
        for s in self.searches:
            out[s.carcass_id].append(s)
        return out

    def usable_searches(self) -> dict:
        """Searches at which the carcass is known present: t0 <= T <= tp."""
        groups = self.grouped_searches()
        return {
            c.id: [s for s in groups.get(c.id, []) if c.t0 <= s.search_time <= c.tp]
            for c in self.carcasses
        }

    def excluded_searches(self) -> list:
        usable = {id(s) for group in self.usable_searches().values() for s in group}
        return [s for s in self.searches if id(s) not in usable]


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_rows(source, header, label, errors):
    if isinstance(source, Path):
        source = source.read_text(encoding="utf-8")
    text = source if isinstance(source, str) else source.read()
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(n, r) for n, r in enumerate(rows, start=1) if r and any(f.strip() for f in r)]
    if not rows:
        return None
    n, first = rows[0]
    if tuple(f.strip() for f in first) != header:
        errors.append(f"{label} line {n}: expected header {','.join(header)}, got {','.join(first)}")
        return []
    return rows[1:]


def _number(field, what, where, errors):
    try:
        value = float(field)
    except ValueError:
        errors.append(f"{where}: {what} {field!r} is not a number")
        return None
    if not math.isfinite(value):
        errors.append(f"{where}: {what} must be finite")
        return None
    return value


def parse_dataset(carcass_source, search_source="") -> IdtDataset:
    """Parse and validate carcass and search tables.

    Sources may be CSV text, a ``Path`` or an open text file.  Every problem is
    collected and reported together in an :class:`IdtParseError`.  Searches
    falling outside [t0, tp] are kept; :meth:`IdtDataset.excluded_searches`
    lists them.
    """
    errors = []
    rows = _read_rows(carcass_source, CARCASS_HEADER, "carcasses", errors)
    if rows is None:
        raise IdtParseError(["carcasses: file is empty (no header, no rows)"])
    carcasses = []
    seen = set()
    for n, row in rows:
        where = f"carcasses line {n}"
        if len(row) != len(CARCASS_HEADER):
            errors.append(f"{where}: expected {len(CARCASS_HEADER)} fields, got {len(row)}")
            continue
        cid, species, t0s, tps, tas = (f.strip() for f in row)
        if not cid:
            errors.append(f"{where}: empty id")
            continue
        if cid in seen:
            errors.append(f"{where}: duplicate id {cid!r}")
            continue
        t0 = _number(t0s, "t0", where, errors)
        tp = _number(tps, "tp", where, errors)
        ta = _number(tas, "ta", where, errors) if tas else None
        if t0 is None or tp is None or (tas and ta is None):
            continue
        if tp < t0:
            errors.append(f"{where}: tp={tp} precedes t0={t0} for {cid!r}")
            continue
        if ta is not None and ta <= tp:
            errors.append(f"{where}: ta={ta} must exceed tp={tp} for {cid!r}")
            continue
        seen.add(cid)
        carcasses.append(CarcassRecord(cid, species, t0, tp, ta))
    if not rows and not errors:
        errors.append("carcasses: no data rows")

    searches = []
    last = {}
    srows = _read_rows(search_source, SEARCH_HEADER, "searches", errors) or []
    for n, row in srows:
        where = f"searches line {n}"
        if len(row) != len(SEARCH_HEADER):
            errors.append(f"{where}: expected {len(SEARCH_HEADER)} fields, got {len(row)}")
            continue
        cid, ts, ds = (f.strip() for f in row)
        t = _number(ts, "search_time", where, errors)
        if ds not in ("0", "1"):
            errors.append(f"{where}: discovered must be 0 or 1, got {ds!r}")
            continue
        if t is None:
            continue
        if cid not in seen:
            errors.append(f"{where}: unknown carcass_id {cid!r}")
            continue
        if cid in last and t <= last[cid]:
            errors.append(f"{where}: search times for {cid!r} not increasing ({t} after {last[cid]})")
            continue
        last[cid] = t
        searches.append(SearchRecord(cid, t, ds == "1"))
    if errors:
        raise IdtParseError(errors)
    order = {c.id: i for i, c in enumerate(carcasses)}
    searches.sort(key=lambda s: (order[s.carcass_id], s.search_time))
    return IdtDataset(tuple(carcasses), tuple(searches))


def load_dataset(carcass_path, search_path=None) -> IdtDataset:
    carcass_text = Path(carcass_path).read_text(encoding="utf-8")
    search_text = Path(search_path).read_text(encoding="utf-8") if search_path else ""
    return parse_dataset(carcass_text, search_text)


def serialize_dataset(ds: IdtDataset) -> tuple:
    """Return (carcasses_csv, searches_csv) text in the canonical layout."""
    cbuf, sbuf = io.StringIO(), io.StringIO()
    cw = csv.writer(cbuf, lineterminator="\n")
    cw.writerow(CARCASS_HEADER)
    for c in ds.carcasses:
        cw.writerow([c.id, c.species_code, _fmt(c.t0), _fmt(c.tp), "" if c.ta is None else _fmt(c.ta)])
    sw = csv.writer(sbuf, lineterminator="\n")
    sw.writerow(SEARCH_HEADER)
    for s in ds.searches:
        sw.writerow([s.carcass_id, _fmt(s.search_time), int(s.discovered)])
    return cbuf.getvalue(), sbuf.getvalue()


def write_dataset(ds: IdtDataset, directory) -> tuple:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ctext, stext = serialize_dataset(ds)
    cpath, spath = directory / "carcasses.csv", directory / "searches.csv"
    cpath.write_text(ctext, encoding="utf-8")
    spath.write_text(stext, encoding="utf-8")
    return cpath, spath


def simulate_idt(params: AcmeParams, n_carcasses: int, placement_window: float,
                 search_times, seed: int, pfm_cadence: float = DEFAULT_PFM_CADENCE,
                 species: str = "SIM") -> IdtDataset:
    """Draw a synthetic IDT under the ACME model.

    Each carcass gets its own generator keyed by (seed, index), so results do
    not depend on evaluation order.  Per carcass: placement uniform on
    [0, placement_window]; Weibull removal; at each search while it is present
    and discoverable it is found with probability S(age); after every search
    it stays discoverable with probability ``bleed``.  Presence checks every
    ``pfm_cadence`` days from placement bracket the removal time as (tp, ta);
    removals after the last search are censored.  Searches are recorded from
    placement until ta.
    """
    times = np.asarray(search_times, dtype=float)
    if n_carcasses < 1:
        raise ValueError("need at least one carcass")
    if times.size == 0 or np.any(np.diff(times) <= 0):
        raise ValueError("search_times must be nonempty and strictly increasing")
    if not (placement_window > 0 and pfm_cadence > 0):
        raise ValueError("placement_window and pfm_cadence must be positive")
    alpha, rho = params.removal.alpha, params.removal.rho
    a, b, beta = params.discovery.a, params.discovery.b, params.bleed
    end = float(times[-1])
    width = len(str(n_carcasses - 1))
    carcasses, searches = [], []
    for i in range(n_carcasses):
        rng = np.random.default_rng([seed, i])
        cid = f"c{i:0{width}d}"
        t0 = float(rng.uniform(0.0, placement_window))
        removed = t0 + rng.exponential() ** (1.0 / alpha) / rho
        # presence checks at t0, t0 + c, ...; tp is the last one before removal
        j = math.floor((min(removed, end) - t0) / pfm_cadence)
        if j > 0 and t0 + j * pfm_cadence >= removed:
            j -= 1
        tp = t0 + j * pfm_cadence
        ta = tp + pfm_cadence if removed <= end and tp + pfm_cadence <= end else None
        carcasses.append(CarcassRecord(cid, species, t0, tp, ta))
        stop = math.inf if ta is None else ta
        discoverable = True
        for T in times[(times >= t0) & (times < stop)]:
            u_find, u_bleed = rng.uniform(size=2)
            found = discoverable and T < removed and u_find < math.exp(-a - b * (T - t0))
            searches.append(SearchRecord(cid, float(T), bool(found)))
            discoverable = discoverable and u_bleed < beta
    return IdtDataset(tuple(carcasses), tuple(searches))
