"""Monthly market data: parsing, deflation and the derived valuation series.

Input files follow the layout of Shiller's public S&P spreadsheet exported to
CSV: one row per month with a date in ``YYYY.MM`` form (``1871.1`` is October,
as in the original file), the nominal index level, annualized dividends and
earnings, and the consumer price index.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ContinuityError, ParseError, RangeError, SchemaError

logger = logging.getLogger(__name__)

CAPE_WINDOW = 120

DEFAULT_COLUMNS = {
    "date": "Date",
    "price": "P",
    "dividend": "D",
    "earnings": "E",
    "cpi": "CPI",
}
MANDATORY = ("date", "price", "dividend", "earnings", "cpi")


class YearMonth(NamedTuple):
    year: int
    month: int

    def index(self) -> int:
        return self.year * 12 + self.month - 1

    @classmethod
    def from_index(cls, idx: int) -> "YearMonth":
        return cls(idx // 12, idx % 12 + 1)

    def shift(self, months: int) -> "YearMonth":
        return YearMonth.from_index(self.index() + months)

    def __str__(self) -> str:
        return f"{self.year}.{self.month:02d}"


def parse_date(text: str) -> YearMonth:
    """Parse ``1871.01``, ``1871.1`` (October), ``1871-01`` or ``1871-01-31``."""
    s = text.strip()
    if "-" in s:
        parts = s.split("-")
        year, month = int(parts[0]), int(parts[1])
    elif "." in s:
        whole, frac = s.split(".", 1)
        if len(frac) == 1:
            frac += "0"
        year, month = int(whole), int(frac[:2])
    else:
        raise ValueError(f"unrecognized date {text!r}")
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range in {text!r}")
    return YearMonth(year, month)


@dataclass(frozen=True)
class RawMonthlyRecord:
    date: YearMonth
    nominal_price: float
    nominal_dividend: float
    nominal_earnings: float
    cpi: float


def load_column_map(path: str | Path) -> dict[str, str]:
    """Read a ``key = column name`` mapping file. ``#`` starts a comment."""
    mapping = dict(DEFAULT_COLUMNS)
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"{path}:{lineno}: expected 'key = column'")
        key, value = (s.strip() for s in line.split("=", 1))
        mapping[key] = value
    return mapping


def _to_float(text: str, row: int, column: str, required: bool) -> float:
    s = text.strip()
    if s == "":
        if required:
            raise ParseError(row, column, text, "missing mandatory value")
        return math.nan
    try:
        return float(s)
    except ValueError:
        raise ParseError(row, column, text) from None


def parse_market_csv(
    path: str | Path, column_map: Mapping[str, str] | None = None
) -> list[RawMonthlyRecord]:
    """Read a monthly price/dividend/earnings/CPI file.

    Rows before the header are ignored (the header is the first row naming every
    mandatory column), as are trailing rows with an empty date cell. Records are
    returned in date order and must cover consecutive months.
    """
    cmap = dict(DEFAULT_COLUMNS)
    if column_map:
        cmap.update(column_map)
    wanted = {key: cmap[key].strip().lower() for key in MANDATORY}

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))

    header_row = None
    for i, row in enumerate(rows):
        names = [c.strip().lower() for c in row]
        if all(w in names for w in wanted.values()):
            header_row = i
            positions = {key: names.index(w) for key, w in wanted.items()}
            break
    if header_row is None:
        first = rows[0] if rows else []
        names = [c.strip().lower() for c in first]
        missing = [cmap[k] for k, w in wanted.items() if w not in names]
        raise SchemaError(f"{path}: missing column(s) {missing}")

    records = []
    for i in range(header_row + 1, len(rows)):
        row = rows[i]
        rownum = i + 1
        if not row or all(not c.strip() for c in row):
            continue
        cell = lambda key: row[positions[key]] if positions[key] < len(row) else ""
        date_text = cell("date")
        if not date_text.strip():
            continue
        try:
            date = parse_date(date_text)
        except ValueError:
            raise ParseError(rownum, cmap["date"], date_text, "bad date") from None
        price = _to_float(cell("price"), rownum, cmap["price"], True)
        dividend = _to_float(cell("dividend"), rownum, cmap["dividend"], False)
        earnings = _to_float(cell("earnings"), rownum, cmap["earnings"], False)
        cpi = _to_float(cell("cpi"), rownum, cmap["cpi"], True)
        if price <= 0:
            raise ParseError(rownum, cmap["price"], cell("price"), "price must be positive")
        if cpi <= 0:
            raise ParseError(rownum, cmap["cpi"], cell("cpi"), "CPI must be positive")
        records.append(RawMonthlyRecord(date, price, dividend, earnings, cpi))

    records.sort(key=lambda r: r.date.index())
    check_continuity(r.date for r in records)
    return records


def check_continuity(dates: Iterable[YearMonth]) -> None:
    prev = None
    for d in dates:
        if prev is not None:
            if d.index() == prev.index():
                raise ContinuityError(d, f"duplicate month {d}")
            if d.index() != prev.index() + 1:
                raise ContinuityError(prev.shift(1))
        prev = d


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MarketSeries:
    """Aligned monthly real series and every ratio derived from them.

    Dividends and earnings are monthly flows (the annualized source values
    divided by 12). Undefined entries are NaN.
    """

    dates: tuple[YearMonth, ...]
    real_price: np.ndarray
    real_dividend: np.ndarray
    real_earnings: np.ndarray
    cape: np.ndarray  # trailing average of real earnings, <e>_t
    log_price: np.ndarray
    log_ep: np.ndarray  # log <e>_t - p_t
    log_dp: np.ndarray  # d_{t-1} - p_t
    log_gross_return: np.ndarray  # H_t, NaN at the last month
    base_month: YearMonth
    window: int = CAPE_WINDOW
    spliced: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.dates)

    def index_of(self, date: YearMonth | tuple[int, int]) -> int:
        idx = YearMonth(*date).index() - self.dates[0].index()
        if not 0 <= idx < len(self.dates):
            raise RangeError(f"{YearMonth(*date)} outside sample {self.dates[0]}..{self.dates[-1]}")
        return idx

    @property
    def mu_proxy(self) -> np.ndarray:
        """p_t - p_{t-1}, NaN at t = 0."""
        out = np.full(len(self), np.nan)
        out[1:] = np.diff(self.log_price)
        return out


def trailing_mean(values: np.ndarray, window: int = CAPE_WINDOW) -> np.ndarray:
    """Arithmetic mean of the ``window`` values ending at each t (inclusive).

    NaN where fewer than ``window`` values are available or any is missing.
    """
    v = np.asarray(values, dtype=float)
    out = np.full(v.shape, np.nan)
    if window < 1 or len(v) < window:
        return out
    # direct window sums keep the result exact to rounding of one window
    means = np.lib.stride_tricks.sliding_window_view(v, window).sum(axis=1) / window
    out[window - 1 :] = means
    return out


def cape(series: MarketSeries, window: int = CAPE_WINDOW) -> np.ndarray:
    """Trailing ``window``-month arithmetic average of real earnings."""
    return trailing_mean(series.real_earnings, window)


def _log_positive(a: np.ndarray) -> np.ndarray:
    out = np.full(a.shape, np.nan)
    ok = np.isfinite(a) & (a > 0)
    out[ok] = np.log(a[ok])
    return out


def build_series(
    dates: Sequence[YearMonth],
    real_price: np.ndarray,
    real_dividend: np.ndarray,
    real_earnings: np.ndarray,
    base_month: YearMonth,
    window: int = CAPE_WINDOW,
    log_ep_override: Mapping[YearMonth, float] | None = None,
) -> MarketSeries:
    """Assemble a :class:`MarketSeries` from real monthly flows."""
    P = np.asarray(real_price, dtype=float)
    D = np.asarray(real_dividend, dtype=float)
    E = np.asarray(real_earnings, dtype=float)
    n = len(P)
    dates = tuple(YearMonth(*d) for d in dates)
    ebar = trailing_mean(E, window)
    p = np.log(P)
    log_ep = _log_positive(ebar) - p
    nonpos = np.isfinite(ebar) & (ebar <= 0)
    if nonpos.any():
        logger.info("10-year average earnings non-positive at %d months; log EP undefined there", nonpos.sum())

    spliced = np.zeros(n, dtype=bool)
    if log_ep_override:
        for i, d in enumerate(dates):
            v = log_ep_override.get(d)
            if v is not None and np.isfinite(v):
                log_ep[i] = v
                spliced[i] = True

    log_dp = np.full(n, np.nan)
    log_dp[1:] = _log_positive(D[:-1]) - p[1:]

    H = np.full(n, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        H[:-1] = np.log(P[1:] + D[:-1]) - p[:-1]

    return MarketSeries(
        dates=dates,
        real_price=_readonly(P),
        real_dividend=_readonly(D),
        real_earnings=_readonly(E),
        cape=_readonly(ebar),
        log_price=_readonly(p),
        log_ep=_readonly(log_ep),
        log_dp=_readonly(log_dp),
        log_gross_return=_readonly(H),
        base_month=YearMonth(*base_month),
        window=window,
        spliced=spliced,
    )


def deflate(
    raw: Sequence[RawMonthlyRecord],
    base_month: YearMonth | tuple[int, int] | None = None,
    window: int = CAPE_WINDOW,
    log_ep_override: Mapping[YearMonth, float] | None = None,
) -> MarketSeries:
    """Convert nominal records to real terms at the CPI of ``base_month``.

    ``base_month`` defaults to the last month in the sample. Dividends and
    earnings are converted from annualized rates to monthly flows.
    """
    if not raw:
        raise RangeError("no records")
    dates = [r.date for r in raw]
    if base_month is None:
        base_month = dates[-1]
    base_month = YearMonth(*base_month)
    idx = base_month.index() - dates[0].index()
    if not 0 <= idx < len(dates):
        raise RangeError(f"base month {base_month} outside sample {dates[0]}..{dates[-1]}")
    cpi = np.array([r.cpi for r in raw])
    factor = cpi[idx] / cpi
    P = np.array([r.nominal_price for r in raw]) * factor
    D = np.array([r.nominal_dividend for r in raw]) * factor / 12.0
    E = np.array([r.nominal_earnings for r in raw]) * factor / 12.0
    return build_series(dates, P, D, E, base_month, window, log_ep_override)


def load_market(
    path: str | Path,
    column_map: Mapping[str, str] | None = None,
    base_month=None,
    window: int = CAPE_WINDOW,
    log_ep_source: str | Path | None = None,
) -> MarketSeries:
    """Parse, deflate and derive in one call.

    ``log_ep_source`` names an optional CSV with ``date`` and ``logEP`` columns
    whose values replace the computed log EP (used when the index lacks its
    own earnings, e.g. CRSP value-weighted data with S&P ratios spliced in).
    """
    raw = parse_market_csv(path, column_map)
    override = read_log_ep_source(log_ep_source) if log_ep_source else None
    return deflate(raw, base_month, window, override)


def read_log_ep_source(path: str | Path) -> dict[YearMonth, float]:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = {f.strip().lower(): f for f in reader.fieldnames or []}
        if "date" not in fields or "logep" not in fields:
            raise SchemaError(f"{path}: need columns 'date' and 'logEP'")
        for i, row in enumerate(reader, 2):
            text = row[fields["logep"]]
            if not text.strip():
                continue
            out[parse_date(row[fields["date"]])] = _to_float(text, i, "logEP", True)
    return out


def log_gross_return(series: MarketSeries, t: int) -> float:
    """H_t = log(P_{t+1} + D_t) - log P_t."""
    if not 0 <= t < len(series) - 1:
        raise RangeError(f"H_t needs t+1 in range; got t={t} for {len(series)} months")
    P, D = series.real_price, series.real_dividend
    if not P[t + 1] + D[t] > 0:
        raise RangeError(f"P_(t+1) + D_t not positive at t={t}")
    return math.log(P[t + 1] + D[t]) - math.log(P[t])


class GrossYield(NamedTuple):
    total: float
    price_part: float
    dividend_part: float


def gross_yield(series: MarketSeries, t: int, h: int) -> GrossYield:
    """Average monthly log gross return over ``h`` months from ``t``, with its
    split into a price part (p_{t+h}-p_t)/h and a dividend part."""
    if h < 1 or t < 0 or t + h > len(series) - 1:
        raise RangeError(f"y_(t,h) needs t+h in range; got t={t}, h={h}")
    P, D, p = series.real_price, series.real_dividend, series.log_price
    total = sum(log_gross_return(series, t + i) for i in range(h)) / h
    price = (p[t + h] - p[t]) / h
    div = sum(math.log1p(D[t + i] / P[t + 1 + i]) for i in range(h)) / h
    return GrossYield(total, price, div)


def yield_components(series: MarketSeries, h: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`gross_yield` for every start month.

    Returns (total, price, dividend) arrays of length ``len(series)``, NaN where
    t+h falls outside the sample.
    """
    n = len(series)
    total = np.full(n, np.nan)
    price = np.full(n, np.nan)
    div = np.full(n, np.nan)
    if h < 1 or h >= n:
        return total, price, div
    p = series.log_price
    P, D = series.real_price, series.real_dividend
    with np.errstate(invalid="ignore"):
        dterm = np.log1p(D[:-1] / P[1:])
    H = series.log_gross_return[:-1]
    cH = np.concatenate(([0.0], np.cumsum(H)))
    cD = np.concatenate(([0.0], np.cumsum(dterm)))
    m = n - h
    total[:m] = (cH[h:] - cH[:-h]) / h
    price[:m] = (p[h:] - p[:m]) / h
    div[:m] = (cD[h:] - cD[:-h]) / h
    return total, price, div


DERIVED_COLUMNS = ("date", "P", "D", "E", "CAPE", "logEP", "logDP", "H")


def _fmt(v: float) -> str:
    return "" if not np.isfinite(v) else repr(float(v))


def write_derived_csv(series: MarketSeries, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DERIVED_COLUMNS)
        for i, d in enumerate(series.dates):
            w.writerow(
                [
                    str(d),
                    _fmt(series.real_price[i]),
                    _fmt(series.real_dividend[i]),
                    _fmt(series.real_earnings[i]),
                    _fmt(series.cape[i]),
                    _fmt(series.log_ep[i]),
                    _fmt(series.log_dp[i]),
                    _fmt(series.log_gross_return[i]),
                ]
            )


def write_records_csv(records: Sequence[RawMonthlyRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Date", "P", "D", "E", "CPI"])
        for r in records:
            w.writerow(
                [str(r.date), _fmt(r.nominal_price), _fmt(r.nominal_dividend), _fmt(r.nominal_earnings), _fmt(r.cpi)]
            )
