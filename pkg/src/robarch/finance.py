"""OHLCV panel ingestion and the functional feature pipeline.

The pipeline turns daily close prices into two per-symbol time series,
window-N simple returns r_N(t) = (X_t - X_{t-N}) / X_{t-N} on the symbol's
own trading calendar and rolling market betas over the last N paired
return observations, then smooths both onto a shared basis and assembles
a standardized bivariate functional dataset (columns: returns block, then
beta block).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InputError
from .fdbasis import BasisSystem, combine_variables, smooth, standardize

DEFAULT_WINDOW = 250
DEFAULT_START_DATE = "2000-01-01"
DEFAULT_MAX_MISSING = 0.2
DEFAULT_BASIS_M = 13

SECTOR_CODES = ("CD", "CS", "E", "F", "HC", "I", "M", "RE", "T", "U")
UNKNOWN_SECTOR = "unknown"

_OHLCV_COLUMNS = ("open", "high", "low", "close", "volume")


@dataclass
class OhlcvPanel:
    """Close prices (dates by symbols), the index series and sector map.

    rejects collects human-readable notes about rows or files that were
    skipped during parsing.
    """

    prices: pd.DataFrame
    index_prices: pd.Series
    sectors: dict[str, str] = field(default_factory=dict)
    rejects: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.prices.empty:
            raise InputError("panel holds no symbols")
        if self.index_prices.empty:
            raise InputError("panel holds no index series")
        self.prices = self.prices.sort_index()
        self.index_prices = self.index_prices.sort_index()

    @property
    def symbols(self) -> list[str]:
        return list(self.prices.columns)

    def sector_of(self, symbol: str) -> str:
        sector = self.sectors.get(symbol, UNKNOWN_SECTOR)
        return sector if sector in SECTOR_CODES else UNKNOWN_SECTOR


def _parse_price_frame(frame: pd.DataFrame, origin: str, rejects: list[str]) -> pd.Series:
    """Extract a clean close-price series from one symbol's rows."""
    frame = frame.copy()
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    if "date" not in frame.columns or "close" not in frame.columns:
        raise InputError(f"{origin}: need at least date and close columns")
    dates = pd.to_datetime(frame["date"], errors="coerce")
    closes = pd.to_numeric(frame["close"], errors="coerce")
    bad = dates.isna() | closes.isna()
    if bad.any():
        for pos in np.flatnonzero(bad.to_numpy()):
            rejects.append(f"{origin}: unparseable row {pos + 2}")
    series = pd.Series(closes[~bad].to_numpy(), index=dates[~bad])
    if series.index.duplicated().any():
        dupes = series.index[series.index.duplicated()].unique()
        raise InputError(f"{origin}: duplicate dates {list(dupes[:3])}")
    return series.sort_index()


def _load_sector_map(path) -> dict[str, str]:
    frame = pd.read_csv(path)
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    if "symbol" not in frame.columns or "sector" not in frame.columns:
        raise InputError(f"{path}: sector map needs symbol and sector columns")
    return {str(s): str(g) for s, g in zip(frame["symbol"], frame["sector"])}


def load_panel(path, fmt: str, index_path, sectors_path=None) -> OhlcvPanel:
    """Load an OHLCV panel.

    fmt "per-symbol": path is a directory of <symbol>.csv files with
    columns (date, open, high, low, close, volume).  fmt "long": path is
    one CSV with a leading symbol column.  The index series CSV (date,
    close) is mandatory; the sector map CSV (symbol, sector) optional.
    """
    rejects: list[str] = []
    series_by_symbol: dict[str, pd.Series] = {}
    if fmt == "per-symbol":
        directory = Path(path)
        if not directory.is_dir():
            raise InputError(f"{path} is not a directory of per-symbol CSVs")
        files = sorted(directory.glob("*.csv"))
        if not files:
            raise InputError(f"{path} holds no CSV files")
        for file in files:
            frame = _read_csv(file)
            series_by_symbol[file.stem] = _parse_price_frame(frame, file.name, rejects)
    elif fmt == "long":
        frame = _read_csv(path)
        frame.columns = [str(c).strip().lower() for c in frame.columns]
        if "symbol" not in frame.columns:
            raise InputError(f"{path}: long format needs a symbol column")
        for symbol, group in frame.groupby("symbol", sort=True):
            series_by_symbol[str(symbol)] = _parse_price_frame(
                group.drop(columns=["symbol"]), f"{path}:{symbol}", rejects
            )
    else:
        raise InputError(f"unknown panel format {fmt!r}")

    if index_path is None:
        raise InputError("an index series CSV is required")
    index_prices = _parse_price_frame(_read_csv(index_path), str(index_path), rejects)
    if index_prices.empty:
        raise InputError("index series is empty")

    sectors = _load_sector_map(sectors_path) if sectors_path else {}
    prices = pd.DataFrame(series_by_symbol)
    return OhlcvPanel(prices=prices, index_prices=index_prices,
                      sectors=sectors, rejects=rejects)


def _read_csv(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def filter_missing(panel: OhlcvPanel, start_date=DEFAULT_START_DATE,
                   max_missing: float = DEFAULT_MAX_MISSING) -> OhlcvPanel:
    """Restrict to the index calendar from start_date on and drop symbols
    with more than max_missing missing observations on that calendar."""
    if not 0.0 <= max_missing < 1.0:
        raise InputError("max_missing must lie in [0, 1)")
    start = pd.Timestamp(start_date)
    calendar = panel.index_prices.index[panel.index_prices.index >= start]
    if calendar.empty:
        raise InputError("no index dates on or after the start date")
    prices = panel.prices.reindex(calendar)
    fraction_missing = prices.isna().mean(axis=0)
    keep = fraction_missing[fraction_missing <= max_missing].index
    if keep.empty:
        raise InputError("every symbol exceeds the missing-data threshold")
    dropped = sorted(set(panel.prices.columns) - set(keep))
    rejects = panel.rejects + [
        f"{sym}: dropped ({fraction_missing[sym]:.1%} missing)" for sym in dropped
    ]
    return OhlcvPanel(
        prices=prices[keep],
        index_prices=panel.index_prices[panel.index_prices.index >= start],
        sectors=dict(panel.sectors),
        rejects=rejects,
    )


def aggregate_returns(series: pd.Series, window: int = DEFAULT_WINDOW) -> pd.Series:
    """Window-N simple returns on the series' own observation calendar.

    The lag counts trading observations, not calendar days; the first N
    values are undefined (NaN).
    """
    if window < 1:
        raise InputError("window must be >= 1")
    obs = series.dropna()
    if obs.empty:
        raise InputError("series has no observations")
    return obs / obs.shift(window) - 1.0


def rolling_beta(stock_returns: pd.Series, index_returns: pd.Series,
                 window: int = DEFAULT_WINDOW) -> pd.Series:
    """Rolling market beta over the last `window` paired observations.

    beta_t = sample Cov(stock, index) / sample Var(index) on the joined
    calendar; windows with zero index variance yield NaN.
    """
    if window < 2:
        raise InputError("window must be >= 2 for sample moments")
    joined = pd.concat([stock_returns, index_returns], axis=1, join="inner").dropna()
    if joined.empty:
        return pd.Series(dtype=float)
    stock, index = joined.iloc[:, 0], joined.iloc[:, 1]
    cov = stock.rolling(window).cov(index)
    var = index.rolling(window).var()
    beta = cov / var.where(var > 0.0)
    return beta


@dataclass
class FeaturePanel:
    """Aligned wide frames of window returns and rolling betas."""

    returns: pd.DataFrame
    betas: pd.DataFrame
    window: int
    sectors: dict[str, str] = field(default_factory=dict)

    @property
    def symbols(self) -> list[str]:
        return list(self.returns.columns)


def build_features(panel: OhlcvPanel, window: int = DEFAULT_WINDOW) -> FeaturePanel:
    """Per-symbol window returns and betas against the panel index."""
    index_r = aggregate_returns(panel.index_prices, window)
    returns = {}
    betas = {}
    for symbol in panel.symbols:
        r = aggregate_returns(panel.prices[symbol], window)
        returns[symbol] = r
        betas[symbol] = rolling_beta(r, index_r, window)
    calendar = panel.index_prices.index
    return FeaturePanel(
        returns=pd.DataFrame(returns).reindex(calendar),
        betas=pd.DataFrame(betas).reindex(calendar),
        window=window,
        sectors={s: panel.sector_of(s) for s in panel.symbols},
    )


def build_functional_panel(features: FeaturePanel, basis_family: str = "cubic_bspline",
                           m: int = DEFAULT_BASIS_M):
    """Smooth both feature series onto a shared basis and standardize.

    Dates map affinely onto [0, 1] over the feature calendar; every symbol
    is fit on its own observed points.  Returns (dataset, dropped) where
    dropped lists symbols lacking the m observations either series needs.
    """
    calendar = features.returns.index
    if len(calendar) < 2:
        raise InputError("feature calendar is too short")
    t0 = calendar[0].value
    t1 = calendar[-1].value
    span = float(t1 - t0)
    if span <= 0:
        raise InputError("feature calendar must span more than one date")

    def to_unit(dates) -> np.ndarray:
        return (dates.view("int64") - t0) / span

    basis = BasisSystem.create(basis_family, m, (0.0, 1.0))
    kept: list[str] = []
    dropped: list[str] = []
    r_samples = []
    b_samples = []
    for symbol in features.symbols:
        r = features.returns[symbol].dropna()
        b = features.betas[symbol].dropna()
        if len(r) < m or len(b) < m:
            dropped.append(symbol)
            continue
        kept.append(symbol)
        r_samples.append((to_unit(r.index), r.to_numpy()))
        b_samples.append((to_unit(b.index), b.to_numpy()))
    if not kept:
        raise InputError("no symbol has enough observations for the basis")

    returns_ds = smooth(r_samples, basis, labels=kept)
    betas_ds = smooth(b_samples, basis, labels=kept)
    dataset = combine_variables([returns_ds, betas_ds],
                                variable_labels=["returns", "beta"])
    return standardize(dataset), dropped
