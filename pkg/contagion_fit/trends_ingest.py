"""
Loading daily search-interest exports into the observation vector used for fitting.

A series file is a two-column CSV: a header row (its content is only used as the
series label) followed by `YYYY-MM-DD,<value>` rows on the 0-100 interest scale.
"""

import io
import logging
import os
from dataclasses import dataclass
from datetime import date, timedelta
from typing import BinaryIO, Optional, Union

import numpy as np
import pandas as pd

from contagion_fit.errors import InputError

logger = logging.getLogger(__name__)

INTEREST_MIN = 0.0
INTEREST_MAX = 100.0
# Trends exports write "<1" for days with interest below one unit.
LOW_INTEREST_TOKEN = "<1"
LOW_INTEREST_VALUE = 0.5


@dataclass(frozen=True)
class InterestSeries:
    dates: tuple
    interest: tuple
    label: str = "interest"

    def __post_init__(self) -> None:
        if len(self.dates) == 0:
            raise InputError("Interest series has no points")
        if len(self.dates) != len(self.interest):
            raise InputError("Interest series dates and values differ in length")
        for previous, current in zip(self.dates, self.dates[1:]):
            if current <= previous:
                raise InputError(f"Dates are not strictly increasing at {current}")
        for day, value in zip(self.dates, self.interest):
            if not INTEREST_MIN <= value <= INTEREST_MAX:
                raise InputError(f"Interest {value} on {day} is outside [0, 100]")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.interest, dtype=float)

    def is_gap_free(self) -> bool:
        return all(
            current - previous == timedelta(days=1)
            for previous, current in zip(self.dates, self.dates[1:])
        )

    def to_series(self) -> pd.Series:
        index = pd.DatetimeIndex(pd.to_datetime(list(self.dates)), name="date")
        return pd.Series(self.values, index=index, name=self.label)

    @classmethod
    def from_series(cls, series: pd.Series, label: Optional[str] = None) -> "InterestSeries":
        return cls(
            dates=tuple(ts.date() for ts in series.index),
            interest=tuple(float(v) for v in series.to_numpy()),
            label=label if label is not None else str(series.name),
        )

    def to_csv(self) -> str:
        """Serialize back to the `date,<label>` format accepted by parse_csv."""
        frame = pd.DataFrame(
            {
                "date": [d.isoformat() for d in self.dates],
                self.label: list(self.interest),
            }
        )
        return frame.to_csv(index=False, lineterminator="\n")


@dataclass(frozen=True)
class ObservationWindow:
    """
    Daily observations starting at the first strictly positive interest value.

    The model is initialised `t0_offset` days before `start_date`, so observation k
    (0-based) is compared against model incidence on day k + 1.
    """

    observations: tuple
    start_date: date
    label: str = "interest"
    t0_offset: int = 1

    def __post_init__(self) -> None:
        if len(self.observations) == 0:
            raise InputError("Observation window is empty")
        if not self.observations[0] > 0:
            raise InputError("Observation window must start at a positive value")
        if any(value < 0 for value in self.observations):
            raise InputError("Observations must be non-negative")
        if self.t0_offset != 1:
            raise InputError("Model initialisation must precede the first observation by one day")

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.observations, dtype=float)

    @property
    def dates(self) -> list:
        return [self.start_date + timedelta(days=k) for k in range(len(self))]

    @property
    def model_start_date(self) -> date:
        return self.start_date - timedelta(days=self.t0_offset)


def _read_source(source: Union[bytes, str, BinaryIO]) -> str:
    raw = source.read() if hasattr(source, "read") else source
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8-sig")
        except UnicodeDecodeError as e:
            raise InputError(f"Input is not UTF-8 text: {e}")
    return raw


def parse_csv(source: Union[bytes, str, BinaryIO], label: Optional[str] = None) -> InterestSeries:
    """
    Parse a `date,value` CSV export into an InterestSeries sorted by date.

    Raises InputError for an empty file, malformed rows (with their line number),
    values outside [0, 100] and duplicate dates.
    """
    text = _read_source(source)
    if not text.strip():
        raise InputError("Input file is empty")

    try:
        frame = pd.read_csv(
            io.StringIO(text),
            header=0,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            skipinitialspace=True,
        )
    except pd.errors.ParserError as e:
        raise InputError(f"Malformed CSV: {e}")

    if frame.shape[1] != 2:
        raise InputError(f"Expected 2 columns (date,value), found {frame.shape[1]}")

    frame = frame.fillna("")
    frame.columns = ["date", "value"]
    frame["line"] = np.arange(len(frame)) + 2
    # Blank lines carry no data.
    frame = frame[(frame["date"].str.strip() != "") | (frame["value"].str.strip() != "")]
    if frame.empty:
        raise InputError("Input file has a header but no data rows")

    dates = pd.to_datetime(frame["date"].str.strip(), format="%Y-%m-%d", errors="coerce")
    bad_dates = dates.isna()
    if bad_dates.any():
        row = frame[bad_dates].iloc[0]
        logger.warning(f"Rejecting line {row['line']}: invalid date {row['date']!r}")
        raise InputError(f"Malformed row at line {row['line']}: invalid date {row['date']!r}")

    tokens = frame["value"].str.strip().replace(LOW_INTEREST_TOKEN, str(LOW_INTEREST_VALUE))
    values = pd.to_numeric(tokens, errors="coerce")
    bad_values = values.isna()
    if bad_values.any():
        row = frame[bad_values].iloc[0]
        logger.warning(f"Rejecting line {row['line']}: invalid value {row['value']!r}")
        raise InputError(f"Malformed row at line {row['line']}: invalid value {row['value']!r}")

    out_of_range = (values < INTEREST_MIN) | (values > INTEREST_MAX)
    if out_of_range.any():
        line = frame.loc[out_of_range[out_of_range].index[0], "line"]
        value = values[out_of_range].iloc[0]
        raise InputError(f"Value {value} at line {line} is out of range [0, 100]")

    duplicated = dates.duplicated()
    if duplicated.any():
        line = frame.loc[duplicated[duplicated].index[0], "line"]
        raise InputError(f"Duplicate date {dates[duplicated].iloc[0].date()} at line {line}")

    series = pd.Series(values.to_numpy(dtype=float), index=pd.DatetimeIndex(dates))
    series = series.sort_index(kind="stable")

    if label is None:
        header = text.splitlines()[0].split(",", 1)
        label = header[1].strip() if len(header) > 1 and header[1].strip() else "interest"
    return InterestSeries.from_series(series, label=label)


def load_csv(path: Union[str, os.PathLike], label: Optional[str] = None) -> InterestSeries:
    if not os.path.exists(path):
        raise InputError(f"Input file not found: {path}")
    with open(path, "rb") as f:
        return parse_csv(f, label=label)


def fill_gaps(series: InterestSeries) -> InterestSeries:
    """Insert missing calendar days with zero interest."""
    if series.is_gap_free():
        return series
    filled = series.to_series().asfreq("D", fill_value=0.0)
    return InterestSeries.from_series(filled, label=series.label)


def to_observation_window(series: InterestSeries) -> ObservationWindow:
    """Drop leading zero-interest days; trailing zeros stay in the likelihood."""
    values = series.values
    positive = np.flatnonzero(values > 0)
    if positive.size == 0:
        raise InputError(f"Series '{series.label}' has no positive interest values")
    first = int(positive[0])
    return ObservationWindow(
        observations=tuple(float(v) for v in values[first:]),
        start_date=series.dates[first],
        label=series.label,
    )


def prepare_window(series: InterestSeries) -> ObservationWindow:
    return to_observation_window(fill_gaps(series))
