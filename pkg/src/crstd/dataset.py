"""Data loading, preparation rules, and survival declarations.

The preparation pipeline restricts the prostate trial to the placebo and
high-dose estrogen arms, recodes treatment and cause of death, derives
the analysis covariates, and drops incomplete rows. Survival structure
(which event code counts as failure, administrative exit time) is
declared separately so the same prepared frame can serve several
cause-specific models.
"""
import logging
import pathlib
from dataclasses import dataclass

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

TIME_COL = "dtime"
EVENT_COL = "eventType"

# status labels in the public trial file, grouped by recoded event type
ALIVE_LABELS = frozenset({"alive"})
PROSTATE_DEATH_LABELS = frozenset({"dead - prostatic ca"})
OTHER_DEATH_LABELS = frozenset(
    {
        "dead - heart or vascular",
        "dead - cerebrovascular",
        "dead - pulmonary embolus",
        "dead - other ca",
        "dead - respiratory disease",
        "dead - other specific non-ca",
        "dead - unspecified non-ca",
        "dead - unknown cause",
    }
)

# columns that must be complete for a row to enter the analysis
MODEL_COLUMNS = ("rx", "dtime", "status", "hg", "age", "pf", "hx")

# minimal typing for the raw source file; load_csv coerces and reports
# the first offending cell on failure
PROSTATE_SCHEMA = {"dtime": "float", "age": "float", "hg": "float", "hx": "float"}


@dataclass(frozen=True)
class SurvivalFrame:
    """Immutable rectangular dataset with follow-up time and event code.

    Wraps a pandas DataFrame. The time column is ``dtime`` (months) and
    the event code column is ``eventType`` (0 alive, 1 prostate death,
    2 other death); both exist only after preparation. Treat ``data``
    as read-only: preparation and declaration always copy.
    """

    data: pd.DataFrame

    @property
    def n_rows(self):
        return len(self.data)

    @property
    def columns(self):
        return list(self.data.columns)

    @property
    def time(self):
        if TIME_COL not in self.data.columns:
            raise ValueError(f"frame has no '{TIME_COL}' column")
        return self.data[TIME_COL].to_numpy(dtype=float)

    @property
    def event_code(self):
        if EVENT_COL not in self.data.columns:
            raise ValueError(f"frame has no '{EVENT_COL}' column; run prepare first")
        return self.data[EVENT_COL].to_numpy(dtype=int)

    def to_csv(self, path):
        """Write the frame back to CSV for audit."""
        self.data.to_csv(path, index=False)


@dataclass(frozen=True)
class SurvivalDeclaration:
    """Survival structure: failure cause and administrative exit.

    ``analysis_time`` and ``d`` are the per-row derived quantities
    (time censored at ``exit_time``; event indicator). They are None on
    declarations reconstructed from a stored model artifact, where only
    the metadata is needed.
    """

    failure_code: tuple
    exit_time: float
    analysis_time: np.ndarray = None
    d: np.ndarray = None

    @property
    def n_events(self):
        return int(self.d.sum())


def load_csv(path, schema=None):
    """Load a delimited text file into a SurvivalFrame.

    Parameters
    ----------
    path : str or Path
        Comma-separated file, first row header, '.' decimal mark, empty
        cell = missing.
    schema : dict, optional
        Mapping column -> {'float', 'int', 'str'}. Listed columns must
        be present; numeric kinds are coerced with the first
        unparseable cell reported by row and column.
    """
    path = pathlib.Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise ValueError(f"empty file: {path}") from None

    if schema:
        missing = [c for c in schema if c not in df.columns]
        if missing:
            raise ValueError(f"missing required columns: {', '.join(missing)}")
        for col, kind in schema.items():
            if kind not in ("float", "int", "str"):
                raise ValueError(f"unknown schema kind {kind!r} for column '{col}'")
            if kind == "str":
                continue
            coerced = pd.to_numeric(df[col], errors="coerce")
            bad = coerced.isna() & df[col].notna()
            if bad.any():
                row = int(np.argmax(bad.to_numpy()))
                raise ValueError(
                    f"unparseable value {df[col].iloc[row]!r} in column '{col}', row {row}"
                )
            df[col] = coerced.astype(float if kind == "float" else "Int64")
    return SurvivalFrame(df)


def _is_prepared(df):
    if EVENT_COL not in df.columns or "rx" not in df.columns:
        return False
    rx = pd.unique(df["rx"].dropna())
    return len(rx) > 0 and set(np.asarray(rx, dtype=object)) <= {0, 1}


def _recode_arms(df):
    # keep placebo and 5.0 mg estrogen only; recode 0 = placebo, 1 = DES
    rx = df["rx"]
    if pd.api.types.is_numeric_dtype(rx):
        kept = df[rx.isin([1, 4])].copy()
        kept["rx"] = (kept["rx"] == 4).astype(int)
    else:
        labels = rx.astype(str).str.strip()
        kept = df[labels.isin(["placebo", "5.0 mg estrogen"])].copy()
        kept["rx"] = (kept["rx"].astype(str).str.strip() == "5.0 mg estrogen").astype(int)
    return kept


def _event_type(status):
    if pd.api.types.is_numeric_dtype(status):
        code = status.to_numpy(dtype=float)
        return np.where(code == 1, 0, np.where(code == 2, 1, 2)).astype(int)
    out = np.empty(len(status), dtype=int)
    for i, label in enumerate(status.astype(str).str.strip().str.lower()):
        if label in ALIVE_LABELS:
            out[i] = 0
        elif label in PROSTATE_DEATH_LABELS:
            out[i] = 1
        elif label in OTHER_DEATH_LABELS:
            out[i] = 2
        else:
            raise ValueError(f"unknown status code {label!r}")
    return out


def _normal_activity(pf):
    if pd.api.types.is_numeric_dtype(pf):
        return (pf.to_numpy(dtype=float) == 1).astype(int)
    return (pf.astype(str).str.strip().str.lower() == "normal activity").to_numpy(dtype=int)


def prepare_prostate(frame):
    """Apply the trial preparation rules and return a new frame.

    Restricts to the placebo and DES arms (rx recoded 0/1), replaces
    zero follow-up times by 0.5 months, maps cause of death to
    eventType in {0, 1, 2}, derives hgBinary, ageCat (cut at 60 and 75,
    coded 0/1/2) with dummies ageCat1-ageCat3, normalAct, and allcause.
    Rows with missing model covariates are dropped with a logged count.
    Already-prepared frames are returned unchanged. Accepts either a
    SurvivalFrame or a bare DataFrame.
    """
    if isinstance(frame, pd.DataFrame):
        frame = SurvivalFrame(frame)
    df = frame.data
    if _is_prepared(df):
        return frame

    missing_cols = [c for c in MODEL_COLUMNS if c not in df.columns]
    if missing_cols:
        raise ValueError(f"missing required columns: {', '.join(missing_cols)}")

    kept = _recode_arms(df)
    complete = kept.dropna(subset=list(MODEL_COLUMNS))
    n_dropped = len(kept) - len(complete)
    if n_dropped:
        logger.info("dropped %d rows with missing model covariates", n_dropped)
    out = complete.copy()

    out["dtime"] = out["dtime"].astype(float)
    out.loc[out["dtime"] == 0, "dtime"] = 0.5

    out[EVENT_COL] = _event_type(out["status"])
    out["allcause"] = (out[EVENT_COL] != 0).astype(int)
    out["hgBinary"] = (out["hg"].to_numpy(dtype=float) < 12).astype(int)

    age = out["age"].to_numpy(dtype=float)
    if (age < 0).any() or (age >= 100).any():
        raise ValueError("age outside the supported range [0, 100)")
    age_cat = np.where(age < 60, 0, np.where(age < 75, 1, 2))
    out["ageCat"] = age_cat
    for i in range(3):
        out[f"ageCat{i + 1}"] = (age_cat == i).astype(int)

    out["normalAct"] = _normal_activity(out["pf"])
    return SurvivalFrame(out.reset_index(drop=True))


def declare_survival(frame, failure_code, exit_time):
    """Declare the survival structure over a prepared frame.

    Parameters
    ----------
    frame : SurvivalFrame
        Prepared frame with positive times and eventType codes.
    failure_code : int or sequence of int
        Event code(s) counted as failure; all others are censored.
    exit_time : float
        Administrative censoring bound (months). Rows with time beyond
        it are censored there; events after it do not count.
    """
    if exit_time <= 0:
        raise ValueError("exit_time must be positive")
    codes = (failure_code,) if np.isscalar(failure_code) else tuple(failure_code)
    time = frame.time
    if (time <= 0).any():
        raise ValueError("times must be strictly positive; prepare the frame first")
    event = frame.event_code
    analysis_time = np.minimum(time, float(exit_time))
    d = (np.isin(event, codes) & (time <= exit_time)).astype(int)
    return SurvivalDeclaration(
        failure_code=codes,
        exit_time=float(exit_time),
        analysis_time=analysis_time,
        d=d,
    )
