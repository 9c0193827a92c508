"""Nonparametric estimators: Kaplan-Meier failure and Aalen-Johansen CIF.

These serve both as figure data and as model-free oracles for the
standardized estimates. Ties are handled events-first: at a time with
both events and censorings, the censored subjects are still counted at
risk. Both estimators are invariant to row order.
"""
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .dataset import SurvivalFrame


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function with at-risk bookkeeping.

    ``values[j]`` applies on [times[j], times[j+1]); ``start_value``
    applies before the first jump. ``variance`` carries the pointwise
    Greenwood variance where available (Kaplan-Meier), for plotting.
    """

    times: tuple
    values: tuple
    n_at_risk: tuple
    start_value: float
    variance: tuple = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size and not np.all(np.diff(t) > 0):
            raise ValueError("jump times must be strictly increasing")
        object.__setattr__(self, "times", tuple(float(v) for v in t))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "n_at_risk", tuple(int(v) for v in self.n_at_risk))
        if self.variance is not None:
            object.__setattr__(self, "variance", tuple(float(v) for v in self.variance))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        vals = np.concatenate([[self.start_value], self.values])
        out = vals[idx + 1]
        return float(out) if out.ndim == 0 else out


def _group_indices(frame, group):
    df = frame.data if isinstance(frame, SurvivalFrame) else frame
    if group is None:
        return {"all": np.arange(len(df))}
    if group not in df.columns:
        raise ValueError(f"group column '{group}' not found")
    values = df[group]
    return {val: np.flatnonzero((values == val).to_numpy()) for val in sorted(values.unique())}


def _risk_table(time, status):
    # unique times ascending with event counts per code and at-risk counts
    order = np.argsort(time, kind="stable")
    t, s = time[order], status[order]
    uniq, start = np.unique(t, return_index=True)
    n_at_risk = len(t) - start
    return uniq, start, n_at_risk, s


def kaplan_meier_failure(frame, declaration, group=None):
    """Kaplan-Meier failure curves 1 - prod(1 - d_j/n_j), per group.

    ``declaration`` supplies per-row (analysis_time, d); typically an
    all-cause declaration. Returns {group_value: StepFunction} on the
    failure scale with Greenwood variance attached.
    """
    time = np.asarray(declaration.analysis_time, dtype=float)
    d = np.asarray(declaration.d, dtype=int)
    out = {}
    for label, idx in _group_indices(frame, group).items():
        if idx.size == 0:
            raise ValueError(f"empty group {label!r}")
        uniq, start, n_at_risk, s = _risk_table(time[idx], d[idx])
        d_at = np.add.reduceat(s, start)
        has_event = d_at > 0
        surv = 1.0
        greenwood = 0.0
        times, values, risks, variances = [], [], [], []
        for j in np.flatnonzero(has_event):
            nj, dj = int(n_at_risk[j]), int(d_at[j])
            surv *= 1.0 - dj / nj
            if nj > dj:
                greenwood += dj / (nj * (nj - dj))
            times.append(uniq[j])
            values.append(1.0 - surv)
            risks.append(nj)
            variances.append(surv * surv * greenwood)
        out[label] = StepFunction(
            times=tuple(times),
            values=tuple(values),
            n_at_risk=tuple(risks),
            start_value=0.0,
            variance=tuple(variances),
        )
    return out


def aalen_johansen_cif(frame, exit_time, group=None):
    """Aalen-Johansen cause-specific cumulative incidence per group.

    F_k(t) = sum_{t_j <= t} S(t_j-) d_kj / n_j with S the all-cause
    Kaplan-Meier survival. Events after exit_time are censored there.
    Returns {group_value: {cause_code: StepFunction}}; every cause
    shares the same jump times so the curves add with survival to 1.
    """
    if exit_time <= 0:
        raise ValueError("exit_time must be positive")
    raw_time = frame.time
    event = frame.event_code
    time = np.minimum(raw_time, float(exit_time))
    status = np.where(raw_time <= exit_time, event, 0)
    causes = sorted(int(c) for c in np.unique(status) if c != 0)
    out = {}
    for label, idx in _group_indices(frame, group).items():
        if idx.size == 0:
            raise ValueError(f"empty group {label!r}")
        uniq, start, n_at_risk, s = _risk_table(time[idx], status[idx])
        counts = {k: np.add.reduceat((s == k).astype(int), start) for k in causes}
        any_event = np.zeros(len(uniq), dtype=bool)
        for k in causes:
            any_event |= counts[k] > 0
        surv = 1.0
        cif = {k: 0.0 for k in causes}
        times, risks = [], []
        values = {k: [] for k in causes}
        for j in np.flatnonzero(any_event):
            nj = int(n_at_risk[j])
            d_total = 0
            for k in causes:
                dkj = int(counts[k][j])
                cif[k] += surv * dkj / nj
                d_total += dkj
            surv *= 1.0 - d_total / nj
            times.append(uniq[j])
            risks.append(nj)
            for k in causes:
                values[k].append(cif[k])
        out[label] = {
            k: StepFunction(
                times=tuple(times),
                values=tuple(values[k]),
                n_at_risk=tuple(risks),
                start_value=0.0,
            )
            for k in causes
        }
    return out


def steps_to_frame(steps):
    """Long-format export: time, estimate, n_at_risk, group, cause.

    ``steps`` maps group -> StepFunction (cause labeled "all") or
    group -> {cause: StepFunction}.
    """
    rows = []
    for group, entry in steps.items():
        per_cause = entry if isinstance(entry, dict) else {"all": entry}
        for cause, sf in per_cause.items():
            for t, v, n in zip(sf.times, sf.values, sf.n_at_risk):
                rows.append(
                    {"time": t, "estimate": v, "n_at_risk": n, "group": group, "cause": cause}
                )
    return pd.DataFrame(rows, columns=["time", "estimate", "n_at_risk", "group", "cause"])
