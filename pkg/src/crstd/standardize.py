"""Regression standardization over fitted cause-specific models.

Averages model-based individual predictions over the study population
under counterfactual covariate assignments (g-formula) and returns
per-timepoint estimates with delta-method standard errors: all-cause
or net failure probabilities from one model; cause-specific cumulative
incidence, restricted mean failure time, and separable-effect contrasts
from two. Integrals over [0, t] use Gauss-Legendre quadrature applied
in log time (where the hazard kernel is smooth and the Jacobian absorbs
the 1/t factor), split at the spline knots so each segment is analytic;
every grid time integrates independently. Confidence intervals are
computed on the log scale for scenario-level probabilities, RMFTs, and
ratio contrasts, and on the natural scale for differences and linear
combinations.
"""
import functools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy
from scipy.stats import norm

from . import __version__
from .fpm import design_matrix
from .spline import rcs_deriv, rcs_eval

_FD_STEP = 1e-5

# log-time span of each [0, t] integral below its upper limit; the
# truncated tail is bounded by the cumulative hazard at t*exp(-span),
# negligible whenever the boundary log-slope exceeds ~0.5
_LOG_SPAN = 40.0


@functools.lru_cache(maxsize=32)
def _leggauss(nodes):
    return np.polynomial.legendre.leggauss(nodes)


def gauss_legendre(f, a, b, nodes):
    """Integrate a vectorized callable on [a, b] by Gauss-Legendre.

    Exact for polynomials of degree <= 2*nodes - 1.
    """
    if nodes < 2:
        raise ValueError("need at least 2 quadrature nodes")
    if b < a:
        raise ValueError("integration bounds must satisfy b >= a")
    x, w = _leggauss(int(nodes))
    half = 0.5 * (b - a)
    u = half * x + 0.5 * (a + b)
    return float(half * np.dot(w, np.asarray(f(u), dtype=float)))


def _threads():
    raw = os.environ.get("CRSTD_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class AtScenario:
    """Covariate overrides applied to every row before prediction.

    assignments is a sequence of (column, value) pairs; a float value
    fixes the column, a string value copies from that source column
    (evaluated on the unmodified rows). Unlisted columns keep their
    observed values.
    """

    label: str
    assignments: tuple

    def __post_init__(self):
        norm_assignments = []
        for col, val in self.assignments:
            norm_assignments.append((str(col), val if isinstance(val, str) else float(val)))
        object.__setattr__(self, "assignments", tuple(norm_assignments))

    def apply(self, rows):
        out = rows.copy()
        sources = {}
        for col, val in self.assignments:
            if isinstance(val, str):
                if val not in rows.columns:
                    raise ValueError(f"copy source column '{val}' not found in data")
                sources[col] = rows[val].to_numpy()
        for col, val in self.assignments:
            out[col] = sources[col] if isinstance(val, str) else val
        return out

    def describe(self):
        parts = []
        for col, val in self.assignments:
            parts.append(f"{col}=~{val}" if isinstance(val, str) else f"{col}={val:g}")
        return ", ".join(parts)


@dataclass(frozen=True)
class StandardizeRequest:
    """Everything a standardization run needs.

    models: one fit (failure/survival estimands) or two cause-specific
    fits (cif/rmft). data: prepared rows to average over; row_index
    switches to non-marginal mode (that single row, no averaging).
    lincom weights run over scenario-major (scenario x cause) order.
    """

    models: tuple
    data: pd.DataFrame
    estimand: str
    scenarios: tuple
    time_grid: np.ndarray = None
    t_star: float = None
    contrast: str = None
    lincom: tuple = None
    reference: int = 0
    ci_level: float = 0.95
    nodes: int = 50
    row_index: int = None
    cause_labels: tuple = None

    def __post_init__(self):
        models = tuple(self.models)
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if self.estimand not in ("survival", "failure", "cif", "rmft"):
            raise ValueError(f"unknown estimand '{self.estimand}'")
        if self.estimand in ("survival", "failure") and len(models) != 1:
            raise ValueError(f"estimand '{self.estimand}' takes exactly one model")
        if self.estimand in ("cif", "rmft") and len(models) != 2:
            raise ValueError(f"estimand '{self.estimand}' takes exactly two models")
        if not self.scenarios:
            raise ValueError("at least one scenario is required")
        if not 0 <= self.reference < len(self.scenarios):
            raise ValueError("reference scenario index out of range")
        if self.contrast not in (None, "difference", "ratio"):
            raise ValueError(f"unknown contrast '{self.contrast}'")
        if self.contrast and len(self.scenarios) < 2:
            raise ValueError("contrasts need at least two scenarios")
        if not 0 < self.ci_level < 1:
            raise ValueError("ci_level must be in (0, 1)")
        if self.nodes < 2:
            raise ValueError("need at least 2 quadrature nodes")
        if self.estimand == "rmft":
            if self.t_star is None or self.t_star <= 0:
                raise ValueError("rmft needs a positive t_star")
            object.__setattr__(self, "time_grid", np.asarray([float(self.t_star)]))
        else:
            if self.time_grid is None:
                raise ValueError("a time grid is required")
            grid = np.atleast_1d(np.asarray(self.time_grid, dtype=float))
            if (grid < 0).any():
                raise ValueError("grid times must be nonnegative")
            object.__setattr__(self, "time_grid", grid)
        if self.row_index is not None and not 0 <= self.row_index < len(self.data):
            raise ValueError("row_index out of range")
        n_causes = len(models) if self.estimand in ("cif", "rmft") else 1
        if self.lincom is not None:
            raw = tuple(self.lincom)
            if raw and np.isscalar(raw[0]):
                raw = (raw,)
            lincom = tuple(tuple(float(w) for w in vec) for vec in raw)
            expected = len(self.scenarios) * n_causes
            for vec in lincom:
                if len(vec) != expected:
                    raise ValueError(
                        f"lincom needs {expected} weights (scenarios x causes), got {len(vec)}"
                    )
            object.__setattr__(self, "lincom", lincom)
        if self.cause_labels is None:
            labels = tuple(_cause_label(m) for m in models[:n_causes])
            object.__setattr__(self, "cause_labels", labels)
        else:
            labels = tuple(str(c) for c in self.cause_labels)
            if len(labels) != n_causes:
                raise ValueError("cause_labels length must match the cause count")
            object.__setattr__(self, "cause_labels", labels)
        # every overridden column must exist in some model's design
        known = set()
        for m in models:
            known |= set(m.spec.covariates)
        for sc in self.scenarios:
            for col, _ in sc.assignments:
                if col not in known:
                    raise ValueError(f"unknown override column '{col}'")


def _cause_label(fit):
    codes = fit.spec.declaration.failure_code
    return "cause" + "+".join(str(c) for c in codes)


@dataclass(frozen=True)
class StandardizedSeries:
    """Long-format standardized estimates with delta-method intervals.

    ``frame`` columns: time, label, cause, estimate, se, lci, uci.
    ``metadata`` is the JSON-able run manifest (request echo, node
    counts, versions, extrapolation flags).
    """

    frame: pd.DataFrame
    metadata: dict
    _evaluator: object = field(default=None, repr=False, compare=False)

    def to_csv(self, path):
        self.frame.to_csv(path, index=False)

    def write_manifest(self, path):
        import json
        import pathlib

        pathlib.Path(path).write_text(json.dumps(self.metadata, indent=1, sort_keys=True))


class _Evaluator:
    """Precomputed design/basis caches plus the standardized functional.

    The spline bases at the quadrature nodes and the per-scenario design
    matrices do not depend on the coefficients, so they are built once;
    each functional evaluation (including the finite-difference
    perturbations of the delta method) is then plain linear algebra.
    """

    def __init__(self, request):
        self.req = request
        models = request.models
        self.n_causes = len(request.cause_labels)
        rows = request.data
        if request.row_index is not None:
            rows = rows.iloc[[request.row_index]]
        self.n = len(rows)
        self.scen_rows = [sc.apply(rows) for sc in request.scenarios]
        self.design = [
            [
                (
                    design_matrix(sr, m.spec.covariates),
                    [sr[c].to_numpy(dtype=float) for c, _ in m.spec.tvc],
                )
                for m in models
            ]
            for sr in self.scen_rows
        ]
        times = request.time_grid
        self.times = times
        self.pos = times > 0
        pos_times = times[self.pos]
        self.pos_times = pos_times
        if request.estimand in ("survival", "failure"):
            self.flat_u = pos_times
            self.flat_logu = np.log(self.flat_u) if self.flat_u.size else self.flat_u
            self.weights = None
            self.t_index = None
        else:
            # composite rule in v = ln u, split at every spline knot of
            # both models so each segment's integrand is analytic; the
            # v-substitution cancels the 1/u factor of the hazard
            x, w = _leggauss(request.nodes)
            knots = sorted(
                {k for m in models for k in m.baseline_basis.knot_vector.knots}
                | {k for m in models for _, b in m.tvc_bases for k in b.knot_vector.knots}
            )
            v_parts, w_parts, idx_parts = [], [], []
            for ti, t in enumerate(pos_times):
                v_top = np.log(t)
                v_lo = v_top - _LOG_SPAN
                cuts = [v_lo] + [k for k in knots if v_lo < k < v_top] + [v_top]
                for a, b in zip(cuts[:-1], cuts[1:]):
                    half = 0.5 * (b - a)
                    v_parts.append(half * x + 0.5 * (a + b))
                    w_parts.append(half * w)
                    idx_parts.append(np.full(x.size, ti))
            self.flat_logu = np.concatenate(v_parts)
            self.flat_u = np.exp(self.flat_logu)
            self.t_index = np.concatenate(idx_parts)
            weights = np.concatenate(w_parts)
            if request.estimand == "rmft":
                weights = weights * (float(request.t_star) - self.flat_u)
            self.weights = weights
        self.bases = []
        for m in models:
            B0 = rcs_eval(self.flat_logu, m.baseline_basis)
            D0 = rcs_deriv(self.flat_logu, m.baseline_basis)
            tv = [
                (rcs_eval(self.flat_logu, b), rcs_deriv(self.flat_logu, b))
                for _, b in m.tvc_bases
            ]
            self.bases.append((B0, D0, tv))
        self.theta_sizes = [m.theta.size for m in models]

    def split(self, stacked):
        out = []
        pos = 0
        for size in self.theta_sizes:
            out.append(stacked[pos : pos + size])
            pos += size
        return out

    def stacked_theta(self):
        return np.concatenate([m.theta for m in self.req.models])

    def _eta_u(self, s, m, theta_m):
        fit = self.req.models[m]
        X, xtvc = self.design[s][m]
        B0, D0, tv = self.bases[m]
        beta, gamma, deltas, intercept = fit.split_theta(theta_m)
        eta = (X @ beta + intercept)[:, None] + (B0 @ gamma)[None, :]
        u = np.broadcast_to((D0 @ gamma)[None, :], eta.shape)
        for xj, delta, (Bj, Dj) in zip(xtvc, deltas, tv):
            eta = eta + xj[:, None] * ((Bj @ delta)[None, :])
            u = u + xj[:, None] * ((Dj @ delta)[None, :])
        return eta, u

    def scenario_estimates(self, thetas):
        """Array (n_scenarios, n_causes, n_positive_times)."""
        req = self.req
        S = len(req.scenarios)
        T = self.pos_times.size
        out = np.empty((S, self.n_causes, T))
        if T == 0:
            return out
        if req.estimand in ("survival", "failure"):
            for s in range(S):
                eta, _ = self._eta_u(s, 0, thetas[0])
                surv = np.exp(-np.exp(eta))
                vals = surv if req.estimand == "survival" else 1.0 - surv
                out[s, 0] = vals.mean(axis=0)
            return out
        for s in range(S):
            exps, slopes = [], []
            for m in range(2):
                eta, u = self._eta_u(s, m, thetas[m])
                exps.append(np.exp(eta))
                slopes.append(u)
            surv_all = np.exp(-(exps[0] + exps[1]))
            for k in range(2):
                # S(u) h_k(u) du = S(v) exp(eta_k(v)) eta_k'(v) dv
                vals = (surv_all * exps[k] * slopes[k]).mean(axis=0)
                out[s, k] = np.bincount(self.t_index, vals * self.weights, minlength=T)
        return out

    def psi(self, stacked):
        """Flat vector of every reported functional at one theta."""
        E = self.scenario_estimates(self.split(stacked))
        req = self.req
        parts = [E.ravel()]
        if req.contrast is not None:
            ref = E[req.reference]
            for s in range(len(req.scenarios)):
                if s == req.reference:
                    continue
                parts.append((E[s] - ref).ravel() if req.contrast == "difference" else (E[s] / ref).ravel())
        if req.lincom is not None:
            for vec in req.lincom:
                w = np.asarray(vec).reshape(len(req.scenarios), self.n_causes)
                parts.append(np.einsum("sk,skt->t", w, E))
        return np.concatenate(parts) if parts else np.empty(0)

    def row_plan(self):
        """(kind, label, cause) per output block, matching psi order."""
        req = self.req
        plan = []
        for sc in req.scenarios:
            for cause in req.cause_labels:
                plan.append(("scenario", sc.label, cause))
        if req.contrast is not None:
            sep = " - " if req.contrast == "difference" else " / "
            ref_label = req.scenarios[req.reference].label
            for s, sc in enumerate(req.scenarios):
                if s == req.reference:
                    continue
                for cause in req.cause_labels:
                    plan.append((req.contrast, sc.label + sep + ref_label, cause))
        if req.lincom is not None:
            for vec in req.lincom:
                label = "lincom(" + " ".join(f"{w:g}" for w in vec) + ")"
                plan.append(("lincom", label, "all"))
        return plan

    def metadata(self, extra=None):
        req = self.req
        models_meta = []
        extrapolation = {}
        for i, m in enumerate(req.models):
            support_end = float(np.exp(m.baseline_basis.knot_vector.knots[-1]))
            flagged = [float(t) for t in self.pos_times if t > support_end * (1 + 1e-12)]
            extrapolation[f"model_{i + 1}"] = {
                "support_end": support_end,
                "extrapolated_times": flagged,
            }
            models_meta.append(
                {
                    "covariates": list(m.spec.covariates),
                    "baseline_df": m.spec.baseline_df,
                    "tvc": [list(p) for p in m.spec.tvc],
                    "failure_code": list(m.spec.declaration.failure_code),
                    "exit_time": m.spec.declaration.exit_time,
                    "loglik": m.loglik,
                    "n": m.n,
                    "n_events": m.n_events,
                }
            )
        meta = {
            "request": {
                "estimand": req.estimand,
                "scenarios": [
                    {"label": sc.label, "assignments": sc.describe()} for sc in req.scenarios
                ],
                "contrast": req.contrast,
                "lincom": [list(vec) for vec in req.lincom] if req.lincom else None,
                "reference": req.scenarios[req.reference].label,
                "ci_level": req.ci_level,
                "nodes": req.nodes,
                "row_index": req.row_index,
                "time_grid": [float(t) for t in self.times],
                "t_star": req.t_star,
                "cause_labels": list(req.cause_labels),
                "n_rows": self.n,
            },
            "models": models_meta,
            "extrapolation": extrapolation,
            "versions": {
                "crstd": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pandas": pd.__version__,
            },
        }
        if extra:
            meta.update(extra)
        return meta


def delta_method(psi, fits, threads=None):
    """Delta-method standard errors of a functional of stacked thetas.

    psi maps the concatenated coefficient vector of ``fits`` to a float
    array; the gradient is taken by central finite differences with
    step 1e-5 * max(1, |theta_j|), and the covariance is block-diagonal
    across the (independently fitted) models. Returns an se array of
    psi's shape.
    """
    stacked = np.concatenate([np.asarray(f.theta, dtype=float) for f in fits])
    base = np.asarray(psi(stacked), dtype=float)
    n_par = stacked.size

    def column(j):
        h = _FD_STEP * max(1.0, abs(stacked[j]))
        up = stacked.copy()
        up[j] += h
        dn = stacked.copy()
        dn[j] -= h
        return (np.asarray(psi(up), dtype=float).ravel() - np.asarray(psi(dn), dtype=float).ravel()) / (2 * h)

    threads = _threads() if threads is None else max(1, int(threads))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(column, range(n_par)))
    else:
        cols = [column(j) for j in range(n_par)]
    g = np.column_stack(cols) if cols else np.empty((base.size, 0))
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite gradient component in delta method")
    var = np.zeros(base.size)
    pos = 0
    for f in fits:
        k = f.theta.size
        gb = g[:, pos : pos + k]
        var += np.einsum("ij,jk,ik->i", gb, f.vcov, gb)
        pos += k
    return np.sqrt(np.maximum(var, 0.0)).reshape(base.shape)


def _interval(kind, est, se, z):
    # scenario probabilities and RMFTs: log scale; differences and
    # lincoms: natural scale; ratios: log scale
    if kind in ("scenario", "ratio"):
        if not np.isfinite(est) or est <= 0:
            return 0.0, 0.0
        shift = np.exp(z * se / est)
        return est / shift, est * shift
    return est - z * se, est + z * se


def _assemble(evaluator, intervals=True):
    req = evaluator.req
    est_pos = evaluator.psi(evaluator.stacked_theta())
    se_pos = (
        delta_method(evaluator.psi, req.models)
        if intervals and est_pos.size
        else np.full(est_pos.size, np.nan)
    )
    plan = evaluator.row_plan()
    T_pos = evaluator.pos_times.size
    est_blocks = est_pos.reshape(len(plan), T_pos) if est_pos.size else np.empty((len(plan), 0))
    se_blocks = se_pos.reshape(len(plan), T_pos) if est_pos.size else np.empty((len(plan), 0))

    if req.contrast == "ratio":
        ref_rows = [i for i, (kind, _, _) in enumerate(plan) if kind == "scenario"]
        ref_start = req.reference * evaluator.n_causes
        ref_est = est_blocks[ref_rows][ref_start : ref_start + evaluator.n_causes]
        if (ref_est == 0).any():
            raise ValueError("ratio contrast with a reference estimate of 0")

    z = norm.ppf(0.5 + req.ci_level / 2.0)
    zero_est = {"survival": 1.0, "failure": 0.0, "cif": 0.0, "rmft": 0.0}[req.estimand]
    records = []
    for b, (kind, label, cause) in enumerate(plan):
        j = 0
        for t in evaluator.times:
            if t > 0:
                est, se = float(est_blocks[b, j]), float(se_blocks[b, j])
                j += 1
            elif kind == "scenario":
                est, se = zero_est, 0.0
            elif kind == "ratio":
                est, se = np.nan, np.nan
            else:  # difference or lincom of all-zero estimates
                est, se = 0.0, 0.0
            if np.isnan(est):
                lci = uci = np.nan
            else:
                lci, uci = _interval(kind, est, se, z)
            records.append(
                {
                    "time": float(t),
                    "label": label,
                    "cause": cause,
                    "estimate": est,
                    "se": se,
                    "lci": lci,
                    "uci": uci,
                }
            )
    frame = pd.DataFrame(records, columns=["time", "label", "cause", "estimate", "se", "lci", "uci"])
    return StandardizedSeries(frame=frame, metadata=evaluator.metadata(), _evaluator=evaluator)


def standardized_failure(request, intervals=True):
    """Standardized all-cause or net failure (or survival), one model.

    For each scenario and time, (1/N) sum_i F(t | scenario, z_i) with
    F = 1 - exp(-exp(eta)). Supplying a cause-specific model makes this
    the net probability estimand (competing events eliminated). With
    intervals=False only point estimates are computed (se and bounds
    NaN), which resampling workflows use to skip the delta method.
    """
    if request.estimand not in ("failure", "survival"):
        raise ValueError("standardized_failure handles the failure/survival estimands")
    return _assemble(_Evaluator(request), intervals=intervals)


def standardized_cif(request, intervals=True):
    """Standardized cause-specific cumulative incidence, two models.

    Per scenario, cause k and time t: (1/N) sum_i of the Gauss-Legendre
    approximation of int_0^t S(u|.) h_k(u|.) du with S the all-cause
    survival from both cause-specific models.
    """
    if request.estimand != "cif":
        raise ValueError("standardized_cif handles the cif estimand")
    return _assemble(_Evaluator(request), intervals=intervals)


def standardized_rmft(request, intervals=True):
    """Restricted mean failure time lost to each cause before t_star.

    L_k = (1/N) sum_i int_0^{t*} (t* - u) S(u|.) h_k(u|.) du, the
    order-swapped single integral of the CIF. Lincom weights (scenario
    x cause, scenario-major) produce combined totals.
    """
    if request.estimand != "rmft":
        raise ValueError("standardized_rmft handles the rmft estimand")
    return _assemble(_Evaluator(request), intervals=intervals)


def separable_effects(request, intervals=True):
    """CIF under a two-component treatment decomposition.

    The two cause-specific models carry duplicated treatment columns
    (one acting on the event of interest, one on the competing event);
    each scenario must set every duplicated column. With
    contrast="difference" and the first scenario as reference, the
    second-vs-first contrast is the separable indirect effect and the
    third-vs-first the total effect.
    """
    if request.estimand != "cif":
        raise ValueError("separable effects are computed on the cif estimand")
    if len(request.scenarios) < 2:
        raise ValueError("separable effects need at least two scenarios")
    cov0 = set(request.models[0].spec.covariates)
    cov1 = set(request.models[1].spec.covariates)
    assigned = [dict(sc.assignments) for sc in request.scenarios]
    split_cols = set().union(*[set(a) for a in assigned])
    if not (split_cols & (cov0 - cov1)) or not (split_cols & (cov1 - cov0)):
        raise ValueError(
            "scenarios must set duplicated treatment columns, one specific to each model"
        )
    for sc, a in zip(request.scenarios, assigned):
        missing = split_cols - set(a)
        if missing:
            raise ValueError(
                f"scenario '{sc.label}' is missing duplicated column(s): {', '.join(sorted(missing))}"
            )
    return _assemble(_Evaluator(request), intervals=intervals)


def contrast(series, kind, reference=0):
    """Recompute a fitted series' scenario contrasts with delta CIs.

    Returns a StandardizedSeries holding only the contrast rows. The
    series must have been produced by one of the standardized_*
    operations (it carries its generating request).
    """
    if kind not in ("difference", "ratio"):
        raise ValueError(f"unknown contrast '{kind}'")
    evaluator = series._evaluator
    if evaluator is None:
        raise ValueError("series does not carry its generating request")
    req = evaluator.req
    if len(req.scenarios) < 2:
        raise ValueError("contrasts need at least two scenarios")
    from dataclasses import replace

    new_req = replace(req, contrast=kind, reference=reference)
    full = _assemble(_Evaluator(new_req))
    mask = full.frame["label"].str.contains(" - " if kind == "difference" else " / ", regex=False)
    return StandardizedSeries(
        frame=full.frame[mask].reset_index(drop=True),
        metadata=full.metadata,
        _evaluator=full._evaluator,
    )
