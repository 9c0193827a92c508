"""Flexible parametric survival models on the log cumulative hazard scale.

The linear predictor is eta(ln t, x) = s0(ln t; gamma) + x'beta +
sum_j x_j s_j(ln t; delta_j) + intercept, with restricted cubic splines
s0 (baseline) and s_j (time-dependent effects). Then H = exp(eta),
S = exp(-exp(eta)), and h = exp(eta) * (d eta / d ln t) / t. Fitting is
Newton-Raphson on the exact analytic gradient and hessian with
step-halving; steps that drive d eta / d ln t nonpositive at any event
row are rejected through a -inf log likelihood.
"""
import json
import pathlib
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import __version__
from .dataset import SurvivalDeclaration, SurvivalFrame
from .spline import KnotVector, SplineBasis, build_basis, centile_knots, rcs_deriv, rcs_eval

MAX_ITER = 100
MAX_HALVINGS = 30
GRAD_TOL = 1e-6
LOGLIK_RTOL = 1e-9

ARTIFACT_FORMAT = "crstd-fpm"
ARTIFACT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    """Model structure: covariates, spline dimensions, declaration."""

    covariates: tuple
    baseline_df: int
    tvc: tuple = ()
    declaration: SurvivalDeclaration = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        tvc = tuple((str(c), int(df)) for c, df in self.tvc)
        object.__setattr__(self, "tvc", tvc)
        if self.baseline_df < 1:
            raise ValueError("baseline_df must be >= 1")
        for col, df in tvc:
            if col not in self.covariates:
                raise ValueError(f"tvc column '{col}' is not a model covariate")
            if df < 1:
                raise ValueError("tvc df must be >= 1")

    @property
    def n_params(self):
        return len(self.covariates) + self.baseline_df + sum(df for _, df in self.tvc) + 1


@dataclass(frozen=True)
class FpmFit:
    """A fitted model: coefficients, vcov, spline bases, metadata.

    theta is ordered [beta (covariates), gamma (baseline spline),
    delta (tvc splines in declared order), intercept]; vcov matches.
    """

    spec: ModelSpec
    theta: np.ndarray
    vcov: np.ndarray
    loglik: float
    baseline_basis: SplineBasis
    tvc_bases: tuple
    column_names: tuple
    gradient: np.ndarray = None
    converged: bool = True
    iterations: int = 0
    n: int = 0
    n_events: int = 0

    def split_theta(self, theta=None):
        """(beta, gamma, [delta_j...], intercept) views of a theta vector."""
        theta = self.theta if theta is None else np.asarray(theta, dtype=float)
        p = len(self.spec.covariates)
        beta = theta[:p]
        gamma = theta[p : p + self.spec.baseline_df]
        pos = p + self.spec.baseline_df
        deltas = []
        for _, df in self.spec.tvc:
            deltas.append(theta[pos : pos + df])
            pos += df
        return beta, gamma, deltas, theta[pos]

    def summary(self, z=1.959963984540054):
        """Coefficient table with exponentiated effects and Wald CIs."""
        se = np.sqrt(np.diag(self.vcov))
        eb = np.exp(self.theta)
        return pd.DataFrame(
            {
                "term": list(self.column_names),
                "coef": self.theta,
                "se": se,
                "exp_coef": eb,
                "exp_se": eb * se,
                "exp_lci": np.exp(self.theta - z * se),
                "exp_uci": np.exp(self.theta + z * se),
            }
        )


def design_matrix(rows, covariates):
    """Float matrix of the named covariate columns; errors if absent."""
    if isinstance(rows, SurvivalFrame):
        rows = rows.data
    missing = [c for c in covariates if c not in rows.columns]
    if missing:
        raise ValueError(f"covariate column(s) absent from rows: {', '.join(missing)}")
    if len(covariates) == 0:
        return np.empty((len(rows), 0))
    return rows[list(covariates)].to_numpy(dtype=float)


class _Design:
    """Precomputed design pieces for one (spec, data) pair."""

    def __init__(self, spec, frame, orthogonalise=True):
        decl = spec.declaration
        if decl is None or decl.analysis_time is None:
            raise ValueError("spec.declaration must carry per-row analysis times")
        if len(decl.analysis_time) != frame.n_rows:
            raise ValueError("declaration does not match the frame's row count")
        self.t = np.asarray(decl.analysis_time, dtype=float)
        self.d = np.asarray(decl.d, dtype=float)
        if self.d.sum() < 1:
            raise ValueError("no events under this declaration")
        self.lnt = np.log(self.t)
        self.events = self.d == 1

        X = design_matrix(frame, spec.covariates)
        kv0 = centile_knots(self.t, spec.baseline_df, self.events)
        self.baseline_basis, B0 = build_basis(self.lnt, kv0, orthogonalise)
        D0 = rcs_deriv(self.lnt, self.baseline_basis)

        z_cols = [X, B0]
        d_cols = [np.zeros_like(X), D0]
        names = list(spec.covariates) + [f"rcs{j + 1}" for j in range(spec.baseline_df)]
        self.tvc_bases = []
        for col, dfj in spec.tvc:
            kvj = centile_knots(self.t, dfj, self.events)
            basisj, Bj = build_basis(self.lnt, kvj, orthogonalise)
            Dj = rcs_deriv(self.lnt, basisj)
            xj = frame.data[col].to_numpy(dtype=float)[:, None]
            z_cols.append(xj * Bj)
            d_cols.append(xj * Dj)
            names += [f"{col}:rcs{j + 1}" for j in range(dfj)]
            self.tvc_bases.append((col, basisj))
        n = frame.n_rows
        z_cols.append(np.ones((n, 1)))
        d_cols.append(np.zeros((n, 1)))
        names.append("intercept")
        self.Z = np.hstack(z_cols)
        self.D = np.hstack(d_cols)
        self.names = tuple(names)
        self.X = X

    def loglik(self, theta):
        """(value, gradient, hessian); gradient/hessian are None at -inf."""
        eta = self.Z @ theta
        u = self.D @ theta
        if np.any(u[self.events] <= 0):
            return -np.inf, None, None
        with np.errstate(over="ignore"):
            exp_eta = np.exp(eta)
        log_u = np.log(u, where=self.events, out=np.ones_like(u))
        value = np.sum(self.d * (log_u + eta)) - exp_eta.sum()
        if not np.isfinite(value):
            return -np.inf, None, None
        resid = self.d - exp_eta
        du = np.where(self.events, self.d / u, 0.0)
        grad = self.Z.T @ resid + self.D.T @ du
        w_z = exp_eta
        w_d = np.where(self.events, self.d / u**2, 0.0)
        hess = -(self.Z.T * w_z) @ self.Z - (self.D.T * w_d) @ self.D
        return value, grad, hess


def log_likelihood(theta, spec, data, orthogonalise=True):
    """Log likelihood with analytic gradient and hessian.

    value = sum_i d_i [ln(d eta_i / d ln t) + eta_i] - exp(eta_i),
    the likelihood of the model on the log-time scale; it differs from
    the time-scale likelihood by the data-only constant -sum d_i ln t_i,
    so gradients, hessians and the maximizer are identical. Returns
    -inf (with gradient and hessian None) when the inner derivative is
    nonpositive at any event row.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n_params,):
        raise ValueError(f"theta has length {theta.size}, spec needs {spec.n_params}")
    return _Design(spec, data, orthogonalise).loglik(theta)


def _poisson_rate_init(X, d, lnt):
    # exponential proportional-hazards fit: Poisson IRLS with offset ln t
    n = len(d)
    Xa = np.hstack([X, np.ones((n, 1))])
    coef = np.zeros(Xa.shape[1])
    coef[-1] = np.log(max(d.sum(), 0.5) / np.exp(lnt).sum())
    for _ in range(50):
        lin = Xa @ coef
        mu = np.exp(lin + lnt)
        z = lin + (d - mu) / mu
        W = mu
        new = np.linalg.lstsq((Xa.T * W) @ Xa, (Xa.T * W) @ z, rcond=None)[0]
        if np.max(np.abs(new - coef)) < 1e-8:
            coef = new
            break
        coef = new
    return coef


def _nelson_aalen_init(design, baseline_df):
    # OLS of log Nelson-Aalen cumulative hazard at event times on the
    # baseline spline columns
    t, d = design.t, design.d
    order = np.argsort(t, kind="stable")
    ts, ds = t[order], d[order]
    uniq, start = np.unique(ts, return_index=True)
    n_at_risk = len(ts) - start
    d_at = np.add.reduceat(ds, start)
    H = np.cumsum(d_at / n_at_risk)
    H_at = dict(zip(uniq, H))
    ev = design.events
    y = np.log([H_at[v] for v in t[ev]])
    p = design.X.shape[1]
    B0 = design.Z[np.ix_(ev, range(p, p + baseline_df))]
    A = np.hstack([B0, np.ones((int(ev.sum()), 1))])
    sol = np.linalg.lstsq(A, y, rcond=None)[0]
    return sol[:-1], sol[-1]


def fit(spec, data, orthogonalise=True, init_theta=None):
    """Maximum-likelihood fit by Newton-Raphson with step-halving.

    Converged when the gradient's max absolute component is below 1e-6
    and the relative log-likelihood change is below 1e-9. The returned
    vcov is the inverse negative hessian at the optimum.
    """
    design = _Design(spec, data, orthogonalise)
    if np.linalg.matrix_rank(design.Z) < design.Z.shape[1]:
        raise ValueError("rank-deficient design matrix")

    if init_theta is not None:
        theta = np.asarray(init_theta, dtype=float).copy()
        if theta.shape != (spec.n_params,):
            raise ValueError("init_theta has the wrong length")
    else:
        theta = np.zeros(spec.n_params)
        p = len(spec.covariates)
        exp_coef = _poisson_rate_init(design.X, design.d, design.lnt)
        theta[:p] = exp_coef[:-1]
        gamma0, c0 = _nelson_aalen_init(design, spec.baseline_df)
        theta[p : p + spec.baseline_df] = gamma0
        theta[-1] = c0

    value, grad, hess = design.loglik(theta)
    if not np.isfinite(value):
        # fall back to a flat start inside the finite region
        theta = np.zeros(spec.n_params)
        theta[len(spec.covariates)] = 1.0  # increasing in log time
        theta[-1] = np.log(max(design.d.sum(), 0.5) / len(design.t))
        value, grad, hess = design.loglik(theta)
    if not np.isfinite(value):
        raise RuntimeError("could not find finite starting values")

    converged = False
    iterations = 0
    for iterations in range(1, MAX_ITER + 1):
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-hess, grad, rcond=None)[0]
        new_value = -np.inf
        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = theta + scale * step
            new_value, new_grad, new_hess = design.loglik(candidate)
            if np.isfinite(new_value) and new_value >= value - 1e-12:
                break
            scale *= 0.5
        else:
            break  # no acceptable step; report best point found
        rel_change = abs(new_value - value) / (abs(value) + 1e-12)
        theta, value, grad, hess = candidate, new_value, new_grad, new_hess
        if np.max(np.abs(grad)) < GRAD_TOL and rel_change < LOGLIK_RTOL:
            converged = True
            break
    if not converged:
        raise RuntimeError(
            f"Newton-Raphson did not converge in {iterations} iterations "
            f"(max |gradient| = {np.max(np.abs(grad)):.3g})"
        )

    vcov = np.linalg.inv(-hess)
    return FpmFit(
        spec=spec,
        theta=theta,
        vcov=vcov,
        loglik=float(value),
        baseline_basis=design.baseline_basis,
        tvc_bases=tuple(design.tvc_bases),
        column_names=design.names,
        gradient=grad,
        converged=converged,
        iterations=iterations,
        n=len(design.t),
        n_events=int(design.d.sum()),
    )


def eta_and_slope(fit, rows, times, theta=None):
    """Linear predictor and its log-time slope on a rows x times grid.

    times must be strictly positive; returns (eta, u) with shape
    (n_rows, n_times). Used by prediction and standardization.
    """
    if isinstance(rows, SurvivalFrame):
        rows = rows.data
    times = np.asarray(times, dtype=float)
    beta, gamma, deltas, intercept = fit.split_theta(theta)
    X = design_matrix(rows, fit.spec.covariates)
    lnt = np.log(times)
    B0 = rcs_eval(lnt, fit.baseline_basis)
    D0 = rcs_deriv(lnt, fit.baseline_basis)
    eta = (X @ beta + intercept)[:, None] + (B0 @ gamma)[None, :]
    u = np.broadcast_to((D0 @ gamma)[None, :], eta.shape).copy()
    for (col, _), delta, (_, basis) in zip(fit.spec.tvc, deltas, fit.tvc_bases):
        xj = rows[col].to_numpy(dtype=float)[:, None]
        eta += xj * (rcs_eval(lnt, basis) @ delta)[None, :]
        u += xj * (rcs_deriv(lnt, basis) @ delta)[None, :]
    return eta, u


def predict(fit, rows, times, theta=None):
    """Per-row, per-time predictions from a fitted model.

    Returns {"eta", "survival", "failure", "hazard"} arrays of shape
    (n_rows, n_times). t = 0 is handled by convention: survival 1,
    failure 0, hazard 0, eta -inf.
    """
    if isinstance(rows, dict):
        rows = pd.DataFrame([rows])
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if (times < 0).any():
        raise ValueError("times must be nonnegative")
    n = len(rows.data if isinstance(rows, SurvivalFrame) else rows)
    eta = np.full((n, times.size), -np.inf)
    hazard = np.zeros((n, times.size))
    pos = times > 0
    if pos.any():
        eta_p, u_p = eta_and_slope(fit, rows, times[pos], theta)
        eta[:, pos] = eta_p
        hazard[:, pos] = np.exp(eta_p) * u_p / times[pos][None, :]
    survival = np.exp(-np.exp(eta))
    return {"eta": eta, "survival": survival, "failure": 1.0 - survival, "hazard": hazard}


def _basis_to_json(basis):
    return {
        "knots": list(basis.knot_vector.knots),
        "source": basis.knot_vector.source,
        "orthogonalised": basis.orthogonalised,
        "R": [list(row) for row in basis.R] if basis.orthogonalised else None,
    }


def _basis_from_json(obj):
    kv = KnotVector(tuple(obj["knots"]), source=obj["source"])
    if obj["orthogonalised"]:
        return SplineBasis(kv, orthogonalised=True, R=obj["R"])
    return SplineBasis(kv)


def save_fit(fit, path):
    """Serialize a fitted model to a JSON artifact."""
    payload = {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "software_version": __version__,
        "spec": {
            "covariates": list(fit.spec.covariates),
            "baseline_df": fit.spec.baseline_df,
            "tvc": [list(pair) for pair in fit.spec.tvc],
            "failure_code": list(fit.spec.declaration.failure_code),
            "exit_time": fit.spec.declaration.exit_time,
        },
        "baseline_basis": _basis_to_json(fit.baseline_basis),
        "tvc_bases": [[col, _basis_to_json(b)] for col, b in fit.tvc_bases],
        "column_names": list(fit.column_names),
        "theta": fit.theta.tolist(),
        "vcov": fit.vcov.tolist(),
        "loglik": fit.loglik,
        "n": fit.n,
        "n_events": fit.n_events,
        "converged": fit.converged,
        "iterations": fit.iterations,
    }
    path = pathlib.Path(path)
    path.write_text(json.dumps(payload, indent=1))
    return path


def load_fit(path):
    """Load a model artifact saved by save_fit; validates dimensions."""
    path = pathlib.Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ValueError(f"corrupt model artifact {path}: {err}") from None
    if payload.get("format") != ARTIFACT_FORMAT:
        raise ValueError(f"not a model artifact: {path}")
    if payload.get("version") != ARTIFACT_VERSION:
        raise ValueError(
            f"artifact version {payload.get('version')} unsupported "
            f"(expected {ARTIFACT_VERSION})"
        )
    spec_obj = payload["spec"]
    declaration = SurvivalDeclaration(
        failure_code=tuple(spec_obj["failure_code"]),
        exit_time=spec_obj["exit_time"],
    )
    spec = ModelSpec(
        covariates=tuple(spec_obj["covariates"]),
        baseline_df=spec_obj["baseline_df"],
        tvc=tuple(tuple(pair) for pair in spec_obj["tvc"]),
        declaration=declaration,
    )
    theta = np.asarray(payload["theta"], dtype=float)
    vcov = np.asarray(payload["vcov"], dtype=float)
    if theta.shape != (spec.n_params,) or vcov.shape != (spec.n_params, spec.n_params):
        raise ValueError(
            f"artifact dimensions do not match its spec: theta {theta.shape}, "
            f"vcov {vcov.shape}, spec needs {spec.n_params}"
        )
    return FpmFit(
        spec=spec,
        theta=theta,
        vcov=vcov,
        loglik=payload["loglik"],
        baseline_basis=_basis_from_json(payload["baseline_basis"]),
        tvc_bases=tuple((col, _basis_from_json(b)) for col, b in payload["tvc_bases"]),
        column_names=tuple(payload["column_names"]),
        converged=payload["converged"],
        iterations=payload["iterations"],
        n=payload["n"],
        n_events=payload["n_events"],
    )
