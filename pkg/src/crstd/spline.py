"""Restricted cubic spline bases, derivatives, and orthogonalisation.

Bases follow the truncated-power restricted cubic construction on the
log-time (or covariate) scale: linear tails beyond the boundary knots,
df = #knots - 1 columns. Orthogonalisation is Gram-Schmidt against the
constant and prior columns with population-variance scaling; the
triangular transform R is stored so new points (including single scalar
values) can be mapped into the exact coordinates used during fitting.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KnotVector:
    """Strictly increasing knot locations plus their provenance."""

    knots: tuple
    source: str = "user-supplied"

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if k.size < 2:
            raise ValueError("need at least two knots")
        if not np.all(np.diff(k) > 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", tuple(float(v) for v in k))

    @property
    def df(self):
        return len(self.knots) - 1


@dataclass(frozen=True)
class SplineBasis:
    """A knot vector with optional stored orthogonalisation transform.

    When ``orthogonalised`` is True, ``R`` is the (df+1) x (df+1)
    matrix satisfying [raw columns, 1] = [orthogonal columns, 1] @ R on
    the construction data: upper triangular in its first df rows, with
    the raw column means and a trailing 1 in the last row. Evaluation
    of new points right-multiplies by inv(R).
    """

    knot_vector: KnotVector
    orthogonalised: bool = False
    R: tuple = None

    def __post_init__(self):
        if self.orthogonalised:
            R = np.asarray(self.R, dtype=float)
            m = self.df + 1
            if R.shape != (m, m):
                raise ValueError(f"R must be {m}x{m}, got {R.shape}")
            object.__setattr__(self, "R", tuple(tuple(row) for row in R))
        elif self.R is not None:
            raise ValueError("R supplied but orthogonalised is False")

    @property
    def df(self):
        return self.knot_vector.df

    @property
    def R_inv(self):
        return np.linalg.inv(np.asarray(self.R, dtype=float))


def _centile(sorted_vals, p):
    # rank r = (n+1)p/100 with linear interpolation, clamped to the ends
    n = sorted_vals.size
    r = (n + 1) * p / 100.0
    if r <= 1:
        return float(sorted_vals[0])
    if r >= n:
        return float(sorted_vals[-1])
    lo = int(np.floor(r))
    frac = r - lo
    return float(sorted_vals[lo - 1] * (1 - frac) + sorted_vals[lo] * frac)


def centile_knots(values, df, event_mask, log=True):
    """Knots from the event-value distribution, log scale by default.

    Boundary knots sit at the min/max of log event times (rows where
    ``event_mask`` is true); the df-1 internal knots sit at the equally
    spaced centiles 100*i/df of those log times. With log=False the
    values enter untransformed (covariate-scale splines, e.g. age).
    """
    if df < 1:
        raise ValueError("df must be >= 1")
    values = np.asarray(values, dtype=float)
    mask = np.asarray(event_mask, dtype=bool)
    if values.shape != mask.shape:
        raise ValueError("values and event_mask must have the same length")
    times = values[mask]
    if log and (times <= 0).any():
        raise ValueError("event times must be positive")
    if np.unique(times).size < df + 1:
        raise ValueError(f"need at least {df + 1} distinct event times for df={df}")
    scaled = np.sort(np.log(times) if log else times)
    internal = [_centile(scaled, 100.0 * i / df) for i in range(1, df)]
    knots = [scaled[0]] + internal + [scaled[-1]]
    if len(set(knots)) != len(knots):
        raise ValueError("degenerate knots; too few distinct event times")
    return KnotVector(tuple(knots), source="centile-derived")


def _raw_eval(x, knots):
    x = np.asarray(x, dtype=float)
    k = np.asarray(knots, dtype=float)
    k1, kK = k[0], k[-1]
    out = np.empty(x.shape + (k.size - 1,))
    out[..., 0] = x
    p1 = np.maximum(x - k1, 0.0) ** 3
    pK = np.maximum(x - kK, 0.0) ** 3
    for j in range(1, k.size - 1):
        lam = (kK - k[j]) / (kK - k1)
        out[..., j] = np.maximum(x - k[j], 0.0) ** 3 - lam * p1 - (1 - lam) * pK
    return out


def _raw_deriv(x, knots):
    x = np.asarray(x, dtype=float)
    k = np.asarray(knots, dtype=float)
    k1, kK = k[0], k[-1]
    out = np.empty(x.shape + (k.size - 1,))
    out[..., 0] = 1.0
    p1 = np.maximum(x - k1, 0.0) ** 2
    pK = np.maximum(x - kK, 0.0) ** 2
    for j in range(1, k.size - 1):
        lam = (kK - k[j]) / (kK - k1)
        out[..., j] = 3 * (
            np.maximum(x - k[j], 0.0) ** 2 - lam * p1 - (1 - lam) * pK
        )
    return out


def _through_R(raw, basis, constant):
    # map raw basis rows into the stored orthogonal coordinates;
    # the appended column is 1 for values, 0 for derivatives
    aug = np.concatenate([raw, np.full(raw.shape[:-1] + (1,), constant)], axis=-1)
    return (aug @ basis.R_inv)[..., : basis.df]


def rcs_eval(x, basis):
    """Basis values at x (any shape); last axis has df columns."""
    raw = _raw_eval(x, basis.knot_vector.knots)
    if not basis.orthogonalised:
        return raw
    return _through_R(raw, basis, 1.0)


def rcs_deriv(x, basis):
    """Exact first derivative of every basis column at x."""
    raw = _raw_deriv(x, basis.knot_vector.knots)
    if not basis.orthogonalised:
        return raw
    return _through_R(raw, basis, 0.0)


def orthogonalize(raw):
    """Gram-Schmidt a raw basis matrix against the constant.

    Returns (ortho, R) with ortho columns of zero mean and unit
    population variance, mutually orthogonal under the 1/n inner
    product, and [raw, 1] = [ortho, 1] @ R. Raises on rank deficiency.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ValueError("raw basis must be 2-d")
    n, p = raw.shape
    if n <= p:
        raise ValueError("need more rows than columns")
    R = np.zeros((p + 1, p + 1))
    R[p, p] = 1.0
    ortho = np.empty_like(raw)
    for j in range(p):
        v = raw[:, j].copy()
        m = v.mean()
        R[p, j] = m
        v -= m
        for i in range(j):
            r = ortho[:, i] @ v / n
            R[i, j] = r
            v -= r * ortho[:, i]
        norm = np.sqrt(v @ v / n)
        if norm < 1e-12 * max(1.0, np.abs(raw[:, j]).max()):
            raise ValueError(f"rank-deficient basis: column {j} is collinear")
        R[j, j] = norm
        ortho[:, j] = v / norm
    return ortho, R


def build_basis(x, knots, orthogonalise=True):
    """Construct a SplineBasis at construction data x.

    Evaluates the raw basis at x, optionally orthogonalises it, and
    returns (basis, values) where values are the columns the model
    design will use. With orthogonalise=False the values are the raw
    truncated-power columns.
    """
    kv = knots if isinstance(knots, KnotVector) else KnotVector(tuple(knots))
    raw = _raw_eval(np.asarray(x, dtype=float), kv.knots)
    if not orthogonalise:
        return SplineBasis(kv), raw
    ortho, R = orthogonalize(raw)
    return SplineBasis(kv, orthogonalised=True, R=R), ortho
