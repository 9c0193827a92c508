"""Acceptance gate: eight criteria, one test (and one report line) each.

Each test prints a single PASS line on success; under ``pytest -v``
every criterion shows up as its own PASSED/FAILED row. Tolerances are
pinned here and must not be loosened.
"""
import numpy as np
import pytest

from crstd import (
    AtScenario,
    ModelSpec,
    StandardizeRequest,
    aalen_johansen_cif,
    declare_survival,
    fit,
    log_likelihood,
    predict,
    separable_effects,
    standardized_cif,
    standardized_failure,
    standardized_rmft,
)
from crstd.dataset import SurvivalFrame
from tests.conftest import MAIN_COVARIATES

RX_AT = (AtScenario("at1", (("rx", 0.0),)), AtScenario("at2", (("rx", 1.0),)))


def _report(n, text):
    print(f"ACCEPTANCE {n} PASS: {text}")


# --------------------------------------------------------------- criterion 1


def test_criterion_1_data_prep(cohort):
    assert cohort.n_rows == 252
    counts = cohort.data["eventType"].value_counts().to_dict()
    assert counts == {0: 64, 1: 64, 2: 124}
    assert declare_survival(cohort, 1, 60).n_events == 61
    assert declare_survival(cohort, 2, 60).n_events == 119
    _report(1, "252 rows; event counts 64/64/124; 61 and 119 events by 60 months")


# --------------------------------------------------------------- criterion 2

OTHER_TABLE = {
    "rx": 1.3136,
    "normalAct": 0.9326,
    "ageCat2": 2.6953,
    "ageCat3": 3.5738,
    "hx": 2.2419,
    "hgBinary": 1.8588,
}
PROSTATE_TABLE = {
    "rx": 0.781722,
    "normalAct": 0.3363049,
    "ageCat2": 0.5847662,
    "ageCat3": 0.8689135,
    "hx": 0.5876147,
    "hgBinary": 1.615195,
}


def test_criterion_2_model_fits(prostate_fit, other_fit):
    assert abs(other_fit.loglik - (-297.4793)) < 0.5
    assert abs(prostate_fit.loglik - (-175.9547)) < 0.5
    for result, table in ((other_fit, OTHER_TABLE), (prostate_fit, PROSTATE_TABLE)):
        summary = result.summary().set_index("term")["exp_coef"]
        for name, hr in table.items():
            assert abs(summary.loc[name] / hr - 1.0) < 0.02, name
    _report(
        2,
        f"logliks {other_fit.loglik:.4f} / {prostate_fit.loglik:.4f}; "
        "all twelve hazard ratios within 2%",
    )


# --------------------------------------------------------------- criterion 3


def test_criterion_3_time_dependent_hr(prostate_fit):
    pattern = {"rx": 0.0, "normalAct": 1.0, "ageCat2": 1.0, "ageCat3": 0.0, "hx": 0.0, "hgBinary": 1.0}
    times = np.array([12.0, 36.0, 60.0])
    h0 = predict(prostate_fit, pattern, times)["hazard"][0]
    h1 = predict(prostate_fit, dict(pattern, rx=1.0), times)["hazard"][0]
    ratio = h1 / h0
    for got, want in zip(ratio, (0.52, 0.90, 1.50)):
        assert abs(got - want) < 0.05
    _report(3, f"treatment HR {ratio[0]:.3f}/{ratio[1]:.3f}/{ratio[2]:.3f} at 12/36/60 months")


# --------------------------------------------------------------- criterion 4

CIF60 = {
    ("at2", "prostate"): (0.213, 0.153, 0.295),
    ("at1", "prostate"): (0.277, 0.212, 0.362),
    ("at2", "other"): (0.535, 0.459, 0.622),
    ("at1", "other"): (0.431, 0.359, 0.517),
}


def test_criterion_4_total_effects(prostate_fit, other_fit, cohort):
    req = StandardizeRequest(
        models=(prostate_fit, other_fit),
        data=cohort.data,
        estimand="cif",
        scenarios=RX_AT,
        time_grid=(60.0,),
        cause_labels=("prostate", "other"),
    )
    frame = standardized_cif(req).frame.set_index(["label", "cause"])
    for key, (est, lci, uci) in CIF60.items():
        row = frame.loc[key]
        assert abs(row.estimate - est) < 0.005, key
        assert abs(row.lci - lci) < 0.01, key
        assert abs(row.uci - uci) < 0.01, key
    _report(4, "four standardized CIFs at 60 months within 0.005; all CI endpoints within 0.01")


# --------------------------------------------------------------- criterion 5

RMFT60 = {
    ("at1", "prostate"): (10.112996, 7.5136987, 13.611498),
    ("at2", "prostate"): (6.9136108, 4.7205369, 10.125546),
    ("at2 - at1", "prostate"): (-3.1993855, -7.2043426, 0.80557166),
    ("at1", "other"): (15.637513, 12.644666, 19.338733),
    ("at2", "other"): (19.813057, 16.498763, 23.793132),
    ("at2 - at1", "other"): (4.1755443, -0.54768438, 8.8987729),
}
RMFT_LINCOMS = {
    "lincom(1 1 0 0)": (25.750509, 22.255255, 29.245764),
    "lincom(0 0 1 1)": (26.726668, 23.223267, 30.23007),
}


def test_criterion_5_rmft(prostate_fit, other_fit, cohort):
    req = StandardizeRequest(
        models=(prostate_fit, other_fit),
        data=cohort.data,
        estimand="rmft",
        scenarios=RX_AT,
        t_star=60.0,
        contrast="difference",
        lincom=((1.0, 1.0, 0.0, 0.0), (0.0, 0.0, 1.0, 1.0)),
        cause_labels=("prostate", "other"),
    )
    frame = standardized_rmft(req).frame
    by_pair = frame.set_index(["label", "cause"])
    for key, (est, lci, uci) in RMFT60.items():
        row = by_pair.loc[key]
        assert abs(row.estimate - est) < 0.05, key
        assert abs(row.lci - lci) < 0.15, key
        assert abs(row.uci - uci) < 0.15, key
    for label, (est, lci, uci) in RMFT_LINCOMS.items():
        row = frame[frame.label == label].iloc[0]
        assert abs(row.estimate - est) < 0.05, label
        assert abs(row.lci - lci) < 0.15, label
        assert abs(row.uci - uci) < 0.15, label
    _report(5, "six months-lost estimates within 0.05, lincom totals within 0.05, CIs within 0.15")


# --------------------------------------------------------------- criterion 6

NET60 = {
    "at1": (0.38, 0.292, 0.492),
    "at2": (0.34, 0.246, 0.470),
    "at2 - at1": (-0.04, -0.186, 0.107),
}


def test_criterion_6_direct_effects(prostate_fit, cohort):
    req = StandardizeRequest(
        models=(prostate_fit,),
        data=cohort.data,
        estimand="failure",
        scenarios=RX_AT,
        time_grid=(60.0,),
        contrast="difference",
    )
    frame = standardized_failure(req).frame.set_index("label")
    for label, (est, lci, uci) in NET60.items():
        row = frame.loc[label]
        assert abs(row.estimate - est) < 0.005, label
        assert abs(row.lci - lci) < 0.015, label
        assert abs(row.uci - uci) < 0.015, label
    _report(6, "net probabilities 0.379/0.340 and difference -0.039 at 60 months; CIs within 0.015")


# --------------------------------------------------------------- criterion 7


def test_criterion_7_separable_effects(cohort):
    data = cohort.data.copy()
    data["rx_c"] = data["rx"]
    data["rx_o"] = data["rx"]
    dup = SurvivalFrame(data)
    covs = ("normalAct", "ageCat2", "ageCat3", "hx", "hgBinary")
    fit_c = fit(ModelSpec(("rx_c",) + covs, 4, (("rx_c", 2),), declare_survival(dup, 1, 60)), dup)
    fit_o = fit(ModelSpec(("rx_o",) + covs, 3, (), declare_survival(dup, 2, 60)), dup)
    req = StandardizeRequest(
        models=(fit_c, fit_o),
        data=data,
        estimand="cif",
        scenarios=(
            AtScenario("at1", (("rx_c", 1.0), ("rx_o", 1.0))),
            AtScenario("at2", (("rx_c", 1.0), ("rx_o", 0.0))),
            AtScenario("at3", (("rx_c", 0.0), ("rx_o", 0.0))),
        ),
        time_grid=(36.0,),
        contrast="difference",
        cause_labels=("prostate", "other"),
    )
    frame = separable_effects(req).frame
    sub = frame[frame.cause == "prostate"].set_index("label")
    for label, est in (("at1", 0.145), ("at2", 0.156), ("at3", 0.217)):
        assert abs(sub.loc[label].estimate - est) < 0.005, label
    indirect = sub.loc["at2 - at1"]
    total = sub.loc["at3 - at1"]
    assert abs(indirect.estimate - 0.011) < 0.005
    assert abs(indirect.lci - (-0.004)) < 0.01 and abs(indirect.uci - 0.025) < 0.01
    assert abs(total.estimate - 0.072) < 0.005
    assert abs(total.lci - (-0.014)) < 0.01 and abs(total.uci - 0.158) < 0.01
    _report(7, "separable-effect CIFs 0.145/0.156/0.217 at 36 months; indirect and total CIs within 0.01")


# --------------------------------------------------------------- criterion 8


def _property_gradient_fd(cohort, other_fit):
    rng = np.random.default_rng(7)
    spec = ModelSpec(MAIN_COVARIATES, 3, (), declare_survival(cohort, 2, 60))
    theta = other_fit.theta + rng.normal(scale=0.05, size=other_fit.theta.size)
    _, grad, _ = log_likelihood(theta, spec, cohort)
    h = 1e-6
    for j in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        fd = (log_likelihood(up, spec, cohort)[0] - log_likelihood(dn, spec, cohort)[0]) / (2 * h)
        assert np.isclose(grad[j], fd, rtol=1e-5, atol=1e-6)


def _property_orthogonalisation_invariance(cohort, prostate_fit, other_fit):
    for reference, code, df, tvc in (
        (other_fit, 2, 3, ()),
        (prostate_fit, 1, 4, (("rx", 2),)),
    ):
        spec = ModelSpec(MAIN_COVARIATES, df, tvc, declare_survival(cohort, code, 60))
        raw = fit(spec, cohort, orthogonalise=False)
        assert abs(raw.loglik - reference.loglik) < 1e-6


def _property_cif_consistency(prostate_fit, other_fit, cohort):
    grid = tuple(np.linspace(0.0, 60.0, 13))
    req = StandardizeRequest(
        models=(prostate_fit, other_fit),
        data=cohort.data,
        estimand="cif",
        scenarios=RX_AT,
        time_grid=grid,
        cause_labels=("prostate", "other"),
    )
    frame = standardized_cif(req).frame
    times = np.asarray(grid)
    for sc in RX_AT:
        rows = sc.apply(cohort.data)
        s_all = (
            predict(prostate_fit, rows, times)["survival"]
            * predict(other_fit, rows, times)["survival"]
        ).mean(axis=0)
        sub = frame[frame.label == sc.label]
        total = np.zeros(times.size)
        for cause in ("prostate", "other"):
            est = sub[sub.cause == cause].sort_values("time")["estimate"].to_numpy()
            assert np.all(np.diff(est) >= -1e-12)
            total += est
        assert np.allclose(total + s_all, 1.0, atol=1e-6)


def _property_node_doubling(prostate_fit, other_fit, cohort):
    def run(nodes):
        req = StandardizeRequest(
            models=(prostate_fit, other_fit),
            data=cohort.data,
            estimand="cif",
            scenarios=RX_AT,
            time_grid=(6.0, 30.0, 60.0),
            nodes=nodes,
        )
        return standardized_cif(req).frame.estimate.to_numpy()

    assert np.max(np.abs(run(50) - run(100))) < 1e-6


def _property_rmft_nested_vs_swapped(prostate_fit, other_fit, cohort):
    # outer rule in log time, split at the knots: the CIF rises like a
    # fractional power of t near zero, so a plain rule would stall at ~1e-4
    t_star = 60.0
    x, w = np.polynomial.legendre.leggauss(20)
    knots = sorted(
        {k for m in (prostate_fit, other_fit) for k in m.baseline_basis.knot_vector.knots}
        | {k for m in (prostate_fit, other_fit) for _, b in m.tvc_bases for k in b.knot_vector.knots}
    )
    v_top = np.log(t_star)
    v_lo = v_top - 40.0
    cuts = [v_lo] + [k for k in knots if v_lo < k < v_top - 1e-12] + [v_top]
    vs, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        half = 0.5 * (b - a)
        vs.append(half * x + 0.5 * (a + b))
        ws.append(half * w)
    outer_t = np.exp(np.concatenate(vs))
    outer_w = np.concatenate(ws) * outer_t
    kw = dict(
        models=(prostate_fit, other_fit),
        data=cohort.data,
        scenarios=RX_AT,
        cause_labels=("prostate", "other"),
    )
    cif = standardized_cif(
        StandardizeRequest(estimand="cif", time_grid=tuple(outer_t), **kw),
        intervals=False,
    ).frame
    rmft = standardized_rmft(
        StandardizeRequest(estimand="rmft", t_star=t_star, **kw), intervals=False
    ).frame
    for sc in ("at1", "at2"):
        for cause in ("prostate", "other"):
            sub = cif[(cif.label == sc) & (cif.cause == cause)].sort_values("time")
            nested = float(sub.estimate.to_numpy() @ outer_w)
            direct = rmft[(rmft.label == sc) & (rmft.cause == cause)].estimate.item()
            assert abs(nested - direct) < 1e-6


def _property_aalen_johansen_closed_form():
    # constant cause-specific hazards: F_k(t) = lam_k/lam (1 - exp(-lam t))
    rng = np.random.default_rng(314159)
    lam1, lam2, horizon, t_check = 0.03, 0.05, 30.0, 15.0
    lam = lam1 + lam2
    truth = lam1 / lam * (1.0 - np.exp(-lam * t_check))
    reps, n = 40, 1500
    estimates = []
    for _ in range(reps):
        t = rng.exponential(1.0 / lam, size=n)
        cause = np.where(rng.random(n) < lam1 / lam, 1, 2)
        frame = SurvivalFrame(
            __import__("pandas").DataFrame(
                {"dtime": np.minimum(t, horizon), "eventType": np.where(t <= horizon, cause, 0)}
            )
        )
        estimates.append(aalen_johansen_cif(frame, horizon)["all"][1](t_check))
    estimates = np.asarray(estimates)
    sem = estimates.std(ddof=1) / np.sqrt(reps)
    assert abs(estimates.mean() - truth) < 3.0 * sem


def _property_delta_vs_bootstrap(prostate_fit, other_fit, cohort):
    req = StandardizeRequest(
        models=(prostate_fit, other_fit),
        data=cohort.data,
        estimand="cif",
        scenarios=RX_AT,
        time_grid=(60.0,),
        cause_labels=("prostate", "other"),
    )
    base = standardized_cif(req).frame
    delta_se = base.set_index(["label", "cause"]).se

    rng = np.random.default_rng(271828)
    reps = 200
    draws = []
    specs = (prostate_fit.spec, other_fit.spec)
    for _ in range(reps):
        sample = cohort.data.sample(n=len(cohort.data), replace=True, random_state=rng.integers(2**31))
        sample = sample.reset_index(drop=True)
        boot = SurvivalFrame(sample)
        fits = tuple(
            fit(ModelSpec(s.covariates, s.baseline_df, s.tvc,
                          declare_survival(boot, s.declaration.failure_code, s.declaration.exit_time)), boot)
            for s in specs
        )
        breq = StandardizeRequest(
            models=fits,
            data=sample,
            estimand="cif",
            scenarios=RX_AT,
            time_grid=(60.0,),
            cause_labels=("prostate", "other"),
        )
        est = standardized_cif(breq, intervals=False).frame.set_index(["label", "cause"]).estimate
        draws.append(est)
    stacked = np.column_stack([d.to_numpy() for d in draws])
    boot_se = stacked.std(axis=1, ddof=1)
    rel = np.abs(boot_se / delta_se.to_numpy() - 1.0)
    assert np.all(rel < 0.15), rel


def _property_coefficient_recovery():
    # Weibull proportional hazards H = exp(g0) t^g1 exp(b x) is a df=1
    # model on the log-H scale; recover b on simulated data
    rng = np.random.default_rng(5551212)
    g0, g1, b = np.log(0.02), 1.3, 0.7
    n, reps, horizon = 400, 120, 30.0
    estimates = []
    for _ in range(reps):
        x = (rng.random(n) < 0.5).astype(float)
        t = (rng.exponential(1.0, size=n) / (np.exp(g0 + b * x))) ** (1.0 / g1)
        frame = SurvivalFrame(
            __import__("pandas").DataFrame(
                {
                    "dtime": np.minimum(t, horizon),
                    "eventType": np.where(t <= horizon, 1, 0),
                    "x": x,
                }
            )
        )
        spec = ModelSpec(("x",), 1, (), declare_survival(frame, 1, horizon))
        result = fit(spec, frame)
        estimates.append(result.theta[0])
    estimates = np.asarray(estimates)
    mc_se = estimates.std(ddof=1) / np.sqrt(reps)
    assert abs(estimates.mean() - b) < 3.0 * mc_se


def test_criterion_8_property_suite(prostate_fit, other_fit, cohort):
    _property_gradient_fd(cohort, other_fit)
    _property_orthogonalisation_invariance(cohort, prostate_fit, other_fit)
    _property_cif_consistency(prostate_fit, other_fit, cohort)
    _property_node_doubling(prostate_fit, other_fit, cohort)
    _property_rmft_nested_vs_swapped(prostate_fit, other_fit, cohort)
    _property_aalen_johansen_closed_form()
    _property_delta_vs_bootstrap(prostate_fit, other_fit, cohort)
    _property_coefficient_recovery()
    _report(
        8,
        "gradient/orthogonalisation/CIF-identity/node-doubling/RMFT-equivalence at 1e-6 class "
        "tolerances; AJ and coefficient recovery within 3 MC SEs; bootstrap SEs within 15%",
    )
