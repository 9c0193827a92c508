"""Effects that strip out the competing pathway: net probabilities and
separable effects.

Total effects mix two routes: what estrogen does to prostate cancer
directly and what it does through cardiovascular deaths that remove men
from risk. Two estimands isolate the direct route.

Net probability of death from prostate cancer: the hypothetical world
where death from other causes is eliminated, computed from the prostate
model alone. Identification leans on conditional independence of the two
event types given the covariates.

Separable effects: imagine the treatment split into a component acting
on prostate cancer (rx_c) and one acting on other causes (rx_o), each
entering only its own model. Flipping one component at a time over the
treated population decomposes the total effect without eliminating
anything.

Run from the repository root:

    python3 demos/direct_and_separable_effects.py
"""

import pathlib

from crstd import (
    AtScenario,
    ModelSpec,
    StandardizeRequest,
    SurvivalFrame,
    declare_survival,
    fit,
    load_csv,
    prepare_prostate,
    separable_effects,
    standardized_failure,
)
from crstd.dataset import PROSTATE_SCHEMA

ROOT = pathlib.Path(__file__).resolve().parents[1]

cohort = prepare_prostate(load_csv(ROOT / "data" / "prostate.csv", schema=PROSTATE_SCHEMA))
covariates = ("rx", "normalAct", "ageCat2", "ageCat3", "hx", "hgBinary")

# ----------------------- net probability, other causes eliminated

prostate = fit(
    ModelSpec(covariates, 4, (("rx", 2),), declare_survival(cohort, 1, 60.0)), cohort
)
net = standardized_failure(
    StandardizeRequest(
        models=(prostate,),
        data=cohort.data,
        estimand="failure",
        scenarios=(AtScenario("untreated", (("rx", 0.0),)), AtScenario("treated", (("rx", 1.0),))),
        time_grid=(60.0,),
        contrast="difference",
        cause_labels=("prostate",),
    )
)
print("net probability of prostate cancer death by 60 months")
print(net.frame[["label", "estimate", "lci", "uci"]].round(3).to_string(index=False))
print("\nthe 60-month net difference is near zero: by five years the early")
print("benefit and late harm of the time-dependent effect have cancelled.")

# -------------------------------------------------- separable effects

data = cohort.data.copy()
data["rx_c"] = data["rx"]  # component acting on prostate cancer
data["rx_o"] = data["rx"]  # component acting on other causes
dup = SurvivalFrame(data)
rest = tuple(c for c in covariates if c != "rx")
fit_c = fit(ModelSpec(("rx_c",) + rest, 4, (("rx_c", 2),), declare_survival(dup, 1, 60.0)), dup)
fit_o = fit(ModelSpec(("rx_o",) + rest, 3, (), declare_survival(dup, 2, 60.0)), dup)

sep = separable_effects(
    StandardizeRequest(
        models=(fit_c, fit_o),
        data=data,
        estimand="cif",
        scenarios=(
            AtScenario("both on", (("rx_c", 1.0), ("rx_o", 1.0))),
            AtScenario("cancer arm only", (("rx_c", 1.0), ("rx_o", 0.0))),
            AtScenario("both off", (("rx_c", 0.0), ("rx_o", 0.0))),
        ),
        time_grid=(36.0,),
        contrast="difference",
        cause_labels=("prostate", "other"),
    )
)
table = sep.frame[sep.frame.cause == "prostate"]
print("\nseparable decomposition of 36-month prostate cancer incidence")
print(table[["label", "estimate", "lci", "uci"]].round(3).to_string(index=False))
print("\nreading the contrasts against 'both on': switching off only the")
print("other-cause component moves incidence a little (the indirect route,")
print("fewer competing deaths leave more men at risk); switching off both")
print("recovers the total effect, so most of it is the direct route.")
