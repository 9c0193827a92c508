"""Does the treatment effect depend on age? Spline interactions and the
packaged recipe runner.

Age enters the prostate cancer model as a restricted cubic spline with
treatment interactions, so the standardized effect can bend with age
instead of jumping between age bands. The packaged recipes rebuild the
whole pipeline (preparation, both model fits, standardization) from the
raw file and leave a CSV plus a JSON manifest on disk; reruns are
byte-identical, so the artifacts diff cleanly.

Run from the repository root:

    python3 demos/age_effect_modification.py
"""

import pathlib
import tempfile

from crstd import RECIPES, load_csv, run_recipe
from crstd.dataset import PROSTATE_SCHEMA

ROOT = pathlib.Path(__file__).resolve().parents[1]

print("packaged recipes:", ", ".join(sorted(RECIPES)))

raw = load_csv(ROOT / "data" / "prostate.csv", schema=PROSTATE_SCHEMA)
out_dir = tempfile.mkdtemp(prefix="crstd-demo-")
result = run_recipe("appendixB-age-specific", raw, out_dir=out_dir, time_grid=(60.0,))
print("artifacts written:")
for path in result["paths"]:
    print(f"  {path}")

# labels look like "age65:at2": the cohort's covariates with age pinned,
# everyone untreated (at1) or treated (at2)
table = result["table"]
sub = table[(table.cause == "prostate") & (table.time == 60.0)].copy()
sub["age"] = sub.label.str.split(":").str[0]
sub["arm"] = sub.label.str.split(":").str[1].map({"at1": "untreated", "at2": "treated"})
print("\n60-month prostate cancer incidence with age held at 55, 65, 75")
print(
    sub.pivot_table(index="age", columns="arm", values="estimate")
    .assign(difference=lambda d: d.treated - d.untreated)
    .round(3)
    .to_string()
)
print("\nthe protective effect concentrates in younger men and fades by 75,")
print("which age-band dummies at a coarser grain would blur.")

spline = result["manifest"]["run"]["age_spline"]
print(f"\nmanifest records the age spline (knots at ages {spline['knots']}) and its")
print("orthogonalisation matrix, enough to reproduce the basis at any age.")
