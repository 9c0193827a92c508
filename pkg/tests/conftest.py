"""Shared fixtures: the trial data and the two fitted main models.

Model fits are session-scoped; they are deterministic and reused by
the standardization, analysis, CLI and acceptance tests.
"""
import pathlib

import pytest

from crstd import ModelSpec, declare_survival, fit, load_csv, prepare_prostate
from crstd.dataset import PROSTATE_SCHEMA

DATA_PATH = pathlib.Path(__file__).resolve().parent.parent / "data" / "prostate.csv"

MAIN_COVARIATES = ("rx", "normalAct", "ageCat2", "ageCat3", "hx", "hgBinary")


@pytest.fixture(scope="session")
def raw_frame():
    return load_csv(DATA_PATH, schema=PROSTATE_SCHEMA)


@pytest.fixture(scope="session")
def cohort(raw_frame):
    return prepare_prostate(raw_frame)


@pytest.fixture(scope="session")
def prostate_fit(cohort):
    spec = ModelSpec(MAIN_COVARIATES, 4, (("rx", 2),), declare_survival(cohort, 1, 60))
    return fit(spec, cohort)


@pytest.fixture(scope="session")
def other_fit(cohort):
    spec = ModelSpec(MAIN_COVARIATES, 3, (), declare_survival(cohort, 2, 60))
    return fit(spec, cohort)
