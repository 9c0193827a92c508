"""Data loading, recoding and survival declaration."""
import hashlib

import numpy as np
import pandas as pd
import pytest

from crstd import SurvivalFrame, declare_survival, load_csv, prepare_prostate
from tests.conftest import DATA_PATH

# counts frozen from an independent recoding script (tests/oracles)
RAW_SHA256 = "2b0c68bbebe91845b91757d0e374ca9bc5f8f29ea993bff2f9e0dfcc3912ba90"
COHORT_ROWS = 252
EVENT_COUNTS = {0: 64, 1: 64, 2: 124}
EVENTS_BY_60 = {1: 61, 2: 119}


def test_raw_file_unchanged():
    digest = hashlib.sha256(DATA_PATH.read_bytes()).hexdigest()
    assert digest == RAW_SHA256


def test_cohort_size_and_event_counts(cohort):
    assert cohort.n_rows == COHORT_ROWS
    counts = cohort.data["eventType"].value_counts().to_dict()
    assert counts == EVENT_COUNTS


def test_arm_sizes(cohort):
    rx = cohort.data["rx"]
    assert int((rx == 0).sum()) == 127
    assert int((rx == 1).sum()) == 125


def test_events_within_followup(cohort):
    for code, expected in EVENTS_BY_60.items():
        decl = declare_survival(cohort, code, 60)
        assert decl.n_events == expected


def test_zero_times_become_half_month(cohort):
    times = cohort.data["dtime"]
    assert (times > 0).all()
    assert (times == 0.5).any()


def test_allcause_consistent(cohort):
    data = cohort.data
    assert ((data["allcause"] == 1) == (data["eventType"] > 0)).all()


def test_age_categories_partition(cohort):
    data = cohort.data
    dummies = data[["ageCat1", "ageCat2", "ageCat3"]].to_numpy()
    assert set(np.unique(dummies)) <= {0, 1}
    assert (dummies.sum(axis=1) == 1).all()
    assert ((data["age"] < 60) == (data["ageCat1"] == 1)).all()
    assert (((data["age"] >= 60) & (data["age"] < 75)) == (data["ageCat2"] == 1)).all()
    assert ((data["age"] >= 75) == (data["ageCat3"] == 1)).all()


def test_binary_derived_columns(cohort):
    data = cohort.data
    assert ((data["hgBinary"] == 1) == (data["hg"] < 12)).all()
    assert set(data["normalAct"].unique()) <= {0, 1}
    assert set(data["rx"].unique()) == {0, 1}


def test_prepare_is_idempotent(cohort):
    again = prepare_prostate(cohort)
    pd.testing.assert_frame_equal(again.data, cohort.data)


def test_prepare_accepts_dataframe(raw_frame):
    from_frame = prepare_prostate(raw_frame)
    from_df = prepare_prostate(raw_frame.data)
    pd.testing.assert_frame_equal(from_frame.data, from_df.data)


def test_load_csv_reports_bad_cell(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("dtime,age\n1.0,not-a-number\n")
    with pytest.raises(ValueError, match="age"):
        load_csv(path, schema={"age": "float"})


def test_load_csv_rejects_empty(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(ValueError):
        load_csv(path)


def test_load_csv_header_only(tmp_path):
    path = tmp_path / "header.csv"
    path.write_text("dtime,age\n")
    frame = load_csv(path)
    assert frame.n_rows == 0


def test_raw_row_count():
    assert load_csv(DATA_PATH).n_rows == 502


def test_unknown_status_label_rejected():
    bad = pd.DataFrame(
        {
            "rx": ["placebo"],
            "dtime": [5.0],
            "status": ["dead - unknown reason"],
            "hg": [13.0],
            "age": [70.0],
            "pf": ["normal activity"],
            "hx": [0.0],
        }
    )
    with pytest.raises(ValueError, match="status"):
        prepare_prostate(bad)


def test_declaration_validates_exit_time(cohort):
    with pytest.raises(ValueError):
        declare_survival(cohort, 1, -1.0)


def test_declaration_truncates_at_exit(cohort):
    decl = declare_survival(cohort, 1, 30)
    assert decl.analysis_time.max() <= 30
    late = cohort.time > 30
    assert not decl.d[late].any()


def test_unprepared_frame_has_no_event_codes():
    frame = SurvivalFrame(pd.DataFrame({"x": [1.0]}))
    with pytest.raises(ValueError):
        frame.event_code
    with pytest.raises(ValueError):
        frame.time
