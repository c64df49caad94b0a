import io
import json

import numpy as np
import pytest

from nctest import (
    DataError,
    StatisticSet,
    load_csv,
    make_statistic_set,
    ranc_values,
    tie_report,
    to_json_dict,
    with_jitter,
)

BASIC_CSV = """id,value,role
a,0.1,test
b,0.5,test
c,0.9,test
n1,0.3,nc
n2,0.7,nc
"""


def test_load_csv_basic():
    s = load_csv(io.StringIO(BASIC_CSV))
    assert s.n == 3
    assert s.m == 2
    assert s.investigation_ids == ("a", "b", "c")
    assert s.nc_ids == ("n1", "n2")
    np.testing.assert_array_equal(s.investigation, [0.1, 0.5, 0.9])
    np.testing.assert_array_equal(s.negative_controls, [0.3, 0.7])


def test_load_csv_no_nc_is_error():
    csv_text = "id,value,role\na,0.1,test\n"
    with pytest.raises(DataError, match="no negative controls"):
        load_csv(io.StringIO(csv_text))


def test_load_csv_no_test_is_error():
    csv_text = "id,value,role\na,0.1,nc\n"
    with pytest.raises(DataError):
        load_csv(io.StringIO(csv_text))


def test_orientation_flips_sign():
    s = make_statistic_set([1.0, 2.0], [3.0], orientation="large_is_significant")
    np.testing.assert_array_equal(s.investigation, [-1.0, -2.0])
    np.testing.assert_array_equal(s.negative_controls, [-3.0])
    np.testing.assert_array_equal(s.to_original(s.investigation), [1.0, 2.0])


def test_duplicate_id_rejected():
    with pytest.raises(DataError, match="duplicate id"):
        make_statistic_set([0.1], [0.2], investigation_ids=["x"], nc_ids=["x"])


def test_non_finite_rejected():
    with pytest.raises(DataError):
        make_statistic_set([np.inf], [0.2])
    csv_text = "id,value,role\na,nan,test\nn,0.1,nc\n"
    with pytest.raises(DataError, match="non-finite"):
        load_csv(io.StringIO(csv_text))


def test_unknown_role_rejected():
    csv_text = "id,value,role\na,0.1,banana\nn,0.1,nc\n"
    with pytest.raises(DataError, match="unknown role"):
        load_csv(io.StringIO(csv_text))


def test_optional_columns():
    csv_text = (
        "id,value,role,subgroup,treatment,control,truth\n"
        "a,0.1,test,nuclear,1.5,1.2,nonnull\n"
        "b,0.4,test,,,,null\n"
        "n1,0.3,nc,nuclear,0.9,1.0,\n"
    )
    s = load_csv(io.StringIO(csv_text))
    assert s.subgroup == {"a": "nuclear", "n1": "nuclear"}
    assert s.paired_raw == {"a": (1.5, 1.2), "n1": (0.9, 1.0)}
    assert s.truth == {"a": "nonnull", "b": "null"}
    np.testing.assert_array_equal(s.truth_mask(), [True, False])


def test_truth_label_validated():
    with pytest.raises(DataError, match="truth"):
        make_statistic_set([0.1], [0.2], truth={"t1": "maybe"})


def test_column_mapping():
    csv_text = "name,stat,kind\na,0.1,test\nn,0.3,nc\n"
    s = load_csv(
        io.StringIO(csv_text),
        columns={"id": "name", "value": "stat", "role": "kind"},
    )
    assert s.n == 1 and s.m == 1


def test_json_round_trip_preserves_multiset():
    csv_text = (
        "id,value,role,truth\n"
        "a,0.30000000000000004,test,null\n"
        "n1,-1.7,nc,\n"
    )
    s = load_csv(io.StringIO(csv_text), orientation="large_is_significant")
    d = to_json_dict(s)
    assert d["orientation"] == "large_is_significant"
    by_role = {}
    for row in d["rows"]:
        by_role.setdefault(row["role"], []).append((row["id"], row["value"]))
    assert by_role["test"] == [("a", 0.30000000000000004)]
    assert by_role["nc"] == [("n1", -1.7)]
    json.dumps(d)


def test_values_read_only():
    s = make_statistic_set([0.1], [0.2])
    with pytest.raises(ValueError):
        s.investigation[0] = 5.0


def test_tie_report_no_ties():
    s = make_statistic_set([0.1, 0.2], [0.3, 0.4])
    r = tie_report(s)
    assert r.groups == ()
    assert r.count_cross == 0
    assert not r


def test_tie_report_cross_tie():
    s = make_statistic_set([0.5, 0.1], [0.5, 0.9])
    r = tie_report(s)
    assert r.count_cross == 1
    assert len(r.groups) == 1
    value, ids = r.groups[0]
    assert value == 0.5
    assert set(ids) == {"t1", "c1"}


def test_tie_report_within_nc():
    s = make_statistic_set([0.1], [0.7, 0.7, 0.7])
    r = tie_report(s)
    assert r.count_cross == 0
    assert len(r.groups) == 1
    assert len(r.groups[0][1]) == 3


def test_jitter_breaks_ties_and_preserves_order():
    s = make_statistic_set([0.5, 0.1, 0.9], [0.5, 0.5, 2.0])
    j = with_jitter(s, seed=7)
    assert not tie_report(j)
    pooled = np.concatenate([s.investigation, s.negative_controls])
    jittered = np.concatenate([j.investigation, j.negative_controls])
    # distinct values must keep their relative order
    for a in range(pooled.size):
        for b in range(pooled.size):
            if pooled[a] < pooled[b]:
                assert jittered[a] < jittered[b]
    j2 = with_jitter(s, seed=7)
    np.testing.assert_array_equal(j.investigation, j2.investigation)
    j3 = with_jitter(s, seed=8)
    assert not np.array_equal(j.investigation, j3.investigation)


def test_orientation_invariance_of_ranks():
    # applying a strictly increasing map on the original scale must not
    # change rank based p-values after normalization
    rng = np.random.default_rng(3)
    raw_t = rng.normal(size=20)
    raw_nc = rng.normal(size=50)
    s1 = make_statistic_set(raw_t, raw_nc, orientation="large_is_significant")
    s2 = make_statistic_set(
        np.expm1(raw_t), np.expm1(raw_nc), orientation="large_is_significant"
    )
    p1 = ranc_values(s1.investigation, s1.negative_controls)
    p2 = ranc_values(s2.investigation, s2.negative_controls)
    np.testing.assert_array_equal(p1, p2)


def test_statistic_set_requires_data():
    with pytest.raises(DataError):
        StatisticSet(investigation_ids=(), investigation=np.array([]), nc_ids=("c",), negative_controls=np.array([1.0]))
