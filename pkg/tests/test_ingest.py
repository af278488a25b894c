import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from biasmon.ingest import (
    AGE_GROUPS,
    BIRADS_FINDINGS,
    EXCLUDED,
    DataError,
    Dataset,
    PredictionRecord,
    bin_age,
    derive_label,
    dump_dataset,
    exclude_category,
    load_dataset,
    with_age_groups,
)


def test_load_three_rows(write_csv):
    p = write_csv("id,score,label,race\na,0.9,1,A\nb,0.1,0,B\nc,0.4,0,A\n")
    ds = load_dataset(p)
    assert len(ds) == 3
    assert ds.attribute_schema == {"race": ("A", "B")}
    assert ds.records[0].label == 1
    np.testing.assert_allclose(ds.scores, [0.9, 0.1, 0.4])


def test_score_out_of_range(write_csv):
    p = write_csv("id,score,label\na,1.3,1\n")
    with pytest.raises(DataError, match="score out of range at row 2"):
        load_dataset(p)


def test_replicate_columns(write_csv):
    p = write_csv("id,score_1,score_2,score_3,label\na,0.2,0.4,0.6,1\nb,0.1,0.1,0.1,0\n")
    ds = load_dataset(p)
    assert all(len(r.replicate_scores) == 3 for r in ds.records)
    # no plain score column: evaluation score is the replicate mean
    assert ds.records[0].score == pytest.approx(0.4)


def test_plain_score_wins_over_replicates(write_csv):
    p = write_csv("id,score,score_1,score_2,label\na,0.9,0.2,0.4,1\n")
    assert load_dataset(p).records[0].score == 0.9


def test_malformed_row_reports_row_number(write_csv):
    p = write_csv("id,score,label\na,0.5,1\nb,0.5\n")
    with pytest.raises(DataError, match="row 3"):
        load_dataset(p)
    p = write_csv("id,score,label\na,abc,1\n")
    with pytest.raises(DataError, match="row 2"):
        load_dataset(p)


def test_unknown_category_against_schema(write_csv):
    p = write_csv("id,score,label,race\na,0.5,1,Martian\n")
    with pytest.raises(DataError, match="Martian"):
        load_dataset(p, schema={"race": ["A", "B"]})


def test_schema_header_mismatch(write_csv):
    p = write_csv("id,score,label,race\na,0.5,1,A\n")
    with pytest.raises(DataError, match="do not match schema"):
        load_dataset(p, schema={"site": ["1", "2"]})


def test_schema_file(write_csv, tmp_path):
    schema = tmp_path / "schema.json"
    schema.write_text('{"attributes": {"age_group": ["<40", "40-49"]}, "ordinal": ["age_group"]}')
    p = write_csv("id,score,label,age_group\na,0.5,1,<40\nb,0.2,0,\n")
    ds = load_dataset(p, schema)
    assert ds.ordinal == {"age_group"}
    assert ds.records[1].attributes["age_group"] == "Unknown"
    assert ds.attribute_schema["age_group"][-1] == "Unknown"


def test_missing_attribute_is_unknown(write_csv):
    ds = load_dataset(write_csv("id,score,label,race\na,0.5,1,\nb,0.5,0,A\n"))
    assert ds.records[0].attributes["race"] == "Unknown"


def test_birads_derivation_and_exclusion(write_csv):
    ds = load_dataset(write_csv("id,score,birads\na,0.5,4\nb,0.1,1\nc,0.3,0\nd,0.3,3\n"))
    assert [r.label for r in ds.records] == [1, 0, None, None]
    assert ds.n_excluded == 2
    assert len(ds.labeled()) == 2


def test_duplicate_ids_rejected(write_csv):
    with pytest.raises(DataError, match="duplicate"):
        load_dataset(write_csv("id,score,label\na,0.5,1\na,0.4,0\n"))


def test_record_needs_target():
    with pytest.raises(DataError):
        PredictionRecord("x", 0.5)


@pytest.mark.parametrize("code,expected", [(1, 0), (2, 0), (4, 1), (5, 1), (6, 1), (0, EXCLUDED), (3, EXCLUDED)])
def test_derive_label(code, expected):
    assert derive_label(code) is expected or derive_label(code) == expected


@pytest.mark.parametrize("code", [-1, 7, 10])
def test_derive_label_out_of_range(code):
    with pytest.raises(DataError):
        derive_label(code)


def test_derive_label_partition():
    neg = {c for c in range(7) if derive_label(c) == 0}
    pos = {c for c in range(7) if derive_label(c) == 1}
    exc = {c for c in range(7) if derive_label(c) is EXCLUDED}
    assert (neg, pos, exc) == ({1, 2}, {4, 5, 6}, {0, 3})
    assert set(BIRADS_FINDINGS) == set(range(7))


@pytest.mark.parametrize("age,group", [(39, "<40"), (40, "40-49"), (49, "40-49"), (50, "50-59"),
                                       (69, "60-69"), (70, "70-79"), (79, "70-79"), (80, "80+"), (0, "<40")])
def test_bin_age(age, group):
    assert bin_age(age) == group


@given(st.integers(0, 120), st.integers(0, 120))
def test_bin_age_monotone(a, b):
    a, b = min(a, b), max(a, b)
    assert AGE_GROUPS.index(bin_age(a)) <= AGE_GROUPS.index(bin_age(b))


def test_with_age_groups(write_csv):
    ds = load_dataset(write_csv("id,score,label,age\na,0.5,1,39\nb,0.2,0,85\nc,0.2,0,\n"))
    binned = with_age_groups(ds)
    assert [r.attributes["age_group"] for r in binned.records] == ["<40", "80+", "Unknown"]
    assert "age" not in binned.attribute_schema
    assert "age_group" in binned.ordinal


def test_exclude_male_density(write_csv):
    ds = load_dataset(write_csv("id,score,label,density\na,0.5,1,2\nb,0.2,0,5\n"))
    out = exclude_category(ds, "density", "5")
    assert len(out) == 1 and out.attribute_schema["density"] == ("2",)


score = st.floats(0, 1, allow_nan=False)


@given(
    st.lists(
        st.tuples(score, st.sampled_from([0, 1, None]), st.sampled_from([None, 0, 1, 2, 3, 4, 5, 6]),
                  st.sampled_from(["A", "B", "Unknown"]), st.one_of(st.none(), st.lists(score, min_size=2, max_size=2))),
        min_size=1, max_size=20,
    )
)
def test_round_trip(tmp_path_factory, rows):
    records = []
    for i, (s, label, birads, race, reps) in enumerate(rows):
        if label is None and birads is None:
            birads = 0
        if label is None and birads is not None and derive_label(birads) is not EXCLUDED:
            label = derive_label(birads)
        records.append(PredictionRecord(f"r{i}", s, label, birads, {"race": race},
                                        None if reps is None else tuple(reps)))
    if any(r.replicate_scores for r in records):
        records = [r if r.replicate_scores else PredictionRecord(r.id, r.score, r.label, r.birads, r.attributes, (r.score, r.score))
                   for r in records]
    ds = Dataset(records, {"race": ("A", "B", "Unknown")})
    path = tmp_path_factory.mktemp("rt") / "t.csv"
    path.write_text(dump_dataset(ds))
    back = load_dataset(path, schema={"race": ["A", "B", "Unknown"]})
    assert back.records == ds.records
