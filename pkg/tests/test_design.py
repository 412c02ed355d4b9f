import numpy as np
import pytest
from hypothesis import given, strategies as st

from orthoaudit.design import (
    RACES,
    SEXES,
    DesignMatrix,
    FeatureSchema,
    ProtectedRecord,
    encode_design,
)
from orthoaudit.errors import InvalidInput, UnknownCategory


def rec(rid, age, sex, race):
    return ProtectedRecord(rid, age, sex, race)


def test_male_white_row():
    dm = encode_design([rec("a", 50, "Male", "White")])
    assert dm.columns == ("intercept", "age_div100", "sex_female", "race_black", "race_asian")
    np.testing.assert_array_equal(dm.data, [[1.0, 0.5, 0.0, 0.0, 0.0]])


def test_female_black_row():
    dm = encode_design([rec("b", 60, "Female", "Black")])
    np.testing.assert_array_equal(dm.data, [[1.0, 0.6, 1.0, 1.0, 0.0]])


def test_asian_indicator():
    dm = encode_design([rec("c", 0, "Male", "Asian")])
    np.testing.assert_array_equal(dm.data, [[1.0, 0.0, 0.0, 0.0, 1.0]])


def test_unknown_race_rejected():
    with pytest.raises(UnknownCategory):
        rec("x", 40, "Male", "Other")


def test_unknown_sex_rejected():
    with pytest.raises(UnknownCategory):
        rec("x", 40, "male", "White")  # case sensitive on purpose


def test_age_bounds():
    rec("lo", 0, "Male", "White")
    rec("hi", 120, "Female", "Asian")
    with pytest.raises(InvalidInput):
        rec("neg", -1, "Male", "White")
    with pytest.raises(InvalidInput):
        rec("big", 121, "Male", "White")
    with pytest.raises(InvalidInput):
        rec("nan", float("nan"), "Male", "White")


def test_empty_records_rejected():
    with pytest.raises(InvalidInput):
        encode_design([])


def test_duplicate_ids_rejected():
    rows = [rec("a", 30, "Male", "White"), rec("a", 40, "Female", "Black")]
    with pytest.raises(InvalidInput):
        encode_design(rows)


def test_schema_subsets():
    rows = [rec("a", 50, "Female", "Black")]
    dm = encode_design(rows, FeatureSchema(age=True, sex=False, race=False))
    assert dm.columns == ("intercept", "age_div100")
    np.testing.assert_array_equal(dm.data, [[1.0, 0.5]])
    dm = encode_design(rows, FeatureSchema(age=False, sex=True, race=True))
    assert dm.columns == ("intercept", "sex_female", "race_black", "race_asian")


def test_design_matrix_shape_accessors():
    rows = [rec("a", 10, "Male", "White"), rec("b", 20, "Female", "Asian")]
    dm = encode_design(rows)
    assert isinstance(dm, DesignMatrix)
    assert dm.n == 2 and dm.p == 5
    assert dm.ids.tolist() == ["a", "b"]


ages = st.integers(min_value=0, max_value=120)
sexes = st.sampled_from(SEXES)
races = st.sampled_from(RACES)


@given(st.lists(st.tuples(ages, sexes, races), min_size=1, max_size=20))
def test_encoding_is_deterministic_and_bounded(rows):
    records = [rec(f"r{i}", a, s, g) for i, (a, s, g) in enumerate(rows)]
    first = encode_design(records)
    second = encode_design(records)
    np.testing.assert_array_equal(first.data, second.data)
    # intercept always one, age scaled into [0, 1.2], indicators in {0, 1}
    assert np.all(first.data[:, 0] == 1.0)
    assert np.all((first.data[:, 1] >= 0) & (first.data[:, 1] <= 1.2))
    assert set(np.unique(first.data[:, 2:])) <= {0.0, 1.0}
    # race indicators are mutually exclusive
    assert np.all(first.data[:, 3] + first.data[:, 4] <= 1.0)


@given(ages.filter(lambda a: a <= 110), sexes, races)
def test_ten_years_moves_age_column_by_tenth(age, sex, race):
    lo = encode_design([rec("a", age, sex, race)])
    hi = encode_design([rec("a", age + 10, sex, race)])
    assert hi.data[0, 1] - lo.data[0, 1] == pytest.approx(0.1, abs=1e-12)
    np.testing.assert_array_equal(lo.data[:, 2:], hi.data[:, 2:])
