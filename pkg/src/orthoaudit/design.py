"""Encoding of protected-attribute records into a numeric design matrix.

Conventions: the intercept column always comes first; age enters as
age/100; sex as an indicator for Female (Male = 0); race as indicators for
Black and Asian with White as the reference level.  Category sets are
closed - anything else is an error, never a silent bucket.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, ShapeMismatch, UnknownCategory

SEXES = ("Male", "Female")
RACES = ("White", "Black", "Asian")

AGE_MIN = 0.0
AGE_MAX = 120.0


@dataclass(frozen=True)
class ProtectedRecord:
    """One subject's protected attributes."""

    rid: str
    age: float
    sex: str
    race: str

    def __post_init__(self):
        if not np.isfinite(self.age) or not (AGE_MIN <= self.age <= AGE_MAX):
            raise InvalidInput(f"age {self.age!r} out of [0, 120] for row {self.rid!r}")
        if self.sex not in SEXES:
            raise UnknownCategory(f"sex {self.sex!r} for row {self.rid!r}", row_id=self.rid)
        if self.race not in RACES:
            raise UnknownCategory(f"race {self.race!r} for row {self.rid!r}", row_id=self.rid)


@dataclass(frozen=True)
class FeatureSchema:
    """Which protected features enter the design (intercept is implicit)."""

    age: bool = True
    sex: bool = True
    race: bool = True

    def __post_init__(self):
        if not (self.age or self.sex or self.race):
            raise InvalidInput("schema selects no protected features")

    def column_labels(self):
        labels = ["intercept"]
        if self.age:
            labels.append("age_div100")
        if self.sex:
            labels.append("sex_female")
        if self.race:
            labels.extend(["race_black", "race_asian"])
        return tuple(labels)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Encoded protected features, one row per subject.

    ``data`` is n x p float64 with columns named by ``columns``; ``ids``
    aligns rows with the embedding they describe.
    """

    ids: np.ndarray
    data: np.ndarray
    columns: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "ids", np.asarray(self.ids))
        object.__setattr__(
            self, "data", np.ascontiguousarray(self.data, dtype=np.float64)
        )
        if self.data.ndim != 2:
            raise InvalidInput("design data must be 2-D")
        if self.ids.shape[0] != self.data.shape[0]:
            raise ShapeMismatch(
                f"{self.ids.shape[0]} row ids vs {self.data.shape[0]} design rows"
            )
        if len(set(self.columns)) != len(self.columns):
            raise InvalidInput("duplicate design column labels")
        if len(self.columns) != self.data.shape[1]:
            raise InvalidInput("column labels do not match design width")
        if not np.isfinite(self.data).all():
            raise InvalidInput("design matrix contains non-finite entries")

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def p(self):
        return self.data.shape[1]


def encode_design(records, schema=FeatureSchema()):
    """Encode protected records into a DesignMatrix under ``schema``.

    Column order is fixed: intercept, age_div100, sex_female, race_black,
    race_asian (restricted to the selected features).
    """
    if not records:
        raise InvalidInput("no records to encode")
    seen = {r.rid for r in records}
    if len(seen) != len(records):
        raise InvalidInput("duplicate record ids")
    labels = schema.column_labels()
    n = len(records)
    data = np.zeros((n, len(labels)))
    data[:, 0] = 1.0
    ids = []
    for i, rec in enumerate(records):
        ids.append(rec.rid)
        j = 1
        if schema.age:
            data[i, j] = rec.age / 100.0
            j += 1
        if schema.sex:
            data[i, j] = 1.0 if rec.sex == "Female" else 0.0
            j += 1
        if schema.race:
            data[i, j] = 1.0 if rec.race == "Black" else 0.0
            data[i, j + 1] = 1.0 if rec.race == "Asian" else 0.0
    return DesignMatrix(ids=np.asarray(ids), data=data, columns=labels)
