from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fa_forge.estimator import FederatedQueryPlanner
from fa_forge.synth import synth_rows

from conftest import FIXTURES


@pytest.fixture(scope="module")
def rows():
    import csv

    with open(FIXTURES / "university_n10.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def test_params_and_clone():
    est = FederatedQueryPlanner(schema="university", use_optimizer=False, seed=3)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    with pytest.raises(NotFittedError):
        est.transform([{"subqueries": [{"intent": "Count"}]}])


def test_transform_gives_op_counts(rows):
    gap = (FIXTURES / "salary_gap_ir.json").read_text()
    opt = FederatedQueryPlanner(schema="university").fit(rows)
    naive = FederatedQueryPlanner(schema="university", use_optimizer=False).fit(rows)
    a, b = opt.transform([gap]), naive.transform([gap])
    assert a.shape == (1, 6)
    np.testing.assert_array_equal(a[0], [1, 2, 2, 6, 6, 6])
    assert (a[0, :3] < b[0, :3]).all()
    assert list(opt.get_feature_names_out()) == ["acce", "enc", "aggr", "dp", "dec", "cal"]


def test_predict_matches_fixture_answers(rows):
    est = FederatedQueryPlanner(schema="university", key_bits=128).fit(rows)
    [ans] = est.predict([(FIXTURES / "salary_gap_ir.json").read_text()])
    assert ans["mean_salary__all"] == 79525.149 and ans["combine_diff_2_3"] == 107416.5
    assert est.n_clients_ == 10


def test_fit_accepts_arrays(adult_schema):
    data = synth_rows(30, 2, adult_schema)
    arr = np.array([[r[f] for f in adult_schema.names()] for r in data], dtype=object)
    est = FederatedQueryPlanner().fit(arr)
    assert est.n_clients_ == 30
