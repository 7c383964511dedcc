import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relaxsim.errors import ParameterError
from relaxsim.thermo import ThermoRecord, clausius_report, first_law_residual, records_from_arrays


def test_record_validation():
    with pytest.raises(ParameterError):
        ThermoRecord(0.0, math.nan, (0.0,))
    with pytest.raises(ParameterError):
        ThermoRecord(0.0, 1.0, (0.0,), entropy_production_rate=-math.inf)
    assert ThermoRecord(0.0, 1.0, (0.0,), entropy_production_rate=math.inf).entropy_production_rate == math.inf


def test_first_law_exact_ledger():
    t = np.linspace(0, 1, 11)
    q = np.stack([np.sin(t), 0.3 * t], axis=1)
    w = t**2
    e = 2.0 + q.sum(axis=1) + w
    assert np.abs(first_law_residual(records_from_arrays(t, e, q, w))).max() < 1e-15


@given(st.permutations(range(6)))
def test_reports_are_order_independent(order):
    t = np.linspace(0, 1, 6)
    recs = records_from_arrays(t, np.exp(-t), np.exp(-t) - 1, entropy=1 - np.exp(-2 * t))
    shuffled = [recs[i] for i in order]
    np.testing.assert_array_equal(first_law_residual(recs), first_law_residual(shuffled))
    np.testing.assert_array_equal(clausius_report(recs, [1.0]).rate, clausius_report(shuffled, [1.0]).rate)


def test_equilibrium_segment_is_zero():
    t = np.linspace(0, 2, 9)
    recs = records_from_arrays(t, np.ones(9), np.zeros(9), entropy=np.full(9, 3.0))
    rep = clausius_report(recs, [2.0])
    assert np.abs(rep.rate).max() <= 1e-9 and rep.satisfied and rep.classification == "satisfied"


def test_gradient_scheme_is_documented_centred_difference():
    t = np.array([0.0, 1.0, 2.0])
    recs = records_from_arrays(t, np.zeros(3), np.zeros(3), entropy=t**2)
    np.testing.assert_allclose(clausius_report(recs, [1.0]).rate, [1.0, 2.0, 3.0])


@pytest.mark.parametrize("certified,label", [(True, "solver-bug"), (False, "physics-finding"), (None, "violated")])
def test_violation_classification(certified, label):
    t = np.linspace(0, 1, 5)
    recs = records_from_arrays(t, np.zeros(5), np.zeros(5), entropy=-t)
    rep = clausius_report(recs, [1.0], certified=certified)
    assert not rep.satisfied and rep.classification == label
    assert rep.to_dict()["classification"] == label


def test_instantaneous_column_enters_verdict():
    t = np.linspace(0, 1, 5)
    recs = records_from_arrays(t, np.zeros(5), np.zeros(5), entropy=t, entropy_production=[1, 1, -1e-6, 1, 1])
    rep = clausius_report(recs, [1.0])
    assert rep.instantaneous_min == -1e-6 and not rep.satisfied


def test_input_checks():
    t = np.linspace(0, 1, 3)
    with pytest.raises(ParameterError):
        first_law_residual(records_from_arrays(t[:1], [0.0], [0.0]))
    with pytest.raises(ParameterError):
        clausius_report(records_from_arrays(t, np.zeros(3), np.zeros(3)), [1.0])
    with pytest.raises(ParameterError):
        clausius_report(records_from_arrays(t, np.zeros(3), np.zeros((3, 2)), entropy=t), [1.0])
    with pytest.raises(ParameterError):
        first_law_residual(records_from_arrays([0.0, 0.0], [0.0, 0.0], [0.0, 0.0]))
