import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anycastlb.model import (
    IngestReport,
    SystemInstance,
    compute_load,
    load_instance,
    make_instance,
    parse_instance,
    routing_matrix,
    save_instance,
    validate,
)

from conftest import random_instance


def test_validate_canonical_ok(two_node):
    assert validate(two_node).ok


def test_validate_reports_bad_row_sum():
    inst = make_instance([[0.5, 0.4], [0.5, 0.5]], [1, 1], [0.7, 0.7])
    rep = validate(inst)
    assert not rep.ok
    assert any("row 0" in v for v in rep.violations)


def test_validate_single_node_identity():
    inst = make_instance([[1.0]], [2.0], [1.0])
    assert validate(inst).ok


def test_validate_reports_every_violation():
    inst = make_instance([[0.5, 0.4], [-0.1, 1.1]], [1, -1], [0.7, 0.7])
    rep = validate(inst)
    msgs = "\n".join(rep.violations)
    assert "row 0" in msgs and "row 1" not in msgs  # row 1 sums to 1.0
    assert "corr[1,0]" in msgs
    assert "arrivals[1]" in msgs


def test_routing_matrix_values():
    inst = make_instance([[0.8, 0.2], [0.2, 0.8]], [5, 5], [0.7, 0.7])
    assert routing_matrix(inst).tolist() == [[4.0, 1.0], [1.0, 4.0]]


def test_routing_matrix_zero_arrivals():
    inst = make_instance([[0.8, 0.2], [0.2, 0.8]], [0, 0], [0.7, 0.7])
    assert not routing_matrix(inst).any()


def test_routing_matrix_single():
    inst = make_instance([[1.0]], [3.0], [1.0])
    assert routing_matrix(inst).tolist() == [[3.0]]


def test_compute_load_canonical(two_node):
    np.testing.assert_allclose(compute_load(two_node, [1, 1]), [0.6, 1.4])
    np.testing.assert_allclose(compute_load(two_node, [0.5, 0.5]), [0.3, 0.7])
    assert not compute_load(two_node, [0, 0]).any()


def test_compute_load_rejects_out_of_range(two_node):
    with pytest.raises(ValueError):
        compute_load(two_node, [1.5, 0.0])
    with pytest.raises(ValueError):
        compute_load(two_node, [-0.1, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_load_superposition(seed, n):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n)
    x = rng.uniform(0.0, 0.5, size=n)
    y = rng.uniform(0.0, 0.5, size=n)
    np.testing.assert_allclose(
        compute_load(inst, x + y), compute_load(inst, x) + compute_load(inst, y),
        rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_total_load_conserved_at_full_routing(seed, n):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n)
    s = compute_load(inst, np.ones(n))
    assert s.sum() == pytest.approx(inst.arrivals.sum(), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_load_bounded_by_column_mass(seed, n):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n)
    x = rng.uniform(0.0, 1.0, size=n)
    bound = inst.corr.T @ inst.arrivals
    assert np.all(compute_load(inst, x) <= bound + 1e-12)


def test_instance_arrays_immutable(two_node):
    with pytest.raises(ValueError):
        two_node.corr[0, 0] = 0.5


def test_strictly_positive_flag(two_node):
    assert two_node.strictly_positive
    inst = make_instance([[1.0, 0.0], [0.5, 0.5]], [1, 1], [0.7, 0.7])
    assert not inst.strictly_positive


def test_json_round_trip(tmp_path, two_node):
    path = tmp_path / "inst.json"
    save_instance(two_node, path, meta={"seed": 3})
    loaded, report = load_instance(path, with_report=True)
    assert isinstance(report, IngestReport)
    assert report.max_adjustment == 0.0
    np.testing.assert_array_equal(loaded.corr, two_node.corr)
    np.testing.assert_array_equal(loaded.arrivals, two_node.arrivals)


def test_ingest_rescales_near_stochastic_rows(tmp_path, two_node):
    obj = {
        "n": 2,
        "corr": [[0.1, 0.9 + 3e-10], [0.5, 0.5]],
        "arrivals": [1, 1], "thresholds": [0.7, 0.7],
        "eta": [1, 1], "gamma_cost": [10, 10], "d": [0.5, 0.5],
    }
    inst, report = parse_instance(obj)
    assert len(report.row_sum_adjustments) == 1
    assert report.row_sum_adjustments[0][0] == 0
    assert abs(inst.corr[0].sum() - 1.0) <= 1e-12


def test_ingest_rejects_large_row_deviation():
    obj = {
        "n": 2,
        "corr": [[0.1, 0.8], [0.5, 0.5]],
        "arrivals": [1, 1], "thresholds": [0.7, 0.7],
        "eta": [1, 1], "gamma_cost": [10, 10], "d": [0.5, 0.5],
    }
    with pytest.raises(ValueError, match="ingest tolerance"):
        parse_instance(obj)


def test_ingest_rejects_nan(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"n": 1, "corr": [[NaN]], "arrivals": [1], "thresholds": [1],'
                    ' "eta": [1], "gamma_cost": [1], "d": [0]}')
    with pytest.raises(ValueError, match="non-finite"):
        load_instance(path)


def test_ingest_missing_keys():
    with pytest.raises(ValueError, match="missing keys"):
        parse_instance({"n": 1})
