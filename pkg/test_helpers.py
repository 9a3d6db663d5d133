#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Tests for the 2x2 helpers and the artifact writers."""

import json
import math

import numpy as np
import pytest

from utils.helpers import (ad_matrix, expm_sl2, from_su11, hs_norm, inverse2, logm_sl2, op_norm2,
                           rotation, sl2_coordinates, sl2_from_coordinates, to_su11, torus_distance)
from utils.output import format_value, read_csv_artifact, render_csv, render_json, write_artifact


def test_rotation_quarter_turn():
    assert np.allclose(rotation(0.25), [[0, 1], [-1, 0]], atol=1e-15)


def test_rotation_is_diagonal_in_su11():
    phi = 0.1
    z = to_su11(rotation(phi))
    expected = np.diag([np.exp(2j * np.pi * phi), np.exp(-2j * np.pi * phi)])
    assert np.allclose(z, expected, atol=1e-14)


def test_su11_round_trip():
    x = np.array([[0.3, -1.2], [0.7, -0.3]])
    assert np.allclose(from_su11(to_su11(x)), x, atol=1e-14)


@pytest.mark.parametrize("matrix", [
    rotation(0.1),
    np.array([[2.0, 1.0], [1.0, 1.0]]),
    np.array([[1.0, 1e-9], [0.0, 1.0]]),
])
def test_expm_inverts_logm(matrix):
    assert np.allclose(expm_sl2(logm_sl2(matrix)), matrix, atol=1e-12)


def test_logm_rejects_minus_identity():
    with pytest.raises(ValueError):
        logm_sl2(-np.eye(2))


def test_expm_keeps_longdouble():
    x = np.array([[0.0, 0.5], [-0.5, 0.0]], dtype=np.longdouble)
    assert expm_sl2(x).dtype == np.longdouble


def test_norms():
    a = np.diag([3.0, 1 / 3])
    assert math.isclose(float(op_norm2(a)), 3.0, rel_tol=1e-14)
    assert math.isclose(float(hs_norm(a)), math.sqrt(9 + 1 / 9), rel_tol=1e-14)


def test_norms_do_not_overflow():
    a = np.diag([1e160, 1e-160])
    assert math.isclose(float(op_norm2(a)), 1e160, rel_tol=1e-14)
    assert math.isclose(float(hs_norm(a)), 1e160, rel_tol=1e-14)
    assert float(op_norm2(np.zeros((2, 2)))) == 0.0


def test_op_norm2_matches_svd():
    rng = np.random.default_rng(3)
    batch = rng.normal(size=(50, 2, 2)) * 10.0 ** rng.integers(-5, 60, size=(50, 1, 1))
    expected = np.linalg.norm(batch, ord=2, axis=(-2, -1))
    assert np.allclose(op_norm2(batch), expected, rtol=1e-10, atol=0)


def test_inverse2():
    a = np.array([[2.0, 1.0], [1.0, 1.0]])
    assert np.allclose(inverse2(a) @ a, np.eye(2))


def test_ad_matrix_of_identity():
    assert np.allclose(ad_matrix(np.eye(2)), np.eye(3))


def test_ad_matrix_acts_by_conjugation():
    a = np.array([[2.0, 1.0], [1.0, 1.0]])
    y = np.array([[0.4, -0.2], [0.9, -0.4]])
    image = inverse2(a) @ y @ a
    assert np.allclose(ad_matrix(a) @ sl2_coordinates(y), sl2_coordinates(image))
    assert np.allclose(sl2_from_coordinates(sl2_coordinates(y)), y)


def test_torus_distance():
    assert np.allclose(torus_distance(np.array([0.9, 1.25, -0.1])), [0.1, 0.25, 0.1])


def test_format_value():
    assert format_value(True) == 'true'
    assert format_value(None) == ''
    assert format_value(float('inf')) == 'inf'
    assert format_value(np.int64(3)) == '3'
    assert float(format_value(0.1)) == 0.1


def test_csv_header_round_trip():
    meta = {'command': 'gaps', 'parameters': {'lambda': 0.5}, 'artifact_version': '1.0'}
    text = render_csv(['k', 'length'], [(1, 0.25), (2, None)], meta)
    parsed = read_csv_artifact(text)
    assert parsed['meta']['command'] == 'gaps'
    assert parsed['meta']['parameters'] == {'lambda': 0.5}
    assert parsed['columns'] == ['k', 'length']
    assert parsed['rows'] == [['1', '0.25'], ['2', '']]


def test_csv_rejects_ragged_rows():
    with pytest.raises(ValueError):
        render_csv(['a', 'b'], [(1,)], {})


def test_json_is_deterministic_and_safe():
    meta = {'b': 1, 'a': float('nan')}
    first = render_json(['x'], [(np.float64(1.5),)], meta)
    assert first == render_json(['x'], [(np.float64(1.5),)], meta)
    doc = json.loads(first)
    assert doc['meta']['a'] == 'nan'
    assert doc['data'] == [{'x': 1.5}]


def test_write_artifact_to_file(tmp_path):
    path = tmp_path / "out.csv"
    write_artifact(str(path), 'csv', ['n'], [(1,), (2,)], {'command': 'growth'})
    parsed = read_csv_artifact(path.read_text(encoding='utf-8'))
    assert parsed['rows'] == [['1'], ['2']]
