#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Tests for approximant band spectra and the gap-decay experiment."""

import math
from fractions import Fraction

import numpy as np
import pytest

from arithmetic import golden
from errors import DomainError
from spectrum import (band_spectrum, chambers_discriminant, gap_decay_experiment, gap_decay_slope, ids,
                      trace_extremum_check)


def test_discriminant_of_period_one():
    assert float(chambers_discriminant(0.7, Fraction(1, 1), 1.3)) == pytest.approx(1.3, abs=1e-12)


def test_chambers_formula_holds_on_a_phase_grid():
    assert trace_extremum_check(0.5, Fraction(2, 5), 0.3) < 1e-10
    assert trace_extremum_check(1.7, Fraction(3, 8), -1.1) < 1e-8


def test_period_two_bands():
    bs = band_spectrum(0.5, Fraction(1, 2))
    lo, hi = bs.hull
    assert lo == pytest.approx(-math.sqrt(5), abs=1e-9)
    assert hi == pytest.approx(math.sqrt(5), abs=1e-9)
    assert len(bs.bands) == 2 and len(bs.gaps) == 1
    assert bs.gaps[0].label == 1
    assert bs.gaps[0].length < 1e-8


def test_gap_labels_follow_congruence():
    bs = band_spectrum(1.5, Fraction(2, 5))
    assert [gap.label for gap in bs.gaps] == [-2, 1, -1, 2]
    for gap in bs.gaps:
        assert (gap.label * 2 - gap.m) % 5 == 0


def test_bands_are_ordered_and_inside():
    bs = band_spectrum(0.8, Fraction(5, 8))
    edges = [e for band in bs.bands for e in band]
    assert edges == sorted(edges)
    bound = 2 + 2 * 0.8 ** 8
    mids = np.array([(lo + hi) / 2 for lo, hi in bs.bands])
    assert np.all(np.abs(chambers_discriminant(0.8, bs.pq, mids)) <= bound * (1 + 1e-6))
    assert 0 < bs.measure() < 4 + 4 * 0.8


def test_band_spectrum_errors():
    with pytest.raises(DomainError):
        band_spectrum(0.0, Fraction(1, 3))


def test_ids_is_constant_on_gaps():
    bs = band_spectrum(1.5, Fraction(1, 3))
    lo, hi = bs.hull
    assert ids(bs, lo - 1) == 0.0
    assert ids(bs, hi + 1) == 1.0
    open_gaps = [gap for gap in bs.gaps if gap.length > 1e-6]
    assert open_gaps
    for gap in open_gaps:
        assert ids(bs, (gap.left + gap.right) / 2) == pytest.approx(gap.m / 3)


def test_ids_is_monotone():
    bs = band_spectrum(1.5, Fraction(2, 5))
    lo, hi = bs.hull
    values = [ids(bs, E) for E in np.linspace(lo, hi, 101)]
    assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


def test_gap_decay_rows_are_symmetric():
    rows = gap_decay_experiment(0.5, golden(), 100, 3)
    assert [row.k for row in rows] == [1, -1, 2, -2, 3, -3]
    for plus, minus in zip(rows[::2], rows[1::2]):
        assert not plus.below_floor
        assert plus.length == pytest.approx(minus.length, rel=1e-6)
        assert plus.rate > 0


# q_max 100 and 150 select the approximants 55/89 and 89/144
@pytest.mark.parametrize("q_max", [100, 150])
def test_gap_decay_slope_tracks_log_coupling(q_max):
    rows = gap_decay_experiment(0.5, golden(), q_max, 6)
    assert all(row.stable for row in rows if abs(row.k) >= 3)
    slope = gap_decay_slope(rows)
    assert 0.52 <= slope <= 0.90
    # per-gap rates keep a prefactor: converged in q but still above ln 2
    for row in rows:
        if 3 <= abs(row.k) <= 6:
            assert 0.9 < row.rate < 1.25


def test_gap_decay_slope_needs_two_labels():
    rows = gap_decay_experiment(0.5, golden(), 100, 3)
    with pytest.raises(DomainError):
        gap_decay_slope(rows)


@pytest.mark.parametrize("lam, pq", [(0.5, Fraction(34, 55)), (0.5, Fraction(55, 89)), (1.5, Fraction(13, 21))])
def test_bands_and_gaps_fill_the_hull(lam, pq):
    bs = band_spectrum(lam, pq)
    lo, hi = bs.hull
    total = bs.measure() + sum(gap.length for gap in bs.gaps)
    assert total == pytest.approx(hi - lo, abs=1e-12 * 2 * bs.q)


def test_subcritical_measure_is_four_minus_four_lambda():
    bs = band_spectrum(0.5, Fraction(55, 89))
    assert bs.measure() == pytest.approx(4 - 4 * 0.5, abs=1e-6)


def test_gap_decay_errors():
    with pytest.raises(DomainError):
        gap_decay_experiment(0.5, golden(), 40, 3)
    with pytest.raises(DomainError):
        gap_decay_experiment(1.0, golden(), 100, 3)
