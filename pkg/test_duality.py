#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Tests for dual sequences, Wronskians and long-range operators."""

import math
from fractions import Fraction

import numpy as np
import pytest

from arithmetic import golden
from duality import (DualSequence, amo_vhat, bulk_rates, bump_mass_fraction, dual_residual, dual_rows,
                     dual_spectrum_distance, dual_vector, finite_localization, goodness_check, longrange_apply,
                     longrange_matrix, two_bump_profile, wronskian_exclusion, wronskian_series)
from errors import DomainError
from fourier import FourierMap

ALPHA = golden()


def identity_map():
    return FourierMap.from_modes({0: np.eye(2)})


def delta(index, K=1):
    values = np.zeros(2 * K + 1)
    values[index + K] = 1.0
    return DualSequence(values)


def test_identity_rows():
    row11, row12 = dual_rows(identity_map())
    assert np.allclose(row11.values, [1.0])
    assert np.allclose(row12.values, [0.0])
    assert row11.normalization == 1.0
    assert np.allclose(dual_vector(identity_map()).values, [1.0])


def test_dual_rows_reject_singular_map():
    with pytest.raises(DomainError):
        dual_rows(FourierMap.from_modes({0: np.zeros((2, 2))}))


def test_sequence_shape_and_lookup():
    with pytest.raises(DomainError):
        DualSequence(np.zeros(4))
    seq = DualSequence([1.0, 2.0, 3.0], half=True)
    assert seq.at(0.5) == 3.0
    assert seq.at(-0.5) == 1.0
    assert seq.at(2.0) == 0j
    assert seq.step() == 2
    assert list(seq.positions) == [-0.5, 0.0, 0.5]


def test_center_candidates():
    seq = DualSequence([0.0, 0.2, 1.0, 0.2, 0.0, 0.5, 0.0])
    assert seq.center_candidates == [-1, 2]


def test_dual_residual_of_delta():
    # only the diagonal term survives at the origin: (2 cos 0 - E) / lambda
    assert dual_residual(delta(0), 0.5, ALPHA, 1.0) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        dual_residual(delta(0), 0.0, ALPHA, 1.0)


def test_wronskian_is_constant():
    D = wronskian_series(delta(0), delta(1), 10.0, ALPHA, 0.0, (-2000, 2000))
    assert D.shape == (4001,)
    assert np.max(np.abs(D - 1)) < 1e-12


def test_wronskian_errors():
    with pytest.raises(DomainError):
        wronskian_series(delta(0), delta(1), 0.0, ALPHA, 0.0, (-5, 5))
    with pytest.raises(DomainError):
        wronskian_series(delta(0), DualSequence([0.0, 1.0, 0.0], half=True), 2.0, ALPHA, 0.0, (-5, 5))
    with pytest.raises(DomainError):
        wronskian_series(delta(0), delta(1), 2.0, ALPHA, 0.0, (3, 10))


def test_goodness_of_identity():
    assert goodness_check(identity_map(), 2.0, 1.0, 1.0, 0) == (True, True, 0)
    h1, h2, _ = goodness_check(identity_map(), 0.5, 0.1, 1.0, 0)
    assert not h1 and not h2


def test_bump_mass_fraction():
    assert bump_mass_fraction(delta(0), 0, 0.5) == pytest.approx(1.0)
    assert bump_mass_fraction(delta(0), 10, 0.5) == 0.0
    with pytest.raises(DomainError):
        bump_mass_fraction(DualSequence(np.zeros(3)), 0, 0.5)


def test_wronskian_exclusion_fires_on_unit_wronskian():
    D, bound, fired = wronskian_exclusion(delta(0), delta(1), 1.0, 4, 0.5)
    assert D == pytest.approx(1.0)
    assert bound == pytest.approx(math.exp(-4.4))
    assert fired


def test_longrange_matrix_is_the_almost_mathieu_operator():
    lam, x, N = 0.7, 0.1, 3
    H = longrange_matrix(amo_vhat(), lam, ALPHA, x, N)
    assert H.shape == (7, 7)
    assert np.allclose(H, H.conj().T)
    n = np.arange(-N, N + 1)
    assert np.allclose(np.diag(H), 2 * lam * np.cos(2 * np.pi * (x + n * ALPHA.value)))
    assert np.allclose(np.diag(H, 1), 1.0)
    assert np.allclose(np.diag(H, 2), 0.0)


def test_longrange_apply():
    lam = 0.7
    out = longrange_apply(amo_vhat(), lam, ALPHA, 0.0, delta(0, K=2))
    assert np.allclose(out.values, [0.0, 1.0, 2 * lam, 1.0, 0.0])
    with pytest.raises(DomainError):
        longrange_apply(amo_vhat(), lam, ALPHA, 0.0, DualSequence([0.0, 1.0, 0.0], half=True))


def test_finite_localization_supercritical():
    N = 200
    states = finite_localization(amo_vhat(), 4.0, ALPHA, 0.0, N)
    assert len(states) == 2 * N + 1
    rates = bulk_rates(states, N)
    assert np.median(rates) == pytest.approx(math.log(4), rel=0.3)


def test_finite_localization_subcritical():
    N = 400
    states = finite_localization(amo_vhat(), 0.5, ALPHA, 0.0, N)
    assert np.median(bulk_rates(states, N)) < 0.05


def test_finite_localization_errors():
    with pytest.raises(DomainError):
        finite_localization(amo_vhat(), 1.0, ALPHA, 0.0, 5000)
    with pytest.raises(DomainError):
        finite_localization({1: 1j, -1: 1j}, 1.0, ALPHA, 0.0, 10)


@pytest.mark.parametrize("lam, pq", [(0.5, Fraction(3, 5)), (0.25, Fraction(5, 8)), (0.5, Fraction(5, 8))])
def test_dual_spectrum_distance(lam, pq):
    assert dual_spectrum_distance(lam, pq) < 1e-6


def test_dual_spectrum_distance_errors():
    with pytest.raises(DomainError):
        dual_spectrum_distance(0.0, Fraction(3, 5))


@pytest.mark.parametrize("k", [4, 6, 8])
def test_planted_conjugacy_has_two_bumps(k):
    report = two_bump_profile(k, ALPHA)
    assert report.degree == k
    assert report.mass_fraction >= 0.9
    assert report.h1 and report.h2
    assert report.row11.center_candidates == [-k // 2, k // 2]
    D, bound, fired = report.exclusion
    assert D < bound and not fired
    assert report.passed


def test_two_bump_profile_errors():
    with pytest.raises(DomainError):
        two_bump_profile(0, ALPHA)
    with pytest.raises(DomainError):
        two_bump_profile(4, ALPHA, eps=1.5)
    # at size 1e-3 the first step only scans |n| <= 4
    with pytest.raises(DomainError):
        two_bump_profile(8, ALPHA, scale=1e-3)
