#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Tests for cocycle iteration, Lyapunov exponents and rotation numbers."""

import math
from fractions import Fraction

import numpy as np
import pytest

from arithmetic import golden
from cocycle import (CocycleMap, default_phases, energy_for_rotation, growth_profile, iterate, log_norm,
                     lyapunov, rotation_number, uh_test)
from errors import DomainError, UnsupportedError
from spectrum import band_spectrum
from utils.helpers import det2, rotation


def constant_rotation(phi):
    return CocycleMap.general(golden(), lambda thetas: rotation(np.full(np.shape(thetas), phi)))


def test_iterate_constant_rotation():
    mat, scale = iterate(constant_rotation(0.1), 0.3, 5)
    assert np.allclose(np.exp(scale) * mat, rotation(0.5), atol=1e-12)


def test_iterate_negative_steps_invert():
    c = CocycleMap.almost_mathieu(golden(), 0.5, 0.3)
    theta = 0.21
    back, back_scale = iterate(c, theta, -3)
    forward, forward_scale = iterate(c, theta - 3 * c.alpha.value, 3)
    product = np.exp(back_scale + forward_scale) * back @ forward
    assert np.allclose(product, np.eye(2), atol=1e-10)


def test_iterate_matches_direct_product():
    c = CocycleMap.almost_mathieu(golden(), 0.8, -0.4)
    theta = 0.05
    direct = np.eye(2)
    for j in range(40):
        direct = c.evaluate(theta + j * c.alpha.value) @ direct
    mat, scale = iterate(c, theta, 40)
    assert np.allclose(np.exp(scale) * mat, direct, rtol=1e-9)


def test_log_norm_vectorized():
    c = CocycleMap.almost_mathieu(golden(), 2.0, 0.0)
    values = log_norm(c, np.array([0.0, 0.5]), 100)
    assert values.shape == (2,)
    assert np.all(values > 0)


def test_cocycle_validation():
    with pytest.raises(DomainError):
        CocycleMap.almost_mathieu(golden(), math.nan, 0.0)
    with pytest.raises(DomainError):
        CocycleMap(golden(), 'general')


def test_lyapunov_free_case_vanishes():
    estimate = lyapunov(CocycleMap.almost_mathieu(golden(), 0.0, 0.0), 2000)
    assert estimate.value < 0.01


def test_lyapunov_supercritical_matches_log_coupling():
    estimate = lyapunov(CocycleMap.almost_mathieu(golden(), 2.0, 0.0), 10000)
    assert estimate.value == pytest.approx(math.log(2), abs=0.02)
    assert estimate.spread >= 0
    assert estimate.per_phase.shape == default_phases().shape


def test_lyapunov_strong_coupling_stays_finite():
    estimate = lyapunov(CocycleMap.almost_mathieu(golden(), 3.0, 0.5), 10000)
    assert math.isfinite(estimate.value)
    assert estimate.value >= math.log(3) - 0.02
    values = log_norm(CocycleMap.almost_mathieu(golden(), 2.0, 0.0), default_phases(), 20000)
    assert np.all(np.isfinite(values))


def test_lyapunov_subcritical_vanishes():
    estimate = lyapunov(CocycleMap.almost_mathieu(golden(), 0.5, 0.0), 20000)
    assert abs(estimate.value) < 0.02


def band_centers(lam, count=5):
    bands = band_spectrum(lam, Fraction(34, 55)).bands
    return [sum(bands[i]) / 2 for i in np.linspace(0, len(bands) - 1, count).astype(int)]


def test_lyapunov_vanishes_at_subcritical_band_centers():
    for E in band_centers(0.5):
        assert abs(lyapunov(CocycleMap.almost_mathieu(golden(), 0.5, E), 10000).value) < 0.02


@pytest.mark.parametrize("lam", [2.0, 3.0])
def test_lyapunov_at_supercritical_band_centers(lam):
    # the spectrum at lam is lam times the spectrum at 1 / lam
    for E in band_centers(1 / lam):
        estimate = lyapunov(CocycleMap.almost_mathieu(golden(), lam, lam * E), 10000)
        assert estimate.value == pytest.approx(math.log(lam), rel=0.05)


def test_determinant_does_not_drift():
    mat, scale = iterate(CocycleMap.almost_mathieu(golden(), 0.5, 0.0), 0.13, 10 ** 6)
    assert abs(det2(mat) * math.exp(2 * scale) - 1) < 1e-6


def test_lyapunov_is_seeded():
    c = CocycleMap.almost_mathieu(golden(), 1.5, 0.2)
    assert lyapunov(c, 500, seed=3).spread == lyapunov(c, 500, seed=3).spread


def test_lyapunov_errors():
    c = CocycleMap.almost_mathieu(golden(), 1.5, 0.2)
    with pytest.raises(DomainError):
        lyapunov(c, 0)
    with pytest.raises(DomainError):
        lyapunov(c, 100, thetas=[0.1, 0.2])


def test_rotation_number_of_constant_rotation():
    estimate = rotation_number(constant_rotation(0.1), 1000)
    assert estimate.value == pytest.approx(0.1, abs=1e-9)


@pytest.mark.parametrize("energy, expected", [(0.0, 0.25), (1.0, 1 / 3), (-1.0, 1 / 6)])
def test_rotation_number_free_case(energy, expected):
    # E = 2 cos 2 pi k has rotation number 1/2 - k
    estimate = rotation_number(CocycleMap.almost_mathieu(golden(), 0.0, energy), 20000)
    assert estimate.value == pytest.approx(expected, abs=2e-3)


def test_rotation_number_above_spectrum():
    estimate = rotation_number(CocycleMap.almost_mathieu(golden(), 0.5, 5.0), 5000)
    assert estimate.value == pytest.approx(0.5, abs=1e-2)


def test_rotation_number_monotone_in_energy():
    values = [rotation_number(CocycleMap.almost_mathieu(golden(), 0.5, E), 5000).value
              for E in (-1.0, 0.0, 1.0)]
    assert values[0] < values[1] < values[2]


def test_rotation_number_rejects_nonzero_degree():
    c = CocycleMap.general(golden(), lambda thetas: rotation(np.asarray(thetas)))
    with pytest.raises(UnsupportedError):
        rotation_number(c, 100)


def test_energy_for_rotation_free_case():
    energy = energy_for_rotation(0.0, golden(), 1 / 3, n=4000, xtol=1e-8)
    assert energy == pytest.approx(1.0, abs=1e-2)
    with pytest.raises(DomainError):
        energy_for_rotation(0.0, golden(), 0.7)


def test_uh_test():
    assert uh_test(CocycleMap.almost_mathieu(golden(), 0.5, 5.0), 50)
    assert not uh_test(CocycleMap.almost_mathieu(golden(), 0.5, 0.0), 200)


def test_growth_profile_free_rotation():
    c = CocycleMap.almost_mathieu(golden(), 0.0, 0.0)
    profile = growth_profile(c, 0.0, 1000, 'hs')
    assert profile.ns[0] == 1 and profile.ns[-1] == 1000
    assert profile.ns == sorted(set(profile.ns))
    assert np.allclose(profile.lognorms, 0.5 * math.log(2), atol=1e-12)


def test_growth_profile_errors():
    c = CocycleMap.almost_mathieu(golden(), 0.5, 0.0)
    with pytest.raises(DomainError):
        growth_profile(c, 0.0, 0)
    with pytest.raises(DomainError):
        growth_profile(c, 0.0, 10, 'frobenius')
