#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Tests for su(1,1) normal forms and the KAM scheme."""

import math

import numpy as np
import pytest

from arithmetic import golden
from config import Config
from errors import BudgetExhausted, CertificateError, DomainError, GateError, MisuseError
from fourier import Conjugacy, FourierMap, analytic_norm
from kam import (KAM_COLUMNS, STATUS_CONVERGED, STATUS_DIVERGED, Su11Constant, amo_local_data, calibrate_gate,
                 composition_error_bound, detect_resonance, kam_iterate, nonresonant_step, normalize_elliptic,
                 resonance_range, resonant_step, rotation_backward_step, triangular_power, triangularize)
from utils.helpers import expm_sl2, inverse2, rotation, to_su11

ALPHA = golden()
PERTURBATION = 1e-6 * np.array([[1.0, 0.5], [0.5, -1.0]])


def small_cos_mode(scale=1.0, radius=0.1):
    return FourierMap.from_modes({1: scale * PERTURBATION, -1: scale * PERTURBATION}, radius=radius)


def planted_constant():
    # 2 xi = 7 alpha + 2e-8 mod 1
    return Su11Constant.from_rotation(7 * ALPHA.value / 2 + 1e-8)


def conjugated(A, f, B, theta):
    """B(theta + alpha)^{-1} A e^{f(theta)} B(theta)."""
    lhs = A.matrix @ expm_sl2(f.evaluate(theta))
    return inverse2(B.evaluate(theta + ALPHA.value)) @ lhs @ B.evaluate(theta)


def test_rotation_constant():
    A = Su11Constant.from_rotation(0.1)
    assert A.kind == 'elliptic'
    assert A.sign == 1
    assert A.xi_turns == pytest.approx(0.1, abs=1e-14)
    assert A.nu == 0
    assert A.reconstruction_error() < 1e-14


def test_rotation_past_a_quarter_flips_sign():
    A = Su11Constant.from_rotation(0.4)
    assert A.sign == -1
    assert A.xi_turns == pytest.approx(-0.1, abs=1e-14)
    assert A.rotation_turns == pytest.approx(0.4, abs=1e-14)
    assert A.reconstruction_error() < 1e-14


def test_hyperbolic_constant():
    A = Su11Constant.from_matrix([[2.0, 1.0], [1.0, 1.0]])
    assert A.kind == 'hyperbolic'
    assert A.mu == pytest.approx(math.acosh(1.5), rel=1e-12)
    assert A.xi == 0.0
    assert A.reconstruction_error() < 1e-12


def test_from_parameters_round_trip():
    A = Su11Constant.from_parameters(1.0, 0.3 + 0.2j)
    B = Su11Constant.from_matrix(A.matrix)
    assert B.t == pytest.approx(1.0, abs=1e-12)
    assert B.nu == pytest.approx(0.3 + 0.2j, abs=1e-12)
    assert B.xi == pytest.approx(math.sqrt(1 - 0.13), rel=1e-12)


def test_from_matrix_checks_determinant():
    with pytest.raises(DomainError):
        Su11Constant.from_matrix([[2.0, 0.0], [0.0, 1.0]])


@pytest.mark.parametrize("t, nu, regime", [(1.0, 0.3, 'near-diagonal'), (0.5, 0.45j, 'dominated')])
def test_normalize_elliptic(t, nu, regime):
    A = Su11Constant.from_parameters(t, nu)
    U, found = normalize_elliptic(A)
    assert found == regime
    assert np.isrealobj(U)
    assert np.allclose(inverse2(U) @ A.matrix @ U, rotation(A.xi_turns), atol=1e-12)


def test_normalize_elliptic_rejects_hyperbolic():
    with pytest.raises(DomainError):
        normalize_elliptic(Su11Constant.from_matrix([[2.0, 1.0], [1.0, 1.0]]))


def test_triangularize():
    A = Su11Constant.from_parameters(1.0, 0.3)
    U, nu_prime = triangularize(A)
    assert np.allclose(U.conj().T @ U, np.eye(2), atol=1e-14)
    T = U.conj().T @ to_su11(A.matrix) @ U
    assert abs(T[1, 0]) < 1e-12
    assert T[0, 0] == pytest.approx(np.exp(1j * A.xi), abs=1e-12)
    assert abs(nu_prime) <= 4 * abs(A.nu)


def test_detect_resonance_planted():
    xi = 7 * ALPHA.value / 2 + 1e-8
    assert detect_resonance(xi, ALPHA, 20, 1e-6, 1.0) == 7
    assert detect_resonance(-xi, ALPHA, 20, 1e-6, 1.0) == -7
    assert detect_resonance(xi, ALPHA, 6, 1e-6, 1.0) is None


def test_detect_resonance_errors():
    with pytest.raises(DomainError):
        detect_resonance(0.1, ALPHA, 0, 1e-3)
    with pytest.raises(DomainError):
        detect_resonance(0.1, ALPHA, 10, 1.5)


def test_nonresonant_step_contracts():
    A = Su11Constant.from_rotation(0.1)
    f = small_cos_mode()
    eps = analytic_norm(f, 0.1)
    Y, A_plus, f_plus = nonresonant_step(A, f, 0.1, 0.05, alpha=ALPHA)
    assert analytic_norm(f_plus, 0.05) <= 16 * eps ** 2
    assert np.allclose(A_plus.matrix, A.matrix, atol=1e-14)
    B = Conjugacy([('exp', Y)])
    theta = 0.37
    rhs = A_plus.matrix @ expm_sl2(f_plus.evaluate(theta))
    assert np.allclose(conjugated(A, f, B, theta), rhs, atol=1e-12)


def test_nonresonant_step_absorbs_the_mean():
    A = Su11Constant.from_rotation(0.1)
    mean = 1e-7 * np.array([[0.0, 1.0], [-1.0, 0.0]])
    f = FourierMap.from_modes({0: mean, 1: PERTURBATION, -1: PERTURBATION}, radius=0.1)
    _, A_plus, _ = nonresonant_step(A, f, 0.1, 0.05, alpha=ALPHA)
    assert np.allclose(A_plus.matrix, A.matrix @ expm_sl2(mean), atol=1e-14)


def test_nonresonant_step_gate():
    A0, f0 = amo_local_data(0.05, 0.0, h=0.1)
    with pytest.raises(GateError):
        nonresonant_step(A0, f0, 0.1, 0.0999, alpha=ALPHA)


def test_resonant_step_planted():
    A = planted_constant()
    f = small_cos_mode()
    eps = analytic_norm(f, 0.1)
    P, Y, n_star, A_plus, f_plus = resonant_step(A, f, 0.1, 0.05, 7, alpha=ALPHA)
    assert n_star == 7
    assert np.allclose(P, np.eye(2))
    assert A_plus.xi_turns == pytest.approx(1e-8, abs=1e-10)
    assert abs(A_plus.nu) < 1e-12
    assert analytic_norm(f_plus, 0.05) < eps ** 1.5
    B = Conjugacy([('const', P), ('exp', Y), ('rot', n_star)])
    theta = 0.37
    rhs = A_plus.matrix @ expm_sl2(f_plus.evaluate(theta))
    assert np.allclose(conjugated(A, f, B, theta), rhs, atol=1e-10)


def test_resonant_step_rejects_non_resonance():
    with pytest.raises(MisuseError):
        resonant_step(planted_constant(), small_cos_mode(), 0.1, 0.05, 5, alpha=ALPHA)
    hyperbolic = Su11Constant.from_matrix([[2.0, 1.0], [1.0, 1.0]])
    with pytest.raises(MisuseError):
        resonant_step(hyperbolic, small_cos_mode(), 0.1, 0.05, 7, alpha=ALPHA)


def test_rotation_backward_step_planted():
    A = planted_constant()
    report = {}
    conj, A_plus, f_plus = rotation_backward_step(A, small_cos_mode(), 7, 0.1, 0.05, (1e-12, 0.1),
                                                  alpha=ALPHA, report=report)
    assert report['degree'] == 0
    assert not conj.half
    assert A_plus.xi_turns == pytest.approx(A.xi_turns, abs=1e-9)
    near = conj.copy()
    near.coeffs[near.K] -= np.eye(2)
    assert analytic_norm(near, 0.0) < 1e-4
    assert report['identity_error'] < 1e-10


def test_rotation_backward_step_certificate_errors():
    A = planted_constant()
    with pytest.raises(CertificateError):
        rotation_backward_step(A, small_cos_mode(), 7, 0.1, 0.05, (1e-12, 0.5), alpha=ALPHA)
    with pytest.raises(CertificateError):
        rotation_backward_step(A, small_cos_mode(), 7, 0.1, 0.05, (1e-3, 0.1), alpha=ALPHA)


def test_kam_iterate_nonresonant_converges():
    trace = kam_iterate(rotation(0.1), small_cos_mode(), 0.1, 0.05, 4, alpha=ALPHA)
    assert trace.status == STATUS_CONVERGED
    assert trace.degree == 0
    assert trace.resonant_indices == []
    assert trace.final_eps < Config.KAM_RESIDUAL_FLOOR
    assert len(trace.steps) >= 2
    first, second = trace.steps[0], trace.steps[1]
    assert second.eps <= 16 * first.eps ** 2
    assert all(step.identity_error < 1e-10 for step in trace.steps)
    assert [row['j'] for row in trace.rows()] == list(range(len(trace.steps)))


def test_kam_iterate_planted_resonance():
    trace = kam_iterate(planted_constant(), small_cos_mode(), 0.1, 0.05, 6, alpha=ALPHA)
    assert trace.status == STATUS_CONVERGED
    assert trace.resonant_indices == [7]
    assert trace.degree == 7
    assert trace.steps[0].resonance == 7
    assert trace.to_dict()['resonant_indices'] == [7]


def test_kam_iterate_domain():
    with pytest.raises(DomainError):
        kam_iterate(rotation(0.17), small_cos_mode(), 0.1, 0.2, 4, alpha=ALPHA)
    with pytest.raises(DomainError):
        kam_iterate(rotation(0.17), small_cos_mode(), 0.1, 0.05, 13, alpha=ALPHA)
    A0, f0 = amo_local_data(0.05, 0.0, h=0.1)
    with pytest.raises(GateError):
        kam_iterate(A0, f0, 0.1, 0.099, 4, alpha=ALPHA)


def test_resonance_range():
    # |ln 0.0375| / (0.4 pi) = 2.61
    assert resonance_range(0.0375, 0.1, 100) == 2
    assert resonance_range(1e-6, 0.1, 5) == 5
    assert resonance_range(1e-6, 0.1, 100) == 10
    assert resonance_range(1.5, 0.1, 10) == 0


def test_resonant_steps_keep_the_new_coupling_small():
    rng = np.random.default_rng(11)
    h, h_plus, n_star = 0.1, 0.05, 7
    passed = 0
    for _ in range(20):
        A = Su11Constant.from_rotation(n_star * ALPHA.value / 2 + rng.uniform(1e-10, 1e-9))
        low, high = rng.normal(size=(2, 2, 2))
        low[1, 1], high[1, 1] = -low[0, 0], -high[0, 0]
        f = FourierMap.from_modes({1: 1e-7 * low, -1: 1e-7 * low, n_star: 1e-9 * high, -n_star: 1e-9 * high},
                                  radius=h)
        eps = analytic_norm(f, h)
        _, _, _, A_plus, _ = resonant_step(A, f, h, h_plus, n_star, alpha=ALPHA)
        bound = eps ** (15 / 16) * math.exp(-2 * math.pi * n_star * h) * Config.SLACK
        passed += abs(A_plus.nu) <= bound
    assert passed >= 18


# energies whose rotation stays 0.035 away from 2 xi = n alpha for |n| <= 4
GENERIC_ENERGIES = (-1.3, -1.2, -1.1, -1.0, -0.45, 0.45, 1.0, 1.1, 1.2, 1.3)


def test_kam_iterate_on_weakly_coupled_amo():
    converged = 0
    for E in GENERIC_ENERGIES:
        A0, f0 = amo_local_data(0.01, E, h=0.1)
        trace = kam_iterate(A0, f0, 0.1, 0.05, 8, alpha=ALPHA)
        assert trace.status != STATUS_DIVERGED
        assert all(step.identity_error < 1e-10 for step in trace.steps)
        assert trace.degree == sum(trace.resonant_indices)
        converged += trace.status == STATUS_CONVERGED
    assert converged >= 9


def test_kam_iterate_rotates_back_under_a_certificate():
    # 2 xi = 7 alpha + 1e-10: every step near the start is resonant at n = 7
    A = Su11Constant.from_rotation(7 * ALPHA.value / 2 + 5e-11)
    f = small_cos_mode(scale=100, radius=0.05)
    trace = kam_iterate(A, f, 0.05, 0.025, 6, alpha=ALPHA, lc=(1e-11, 0.1))
    assert trace.resonant_indices[:2] == [7, 7]
    assert trace.degree == 0
    first, second = trace.steps[0], trace.steps[1]
    assert 0 < second.structure['lc_norm'] <= 3 * first.structure['lc_norm']
    assert trace.rows()[0]['lc_norm'] == first.structure['lc_norm']
    with pytest.raises(CertificateError):
        kam_iterate(A, f, 0.05, 0.025, 6, alpha=ALPHA, lc=(1e-11, 0.5))


def test_kam_iterate_keeps_the_ledger_when_the_grid_runs_out():
    tight = type('Tight', (Config,), {'KAM_MAX_GRID': 65})
    A = Su11Constant.from_rotation(7 * ALPHA.value / 2 + 5e-11)
    with pytest.raises(BudgetExhausted) as info:
        kam_iterate(A, small_cos_mode(scale=100), 0.1, 0.05, 6, alpha=ALPHA, settings=tight)
    columns, rows = info.value.partial
    assert columns == KAM_COLUMNS
    assert len(rows) == 1
    assert rows[0][columns.index('j')] == 0
    assert rows[0][columns.index('resonance')] is None


def test_calibrate_gate():
    D0, table = calibrate_gate(ALPHA, samples=4, seed=3, steps=2)
    assert len(table) == 4
    assert 0 < D0 < math.inf
    assert all(row['required'] > 0 and 0 < row['lambda'] <= 0.05 for row in table)
    assert Config.KAM_D0 == 1e32
    with pytest.raises(DomainError):
        calibrate_gate(ALPHA, samples=0)


def test_amo_local_data_factorizes_the_cocycle():
    lam, E, theta = 0.02, 0.5, 0.3
    A0, f0 = amo_local_data(lam, E)
    expected = np.array([[E - 2 * lam * math.cos(2 * math.pi * theta), -1.0], [1.0, 0.0]])
    assert np.allclose(A0.matrix @ expm_sl2(f0.evaluate(theta)), expected, atol=1e-14)
    with pytest.raises(DomainError):
        amo_local_data(0.1, 0.0)


def test_composition_error_bound():
    assert composition_error_bound([1.0, 2.0], [0.1, 0.05]) == pytest.approx(math.expm1(0.3))
    with pytest.raises(DomainError):
        composition_error_bound([1.0], [])


def test_triangular_power_matches_matrix_power():
    theta, c = 0.13, 0.4 - 0.1j
    z = np.exp(2j * np.pi * theta)
    T = np.array([[z, c], [0, 1 / z]])
    assert np.allclose(triangular_power(theta, c, 9), np.linalg.matrix_power(T, 9), atol=1e-12)
    parabolic = triangular_power(0.5, c, 4)
    assert parabolic[0, 1] == pytest.approx(4 * c * np.exp(2j * np.pi * 0.5) ** 3)
