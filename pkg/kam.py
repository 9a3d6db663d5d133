#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Quantitative KAM scheme for quasiperiodic SL(2,R) cocycles

This module reduces a cocycle (alpha, A e^{f(theta)}) with A constant and f
small towards a constant by successive conjugations. Each step is either
non-resonant (a homological equation removes the non-constant modes of f)
or resonant (the constant is first normalized to a rotation and a rotation
of degree n* moves the resonant mode to frequency zero). Every step
recomputes the new perturbation exactly on a grid, so the conjugation
identity holds to machine precision and every bound of the scheme becomes
a measured quantity.

Constants live in su(1,1) coordinates: A = sign * M^{-1} exp([[it, nu], [conj(nu), -it]]) M.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from arithmetic import Irrational, diophantine_constant, lc_certificate
from config import Config
from errors import (BoundViolation, BudgetExhausted, CertificateError, ConsistencyError,
                    DomainError, GateError, MisuseError)
from fourier import Conjugacy, FourierMap, analytic_norm
from utils.helpers import (ad_matrix, expm_sl2, from_su11, identity_like, inverse2,
                           logm_sl2, op_norm2, rotation, sl2_coordinates, sl2_from_coordinates,
                           to_su11, torus_distance, trace2)

logger = logging.getLogger(__name__)

RESONANCE_EXPONENT = 1.0 / 15

STATUS_CONVERGED = 'converged-reducible'
STATUS_EXHAUSTED = 'almost-reducible-budget-exhausted'
STATUS_DIVERGED = 'diverged'


@dataclass
class Su11Constant:
    """
    A constant of SL(2,R) with its su(1,1) logarithm

    Attributes:
        matrix: The real matrix (float64 or longdouble)
        t: Diagonal parameter of the su(1,1) logarithm
        nu: Off-diagonal parameter of the su(1,1) logarithm
        sign: -1 when the matrix is minus an exponential (PSL identification)
    """
    matrix: np.ndarray = field(repr=False)
    t: float = 0.0
    nu: complex = 0j
    sign: int = 1

    @classmethod
    def from_matrix(cls, A) -> 'Su11Constant':
        """
        Decompose a determinant-one matrix

        Raises:
            DomainError: If the determinant is not one within 1e-10
        """
        A = np.asarray(A)
        if A.dtype not in (np.dtype(np.float64), np.dtype(np.longdouble)):
            A = A.astype(np.float64)
        det = float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
        if abs(det - 1) > 1e-10:
            raise DomainError(f"constant has determinant {det}, expected 1")
        sign = -1 if float(A[0, 0] + A[1, 1]) < 0 else 1
        X = logm_sl2(sign * A)
        t = float((X[0, 1] - X[1, 0]) / 2)
        nu = complex(float(X[0, 0]), -float((X[0, 1] + X[1, 0]) / 2))
        return cls(A, t, nu, sign)

    @classmethod
    def from_parameters(cls, t: float, nu: complex, sign: int = 1, dtype=np.float64) -> 'Su11Constant':
        """sign * M^{-1} exp([[it, nu], [conj(nu), -it]]) M as a real matrix."""
        X = np.array([[nu.real, t - nu.imag], [-nu.imag - t, -nu.real]], dtype=dtype)
        return cls(sign * expm_sl2(X), float(t), complex(nu), sign)

    @classmethod
    def from_rotation(cls, phi, dtype=np.float64) -> 'Su11Constant':
        return cls.from_matrix(rotation(phi, dtype))

    @property
    def discriminant(self) -> float:
        return self.t ** 2 - abs(self.nu) ** 2

    @property
    def kind(self) -> str:
        scale = self.t ** 2 + abs(self.nu) ** 2
        if scale == 0:
            return 'parabolic'
        if self.discriminant > 1e-12 * scale:
            return 'elliptic'
        if self.discriminant < -1e-12 * scale:
            return 'hyperbolic'
        return 'parabolic'

    @property
    def xi(self) -> float:
        """Signed rotation angle in radians (zero unless elliptic)."""
        if self.kind != 'elliptic':
            return 0.0
        return math.copysign(math.sqrt(self.discriminant), self.t)

    @property
    def xi_turns(self) -> float:
        return self.xi / (2 * math.pi)

    @property
    def rotation_turns(self) -> float:
        """Rotation of the normal form, including the half turn of sign -1."""
        return self.xi_turns + (0.5 if self.sign < 0 else 0.0)

    @property
    def mu(self) -> float:
        return math.sqrt(max(-self.discriminant, 0.0))

    @property
    def dtype(self):
        return self.matrix.dtype

    def norm(self) -> float:
        return float(op_norm2(self.matrix.astype(np.float64)))

    def eigenvalues(self) -> Tuple[complex, complex]:
        if self.kind == 'elliptic':
            return self.sign * np.exp(1j * self.xi), self.sign * np.exp(-1j * self.xi)
        return self.sign * math.exp(self.mu), self.sign * math.exp(-self.mu)

    def reconstruction_error(self) -> float:
        rebuilt = Su11Constant.from_parameters(self.t, self.nu, self.sign).matrix
        return float(np.max(np.abs(rebuilt - self.matrix.astype(np.float64))))

    def to_dict(self) -> Dict[str, Any]:
        return {'t': self.t, 'nu_re': self.nu.real, 'nu_im': self.nu.imag, 'sign': self.sign,
                'kind': self.kind, 'xi': self.xi, 'rotation': self.rotation_turns}


def _u_parameters(A: Su11Constant) -> Tuple[float, float, complex]:
    """(cos phi, sin phi, u) of the su(1,1) diagonalizer, tan phi = -|nu| / (t + xi)."""
    nu_abs = abs(A.nu)
    tan = -nu_abs / (A.t + A.xi)
    cos = 1 / math.sqrt(1 + tan * tan)
    return cos, tan * cos, -1j * A.nu / nu_abs


def normalize_elliptic(A: Su11Constant, slack: float = None) -> Tuple[np.ndarray, str]:
    """
    Real U with U^{-1} A U = sign * rotation(xi / 2 pi)

    U = M^{-1} U_su M with U_su = (cos 2 phi)^{-1/2} [[cos phi, u sin phi], [conj(u) sin phi, cos phi]]
    and ||U||^2 = (|t| + |nu|) / |xi|.

    Args:
        A: Elliptic constant
        slack: Multiplicative slack on the asserted bounds

    Returns:
        (U, regime) with regime 'near-diagonal' when |2 nu / xi| <= 1, else 'dominated'

    Raises:
        DomainError: If A is parabolic or hyperbolic
    """
    if A.kind != 'elliptic':
        raise DomainError(f"normalize_elliptic needs an elliptic constant, got {A.kind}")
    slack = Config.SLACK if slack is None else slack
    ratio = abs(A.nu) / abs(A.xi)
    regime = 'near-diagonal' if 2 * ratio <= 1 else 'dominated'
    if A.nu == 0:
        return identity_like((), A.dtype), regime

    cos, sin, u = _u_parameters(A)
    scale = 1 / math.sqrt(cos * cos - sin * sin)
    U_su = scale * np.array([[cos, u * sin], [np.conj(u) * sin, cos]], dtype=np.complex128)
    U = from_su11(U_su).astype(A.dtype)

    U64 = U.astype(np.float64)
    if regime == 'near-diagonal':
        measured = float(op_norm2(U64 - np.eye(2)))
        if measured > ratio * slack:
            logger.warning(f"||U - id|| = {measured:.3e} exceeds |nu/xi| = {ratio:.3e}")
    else:
        measured = float(op_norm2(U64)) ** 2
        if measured > 4 * ratio * slack:
            logger.warning(f"||U||^2 = {measured:.3e} exceeds 4|nu/xi| = {4 * ratio:.3e}")
    return U, regime


def triangularize(A: Su11Constant) -> Tuple[np.ndarray, complex]:
    """
    Unitary U' (su(1,1) coordinates) with U'^* exp(A~) U' = [[e^{i xi}, nu'], [0, e^{-i xi}]]

    Returns:
        (U', nu') with ||U'|| = 1 and |nu'| = 2 |nu| |sin xi / xi| <= 4 |nu|

    Raises:
        DomainError: If A is not elliptic
    """
    if A.kind != 'elliptic':
        raise DomainError(f"triangularize needs an elliptic constant, got {A.kind}")
    if A.nu == 0:
        return np.eye(2, dtype=np.complex128), 0j
    cos, sin, u = _u_parameters(A)
    v0, v1 = complex(cos), np.conj(u) * sin
    U_prime = np.array([[v0, -np.conj(v1)], [v1, np.conj(v0)]], dtype=np.complex128)
    A_su = to_su11((A.sign * A.matrix).astype(np.float64))
    T = U_prime.conj().T @ A_su @ U_prime
    nu_prime = complex(T[0, 1])
    if abs(T[1, 0]) > 1e-8 * max(1.0, abs(nu_prime)):
        logger.warning(f"triangularize: residual lower entry {abs(T[1, 0]):.2e}")
    if abs(nu_prime) > 4 * abs(A.nu) * (1 + 1e-9):
        logger.warning(f"|nu'| = {abs(nu_prime):.3e} exceeds 4|nu| = {4 * abs(A.nu):.3e}")
    return U_prime, nu_prime


def detect_resonance(xi: float, alpha: Irrational, N: int, eps: float,
                     exponent: float = RESONANCE_EXPONENT) -> Optional[int]:
    """
    Smallest |n| in 1..N with ||2 xi - n alpha|| < eps^exponent

    Args:
        xi: Rotation of the constant in turns
        alpha: The frequency
        N: Scan range
        eps: Size of the perturbation, in (0, 1)
        exponent: Resonance threshold exponent

    Returns:
        The resonant n (ties go to the positive one) or None
    """
    if N < 1:
        raise DomainError("detect_resonance needs N >= 1")
    if not 0 < eps < 1:
        raise DomainError(f"detect_resonance needs 0 < eps < 1, got {eps}")
    threshold = eps ** exponent
    n = np.arange(1, N + 1)
    a = alpha.as_dtype(np.longdouble)
    two_xi = 2 * np.longdouble(xi)
    shifts = n.astype(np.longdouble) * a
    d_pos = torus_distance(two_xi - shifts).astype(np.float64)
    d_neg = torus_distance(two_xi + shifts).astype(np.float64)
    hits = (d_pos < threshold) | (d_neg < threshold)
    if not np.any(hits):
        return None
    i = int(np.argmax(hits))
    return int(n[i]) if d_pos[i] < threshold else -int(n[i])


def smallness_gate(A: Su11Constant, eps: float, h: float, h_plus: float,
                   settings=Config) -> Tuple[bool, float]:
    """eps <= D0 (h - h_plus)^{C0 tau} / ||A||^{C0}; returns (ok, bound)."""
    bound = settings.KAM_D0 * (h - h_plus) ** (settings.KAM_C0 * settings.KAM_TAU) \
        / max(A.norm(), 1.0) ** settings.KAM_C0
    return eps <= bound, bound


def step_modes(eps: float, h: float, h_plus: float, settings=Config) -> int:
    """N = 2 |ln eps| / (h - h_plus), capped by the scan budget."""
    if eps <= 0:
        return 1
    return int(min(max(1, math.ceil(2 * abs(math.log(eps)) / (h - h_plus))), settings.KAM_MAX_SCAN))


def resonance_range(eps: float, h: float, N: int) -> int:
    """
    Largest |n| a resonant step may rotate away at strip width h

    A rotation of degree n costs e^{2 pi |n| h} on the perturbation; the
    range keeps that factor below eps^{-1/2}. Capped by the mode count N.
    """
    if not 0 < eps < 1:
        return 0
    return int(min(N, math.floor(abs(math.log(eps)) / (4 * math.pi * h))))


def _check(checks: List[Dict[str, Any]], name: str, measured: float, bound: float):
    ok = bool(measured <= bound)
    if not ok:
        logger.warning(f"bound check {name}: measured {measured:.3e} > bound {bound:.3e}")
    checks.append({'name': name, 'measured': float(measured), 'bound': float(bound), 'ok': ok})


@dataclass
class StepOutcome:
    """Result of one KAM step with its bound checks."""
    conjugacy: Conjugacy
    A_plus: Su11Constant
    f_plus: FourierMap
    Y: FourierMap
    eps: float
    eps_plus: float
    N: int
    P: Optional[np.ndarray] = None
    resonance: Optional[int] = None
    regime: Optional[str] = None
    identity_error: float = 0.0
    checks: List[Dict[str, Any]] = field(default_factory=list)
    conj_map: Optional[FourierMap] = None

    def violations(self) -> List[Dict[str, Any]]:
        return [c for c in self.checks if not c['ok']]


def _grid_modes(K_f: int, n_star: int, settings) -> int:
    K = max(settings.KAM_MIN_MODES, 2 * K_f + 2 * abs(n_star) + 8)
    cap = (settings.KAM_MAX_GRID - 1) // 4
    if K > cap:
        raise BudgetExhausted(f"reconjugation needs {K} modes, grid budget allows {cap}")
    return K


def _trim(f: FourierMap, floor: float) -> FourierMap:
    """Drop coefficients below the floor and shrink to the outermost surviving mode."""
    coeffs = f.coeffs.copy()
    coeffs[op_norm2(coeffs.astype(np.complex128)) < floor] = 0
    alive = np.nonzero(np.any(coeffs != 0, axis=(1, 2)))[0]
    K = int(np.max(np.abs(alive - f.K))) if alive.size else 0
    return FourierMap(coeffs[f.K - K:f.K + K + 1], f.radius, f.half)


def _cocycle_values(A: Su11Constant, f: FourierMap, thetas, rdtype) -> np.ndarray:
    return A.matrix.astype(rdtype) @ expm_sl2(f.evaluate(thetas).astype(rdtype))


def _reconjugate(A: Su11Constant, f: FourierMap, conj: Conjugacy, A_plus: Su11Constant,
                 alpha: Irrational, K: int, radius: float, settings) -> Tuple[FourierMap, float]:
    """
    f_plus = log(A_plus^{-1} B(theta+alpha)^{-1} A e^{f(theta)} B(theta)) on a 4K+1 grid

    Returns:
        (f_plus, identity_error) where the error is the relative mismatch of
        the conjugation identity on an offset 256-point grid

    Raises:
        ConsistencyError: If the conjugated map is too far from A_plus for a logarithm
    """
    rdtype, _ = settings.get_precision_dtype()
    a = alpha.as_dtype(rdtype)
    G = 4 * K + 1
    thetas = np.arange(G, dtype=rdtype) / G
    B0 = conj.evaluate(thetas, rdtype)
    after = inverse2(A_plus.matrix.astype(rdtype)) @ inverse2(conj.evaluate(thetas + a, rdtype)) \
        @ _cocycle_values(A, f, thetas, rdtype) @ B0
    if not np.all(np.isfinite(after)) or np.any(trace2(after) <= 0):
        raise ConsistencyError("conjugated cocycle is not close enough to its constant part")
    f_plus = FourierMap.from_samples(logm_sl2(after), K, radius)
    scale = max(1.0, float(np.max(op_norm2(B0.astype(np.float64)))) ** 2 * A.norm())
    f_plus = _trim(f_plus, settings.KAM_COEFF_FLOOR * scale)

    check = (np.arange(256, dtype=rdtype) + np.asarray(0.5, dtype=rdtype)) / 256
    before = _cocycle_values(A, f, check, rdtype)
    lhs = inverse2(conj.evaluate(check + a, rdtype)) @ before @ conj.evaluate(check, rdtype)
    rhs = _cocycle_values(A_plus, f_plus, check, rdtype)
    error = float(np.max(op_norm2((lhs - rhs).astype(np.float64)))) \
        / max(1.0, float(np.max(op_norm2(before.astype(np.float64)))))
    return f_plus, error


def _as_working(f: FourierMap, radius: float, settings) -> FourierMap:
    _, cdtype = settings.get_precision_dtype()
    if f.half:
        raise DomainError("the perturbation must be 1-periodic")
    return FourierMap(f.coeffs.astype(cdtype), radius, False)


def _as_constant(A, settings) -> Su11Constant:
    rdtype, _ = settings.get_precision_dtype()
    matrix = A.matrix if isinstance(A, Su11Constant) else np.asarray(A)
    return Su11Constant.from_matrix(np.asarray(matrix).astype(rdtype))


def _nonresonant(A: Su11Constant, f: FourierMap, h: float, h_plus: float, alpha: Irrational,
                 N: int, settings) -> StepOutcome:
    eps = analytic_norm(f, h)
    K_y = min(N, f.K)
    Y = FourierMap.zeros(K_y, radius=h_plus)
    if K_y > 0:
        ks = np.array([k for k in range(-K_y, K_y + 1) if k != 0])
        F = sl2_coordinates(f.coeffs[ks + f.K].astype(np.complex128))
        L = ad_matrix(A.matrix.astype(np.float64)).astype(np.complex128)
        phases = np.exp(2j * np.pi * ks * alpha.value)
        systems = phases[:, None, None] * L[None] - np.eye(3)
        smallest = np.linalg.svd(systems, compute_uv=False)[:, -1]
        if np.any(smallest < 1e-14):
            k_bad = int(ks[np.argmin(smallest)])
            raise ConsistencyError(f"vanishing divisor at mode {k_bad}; the step is resonant")
        y = np.linalg.solve(systems, F[..., None])[..., 0]
        Y.coeffs[ks + K_y] = sl2_from_coordinates(y)

    rdtype, _ = settings.get_precision_dtype()
    mean = f.mean().real.astype(rdtype)
    A_plus = Su11Constant.from_matrix(A.matrix.astype(rdtype) @ expm_sl2(mean))
    conj = Conjugacy([('exp', Y)])
    K = _grid_modes(f.K, 0, settings)
    f_plus, identity_error = _reconjugate(A, f, conj, A_plus, alpha, K, h_plus, settings)
    eps_plus = analytic_norm(f_plus, h_plus)

    checks: List[Dict[str, Any]] = []
    slack = settings.SLACK
    _check(checks, 'Y_norm', analytic_norm(Y, h_plus), math.sqrt(eps) * slack)
    _check(checks, 'f_plus', eps_plus, eps ** 1.5 * slack)
    _check(checks, 'A_shift', float(op_norm2((A_plus.matrix - A.matrix).astype(np.float64))), 2 * eps * slack)
    _check(checks, 'identity', identity_error, 1e-10)
    return StepOutcome(conj, A_plus, f_plus, Y, eps, eps_plus, N, identity_error=identity_error, checks=checks)


def _resonant(A: Su11Constant, f: FourierMap, h: float, h_plus: float, alpha: Irrational,
              N: int, n_star: int, exponent: float, settings) -> StepOutcome:
    if A.kind != 'elliptic':
        raise MisuseError(f"resonant step needs an elliptic constant, got {A.kind}")
    eps = analytic_norm(f, h)
    distance = float(torus_distance(2 * np.longdouble(A.xi_turns) - n_star * alpha.as_dtype(np.longdouble)))
    if n_star == 0 or abs(n_star) > N or (distance >= eps ** exponent and distance > 1e-12):
        raise MisuseError(f"n*={n_star} is not a resonance within N={N} "
                          f"(||2 xi - n alpha|| = {distance:.3e}, eps = {eps:.3e})")

    rdtype, _ = settings.get_precision_dtype()
    P, regime = normalize_elliptic(A, settings.SLACK)
    P64 = P.astype(np.float64)
    rotated = inverse2(P64).astype(np.complex128) @ f.coeffs.astype(np.complex128) @ P64.astype(np.complex128)
    F = to_su11(rotated)

    K_y = min(N, f.K)
    ks = np.arange(-K_y, K_y + 1)
    Fk = F[ks + f.K]
    phases = np.exp(2j * np.pi * ks * alpha.value)
    twist = np.exp(2j * A.xi)
    divisors = {
        (0, 0): (phases - 1, ks != 0),
        (0, 1): (phases / twist - 1, ks != n_star),
        (1, 0): (phases * twist - 1, ks != -n_star),
    }
    W = np.zeros((2 * K_y + 1, 2, 2), dtype=np.complex128)
    for (r, c), (divisor, keep) in divisors.items():
        if np.any(np.abs(divisor[keep]) < 1e-14):
            raise ConsistencyError(f"vanishing divisor in entry ({r + 1},{c + 1}) beyond the resonance")
        W[keep, r, c] = Fk[keep, r, c] / divisor[keep]
    W[:, 1, 1] = -W[:, 0, 0]
    Y = FourierMap(from_su11(W, real=False), h_plus)

    def entry(k, r, c):
        return F[k + f.K, r, c] if abs(k) <= f.K else 0j

    F11 = entry(0, 0, 0)
    resonant_su = np.array([[F11, entry(n_star, 0, 1)], [entry(-n_star, 1, 0), -F11]], dtype=np.complex128)
    resonant_part = from_su11(resonant_su).astype(rdtype)
    shifted = A.xi_turns - n_star * alpha.as_dtype(rdtype) / 2
    A_plus = Su11Constant.from_matrix(A.sign * rotation(shifted, rdtype) @ expm_sl2(resonant_part))

    conj = Conjugacy([('const', P), ('exp', Y), ('rot', n_star)])
    K = _grid_modes(f.K, n_star, settings)
    f_plus, identity_error = _reconjugate(A, f, conj, A_plus, alpha, K, h_plus, settings)
    eps_plus = analytic_norm(f_plus, h_plus)

    checks: List[Dict[str, Any]] = []
    slack, tau = settings.SLACK, settings.KAM_TAU
    _check(checks, 'nu_plus', abs(A_plus.nu), eps ** (15 / 16) * math.exp(-2 * math.pi * abs(n_star) * h) * slack)
    _check(checks, 'f_plus_resonant', eps_plus,
           eps * math.exp(-h_plus * eps ** (-1 / (18 * tau))) * slack)
    kappa = diophantine_constant(alpha, tau, min(2 * abs(n_star) + 1, 2000))
    _check(checks, 'P_norm', float(op_norm2(P64)), abs(n_star) ** tau / kappa * slack)
    _check(checks, 'identity', identity_error, 1e-10)
    return StepOutcome(conj, A_plus, f_plus, Y, eps, eps_plus, N, P=P, resonance=n_star, regime=regime,
                       identity_error=identity_error, checks=checks)


def _raise_if_strict(outcome: StepOutcome, settings):
    if settings.STRICT and outcome.violations():
        first = outcome.violations()[0]
        raise BoundViolation(first['name'], first['measured'], first['bound'])


def nonresonant_step(A, f: FourierMap, h: float, h_plus: float, *, alpha: Irrational,
                     N: Optional[int] = None, settings=Config) -> Tuple[FourierMap, Su11Constant, FourierMap]:
    """
    One non-resonant KAM step

    Solves A^{-1} Y(theta+alpha) A - Y(theta) = f(theta) - f^(0) for |k| <= N
    and returns (Y, A_plus, f_plus) with
    e^{-Y(theta+alpha)} A e^{f(theta)} e^{Y(theta)} = A_plus e^{f_plus(theta)}.

    Raises:
        GateError: If eps = |f|_h is above the smallness gate
        ConsistencyError: If a divisor vanishes (the step is resonant)
    """
    if not 0 < h_plus < h:
        raise DomainError(f"need 0 < h_plus < h, got h={h}, h_plus={h_plus}")
    A = _as_constant(A, settings)
    f = _as_working(f, h, settings)
    eps = analytic_norm(f, h)
    ok, bound = smallness_gate(A, eps, h, h_plus, settings)
    if not ok:
        raise GateError(f"eps = {eps:.3e} above the smallness gate {bound:.3e}")
    N = step_modes(eps, h, h_plus, settings) if N is None else N
    outcome = _nonresonant(A, f, h, h_plus, alpha, N, settings)
    _raise_if_strict(outcome, settings)
    return outcome.Y, outcome.A_plus, outcome.f_plus


def resonant_step(A, f: FourierMap, h: float, h_plus: float, n_star: int, *, alpha: Irrational,
                  N: Optional[int] = None, exponent: Optional[float] = None,
                  settings=Config) -> Tuple[np.ndarray, FourierMap, int, Su11Constant, FourierMap]:
    """
    One resonant KAM step at the resonance n_star

    The conjugacy is P e^{Y(theta)} rotation(n_star theta / 2): P normalizes A
    to a rotation, Y removes every mode except the resonant ones and the
    rotation moves the resonant mode to frequency zero.

    Returns:
        (P, Y, n_star, A_plus, f_plus); the degree of the step is n_star

    Raises:
        MisuseError: If n_star is not a resonance of A within N, or A is not elliptic
    """
    if not 0 < h_plus < h:
        raise DomainError(f"need 0 < h_plus < h, got h={h}, h_plus={h_plus}")
    A = _as_constant(A, settings)
    f = _as_working(f, h, settings)
    eps = analytic_norm(f, h)
    N = step_modes(eps, h, h_plus, settings) if N is None else N
    exponent = settings.KAM_RESONANCE_EXPONENT if exponent is None else exponent
    outcome = _resonant(A, f, h, h_plus, alpha, N, n_star, exponent, settings)
    _raise_if_strict(outcome, settings)
    return outcome.P, outcome.Y, n_star, outcome.A_plus, outcome.f_plus


def _rotation_backward(A: Su11Constant, f: FourierMap, h: float, h_plus: float, alpha: Irrational,
                       N: int, n_star: int, exponent: float, certificate: Tuple[float, float],
                       settings) -> StepOutcome:
    gamma, delta = certificate
    if 2 * math.pi * h_plus <= delta:
        raise CertificateError(f"2 pi h_plus = {2 * math.pi * h_plus:.4f} must exceed delta = {delta}")
    eps = analytic_norm(f, h)
    ok, worst_m, margin = lc_certificate(alpha, A.xi_turns, gamma, delta, min(N, 4 * abs(n_star) + 64))
    if not ok:
        raise CertificateError(f"rotation certificate fails at m={worst_m} (margin {margin:.3e})")

    outcome = _resonant(A, f, h, h_plus, alpha, N, n_star, exponent, settings)
    rdtype, _ = settings.get_precision_dtype()
    A_bar = outcome.A_plus
    checks = list(outcome.checks)
    if A_bar.nu == 0:
        U_bar = identity_like((), rdtype)
    else:
        if A_bar.kind != 'elliptic':
            raise CertificateError(f"constant after the resonant step is {A_bar.kind}")
        _check(checks, 'xi_bar', -abs(A_bar.xi),
               -eps ** 0.125 * math.exp(-delta * abs(n_star)) / (8 * settings.SLACK))
        U_bar, _ = normalize_elliptic(A_bar, settings.SLACK)
    conj = outcome.conjugacy.append('const', U_bar).append('rot', -n_star)
    A_plus = Su11Constant.from_matrix(
        A_bar.sign * rotation(A_bar.xi_turns + n_star * alpha.as_dtype(rdtype) / 2, rdtype))
    K = _grid_modes(f.K, n_star, settings)
    f_plus, identity_error = _reconjugate(A, f, conj, A_plus, alpha, K, h_plus, settings)

    conj_map = conj.to_fourier(K, h_plus)
    near = conj_map.copy()
    near.coeffs[near.K] -= np.eye(2)
    h_check = max(h_plus - delta / (2 * math.pi), 0.0)
    _check(checks, 'conj_near_identity', analytic_norm(near, h_check), eps ** 0.25 * settings.SLACK)
    _check(checks, 'identity', identity_error, 1e-10)
    return StepOutcome(conj, A_plus, f_plus, outcome.Y, eps, analytic_norm(f_plus, h_plus), N,
                       P=outcome.P, resonance=n_star, regime=outcome.regime,
                       identity_error=identity_error, checks=checks, conj_map=conj_map)


def rotation_backward_step(A, f: FourierMap, n_star: int, h: float, h_plus: float,
                           rho_certificate: Tuple[float, float], *, alpha: Irrational,
                           N: Optional[int] = None, exponent: Optional[float] = None,
                           settings=Config, report: Optional[Dict[str, Any]] = None
                           ) -> Tuple[FourierMap, Su11Constant, FourierMap]:
    """
    Resonant step followed by normalization and rotation back

    After the resonant step the new constant is conjugated to a rotation by
    U_bar and the rotation of degree n_star is undone, so the net conjugacy
    P e^Y R(n theta/2) U_bar R(-n theta/2) has degree zero and stays close
    to the identity when the rotation number satisfies the certificate
    ||2 rho - m alpha|| >= gamma e^{-|m| delta}.

    Args:
        rho_certificate: (gamma, delta) of the certificate
        report: Optional dict receiving the bound checks and intermediate norms

    Returns:
        (conj, A_plus, f_plus) with conj the net conjugacy as a FourierMap

    Raises:
        CertificateError: If the certificate fails, 2 pi h_plus <= delta, or the
            intermediate constant is not elliptic
    """
    if 2 * math.pi * h_plus <= rho_certificate[1]:
        raise CertificateError(f"2 pi h_plus = {2 * math.pi * h_plus:.4f} "
                               f"must exceed delta = {rho_certificate[1]}")
    if not 0 < h_plus < h:
        raise DomainError(f"need 0 < h_plus < h, got h={h}, h_plus={h_plus}")
    A = _as_constant(A, settings)
    f = _as_working(f, h, settings)
    N = step_modes(analytic_norm(f, h), h, h_plus, settings) if N is None else N
    exponent = settings.KAM_RESONANCE_EXPONENT if exponent is None else exponent

    outcome = _rotation_backward(A, f, h, h_plus, alpha, N, n_star, exponent, rho_certificate, settings)
    if report is not None:
        report.update({'checks': outcome.checks, 'eps': outcome.eps, 'eps_plus': outcome.eps_plus,
                       'identity_error': outcome.identity_error, 'degree': outcome.conjugacy.degree})
    _raise_if_strict(outcome, settings)
    return outcome.conj_map, outcome.A_plus, outcome.f_plus


KAM_COLUMNS = ['j', 'h', 'eps', 'log_eps', 'kind', 'xi', 'nu_abs', 'deg', 'resonance', 'N',
               'identity_error', 'Y_norm', 'tildeB_norm', 'lc_norm']


@dataclass
class KamStep:
    """One row of the KAM ledger."""
    j: int
    h: float
    eps: float
    log_eps: float
    constant: Su11Constant
    deg: int
    resonance: Optional[int]
    conj_factor: FourierMap = field(repr=False)
    N: int = 0
    identity_error: float = 0.0
    structure: Dict[str, Any] = field(default_factory=dict)

    def row(self) -> Dict[str, Any]:
        return {
            'j': self.j, 'h': self.h, 'eps': self.eps, 'log_eps': self.log_eps,
            'kind': self.constant.kind, 'xi': self.constant.xi, 'nu_abs': abs(self.constant.nu),
            'deg': self.deg, 'resonance': self.resonance, 'N': self.N,
            'identity_error': self.identity_error,
            'Y_norm': self.structure.get('Y_norm'), 'tildeB_norm': self.structure.get('tildeB_norm'),
            'lc_norm': self.structure.get('lc_norm'),
        }

    def as_tuple(self) -> Tuple[Any, ...]:
        row = self.row()
        return tuple(row[c] for c in KAM_COLUMNS)


@dataclass
class KamTrace:
    """Ledger of one almost-reducibility run."""
    steps: List[KamStep]
    resonant_indices: List[int]
    status: str
    violations: List[Dict[str, Any]]
    conjugacy: Conjugacy = field(repr=False)
    final_constant: Su11Constant = None
    final_perturbation: FourierMap = field(default=None, repr=False)
    final_eps: float = 0.0
    elapsed: float = 0.0

    @property
    def degree(self) -> int:
        return self.conjugacy.degree

    @property
    def final_log_eps(self) -> float:
        return math.log(self.final_eps) if self.final_eps > 0 else -math.inf

    def rows(self) -> List[Dict[str, Any]]:
        return [step.row() for step in self.steps]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'status': self.status,
            'degree': self.degree,
            'resonant_indices': list(self.resonant_indices),
            'final_eps': self.final_eps,
            'final_log_eps': self.final_log_eps,
            'final_constant': self.final_constant.to_dict() if self.final_constant else None,
            'violations': list(self.violations),
            'steps': self.rows(),
            'elapsed': self.elapsed,
        }


def _tilde_norm(B: Conjugacy, grid: int = 64) -> float:
    """sup over theta in [0, 2) of ||B(theta) rotation(-deg theta / 2)||."""
    thetas = np.arange(grid) * 2.0 / grid
    values = B.evaluate(thetas) @ rotation(-B.degree * thetas / 2)
    return float(np.max(op_norm2(values)))


def kam_iterate(A0, f0: FourierMap, h: float, h_tilde: float, budget: int, *,
                alpha: Irrational, lc: Optional[Tuple[float, float]] = None,
                settings=Config) -> KamTrace:
    """
    Run the KAM scheme from (A0, f0) for at most budget steps

    Strip widths shrink as h_j - h_{j+1} = (h - h_tilde) / 4^{j+1}; step j uses
    N_j = 2 |ln eps_j| / (h_j - h_{j+1}) modes and is resonant when the
    rotation of A_j satisfies ||2 xi - n alpha|| < eps_j^sigma for some
    0 < |n| <= resonance_range(eps_j, h_j, N_j).

    With lc = (gamma, delta) every resonant step is followed by rotating back
    (see rotation_backward_step), so the accumulated conjugacy keeps degree
    zero and its norm on the strip of width h_tilde - delta / 2 pi is logged
    per step as lc_norm.

    Args:
        A0: Initial constant (Su11Constant or 2x2 matrix)
        f0: Initial perturbation, 1-periodic
        h: Initial strip width
        h_tilde: Final strip width, 0 < h_tilde < h
        budget: Number of steps, at most KAM_MAX_STEPS
        alpha: The frequency
        lc: Optional rotation-number certificate (gamma, delta)
        settings: Configuration class

    Returns:
        KamTrace; running out of steps or precision is a status, not an error

    Raises:
        GateError: If eps_0 is above the smallness gate
        CertificateError: If 2 pi h_tilde <= delta, or the certificate fails
        BudgetExhausted: If a step needs more modes than KAM_MAX_GRID allows;
            partial carries (KAM_COLUMNS, rows) of the steps completed so far
        BoundViolation: In strict mode, on the first failed bound check
    """
    if not 0 < h_tilde < h:
        raise DomainError(f"need h > h_tilde > 0, got h={h}, h_tilde={h_tilde}")
    if not 1 <= budget <= settings.KAM_MAX_STEPS:
        raise DomainError(f"budget must be in [1, {settings.KAM_MAX_STEPS}], got {budget}")
    if lc is not None and 2 * math.pi * h_tilde <= lc[1]:
        raise CertificateError(f"2 pi h_tilde = {2 * math.pi * h_tilde:.4f} must exceed delta = {lc[1]}")

    start = time.time()
    A = _as_constant(A0, settings)
    f = _as_working(f0, h, settings)
    eps = analytic_norm(f, h)
    ok, bound = smallness_gate(A, eps, h, h - (h - h_tilde) / 4, settings)
    if not ok:
        raise GateError(f"eps_0 = {eps:.3e} above the smallness gate {bound:.3e}")

    B = Conjugacy.identity()
    steps: List[KamStep] = []
    violations: List[Dict[str, Any]] = []
    resonant: List[int] = []
    status = STATUS_EXHAUSTED
    kappa = 1.0
    h_j = h

    for j in range(budget):
        if eps < settings.KAM_RESIDUAL_FLOOR:
            break
        if not math.isfinite(eps) or eps >= 1:
            status = STATUS_DIVERGED
            break
        h_next = h_j - (h - h_tilde) / 4 ** (j + 1)
        gate_ok, gate_bound = smallness_gate(A, eps, h_j, h_next, settings)
        if not gate_ok:
            violations.append({'step': j, 'name': 'gate', 'measured': eps, 'bound': gate_bound, 'ok': False})

        N = step_modes(eps, h_j, h_next, settings)
        n_range = resonance_range(eps, h_j, N)
        n_star = None
        if A.kind == 'elliptic' and n_range >= 1:
            n_star = detect_resonance(A.xi_turns, alpha, n_range, eps, settings.KAM_RESONANCE_EXPONENT)
        try:
            if n_star is None:
                outcome = _nonresonant(A, f, h_j, h_next, alpha, N, settings)
            elif lc is None:
                outcome = _resonant(A, f, h_j, h_next, alpha, N, n_star,
                                    settings.KAM_RESONANCE_EXPONENT, settings)
            else:
                outcome = _rotation_backward(A, f, h_j, h_next, alpha, N, n_star,
                                             settings.KAM_RESONANCE_EXPONENT, lc, settings)
        except ConsistencyError as exc:
            logger.warning(f"KAM step {j} failed: {exc}")
            status = STATUS_DIVERGED
            break
        except BudgetExhausted as exc:
            logger.info(f"KAM step {j} stopped: {exc}")
            raise BudgetExhausted(f"KAM step {j}: {exc}",
                                  partial=(KAM_COLUMNS, [s.as_tuple() for s in steps])) from exc

        checks = list(outcome.checks)
        if n_star is None:
            _check(checks, 'contraction', outcome.eps_plus, 4 * eps * eps * settings.SLACK)
        else:
            if lc is None and resonant and abs(n_star) <= abs(resonant[-1]):
                _check(checks, 'separation', -abs(n_star), -abs(resonant[-1]) - 1)
            resonant.append(n_star)

        B = B.then(outcome.conjugacy)
        tilde = _tilde_norm(B)
        if n_star is not None:
            kappa = diophantine_constant(alpha, settings.KAM_TAU, min(2 * abs(resonant[-1]) + 1, 2000))
        if resonant and lc is None:
            _check(checks, 'tildeB', tilde,
                   settings.SLACK * abs(resonant[-1]) ** (2 * settings.KAM_TAU) / kappa)
        for c in checks:
            if not c['ok']:
                violations.append({'step': j, **c})
                if settings.STRICT:
                    raise BoundViolation(c['name'], c['measured'], c['bound'])

        structure = {'Y_norm': analytic_norm(outcome.Y, h_next), 'tildeB_norm': tilde,
                     'rotation_deg': n_star or 0}
        if lc is not None:
            structure['lc_norm'] = analytic_norm(B.to_fourier(64, h_tilde), h_tilde - lc[1] / (2 * math.pi))
        if outcome.regime:
            structure['regime'] = outcome.regime
        steps.append(KamStep(j, h_j, eps, math.log(eps) if eps > 0 else -math.inf, A, B.degree, n_star,
                             outcome.Y, N, outcome.identity_error, structure))
        logger.debug(f"KAM step {j}: eps={eps:.3e} -> {outcome.eps_plus:.3e}, N={N}, resonance={n_star}")
        A, f, eps, h_j = outcome.A_plus, outcome.f_plus, outcome.eps_plus, h_next

    if status != STATUS_DIVERGED and eps < settings.KAM_RESIDUAL_FLOOR:
        status = STATUS_CONVERGED
    elapsed = time.time() - start
    logger.info(f"KAM run finished with status {status} after {len(steps)} steps "
                f"(eps={eps:.3e}, degree={B.degree}) in {elapsed:.2f}s")
    return KamTrace(steps, resonant, status, violations, B, A, f, eps, elapsed)


def calibrate_gate(alpha: Irrational, samples: int = 100, *, seed: Optional[int] = None,
                   lam_max: float = 0.05, h: float = 0.1, h_tilde: float = 0.05, steps: int = 3,
                   settings=Config) -> Tuple[float, List[Dict[str, Any]]]:
    """
    Search for the smallness-gate constant D0 on random AMO instances

    Each instance (lambda, E) runs ungated for a few steps; it contracts when
    the run does not diverge and ends below eps_0^2. The constant an instance
    would need is eps_0 max(||A||, 1)^C0 / (h - h_plus)^(C0 tau). The result is
    the smallest such value among failing instances, or the largest among all
    when none fails.

    Args:
        alpha: The frequency
        samples: Number of random instances
        seed: Seed for numpy's generator
        lam_max: Upper end of the coupling range
        steps: KAM steps per instance

    Returns:
        (D0, table) with one dict per instance
    """
    if samples < 1:
        raise DomainError(f"samples must be positive, got {samples}")
    ungated = type('Ungated', (settings,), {'KAM_D0': math.inf, 'STRICT': False})
    rng = np.random.default_rng(seed)
    dh = (h - h_tilde) / 4
    table: List[Dict[str, Any]] = []
    for lam, E in zip(rng.uniform(1e-3, lam_max, samples), rng.uniform(-1.6, 1.6, samples)):
        A0, f0 = amo_local_data(float(lam), float(E), h)
        eps0 = analytic_norm(f0, h)
        try:
            trace = kam_iterate(A0, f0, h, h_tilde, steps, alpha=alpha, settings=ungated)
            contracts = trace.status != STATUS_DIVERGED and trace.final_eps < eps0 ** 2
        except (BudgetExhausted, ConsistencyError) as exc:
            logger.debug(f"calibration instance lambda={lam:.4f}, E={E:.4f} stopped: {exc}")
            contracts = False
        required = (eps0 * max(A0.norm(), 1.0) ** settings.KAM_C0
                    / dh ** (settings.KAM_C0 * settings.KAM_TAU))
        table.append({'lambda': float(lam), 'E': float(E), 'eps0': eps0,
                      'required': required, 'contracts': contracts})
    failing = [row['required'] for row in table if not row['contracts']]
    D0 = min(failing) if failing else max(row['required'] for row in table)
    logger.info(f"gate calibration over {samples} instances: D0 = {D0:.3e} ({len(failing)} failing)")
    return D0, table



def amo_local_data(lam: float, E: float, h: float = 0.1) -> Tuple[Su11Constant, FourierMap]:
    """
    Perturbative form of the almost Mathieu cocycle

    S_E(theta) = [[E - 2 lam cos 2 pi theta, -1], [1, 0]] = A0 e^{f0(theta)} with
    A0 = [[E, -1], [1, 0]] and f0 = [[0, 0], [2 lam cos 2 pi theta, 0]] (f0 is nilpotent).

    Raises:
        DomainError: If lam is not in (0, 0.05]
    """
    if not 0 < lam <= 0.05:
        raise DomainError(f"the local form needs 0 < lambda <= 0.05, got {lam}")
    A0 = Su11Constant.from_matrix(np.array([[E, -1.0], [1.0, 0.0]]))
    mode = np.array([[0.0, 0.0], [lam, 0.0]])
    return A0, FourierMap.from_modes({-1: mode, 1: mode}, radius=h)


def composition_error_bound(partial_norms: Sequence[float], perturbation_norms: Sequence[float]) -> float:
    """
    Bound on ||prod_k M_k e^{y_k} - prod_k M_k||

    exp(sum_k ||M^(k)||^2 ||y_k||) - 1 where M^(k) are the partial products.
    """
    if len(partial_norms) != len(perturbation_norms):
        raise DomainError("partial products and perturbations must have the same length")
    total = sum(m * m * y for m, y in zip(partial_norms, perturbation_norms))
    return math.expm1(total)


def triangular_power(theta: float, c: complex, n: int) -> np.ndarray:
    """
    n-th power of [[e^{2 pi i theta}, c], [0, e^{-2 pi i theta}]] in closed form

    The corner is c e^{2 pi i (n-1) theta} (1 - e^{-4 pi i n theta}) / (1 - e^{-4 pi i theta}),
    or n c e^{2 pi i (n-1) theta} when 2 theta is an integer.
    """
    if n < 0:
        raise DomainError("triangular_power needs n >= 0")
    z = np.exp(2j * np.pi * theta)
    ratio = np.exp(-4j * np.pi * theta)
    if abs(1 - ratio) < 1e-12:
        corner = n * c * z ** (n - 1)
    else:
        corner = c * z ** (n - 1) * (1 - ratio ** n) / (1 - ratio)
    return np.array([[z ** n, corner], [0, z ** (-n)]], dtype=np.complex128)
