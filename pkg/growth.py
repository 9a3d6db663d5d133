#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Stratified growth of transfer matrices

This module compares the measured growth of the fundamental solution
U_E(n) of the almost Mathieu equation with the resonance-driven envelope
f(n). The envelope is piecewise: inside the window of the j-th resonance
l_j it grows like 1 - |l_j| h / ln n up to n = e^{eta_j |l_j|}, then
oscillates with the sine of n (rho - l_j alpha / 2).

Constant elliptic cocycles have the exact growth
||A^n||_HS = (2 + 4 sin^2(n xi) |nu / xi|^2)^{1/2}, which anchors the
three-regime prediction.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from mpmath import mp

from arithmetic import Irrational, resonance_table, torus_norm
from cocycle import CocycleMap, growth_profile, rotation_number
from config import Config
from errors import CertificateError, DomainError, UnsupportedError
from fourier import FourierMap
from kam import Su11Constant, composition_error_bound, triangular_power, triangularize
from utils.helpers import expm_sl2, hs_norm, op_norm2

logger = logging.getLogger(__name__)

ETA_TOLERANCE = 0.1
MAX_SCAN = 20000


def _window_edge(exponent: float) -> float:
    return math.exp(exponent) if exponent < 700 else math.inf


@dataclass
class EnvelopeSpec:
    """
    Resonance data of one energy and the windows of the growth envelope

    Attributes:
        ell: Resonances l_j in order of increasing |l_j|
        eta: Strengths with |sin 2 pi (2 rho - l_j alpha)| = e^{-eta_j |l_j|} (inf for exact)
        h_lambda: -ln lambda
        eps: Envelope tolerance epsilon
        eps0: Resonance strength threshold
        windows: [e^{eps h |l_j| / 256}, e^{eps h |l_{j+1}| / 256}) per resonance
        rho: Rotation number
        alpha: Frequency value
    """
    ell: List[int]
    eta: List[float]
    h_lambda: float
    eps: float
    eps0: float
    windows: List[Tuple[float, float]] = field(default_factory=list)
    rho: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if len(self.ell) != len(self.eta) or len(self.ell) != len(self.windows):
            raise DomainError("ell, eta and windows must have the same length")
        for (lo, hi), nxt in zip(self.windows, self.windows[1:]):
            if not lo <= hi <= nxt[0]:
                raise DomainError("envelope windows must be ordered and disjoint")

    @classmethod
    def build(cls, ell: Sequence[int], eta: Sequence[float], h_lambda: float, eps: float, eps0: float,
              rho: float = 0.0, alpha: float = 0.0) -> 'EnvelopeSpec':
        scale = eps * h_lambda / 256
        edges = [_window_edge(scale * abs(l)) for l in ell] + [math.inf]
        windows = [(edges[j], edges[j + 1]) for j in range(len(ell))]
        return cls(list(ell), list(eta), h_lambda, eps, eps0, windows, rho, alpha)

    def window_of(self, n: float) -> Optional[int]:
        m = abs(n)
        for j, (lo, hi) in enumerate(self.windows):
            if lo <= m < hi:
                return j
        return None


def envelope_from_rotation(lam: float, alpha: Irrational, rho: float, eps: float, eps0: float,
                           K: int) -> EnvelopeSpec:
    """
    Envelope data from the resonances of rho up to |l| <= K

    Resonances weaker than eps0 (1 - 0.1) are dropped so every stored
    strength satisfies eta_j >= eps0 (1 - tolerance).

    Raises:
        DomainError: If lambda is not in (0, 1) or eps, eps0 are not positive
    """
    if not 0 < lam < 1:
        raise DomainError(f"growth envelopes need 0 < lambda < 1, got {lam}")
    if eps <= 0 or eps0 <= 0:
        raise DomainError("eps and eps0 must be positive")
    ell, eta = [], []
    with mp.workdps(alpha.dps):
        two_rho = 2 * mp.mpf(rho)
        for l, _ in resonance_table(alpha, rho, eps0, K):
            s = abs(mp.sin(2 * mp.pi * (two_rho - l * alpha.approx)))
            strength = math.inf if s == 0 else float(-mp.log(s) / abs(l))
            if strength < eps0 * (1 - ETA_TOLERANCE):
                logger.debug(f"Dropping resonance l={l}: eta={strength:.4f} below eps0={eps0}")
                continue
            ell.append(l)
            eta.append(strength)
    return EnvelopeSpec.build(ell, eta, -math.log(lam), eps, eps0, rho, alpha.value)


def _branches(spec: EnvelopeSpec, j: int, n: float) -> Tuple[float, Optional[float]]:
    """Unclamped (growth, oscillation) values of window j at n."""
    L, eta, h = abs(spec.ell[j]), spec.eta[j], spec.h_lambda
    log_n = math.log(abs(n))
    growing = 1 - L * h / log_n
    if math.isinf(eta):
        return growing, None
    s = abs(math.sin(2 * math.pi * abs(n) * (spec.rho - spec.ell[j] * spec.alpha / 2)))
    if s == 0:
        return growing, -math.inf
    return growing, (math.log(s) + L * (eta - h)) / log_n


def envelope_f(spec: EnvelopeSpec, n: float) -> float:
    """
    The envelope f(n) in [0, 1]

    Growth branch max(1 - |l_j| h / ln|n|, 0) while |n| <= e^{eta_j |l_j|},
    oscillation branch max((ln|sin 2 pi n (rho - l_j alpha/2)| + |l_j| (eta_j - h)) / ln|n|, 0)
    beyond. Without resonances f is identically zero.

    Raises:
        DomainError: If n lies before the first window
    """
    if not spec.ell:
        return 0.0
    j = spec.window_of(n)
    if j is None:
        raise DomainError(f"n={n} lies before the first envelope window starting at {spec.windows[0][0]:.4g}")
    if abs(n) <= 1:
        return 0.0
    growing, oscillating = _branches(spec, j, n)
    if oscillating is None or math.log(abs(n)) <= spec.eta[j] * abs(spec.ell[j]):
        return max(growing, 0.0)
    return max(oscillating, 0.0)


def peak_position(spec: EnvelopeSpec, j: int) -> float:
    """Switch point e^{eta_j |l_j|} of window j."""
    return _window_edge(spec.eta[j] * abs(spec.ell[j]))


@dataclass
class GrowthRow:
    n: int
    exponent: float
    exponent_op: float
    f: float
    window: Optional[int]
    verdict: str
    polylog_slack: float
    verdict_polylog: str

    def as_tuple(self) -> Tuple[Any, ...]:
        return (self.n, self.exponent, self.exponent_op, self.f, self.window, self.verdict,
                self.polylog_slack, self.verdict_polylog)


GROWTH_COLUMNS = ['n', 'exponent', 'exponent_op', 'f', 'window', 'verdict', 'polylog_slack', 'verdict_polylog']


def growth_report(lam: float, alpha: Irrational, E: float, eps: float, eps0: float, N: int,
                  theta: float = 0.0, rotation_steps: int = 20000, K: Optional[int] = None,
                  tolerance: Optional[float] = None, num: int = 64,
                  min_log_n: Optional[float] = None) -> Tuple[List[GrowthRow], EnvelopeSpec]:
    """
    Measured exponent ln||U_E(n)||_HS / ln n against the envelope f(n)

    U_E(n) is the fundamental solution with identity initial data, i.e. the
    transfer matrix A_n(theta). A row passes when the exponent lies within
    the tolerance of f(n); the polylog verdict widens the band by
    4 tau ln ln n / ln n. Rows before the first window use f = 0.

    Only n with ln n >= min_log_n (default Config.GROWTH_MIN_LOG_N) are
    reported: below it the O(1) size of a single step dominates the ratio.

    Raises:
        DomainError: If lambda is not in (0, 1), N > 10^7 or ln N < min_log_n
        CertificateError: If the rotation number error bar exceeds the
            smallest resonance distance used
    """
    if not 0 < lam < 1:
        raise DomainError(f"growth_report needs 0 < lambda < 1, got {lam}")
    if not 2 <= N <= 10 ** 7:
        raise DomainError(f"N must be in [2, 10^7], got {N}")
    tolerance = Config.EXPONENT_TOL if tolerance is None else tolerance
    min_log_n = Config.GROWTH_MIN_LOG_N if min_log_n is None else min_log_n
    if math.log(N) < min_log_n:
        raise DomainError(f"N={N} is below the reporting window ln n >= {min_log_n}")
    c = CocycleMap.almost_mathieu(alpha, lam, E)
    rho = rotation_number(c, rotation_steps, theta)
    h = -math.log(lam)
    if K is None:
        K = int(min(math.ceil(256 * math.log(N) / (eps * h)) + 1, MAX_SCAN))
    spec = envelope_from_rotation(lam, alpha, rho.value, eps, eps0, K)
    if spec.ell:
        distances = [torus_norm(2 * rho.value - l * alpha.value) for l in spec.ell]
        if 2 * rho.error >= min(distances):
            raise CertificateError(f"rotation number error {2 * rho.error:.2e} exceeds the resonance distance "
                                   f"{min(distances):.2e}; rerun with more rotation steps")

    hs = growth_profile(c, theta, N, 'hs', num)
    op = growth_profile(c, theta, N, 'op', num)
    rows = []
    for n, log_hs, log_op in zip(hs.ns, hs.lognorms, op.lognorms):
        if n < 2 or math.log(n) < min_log_n:
            continue
        window = spec.window_of(n) if spec.ell else None
        f = envelope_f(spec, n) if (not spec.ell or window is not None) else 0.0
        exponent = log_hs / math.log(n)
        slack = 4 * Config.KAM_TAU * max(math.log(math.log(n)), 0.0) / math.log(n)
        rows.append(GrowthRow(
            n, exponent, log_op / math.log(n), f, window,
            'pass' if abs(exponent - f) <= tolerance else 'fail', slack,
            'pass' if abs(exponent - f) <= tolerance + slack else 'fail'))
    failed = sum(1 for r in rows if r.verdict == 'fail')
    logger.info(f"Growth report lambda={lam} E={E}: rho={rho.value:.8f}, {len(spec.ell)} resonances, "
                f"{failed}/{len(rows)} rows outside the band")
    return rows, spec


def hs_power_norm(constant: Su11Constant, n: int) -> float:
    """
    ||A^n||_HS = (2 + 4 sin^2(n xi) |nu / xi|^2)^{1/2} for an elliptic constant

    Raises:
        UnsupportedError: For hyperbolic or parabolic constants other than +-id
    """
    if constant.t == 0 and constant.nu == 0:
        return math.sqrt(2.0)
    if constant.kind != 'elliptic':
        raise UnsupportedError(f"exact power growth needs an elliptic constant, got {constant.kind}")
    ratio = abs(constant.nu) / abs(constant.xi)
    return math.sqrt(2 + 4 * math.sin(n * constant.xi) ** 2 * ratio ** 2)


def triangular_hs_norms(constant: Su11Constant, ns: Sequence[int]) -> np.ndarray:
    """
    ||A^n||_HS for every n in ns from the triangular form of A

    A is unitarily conjugate to [[e^{i xi}, nu'], [0, e^{-i xi}]], whose
    powers have a closed-form corner.

    Raises:
        UnsupportedError: If the constant is not elliptic
    """
    if constant.kind != 'elliptic':
        raise UnsupportedError(f"triangular powers need an elliptic constant, got {constant.kind}")
    _, nu_prime = triangularize(constant)
    powers = np.stack([triangular_power(constant.xi_turns, nu_prime, int(n)) for n in ns])
    return hs_norm(powers)


@dataclass
class RegimePrediction:
    """Predicted ||A_n|| / sqrt(2) over a window with the regime of each n."""
    ns: List[int]
    values: List[float]
    regimes: List[str]
    ratio: float
    turnover: float

    def rows(self) -> List[Tuple[int, float, str]]:
        return list(zip(self.ns, self.values, self.regimes))


def regime_predict(constant: Su11Constant, resonance_window: Tuple[int, int], num: int = 64) -> RegimePrediction:
    """
    Three-regime prediction for the growth of an elliptic constant

    Flat when |nu / xi| < 1/2; otherwise linear (about n |nu|) up to
    n = 1/|xi|, then oscillating as (1 + 2 sin^2(n xi) |nu / xi|^2)^{1/2}.
    The values are the triangular-form powers throughout.

    Raises:
        UnsupportedError: If the constant is hyperbolic
    """
    if constant.kind == 'hyperbolic':
        raise UnsupportedError("hyperbolic constants grow exponentially; no regime prediction")
    n_low, n_high = resonance_window
    if not 1 <= n_low <= n_high:
        raise DomainError(f"invalid window {resonance_window}")
    ns = sorted(set(int(v) for v in np.rint(np.geomspace(n_low, n_high, num))))
    if constant.nu == 0:
        return RegimePrediction(ns, [1.0] * len(ns), ['flat'] * len(ns), 0.0, math.inf)
    if constant.kind != 'elliptic':
        raise UnsupportedError(f"regime prediction needs an elliptic constant, got {constant.kind}")
    xi = abs(constant.xi)
    ratio = abs(constant.nu) / xi
    values = [float(v) for v in triangular_hs_norms(constant, ns) / math.sqrt(2)]
    if ratio < 0.5:
        regimes = ['flat'] * len(ns)
    else:
        regimes = ['linear' if n < 1 / xi else 'oscillatory' for n in ns]
    return RegimePrediction(ns, values, regimes, ratio, 1 / xi)


@dataclass
class PerturbedGrowth:
    """Measured against predicted ||A_n||_HS for a perturbed constant."""
    ns: List[int]
    measured: List[float]
    predicted: List[float]
    bounds: List[float]

    def ratios(self) -> List[float]:
        return [m / p for m, p in zip(self.measured, self.predicted)]

    def rows(self) -> List[Tuple[int, float, float, float, float]]:
        return list(zip(self.ns, self.measured, self.predicted, self.ratios(), self.bounds))


PERTURBED_COLUMNS = ['n', 'measured', 'predicted', 'ratio', 'bound']


def perturbed_growth(constant: Su11Constant, perturbation: FourierMap, alpha: Irrational, n_max: int,
                     theta: float = 0.0, num: int = 64) -> PerturbedGrowth:
    """
    Growth of the cocycle A e^{f(theta)} against the powers of A

    Each row carries the composition bound
    exp(sum_{k <= n} ||A^k||^2 ||e^f - id||) - 1 on the relative deviation
    of the measured norm from the prediction.

    Args:
        constant: Elliptic constant A
        perturbation: Trace-zero f on the circle
        alpha: The frequency
        n_max: Largest n
        theta: Base phase
        num: Number of geometric sample points

    Raises:
        UnsupportedError: If the constant is not elliptic
        DomainError: If n_max < 1
    """
    if n_max < 1:
        raise DomainError(f"n_max must be positive, got {n_max}")
    if constant.kind != 'elliptic':
        raise UnsupportedError(f"perturbed growth needs an elliptic constant, got {constant.kind}")
    matrix = np.asarray(constant.matrix, dtype=np.float64)
    c = CocycleMap.general(alpha, lambda thetas: matrix @ expm_sl2(perturbation.evaluate(thetas)))
    profile = growth_profile(c, theta, n_max, 'hs', num)

    partial = triangular_hs_norms(constant, range(1, n_max + 1))
    grid = np.arange(256) / 256
    step = float(np.max(op_norm2(expm_sl2(perturbation.evaluate(grid)) - np.eye(2))))
    measured, predicted, bounds = [], [], []
    for n, lognorm in zip(profile.ns, profile.lognorms):
        measured.append(math.exp(lognorm))
        predicted.append(float(triangular_hs_norms(constant, [n])[0]))
        bounds.append(composition_error_bound(partial[:n], [step] * n))
    worst = max(abs(m / p - 1) for m, p in zip(measured, predicted))
    logger.info(f"Perturbed growth up to n={n_max}: worst relative deviation {worst:.2e}, "
                f"bound {bounds[-1]:.2e}")
    return PerturbedGrowth(profile.ns, measured, predicted, bounds)
