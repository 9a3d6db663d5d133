#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Diophantine arithmetic of the frequency

This module represents an irrational frequency by its continued fraction
data and answers the arithmetic questions the rest of the lab asks:
distances to the integers, the exponents beta(alpha) and delta(alpha, rho),
and the sequence of resonances of a rotation number.

An Irrational is identified with its finite continued fraction; queries are
trusted only while the truncation error stays far below the answer.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import List, Sequence, Tuple, Union

import numpy as np
from mpmath import mp

from config import Config
from errors import DomainError, PrecisionError, ValidationError

logger = logging.getLogger(__name__)

RealLike = Union[float, int, Fraction, 'mp.mpf']


class ResonanceOutcome(Enum):
    """Outcome of delta_estimate when 2 rho is an exact multiple of alpha."""
    EXACT = "exact-resonance"


@dataclass(frozen=True)
class Irrational:
    """
    Irrational frequency alpha = [0; a1, a2, ...] in (0, 1)

    Attributes:
        cf: Partial quotients a1, a2, ... (all >= 1)
        convergents: (p_n, q_n) for n = 1..len(cf)
        dps: mpmath decimal digits used for high-precision values
    """
    cf: Tuple[int, ...]
    convergents: Tuple[Tuple[int, int], ...] = field(repr=False)
    dps: int = 256

    @property
    def fraction(self) -> Fraction:
        p, q = self.convergents[-1]
        return Fraction(p, q)

    @property
    def approx(self):
        """alpha as an mpmath number at the configured precision."""
        p, q = self.convergents[-1]
        with mp.workdps(self.dps):
            return mp.mpf(p) / q

    @property
    def value(self) -> float:
        p, q = self.convergents[-1]
        return p / q

    def as_dtype(self, dtype=np.float64):
        """alpha rounded into a numpy real dtype (longdouble keeps its extra digits)."""
        if np.dtype(dtype) == np.dtype(np.longdouble):
            with mp.workdps(40):
                return np.longdouble(mp.nstr(self.approx, 35))
        return dtype(self.value)

    @property
    def denominators(self) -> List[int]:
        return [q for _, q in self.convergents]

    def truncation_error(self, k: int) -> Fraction:
        """Upper bound on |k alpha_true - k p/q| for any irrational sharing these terms."""
        q = self.convergents[-1][1]
        return Fraction(abs(k), q * q)

    def __str__(self) -> str:
        head = ",".join(str(a) for a in self.cf[:6])
        return f"[0; {head}{',...' if len(self.cf) > 6 else ''}] ({len(self.cf)} terms)"


def torus_norm(x: float) -> float:
    """
    Distance from x to the nearest integer, in [0, 1/2]

    Raises:
        DomainError: If x is not finite
    """
    if not math.isfinite(x):
        raise DomainError(f"torus_norm needs a finite value, got {x}")
    r = x - math.floor(x)
    return min(r, 1.0 - r)


def from_cf(coefs: Sequence[int], dps: int = None) -> Irrational:
    """
    Build an Irrational from partial quotients

    Args:
        coefs: Partial quotients a1, a2, ...; at least two, all >= 1
        dps: mpmath precision (default from Config)

    Returns:
        Irrational with convergents p_n/q_n

    Raises:
        ValidationError: If fewer than two terms or a coefficient < 1
    """
    coefs = tuple(int(a) for a in coefs)
    if len(coefs) < 2:
        raise ValidationError('alpha', "continued fraction needs at least two terms")
    if any(a < 1 for a in coefs):
        raise ValidationError('alpha', "cf coefficients must be ≥ 1")

    convergents = []
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    for a in coefs:
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
        convergents.append((p, q))

    alpha = Irrational(cf=coefs, convergents=tuple(convergents), dps=dps or Config.MP_DPS)
    logger.debug(f"Built alpha {alpha} with q_L={convergents[-1][1]}")
    return alpha


def golden(terms: int = None) -> Irrational:
    """(sqrt(5) - 1)/2 = [0; 1, 1, 1, ...]."""
    return from_cf([1] * (terms or Config.CF_TERMS))


def silver(terms: int = None) -> Irrational:
    """sqrt(2) - 1 = [0; 2, 2, 2, ...]."""
    return from_cf([2] * (terms or Config.CF_TERMS))


def parse_alpha(text: str, terms: int = None) -> Irrational:
    """
    Parse 'golden', 'silver' or 'cf:a1,a2,...'

    Raises:
        ValidationError: On an unknown alias or malformed coefficients
    """
    text = text.strip()
    if text == 'golden':
        return golden(terms)
    if text == 'silver':
        return silver(terms)
    if text.startswith('cf:'):
        try:
            coefs = [int(tok) for tok in text[3:].split(',') if tok.strip()]
        except ValueError:
            raise ValidationError('alpha', f"malformed continued fraction {text!r}")
        return from_cf(coefs)
    raise ValidationError('alpha', f"expected golden, silver or cf:a1,a2,... (got {text!r})")


def _knorm_exact(alpha: Irrational, k: int) -> Fraction:
    if k == 0:
        raise DomainError("knorm is undefined for k = 0")
    p, q = alpha.convergents[-1]
    r = (abs(k) * p) % q
    return Fraction(min(r, q - r), q)


def knorm(alpha: Irrational, k: int, relative_error: float = None) -> float:
    """
    Distance from k*alpha to the nearest integer

    Args:
        alpha: The frequency
        k: Non-zero integer
        relative_error: Required relative accuracy (default Config.KNORM_RELATIVE_ERROR)

    Returns:
        ||k alpha|| in (0, 1/2]

    Raises:
        DomainError: If k == 0
        PrecisionError: If the truncated continued fraction cannot deliver the accuracy
    """
    relative_error = relative_error or Config.KNORM_RELATIVE_ERROR
    value = _knorm_exact(alpha, k)
    if value == 0 or alpha.truncation_error(k) > value * Fraction(relative_error):
        raise PrecisionError(f"||{k} alpha|| is beyond the precision budget of {alpha}")
    return float(value)


def _to_mpf(x: RealLike):
    if isinstance(x, Fraction):
        return mp.mpf(x.numerator) / x.denominator
    return mp.mpf(x)


def _dist(x):
    """||x||_{R/Z} for an mpmath number."""
    return abs(x - mp.nint(x))


def beta_terms(alpha: Irrational, K: int) -> List[Tuple[int, float]]:
    """
    Terms -ln||q_n alpha|| / q_n for the convergent denominators 10 <= q_n <= K

    When no denominator lies in that range the last denominator <= K is used.

    Raises:
        DomainError: If K < 10
        PrecisionError: If K reaches the last stored denominator
    """
    if K < 10:
        raise DomainError("beta_estimate needs K >= 10")
    denominators = alpha.denominators
    if K >= denominators[-1]:
        raise PrecisionError(f"K={K} reaches the last stored denominator {denominators[-1]}")

    window = [q for q in denominators[:-1] if 10 <= q <= K] or \
             [q for q in denominators[:-1] if q <= K][-1:]
    terms = []
    with mp.workdps(alpha.dps):
        for q in window:
            distance = _knorm_exact(alpha, q)
            if alpha.truncation_error(q) > distance * Fraction(Config.KNORM_RELATIVE_ERROR):
                raise PrecisionError(f"||{q} alpha|| is beyond the precision budget")
            terms.append((q, float(-mp.log(_to_mpf(distance)) / q)))
    return terms


def beta_estimate(alpha: Irrational, K: int) -> float:
    """
    Running estimate of beta(alpha) = limsup -ln||q_n alpha|| / q_n

    The estimate is the maximum of beta_terms, so it never decreases as K
    grows. The limsup itself shows in the last terms.
    """
    terms = beta_terms(alpha, K)
    best = max(value for _, value in terms)
    logger.debug(f"beta_estimate K={K} over {len(terms)} denominators -> {best:.6g}")
    return best


def delta_estimate(alpha: Irrational, rho: RealLike, K: int) -> Union[float, ResonanceOutcome]:
    """
    Running estimate of delta(alpha, rho) = limsup -ln||2 rho + k alpha|| / |k|

    The maximum is taken over 1 <= |k| <= K with both signs of k, so the
    estimate never decreases as K grows. An exact resonance anywhere in that
    range returns ResonanceOutcome.EXACT instead of a number.

    Raises:
        DomainError: If K < 1
        PrecisionError: If a distance falls below the truncation uncertainty
    """
    if K < 1:
        raise DomainError("delta_estimate needs K >= 1")
    q_last = alpha.convergents[-1][1]

    best = 0.0
    with mp.workdps(alpha.dps):
        a = alpha.approx
        two_rho = 2 * _to_mpf(rho)
        zero = mp.mpf(10) ** (-(alpha.dps - 10))
        for k in range(1, K + 1):
            uncertainty = mp.mpf(k) / (q_last * q_last)
            for signed in (k, -k):
                distance = _dist(two_rho + signed * a)
                if distance < zero:
                    logger.info(f"Exact resonance 2 rho = {-signed} alpha mod 1")
                    return ResonanceOutcome.EXACT
                if distance <= uncertainty:
                    raise PrecisionError(f"||2 rho + {signed} alpha|| underflows the precision budget")
                best = max(best, float(-mp.log(distance) / k))
    return best


def resonance_table(alpha: Irrational, rho: RealLike, eps0: float, K: int) -> List[Tuple[int, float]]:
    """
    Resonances of rho with their distances ||2 rho - l alpha||

    l is recorded when ||2 rho - l alpha|| <= exp(-|l| eps0) and l is the
    running minimizer over |m| <= |l|. Ties between l and -l go to the
    positive one.

    Returns:
        List of (l, distance) with strictly increasing |l|
    """
    if eps0 <= 0:
        raise DomainError("eps0 must be positive")
    table = []
    with mp.workdps(alpha.dps):
        a = alpha.approx
        two_rho = 2 * _to_mpf(rho)
        running = _dist(two_rho)
        for n in range(1, K + 1):
            d_pos = _dist(two_rho - n * a)
            d_neg = _dist(two_rho + n * a)
            best, ell = (d_pos, n) if d_pos <= d_neg else (d_neg, -n)
            if best <= mp.exp(-n * eps0) and best <= running:
                table.append((ell, float(best)))
            running = min(running, best)
    return table


def resonances(alpha: Irrational, rho: RealLike, eps0: float, K: int) -> List[int]:
    """The resonance sequence l_1, l_2, ... of rho up to |l| <= K."""
    seq = [ell for ell, _ in resonance_table(alpha, rho, eps0, K)]
    logger.debug(f"Resonances up to K={K}: {seq}")
    return seq


def lc_certificate(alpha: Irrational, rho: RealLike, gamma: float, delta: float,
                   K: int) -> Tuple[bool, int, float]:
    """
    Check ||2 rho - m alpha|| >= gamma exp(-|m| delta) for |m| <= K

    Returns:
        (ok, worst_m, margin) where margin is the smallest ratio of the
        distance to its lower bound
    """
    if gamma <= 0:
        return True, 0, math.inf
    worst_m, margin = 0, math.inf
    with mp.workdps(alpha.dps):
        a = alpha.approx
        two_rho = 2 * _to_mpf(rho)
        for m in range(-K, K + 1):
            ratio = float(_dist(two_rho - m * a) / (gamma * mp.exp(-abs(m) * delta)))
            if ratio < margin:
                worst_m, margin = m, ratio
    return margin >= 1.0, worst_m, margin


def diophantine_constant(alpha: Irrational, tau: float, K: int) -> float:
    """kappa = min over 1 <= k <= K of ||k alpha|| k^tau."""
    best = math.inf
    for k in range(1, K + 1):
        best = min(best, float(_knorm_exact(alpha, k)) * k ** tau)
    return best
