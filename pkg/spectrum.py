#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Almost Mathieu spectrum through rational approximants

For alpha = p/q the spectrum union over phases is {E : |Delta(E)| <= 2 + 2|lambda|^q}
where Delta is the Chambers discriminant, the trace of the q-step transfer
matrix at theta0 = 1/(4q). Band edges are seeded by the eigenvalues of the
periodic and antiperiodic q x q operators, refined by bracketing, and the
gaps are labelled by the gap-labelling congruence k p = m (mod q).
"""

import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg, optimize, stats

from arithmetic import Irrational
from config import Config
from errors import ConsistencyError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Gap:
    """A spectral gap of a rational approximant."""
    label: int
    m: int
    left: float
    right: float

    @property
    def length(self) -> float:
        return max(self.right - self.left, 0.0)


@dataclass
class BandSpectrum:
    """
    Bands and labelled gaps of the approximant p/q

    Attributes:
        pq: The rational frequency p/q
        lam: Coupling
        bands: q ordered intervals (lo, hi); neighbours may touch
        gaps: q - 1 gaps in increasing energy, gap m between bands m and m+1
    """
    pq: Fraction
    lam: float
    bands: List[Tuple[float, float]]
    gaps: List[Gap]
    edge_signs: List[float] = field(default_factory=list, repr=False)

    @property
    def q(self) -> int:
        return self.pq.denominator

    @property
    def hull(self) -> Tuple[float, float]:
        return self.bands[0][0], self.bands[-1][1]

    def gap_by_label(self, k: int) -> Optional[Gap]:
        for gap in self.gaps:
            if gap.label == k:
                return gap
        return None

    def measure(self) -> float:
        return float(sum(hi - lo for lo, hi in self.bands))


@dataclass
class GapRow:
    """One row of the gap-decay table."""
    k: int
    left: Optional[float]
    right: Optional[float]
    length: Optional[float]
    rate: float
    stable: bool
    below_floor: bool = False
    previous_length: Optional[float] = None


def _check_pq(pq) -> Fraction:
    pq = Fraction(pq)
    if pq.denominator < 1:
        raise DomainError("q must be >= 1")
    return pq


def transfer_trace(lam: float, pq, E, theta: float) -> np.ndarray:
    """tr of S(theta + (q-1) p/q) ... S(theta) for scalar or array E."""
    pq = _check_pq(pq)
    p, q = pq.numerator, pq.denominator
    E = np.asarray(E, dtype=np.float64)
    a = np.ones_like(E)
    b = np.zeros_like(E)
    c = np.zeros_like(E)
    d = np.ones_like(E)
    for n in range(q):
        v = E - 2 * lam * math.cos(2 * math.pi * (theta + n * p / q))
        # [[v, -1], [1, 0]] @ [[a, b], [c, d]]
        a, b, c, d = v * a - c, v * b - d, a, b
        scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
        if np.any(scale > 1e150):
            raise ConsistencyError("transfer matrix overflow; the energy lies deep in a gap")
    return a + d


def chambers_discriminant(lam: float, pq, E) -> np.ndarray:
    """
    Delta(E) = tr M_q(E, theta0) at theta0 = 1/(4q)

    The full trace is Delta(E) - 2 lambda^q cos(2 pi q theta), so the
    approximant spectrum is {E : |Delta(E)| <= 2 + 2|lambda|^q}.
    """
    pq = _check_pq(pq)
    return transfer_trace(lam, pq, E, 1.0 / (4 * pq.denominator))


def trace_extremum_check(lam: float, pq, E: float, grid: int = 64) -> float:
    """Largest deviation of tr M_q(E, theta) from Delta(E) - 2 lambda^q cos(2 pi q theta) on a grid."""
    pq = _check_pq(pq)
    q = pq.denominator
    delta = float(chambers_discriminant(lam, pq, E))
    worst = 0.0
    for theta in np.arange(grid) / grid:
        predicted = delta - 2 * lam ** q * math.cos(2 * math.pi * q * theta)
        worst = max(worst, abs(float(transfer_trace(lam, pq, E, theta)) - predicted))
    return worst


def _bloch_eigenvalues(lam: float, pq: Fraction, theta: float, twist: float) -> np.ndarray:
    """Eigenvalues of the q-periodic operator with Bloch factor twist = +1 or -1."""
    p, q = pq.numerator, pq.denominator
    n = np.arange(q)
    H = np.diag(2 * lam * np.cos(2 * np.pi * (theta + n * p / q)))
    for i in range(q):
        for j, factor in (((i + 1) % q, twist if i + 1 >= q else 1.0),
                          ((i - 1) % q, twist if i - 1 < 0 else 1.0)):
            H[i, j] += factor
    return linalg.eigvalsh(H)


def _label(m: int, p: int, q: int) -> int:
    """Minimal |k| with k p = m (mod q); ties go to the positive label."""
    if q == 1:
        return 0
    k0 = (m * pow(p, -1, q)) % q
    candidates = sorted({k0, k0 - q}, key=lambda k: (abs(k), -k))
    return candidates[0]


def band_spectrum(lam: float, pq, resolution: float = 1e-12) -> BandSpectrum:
    """
    Bands and labelled gaps of the approximant p/q

    Band edges are the periodic eigenvalues at theta = 0 together with the
    antiperiodic eigenvalues at theta = 1/(2q); each edge is refined by
    Brent's method on Delta -/+ (2 + 2 lambda^q) whenever a sign change is
    bracketed within the resolution.

    Raises:
        DomainError: If lambda == 0 or gcd(p, q) != 1
        ConsistencyError: If the edges fail the band-midpoint test
    """
    pq = _check_pq(pq)
    p, q = pq.numerator, pq.denominator
    if lam == 0:
        raise DomainError("coupling must be nonzero for gap labelling (the free case has no gaps)")
    if math.gcd(p, q) != 1:
        raise DomainError(f"{p}/{q} is not in lowest terms")
    start = time.time()
    lam = abs(float(lam))
    bound = 2 + 2 * lam ** q

    edges = np.sort(np.concatenate([
        _bloch_eigenvalues(lam, pq, 0.0, 1.0),
        _bloch_eigenvalues(lam, pq, 1.0 / (2 * q), -1.0),
    ]))
    edges = np.sort([_refine_edge(lam, pq, e, bound, resolution) for e in edges])

    bands = [(float(edges[2 * i]), float(edges[2 * i + 1])) for i in range(q)]
    mids = np.array([(lo + hi) / 2 for lo, hi in bands])
    inside = np.abs(chambers_discriminant(lam, pq, mids)) <= bound * (1 + 1e-6)
    if not np.all(inside):
        bad = bands[int(np.argmin(inside))]
        raise ConsistencyError(f"band edges for {p}/{q} inconsistent in window [{bad[0]:.12f}, {bad[1]:.12f}]")

    signs = [float(np.sign(chambers_discriminant(lam, pq, lo))) or 1.0 for lo, _ in bands]
    gaps = [Gap(_label(m, p, q), m, bands[m - 1][1], max(bands[m][0], bands[m - 1][1]))
            for m in range(1, q)]
    logger.info(f"Band spectrum lambda={lam} p/q={p}/{q}: {q} bands, measure "
                f"{sum(hi - lo for lo, hi in bands):.6f} ({time.time() - start:.2f}s)")
    return BandSpectrum(pq, lam, bands, gaps, signs)


def _refine_edge(lam: float, pq: Fraction, e: float, bound: float, resolution: float) -> float:
    """Polish an eigenvalue-seeded edge when Delta crosses +/-bound inside [e - r, e + r]."""
    lo, hi = e - resolution, e + resolution
    for target in (bound, -bound):
        f_lo = float(chambers_discriminant(lam, pq, lo)) - target
        f_hi = float(chambers_discriminant(lam, pq, hi)) - target
        if f_lo * f_hi < 0:
            return optimize.brentq(lambda x: float(chambers_discriminant(lam, pq, x)) - target,
                                   lo, hi, xtol=resolution / 4)
    return float(e)


def ids(bs: BandSpectrum, E: float) -> float:
    """
    Integrated density of states of the approximant at E

    Exactly m/q on the m-th gap; inside band i it interpolates with the
    rotation fraction arccos(Delta(E)/Delta(left edge))/pi.
    """
    q = bs.q
    if E <= bs.bands[0][0]:
        return 0.0
    if E >= bs.bands[-1][1]:
        return 1.0
    bound = 2 + 2 * bs.lam ** q
    for i, (lo, hi) in enumerate(bs.bands):
        if E < lo:
            return i / q
        if E <= hi:
            if hi <= lo:
                return (i + 1) / q
            ratio = float(chambers_discriminant(bs.lam, bs.pq, E)) / (bs.edge_signs[i] * bound)
            fraction = math.acos(min(max(ratio, -1.0), 1.0)) / math.pi
            return (i + fraction) / q
    return 1.0


def gap_decay_experiment(lam: float, alpha: Irrational, q_max: int, k_max: int,
                         floor: float = None, stability: float = None) -> List[GapRow]:
    """
    Decay rates -ln|G_k| / |k| from the deepest approximant with q <= q_max

    Every row is compared with the previous approximant level; a gap is
    stable when its length changes by at most the stability fraction. Gaps
    below the resolution floor carry a lower bound on the rate instead of a
    value.

    Raises:
        DomainError: If lambda <= 0, lambda == 1 or q_max < 50
    """
    if lam <= 0 or lam == 1:
        raise DomainError("gap decay needs 0 < lambda != 1")
    if q_max < 50:
        raise DomainError("gap decay needs q_max >= 50")
    floor = Config.GAP_FLOOR if floor is None else floor
    stability = Config.GAP_STABILITY if stability is None else stability

    levels = [(p, q) for p, q in alpha.convergents if q <= q_max]
    if len(levels) < 2:
        raise DomainError(f"alpha has fewer than two convergents with q <= {q_max}")
    (p_prev, q_prev), (p, q) = levels[-2], levels[-1]
    current = band_spectrum(lam, Fraction(p, q))
    previous = band_spectrum(lam, Fraction(p_prev, q_prev))

    labels = sorted({k for k in range(-k_max, k_max + 1) if k != 0 and abs(k) < q},
                    key=lambda k: (abs(k), -k))
    rows = []
    for k in labels:
        gap = current.gap_by_label(k)
        if gap is None:
            continue
        old = previous.gap_by_label(k)
        old_length = old.length if old is not None else None
        if gap.length < floor:
            rows.append(GapRow(k, gap.left, gap.right, None, -math.log(floor) / abs(k),
                               False, True, old_length))
            continue
        stable = old_length is not None and abs(gap.length - old_length) <= stability * gap.length
        rows.append(GapRow(k, gap.left, gap.right, gap.length, -math.log(gap.length) / abs(k),
                           stable, False, old_length))
    logger.info(f"Gap decay lambda={lam} at q={q} (previous q={q_prev}): "
                f"{sum(r.stable for r in rows)}/{len(rows)} stable rows")
    return rows


def gap_decay_slope(rows: List[GapRow], k_min: int = 3) -> float:
    """
    Theil-Sen slope of -ln|G_k| against |k| over the stable, resolved rows with |k| >= k_min

    The per-gap rates -ln|G_k|/|k| carry a prefactor that only fades as
    |k| grows; the slope drops it and estimates the exponential rate.

    Raises:
        DomainError: If fewer than two distinct |k| qualify
    """
    points = [(abs(r.k), -math.log(r.length)) for r in rows
              if abs(r.k) >= k_min and r.stable and not r.below_floor]
    if len({k for k, _ in points}) < 2:
        raise DomainError(f"gap decay slope needs two stable labels with |k| >= {k_min}")
    ks, logs = zip(*points)
    return float(stats.theilslopes(logs, ks)[0])
