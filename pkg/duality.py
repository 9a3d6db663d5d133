#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Quantitative Aubry duality

This module reads dual eigenfunction candidates off the Fourier rows of a
conjugacy, measures how well they solve the dual eigen-equation, checks
the two-bump goodness conditions, runs the Wronskian constancy test and
diagonalizes truncated long-range operators.

Dual equation convention (coupling lambda, phase x):

    u(n+1) + u(n-1) + 2 lambda^{-1} cos 2 pi (x + n alpha) u(n) = lambda^{-1} E u(n)

which is lambda^{-1} times the Fourier transform of the almost Mathieu
equation with coupling lambda at energy E. Sequences taken from maps with
half-integer frequencies live on the doubled lattice (index m, position m/2).

finite_localization is a finite-volume diagnostic; the decay rates it
reports say nothing definite about the infinite-volume operator.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

from arithmetic import Irrational
from config import Config
from errors import ConsistencyError, DomainError
from fourier import FourierMap, analytic_norm
from kam import Su11Constant, kam_iterate, resonance_range, step_modes
from spectrum import band_spectrum
from utils.helpers import det2, op_norm2

logger = logging.getLogger(__name__)

CENTER_THRESHOLD = 1e-3
NOISE_FLOOR = 1e-12
MAX_BOX = 4000


@dataclass
class DualSequence:
    """
    Finitely supported sequence on Z (or on Z/2 for the doubled lattice)

    Attributes:
        values: Complex amplitudes, entry i holds lattice index i - K
        half: True when lattice index m stands for position m/2
        normalization: l2 norm the values were divided by (1.0 if untouched)
    """
    values: np.ndarray
    half: bool = False
    normalization: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 1 or self.values.size % 2 != 1:
            raise DomainError("a dual sequence needs an odd number of values centred at 0")

    @classmethod
    def from_values(cls, values, half: bool = False, normalize: bool = False) -> 'DualSequence':
        seq = cls(values, half)
        return seq.normalized() if normalize else seq

    @property
    def K(self) -> int:
        return (self.values.size - 1) // 2

    @property
    def lattice(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    @property
    def positions(self) -> np.ndarray:
        return self.lattice / 2 if self.half else self.lattice.astype(float)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    @property
    def center_candidates(self) -> List[int]:
        """Lattice indices where |value| is a local maximum above 1e-3 of the peak."""
        mags = np.abs(self.values)
        if mags.size == 0 or mags.max() == 0:
            return []
        padded = np.concatenate([[-1.0], mags, [-1.0]])
        peak = (mags >= padded[:-2]) & (mags >= padded[2:]) & (mags >= CENTER_THRESHOLD * mags.max())
        return [int(m) for m in self.lattice[peak]]

    def normalized(self) -> 'DualSequence':
        norm = self.norm
        if norm == 0:
            raise DomainError("cannot normalize the zero sequence")
        return DualSequence(self.values / norm, self.half, norm)

    def at(self, position: float) -> complex:
        """Value at a position (zero off the support)."""
        m = int(round(2 * position)) if self.half else int(round(position))
        if abs(m) > self.K:
            return 0j
        return complex(self.values[m + self.K])

    def step(self) -> int:
        """Lattice increment between neighbouring sites."""
        return 2 if self.half else 1


def _grid(B: FourierMap, points: int = 256) -> np.ndarray:
    return np.arange(points) * B.period / points


def _check_invertible(B: FourierMap):
    dets = det2(B.evaluate(_grid(B)))
    if not np.all(np.isfinite(dets)) or np.min(np.abs(dets)) < 1e-12:
        raise DomainError("conjugacy is degenerate on the sample grid")


def dual_rows(B: FourierMap) -> Tuple[DualSequence, DualSequence]:
    """
    Fourier sequences of the (1,1) and (1,2) entries of B

    Both rows are divided by the joint l2 norm (sum |b11(n)|^2 + |b12(n)|^2)^{1/2},
    so B = id gives row11 = delta_0 and row12 = 0.

    Raises:
        DomainError: If B is singular on the sample grid or vanishes
    """
    _check_invertible(B)
    b11, b12 = B.coeffs[:, 0, 0], B.coeffs[:, 0, 1]
    joint = math.sqrt(float(np.sum(np.abs(b11) ** 2) + np.sum(np.abs(b12) ** 2)))
    if joint == 0:
        raise DomainError("conjugacy has a vanishing first row")
    return DualSequence(b11 / joint, B.half, joint), DualSequence(b12 / joint, B.half, joint)


def dual_vector(B: FourierMap) -> DualSequence:
    """Normalized Fourier sequence of b = (b11 + i b12) / 2."""
    _check_invertible(B)
    return DualSequence((B.coeffs[:, 0, 0] + 1j * B.coeffs[:, 0, 1]) / 2, B.half).normalized()


def goodness_check(B: FourierMap, C1: float, C2: float, gamma: float, ell: int,
                   grid: int = 256) -> Tuple[bool, bool, int]:
    """
    Two-bump goodness of a conjugacy

    H1: sup ||B(theta)|| <= C1 on a grid.
    H2: |b11(n)|, |b12(n)| <= C2 (e^{-gamma |n + ell/2|} + e^{-gamma |n - ell/2|}) for every mode.

    Returns:
        (h1, h2, worst) where worst is the lattice index with the largest
        ratio of coefficient to bound (doubled lattice for half maps)
    """
    h1 = bool(np.max(op_norm2(B.evaluate(_grid(B, grid)))) <= C1)
    positions = B.modes / 2 if B.half else B.modes.astype(float)
    envelope = C2 * (np.exp(-gamma * np.abs(positions + ell / 2)) + np.exp(-gamma * np.abs(positions - ell / 2)))
    coefficient = np.maximum(np.abs(B.coeffs[:, 0, 0]), np.abs(B.coeffs[:, 0, 1]))
    ratio = coefficient / envelope
    worst = int(B.modes[int(np.argmax(ratio))])
    h2 = bool(np.all(coefficient <= envelope * (1 + 1e-12)))
    return h1, h2, worst


def _dual_diagonal(positions: np.ndarray, lam: float, alpha: Irrational, E: float, x: float) -> np.ndarray:
    return (2 * np.cos(2 * np.pi * (x + positions * alpha.value)) - E) / lam


def dual_residual(u: DualSequence, lam: float, alpha: Irrational, E: float, x: float = 0.0) -> float:
    """
    max over interior sites of |u(n+1) + u(n-1) + (2 cos 2 pi (x + n alpha) - E) u(n) / lambda| / ||u||_inf

    Raises:
        DomainError: If lambda == 0
    """
    if lam == 0:
        raise DomainError("dual residual needs lambda != 0")
    peak = float(np.max(np.abs(u.values))) if u.values.size else 0.0
    if peak == 0:
        raise DomainError("dual residual of the zero sequence")
    # zero padding: the support and its neighbours are interior sites
    s = u.step()
    values = np.concatenate([np.zeros(2 * s), u.values, np.zeros(2 * s)])
    lattice = np.arange(-u.K - 2 * s, u.K + 2 * s + 1)
    positions = lattice / 2 if u.half else lattice.astype(float)
    centre = values[s:-s]
    residual = values[2 * s:] + values[:-2 * s] + _dual_diagonal(positions[s:-s], lam, alpha, E, x) * centre
    return float(np.max(np.abs(residual)) / peak)


def _extend(u: DualSequence, lam: float, alpha: Irrational, E: float, x: float,
            n_lo: int, n_hi: int) -> np.ndarray:
    """Exact three-term recurrence extension on positions offset + n, n_lo <= n <= n_hi + 1."""
    offset = 0.5 if u.half else 0.0
    size = n_hi - n_lo + 2
    out = np.zeros(size, dtype=np.complex128)
    i0 = -n_lo
    if not 0 <= i0 < size - 1:
        raise DomainError("the Wronskian range must contain the initial sites 0 and 1")
    out[i0], out[i0 + 1] = u.at(offset), u.at(offset + 1)

    def diag(n):
        return (2 * math.cos(2 * math.pi * (x + (offset + n) * alpha.value)) - E) / lam

    for i in range(i0 + 1, size - 1):
        n = n_lo + i
        out[i + 1] = -diag(n) * out[i] - out[i - 1]
    for i in range(i0, 0, -1):
        n = n_lo + i
        out[i - 1] = -diag(n) * out[i] - out[i + 1]
    return out


def wronskian_series(u1: DualSequence, u2: DualSequence, lam: float, alpha: Irrational, E: float,
                     n_range: Tuple[int, int], x: float = 0.0) -> np.ndarray:
    """
    D'_n = u1(n) u2(n+1) - u2(n) u1(n+1) for n_lo <= n <= n_hi

    Both sequences are first extended over the range by the exact dual
    recurrence from their values at the sites 0 and 1, so D'_n is constant
    up to rounding.
    """
    if lam == 0:
        raise DomainError("Wronskian needs lambda != 0")
    if u1.half != u2.half:
        raise DomainError("sequences live on different lattices")
    n_lo, n_hi = n_range
    a = _extend(u1, lam, alpha, E, x, n_lo, n_hi)
    b = _extend(u2, lam, alpha, E, x, n_lo, n_hi)
    return a[:-1] * b[1:] - b[:-1] * a[1:]


def bump_mass_fraction(row: DualSequence, k: int, eps: float) -> float:
    """Share of the l2 mass of row within |n -/+ k/2| <= max(eps |k| / 10, 1)."""
    width = max(eps * abs(k) / 10, 1.0)
    positions = row.positions
    inside = (np.abs(positions - k / 2) <= width) | (np.abs(positions + k / 2) <= width)
    total = float(np.sum(np.abs(row.values) ** 2))
    if total == 0:
        raise DomainError("mass fraction of the zero sequence")
    return float(np.sum(np.abs(row.values[inside]) ** 2)) / total


def wronskian_exclusion(row11: DualSequence, row12: DualSequence, h_lambda: float, k: int,
                    eps: float) -> Tuple[float, float, bool]:
    """
    Constancy-versus-bump Wronskian test

    The Wronskian of the two rows at the bump k0 nearest k/2 is compared with
    e^{-h_lambda (1 + eps/5) |k|}; the test fires when |D_{k0}| is at least
    that large, which contradicts a residual that is exponentially small in |k|.

    Returns:
        (|D_{k0}|, bound, fired)
    """
    if row11.half != row12.half:
        raise DomainError("rows live on different lattices")
    candidates = row11.center_candidates
    if not candidates:
        raise DomainError("row11 has no bump")
    positions = [m / 2 if row11.half else float(m) for m in candidates]
    k0 = min(positions, key=lambda p: (abs(p - k / 2), -p))
    D = row11.at(k0) * row12.at(k0 + 1) - row12.at(k0) * row11.at(k0 + 1)
    bound = math.exp(-h_lambda * (1 + eps / 5) * abs(k))
    return abs(D), bound, abs(D) >= bound


def _hermitian_check(Vhat: Dict[int, complex]):
    for k, v in Vhat.items():
        if abs(complex(Vhat.get(-k, 0)) - np.conj(complex(v))) > 1e-14:
            raise DomainError(f"Vhat is not Hermitian at k={k}; the operator would not be self-adjoint")


def longrange_matrix(Vhat: Dict[int, complex], lam: float, alpha: Irrational, x: float, N: int) -> np.ndarray:
    """Dense matrix of the long-range operator on [-N, N] with zero boundary."""
    n = np.arange(-N, N + 1)
    H = np.diag(2 * lam * np.cos(2 * np.pi * (x + n * alpha.value))).astype(np.complex128)
    for k, v in Vhat.items():
        if k == 0:
            H += complex(v) * np.eye(2 * N + 1)
        elif abs(k) <= 2 * N:
            # (L u)_n picks up V_k u_{n-k}
            H += complex(v) * np.eye(2 * N + 1, k=-k)
    return H


def longrange_apply(Vhat: Dict[int, complex], lam: float, alpha: Irrational, x: float,
                    u: DualSequence) -> DualSequence:
    """(L u)_n = sum_k V_k u_{n-k} + 2 lambda cos 2 pi (x + n alpha) u_n on the support of u."""
    if u.half:
        raise DomainError("the long-range operator acts on integer lattices")
    H = longrange_matrix(Vhat, lam, alpha, x, u.K)
    return DualSequence(H @ u.values, False)


@dataclass
class LocalizedState:
    eigenvalue: float
    decay_rate: float
    center: int


def _decay_rate(psi: np.ndarray, N: int) -> Tuple[float, int]:
    """Robust slope of the log-envelope around the localization center."""
    mags = np.abs(psi)
    c = int(np.argmax(mags))
    floor = NOISE_FLOOR * mags[c]
    reach = min(c, psi.size - 1 - c)
    if reach < 2:
        return 0.0, c - N
    envelope = np.array([max(mags[c - r], mags[c + r]) for r in range(reach + 1)])
    below = np.nonzero(envelope < floor)[0]
    r_eff = int(below[0]) if below.size else reach
    lo, hi = int(0.2 * r_eff), max(int(0.8 * r_eff), int(0.2 * r_eff) + 2)
    radii = np.arange(lo, min(hi, reach) + 1)
    if radii.size < 2:
        return 0.0, c - N
    logs = np.log(np.maximum(envelope[radii], np.finfo(float).tiny))
    slope = stats.theilslopes(logs, radii)[0]
    return float(-slope), c - N


def finite_localization(Vhat: Dict[int, complex], lam: float, alpha: Irrational, x: float,
                        N: int) -> List[LocalizedState]:
    """
    Eigenpairs of the truncated long-range operator on [-N, N]

    Each eigenvector gets its center (argmax |psi|) and a decay rate: the
    Theil-Sen slope of ln max(|psi(c-r)|, |psi(c+r)|) over the middle 60% of
    the radii before the envelope reaches the numerical noise floor (or
    the box boundary).

    Raises:
        DomainError: If N > 4000 or Vhat is not Hermitian
        ConsistencyError: If the eigensolver fails
    """
    if not 1 <= N <= MAX_BOX:
        raise DomainError(f"box radius must be in [1, {MAX_BOX}], got {N}")
    _hermitian_check(Vhat)
    start = time.time()
    H = longrange_matrix(Vhat, lam, alpha, x, N)
    try:
        eigenvalues, vectors = linalg.eigh(H)
    except linalg.LinAlgError as e:
        raise ConsistencyError(f"eigensolver failed on the box of radius {N}: {e}")
    states = []
    for i, E in enumerate(eigenvalues):
        rate, center = _decay_rate(vectors[:, i], N)
        states.append(LocalizedState(float(E), rate, center))
    logger.info(f"Diagonalized box of radius {N} in {time.time() - start:.2f}s")
    return states


def amo_vhat() -> Dict[int, complex]:
    """Nearest-neighbour hopping; with it the long-range operator is the almost Mathieu operator."""
    return {1: 1.0, -1: 1.0}


def bulk_rates(states: Sequence[LocalizedState], N: int, fraction: float = 0.7) -> np.ndarray:
    return np.array([s.decay_rate for s in states if abs(s.center) <= fraction * N])


def dual_spectrum_distance(lam: float, pq) -> float:
    """
    Hausdorff distance between the band edges for lambda and lambda times those for 1/lambda

    Raises:
        DomainError: If lambda == 0
    """
    if lam == 0:
        raise DomainError("duality needs lambda != 0")
    pq = Fraction(pq)
    direct = np.array([e for band in band_spectrum(lam, pq).bands for e in band])
    dual = abs(lam) * np.array([e for band in band_spectrum(1 / lam, pq).bands for e in band])
    gaps = np.abs(direct[:, None] - dual[None, :])
    return float(max(gaps.min(axis=1).max(), gaps.min(axis=0).max()))


PLANTED_MODE = np.array([[1.0, 0.5], [0.5, -1.0]])


@dataclass
class TwoBumpReport:
    """First row of a degree-k conjugacy measured against the two windows around +/- k/2."""
    k: int
    degree: int
    status: str
    mass_fraction: float
    h1: bool
    h2: bool
    worst: int
    exclusion: Tuple[float, float, bool]
    row11: DualSequence = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.degree == self.k and self.mass_fraction >= 0.9 and self.h1 and self.h2


def two_bump_profile(k: int, alpha: Irrational, *, eps: float = 0.5, h: float = 0.1, h_tilde: float = 0.05,
                     budget: int = 4, scale: float = 1e-6, offset: float = 1e-9, C: float = 2.0,
                     K: int = 64, settings=Config) -> TwoBumpReport:
    """
    Dual rows of the conjugacy built by a KAM run with one resonance at k

    The constant is the rotation by k alpha / 2 + offset turns and the
    perturbation a single cosine mode of size scale, so the first step is
    resonant at k and the accumulated conjugacy has degree k. Row11 is
    checked with bump_mass_fraction(row11, k, eps) and the conjugacy with
    goodness_check at C1 = C |k|^{2 tau}, C2 = C e^{(eps h)^2 |k|},
    gamma = 2 pi h (1 - eps), ell = k.
    The Wronskian exclusion test is run on the two rows with h_lambda = 2 pi h.

    Raises:
        DomainError: If k == 0, eps is not in (0, 1), or the first step cannot
            see a resonance at |k| (lower scale)
    """
    if k == 0:
        raise DomainError("a two-bump profile needs a nonzero degree")
    if not 0 < eps < 1:
        raise DomainError(f"eps must be in (0, 1), got {eps}")
    A = Su11Constant.from_rotation(k * alpha.value / 2 + offset)
    f = FourierMap.from_modes({1: scale * PLANTED_MODE, -1: scale * PLANTED_MODE}, radius=h)
    eps0 = analytic_norm(f, h)
    h_next = h - (h - h_tilde) / 4
    reach = resonance_range(eps0, h, step_modes(eps0, h, h_next, settings))
    if reach < abs(k):
        raise DomainError(f"the first step scans resonances up to {reach}, below |k| = {abs(k)}")

    trace = kam_iterate(A, f, h, h_tilde, budget, alpha=alpha, settings=settings)
    B = trace.conjugacy.to_fourier(K, h_tilde)
    row11, row12 = dual_rows(B)
    mass = bump_mass_fraction(row11, k, eps)
    exclusion = wronskian_exclusion(row11, row12, 2 * math.pi * h, k, eps)
    C1 = C * abs(k) ** (2 * settings.KAM_TAU)
    C2 = C * math.exp((eps * h) ** 2 * abs(k))
    h1, h2, worst = goodness_check(B, C1, C2, 2 * math.pi * h * (1 - eps), k)
    logger.info(f"two-bump profile k={k}: degree {trace.degree}, mass {mass:.4f}, H1={h1}, H2={h2}")
    return TwoBumpReport(k, trace.degree, trace.status, mass, h1, h2, worst, exclusion, row11)
