#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Quasiperiodic SL(2,R) cocycles

This module implements the cocycle (alpha, A): products of A along the
rotation orbit, the Lyapunov exponent, the fibered rotation number, a
finite-N uniform hyperbolicity test and norm growth profiles. The almost
Mathieu family S(theta) = [[E - 2 lambda cos 2 pi theta, -1], [1, 0]] has a
fast path that only updates matrix rows.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from arithmetic import Irrational
from config import Config
from errors import ConsistencyError, DomainError, UnsupportedError
from fourier import FourierMap
from utils.helpers import adjugate, hs_norm, identity_like, op_norm2

logger = logging.getLogger(__name__)

_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass
class CocycleMap:
    """
    A cocycle (alpha, A) with A: T -> SL(2,R) analytic

    Attributes:
        alpha: The frequency
        kind: 'schrodinger' for the almost Mathieu family, 'general' otherwise
        lam: Coupling (schrodinger only)
        energy: Energy E (schrodinger only)
        func: Vectorized theta -> A(theta) of shape theta.shape + (2, 2) (general only)
    """
    alpha: Irrational
    kind: str = 'schrodinger'
    lam: float = 0.0
    energy: float = 0.0
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == 'schrodinger':
            if not (math.isfinite(self.lam) and math.isfinite(self.energy)):
                raise DomainError("lambda and E must be finite")
        elif self.kind == 'general':
            if self.func is None:
                raise DomainError("a general cocycle needs a matrix function")
        else:
            raise DomainError(f"unknown cocycle kind {self.kind!r}")

    @classmethod
    def almost_mathieu(cls, alpha: Irrational, lam: float, energy: float) -> 'CocycleMap':
        return cls(alpha, 'schrodinger', float(lam), float(energy))

    @classmethod
    def general(cls, alpha: Irrational, func: Callable[[np.ndarray], np.ndarray]) -> 'CocycleMap':
        return cls(alpha, 'general', func=func)

    @classmethod
    def from_fourier(cls, alpha: Irrational, fmap: FourierMap) -> 'CocycleMap':
        return cls(alpha, 'general', func=fmap.evaluate)

    def potential(self, thetas) -> np.ndarray:
        return self.energy - 2 * self.lam * np.cos(2 * np.pi * np.asarray(thetas))

    def evaluate(self, thetas) -> np.ndarray:
        """A(theta) for an array of phases."""
        thetas = np.asarray(thetas, dtype=np.float64)
        if self.kind == 'general':
            return np.asarray(self.func(thetas), dtype=np.float64)
        out = np.empty(thetas.shape + (2, 2))
        out[..., 0, 0] = self.potential(thetas)
        out[..., 0, 1] = -1.0
        out[..., 1, 0] = 1.0
        out[..., 1, 1] = 0.0
        return out


@dataclass
class LyapunovEstimate:
    """Lyapunov exponent estimate with its bootstrap spread over phases."""
    value: float
    spread: float
    per_phase: np.ndarray = field(repr=False)
    n: int = 0


@dataclass
class GrowthProfile:
    """Log-norms of A_n(theta) at increasing sample points n."""
    ns: List[int]
    lognorms: List[float]
    theta: float = 0.0
    norm_kind: str = 'op'

    def rows(self) -> List[Tuple[int, float]]:
        return list(zip(self.ns, self.lognorms))


@dataclass
class RotationEstimate:
    """Fibered rotation number in [0, 1) with a two-half error bar."""
    value: float
    error: float
    n: int = 0

    def __float__(self) -> float:
        return self.value


def default_phases() -> np.ndarray:
    """16 equidistributed phases and 16 Kronecker phases j*golden mod 1."""
    equi = np.arange(16) / 16.0
    kron = np.mod(np.arange(1, 17) * _GOLDEN, 1.0)
    return np.concatenate([equi, kron])


def _orbit_phases(c: CocycleMap, thetas: np.ndarray, start: int, count: int) -> np.ndarray:
    """theta + j alpha mod 1 for j in [start, start+count), shape (P, count)."""
    steps = np.arange(start, start + count)
    shift = np.mod(steps * c.alpha.value, 1.0)
    return np.mod(thetas[:, None] + shift[None, :], 1.0)


def _log_step_bound(c: CocycleMap) -> float:
    """Upper bound on ln ||A(theta)||."""
    if c.kind == 'schrodinger':
        return math.log(abs(c.energy) + 2 * abs(c.lam) + 1)
    grid = np.arange(1024) / 1024
    return 1.1 * float(np.log(np.max(op_norm2(c.evaluate(grid))))) + 1e-3


def _walk(c: CocycleMap, thetas: np.ndarray, n: int, record: Sequence[int] = (),
          rescale_every: int = None,
          norm_kind: str = 'op') -> Tuple[np.ndarray, np.ndarray, Dict[int, np.ndarray]]:
    """
    Multiply A(theta + (n-1) alpha) ... A(theta) for every phase

    Returns:
        (matrix, log_scale, recorded) where the product equals
        exp(log_scale) * matrix and recorded maps each n' in record to the
        log norms (operator or Hilbert-Schmidt) of A_{n'} at every phase.
    """
    rescale_every = rescale_every or Config.RESCALE_EVERY
    measure = hs_norm if norm_kind == 'hs' else op_norm2
    # keep every chunk product below ~e^150
    rescale_every = max(1, min(rescale_every, int(150 / max(_log_step_bound(c), 1e-12))))
    P = thetas.shape[0]
    mat = identity_like((P,))
    log_scale = np.zeros(P)
    wanted = set(int(r) for r in record)
    recorded: Dict[int, np.ndarray] = {}
    if 0 in wanted:
        recorded[0] = np.log(measure(mat))

    done = 0
    while done < n:
        chunk = min(rescale_every, n - done)
        phases = _orbit_phases(c, thetas, done, chunk)
        if c.kind == 'schrodinger':
            potential = c.potential(phases)
            row0, row1 = mat[:, 0, :].copy(), mat[:, 1, :].copy()
            for j in range(chunk):
                row0, row1 = potential[:, j, None] * row0 - row1, row0
                if done + j + 1 in wanted:
                    snapshot = np.stack([row0, row1], axis=1)
                    recorded[done + j + 1] = log_scale + np.log(measure(snapshot))
            mat = np.stack([row0, row1], axis=1)
        else:
            values = c.evaluate(phases)
            for j in range(chunk):
                mat = values[:, j] @ mat
                if done + j + 1 in wanted:
                    recorded[done + j + 1] = log_scale + np.log(measure(mat))
        norms = op_norm2(mat)
        if not np.all(np.isfinite(norms)) or np.any(norms == 0):
            raise ConsistencyError(f"matrix product overflowed after {done + chunk} steps")
        mat = mat / norms[:, None, None]
        log_scale = log_scale + np.log(norms)
        done += chunk
    return mat, log_scale, recorded


def iterate(c: CocycleMap, theta, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    A_n(theta) = A(theta + (n-1) alpha) ... A(theta), A_{-n}(theta) = A_n(theta - n alpha)^{-1}

    Args:
        c: The cocycle
        n: Number of steps (any integer)
        theta: Phase or array of phases

    Returns:
        (matrix, log_scale) with A_n = exp(log_scale) * matrix; the matrix has
        operator norm one when n != 0. Shapes follow theta.
    """
    scalar = np.ndim(theta) == 0
    thetas = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if n >= 0:
        mat, log_scale, _ = _walk(c, thetas, n)
    else:
        back = np.mod(thetas + n * c.alpha.value, 1.0)
        mat, log_scale, _ = _walk(c, back, -n)
        mat = adjugate(mat)
    if scalar:
        return mat[0], log_scale[0]
    return mat, log_scale


def log_norm(c: CocycleMap, theta, n: int) -> np.ndarray:
    """ln ||A_n(theta)|| without overflow."""
    mat, log_scale = iterate(c, theta, n)
    return log_scale + np.log(op_norm2(mat))


def lyapunov(c: CocycleMap, n: int, thetas: Optional[Sequence[float]] = None,
             seed: int = None, resamples: int = 200) -> LyapunovEstimate:
    """
    L = lim (1/n) integral ln ||A_n(theta)|| d theta, estimated on a phase sample

    The spread is the bootstrap standard deviation of the phase average.
    """
    if n <= 0:
        raise DomainError("lyapunov needs n > 0")
    start = time.time()
    thetas = default_phases() if thetas is None else np.asarray(thetas, dtype=np.float64)
    if len(thetas) < 8:
        raise DomainError("lyapunov needs at least 8 phases")
    per_phase = log_norm(c, thetas, n) / n
    rng = np.random.default_rng(Config.SEED if seed is None else seed)
    draws = rng.integers(0, len(per_phase), size=(resamples, len(per_phase)))
    spread = float(np.std(per_phase[draws].mean(axis=1)))
    value = float(max(per_phase.mean(), 0.0))
    logger.info(f"Lyapunov n={n} over {len(thetas)} phases: {value:.6f} +/- {spread:.1e} "
                f"({time.time() - start:.2f}s)")
    return LyapunovEstimate(value, spread, per_phase, n)


def _lift_table(c: CocycleMap, grid: int = 1024) -> Optional[np.ndarray]:
    """Continuous lift of the angle of A(theta) e1 on a grid, or None when no lift is needed."""
    if c.kind == 'schrodinger':
        return None
    thetas = np.arange(grid + 1) / grid
    values = c.evaluate(thetas)
    psi = np.unwrap(np.arctan2(values[:, 1, 0], values[:, 0, 0]))
    winding = (psi[-1] - psi[0]) / (2 * np.pi)
    if abs(winding) > 0.5:
        raise UnsupportedError(f"A(theta) has degree {round(winding)}; "
                               "rotation numbers need maps homotopic to the identity")
    return psi[:-1]


def _iwasawa_chunk(c: CocycleMap, phases: np.ndarray, lift: Optional[np.ndarray]):
    """
    Split A = Q(psi) T with T upper triangular with positive diagonal

    The angle change of a vector is psi plus the principal angle change of
    T, which never wraps because T has positive eigenvalues.
    """
    values = c.evaluate(phases)
    a, b = values[:, 0, 0], values[:, 0, 1]
    cc, d = values[:, 1, 0], values[:, 1, 1]
    r11 = np.hypot(a, cc)
    cos, sin = a / r11, cc / r11
    psi = np.arctan2(cc, a)
    if lift is not None:
        grid = len(lift)
        ref = lift[np.mod(np.rint(phases * grid).astype(int), grid)]
        psi = psi + 2 * np.pi * np.rint((ref - psi) / (2 * np.pi))
    t12 = cos * b + sin * d
    t22 = -sin * b + cos * d
    return r11.tolist(), t12.tolist(), t22.tolist(), cos.tolist(), sin.tolist(), psi.tolist()


def rotation_number(c: CocycleMap, n: int, theta: float = 0.0) -> RotationEstimate:
    """
    Fibered rotation number from the average angle increment

    Schrodinger cocycles use the integrated-density-of-states normalization
    rho in [0, 1/2] (0 below the spectrum, 1/2 above). General maps report
    the clockwise turn average mod 1, so the constant rotation(phi) has
    rotation number phi. The error bar compares the two halves of the orbit.

    Raises:
        UnsupportedError: If A is not homotopic to the identity
    """
    if n < 2:
        raise DomainError("rotation_number needs n >= 2")
    lift = _lift_table(c)
    thetas = np.array([float(theta)])
    x0, x1 = 1.0, 0.0
    total = [0.0, 0.0]
    half = n // 2
    done = 0
    while done < n:
        chunk = min(Config.RESCALE_EVERY, n - done)
        phases = _orbit_phases(c, thetas, done, chunk)[0]
        r11, t12, t22, cos, sin, psi = _iwasawa_chunk(c, phases, lift)
        for j in range(chunk):
            y0 = r11[j] * x0 + t12[j] * x1
            y1 = t22[j] * x1
            tri = math.atan2(x0 * y1 - x1 * y0, x0 * y0 + x1 * y1)
            total[0 if done + j < half else 1] += psi[j] + tri
            z0 = cos[j] * y0 - sin[j] * y1
            z1 = sin[j] * y0 + cos[j] * y1
            scale = math.hypot(z0, z1)
            x0, x1 = z0 / scale, z1 / scale
        done += chunk

    turns = [total[0] / (2 * math.pi * half), total[1] / (2 * math.pi * (n - half))]
    mean_turns = (total[0] + total[1]) / (2 * math.pi * n)

    def public(r):
        if c.kind == 'schrodinger':
            return float(min(max(0.5 - r, 0.0), 0.5))
        return float(np.mod(-r, 1.0))

    value = public(mean_turns)
    halves = [public(r) for r in turns]
    gap = abs(halves[0] - halves[1])
    error = min(gap, 1.0 - gap) + 1.0 / n
    logger.debug(f"rotation_number n={n}: {value:.10f} +/- {error:.1e}")
    return RotationEstimate(value, error, n)


def energy_for_rotation(lam: float, alpha: Irrational, rho_target: float, n: int = 20000,
                        xtol: float = 1e-12) -> float:
    """
    Energy whose almost Mathieu rotation number equals rho_target

    The rotation number is non-decreasing in E, so Brent's method on
    rho(E) - rho_target over the spectral hull converges.
    """
    if not 0.0 < rho_target < 0.5:
        raise DomainError("rho_target must lie in (0, 1/2)")
    hull = 2 + 2 * abs(lam) + 1

    def gap(energy):
        return rotation_number(CocycleMap.almost_mathieu(alpha, lam, energy), n).value - rho_target

    energy = optimize.brentq(gap, -hull, hull, xtol=xtol)
    logger.info(f"Energy {energy:.12f} has rotation number {rho_target:.12f} (lambda={lam})")
    return float(energy)


def uh_test(c: CocycleMap, N: int, theta_grid: int = 64, margin: float = None,
            min_angle: float = None) -> bool:
    """
    Finite-N test of uniform hyperbolicity

    Passes when every grid phase has (1/N) ln ||A_N(theta)|| > margin, the
    unstable direction (image of the past product) and the stable direction
    (most contracted by the future product) stay transversal, and A carries
    the unstable direction at theta onto the one at theta + alpha.
    """
    margin = Config.UH_MARGIN if margin is None else margin
    min_angle = Config.UH_MIN_ANGLE if min_angle is None else min_angle
    thetas = np.arange(theta_grid) / theta_grid
    alpha = c.alpha.value

    future, future_scale = iterate(c, thetas, N)
    rates = (future_scale + np.log(op_norm2(future))) / N
    if np.min(rates) <= margin:
        logger.debug(f"uh_test: min growth rate {np.min(rates):.4f} <= margin {margin}")
        return False

    def unstable(phases):
        past, _ = iterate(c, np.mod(phases - N * alpha, 1.0), N)
        u, _, _ = np.linalg.svd(past)
        return u[:, :, 0]

    _, _, vh = np.linalg.svd(future)
    stable = vh[:, 1, :]
    here = unstable(thetas)
    there = unstable(np.mod(thetas + alpha, 1.0))
    transversal = np.abs(here[:, 0] * stable[:, 1] - here[:, 1] * stable[:, 0])
    pushed = np.einsum('pab,pb->pa', c.evaluate(thetas), here)
    pushed /= np.hypot(pushed[:, 0], pushed[:, 1])[:, None]
    invariance = np.abs(pushed[:, 0] * there[:, 1] - pushed[:, 1] * there[:, 0])
    ok = bool(np.min(transversal) > min_angle and np.max(invariance) < min_angle)
    logger.debug(f"uh_test: rate {np.min(rates):.4f}, angle {np.min(transversal):.2e}, "
                 f"invariance {np.max(invariance):.2e} -> {ok}")
    return ok


def growth_profile(c: CocycleMap, theta: float, N: int, norm_kind: str = 'op',
                   num: int = 64) -> GrowthProfile:
    """
    ln ||A_n(theta)|| at geometrically spaced n <= N, in one pass

    Args:
        c: The cocycle
        theta: Base phase
        N: Largest n
        norm_kind: 'op' for the operator norm, 'hs' for Hilbert-Schmidt
        num: Number of geometric sample points before deduplication
    """
    if N < 1:
        raise DomainError("growth_profile needs N >= 1")
    if norm_kind not in ('op', 'hs'):
        raise DomainError(f"norm_kind must be 'op' or 'hs', got {norm_kind!r}")
    ns = sorted(set(int(v) for v in np.rint(np.geomspace(1, N, num))))
    _, _, recorded = _walk(c, np.array([float(theta)]), N, record=ns, norm_kind=norm_kind)
    return GrowthProfile(ns=ns, lognorms=[float(recorded[n][0]) for n in ns],
                         theta=float(theta), norm_kind=norm_kind)
