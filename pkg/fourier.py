#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Matrix-valued Fourier series on the circle

This module provides FourierMap, a truncated Fourier series of 2x2
matrices with an analytic strip radius, and Conjugacy, an ordered product
of constant, exponential and rotation factors used as the transformation
of the KAM scheme.

Maps with half-integer frequencies (products with rotations of odd
degree) are stored on the doubled lattice: mode m stands for frequency m/2
and the map has period 2.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from errors import DomainError
from utils.helpers import expm_sl2, identity_like, inverse2, op_norm2, pi_of, rotation

logger = logging.getLogger(__name__)


@dataclass
class FourierMap:
    """
    Truncated Fourier series theta -> sum_k c_k e^{2 pi i k theta / period}

    Attributes:
        coeffs: Complex array of shape (2K+1, 2, 2); row k+K holds mode k
        radius: Strip half-width h of the analytic norm
        half: True when modes live on the doubled lattice (period 2)
    """
    coeffs: np.ndarray
    radius: float = 0.0
    half: bool = False

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs)
        if self.coeffs.ndim != 3 or self.coeffs.shape[1:] != (2, 2) or self.coeffs.shape[0] % 2 != 1:
            raise DomainError(f"FourierMap needs coefficients of shape (2K+1, 2, 2), got {self.coeffs.shape}")
        if not np.iscomplexobj(self.coeffs):
            self.coeffs = self.coeffs.astype(np.complex128)

    @property
    def K(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def period(self) -> int:
        return 2 if self.half else 1

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    @property
    def real_dtype(self):
        return np.longdouble if self.coeffs.dtype == np.dtype(np.clongdouble) else np.float64

    @classmethod
    def zeros(cls, K: int, radius: float = 0.0, half: bool = False, dtype=np.complex128) -> 'FourierMap':
        return cls(np.zeros((2 * K + 1, 2, 2), dtype=dtype), radius, half)

    @classmethod
    def from_modes(cls, modes: Dict[int, np.ndarray], radius: float = 0.0, half: bool = False,
                   dtype=np.complex128) -> 'FourierMap':
        """Build a map from {mode: 2x2 coefficient}."""
        K = max((abs(k) for k in modes), default=0)
        fmap = cls.zeros(K, radius, half, dtype)
        for k, c in modes.items():
            fmap.coeffs[k + K] = np.asarray(c, dtype=dtype)
        return fmap

    @classmethod
    def from_samples(cls, samples: np.ndarray, K: int, radius: float = 0.0,
                     half: bool = False) -> 'FourierMap':
        """
        Discrete Fourier transform of samples on the uniform grid j*period/G

        Args:
            samples: Array (G, 2, 2) with G >= 2K+1
            K: Highest mode kept
            radius: Strip half-width to attach
            half: Samples span [0, 2) on the doubled lattice
        """
        samples = np.asarray(samples)
        G = samples.shape[0]
        if G < 2 * K + 1:
            raise DomainError(f"{G} samples cannot resolve {2 * K + 1} modes")
        rdtype = np.longdouble if samples.dtype in (np.dtype(np.longdouble), np.dtype(np.clongdouble)) \
            else np.float64
        ks = np.arange(-K, K + 1)
        phase = np.mod(np.outer(ks, np.arange(G)), G).astype(rdtype) / G
        kernel = np.exp(-2j * pi_of(rdtype) * phase)
        coeffs = np.einsum('kj,jab->kab', kernel, samples) / G
        return cls(coeffs, radius, half)

    @classmethod
    def from_function(cls, func, K: int, radius: float = 0.0, half: bool = False,
                      grid: Optional[int] = None, dtype=np.float64) -> 'FourierMap':
        """Sample func on a uniform grid and transform."""
        G = grid or 4 * K + 1
        period = 2 if half else 1
        thetas = np.arange(G, dtype=dtype) * period / G
        return cls.from_samples(func(thetas), K, radius, half)

    def evaluate(self, thetas, real: bool = True) -> np.ndarray:
        """Values at thetas, shape thetas.shape + (2, 2)."""
        thetas = np.asarray(thetas)
        rdtype = self.real_dtype
        flat = thetas.reshape(-1).astype(rdtype)
        kernel = np.exp(2j * pi_of(rdtype) * np.outer(flat, self.modes.astype(rdtype)) / self.period)
        values = np.einsum('pk,kab->pab', kernel, self.coeffs).reshape(thetas.shape + (2, 2))
        return values.real if real else values

    def norm(self, h: Optional[float] = None) -> float:
        return analytic_norm(self, self.radius if h is None else h)

    def mean(self) -> np.ndarray:
        return self.coeffs[self.K].copy()

    def without_mean(self) -> 'FourierMap':
        out = self.copy()
        out.coeffs[self.K] = 0
        return out

    def copy(self) -> 'FourierMap':
        return FourierMap(self.coeffs.copy(), self.radius, self.half)

    def with_radius(self, radius: float) -> 'FourierMap':
        return FourierMap(self.coeffs, radius, self.half)

    def scaled(self, factor: float) -> 'FourierMap':
        return FourierMap(self.coeffs * factor, self.radius, self.half)

    def truncated(self, K: int) -> 'FourierMap':
        if K >= self.K:
            return self.copy()
        return FourierMap(self.coeffs[self.K - K:self.K + K + 1].copy(), self.radius, self.half)

    def coefficient(self, k: int) -> np.ndarray:
        if abs(k) > self.K:
            return np.zeros((2, 2), dtype=self.coeffs.dtype)
        return self.coeffs[k + self.K]

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def trace_defect(self, grid: int = 64) -> float:
        """max over a grid of |tr f(theta)|; zero for sl(2,R)-valued maps."""
        values = self.evaluate(np.arange(grid) * self.period / grid)
        return float(np.max(np.abs(values[:, 0, 0] + values[:, 1, 1])))

    def reality_defect(self) -> float:
        """max |c_{-k} - conj(c_k)|; zero for real-valued maps."""
        return float(np.max(np.abs(self.coeffs[::-1] - np.conj(self.coeffs)))) if self.K >= 0 else 0.0


def analytic_norm(f: FourierMap, h: float) -> float:
    """
    |f|_h = sum_k ||c_k|| e^{2 pi |k| h}

    ||.|| is the operator norm; on the doubled lattice the weight is
    e^{pi |m| h}.

    Raises:
        DomainError: If h < 0 or h exceeds the radius of f
    """
    if h < 0:
        raise DomainError("analytic norm needs h >= 0")
    if h > f.radius + 1e-12:
        raise DomainError(f"analytic norm at h={h} beyond the radius {f.radius} of the map")
    rate = np.pi if f.half else 2 * np.pi
    weights = np.exp(rate * np.abs(f.modes) * h)
    return float(np.sum(op_norm2(f.coeffs.astype(np.complex128)) * weights))


Factor = Tuple[str, Union[np.ndarray, FourierMap, int]]


@dataclass
class Conjugacy:
    """
    Ordered product B(theta) = F_1(theta) F_2(theta) ... F_r(theta)

    Factors are ('const', C), ('exp', Y) for e^{Y(theta)} with Y a FourierMap,
    and ('rot', n) for rotation(n theta / 2). The degree is the sum of the
    rotation orders.
    """
    factors: List[Factor] = field(default_factory=list)

    @classmethod
    def identity(cls) -> 'Conjugacy':
        return cls([])

    @property
    def degree(self) -> int:
        return sum(int(v) for kind, v in self.factors if kind == 'rot')

    def then(self, other: 'Conjugacy') -> 'Conjugacy':
        """The product self(theta) other(theta)."""
        return Conjugacy(list(self.factors) + list(other.factors))

    def append(self, kind: str, value) -> 'Conjugacy':
        if kind not in ('const', 'exp', 'rot'):
            raise DomainError(f"unknown conjugacy factor {kind!r}")
        return Conjugacy(list(self.factors) + [(kind, value)])

    def inverse(self) -> 'Conjugacy':
        inverted = []
        for kind, value in reversed(self.factors):
            if kind == 'const':
                inverted.append(('const', inverse2(np.asarray(value))))
            elif kind == 'exp':
                inverted.append(('exp', value.scaled(-1)))
            else:
                inverted.append(('rot', -int(value)))
        return Conjugacy(inverted)

    def evaluate(self, thetas, dtype=np.float64) -> np.ndarray:
        """Values on unwrapped phases; rotation factors are not 1-periodic for odd degree."""
        thetas = np.asarray(thetas, dtype=dtype)
        out = identity_like(thetas.shape, dtype)
        for kind, value in self.factors:
            if kind == 'const':
                factor = np.broadcast_to(np.asarray(value, dtype=dtype), out.shape)
            elif kind == 'exp':
                factor = expm_sl2(value.evaluate(thetas).astype(dtype))
            else:
                factor = rotation(int(value) * thetas / 2, dtype)
            out = out @ factor
        return out

    def sup_norm(self, grid: int = 256) -> float:
        thetas = np.arange(grid) * 2.0 / grid
        return float(np.max(op_norm2(self.evaluate(thetas))))

    def to_fourier(self, K: int, radius: float = 0.0, grid: Optional[int] = None) -> FourierMap:
        """Fourier series of the product; odd degree uses the doubled lattice on [0, 2)."""
        half = self.degree % 2 != 0
        return FourierMap.from_function(self.evaluate, 2 * K if half else K, radius, half,
                                        grid=grid or (8 * K + 1 if half else 4 * K + 1))

    def __len__(self) -> int:
        return len(self.factors)
