#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Closed-form 2x2 linear algebra for SL(2,R) and su(1,1)

All functions act on arrays of shape (..., 2, 2) and keep the dtype of
their input, so float64 and longdouble data flow through unchanged
(numpy.linalg does not accept longdouble).
"""

from typing import Tuple

import numpy as np

# M conjugates sl(2,R) onto su(1,1): M X M^{-1} = [[iz, x-iy], [x+iy, -iz]]
# for X = [[x, y+z], [y-z, -x]]. M M^* = I/2, so norms are preserved.
M_MATRIX = np.array([[1, -1j], [1, 1j]], dtype=np.complex128) / 2j
M_INVERSE = np.array([[1j, 1j], [-1, 1]], dtype=np.complex128)

_SERIES_CUTOFF = 1e-8


def pi_of(dtype=np.float64):
    """pi at the precision of dtype."""
    return 4 * np.arctan(np.asarray(1, dtype=dtype))


def rotation(phi, dtype=np.float64) -> np.ndarray:
    """
    Rotation by phi turns, [[cos 2 pi phi, sin 2 pi phi], [-sin 2 pi phi, cos 2 pi phi]]

    This is the orientation in which Schrodinger rotation numbers increase
    with the energy, and it equals M^{-1} exp(diag(2 pi i phi, -2 pi i phi)) M.
    """
    angle = 2 * pi_of(dtype) * np.asarray(phi, dtype=dtype)
    c, s = np.cos(angle), np.sin(angle)
    out = np.empty(angle.shape + (2, 2), dtype=dtype)
    out[..., 0, 0] = c
    out[..., 0, 1] = s
    out[..., 1, 0] = -s
    out[..., 1, 1] = c
    return out


def trace2(a: np.ndarray) -> np.ndarray:
    return a[..., 0, 0] + a[..., 1, 1]


def det2(a: np.ndarray) -> np.ndarray:
    return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]


def adjugate(a: np.ndarray) -> np.ndarray:
    """Adjugate matrix; the inverse for determinant one."""
    out = np.empty_like(a)
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 1, 1] = a[..., 0, 0]
    out[..., 0, 1] = -a[..., 0, 1]
    out[..., 1, 0] = -a[..., 1, 0]
    return out


def inverse2(a: np.ndarray) -> np.ndarray:
    return adjugate(a) / det2(a)[..., None, None]


def identity_like(shape: Tuple[int, ...], dtype=np.float64) -> np.ndarray:
    out = np.zeros(tuple(shape) + (2, 2), dtype=dtype)
    out[..., 0, 0] = 1
    out[..., 1, 1] = 1
    return out


def _complex_of(dtype) -> type:
    return np.clongdouble if np.dtype(dtype) in (np.dtype(np.longdouble), np.dtype(np.clongdouble)) \
        else np.complex128


def _even_series(z2: np.ndarray, exact, coefficients) -> np.ndarray:
    """Evaluate an even entire function of z from z**2, using a series near zero."""
    small = np.abs(z2) < _SERIES_CUTOFF
    z = np.sqrt(np.where(small, 1, z2))
    out = exact(z)
    series = np.zeros_like(z2)
    power = np.ones_like(z2)
    for coefficient in coefficients:
        series = series + coefficient * power
        power = power * z2
    return np.where(small, series, out)


def expm_sl2(x: np.ndarray) -> np.ndarray:
    """
    Exponential of trace-zero 2x2 matrices

    Uses X^2 = -det(X) I, so exp(X) = cosh(s) I + sinh(s)/s X with s^2 = -det(X).
    Real input gives real output.
    """
    x = np.asarray(x)
    ctype = _complex_of(x.dtype)
    s2 = (-det2(x)).astype(ctype)
    cosh = _even_series(s2, np.cosh, (1, 1 / 2, 1 / 24, 1 / 720))
    sinhc = _even_series(s2, lambda z: np.sinh(z) / z, (1, 1 / 6, 1 / 120, 1 / 5040))
    out = sinhc[..., None, None] * x.astype(ctype)
    out[..., 0, 0] += cosh
    out[..., 1, 1] += cosh
    if np.isrealobj(x):
        return out.real.astype(x.dtype)
    return out


def logm_sl2(a: np.ndarray) -> np.ndarray:
    """
    Principal logarithm of determinant-one 2x2 matrices

    The traceless part of A is scaled by s/sinh(s) where cosh(s) = tr(A)/2.
    sinh(s)^2 is computed as ((a-d)/2)^2 + bc to keep relative accuracy near
    the identity.

    Raises:
        ValueError: If some matrix has trace <= -2 + 1e-12 (no principal log).
    """
    a = np.asarray(a)
    ctype = _complex_of(a.dtype)
    if np.any(np.real(trace2(a)) <= -2 + 1e-12):
        raise ValueError("matrix logarithm undefined near -I; flip the sign first")
    half_diff = (a[..., 0, 0] - a[..., 1, 1]) / 2
    traceless = np.empty(a.shape, dtype=ctype)
    traceless[..., 0, 0] = half_diff
    traceless[..., 1, 1] = -half_diff
    traceless[..., 0, 1] = a[..., 0, 1]
    traceless[..., 1, 0] = a[..., 1, 0]
    r2 = (half_diff * half_diff + a[..., 0, 1] * a[..., 1, 0]).astype(ctype)
    half_trace = (trace2(a) / 2).astype(ctype)

    positive = np.real(half_trace) >= 0
    small = positive & (np.abs(r2) < _SERIES_CUTOFF)
    with np.errstate(divide='ignore', invalid='ignore'):
        r = np.sqrt(np.where(small, 1, r2))
        s = np.arccosh(half_trace)
        exact = np.where(positive, np.arcsinh(r) / r, s / np.sinh(s))
    series = 1 - r2 / 6 + 3 * r2 ** 2 / 40 - 5 * r2 ** 3 / 112
    factor = np.where(small, series, exact)
    out = factor[..., None, None] * traceless
    if np.isrealobj(a):
        return out.real.astype(a.dtype)
    return out


def op_norm2(a: np.ndarray) -> np.ndarray:
    """
    Spectral norm of 2x2 matrices (largest singular value)

    With s1^2 + s2^2 = |a|_F^2 and s1 s2 = |det a|, the largest singular
    value is (sqrt(F + 2|det|) + sqrt(F - 2|det|)) / 2. Entries are scaled
    by their largest modulus first so nothing is squared past the range.
    """
    a = np.asarray(a)
    scale = np.max(np.abs(a), axis=(-2, -1))
    safe = np.where(scale > 0, scale, 1)
    b = a / safe[..., None, None]
    fro2 = np.sum(np.abs(b) ** 2, axis=(-2, -1))
    det = np.abs(det2(b))
    return scale * (np.sqrt(fro2 + 2 * det) + np.sqrt(np.maximum(fro2 - 2 * det, 0))) / 2


def hs_norm(a: np.ndarray) -> np.ndarray:
    """Hilbert-Schmidt (Frobenius) norm."""
    a = np.asarray(a)
    scale = np.max(np.abs(a), axis=(-2, -1))
    safe = np.where(scale > 0, scale, 1)
    return scale * np.sqrt(np.sum(np.abs(a / safe[..., None, None]) ** 2, axis=(-2, -1)))


def to_su11(x: np.ndarray) -> np.ndarray:
    """Conjugate by M: sl(2,R) coordinates to su(1,1) coordinates."""
    ctype = _complex_of(np.asarray(x).dtype)
    return M_MATRIX.astype(ctype) @ np.asarray(x).astype(ctype) @ M_INVERSE.astype(ctype)


def from_su11(z: np.ndarray, real: bool = True) -> np.ndarray:
    """Inverse of to_su11; real part taken when the result is known to be real."""
    z = np.asarray(z)
    out = M_INVERSE.astype(z.dtype) @ z @ M_MATRIX.astype(z.dtype)
    return out.real if real else out


def ad_matrix(a: np.ndarray) -> np.ndarray:
    """
    Matrix of Y -> A^{-1} Y A on trace-zero matrices

    Coordinates are (y11, y12, y21) for Y = [[y11, y12], [y21, -y11]].
    """
    a = np.asarray(a)
    a_inv = inverse2(a)
    basis = np.zeros((3, 2, 2), dtype=a.dtype)
    basis[0, 0, 0], basis[0, 1, 1] = 1, -1
    basis[1, 0, 1] = 1
    basis[2, 1, 0] = 1
    images = a_inv @ basis @ a
    return np.stack([images[:, 0, 0], images[:, 0, 1], images[:, 1, 0]], axis=0)


def sl2_coordinates(x: np.ndarray) -> np.ndarray:
    """(..., 2, 2) trace-zero matrices to (..., 3) coordinates (y11, y12, y21)."""
    return np.stack([x[..., 0, 0], x[..., 0, 1], x[..., 1, 0]], axis=-1)


def sl2_from_coordinates(y: np.ndarray) -> np.ndarray:
    out = np.empty(y.shape[:-1] + (2, 2), dtype=y.dtype)
    out[..., 0, 0] = y[..., 0]
    out[..., 1, 1] = -y[..., 0]
    out[..., 0, 1] = y[..., 1]
    out[..., 1, 0] = y[..., 2]
    return out


def wrap_unit(x) -> np.ndarray:
    """Reduce to [0, 1)."""
    return np.mod(x, 1.0)


def torus_distance(x) -> np.ndarray:
    """Distance to the nearest integer."""
    r = np.mod(x, 1.0)
    return np.minimum(r, 1.0 - r)
