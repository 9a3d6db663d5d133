#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Configuration for the cocycle lab

Settings are read from the environment (a local .env file is honoured)
and grouped into configuration classes selected by name.
"""

import os
import sys
from typing import List, Tuple

import numpy as np
from dotenv import load_dotenv

load_dotenv()

ARTIFACT_VERSION = "1.0"


def validate_environment() -> List[str]:
    """Validate optional environment variables"""
    warnings = []

    precision = os.environ.get('COCYCLE_LAB_PRECISION')
    if precision and precision not in ('double', 'extended'):
        warnings.append(f"COCYCLE_LAB_PRECISION={precision!r} not understood - using double")

    if np.finfo(np.longdouble).eps >= np.finfo(np.float64).eps:
        warnings.append("numpy longdouble is not wider than double on this platform - "
                        "extended precision falls back to double")

    return warnings


def _env_float(name: str, default: float) -> float:
    value = os.environ.get(name)
    return float(value) if value else default


def _env_int(name: str, default: int) -> int:
    value = os.environ.get(name)
    return int(value) if value else default


class Config:
    """Base configuration."""
    warnings = validate_environment()
    for warning in warnings:
        print(f"WARNING: {warning}", file=sys.stderr)

    PRECISION = os.environ.get('COCYCLE_LAB_PRECISION') or 'double'
    if PRECISION not in ('double', 'extended'):
        PRECISION = 'double'
    STRICT = False
    SEED = _env_int('COCYCLE_LAB_SEED', 0)

    # Arithmetic
    CF_TERMS = _env_int('COCYCLE_LAB_CF_TERMS', 64)
    MP_DPS = _env_int('COCYCLE_LAB_MP_DPS', 256)
    KNORM_RELATIVE_ERROR = 1e-10

    # Products of matrices
    RESCALE_EVERY = 1000
    UH_MARGIN = 0.05
    UH_MIN_ANGLE = 1e-2

    # Spectrum
    GAP_FLOOR = 1e-14
    GAP_STABILITY = 0.10

    # Asserted bounds are checked up to this multiplicative slack
    SLACK = _env_float('COCYCLE_LAB_SLACK', 4.0)

    # KAM scheme
    KAM_C0 = 8.0
    KAM_TAU = 2.0
    KAM_D0 = 1e32
    KAM_RESONANCE_EXPONENT = 1.0
    KAM_MIN_MODES = 16
    KAM_MAX_GRID = 4097
    KAM_COEFF_FLOOR = 1e-15
    KAM_RESIDUAL_FLOOR = 1e-13
    KAM_MAX_SCAN = 10 ** 6
    KAM_MAX_STEPS = 12

    # Growth
    EXPONENT_TOL = 0.2
    GROWTH_MIN_LOG_N = 7.0

    @classmethod
    def get_precision_dtype(cls) -> Tuple[type, type]:
        """Return the (real, complex) numpy dtypes for the configured precision."""
        if cls.PRECISION == 'extended':
            return np.longdouble, np.clongdouble
        return np.float64, np.complex128


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True


class StrictConfig(Config):
    """Bound violations abort the run."""
    DEBUG = False
    STRICT = True


class ExtendedConfig(Config):
    """Extended (longdouble) precision for KAM reconjugation."""
    DEBUG = False
    PRECISION = 'extended'
    KAM_RESIDUAL_FLOOR = 1e-16
    KAM_COEFF_FLOOR = 1e-18


config = {
    'development': DevelopmentConfig,
    'strict': StrictConfig,
    'extended': ExtendedConfig,
    'default': DevelopmentConfig
}
