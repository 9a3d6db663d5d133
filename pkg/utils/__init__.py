#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Utilities package for the cocycle lab
"""

from .helpers import (rotation, expm_sl2, logm_sl2, op_norm2, hs_norm, to_su11, from_su11,
                      inverse2, adjugate, trace2, det2, torus_distance, wrap_unit)
from .output import render_csv, render_json, write_artifact, read_csv_artifact

__all__ = ['rotation', 'expm_sl2', 'logm_sl2', 'op_norm2', 'hs_norm', 'to_su11', 'from_su11',
           'inverse2', 'adjugate', 'trace2', 'det2', 'torus_distance', 'wrap_unit',
           'render_csv', 'render_json', 'write_artifact', 'read_csv_artifact']
