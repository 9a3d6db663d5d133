#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Command-line front end of the cocycle lab

This module validates experiment configurations, dispatches them to the
library modules and writes CSV or JSON artifacts. It is the only module
that performs I/O. Exit codes: 0 success, 2 validation, 3 budget or
precision exhaustion, 4 bound violation in strict mode.
"""

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from mpmath import mp

from arithmetic import Irrational, lc_certificate, parse_alpha, resonance_table
from cocycle import CocycleMap, growth_profile, lyapunov, rotation_number
from config import ARTIFACT_VERSION, ExtendedConfig, config
from duality import amo_vhat, finite_localization
from errors import BudgetExhausted, CocycleLabError, DomainError, ValidationError
from growth import GROWTH_COLUMNS, growth_report
from kam import KAM_COLUMNS, amo_local_data, kam_iterate
from spectrum import gap_decay_experiment, gap_decay_slope
from utils.output import write_artifact

logger = logging.getLogger(__name__)

PROG = 'cocycle-lab'
COMMANDS = ('gaps', 'lyapunov', 'rotation', 'kam', 'dual', 'growth', 'growth-envelope', 'resonances')

Table = Tuple[List[str], List[Sequence[Any]], Dict[str, Any]]


def parse_energy_grid(text: str) -> List[float]:
    """'E' or 'a:b:n' (n evenly spaced energies from a to b inclusive)."""
    parts = str(text).split(':')
    try:
        if len(parts) == 1:
            energies = [float(parts[0])]
        elif len(parts) == 3:
            a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
            if n < 1:
                raise ValidationError('E', "grid needs at least one point")
            energies = [a] if n == 1 else [a + (b - a) * i / (n - 1) for i in range(n)]
        else:
            raise ValidationError('E', f"expected E or a:b:n, got {text!r}")
    except ValueError as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError('E', f"malformed energy {text!r}")
    if not all(math.isfinite(E) for E in energies):
        raise ValidationError('E', "energies must be finite")
    return energies


def parse_pair(text: Optional[str], name: str) -> Optional[Tuple[float, float]]:
    if text is None:
        return None
    try:
        a, b = (float(tok) for tok in text.split(','))
    except ValueError:
        raise ValidationError(name, f"expected two comma-separated numbers, got {text!r}")
    return a, b


@dataclass
class ExperimentConfig:
    """
    One experiment: a subcommand, its parameters and the output target

    Attributes:
        command: One of COMMANDS
        parameters: Subcommand parameters (lambda, alpha, E, budgets, ...)
        output: Output path, '-' for stdout
        fmt: 'csv' or 'json'
        precision: 'double' or 'extended'
        strict: Bound violations fail the run
        seed: Seed for resampling
    """
    command: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    output: str = '-'
    fmt: str = 'csv'
    precision: str = 'double'
    strict: bool = False
    seed: int = 0
    profile: str = 'default'

    def require(self, name: str, check: Callable[[Any], bool], message: str):
        value = self.parameters.get(name)
        if value is None or not check(value):
            raise ValidationError(name, message)

    def validate(self):
        """
        Check every field against the preconditions of the owning module

        Raises:
            ValidationError: Naming the first offending field
        """
        if self.command not in COMMANDS:
            raise ValidationError('command', f"unknown command {self.command!r}")
        if self.fmt not in ('csv', 'json'):
            raise ValidationError('format', "format must be csv or json")
        if self.precision not in ('double', 'extended'):
            raise ValidationError('precision', "precision must be double or extended")
        if self.profile not in config:
            raise ValidationError('config', f"unknown configuration {self.profile!r}")
        VALIDATORS[self.command](self)

    def settings(self) -> type:
        """Configuration class for this run."""
        base = config[self.profile]
        extras = {'PRECISION': self.precision, 'STRICT': self.strict or base.STRICT, 'SEED': self.seed}
        if self.precision == 'extended':
            extras.update(KAM_RESIDUAL_FLOOR=ExtendedConfig.KAM_RESIDUAL_FLOOR,
                          KAM_COEFF_FLOOR=ExtendedConfig.KAM_COEFF_FLOOR)
        return type('RunConfig', (base,), extras)

    def alpha(self) -> Irrational:
        return parse_alpha(self.parameters.get('alpha', 'golden'))

    def meta(self) -> Dict[str, Any]:
        return {
            'artifact_version': ARTIFACT_VERSION,
            'command': self.command,
            'parameters': dict(sorted(self.parameters.items())),
            'precision': self.precision,
            'strict': self.strict,
            'seed': self.seed,
        }


def _positive(v) -> bool:
    return math.isfinite(v) and v > 0


def _finite(v) -> bool:
    return math.isfinite(v)


def _validate_alpha(cfg: ExperimentConfig):
    cfg.alpha()


def _validate_gaps(cfg: ExperimentConfig):
    cfg.require('lambda', lambda v: _positive(v) and v != 1, "lambda must be positive and != 1")
    _validate_alpha(cfg)
    cfg.require('qmax', lambda v: v >= 50, "qmax must be >= 50")
    cfg.require('kmax', lambda v: v >= 1, "kmax must be >= 1")


def _validate_energy_scan(cfg: ExperimentConfig):
    cfg.require('lambda', _finite, "lambda must be finite")
    _validate_alpha(cfg)
    parse_energy_grid(cfg.parameters.get('E', '0'))
    cfg.require('n', lambda v: v >= 2, "n must be >= 2")


def _validate_kam(cfg: ExperimentConfig):
    cfg.require('lambda', lambda v: 0 < v <= 0.05, "the KAM regime needs 0 < lambda <= 0.05")
    _validate_alpha(cfg)
    cfg.require('E', _finite, "E must be finite")
    cfg.require('h', _positive, "h must be positive")
    cfg.require('htilde', lambda v: 0 < v < cfg.parameters['h'], "htilde must lie in (0, h)")
    cfg.require('budget', lambda v: 1 <= v <= 12, "budget must be in [1, 12]")
    lc = parse_pair(cfg.parameters.get('lc'), 'lc')
    if lc is not None and (lc[0] <= 0 or lc[1] <= 0):
        raise ValidationError('lc', "gamma and delta must be positive")


def _validate_dual(cfg: ExperimentConfig):
    cfg.require('lambda', _finite, "lambda must be finite")
    _validate_alpha(cfg)
    cfg.require('x', _finite, "x must be finite")
    cfg.require('N', lambda v: 1 <= v <= 4000, "N must be in [1, 4000]")


def _validate_growth(cfg: ExperimentConfig):
    cfg.require('lambda', _finite, "lambda must be finite")
    _validate_alpha(cfg)
    cfg.require('E', _finite, "E must be finite")
    cfg.require('N', lambda v: 1 <= v <= 10 ** 7, "N must be in [1, 10^7]")
    cfg.require('norm', lambda v: v in ('op', 'hs'), "norm must be op or hs")


def _validate_envelope(cfg: ExperimentConfig):
    cfg.require('lambda', lambda v: 0 < v < 1, "growth envelopes need 0 < lambda < 1")
    _validate_alpha(cfg)
    cfg.require('E', _finite, "E must be finite")
    cfg.require('eps', _positive, "eps must be positive")
    cfg.require('eps0', _positive, "eps0 must be positive")
    cfg.require('N', lambda v: 2 <= v <= 10 ** 7, "N must be in [2, 10^7]")


def _validate_resonances(cfg: ExperimentConfig):
    _validate_alpha(cfg)
    if cfg.parameters.get('rho') is None and cfg.parameters.get('E') is None:
        raise ValidationError('rho', "give --rho or --E with --lambda")
    if cfg.parameters.get('rho') is None:
        cfg.require('lambda', _finite, "lambda must be finite")
    cfg.require('eps0', _positive, "eps0 must be positive")
    cfg.require('K', lambda v: 1 <= v <= 10 ** 5, "K must be in [1, 10^5]")


VALIDATORS: Dict[str, Callable[[ExperimentConfig], None]] = {
    'gaps': _validate_gaps,
    'lyapunov': _validate_energy_scan,
    'rotation': _validate_energy_scan,
    'kam': _validate_kam,
    'dual': _validate_dual,
    'growth': _validate_growth,
    'growth-envelope': _validate_envelope,
    'resonances': _validate_resonances,
}


def _run_gaps(cfg: ExperimentConfig) -> Table:
    p = cfg.parameters
    rows = gap_decay_experiment(p['lambda'], cfg.alpha(), p['qmax'], p['kmax'])
    if not p.get('both_signs'):
        rows = [r for r in rows if r.k > 0]
    columns = ['k', 'left', 'right', 'length', 'rate', 'stable', 'below_floor', 'previous_length']
    table = [(r.k, r.left, r.right, r.length, r.rate, r.stable, r.below_floor, r.previous_length) for r in rows]
    try:
        slope = gap_decay_slope(rows)
    except DomainError:
        slope = None
    return columns, table, {'slope': slope}


def _run_lyapunov(cfg: ExperimentConfig) -> Table:
    p = cfg.parameters
    alpha = cfg.alpha()
    rows = []
    for E in parse_energy_grid(p['E']):
        estimate = lyapunov(CocycleMap.almost_mathieu(alpha, p['lambda'], E), p['n'], seed=cfg.seed)
        rows.append((E, estimate.value, estimate.spread, estimate.n))
    return ['E', 'lyapunov', 'spread', 'n'], rows, {}


def _run_rotation(cfg: ExperimentConfig) -> Table:
    p = cfg.parameters
    alpha = cfg.alpha()
    rows = []
    for E in parse_energy_grid(p['E']):
        estimate = rotation_number(CocycleMap.almost_mathieu(alpha, p['lambda'], E), p['n'])
        rows.append((E, estimate.value, estimate.error, estimate.n))
    return ['E', 'rho', 'error', 'n'], rows, {}


def _run_kam(cfg: ExperimentConfig) -> Table:
    p = cfg.parameters
    alpha = cfg.alpha()
    lc = parse_pair(p.get('lc'), 'lc')
    A0, f0 = amo_local_data(p['lambda'], p['E'], p['h'])
    trace = kam_iterate(A0, f0, p['h'], p['htilde'], p['budget'], alpha=alpha, lc=lc,
                        settings=cfg.settings())
    extra = {k: v for k, v in trace.to_dict().items() if k not in ('steps', 'elapsed')}
    if lc is not None:
        rho = rotation_number(CocycleMap.almost_mathieu(alpha, p['lambda'], p['E']), 20000)
        ok, worst, margin = lc_certificate(alpha, rho.value, lc[0], lc[1], 200)
        extra['lc_certificate'] = {'ok': ok, 'worst_m': worst, 'margin': margin, 'rho': rho.value}
    return KAM_COLUMNS, [step.as_tuple() for step in trace.steps], extra


def _run_dual(cfg: ExperimentConfig) -> Table:
    p = cfg.parameters
    states = finite_localization(amo_vhat(), p['lambda'], cfg.alpha(), p['x'], p['N'])
    rows = [(i, s.eigenvalue, s.center, s.decay_rate) for i, s in enumerate(states)]
    return ['index', 'E', 'center', 'rate'], rows, {'caveat': 'finite-volume diagnostic'}


def _run_growth(cfg: ExperimentConfig) -> Table:
    p = cfg.parameters
    c = CocycleMap.almost_mathieu(cfg.alpha(), p['lambda'], p['E'])
    profile = growth_profile(c, p.get('theta', 0.0), p['N'], p['norm'])
    rows = [(n, value, value / math.log(n) if n > 1 else None) for n, value in profile.rows()]
    return ['n', 'lognorm', 'exponent'], rows, {}


def _run_envelope(cfg: ExperimentConfig) -> Table:
    p = cfg.parameters
    rows, spec = growth_report(p['lambda'], cfg.alpha(), p['E'], p['eps'], p['eps0'], p['N'],
                               theta=p.get('theta', 0.0))
    extra = {'ell': spec.ell, 'eta': spec.eta, 'rho': spec.rho, 'h_lambda': spec.h_lambda}
    return GROWTH_COLUMNS, [r.as_tuple() for r in rows], extra


def _run_resonances(cfg: ExperimentConfig) -> Table:
    p = cfg.parameters
    alpha = cfg.alpha()
    rho = p.get('rho')
    if rho is None:
        rho = rotation_number(CocycleMap.almost_mathieu(alpha, p['lambda'], p['E']), 20000).value
    rows = []
    with mp.workdps(alpha.dps):
        for ell, distance in resonance_table(alpha, rho, p['eps0'], p['K']):
            s = abs(mp.sin(2 * mp.pi * (2 * mp.mpf(rho) - ell * alpha.approx)))
            eta = math.inf if s == 0 else float(-mp.log(s) / abs(ell))
            rows.append((ell, distance, eta))
    return ['ell', 'norm', 'eta'], rows, {'rho': rho}


HANDLERS: Dict[str, Callable[[ExperimentConfig], Table]] = {
    'gaps': _run_gaps,
    'lyapunov': _run_lyapunov,
    'rotation': _run_rotation,
    'kam': _run_kam,
    'dual': _run_dual,
    'growth': _run_growth,
    'growth-envelope': _run_envelope,
    'resonances': _run_resonances,
}


def run(cfg: ExperimentConfig) -> int:
    """
    Validate and execute one experiment, writing its artifact

    Returns:
        The exit status (0, 2, 3 or 4)
    """
    try:
        cfg.validate()
        columns, rows, extra = HANDLERS[cfg.command](cfg)
    except BudgetExhausted as e:
        logger.error(f"{cfg.command}: {e}")
        if e.partial is not None:
            columns, rows = e.partial
            meta = cfg.meta()
            meta['partial'] = True
            write_artifact(cfg.output, cfg.fmt, columns, rows, meta)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except CocycleLabError as e:
        logger.error(f"{cfg.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    meta = cfg.meta()
    meta.update(extra)
    write_artifact(cfg.output, cfg.fmt, columns, rows, meta)
    return 0


def create_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subcommand per experiment."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--out', default='-', help="output path ('-' for stdout)")
    common.add_argument('--format', dest='fmt', choices=('csv', 'json'), default=None)
    common.add_argument('--precision', choices=('double', 'extended'), default=None)
    common.add_argument('--strict', action='store_true', help="bound violations exit with code 4")
    common.add_argument('--seed', type=int, default=None)
    common.add_argument('--config', dest='profile', default='default', help="configuration name")
    common.add_argument('--verbose', '-v', action='store_true')

    parser = argparse.ArgumentParser(prog=PROG, description="Quasiperiodic SL(2,R) cocycle lab")
    sub = parser.add_subparsers(dest='command', required=True)

    gaps = sub.add_parser('gaps', parents=[common], help="labelled gap decay rates")
    gaps.add_argument('--lambda', dest='lambda_', type=float, required=True)
    gaps.add_argument('--alpha', default='golden')
    gaps.add_argument('--qmax', type=int, default=100)
    gaps.add_argument('--kmax', type=int, default=6)
    gaps.add_argument('--both-signs', action='store_true', help="also emit negative labels")

    for name, helptext in (('lyapunov', "Lyapunov exponents"), ('rotation', "rotation numbers")):
        scan = sub.add_parser(name, parents=[common], help=f"{helptext} over an energy grid")
        scan.add_argument('--lambda', dest='lambda_', type=float, required=True)
        scan.add_argument('--alpha', default='golden')
        scan.add_argument('--E', dest='E', default='0', help="E or a:b:n")
        scan.add_argument('--n', type=int, default=10000)

    kam = sub.add_parser('kam', parents=[common], help="KAM almost-reducibility trace")
    kam.add_argument('--lambda', dest='lambda_', type=float, required=True)
    kam.add_argument('--E', dest='E', type=float, required=True)
    kam.add_argument('--alpha', default='golden')
    kam.add_argument('--h', type=float, default=0.1)
    kam.add_argument('--htilde', type=float, default=0.05)
    kam.add_argument('--budget', type=int, default=6)
    kam.add_argument('--lc', default=None, help="gamma,delta of the rotation certificate")

    dual = sub.add_parser('dual', parents=[common], help="finite-volume localization of the dual operator")
    dual.add_argument('--lambda', dest='lambda_', type=float, required=True)
    dual.add_argument('--alpha', default='golden')
    dual.add_argument('--x', type=float, default=0.0)
    dual.add_argument('--N', type=int, default=200)

    growth = sub.add_parser('growth', parents=[common], help="transfer matrix growth profile")
    growth.add_argument('--lambda', dest='lambda_', type=float, required=True)
    growth.add_argument('--alpha', default='golden')
    growth.add_argument('--E', dest='E', type=float, required=True)
    growth.add_argument('--N', type=int, default=10 ** 5)
    growth.add_argument('--theta', type=float, default=0.0)
    growth.add_argument('--norm', choices=('op', 'hs'), default='hs')

    envelope = sub.add_parser('growth-envelope', parents=[common], help="growth against the resonance envelope")
    envelope.add_argument('--lambda', dest='lambda_', type=float, required=True)
    envelope.add_argument('--alpha', default='golden')
    envelope.add_argument('--E', dest='E', type=float, required=True)
    envelope.add_argument('--eps', type=float, default=0.5)
    envelope.add_argument('--eps0', type=float, default=1.0)
    envelope.add_argument('--N', type=int, default=10 ** 5)
    envelope.add_argument('--theta', type=float, default=0.0)

    res = sub.add_parser('resonances', parents=[common], help="resonance table of a rotation number")
    res.add_argument('--alpha', default='golden')
    res.add_argument('--rho', type=float, default=None)
    res.add_argument('--lambda', dest='lambda_', type=float, default=None)
    res.add_argument('--E', dest='E', type=float, default=None)
    res.add_argument('--eps0', type=float, default=0.5)
    res.add_argument('--K', type=int, default=1000)
    return parser


_RUN_OPTIONS = ('command', 'out', 'fmt', 'precision', 'strict', 'seed', 'profile', 'verbose')


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Turn parsed arguments into an ExperimentConfig (defaults from the chosen configuration)."""
    base = config.get(args.profile, config['default'])
    parameters = {('lambda' if k == 'lambda_' else k): v for k, v in vars(args).items()
                  if k not in _RUN_OPTIONS}
    fmt = args.fmt or ('json' if args.command == 'kam' else 'csv')
    return ExperimentConfig(
        command=args.command,
        parameters=parameters,
        output=args.out,
        fmt=fmt,
        precision=args.precision or base.PRECISION,
        strict=args.strict,
        seed=base.SEED if args.seed is None else args.seed,
        profile=args.profile,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    return run(config_from_args(args))


if __name__ == '__main__':
    sys.exit(main())
