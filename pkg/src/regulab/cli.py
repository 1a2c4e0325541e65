"""``regulab`` command line: collect, synthesize, regulate, verify.

Exit codes: 0 success, 2 configuration error, 3 violated assumption,
4 numerical failure.
"""
import argparse
import logging
import os
import sys

import numpy as np

from .config import ExperimentConfig
from .errors import AssumptionError, ConfigError, RegulabError
from .model import char_poly_theta, check_structure, pbh_nonresonance
from .sim import Dataset, collect_offline

log = logging.getLogger("regulab")


def _load(args):
    return ExperimentConfig.load(args.config)


def _require_structure(plant):
    report = check_structure(plant)
    print(f"controllability of (A, B): {'yes' if report.controllable else 'NO'}")
    print(f"observability of (C, A)  : {'yes' if report.observable else 'NO'}")
    if not report:
        raise AssumptionError("controllability/observability", "the plant fails a Kalman rank test")


def _dataset(cfg, args):
    if args.dataset:
        try:
            return Dataset.from_csv(args.dataset)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"--dataset: {exc}") from None
    x0, _ = cfg.initial_states()
    return collect_offline(cfg.plant(), x0, cfg.excitation(), cfg.t_star, cfg.internal_h)


def _theta(args, cfg):
    if args.theta is None:
        return np.array(cfg.theta0, dtype=float)
    try:
        theta = np.array([float(v) for v in args.theta.split(",")])
    except ValueError:
        raise ConfigError(f"--theta: cannot parse {args.theta!r}") from None
    if theta.size != len(cfg.theta0):
        raise ConfigError(f"--theta: expected {len(cfg.theta0)} values, got {theta.size}")
    return theta


def cmd_collect(args):
    cfg = _load(args)
    plant = cfg.plant()
    _require_structure(plant)
    x0, _ = cfg.initial_states()
    ds = collect_offline(plant, x0, cfg.excitation(), cfg.t_star, cfg.internal_h)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "dataset.csv")
    ds.to_csv(path)
    idx = ds.sample_indices(cfg.tau_s)
    Dataset(ds.t0, cfg.tau_s, ds.u[idx], ds.y[idx]).to_csv(os.path.join(args.out, "samples.csv"))
    print(f"wrote {path}: {len(ds)} rows at h={cfg.internal_h:g} s")
    print(f"sampling grid: {idx.size} points (t = {ds.t[idx[0]]:g}..{ds.t[idx[-1]]:g} every {cfg.tau_s:g} s)")
    return 0


def cmd_synthesize(args):
    from .regulator import DataDrivenDesigner

    cfg = _load(args)
    theta = _theta(args, cfg)
    if not cfg.box().contains(theta):
        log.warning("theta=%s lies outside the identifier box; proceeding", theta)
    ds = _dataset(cfg, args)
    rc = cfg.regulator_config()
    designer = DataDrivenDesigner(ds, rc.fp, rc.tau_s, rc.Q, rc.R, shift=rc.shift)
    designer.check_excitation(theta)
    result = designer.synthesize(theta)
    print(result.report())
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "gain.csv")
    result.gain_to_csv(path)
    print(f"wrote {path}")
    return 0


def cmd_regulate(args):
    from .regulator import HybridRegulator, RunLog

    cfg = _load(args)
    ds = _dataset(cfg, args)
    _, x0 = cfg.initial_states()
    reg = HybridRegulator(cfg.plant(), cfg.exosystem(), ds, cfg.regulator_config())
    out = RunLog()
    try:
        reg.run(x0, out)
    except RegulabError:
        if out.t:
            out.stop_reason = "error"
            out.to_csv(args.out)
            print(f"partial logs written to {args.out}", file=sys.stderr)
        raise
    out.to_csv(args.out)
    print(out.summary())
    print(f"wrote {os.path.join(args.out, 'trace.csv')} and {os.path.join(args.out, 'jumps.csv')}")
    return 0


def cmd_verify(args):
    from . import oracle
    from .synth import cascade_constants, stabilizing_gain

    cfg = _load(args)
    plant, exo, fp = cfg.plant(), cfg.exosystem(), cfg.filters()
    _require_structure(plant)
    theta_star = char_poly_theta(exo.S)
    print(f"theta* = {np.array2string(theta_star, precision=10)}")
    if not pbh_nonresonance(plant, theta_star):
        raise AssumptionError("non-resonance", f"the plant has a transmission zero at a root of p(., {theta_star})")
    print("non-resonance at theta*: yes")

    print("non-resonance over the box corners:")
    for corner in cfg.box().corners():
        ok = pbh_nonresonance(plant, corner)
        print(f"  theta = {np.array2string(corner, precision=4)}: {'yes' if ok else 'RESONANT'}")

    try:
        pi = oracle.solve_pi(plant, fp)
        Ac = oracle.cascade_matrix(theta_star, pi.H1, pi.H2, fp)
        rc = cfg.regulator_config()
        shifted = Ac + rc.shift * np.eye(Ac.shape[0])
        _, K = stabilizing_gain(shifted, cascade_constants(theta_star, fp).calBc, rc.Q, rc.R)
        x0, _ = cfg.initial_states()
        bundle = oracle.build_oracle(plant, exo, fp, theta_star, K, rho0=x0)
    except RegulabError as exc:
        raise RegulabError(f"oracle construction failed: {exc}") from exc
    tol = 1e-8
    print(bundle.report(tol))
    decay = oracle.transverse_decay(plant, fp, pi.Pi1, x0, T=20.0)
    print(f"transverse decay rate: {decay.rate:.4f} (slowest filter pole {-fp.lam.max():g})")
    failed = [k for k, v in bundle.residuals.items() if not v < tol]
    if failed:
        print(f"{len(failed)} relation(s) above tolerance: {', '.join(failed)}", file=sys.stderr)
        return 4
    return 0


COMMANDS = {
    "collect": cmd_collect,
    "synthesize": cmd_synthesize,
    "regulate": cmd_regulate,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="regulab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment JSON")
        p.add_argument("--dataset", help="dataset.csv from 'collect' (collected afresh if omitted)")
        p.add_argument("--theta", help="comma-separated internal-model parameter")
        p.add_argument("--out", default=".", help="output directory")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except RegulabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
