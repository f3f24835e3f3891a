"""Command-line entry point: ``cryonoise <command> ...``.

Exit codes: 0 success, 2 usage/config error, 3 data/parse/I-O error,
4 physics or diagnostic failure.
"""

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (AmbiguityError, ConfigError, DomainError, GridError, QualificationError,
                     ReplayError, SingularError, TouchstoneError, UnderdeterminedError)
from .instruments import CryostatConfig, RunLog
from .planck import PlanckSweep, fit_planck, results_csv, results_json, results_table
from .serial_bias import (SerialBiasConfig, build_reference_config, residual_csv, residuals, run_bias,
                          sign_changes)
from .solr import calibrate, deembed
from .sparams import NoiseSourceModel
from .thermal_chain import TABLE1, ChainSpec, cascade_occupation, stage_table_report
from .touchstone import read_touchstone, write_touchstone
from .workflow import CalibrationReport, Plan, replay, simulate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PHYSICS = 0, 2, 3, 4

log = logging.getLogger("cryonoise")


class UsageError(ConfigError):
    pass


def data_dir():
    """Fixture directory; ``CRYONOISE_DATA_DIR`` overrides the bundled one."""
    env = os.environ.get("CRYONOISE_DATA_DIR")
    if env:
        return Path(env)
    return Path(__file__).with_name("data") / "v1"


def write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    log.info("wrote %s", path)
    return path


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise TouchstoneError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None


def _config(build, *a):
    # malformed but parseable config objects are usage errors
    try:
        return build(*a)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def _check_keys(d, allowed, what):
    if not isinstance(d, dict):
        raise ConfigError(f"{what} must be a JSON object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")


# commands -----------------------------------------------------------------

def cmd_cascade(args):
    if args.table1:
        spec = TABLE1
    elif args.config:
        spec = _config(ChainSpec.from_dict, _load_json(args.config))
    else:
        raise UsageError("cascade needs --table1 or --config")
    if not spec.stages:
        raise UsageError("chain has no stages")
    text = stage_table_report(spec, args.freq)
    sys.stdout.write(text)
    if args.out:
        write_atomic(Path(args.out) / "cascade.csv", text)
    final = float(cascade_occupation(spec, args.freq)[-1])
    log.info("input occupation at %g Hz: %.4f photons", args.freq, final)
    return EXIT_OK


def _source_from_arg(arg, freqs):
    if arg in (None, "ideal"):
        return NoiseSourceModel.ideal(freqs)
    net = read_touchstone(arg, nports=2)
    return NoiseSourceModel(net, emitting_port=2)


def cmd_planck_fit(args):
    path = args.sweep or data_dir() / "planck_sweep.csv"
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    sweep = PlanckSweep.from_csv(text)
    if args.source not in (None, "ideal"):
        sweep = PlanckSweep(sweep.freqs, sweep.temps, sweep.psd,
                            source=_source_from_arg(args.source, sweep.freqs))
    fit = fit_planck(sweep, threads=args.threads)
    rows = results_table(fit)
    out = Path(args.out or ".")
    write_atomic(out / "planck_fit.json", json.dumps(fit.to_dict(), indent=1))
    write_atomic(out / "planck_fit.csv", results_csv(rows))
    sys.stdout.write(results_json(rows, indent=1) + "\n")
    return EXIT_OK


def _bias_config(args):
    if args.config:
        cfg = _config(SerialBiasConfig.from_dict, _load_json(args.config))
    else:
        path = data_dir() / "reference_bias_config.json"
        cfg = SerialBiasConfig.from_dict(_load_json(path)) if path.exists() else build_reference_config()
    if args.G_db is not None:
        fresh = build_reference_config(args.G_db, f_s=cfg.f_s, f_p=cfg.f_p,
                                   gsys_db=10 * np.log10(cfg.gsys), tsys=cfg.tsys,
                                   epsilon_grid=cfg.epsilon_grid, n_exc_loss=cfg.n_exc_loss)
        cfg = fresh
    if args.eps_range:
        lo, hi = args.eps_range
        cfg = cfg.replace(epsilon_grid=np.linspace(lo, hi, args.eps_points).tolist())
    if args.no_spurs:
        cfg = cfg.replace(modes=[m for m in cfg.modes if m.n in (0, -1)])
    return cfg


def cmd_bias(args):
    cfg = _bias_config(args)
    rep, data = run_bias(cfg, args.noise_rel, args.seed)
    _, res = residuals(data)
    summary = {
        "beta": rep.beta,
        "gain_fit_analytic": rep.gain_fit_analytic,
        "gain_fit_oracle": rep.gain_fit_oracle,
        "n_fit_analytic": rep.n_fit_analytic,
        "n_fit_oracle": rep.n_fit_oracle,
        "noise_error": rep.noise_error_analytic,
        "asymptotic_error": rep.asymptotic_error,
        "residual_sign_changes": sign_changes(res[np.argsort(data.eps)]),
    }
    out = Path(args.out or ".")
    write_atomic(out / "bias_report.json", json.dumps({"config": cfg.to_dict(), "summary": summary,
                                                        "report": rep.to_dict()}, indent=1))
    write_atomic(out / "bias_residuals.csv", residual_csv(cfg, data))
    for k, v in summary.items():
        print(f"{k:>24s}  {v:.10g}" if isinstance(v, float) else f"{k:>24s}  {v}")
    if args.noise_rel == 0:
        ok = (np.isclose(rep.gain_fit_oracle, rep.gain_fit_analytic, rtol=1e-9, atol=0)
              and np.isclose(rep.n_fit_oracle, rep.n_fit_analytic, rtol=1e-9,
                             atol=1e-9 * abs(rep.n_sys_true0)))
        print(f"{'oracle_agrees':>24s}  {ok}")
        if not ok:
            log.error("OLS oracle and closed-form estimators disagree")
            return EXIT_PHYSICS
    return EXIT_OK


_STANDARDS = ("short", "open", "load", "thru")


def cmd_solr(args):
    if args.fixture:
        base = data_dir() / args.fixture
        if not base.is_dir():
            raise FileNotFoundError(f"no SOLR fixture {args.fixture!r} in {data_dir()}")
        paths = {k: base / f"{k}.s2p" for k in _STANDARDS + ("dut",)}
        meta = base / "fixture.json"
        delay = _load_json(meta).get("thru_delay_s", 0.0) if meta.exists() else 0.0
    else:
        paths = {k: getattr(args, k) for k in _STANDARDS + ("dut",)}
        missing = [k for k in _STANDARDS if paths[k] is None]
        if missing:
            raise UsageError(f"missing standard file(s): {', '.join('--' + m for m in missing)}")
        delay = 0.0
    if args.thru_delay is not None:
        delay = args.thru_delay
    nets = {k: read_touchstone(p, nports=2) for k, p in paths.items() if p is not None}
    freqs = nets["thru"].freqs
    eb = calibrate(freqs, nets["short"], nets["open"], nets["load"], nets["thru"],
                   phase_estimate=-2 * np.pi * freqs * delay)
    out = Path(args.out or ".")
    write_atomic(out / "error_boxes.json", eb.to_json(indent=1))
    if "dut" in nets:
        dut, flagged = deembed(nets["dut"].resample(freqs), eb, return_flags=True)
        write_atomic(out / "dut_corrected.s2p",
                     write_touchstone(dut, fmt="RI", unit="HZ", comment="SOLR-corrected DUT"))
        if flagged.size:
            log.warning("singular correction at %d frequencies", flagged.size)
    return EXIT_OK


def _protocol_inputs(args):
    if args.demo:
        d = _load_json(data_dir() / "demo_protocol.json")
    elif args.config:
        d = _load_json(args.config)
    else:
        raise UsageError("protocol needs --config or --demo")
    _check_keys(d, ("cryostat", "plan"), "protocol config")
    cryo = _config(CryostatConfig.from_dict, d.get("cryostat", {}))
    if args.seed is not None:
        cryo.seed = args.seed
    return cryo, _config(Plan.from_dict, d.get("plan", {}))


def _write_report(out, report, log_):
    write_atomic(out / "report.json", report.to_json(indent=1))
    write_atomic(out / "run_log.jsonl", log_.to_jsonl())


def cmd_protocol(args):
    cryo, plan = _protocol_inputs(args)
    out = Path(args.out or ".")
    run_log = RunLog()
    try:
        report, _ = simulate(cryo, plan, log=run_log)
    except QualificationError as exc:
        if getattr(exc, "report", None) is not None:
            _write_report(out, exc.report, run_log)
        raise
    _write_report(out, report, run_log)
    noise = report.added_noise
    for f, n, s in zip(noise.freqs, noise.n_add, noise.sigma_n_add):
        print(f"{f:14.6e}  N_add={n:.9f}  sigma={s:.3g}")
    return EXIT_OK


def cmd_replay(args):
    with open(args.report, encoding="utf-8") as fh:
        text = fh.read()
    try:
        report = CalibrationReport.from_json(text) if text.strip() else CalibrationReport()
    except json.JSONDecodeError as exc:
        raise TouchstoneError(f"{args.report}: invalid JSON ({exc.msg})", exc.lineno) from None
    replay(report)
    print("replay OK: derived results identical")
    return EXIT_OK


# argument parsing ---------------------------------------------------------

def build_parser():
    def shared(suppress):
        # subcommands must not reset values given before the command name
        kw = {"default": argparse.SUPPRESS} if suppress else {}
        c = argparse.ArgumentParser(add_help=False)
        c.add_argument("--out", help="output directory (default: current directory)", **kw)
        c.add_argument("--threads", type=int, help="worker threads for per-frequency fits", **kw)
        c.add_argument("-v", "--verbose", action="count", **(kw or {"default": 0}))
        return c

    common = shared(True)
    p = argparse.ArgumentParser(prog="cryonoise", parents=[shared(False)],
                                description="Noise calibration toolkit for cryogenic amplifiers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cascade", parents=[common], help="thermal occupation along an input line")
    g = c.add_mutually_exclusive_group()
    g.add_argument("--table1", action="store_true", help="use the built-in reference chain")
    g.add_argument("--config", help="chain JSON ({T0, stages: [...]})")
    c.add_argument("--freq", type=float, default=5e9, help="frequency in Hz (default 5e9)")
    c.set_defaults(func=cmd_cascade)

    c = sub.add_parser("planck-fit", parents=[common], help="fit readout gain and noise temperature")
    c.add_argument("--sweep", help="long-format sweep CSV (default: bundled fixture)")
    c.add_argument("--source", default="ideal", help="'ideal' or a .s2p file of the noise source")
    c.set_defaults(func=cmd_planck_fit)

    c = sub.add_parser("bias", parents=[common], help="serial-configuration bias analysis")
    c.add_argument("--config", help="SerialBiasConfig JSON (default: bundled reference scenario)")
    c.add_argument("--G-db", dest="G_db", type=float, default=None, help="rebuild modes for this gain")
    c.add_argument("--no-spurs", action="store_true", help="keep only signal and idler")
    c.add_argument("--eps-range", nargs=2, type=float, metavar=("LO", "HI"))
    c.add_argument("--eps-points", type=int, default=10)
    c.add_argument("--noise-rel", type=float, default=0.0)
    c.add_argument("--seed", type=int, default=None)
    c.set_defaults(func=cmd_bias)

    c = sub.add_parser("solr", parents=[common], help="two-port SOLR calibration and DUT correction")
    for k in _STANDARDS + ("dut",):
        c.add_argument(f"--{k}", help=f"raw {k} measurement (.s2p)")
    c.add_argument("--fixture", help="bundled fixture set name (e.g. solr_roundtrip)")
    c.add_argument("--thru-delay", type=float, default=None,
                   help="delay of the reciprocal standard in s, for root selection")
    c.set_defaults(func=cmd_solr)

    c = sub.add_parser("protocol", parents=[common], help="run the calibration protocol on a simulated cryostat")
    c.add_argument("--config", help="JSON with 'cryostat' and 'plan' objects")
    c.add_argument("--demo", action="store_true", help="use the bundled demo configuration")
    c.add_argument("--seed", type=int, default=None)
    c.set_defaults(func=cmd_protocol)

    c = sub.add_parser("replay", parents=[common], help="re-derive a stored report and compare")
    c.add_argument("report")
    c.set_defaults(func=cmd_replay)
    return p


_USAGE = (ConfigError, DomainError)
_DATA = (TouchstoneError, GridError, OSError)
_PHYSICS = (QualificationError, SingularError, AmbiguityError, UnderdeterminedError, ReplayError)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except _PHYSICS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except _USAGE as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    log.info("%s finished in %.3f s", args.command, time.perf_counter() - t0)
    return code


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
