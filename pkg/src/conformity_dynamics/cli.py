"""Command-line front end.

Commands::

    conformity-dynamics run --config CFG [--out DIR] [--strict]
    conformity-dynamics check-gains --config CFG
    conformity-dynamics sweep --config CFG [--out DIR] [--resume] [--threads N] [--strict]

Exit codes: 0 success, 1 failed certificate under ``--strict``, 2 invalid
config, 3 aborted run (invariant breach during integration).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import ConfigError, load_config
from .mechanisms import check_gain_condition
from .monitor import certify_all
from .output import write_json, write_trajectory_csv
from .sim import AbortedRun, detect_convergence, run

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CERT, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

SWEEP_COLUMNS = ["kappa", "status", "converged", "convergence_time", "condition_met",
                 "lyapunov_worst_violation", "certificates_passed", "final_distance", "reason"]


def _select(reports, selection):
    if selection == "auto":
        return reports
    return {k: reports[k] for k in selection if k in reports}


def _lyapunov_name(reports):
    return next((k for k in ("V1", "V2") if k in reports), None)


def execute(cfg, scenario, out_dir):
    """Run one scenario and write its artifacts into ``out_dir``.

    Returns the summary dictionary.  An aborted run still writes the partial
    trajectory and a summary with ``status = "aborted"``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    summary = {"kappa": scenario.mechanism.kappa if scenario.mechanism else None}
    try:
        traj = run(scenario)
    except AbortedRun as exc:
        write_trajectory_csv(exc.trajectory, out_dir / "trajectory.csv")
        write_json({}, out_dir / "certificates.json")
        summary.update(status="aborted", reason=exc.reason,
                       aborted_at=float(exc.trajectory.t[-1]) if len(exc.trajectory) else 0.0,
                       certificates_passed=None, converged=False)
        write_json(summary, out_dir / "summary.json")
        return summary
    write_trajectory_csv(traj, out_dir / "trajectory.csv")
    reports = _select(certify_all(traj), cfg.certificates) if len(traj) >= 5 else {}
    write_json({k: r.to_dict() for k, r in reports.items()}, out_dir / "certificates.json")
    converged, when = (detect_convergence(traj, cfg.epsilon, cfg.window)
                       if scenario.pi_star is not None else (None, None))
    lyap = reports.get(_lyapunov_name(reports))
    summary.update(
        status="complete",
        rows=len(traj),
        n=scenario.n,
        model=scenario.model,
        storage=traj.storage_name,
        converged=converged,
        convergence_time=when,
        final_state=traj.pi[-1],
        final_distance=float(traj.distance_to_target()[-1]) if scenario.pi_star is not None else None,
        certificates_passed=all(r.passed for r in reports.values()),
        failed_certificates=[k for k, r in reports.items() if not r.passed],
        condition_met=None if lyap is None else lyap.condition_met,
        lyapunov_worst_violation=None if lyap is None else lyap.worst_violation,
        switch_samples=int(traj.switch.any(axis=1).sum()),
        clamp_samples=int(traj.clamp.any(axis=1).sum()),
        notes=traj.notes,
        seconds=time.perf_counter() - started,
    )
    write_json(summary, out_dir / "summary.json")
    return summary


def _load(args):
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else cfg.base_dir / cfg.output_dir
    return cfg, out


def cmd_run(args):
    cfg, out = _load(args)
    summary = execute(cfg, cfg.scenario, out)
    write_json(cfg.to_dict(), out / "config.json")
    if summary["status"] == "aborted":
        print(f"run aborted: {summary['reason']}", file=sys.stderr)
        return EXIT_ABORT
    for name in summary["failed_certificates"]:
        print(f"certificate {name}: fail")
    print(f"wrote {out}")
    if args.strict and not summary["certificates_passed"]:
        return EXIT_CERT
    return EXIT_OK


def cmd_check_gains(args):
    cfg, _ = _load(args)
    theorem = cfg.theorem
    if theorem is None:
        raise ConfigError(
            f"no gain condition for model '{cfg.data['model']['kind']}' with mechanism "
            f"'{cfg.data['mechanism']['kind']}'; pair additive with pi or "
            "multiplicative with saturated")
    sc = cfg.scenario
    verdict = check_gain_condition(theorem, sc.bias, sc.mechanism)
    kappa = sc.mechanism.kappa
    if theorem == 1:
        print(f"condition: kappa > c_high   (kappa={kappa:.6g}, c_high={sc.bias.c_high:.6g})")
    else:
        print(f"condition: kappa w_low > 2 v_high (t_bar + kappa)   (kappa={kappa:.6g}, "
              f"w_low={sc.bias.w_low:.6g}, v_high={sc.bias.v_high:.6g}, "
              f"t_bar={sc.mechanism.t_bar:.6g})")
        if verdict.feasible:
            print(f"feasible: yes, smallest kappa = {verdict.min_kappa:.6g}")
        else:
            print("feasible: no, w_low <= 2 v_high")
    print(f"threshold={verdict.threshold:.6g}")
    print(verdict.describe())
    return EXIT_OK


def _row(summary):
    status = summary["status"]
    return {
        "kappa": format(summary["kappa"], ".17g"),
        "status": status,
        "converged": summary.get("converged"),
        "convergence_time": summary.get("convergence_time"),
        "condition_met": summary.get("condition_met"),
        "lyapunov_worst_violation": summary.get("lyapunov_worst_violation"),
        "certificates_passed": summary.get("certificates_passed"),
        "final_distance": summary.get("final_distance"),
        "reason": summary.get("reason", ""),
    }


def _kappa_dir(out, kappa):
    return out / f"kappa_{format(kappa, '.6g')}"


def cmd_sweep(args):
    cfg, out = _load(args)
    kappas = cfg.sweep_kappas
    if not kappas:
        raise ConfigError("sweep command needs a 'sweep' entry with kappa values")
    out.mkdir(parents=True, exist_ok=True)
    write_json(cfg.to_dict(), out / "config.json")

    def one(kappa):
        target = _kappa_dir(out, kappa)
        done = target / "summary.json"
        if args.resume and done.exists():
            previous = json.loads(done.read_text())
            if previous.get("status") == "complete":
                log.info("kappa=%g already done, skipping", kappa)
                return previous
        try:
            scenario = cfg.scenario.with_kappa(kappa)
        except ValueError as exc:
            target.mkdir(parents=True, exist_ok=True)
            summary = {"kappa": kappa, "status": "aborted", "reason": str(exc)}
            write_json(summary, done)
            return summary
        return execute(cfg, scenario, target)

    threads = max(1, args.threads)
    if threads == 1:
        summaries = [one(k) for k in kappas]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            summaries = list(pool.map(one, kappas))

    with open(out / "sweep_summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for s in summaries:
            writer.writerow(_row(s))
    aborted = [s for s in summaries if s["status"] == "aborted"]
    print(f"wrote {len(summaries)} rows to {out / 'sweep_summary.csv'}")
    if aborted:
        for s in aborted:
            print(f"kappa={s['kappa']:g} aborted: {s['reason']}", file=sys.stderr)
        return EXIT_ABORT
    if args.strict and not all(s["certificates_passed"] for s in summaries):
        return EXIT_CERT
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="conformity-dynamics",
        description="Simulate biased logit dynamics under inducement mechanisms and "
                    "certify the passivity inequalities along each trajectory.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, metavar="PATH", help="JSON experiment config")
        return p

    p = common(sub.add_parser("run", help="integrate one scenario and certify it"))
    p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    p.add_argument("--strict", action="store_true", help="exit 1 if any certificate fails")
    p.set_defaults(func=cmd_run)

    p = common(sub.add_parser("check-gains", help="evaluate the gain condition without simulating"))
    p.set_defaults(func=cmd_check_gains, out=None)

    p = common(sub.add_parser("sweep", help="run the scenario for each kappa in the sweep"))
    p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    p.add_argument("--strict", action="store_true", help="exit 1 if any certificate fails")
    p.add_argument("--resume", action="store_true",
                   help="skip kappa values whose run already completed")
    p.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
