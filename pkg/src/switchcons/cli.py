"""Command-line interface: ``switchcons {validate,delta,synth,simulate,repro-example}``.

Exit codes: 0 success, 1 validation or certification failure, 2 I/O or
parse error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import ScenarioError, SwitchconsError
from .netgraph import validate_schedule
from .report import (
    PlotOptions,
    component_series,
    error_norm_series,
    fit_decay_rate,
    render_svg,
    write_csv,
)
from .scenario import bundled_path, load_scenario
from .spectral import delta as compute_delta
from .spectral import lambda_H, window_product_norms
from .switchsim import integrate_rk4, max_normalized_deviation, propagate_exact
from .synthesis import check_solvable, decay_certificate, instability_margin

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_IO = 2

# Reference instability budget for the bundled third-order example.
EXAMPLE_DELTA = 0.863
CROSS_CHECK_STEP = 1e-4
CROSS_CHECK_HORIZON = 2.0


class _Failure(Exception):
    """Ends a command with exit status 1 after its output has been printed."""


def _fmt(x, digits=6):
    return "inf" if math.isinf(x) else f"{x:.{digits}g}"


def _stem(sf):
    return Path(sf.source).stem if sf.source else "scenario"


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_validate(path, args, out):
    sf = load_scenario(path)
    report = validate_schedule(sf.schedule)
    print(f"scenario: {sf.name}", file=out)
    print(report.summary(), file=out)
    ok = report.valid
    n = sf.plant.n
    if sf.mode in ("consensus", "both"):
        rank = sf.plant.controllability_rank()
        verdict = "ok" if rank == n else f"rank deficit {n - rank}"
        print(f"controllability matrix rank {rank}/{n}: {verdict}", file=out)
        ok &= rank == n
    if sf.mode in ("observer", "both"):
        rank = sf.plant.observability_rank()
        verdict = "ok" if rank == n else f"rank deficit {n - rank}"
        print(f"observability matrix rank {rank}/{n}: {verdict}", file=out)
        ok &= rank == n
    print("VALID" if ok else "INVALID", file=out)
    return EXIT_OK if ok else EXIT_FAIL


def run_delta(path, args, out):
    sf = load_scenario(path)
    d = compute_delta(sf.schedule)
    T_c = sf.schedule.T_c
    for k, norm in enumerate(window_product_norms(sf.schedule)):
        print(f"window {k}: ||P_last ... P_first|| = {norm:.6g}", file=out)
    print(f"delta = {d:.6g}", file=out)
    print(f"margin -ln(delta)/T_c = {_fmt(instability_margin(d, T_c))} (T_c = {T_c:.6g})", file=out)
    print(check_solvable(sf.plant.A, d, T_c).summary(), file=out)
    return EXIT_OK


def _synthesize(sf, out):
    d = compute_delta(sf.schedule)
    check = check_solvable(sf.plant.A, d, sf.schedule.T_c)
    print(check.summary(), file=out)
    if not check.solvable:
        raise _Failure()
    design = sf.design()
    print(
        f"mu = {design.mu:.6g} (1/lambda_H({sf.n_followers}) = {1.0 / lambda_H(sf.n_followers):.6g}"
        f"{', aggressive floor' if sf.aggressive else ''})",
        file=out,
    )
    if design.K is not None:
        print(f"K = {np.array2string(design.K, precision=6)}", file=out)
    if design.L is not None:
        print(f"L^T = {np.array2string(design.L.T, precision=6)}", file=out)
    certs = {}
    for mode in sf.sim_modes:
        cert = decay_certificate(
            sf.plant,
            design,
            d,
            sf.schedule.T_c,
            sf.schedule.dwell_floor,
            mode=mode,
            n_followers=sf.n_followers,
        )
        print(cert.summary(), file=out)
        certs[mode] = cert
    return d, check, design, certs


def run_synth(path, args, out):
    sf = load_scenario(path)
    d, check, design, certs = _synthesize(sf, out)
    doc = {
        "scenario": sf.name,
        "delta": d,
        "lambda_max": check.lambda_max,
        "margin": "inf" if math.isinf(check.margin) else check.margin,
        "verdict": check.verdict,
        "design": design.to_dict(),
        "certificates": {m: c.to_dict() for m, c in certs.items()},
    }
    dest = _out_dir(args) / f"{_stem(sf)}.synth.json"
    dest.write_text(json.dumps(doc, indent=2) + "\n")
    print(f"wrote {dest}", file=out)
    if args.strict and not all(c.certified for c in certs.values()):
        print("strict: certificate not established", file=out)
        return EXIT_FAIL
    return EXIT_OK


def run_simulate(path, args, out):
    sf = load_scenario(path)
    d, check, design, certs = _synthesize(sf, out)
    out_dir = _out_dir(args)
    stem = _stem(sf)
    for mode in sf.sim_modes:
        traj = propagate_exact(sf.scenario(design, mode))
        csv_path = out_dir / f"{stem}_{mode}.csv"
        write_csv(traj, csv_path)
        cert = certs[mode]
        envelope = cert.envelope(traj.times) * traj.error_norms[0] if cert.certified else None
        svg_path = out_dir / f"{stem}_{mode}_error.svg"
        render_svg(
            error_norm_series(traj, envelope),
            svg_path,
            PlotOptions(title=f"{sf.name}: {mode} error", ylabel="||error||", log_y=True),
        )
        fit = fit_decay_rate(traj, 2 * sf.schedule.T_c)
        print(f"[{mode}] {fit.summary()}", file=out)
        if cert.certified:
            print(f"[{mode}] certified rate varrho = {cert.varrho:.6g}", file=out)
        print(f"[{mode}] wrote {csv_path} and {svg_path}", file=out)
        if args.cross_check:
            short = sf.scenario(
                design, mode, horizon=min(CROSS_CHECK_HORIZON, sf.horizon), sample_step=CROSS_CHECK_STEP
            )
            dev = max_normalized_deviation(propagate_exact(short), integrate_rk4(short))
            print(f"[{mode}] cross-check: max exact-vs-rk4 deviation {dev:.3e}", file=out)
    return EXIT_OK


def run_repro(args, out):
    sf = load_scenario(bundled_path("standin8"))
    A = sf.plant.A
    eig = np.linalg.eigvals(A)
    eig = eig[np.lexsort((eig.imag, eig.real))]
    print("eigenvalues of A: " + ", ".join(f"{z.real:.3g}{z.imag:+.3g}j" for z in eig), file=out)
    print(
        f"controllability rank {sf.plant.controllability_rank()}, "
        f"observability rank {sf.plant.observability_rank()}",
        file=out,
    )
    print(
        f"with delta = {EXAMPLE_DELTA}, T_c = 0.1: "
        + check_solvable(A, EXAMPLE_DELTA, 0.1).summary(),
        file=out,
    )
    print(f"stand-in network: delta = {compute_delta(sf.schedule):.6g}", file=out)
    _, _, design, _ = _synthesize(sf, out)
    out_dir = _out_dir(args)
    labels = {"consensus": ("follower", "x"), "observer": ("observer", "eta")}
    for mode in ("consensus", "observer"):
        traj = propagate_exact(sf.scenario(design, mode))
        write_csv(traj, out_dir / f"repro_{mode}.csv")
        fit = fit_decay_rate(traj, 0.5)
        ratio = traj.error_norms[-1] / traj.error_norms[0]
        print(f"[{mode}] {fit.summary()}; ||error(T)||/||error(0)|| = {ratio:.3e}", file=out)
        agent, sym = labels[mode]
        for c in range(A.shape[0]):
            dest = out_dir / f"repro_{mode}_component{c + 1}.svg"
            render_svg(
                component_series(traj, c, agent_label=agent),
                dest,
                PlotOptions(title=f"{mode}: component {c + 1}", ylabel=f"{sym}_i{c + 1}(t)"),
            )
            print(f"wrote {dest}", file=out)
    leader = np.linalg.norm(traj.leader_states, axis=1)
    print(f"open-loop leader norm grew by a factor {leader[-1] / leader[0]:.3g}", file=out)
    return EXIT_OK


COMMANDS = {
    "validate": run_validate,
    "delta": run_delta,
    "synth": run_synth,
    "simulate": run_simulate,
}


def _guarded(fn, *fargs):
    """Run a command, capturing output and mapping exceptions to exit codes."""
    buf = io.StringIO()
    try:
        code = fn(*fargs, buf)
    except _Failure:
        code = EXIT_FAIL
    except ScenarioError as exc:
        print(f"error: {exc}", file=buf)
        code = EXIT_IO
    except SwitchconsError as exc:
        print(f"error: {exc}", file=buf)
        code = EXIT_FAIL
    except OSError as exc:
        print(f"error: {exc}", file=buf)
        code = EXIT_IO
    return code, buf.getvalue()


def _run_one(job):
    command, path, args = job
    return _guarded(COMMANDS[command], path, args)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--strict", action="store_true", help="exit 1 when a certificate fails")
    common.add_argument(
        "--cross-check", action="store_true", help="compare exact propagation with RK4"
    )
    common.add_argument("--jobs", type=int, default=1, help="scenario files processed in parallel")

    parser = argparse.ArgumentParser(
        prog="switchcons",
        description="Leader-following consensus over jointly connected switching networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "validate": "check schedule connectivity, dwell time and plant rank conditions",
        "delta": "print the instability budget delta and the margin -ln(delta)/T_c",
        "synth": "design gains and write the convergence certificate as JSON",
        "simulate": "simulate the closed loop and write CSV, SVG and the fitted rate",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("scenarios", nargs="+", metavar="SCENARIO", help="scenario JSON file(s)")
    sub.add_parser(
        "repro-example", parents=[common], help="run the bundled third-order example end to end"
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "repro-example":
        code, text = _guarded(run_repro, args)
        sys.stdout.write(text)
        return code
    jobs = [(args.command, path, args) for path in args.scenarios]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    for (_, path, _), (_, text) in zip(jobs, results):
        if len(jobs) > 1:
            sys.stdout.write(f"== {path}\n")
        sys.stdout.write(text)
    return max(code for code, _ in results)


if __name__ == "__main__":
    sys.exit(main())
