"""Batch command-line front end.

Subcommands:
    run       integrate a scenario and write trajectory CSV + metrics JSON
    validate  run all load-time checks and report
    spectrum  print the closed-loop eigenvalues and spectral abscissa
    localize  print the localized follower target positions

Exit codes: 0 success, 2 validation/parse failure, 3 collision,
4 non-finite divergence, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .errors import (
    CollisionDetected,
    NonFiniteState,
    ParseError,
    ValidationError,
)
from .scenario import load_scenario
from .sim_engine import (
    assemble_A_sigma,
    build_certificate,
    integrate,
    lyapunov_monitor,
    metrics,
    spectral_abscissa,
    stack_follower_blocks,
    xi_oracle,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_COLLISION = 3
EXIT_NONFINITE = 4
EXIT_IO = 5


def _fmt(x):
    return format(float(x), ".17g")


def write_trajectory_csv(path, traj, sc, mts, V=None):
    """Trajectory CSV: t, per-agent p/v, per-follower and global error norms,
    min pairwise distance, V (blank outside adaptive monitoring)."""
    n, d, n_l = sc.n, sc.d, sc.n_l
    header = ["t"]
    for i in range(1, n + 1):
        header += [f"p_{i}_{a}" for a in range(d)]
    for i in range(1, n + 1):
        header += [f"v_{i}_{a}" for a in range(d)]
    for i in range(n_l + 1, n + 1):
        header.append(f"err_p_norm_{i}")
    header += ["err_p_norm", "err_v_norm", "min_dist", "V"]

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s, t in enumerate(traj.times):
            row = [_fmt(t)]
            row += [_fmt(x) for x in traj.positions[s].ravel()]
            row += [_fmt(x) for x in traj.velocities[s].ravel()]
            row += [_fmt(x) for x in mts["err_p"][s]]
            row += [
                _fmt(mts["err_p_norm"][s]),
                _fmt(mts["err_v_norm"][s]),
                _fmt(traj.min_dist[s]),
            ]
            row.append(_fmt(V[s]) if V is not None else "")
            writer.writerow(row)


def oracle_report(sc, traj):
    """Proof-level diagnostics: closed-loop spectrum, xi deviation, and (in
    adaptive mode) the Lyapunov certificate and monotonicity verdict."""
    A = assemble_A_sigma(sc.laplacian.B_ff, sc.models, sc.d, sc.gains)
    report = {
        "spectral_abscissa": spectral_abscissa(A),
        "xi_max_deviation": float(xi_oracle(traj, sc)),
    }
    if sc.mode == "adaptive":
        M_f, E_f = stack_follower_blocks(sc.models, sc.d)
        cert = build_certificate(sc.laplacian.B_ff, sc.gains, M_f, E_f)
        V = lyapunov_monitor(traj, cert, sc)
        slack = 1e-8 * (1.0 + V[:-1])
        report["lyapunov"] = {
            "gamma": cert.gamma,
            "gamma_sigma": cert.gamma_sigma,
            "lambda_min_Qc": float(np.linalg.eigvalsh(cert.Q_c)[0]),
            "V_initial": float(V[0]),
            "V_terminal": float(V[-1]),
            "non_increasing": bool(np.all(np.diff(V) <= slack)),
        }
    return report


def cmd_run(args):
    overrides = _overrides(args)
    sc = load_scenario(args.scenario, overrides)
    traj = integrate(sc)
    mts = metrics(traj, sc)

    V = None
    report = None
    if args.oracles or sc.oracles:
        report = oracle_report(sc, traj)
        if sc.mode == "adaptive":
            M_f, E_f = stack_follower_blocks(sc.models, sc.d)
            cert = build_certificate(sc.laplacian.B_ff, sc.gains, M_f, E_f)
            V = lyapunov_monitor(traj, cert, sc)

    out_dir = sc.output_dir
    os.makedirs(out_dir, exist_ok=True)
    write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), traj, sc, mts, V)
    summary = {
        "mode": sc.mode,
        "t_final": sc.t_final,
        "step": sc.h,
        "terminal_err_p": mts["terminal_err_p"],
        "terminal_err_v": mts["terminal_err_v"],
        "decay_rate": mts["decay_rate"],
        "min_distance": mts["min_distance"],
    }
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    if report is not None:
        with open(os.path.join(out_dir, "oracles.json"), "w") as fh:
            json.dump(report, fh, indent=2)

    print(
        f"run ok: terminal err_p={mts['terminal_err_p']:.3e} "
        f"err_v={mts['terminal_err_v']:.3e} min_dist={mts['min_distance']:.3e}"
    )
    return EXIT_OK


def cmd_validate(args):
    sc = load_scenario(args.scenario, _overrides(args))
    print(
        f"valid: n={sc.n} d={sc.d} n_l={sc.n_l} mode={sc.mode} "
        f"lambda_min(B_ff)={np.linalg.eigvalsh(sc.laplacian.B_ff)[0]:.6g}"
    )
    return EXIT_OK


def cmd_spectrum(args):
    sc = load_scenario(args.scenario, _overrides(args))
    A = assemble_A_sigma(sc.laplacian.B_ff, sc.models, sc.d, sc.gains)
    eig = np.sort_complex(np.linalg.eigvals(A))
    for lam in eig:
        print(f"{lam.real:+.12e} {lam.imag:+.12e}j")
    print(f"spectral abscissa: {spectral_abscissa(A):.12e}")
    return EXIT_OK


def cmd_localize(args):
    sc = load_scenario(args.scenario, _overrides(args))
    for idx, i in enumerate(range(sc.n_l + 1, sc.n + 1)):
        coords = " ".join(_fmt(x) for x in sc.p_star0[sc.n_l + idx])
        print(f"agent {i}: {coords}")
    return EXIT_OK


def _overrides(args):
    return {
        "kappa_p": getattr(args, "kappa_p", None),
        "kappa_v": getattr(args, "kappa_v", None),
        "t_final": getattr(args, "t_final", None),
        "h": getattr(args, "h", None),
        "mode": getattr(args, "mode", None),
        "output_dir": getattr(args, "out", None),
    }


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bearing-forge",
        description="Bearing-based formation control with disturbance rejection",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("run", cmd_run),
        ("validate", cmd_validate),
        ("spectrum", cmd_spectrum),
        ("localize", cmd_localize),
    ):
        p = sub.add_parser(name)
        p.add_argument("scenario", help="path to a scenario JSON file")
        p.add_argument("--kappa-p", dest="kappa_p", type=float)
        p.add_argument("--kappa-v", dest="kappa_v", type=float)
        p.add_argument("--t-final", dest="t_final", type=float)
        p.add_argument("--h", dest="h", type=float)
        p.add_argument("--mode", choices=("known", "adaptive", "feedback_only"))
        p.add_argument("--out", help="output directory override")
        p.add_argument("--oracles", action="store_true")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CollisionDetected as exc:
        print(f"collision: {exc}", file=sys.stderr)
        return EXIT_COLLISION
    except NonFiniteState as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
