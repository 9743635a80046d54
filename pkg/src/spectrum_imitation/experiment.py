"""Experiment orchestration and CSV emission.

Every file written here has a fixed header, listed in ``SCHEMAS``.
"""

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from itertools import product
from pathlib import Path

import numpy as np

from . import meanfield as mf
from .analysis import check_imitation_equilibrium, metrics_report
from .engine import convergence_period, run_simulation, window_change
from .graph import build_cluster_graph
from .scenario import build

SCHEMAS = {
    "trace.csv": ("period", "user", "channel", "estimate", "realized", "expected", "switched"),
    "users.csv": ("user", "channel", "realized_avg", "expected_avg"),
    "occupancy.csv": ("period", "channel", "count", "fraction"),
    "metrics.csv": ("seed", "mode", "delay", "periods", "n_users", "n_channels", "system_throughput", "jain",
                    "utilized_channels", "optimum", "optimum_exact", "poi", "poi_bound", "converged_period",
                    "window_change", "equilibrium_passed", "equilibrium_residual"),
    "meanfield.csv": ("period", "cluster", "channel", "fraction", "U"),
    "metadata.csv": ("key", "value"),
}

SWEEP_COLUMNS = ("n_users_param", "delay_param", "seed_param") + SCHEMAS["metrics.csv"]


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return "nan" if np.isnan(x) else format(float(x), ".10g")
    if x is None:
        return ""
    return str(x)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _check_writable(out_dir):
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK | os.X_OK):
        raise OSError(f"output directory {out} is not writable")
    return out


def _trace_rows(trace):
    T, N = trace.choices.shape
    for t in range(T):
        for n in range(N):
            yield (t, n, int(trace.choices[t, n]), trace.estimates[t, n], trace.realized[t, n],
                   trace.expected[t, n], bool(trace.switched[t, n]))


def _occupancy_rows(trace):
    frac = trace.occupancy_fractions()
    T, M = trace.occupancy.shape
    for t in range(T):
        for m in range(M):
            yield t, m, int(trace.occupancy[t, m]), frac[t, m]


def meanfield_trajectory(built, periods):
    """Cluster-level deterministic trajectory for a homogeneous scenario, from uniform X(0)."""
    s, sysm = built.scenario, built.system
    cg = build_cluster_graph(built.graph)
    model = mf.MeanFieldModel.from_cluster_graph(cg, sysm.theta, np.asarray(s.rate), s.lambda_max)
    Q = mf.noise_diff_cdf(sysm.noise)
    traj = mf.run_trajectory(model.uniform_state(), model, Q, periods)
    return traj, model


def run_experiment(scenario, out_dir):
    """Run one scenario and write its CSV outputs; returns the metrics row as a dict."""
    out = _check_writable(out_dir)
    s = scenario
    built = build(s)
    trace = run_simulation(built.system, s.engine_config(), seed=s.seed)
    start = trace.scan_periods
    W = min(s.window, trace.periods - start)

    realized_avg = trace.time_average_throughput(start=start)
    expected_avg = trace.time_average_throughput(start=start, expected=True)
    modal = trace.modal_choices(W)
    fracs = trace.occupancy_fractions()[start:]
    occupancy = trace.final_window_occupancy(W) * s.count
    # a channel counts as utilized when it holds at least one user on average
    utilized = int(np.count_nonzero(occupancy >= 1.0))

    theta = built.system.theta
    het = s.mode == "het" or s.heterogeneous > 0 or s.rate_file is not None
    rng = np.random.default_rng([s.seed, 104729])
    report = metrics_report(realized_avg, theta, np.asarray(s.rate), s.lambda_max, utilized,
                            rate_table=built.rates if het else None, rng=rng)
    eq = check_imitation_equilibrium(modal, built.system.neighborhoods, theta, built.rates, s.lambda_max,
                                     epsilon=s.epsilon * float(expected_avg.mean()), occupancy=occupancy)
    conv = convergence_period(fracs, W, s.threshold)
    row = dict(seed=s.seed, mode=s.mode, delay=s.delay, periods=s.periods, **report.row(),
               converged_period=None if conv is None else conv + start,
               window_change=window_change(fracs, W), equilibrium_passed=eq.passed,
               equilibrium_residual=eq.residual)

    _write(out / "trace.csv", SCHEMAS["trace.csv"], _trace_rows(trace))
    _write(out / "users.csv", SCHEMAS["users.csv"],
           ((n, int(modal[n]), realized_avg[n], expected_avg[n]) for n in range(s.count)))
    _write(out / "occupancy.csv", SCHEMAS["occupancy.csv"], _occupancy_rows(trace))
    _write(out / "metrics.csv", SCHEMAS["metrics.csv"], [[row[k] for k in SCHEMAS["metrics.csv"]]])

    meta = dict(built.metadata)
    if s.meanfield:
        traj, model = meanfield_trajectory(built, s.periods)
        meta["clusters"] = model.n_clusters
        _write(out / "meanfield.csv", SCHEMAS["meanfield.csv"],
               ((t, k, m, traj[t, k, m], U[m])
                for t in range(len(traj)) for U in [mf.throughputs(traj[t], model)]
                for k in range(model.n_clusters) for m in range(model.n_channels)))
    _write(out / "metadata.csv", SCHEMAS["metadata.csv"], sorted(meta.items()))
    return row


def _sweep_point(args):
    scenario, out_dir, point = args
    row = run_experiment(scenario, out_dir)
    return point + tuple(row[k] for k in SCHEMAS["metrics.csv"])


def sweep(scenario, out_dir, users=None, delays=None, seeds=None, workers=None):
    """Grid over user counts, delays and seeds; points run in parallel and
    each writes its own subdirectory. ``sweep.csv`` aggregates the metrics rows."""
    out = _check_writable(out_dir)
    users = users or [scenario.count]
    delays = delays or [scenario.delay]
    seeds = seeds or [scenario.seed]
    if len(users) > 1 and scenario.source == "topology":
        raise ValueError("user-count sweeps need a geometric, complete or file graph source")
    jobs = []
    for n, d, sd in product(users, delays, seeds):
        point = replace(scenario, count=n, delay=d, seed=sd)
        jobs.append((point, out / f"n{n}_d{d}_s{sd}", (n, d, sd)))
    if workers == 1:
        rows = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    _write(out / "sweep.csv", SWEEP_COLUMNS, rows)
    return rows
