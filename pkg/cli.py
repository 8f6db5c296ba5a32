# cli.py
"""
Command-line entry point: one subcommand per experiment kind, each writing CSVs
and a metadata.json into the output directory.

    python cli.py sweep --config sweep.json --workers 4 --set r=1e-3

Exit codes: 0 success, 1 usage or config error, 2 numerical failure,
3 counterexample found (verify only).
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from config import DEFAULT_OUT_DIR, DEFAULT_WORKERS, KINDS, LOG_LEVEL, ConfigError, ExperimentConfig, load_config
from conjecture import run_suite
from dynamics import EpidemicParams, NumericalError, integrate, rescale, uniform_state
from runner import build_ensemble, build_graph, build_sequence, run_calibration, run_sweep, worker_map
from stochastic import ensemble_prevalence, markov_state, static_network
from temporal import constant_interval_network, integrate_temporal, quenched_predict
from transition import (
    CALIBRATION_COLUMNS,
    SWEEP_COLUMNS,
    calibration_failures,
    combined_upper_bound_sequence,
    lower_bound_decay_sequence,
    mean_log_t_bar_by_family,
    r0_bin_spread,
    threshold_asymptote_check,
)
from utils.csv_io import (
    write_ensemble_csv,
    write_metadata,
    write_prediction_csv,
    write_rows_csv,
    write_trajectory_csv,
)
from utils.notifier import notify_counterexample, write_counterexample_bundle

__version__ = "0.1.0"

log = logging.getLogger("sis-transition.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

COUNTEREXAMPLE_FLAGS = ("L_D_violation", "L_G_violation", "T_hat_violation", "subcritical_decay_violation",
                        "supercritical_decay_violation")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for numerical failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -------------------------
# Helpers
# -------------------------
def _rates(cfg: ExperimentConfig):
    """Rescaled rates (delta = 1) and the time scale delta."""
    return rescale(EpidemicParams(beta=cfg.beta, delta=cfg.delta))


def _metadata(cfg: ExperimentConfig, scale: float, **extra) -> Dict[str, Any]:
    meta = {
        "kind": cfg.kind,
        "config": cfg.dict(),
        "time_unit": "1/delta",
        "delta": scale,
        "tau": cfg.beta / cfg.delta,
        "version": __version__,
    }
    meta.update(extra)
    return meta


def _single_graph(cfg: ExperimentConfig):
    if cfg.graph is None:
        raise ConfigError(f"{cfg.kind}: config needs a 'graph'")
    return build_graph(cfg.graph, cfg.seed)


def _sequence(cfg: ExperimentConfig):
    if cfg.graphs is None:
        raise ConfigError(f"{cfg.kind}: config needs 'graphs'")
    return build_sequence(cfg.graphs, cfg.seed)


def _ensemble(cfg: ExperimentConfig):
    if cfg.ensemble is not None:
        return build_ensemble(cfg.ensemble, cfg.seed)
    if cfg.graph is not None:
        return build_ensemble(cfg.graph, cfg.seed)
    raise ConfigError(f"{cfg.kind}: config needs an 'ensemble' or a 'graph'")


def _resolve_delta_t(cfg: ExperimentConfig, graphs, tau: float) -> float:
    if not isinstance(cfg.delta_t, str):
        return float(cfg.delta_t)
    if cfg.delta_t == "upper_bound":
        dt = combined_upper_bound_sequence(graphs, tau, cfg.r)
    else:
        dt = lower_bound_decay_sequence(graphs, tau, cfg.r)
    if dt < cfg.h:
        log.warning("delta_t from %s is %.3g, below one step; using h=%g", cfg.delta_t, dt, cfg.h)
        dt = cfg.h
    log.info("delta_t = %s = %.6g", cfg.delta_t, dt)
    return dt


# -------------------------
# Subcommands
# -------------------------
def cmd_simulate(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    scaled, scale = _rates(cfg)
    g = _single_graph(cfg)
    traj = integrate(g, scaled, uniform_state(g.n, cfg.y0), cfg.t_end, cfg.h)
    path = write_trajectory_csv(traj, out / "trajectory.csv")
    write_metadata(_metadata(cfg, scale, n=g.n, max_clamp=traj.max_clamp, valid=traj.valid), out / "metadata.json")
    log.info("trajectory written to %s", path)
    return EXIT_OK


def cmd_temporal(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    scaled, scale = _rates(cfg)
    graphs = _sequence(cfg)
    dt = _resolve_delta_t(cfg, graphs, scaled.tau)
    tn = constant_interval_network(graphs, dt)
    _, snap_error = tn.boundary_steps(cfg.h)
    traj = integrate_temporal(tn, scaled, uniform_state(tn.n, cfg.y0), cfg.h)
    path = write_trajectory_csv(traj, out / "trajectory.csv")
    write_metadata(
        _metadata(cfg, scale, n=tn.n, M=tn.M, delta_t=dt, snap_error=snap_error, max_clamp=traj.max_clamp),
        out / "metadata.json",
    )
    log.info("temporal trajectory over %d graphs written to %s", tn.M, path)
    return EXIT_OK


def cmd_predict(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    scaled, scale = _rates(cfg)
    graphs = _sequence(cfg)
    dt = _resolve_delta_t(cfg, graphs, scaled.tau)
    tn = constant_interval_network(graphs, dt)
    with worker_map(workers) as mapper:
        report = quenched_predict(tn, scaled, cfg.r, cfg.h, uniform_state(tn.n, cfg.y0), mapper)
    path = write_prediction_csv(report, out / "prediction.csv")
    write_metadata(
        _metadata(
            cfg, scale, n=tn.n, M=tn.M, delta_t=dt, snap_error=report.snap_error,
            max_error=report.max_error(), interval_end_errors=report.interval_end_errors().tolist(),
            die_outs=report.die_outs,
        ),
        out / "metadata.json",
    )
    log.info("prediction written to %s (max error %.3e, %d die-outs)", path, report.max_error(), report.die_outs)
    return EXIT_OK


def cmd_markov(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    scaled, scale = _rates(cfg)
    extra: Dict[str, Any] = {"runs": cfg.runs}
    if cfg.graphs is not None:
        graphs = _sequence(cfg)
        dt = _resolve_delta_t(cfg, graphs, scaled.tau)
        tn = constant_interval_network(graphs, dt)
        nimfa = integrate_temporal(tn, scaled, uniform_state(tn.n, cfg.y0), cfg.h)
        # both outputs cover the sequence, t_0 .. t_M
        t_end = float(tn.update_times[-1])
        if "t_end" in cfg.__fields_set__ and cfg.t_end != t_end:
            log.warning("t_end=%g ignored: the graph sequence ends at %g", cfg.t_end, t_end)
        extra.update(M=tn.M, delta_t=dt)
    else:
        g = _single_graph(cfg)
        t_end = cfg.t_end
        tn = static_network(g, t_end)
        nimfa = integrate(g, scaled, uniform_state(g.n, cfg.y0), t_end, cfg.h)
    # the first round(y0 * N) nodes start infected
    x0 = markov_state(tn.n, range(int(round(cfg.y0 * tn.n))))

    with worker_map(workers) as mapper:
        result = ensemble_prevalence(tn, scaled.beta, scaled.delta, x0, t_end, cfg.runs, cfg.seed, cfg.grid_step, mapper)
    write_ensemble_csv(result, out / "ensemble.csv")
    write_trajectory_csv(nimfa, out / "nimfa.csv")
    extinct = np.flatnonzero(result.survivors == 0)
    extra["all_extinct_from"] = float(result.times[extinct[0]]) if extinct.size else None
    write_metadata(_metadata(cfg, scale, n=tn.n, t_end=t_end, **extra), out / "metadata.json")
    log.info("ensemble of %d runs written to %s", cfg.runs, out / "ensemble.csv")
    return EXIT_OK


def _sweep_bounds(cfg, labeled, tau, out, mapper) -> Dict[str, Any]:
    reports = run_sweep(labeled, tau, cfg.r, cfg.h, cfg.t_max, cfg.r_star, cfg.spot_checks, mapper)
    df = pd.DataFrame([rep.to_row() for rep in reports], columns=list(SWEEP_COLUMNS))
    write_rows_csv(df.to_dict("records"), SWEEP_COLUMNS, out / "sweep.csv")

    t_bar = [rep.t_bar for rep in reports]
    write_rows_csv(r0_bin_spread(df["R0"], t_bar).to_dict("records"),
                   ("R0_low", "count", "mean", "range", "flagged"), out / "r0_bins.csv")
    by_family = mean_log_t_bar_by_family(df)
    write_rows_csv(
        [{"family": fam, "mean_log_t_bar": val} for fam, val in by_family.items()],
        ("family", "mean_log_t_bar"), out / "families.csv",
    )

    graphs = {gid: (s, g) for gid, s, g in labeled}
    bad = [rep for rep in reports if any(f in COUNTEREXAMPLE_FLAGS for f in rep.flags)]
    for rep in bad:
        seed, g = graphs[rep.graph_id]
        params = {"graph_id": rep.graph_id, "seed": seed, "tau": tau, "r": cfg.r, "h": cfg.h, "t_max": cfg.t_max,
                  "flags": rep.flags, "row": rep.to_row()}
        bundle = write_counterexample_bundle(out, f"sweep-{rep.graph_id}", g, params)
        notify_counterexample(bundle, f"{rep.graph_id}: {', '.join(rep.flags)}")
    return {
        "graphs": len(reports),
        "ordering_violations": len(bad),
        "numerical_failures": sum("numerical_failure" in rep.flags for rep in reports),
        "threshold_asymptote": threshold_asymptote_check(df["R0"], t_bar),
    }


def _sweep_calibration(cfg, labeled, tau, out, mapper) -> Dict[str, Any]:
    rows = run_calibration(labeled, tau, cfg.r_values, cfg.r_star_values, cfg.h, cfg.t_max, mapper)
    write_rows_csv(rows, CALIBRATION_COLUMNS, out / "calibration.csv")
    failures = calibration_failures(pd.DataFrame(rows, columns=list(CALIBRATION_COLUMNS)))
    if len(failures):
        log.warning("%d (graph, r) pairs with t*(r^2) < T̄(r)", len(failures))
    return {"graphs": len(labeled), "calibration_failures": int(len(failures))}


def cmd_sweep(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    scaled, scale = _rates(cfg)
    labeled = _ensemble(cfg)
    log.info("sweep (%s) over %d graphs, tau=%g", cfg.mode, len(labeled), scaled.tau)
    with worker_map(workers) as mapper:
        if cfg.mode == "calibration":
            summary = _sweep_calibration(cfg, labeled, scaled.tau, out, mapper)
        else:
            summary = _sweep_bounds(cfg, labeled, scaled.tau, out, mapper)
    write_metadata(_metadata(cfg, scale, **summary), out / "metadata.json")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    _, scale = _rates(cfg)
    labeled = _ensemble(cfg)
    with worker_map(workers) as mapper:
        report = run_suite(labeled, cfg.tau_multipliers, cfg.h, cfg.t_end, out, mapper=mapper)
    write_rows_csv(report.summary_rows(), ("check", "graph_id", "tau_multiplier", "max_residual", "at_t", "passed"),
                   out / "verify.csv")
    write_metadata(
        _metadata(
            cfg, scale, graphs=len(labeled), all_passed=report.all_passed, skipped=report.skipped,
            counterexamples=[str(p) for p in report.counterexamples],
        ),
        out / "metadata.json",
    )
    if report.all_passed:
        log.info("verify: all %d checks passed", len(report.decay) + len(report.projection))
    else:
        log.warning("verify: %d counterexample bundles under %s", len(report.counterexamples), out)
    return report.exit_code


COMMANDS = {
    "simulate": cmd_simulate,
    "temporal": cmd_temporal,
    "sweep": cmd_sweep,
    "predict": cmd_predict,
    "markov": cmd_markov,
    "verify": cmd_verify,
}


# -------------------------
# Entry point
# -------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sis-transition", description="NIMFA SIS transition-time experiments")
    parser.add_argument("command", choices=KINDS)
    parser.add_argument("--config", required=True, help="experiment config (JSON, or YAML by extension)")
    parser.add_argument("--seed", type=int, default=None, help="master seed, overrides the config")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--workers", type=int, default=None, help="worker processes")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="config override, repeatable; dotted keys reach nested fields")
    return parser


def main(argv: List[str] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides, kind=args.command)
        out = Path(args.out or cfg.out_dir or DEFAULT_OUT_DIR)
        workers = args.workers if args.workers is not None else DEFAULT_WORKERS
        log.info("%s: config %s, output %s", args.command, args.config, out)
        code = COMMANDS[args.command](cfg, out, workers)
        log.info("%s finished with exit code %d", args.command, code)
        return code
    except (UsageError, ConfigError) as e:
        log.error("%s", e)
        return EXIT_USAGE
    except NumericalError as e:
        log.error("numerical failure: %s", e)
        return EXIT_NUMERICAL
    except ValueError as e:
        log.error("%s", e)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
