"""
Experiment orchestration: dispatch, replica fan-out and atomic output.

Every experiment turns an ExperimentConfig into a set of named tables plus a
summary. Tables are written next to each other in out_dir, each through a
temporary sibling that is renamed into place, and a manifest.json records the
config, the seed, the code version, the wall time and the sha256 of each file.
"""
import hashlib
import json
import logging
import math
import os
import time
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from ratchet import __version__
from ratchet.config import settings
from ratchet.exceptions import AcceptanceError, ConfigError
from ratchet.models.dual import DualState
from ratchet.models.graphical import TypeConfig
from ratchet.models.population import SimOutput
from ratchet.schemas.experiment import ExperimentConfig, Manifest, ManifestFile, OutputFormat
from ratchet.schemas.params import Params
from ratchet.services import analytic_profile, dual_sim, graphical_core, moran_sim, reports, stats, yule_mc
from ratchet.services.streams import replica_seed

logger = logging.getLogger(__name__)

Tables = Dict[str, pd.DataFrame]
Summary = Dict[str, Any]


def map_replicas(fn: Callable, args: Sequence, workers: int = None) -> List:
    """Order-preserving map over replica arguments, over a process pool when workers > 1."""
    workers = settings.workers if workers is None else workers
    if workers > 1 and len(args) > 1:
        with Pool(processes=workers) as pool:
            return pool.map(fn, args)
    return [fn(a) for a in args]


def _yule_replica(args: Tuple[float, float, int, int, int]):
    alpha, mu, threshold, cap, seed = args
    return yule_mc.yule_min_load(alpha, mu, threshold, cap, seed)


def _brw_replica(args: Tuple[float, float, int, int, int]):
    alpha, mu, threshold, cap, seed = args
    return yule_mc.brw_min(alpha, mu, cap, seed, threshold=threshold)


def _forward_replica(args: Tuple[Params, float, np.ndarray, int]) -> SimOutput:
    params, t_max, grid, seed = args
    return moran_sim.simulate(params, t_max, grid, seed)


def _graphical_replica(args: Tuple[Params, float, int]):
    params, window, seed = args
    elements = graphical_core.sample_elements(params, 0.0, window, seed)
    forward = graphical_core.forward_transport(elements, TypeConfig.zeros(params.N))
    backward = graphical_core.asg_backward(elements, range(params.N))
    violations = graphical_core.audit_transitions(backward)
    return forward.clicks, backward.backward_clicks, int(backward.final.min_load), violations


def _dual_replica(args: Tuple[Params, float, int]):
    params, t_max, seed = args
    path = dual_sim.simulate_hierarchy(params, DualState.full(params.N), t_max, seed)
    return path.level_extinction_times


def _frequency_frame(route: str, values: np.ndarray, kmax: int) -> pd.DataFrame:
    n = max(len(values), 1)
    freq = np.bincount(values, minlength=kmax + 1)[: kmax + 1] / n
    return reports.route_frame(route, freq, np.sqrt(freq * (1.0 - freq) / n))


class ExperimentRunner:
    """Runs one validated experiment configuration into its output directory"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.out_dir = Path(config.out_dir).resolve()

    def run(self) -> Manifest:
        started = time.perf_counter()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        handler = getattr(self, f"_run_{self.config.experiment.value}")
        logger.info(f"Running {self.config.experiment.value} into {self.out_dir} (seed {self.config.seed})")

        exit_code = 0
        failure = None
        try:
            tables, summary = handler()
        except AcceptanceError as e:
            tables, summary = e.args[1], e.args[2]
            exit_code, failure = 3, e
            summary["acceptance_failure"] = e.args[0]

        files = [self._write_table(name, frame) for name, frame in tables.items()]
        manifest = Manifest(
            experiment=self.config.experiment,
            config=self.config.model_dump(mode="json"),
            seed=self.config.seed,
            version=__version__,
            wall_time_s=round(time.perf_counter() - started, 3),
            exit_code=exit_code,
            files=files,
            summary=summary,
        )
        self._write_text("manifest.json", json.dumps(manifest.model_dump(mode="json"), sort_keys=True, indent=2))
        logger.info(f"{self.config.experiment.value} finished in {manifest.wall_time_s}s, {len(files)} files")
        if failure is not None:
            raise AcceptanceError(failure.args[0])
        return manifest

    def _target(self, name: str) -> Path:
        target = (self.out_dir / name).resolve()
        if self.out_dir not in target.parents:
            raise ConfigError(f"refusing to write {target} outside {self.out_dir}")
        return target

    def _write_text(self, name: str, body: str) -> Path:
        target = self._target(name)
        tmp = target.with_name(target.name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(body)
        os.replace(tmp, target)
        return target

    def _write_table(self, name: str, frame: pd.DataFrame) -> ManifestFile:
        if self.config.format == OutputFormat.json:
            body = frame.to_json(orient="records", double_precision=15)
            filename = f"{name}.json"
        else:
            body = frame.to_csv(index=False, lineterminator="\n")
            filename = f"{name}.csv"
        self._write_text(filename, body)
        digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
        return ManifestFile(name=filename, sha256=digest, rows=len(frame))

    # experiments

    def _run_profile(self) -> Tuple[Tables, Summary]:
        rho, kmax = self.config.rho_value, self.config.kmax
        weights = analytic_profile.profile_recursion(rho, kmax)
        frame = pd.DataFrame(
            {
                "k": np.arange(kmax + 1),
                "p_k": weights.weights,
                "partial_sum": weights.partial_sums,
                "tail": analytic_profile.tail_sequence(rho, kmax + 1),
            }
        )
        mean, variance = analytic_profile.profile_moments(rho)
        summary = {
            "rho": rho,
            "tail_constant": analytic_profile.tail_constant(rho),
            "point_mass_constant": analytic_profile.point_mass_constant(rho),
            "systeq_residual": analytic_profile.systeq_residual(weights),
            "mean": mean,
            "variance": variance,
        }
        if kmax >= 3:
            summary["shape"] = str(analytic_profile.classify_shape(weights))
        return {"profile": frame}, summary

    def _ode_trajectory(self):
        alpha, mu = self.config.alpha, self.config.mu
        K = max(self.config.kmax, dual_sim.truncation_level(alpha, mu))
        t_max = self.config.t_max or 200.0
        record_every = max(1, int(round(1.0 / settings.ode_dt)))
        return dual_sim.ode_integrate(alpha, mu, K, [0.01], t_max, settings.ode_dt, record_every)

    def _run_ode(self) -> Tuple[Tables, Summary]:
        alpha, mu, kmax = self.config.alpha, self.config.mu, self.config.kmax
        trajectory = self._ode_trajectory()
        K = trajectory.states.shape[1] - 1
        frame = pd.DataFrame(
            {
                "t": np.repeat(trajectory.times, K + 1),
                "k": np.tile(np.arange(K + 1), len(trajectory)),
                "n_k": trajectory.states.ravel(),
            }
        )
        p = analytic_profile.profile_recursion(mu / alpha, K).weights
        logistic = dual_sim.logistic_total(alpha, 0.01, trajectory.times)
        summary = {
            "K": K,
            "max_profile_deviation": float(np.max(np.abs(trajectory.final.n / (2.0 * alpha) - p))),
            "max_logistic_deviation": float(np.max(np.abs(trajectory.totals - logistic))),
        }
        route = reports.route_frame("ode", trajectory.final.n[: kmax + 1] / (2.0 * alpha))
        return {"ode": frame, "route_ode": route}, summary

    def _min_load_samples(self, method: str, replica: Callable) -> Tuple[pd.DataFrame, np.ndarray]:
        c = self.config
        args = [(c.alpha, c.mu, c.threshold, c.cap, replica_seed(c.seed, r)) for r in range(c.reps)]
        samples = map_replicas(replica, args)
        censored = sum(s.censored for s in samples)
        rate = censored / c.reps
        logger.info(f"{method}: {censored}/{c.reps} censored")
        if rate > settings.censoring_limit:
            raise yule_mc.CensoringError(f"censoring rate {rate:.2%} above {settings.censoring_limit:.2%}")
        frame = pd.DataFrame(
            {
                "replica": np.arange(c.reps),
                "method": method,
                "value": pd.array([s.value for s in samples], dtype="Int64"),
                "censored_flag": [int(s.censored) for s in samples],
            }
        )
        values = np.array([s.value for s in samples if not s.censored], dtype=np.int64)
        return frame, values

    def _mc_summary(self, values: np.ndarray) -> Summary:
        kmax = self.config.kmax
        p = analytic_profile.profile_recursion(self.config.rho_value, max(kmax, 60)).weights
        freq = np.bincount(values, minlength=kmax + 1)[: kmax + 1] / max(len(values), 1)
        return {
            "samples": int(len(values)),
            "frequencies": [float(x) for x in freq],
            "max_abs_deviation": float(np.max(np.abs(freq - p[: kmax + 1]))),
            "gof_pvalue": stats.goodness_of_fit(values, p),
            "mean": float(values.mean()) if len(values) else float("nan"),
        }

    def _run_yule(self) -> Tuple[Tables, Summary]:
        frame, values = self._min_load_samples("yule_mc", _yule_replica)
        return {"yule_samples": frame}, self._mc_summary(values)

    def _run_brw(self) -> Tuple[Tables, Summary]:
        frame, values = self._min_load_samples("brw_mc", _brw_replica)
        return {"yule_samples": frame}, self._mc_summary(values)

    def _run_gw(self) -> Tuple[Tables, Summary]:
        c = self.config
        estimate = yule_mc.gw_checks(c.alpha, c.mu, c.u, c.reps, c.seed)
        frame = pd.DataFrame(
            [
                {
                    "alpha": c.alpha,
                    "mu": c.mu,
                    "u": c.u,
                    "reps": c.reps,
                    "extinction_freq": estimate.extinction_freq,
                    "leaf_gf_estimate": estimate.leaf_gf_estimate,
                    "g_map": analytic_profile.g_map(c.rho_value, c.u),
                    "capped": estimate.capped,
                }
            ]
        )
        return {"gw": frame}, {"rho": c.rho_value}

    def _run_fixedpoint(self) -> Tuple[Tables, Summary]:
        c = self.config
        check = yule_mc.fixed_point_check(c.rho_value, c.reps, c.seed, c.threshold)
        frame = pd.concat(
            [
                pd.DataFrame({"replica": np.arange(len(check.lhs)), "side": "lhs", "value": check.lhs}),
                pd.DataFrame({"replica": np.arange(len(check.rhs)), "side": "rhs", "value": check.rhs}),
            ],
            ignore_index=True,
        )
        summary = {"ks_distance": check.ks_distance, "pvalue": check.pvalue, "mean_M": check.mean_M}
        return {"fixedpoint": frame}, summary

    def _forward_outputs(self, reps: int) -> Tuple[Params, float, List[SimOutput]]:
        c = self.config
        params = c.params()
        burn_in = c.burn_in if c.burn_in is not None else moran_sim.default_burn_in(params)
        t_max = c.t_max or 2.0 * burn_in
        if t_max <= burn_in:
            raise ConfigError(f"t_max {t_max} must exceed the burn-in {burn_in}")
        step = c.snapshot_step or params.f_of_N
        grid = np.arange(0.0, t_max + 0.5 * step, step)
        args = [(params, t_max, grid, replica_seed(c.seed, r)) for r in range(reps)]
        return params, burn_in, map_replicas(_forward_replica, args)

    def _run_forward(self) -> Tuple[Tables, Summary]:
        params, burn_in, outputs = self._forward_outputs(self.config.reps)
        click_rows, profile_rows = [], []
        for r, output in enumerate(outputs):
            click_rows.extend((r, c.time, c.new_best_type) for c in output.clicks)
            for snap in output.profile_snapshots:
                profile_rows.extend((r, snap.time, k, x) for k, x in enumerate(snap.profile))
        clicks = pd.DataFrame(click_rows, columns=["replica", "time", "new_best_type"])
        profile = pd.DataFrame(profile_rows, columns=["replica", "time", "k", "x_k"])

        gaps = np.concatenate([np.diff(o.click_times) for o in outputs if len(o.clicks) > 1] or [np.empty(0)])
        summary: Summary = {
            "burn_in": burn_in,
            "mean_clicks": float(np.mean([len(o.clicks) for o in outputs])),
            "mean_gap": float(gaps.mean()) if len(gaps) else None,
            "gap_cv": float(gaps.std(ddof=1) / gaps.mean()) if len(gaps) > 1 else None,
            "click_exponent": analytic_profile.click_exponent(params),
        }
        profiles = [moran_sim.empirical_profile(o, burn_in) for o in outputs]
        width = max(len(x) for x in profiles)
        padded = np.array([np.pad(x, (0, width - len(x))) for x in profiles])
        summary["empirical_profile"] = [float(x) for x in padded.mean(axis=0)]
        return {"clicks": clicks, "profile": profile}, summary

    def _run_dual(self) -> Tuple[Tables, Summary]:
        c = self.config
        params = c.params()
        f = params.f_of_N
        scales = c.scales or [params.scale]
        sweep = []
        for i, scale in enumerate(scales):
            swept = c.params(N=max(1, int(round(scale * f))))
            start = dual_sim.quasi_stationary_start(swept)
            exact = dual_sim.z0_extinction_exact(swept, start)
            mc = dual_sim.z0_extinction_mc(swept, start, c.reps, c.seed + i * c.reps)
            sweep.append((swept.scale, exact, mc.mean_H0, mc.std_err))
        h0 = pd.DataFrame(sweep, columns=["N_over_f", "exact_mean", "mc_mean", "mc_se"])

        t_max = c.t_max or 10.0 * f
        args = [(params, t_max, replica_seed(c.seed, r)) for r in range(c.reps)]
        rows = [
            (r, level, t)
            for r, records in enumerate(map_replicas(_dual_replica, args))
            for level, t in records
        ]
        extinctions = pd.DataFrame(rows, columns=["replica", "level", "time"])
        exponents = [math.log(e / f) / s for s, e in zip(h0["N_over_f"], h0["exact_mean"])]
        summary = {
            "exponent_estimates": exponents,
            "exponent_limit": analytic_profile.exponent_coefficient(c.alpha, c.mu),
        }
        return {"h0_sweep": h0, "extinctions": extinctions}, summary

    def _run_graphical(self) -> Tuple[Tables, Summary]:
        c = self.config
        params = c.params()
        args = [(params, c.window, replica_seed(c.seed, r)) for r in range(c.reps)]
        rows = []
        mismatches = 0
        violations = 0
        for r, (fwd, bwd, min_load, bad) in enumerate(map_replicas(_graphical_replica, args)):
            rows.extend((r, "forward", click.best_type, click.time) for click in fwd)
            rows.extend((r, "backward", level, t) for level, t in bwd if level > 0)
            mismatches += int(len(fwd) != min_load)
            violations += bad
        elements = graphical_core.sample_elements(params, 0.0, c.window, replica_seed(c.seed, 0))
        tmp = self._target("events.jsonl.tmp")
        graphical_core.dump_events(elements, tmp)
        os.replace(tmp, self._target("events.jsonl"))
        frame = pd.DataFrame(rows, columns=["replica", "direction", "level", "time"])
        summary = {"best_type_mismatches": mismatches, "audit_violations": violations}
        return {"graphical": frame}, summary

    def _compare_routes(self) -> List[pd.DataFrame]:
        c = self.config
        kmax = c.kmax
        routes = [reports.route_frame("recursion", analytic_profile.profile_recursion(c.rho_value, kmax).weights)]
        trajectory = self._ode_trajectory()
        routes.append(reports.route_frame("ode", trajectory.final.n[: kmax + 1] / (2.0 * c.alpha)))
        routes.append(_frequency_frame("yule_mc", self._min_load_samples("yule_mc", _yule_replica)[1], kmax))
        routes.append(_frequency_frame("brw_mc", self._min_load_samples("brw_mc", _brw_replica)[1], kmax))

        _, burn_in, outputs = self._forward_outputs(c.forward_reps)
        profiles = np.zeros((len(outputs), kmax + 1))
        for r, output in enumerate(outputs):
            x = moran_sim.empirical_profile(output, burn_in)[: kmax + 1]
            profiles[r, : len(x)] = x
        stderr = profiles.std(axis=0, ddof=1) / math.sqrt(len(outputs)) if len(outputs) > 1 else None
        routes.append(reports.route_frame("forward_mc", profiles.mean(axis=0), stderr))
        return routes

    def _run_compare(self) -> Tuple[Tables, Summary]:
        if self.config.inputs:
            routes = [reports.read_route_file(path) for path in self.config.inputs]
        else:
            routes = self._compare_routes()
        report = reports.compare_report(routes)
        tables: Tables = {f"route_{frame['route'].iloc[0]}": frame for frame in routes}
        tables["compare"] = report.table
        tables["compare_long"] = report.long
        summary = {"max_abs_deviation": report.max_deviation, "min_pvalue": report.min_pvalue}
        try:
            reports.check_acceptance(report)
        except AcceptanceError as e:
            raise AcceptanceError(str(e), tables, summary)
        return tables, summary


def run_experiment(config: ExperimentConfig) -> Manifest:
    """Run a validated configuration; raises RatchetError subclasses on failure."""
    return ExperimentRunner(config).run()
