"""
Cross-route comparison of per-k estimates of the profile.

Every route writes a long-format table (route, k, value, stderr). The report
aligns them on k against the analytic recursion and adds absolute deviations
and z-test p-values.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Union

import numpy as np
import pandas as pd
from scipy import stats

from ratchet.config import settings
from ratchet.exceptions import AcceptanceError, ConfigError, RatchetError

logger = logging.getLogger(__name__)

LONG_COLUMNS = ["route", "k", "value", "stderr"]
REFERENCE_ROUTE = "recursion"
ROUTE_ORDER = ["recursion", "ode", "yule_mc", "brw_mc", "forward_mc"]
MAX_DEVIATION_ROW = "max_abs_dev"


class ReportError(RatchetError):
    """Base exception for compare reports"""


class SchemaMismatchError(ReportError):
    """Raised when a route file does not have the long-format columns"""


class RouteCountError(ReportError, ConfigError):
    """Raised when fewer than two routes are given"""


@dataclass
class CompareReport:
    table: pd.DataFrame
    long: pd.DataFrame
    max_deviation: Dict[str, float]
    min_pvalue: Dict[str, float]

    @property
    def routes(self) -> List[str]:
        return [r for r in self.table.columns if r != "k" and not r.endswith("_dev") and not r.endswith("_p")]


def route_frame(route: str, values: Iterable[float], stderr: Iterable[float] = None) -> pd.DataFrame:
    values = np.asarray(list(values), dtype=np.float64)
    errors = np.zeros_like(values) if stderr is None else np.asarray(list(stderr), dtype=np.float64)
    return pd.DataFrame({"route": route, "k": np.arange(len(values)), "value": values, "stderr": errors})


def read_route_file(path: Union[str, Path]) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if list(frame.columns) != LONG_COLUMNS:
        raise SchemaMismatchError(f"{path}: expected columns {LONG_COLUMNS}, got {list(frame.columns)}")
    return frame


def _display_name(route: str) -> str:
    return "ode/2alpha" if route == "ode" else route


def compare_report(inputs: Iterable[Union[str, Path, pd.DataFrame]]) -> CompareReport:
    """Align route estimates on k and measure each against the recursion."""
    frames = [read_route_file(i) if not isinstance(i, pd.DataFrame) else i for i in inputs]
    for frame in frames:
        if list(frame.columns) != LONG_COLUMNS:
            raise SchemaMismatchError(f"expected columns {LONG_COLUMNS}, got {list(frame.columns)}")
    long = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=LONG_COLUMNS)
    routes = list(dict.fromkeys(long["route"]))
    if len(routes) < 2:
        raise RouteCountError(
            f"compare needs at least two routes, got {routes or 'none'}; "
            f"usage: compare --inputs ROUTE.csv ROUTE.csv [...]"
        )
    if REFERENCE_ROUTE not in routes:
        raise SchemaMismatchError(f"no {REFERENCE_ROUTE!r} route among {routes}")

    ordered = sorted(routes, key=lambda r: ROUTE_ORDER.index(r) if r in ROUTE_ORDER else len(ROUTE_ORDER))
    values = long.pivot_table(index="k", columns="route", values="value", aggfunc="first")
    errors = long.pivot_table(index="k", columns="route", values="stderr", aggfunc="first")
    reference = values[REFERENCE_ROUTE]

    table = pd.DataFrame({"k": values.index.astype(int)})
    for route in ordered:
        table[_display_name(route)] = values[route].to_numpy()

    max_deviation: Dict[str, float] = {}
    min_pvalue: Dict[str, float] = {}
    for route in ordered:
        if route == REFERENCE_ROUTE:
            continue
        deviation = (values[route] - reference).abs()
        se = errors[route].to_numpy()
        with np.errstate(divide="ignore", invalid="ignore"):
            z = deviation.to_numpy() / se
        pvalues = np.where(se > 0, 2.0 * stats.norm.sf(z), np.nan)
        name = _display_name(route)
        table[f"{name}_dev"] = deviation.to_numpy()
        table[f"{name}_p"] = pvalues
        max_deviation[route] = float(np.nanmax(deviation.to_numpy()))
        min_pvalue[route] = float(np.nanmin(pvalues)) if np.isfinite(pvalues).any() else float("nan")

    summary = {"k": MAX_DEVIATION_ROW}
    for route in ordered:
        if route != REFERENCE_ROUTE:
            summary[f"{_display_name(route)}_dev"] = max_deviation[route]
    table = pd.concat([table.astype({"k": object}), pd.DataFrame([summary])], ignore_index=True)
    logger.info(f"compare report over {ordered}: max deviations {max_deviation}")
    return CompareReport(table=table, long=long, max_deviation=max_deviation, min_pvalue=min_pvalue)


def route_tolerances() -> Dict[str, float]:
    return {
        "ode": 1e-4,
        "yule_mc": settings.acceptance_tolerance,
        "brw_mc": settings.acceptance_tolerance,
        "forward_mc": 2 * settings.acceptance_tolerance,
    }


def check_acceptance(report: CompareReport) -> None:
    tolerances = route_tolerances()
    failures = [
        f"{route}: {dev:.4g} > {tolerances[route]:.4g}"
        for route, dev in report.max_deviation.items()
        if route in tolerances and not dev <= tolerances[route]
    ]
    if failures:
        logger.warning(f"acceptance failures: {failures}")
        raise AcceptanceError("; ".join(failures))
