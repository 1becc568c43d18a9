"""Adaptive solve-estimate-mark-refine loop and PML parameter selection."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import mesh as meshmod
from .assembly import _eliminate, assemble_pml, assemble_tbc_full, make_field
from .estimator import EstimatorReport, global_estimate
from .fem import SolutionField, build_dofmap, dirichlet_values
from .pml import PmlMap, profile, propagation_factor
from .scenario import Scenario
from .solver import solve

log = logging.getLogger(__name__)

SIGMA0_MAX = 128.0
RHO_MAX_FACTOR = 20
SELECTION_MARGIN = 1e-2


class AdaptError(RuntimeError):
    pass


class StagnationError(AdaptError):
    pass


class UnreachableCapError(AdaptError):
    pass


@dataclass(frozen=True)
class AdaptOptions:
    tau: float = 0.5
    tol: float | None = None
    max_dof: int | None = 15000
    pml_error_cap: float = 1e-8
    max_iterations: int = 60
    target_h: float | None = None
    method: str = "pml"
    n_modes: int | None = None

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if self.tol is None and self.max_dof is None:
            raise ValueError("set at least one of tol and max_dof")
        if self.tol is not None and not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_dof is not None and self.max_dof < 1:
            raise ValueError("max_dof must be positive")
        if self.method not in ("pml", "tbc"):
            raise ValueError("method must be 'pml' or 'tbc'")
        if not self.pml_error_cap > 0:
            raise ValueError("pml_error_cap must be positive")


@dataclass
class IterationRecord:
    iteration: int
    dof_count: int
    dof_physical: int
    eps_h: float
    eps_pml: float
    wall_time: float
    n_marked: int = 0


@dataclass
class ConvergenceHistory:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def slope(self, last: int = 6) -> float:
        """Least-squares slope of log eps_h against log DoF over the last points."""
        d = np.log(self.column("dof_count")[-last:])
        e = np.log(self.column("eps_h")[-last:])
        return float(np.polyfit(d, e, 1)[0])

    def to_csv(self, path, include_time: bool = True) -> None:
        cols = ["iteration", "dof_count", "dof_physical", "eps_h", "eps_pml"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols + (["wall_time_s"] if include_time else []))
            for r in self.records:
                row = [r.iteration, r.dof_count, r.dof_physical, f"{r.eps_h:.12e}", f"{r.eps_pml:.12e}"]
                if include_time:
                    row.append(f"{r.wall_time:.3f}")
                w.writerow(row)


class AdaptResult(NamedTuple):
    field: SolutionField
    history: ConvergenceHistory
    report: EstimatorReport
    marks: list


def select_pml(scenario: Scenario, cap: float = 1e-8) -> Scenario:
    """Adjust (sigma0, rho) so the propagation factor meets the error cap.

    Keeps the scenario when the factor already is <= cap; otherwise doubles
    sigma0 up to 128, then grows rho by R, until factor <= cap * 1e-2.
    """
    if not cap > 0:
        raise ValueError("cap must be positive")

    def factor(s):
        return propagation_factor(PmlMap.from_scenario(s), s.kappa0)

    if factor(scenario) <= cap:
        return scenario
    target = cap * SELECTION_MARGIN
    s = scenario
    while factor(s) > target and s.sigma0 < SIGMA0_MAX:
        s = s.replace(sigma0=min(2 * s.sigma0, SIGMA0_MAX))
    while factor(s) > target:
        if s.rho + s.R > RHO_MAX_FACTOR * s.R:
            raise UnreachableCapError(
                f"PML error cap {cap:g} unreachable with sigma0 <= {SIGMA0_MAX:g}, rho <= {RHO_MAX_FACTOR} R"
            )
        s = s.replace(rho=s.rho + s.R)
    log.info("PML parameters adjusted: sigma0=%g rho=%g (factor %.3e)", s.sigma0, s.rho, factor(s))
    return s


def mark(report, tau: float = 0.5) -> np.ndarray:
    """Indices of elements with eta_K > tau * max eta (strict)."""
    eta = np.asarray(report.eta if isinstance(report, EstimatorReport) else report, dtype=float)
    if eta.size == 0:
        raise ValueError("empty estimator report")
    return np.flatnonzero(eta > tau * eta.max())


def solve_pml(mesh: meshmod.Mesh, scenario: Scenario) -> SolutionField:
    dm = build_dofmap(mesh, scenario)
    K, b = assemble_pml(mesh, scenario, dm)
    return make_field(dm, scenario, solve(K, b), "pml")


def solve_tbc(mesh: meshmod.Mesh, scenario: Scenario, n_modes: int | None = None) -> SolutionField:
    dm = build_dofmap(mesh, scenario)
    K, b, dc = assemble_tbc_full(mesh, scenario, dm, n_modes)
    K, b = _eliminate(K, b, dm, dirichlet_values(dm, scenario))
    return make_field(dm, scenario, solve(K, b), "tbc", dc)


def solve_on_mesh(mesh: meshmod.Mesh, scenario: Scenario, method: str = "pml", n_modes: int | None = None):
    if method == "pml":
        return solve_pml(mesh, scenario)
    return solve_tbc(mesh, scenario, n_modes)


def adapt_solve(scenario: Scenario, options: AdaptOptions | None = None) -> AdaptResult:
    """Adaptive finite element loop; stops on tol, max_dof or the iteration cap."""
    options = options or AdaptOptions()
    domain = "pml_domain" if options.method == "pml" else "tbc_domain"
    if options.method == "pml":
        scenario = select_pml(scenario, options.pml_error_cap)
    target_h = options.target_h or scenario.wavelength / 8
    mesh = meshmod.initial_mesh(scenario, target_h, domain)
    history = ConvergenceHistory()
    marks_log = []
    t0 = time.perf_counter()
    for it in range(1, options.max_iterations + 1):
        try:
            f = solve_on_mesh(mesh, scenario, options.method, options.n_modes)
        except Exception as exc:
            raise AdaptError(f"solve failed at iteration {it}: {exc}") from exc
        rep = global_estimate(f)
        rec = IterationRecord(it, rep.dof_count, rep.dof_physical, rep.eps_h, rep.eps_pml, time.perf_counter() - t0)
        history.records.append(rec)
        log.info("iter %d dof %d eps_h %.4e eps_pml %.3e", it, rep.dof_count, rep.eps_h, rep.eps_pml)
        if options.tol is not None and rep.eps_h <= options.tol:
            break
        if options.max_dof is not None and rep.dof_count >= options.max_dof:
            break
        if it == options.max_iterations:
            break
        marked = mark(rep, options.tau)
        if len(marked) == 0:
            raise StagnationError("stagnation: no element exceeds the marking threshold")
        rec.n_marked = len(marked)
        marks_log.append(marked)
        mesh = meshmod.bisect(mesh, marked)
    return AdaptResult(f, history, rep, marks_log)


def pml_exponent(scenario: Scenario) -> float:
    """kappa0 Im(rho~) for the scenario's PML."""
    pml = PmlMap.from_scenario(scenario)
    _, sh, _, _ = profile(pml, pml.rho)
    return float(scenario.kappa0 * pml.rho * sh)


__all__ = [
    "AdaptOptions",
    "AdaptResult",
    "ConvergenceHistory",
    "IterationRecord",
    "adapt_solve",
    "mark",
    "select_pml",
    "solve_on_mesh",
    "solve_pml",
    "solve_tbc",
    "StagnationError",
    "UnreachableCapError",
    "AdaptError",
]
