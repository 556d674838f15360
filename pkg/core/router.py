import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from .bench import RateReport, construct_from_spectra, measure_rates
from .config import ProblemConfig
from .diagnostics import (
    RANGE_NAMES,
    build_diagnostics,
    memory_report,
    rank_study,
)
from .errors import KeffError
from .lowrank import LowRankState
from .materials import EnergyGrid, build_density_field, read_material_library
from .mesh import build_spherical_mesh
from .operators import OperatorSet, assemble_operators
from .solvers.base_solver import ConvergenceHistory
from .solvers.dlra_solver import dlra_power_iteration, dlra_power_iteration_adaptive
from .solvers.full_solver import full_power_iteration
from .util import format_float, write_csv, write_json, write_key_values, write_matrix_csv

logger = logging.getLogger(__name__)

EXIT_CONVERGED = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

HISTORY_HEADER = ("iter", "k", "delta_k", "rank", "wall_seconds")
RATES_HEADER = ("problem", "method", "rank", "k", "k_exact", "k_error", "k_rate", "k_bound",
                "x_rate", "x_bound", "w_rate", "w_bound", "iterations", "converged")


@dataclass
class RunOutcome:
    exit_code: int
    summary: Dict[str, Any] = field(default_factory=dict)
    output_dir: Optional[Path] = None
    error: Optional[Dict[str, Any]] = None
    written: List[Path] = field(default_factory=list)


class Router:
    """
    Dispatches a validated configuration to the matching solver and
    writes the deterministic result files.
    """

    def __init__(self, config: ProblemConfig):
        self.config = config
        self.output_dir = config.output_dir
        self.written: List[Path] = []

    def build_problem(self) -> Tuple[OperatorSet, Optional[EnergyGrid]]:
        mesh_config = self.config.mesh
        library, grid = read_material_library(self.config.materials_path)
        mesh = build_spherical_mesh(mesh_config.radius_cm, mesh_config.n_cells)
        density = build_density_field(mesh, self.config.shell_pairs, library)
        operator = assemble_operators(mesh, library, density, mesh_config.outer_boundary)
        return operator, grid

    def run(self) -> RunOutcome:
        """
        Solve, write outputs and map the result onto an exit code.

        Returns:
            RunOutcome; any KeffError becomes exit code 1 plus ``error.json``
        """
        mode = self.config.solver.mode
        logger.info(f"Running mode '{mode}', writing to {self.output_dir}")
        try:
            if mode == "simplified":
                summary = self._run_simplified()
            else:
                summary = self._run_sphere(mode)
        except KeffError as e:
            record = e.to_record()
            logger.error(f"Run failed: {e}")
            self._write(write_json, "error.json", record)
            return RunOutcome(exit_code=EXIT_ERROR, output_dir=self.output_dir, error=record,
                              written=list(self.written))

        self._write(write_key_values, "summary.txt", summary)
        exit_code = EXIT_CONVERGED if summary["converged"] else EXIT_NOT_CONVERGED
        if exit_code == EXIT_NOT_CONVERGED:
            logger.warning(f"Mode '{mode}' stopped without convergence")
        return RunOutcome(exit_code=exit_code, summary=summary, output_dir=self.output_dir,
                          written=list(self.written))

    def _write(self, writer: Callable[..., Any], name: str, *args: Any) -> None:
        path = self.output_dir / name
        writer(path, *args)
        self.written.append(path)

    def _run_sphere(self, mode: str) -> Dict[str, Any]:
        solver = self.config.solver
        operator, grid = self.build_problem()
        common = dict(eps=solver.eps, max_iter=solver.max_iter, backend=solver.backend,
                      residual_tol=solver.residual_tol, strict=False)

        if mode == "full":
            k, phi, history = full_power_iteration(operator, **common)
            state = LowRankState.from_dense(phi)
            rank = state.rank
        elif mode == "dlra":
            k, state, history = dlra_power_iteration(operator, rank=solver.rank, seed=solver.seed,
                                                     **common)
            rank = state.rank
        else:
            initial_rank = None if solver.rank is None else min(solver.rank, min(operator.shape))
            k, state, history = dlra_power_iteration_adaptive(
                operator, rank=initial_rank, theta=solver.theta,
                theta_relative=solver.theta_relative, r_min=solver.r_min, r_max=solver.r_max,
                seed=solver.seed, **common)
            rank = state.rank
            self._write(write_csv, "truncation.csv", ("iter", "rank", "discarded"),
                        [(i + 1, r, d) for i, (r, d) in enumerate(zip(history.ranks,
                                                                       history.discarded))])

        self._emit_history(history)
        self._emit_diagnostics(state, grid)
        if self.config.outputs.emit_memory:
            report = memory_report(operator.n_space, operator.n_energy, rank)
            self._write(write_csv, "memory.csv",
                        ("n_x", "g", "rank", "full_entries", "dlra_entries", "coefficient_entries",
                         "solution_full", "solution_dlra"),
                        [(report.n_x, report.g, report.rank, report.full_entries,
                          report.dlra_entries, report.coefficient_entries, report.solution_full,
                          report.solution_dlra)])
        if solver.rank_study:
            self._emit_rank_study(operator, k if mode == "full" else None)

        logger.info(f"k_eff = {format_float(k)} after {history.iterations} iterations "
                    f"(rank {rank}, converged={history.converged})")
        return {"k_eff": k, "iterations": history.iterations, "converged": history.converged,
                "mode": mode, "rank": rank}

    def _emit_history(self, history: ConvergenceHistory) -> None:
        if not self.config.outputs.emit_history:
            return
        timed = self.config.outputs.emit_timings
        rows = []
        for i in range(history.iterations):
            seconds = history.wall_times[i] if timed else float("nan")
            rows.append((i + 1, history.k_estimates[i], history.deltas[i], history.ranks[i],
                         seconds))
        self._write(write_csv, "history.csv", HISTORY_HEADER, rows)

    def _emit_diagnostics(self, state: LowRankState, grid: Optional[EnergyGrid]) -> None:
        outputs = self.config.outputs
        if not (outputs.emit_modes or outputs.emit_flux):
            return
        bundle = build_diagnostics(state, grid if outputs.emit_flux else None)
        if outputs.emit_modes:
            self._write(write_matrix_csv, "modes_space.csv", bundle.spatial_modes, "mode_", "cell")
            self._write(write_matrix_csv, "modes_energy.csv", bundle.energy_modes, "mode_",
                        "group")
            self._write(write_csv, "singular_values.csv", ("index", "sigma"),
                        [(i + 1, s) for i, s in enumerate(bundle.singular_values)])
        if outputs.emit_flux and bundle.range_fluxes is not None:
            self._write(write_csv, "flux_ranges.csv", ("cell",) + RANGE_NAMES,
                        [(j + 1,) + tuple(row) for j, row in enumerate(bundle.range_fluxes)])
            self._write(write_matrix_csv, "spectrum.csv", bundle.avg_spectrum, "group_", "cell")

    def _emit_rank_study(self, operator: OperatorSet, reference_k: Optional[float]) -> None:
        solver = self.config.solver
        if reference_k is None:
            reference_k, _, _ = full_power_iteration(
                operator, eps=solver.eps, max_iter=solver.max_iter, backend=solver.backend,
                residual_tol=solver.residual_tol, strict=False)
        ranks = [r for r in solver.rank_study if r <= min(operator.shape)]
        entries = rank_study(operator, ranks, reference_k, eps=solver.eps,
                             max_iter=solver.max_iter, seed=solver.seed, backend=solver.backend)
        self._write(write_csv, "rank_study.csv",
                    ("rank", "k_eff", "k_reference", "error_pcm", "iterations", "converged"),
                    [(e.rank, e.k_eff, reference_k, e.error_pcm, e.iterations, e.converged)
                     for e in entries])

    def _run_simplified(self) -> Dict[str, Any]:
        solver = self.config.solver
        settings = self.config.simplified
        reports: List[Tuple[int, RateReport]] = []
        for p in range(settings.n_problems):
            seed = solver.seed + p
            problem = construct_from_spectra(settings.lambdas, settings.sigmas, seed=seed,
                                             similarity=settings.similarity,
                                             split=settings.split)
            for method in ("full", "dlra"):
                report = measure_rates(problem, method=method, rank=settings.rank,
                                       iterations=settings.iterations, seed=seed, eps=solver.eps)
                reports.append((p + 1, report))
                logger.info(f"Problem {p + 1} ({method}): k={format_float(report.k)}, "
                            f"k rate={report.k_rate}, bound={report.k_bound:.3f}")

        self._write(write_csv, "rates.csv", RATES_HEADER, [
            (p, r.method, r.rank, r.k, r.k_exact, r.k_error, _nan_if_none(r.k_rate), r.k_bound,
             _nan_if_none(r.x_rate), r.x_bound, _nan_if_none(r.w_rate), r.w_bound,
             r.iterations, r.converged)
            for p, r in reports])

        low_rank = [r for _, r in reports if r.method == "dlra"]
        first = low_rank[0]
        return {"k_eff": first.k, "iterations": first.iterations,
                "converged": all(r.converged for r in low_rank), "mode": "simplified",
                "rank": settings.rank}


def _nan_if_none(value: Optional[float]) -> float:
    return float("nan") if value is None else float(value)


def run(config: ProblemConfig) -> int:
    """Run ``config`` and return the process exit code."""
    return Router(config).run().exit_code


def error_outcome(error: KeffError, output_dir: Optional[Path] = None) -> RunOutcome:
    """Outcome for failures raised before a Router exists (e.g. while parsing)."""
    return RunOutcome(exit_code=EXIT_ERROR, output_dir=output_dir, error=error.to_record())


def summarize(outcome: RunOutcome) -> List[str]:
    """Human-readable lines for the console."""
    if outcome.error is not None:
        details = outcome.error["error"]
        return [f"{details['type']}: {details['message']}"]
    lines = [f"{key}: {value if not isinstance(value, float) else format_float(value)}"
             for key, value in outcome.summary.items()]
    if outcome.output_dir is not None:
        lines.append(f"outputs: {outcome.output_dir}")
    return lines

