"""
Problem configuration: JSON document <-> frozen dataclasses.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .errors import ConfigurationError
from .kron_solve import BACKENDS, RESIDUAL_TOLERANCE
from .operators import OUTER_BOUNDARIES
from .util import PathLike, load_json_with_defaults, merge_defaults

logger = logging.getLogger(__name__)

MODES = ("full", "dlra", "dlra-adaptive", "simplified")
SIMILARITIES = ("random", "identity")

DEFAULT_CONFIG: Dict[str, Any] = {
    "mesh": {"outer_boundary": "zero_flux"},
    "shells": [],
    "solver": {
        "mode": "full",
        "rank": None,
        "theta": 1e-6,
        "theta_relative": True,
        "r_min": 2,
        "r_max": None,
        "eps": 1e-6,
        "max_iter": 10000,
        "seed": 0,
        "backend": "auto",
        "residual_tol": RESIDUAL_TOLERANCE,
        "rank_study": [],
    },
    "simplified": {
        "rank": 1,
        "n_problems": 1,
        "similarity": "random",
        "split": False,
        "iterations": 100,
    },
    "outputs": {
        "directory": "results",
        "emit_history": True,
        "emit_modes": True,
        "emit_flux": True,
        "emit_memory": True,
        "emit_timings": False,
    },
}


@dataclass(frozen=True)
class MeshConfig:
    radius_cm: float
    n_cells: int
    outer_boundary: str = "zero_flux"


@dataclass(frozen=True)
class ShellConfig:
    outer_radius_cm: float
    material: str


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "full"
    rank: Optional[int] = None
    theta: float = 1e-6
    theta_relative: bool = True
    r_min: int = 2
    r_max: Optional[int] = None
    eps: float = 1e-6
    max_iter: int = 10000
    seed: int = 0
    backend: str = "auto"
    residual_tol: float = RESIDUAL_TOLERANCE
    rank_study: Tuple[int, ...] = ()


@dataclass(frozen=True)
class SimplifiedConfig:
    lambdas: Tuple[float, ...]
    sigmas: Tuple[float, ...]
    rank: int = 1
    n_problems: int = 1
    similarity: str = "random"
    split: bool = False
    iterations: int = 100


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    emit_history: bool = True
    emit_modes: bool = True
    emit_flux: bool = True
    emit_memory: bool = True
    emit_timings: bool = False


@dataclass(frozen=True)
class ProblemConfig:
    """Validated problem description; ``base_dir`` resolves relative paths."""

    solver: SolverConfig
    outputs: OutputConfig
    mesh: Optional[MeshConfig] = None
    materials_file: Optional[str] = None
    shells: Tuple[ShellConfig, ...] = ()
    simplified: Optional[SimplifiedConfig] = None
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def materials_path(self) -> Path:
        if self.materials_file is None:
            raise ConfigurationError("materials_file is required", "materials_file")
        path = Path(self.materials_file)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def output_dir(self) -> Path:
        path = Path(self.outputs.directory)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def shell_pairs(self) -> List[Tuple[float, str]]:
        return [(s.outer_radius_cm, s.material) for s in self.shells]


def _section(document: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    value = document.get(name)
    if not isinstance(value, Mapping):
        raise ConfigurationError(f"section must be an object, got {type(value).__name__}", name)
    return value


def _integer(value: Any, path: str, minimum: Optional[int] = None,
             optional: bool = False) -> Optional[int]:
    if value is None and optional:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"expected an integer, got {value!r}", path)
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"must be >= {minimum}, got {value}", path)
    return value


def _number(value: Any, path: str, positive: bool = False, non_negative: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a number, got {value!r}", path)
    value = float(value)
    if positive and not value > 0.0:
        raise ConfigurationError(f"must be positive, got {value}", path)
    if non_negative and not value >= 0.0:
        raise ConfigurationError(f"must be non-negative, got {value}", path)
    return value


def _flag(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigurationError(f"expected true or false, got {value!r}", path)
    return value


def _choice(value: Any, choices: Tuple[str, ...], path: str) -> str:
    if value not in choices:
        raise ConfigurationError(f"must be one of {', '.join(choices)}, got {value!r}", path)
    return value


def _numbers(values: Any, path: str) -> Tuple[float, ...]:
    if not isinstance(values, (list, tuple)) or not values:
        raise ConfigurationError("expected a non-empty list of numbers", path)
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(values))


def _parse_solver(section: Mapping[str, Any]) -> SolverConfig:
    study = section.get("rank_study") or []
    if not isinstance(study, (list, tuple)):
        raise ConfigurationError("expected a list of ranks", "solver.rank_study")
    return SolverConfig(
        mode=_choice(section.get("mode"), MODES, "solver.mode"),
        rank=_integer(section.get("rank"), "solver.rank", 1, optional=True),
        theta=_number(section.get("theta"), "solver.theta", non_negative=True),
        theta_relative=_flag(section.get("theta_relative"), "solver.theta_relative"),
        r_min=_integer(section.get("r_min"), "solver.r_min", 1),
        r_max=_integer(section.get("r_max"), "solver.r_max", 1, optional=True),
        eps=_number(section.get("eps"), "solver.eps", non_negative=True),
        max_iter=_integer(section.get("max_iter"), "solver.max_iter", 1),
        seed=_integer(section.get("seed"), "solver.seed", 0),
        backend=_choice(section.get("backend"), BACKENDS, "solver.backend"),
        residual_tol=_number(section.get("residual_tol"), "solver.residual_tol", positive=True),
        rank_study=tuple(_integer(r, f"solver.rank_study[{i}]", 1) for i, r in enumerate(study)),
    )


def _parse_simplified(section: Mapping[str, Any]) -> SimplifiedConfig:
    return SimplifiedConfig(
        lambdas=_numbers(section.get("lambdas"), "simplified.lambdas"),
        sigmas=_numbers(section.get("sigmas"), "simplified.sigmas"),
        rank=_integer(section.get("rank"), "simplified.rank", 1),
        n_problems=_integer(section.get("n_problems"), "simplified.n_problems", 1),
        similarity=_choice(section.get("similarity"), SIMILARITIES, "simplified.similarity"),
        split=_flag(section.get("split"), "simplified.split"),
        iterations=_integer(section.get("iterations"), "simplified.iterations", 1),
    )


def _parse_outputs(section: Mapping[str, Any]) -> OutputConfig:
    directory = section.get("directory")
    if not isinstance(directory, str) or not directory:
        raise ConfigurationError("expected a non-empty path", "outputs.directory")
    flags = {name: _flag(section.get(name), f"outputs.{name}")
             for name in ("emit_history", "emit_modes", "emit_flux", "emit_memory",
                          "emit_timings")}
    return OutputConfig(directory=directory, **flags)


def _parse_mesh(section: Mapping[str, Any]) -> MeshConfig:
    return MeshConfig(
        radius_cm=_number(section.get("radius_cm"), "mesh.radius_cm", positive=True),
        n_cells=_integer(section.get("n_cells"), "mesh.n_cells", 1),
        outer_boundary=_choice(section.get("outer_boundary"), OUTER_BOUNDARIES,
                               "mesh.outer_boundary"),
    )


def _parse_shells(values: Any) -> Tuple[ShellConfig, ...]:
    if not isinstance(values, (list, tuple)):
        raise ConfigurationError("expected a list of shells", "shells")
    shells = []
    for i, entry in enumerate(values):
        if not isinstance(entry, Mapping):
            raise ConfigurationError("shell must be an object", f"shells[{i}]")
        material = entry.get("material")
        if not isinstance(material, str) or not material:
            raise ConfigurationError("expected a material name", f"shells[{i}].material")
        shells.append(ShellConfig(
            outer_radius_cm=_number(entry.get("outer_radius_cm"), f"shells[{i}].outer_radius_cm",
                                    positive=True),
            material=material,
        ))
    return tuple(shells)


def validate_config(config: ProblemConfig) -> ProblemConfig:
    """Check the fields each mode requires; returns ``config`` unchanged."""
    solver = config.solver
    _choice(solver.mode, MODES, "solver.mode")
    _choice(solver.backend, BACKENDS, "solver.backend")
    if solver.mode == "dlra" and solver.rank is None:
        raise ConfigurationError("rank required for dlra mode", "solver.rank")
    if solver.r_max is not None and solver.r_min > solver.r_max:
        raise ConfigurationError(f"r_min {solver.r_min} exceeds r_max {solver.r_max}",
                                 "solver.r_min")
    if solver.eps < 0.0:
        raise ConfigurationError(f"must be non-negative, got {solver.eps}", "solver.eps")
    if solver.theta < 0.0:
        raise ConfigurationError(f"must be non-negative, got {solver.theta}", "solver.theta")
    if solver.rank is not None and solver.rank < 1:
        raise ConfigurationError(f"must be >= 1, got {solver.rank}", "solver.rank")

    if solver.mode == "simplified":
        if config.simplified is None:
            raise ConfigurationError("simplified section required for simplified mode",
                                     "simplified")
        return config
    if config.mesh is None:
        raise ConfigurationError("mesh section required", "mesh")
    if not config.materials_file:
        raise ConfigurationError("materials_file is required", "materials_file")
    if not config.shells:
        raise ConfigurationError("at least one shell is required", "shells")
    return config


def config_from_document(document: Mapping[str, Any], base_dir: PathLike = ".") -> ProblemConfig:
    """
    Build a validated ProblemConfig from a decoded JSON document.

    Missing sections and keys are filled from DEFAULT_CONFIG first.
    """
    document = merge_defaults(document, DEFAULT_CONFIG)
    solver = _parse_solver(_section(document, "solver"))

    simplified = None
    if solver.mode == "simplified" or "lambdas" in document["simplified"]:
        simplified = _parse_simplified(_section(document, "simplified"))

    mesh = None
    if "radius_cm" in document["mesh"] or "n_cells" in document["mesh"]:
        mesh = _parse_mesh(_section(document, "mesh"))

    materials_file = document.get("materials_file")
    if materials_file is not None and not isinstance(materials_file, str):
        raise ConfigurationError("expected a path", "materials_file")

    config = ProblemConfig(
        solver=solver,
        outputs=_parse_outputs(_section(document, "outputs")),
        mesh=mesh,
        materials_file=materials_file,
        shells=_parse_shells(document.get("shells")),
        simplified=simplified,
        base_dir=Path(base_dir),
    )
    return validate_config(config)


def parse_config(path: PathLike) -> ProblemConfig:
    """
    Read and validate a problem configuration file.

    Relative paths inside it resolve against the file's directory.
    """
    path = Path(path)
    document = load_json_with_defaults(path, DEFAULT_CONFIG)
    config = config_from_document(document, base_dir=path.parent)
    logger.info(f"Loaded configuration {path} (mode {config.solver.mode})")
    return config


def dump_config(config: ProblemConfig) -> Dict[str, Any]:
    """Canonical JSON document of ``config``; parsing it gives back an equal config."""
    solver = dataclasses.asdict(config.solver)
    solver["rank_study"] = list(config.solver.rank_study)
    document: Dict[str, Any] = {
        "solver": solver,
        "outputs": dataclasses.asdict(config.outputs),
    }
    if config.mesh is not None:
        document["mesh"] = dataclasses.asdict(config.mesh)
    if config.materials_file is not None:
        document["materials_file"] = config.materials_file
    document["shells"] = [dataclasses.asdict(s) for s in config.shells]
    if config.simplified is not None:
        simplified = dataclasses.asdict(config.simplified)
        simplified["lambdas"] = list(config.simplified.lambdas)
        simplified["sigmas"] = list(config.simplified.sigmas)
        document["simplified"] = simplified
    return document


def apply_overrides(config: ProblemConfig, **overrides: Any) -> ProblemConfig:
    """
    Replace solver fields (mode, rank, eps, theta, seed) and the output
    directory (``out_dir``); ``None`` values are ignored.
    """
    out_dir = overrides.pop("out_dir", None)
    solver_fields = {k: v for k, v in overrides.items() if v is not None}
    unknown = set(solver_fields) - {f.name for f in dataclasses.fields(SolverConfig)}
    if unknown:
        raise ConfigurationError(f"unknown override(s): {', '.join(sorted(unknown))}")
    if solver_fields:
        logger.info(f"Overriding solver settings: {solver_fields}")
        config = dataclasses.replace(config, solver=dataclasses.replace(config.solver,
                                                                        **solver_fields))
    if out_dir is not None:
        config = dataclasses.replace(config, outputs=dataclasses.replace(
            config.outputs, directory=str(Path(out_dir).absolute())))
    return validate_config(config)
