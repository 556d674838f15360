import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from ..errors import ConfigurationError, NonConvergenceError
from ..operators import BaseOperator

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-6
DEFAULT_MAX_ITER = 10000
INITIAL_K = 1.0

Callback = Callable[[int, Any], None]


@dataclass
class ConvergenceHistory:
    """Per-iteration record of a power iteration; ``deltas[0]`` is measured against k0 = 1."""

    k_estimates: List[float] = field(default_factory=list)
    deltas: List[float] = field(default_factory=list)
    ranks: List[int] = field(default_factory=list)
    wall_times: List[float] = field(default_factory=list)
    discarded: List[Optional[float]] = field(default_factory=list)
    extras: Dict[str, List[float]] = field(default_factory=dict)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.k_estimates)

    def record(self, k: float, delta: float, rank: int, seconds: float,
               discarded: Optional[float] = None) -> None:
        self.k_estimates.append(float(k))
        self.deltas.append(float(delta))
        self.ranks.append(int(rank))
        self.wall_times.append(float(seconds))
        self.discarded.append(None if discarded is None else float(discarded))


@dataclass(frozen=True)
class StepResult:
    state: Any
    k: float
    rank: int
    discarded: Optional[float] = None


@dataclass(frozen=True)
class SolveResult:
    k_eff: float
    state: Any
    history: ConvergenceHistory


class BaseSolver(ABC):
    """
    Abstract base class for inverse power iterations.

    Subclasses provide the initial iterate and one update step; the loop,
    the stopping test |k_(n+1) - k_n| <= eps, timing and history are shared.
    """

    def __init__(self, operator: BaseOperator, name: str, eps: float = DEFAULT_EPS,
                 max_iter: int = DEFAULT_MAX_ITER, callback: Optional[Callback] = None):
        if not eps >= 0.0:
            raise ConfigurationError(f"eps must be non-negative, got {eps}", "solver.eps")
        if max_iter < 1:
            raise ConfigurationError(f"max_iter must be positive, got {max_iter}", "solver.max_iter")
        self.operator = operator
        self.name = name
        self.eps = float(eps)
        self.max_iter = int(max_iter)
        self.callback = callback

        logger.info(f"{self.name} solver initialized for N_x={operator.n_space}, "
                    f"G={operator.n_energy}, eps={self.eps:g}, max_iter={self.max_iter}")

    @abstractmethod
    def initial_state(self) -> Any:
        """Return the normalized starting iterate."""
        pass

    @abstractmethod
    def step(self, state: Any) -> StepResult:
        """
        Perform one power-iteration update.

        Args:
            state: Normalized iterate n
        Returns: StepResult with the normalized iterate n+1 and k_(n+1)
        """
        pass

    def snapshot(self, state: Any, k: float) -> Any:
        """Immutable view of ``state`` and its estimate ``k`` handed to callbacks."""
        return state

    def run(self, init: Any = None, strict: bool = True) -> SolveResult:
        """
        Iterate until |k_(n+1) - k_n| <= eps or max_iter steps.

        Args:
            init: Starting iterate; ``initial_state()`` when None
            strict: Raise NonConvergenceError when max_iter is exhausted
        Returns: SolveResult with the final k, iterate and history
        """
        state = self.initial_state() if init is None else init
        history = ConvergenceHistory()
        k_previous = INITIAL_K
        k = INITIAL_K

        for iteration in range(1, self.max_iter + 1):
            started = time.perf_counter()
            result = self.step(state)
            elapsed = time.perf_counter() - started

            state, k = result.state, result.k
            delta = abs(k - k_previous)
            history.record(k, delta, result.rank, elapsed, result.discarded)
            logger.debug(f"{self.name} iteration {iteration}: k={k:.12f}, delta={delta:.3e}, "
                         f"rank={result.rank}")
            if self.callback is not None:
                self.callback(iteration, self.snapshot(state, k))

            if delta <= self.eps:
                history.converged = True
                logger.info(f"{self.name} converged in {iteration} iterations: k_eff={k:.10f}")
                return SolveResult(k_eff=k, state=state, history=history)
            k_previous = k

        message = (f"{self.name} did not converge in {self.max_iter} iterations "
                   f"(last delta {history.deltas[-1]:.3e} > eps {self.eps:g})")
        if strict:
            logger.warning(message)
            raise NonConvergenceError(message, history=history, result=state, k_eff=k)
        logger.info(message)
        return SolveResult(k_eff=k, state=state, history=history)
