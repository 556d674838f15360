import logging
from abc import ABC, abstractmethod
from typing import Any, Hashable, List, NamedTuple

import numpy as np

from ..errors import AssemblyError
from ..kron_solve import Matrix, MultiTermSystem

logger = logging.getLogger(__name__)


class OperatorTerm(NamedTuple):
    """One product term ``spatial @ phi @ energy`` of an eigenproblem."""

    key: Hashable
    spatial: Matrix
    energy: Matrix


class BaseOperator(ABC):
    """
    Abstract base class for two-sided eigenproblems on an N_x x G unknown.

    Concrete problems declare three families of product terms; the loss
    operator is -Σ leakage + Σ collision and the source operator Σ fission.
    Both power iterations only ever talk to an operator through this
    interface.
    """

    @property
    @abstractmethod
    def n_space(self) -> int:
        """Row dimension of the unknown."""
        pass

    @property
    @abstractmethod
    def n_energy(self) -> int:
        """Column dimension of the unknown."""
        pass

    @abstractmethod
    def leakage_terms(self) -> List[OperatorTerm]:
        """Terms entering the loss operator with a minus sign."""
        pass

    @abstractmethod
    def collision_terms(self) -> List[OperatorTerm]:
        """Terms entering the loss operator with a plus sign."""
        pass

    @abstractmethod
    def fission_terms(self) -> List[OperatorTerm]:
        """Terms of the source operator."""
        pass

    def initial_space_vector(self) -> np.ndarray:
        return np.ones(self.n_space)

    def initial_energy_vector(self) -> np.ndarray:
        return np.ones(self.n_energy)

    @property
    def shape(self) -> tuple:
        return (self.n_space, self.n_energy)

    def check_operand(self, phi: Any) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != self.shape:
            raise AssemblyError(f"flux has shape {phi.shape}, expected {self.shape}")
        return phi

    def lhs_system(self) -> MultiTermSystem:
        """The loss operator as a multi-term system on the full unknown."""
        return MultiTermSystem.from_terms(
            [(t.spatial, t.energy) for t in self.leakage_terms()],
            [(t.spatial, t.energy) for t in self.collision_terms()],
            self.n_space,
            self.n_energy,
        )

    def fission_system(self) -> MultiTermSystem:
        return MultiTermSystem.from_terms(
            [], [(t.spatial, t.energy) for t in self.fission_terms()],
            self.n_space, self.n_energy)

    def apply_lhs(self, phi: Any) -> np.ndarray:
        return self.lhs_system().apply(self.check_operand(phi))

    def apply_fission(self, phi: Any) -> np.ndarray:
        return self.fission_system().apply(self.check_operand(phi))
