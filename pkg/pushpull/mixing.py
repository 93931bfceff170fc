"""Graph-compatible mixing matrices and the stochastic weight sequences they induce.

Every round k gets a row-stochastic A_k (decision variables are pulled from
in-neighbours) and a column-stochastic B_k (gradient-tracking directions are pushed
to out-neighbours), both with a positive diagonal. From the whole schedule we derive

  - pi_k:  pi_0 uniform, pi_{k+1} = B_k pi_k             (forward)
  - phi_k: phi_K = terminal, phi_k = A_k^T phi_{k+1}     (backward over a finite horizon)

Weight schemes:
  uniform  1/(degree + 1) on the neighbours and on the node itself
  lazy     1/2 on the node itself, the other half split evenly over the neighbours
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from pushpull.graph_core import Digraph, DigraphSequence

logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-12
# weight vectors are products of many matrices, so rounding drift is allowed to grow a little
VECTOR_TOL = 1e-10
WEIGHT_SCHEMES = ("uniform", "lazy")


def _read_only(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-dimensional array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _positive_min(entries: np.ndarray) -> float:
    return float(entries[entries > 0].min())


@dataclass(frozen=True, eq=False)
class RowStochasticMatrix:
    entries: np.ndarray

    def __post_init__(self) -> None:
        entries = _read_only(self.entries, 2)
        if entries.shape[0] != entries.shape[1]:
            raise ValueError(f"mixing matrix must be square, got {entries.shape}")
        if np.any(entries < 0):
            raise ValueError("mixing matrix has negative entries")
        drift = np.max(np.abs(entries.sum(axis=1) - 1.0))
        if drift > STOCHASTIC_TOL:
            raise ValueError(f"rows do not sum to 1 (max drift {drift:.3e})")
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def min_positive(self) -> float:
        return _positive_min(self.entries)


@dataclass(frozen=True, eq=False)
class ColumnStochasticMatrix:
    entries: np.ndarray

    def __post_init__(self) -> None:
        entries = _read_only(self.entries, 2)
        if entries.shape[0] != entries.shape[1]:
            raise ValueError(f"mixing matrix must be square, got {entries.shape}")
        if np.any(entries < 0):
            raise ValueError("mixing matrix has negative entries")
        drift = np.max(np.abs(entries.sum(axis=0) - 1.0))
        if drift > STOCHASTIC_TOL:
            raise ValueError(f"columns do not sum to 1 (max drift {drift:.3e})")
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def min_positive(self) -> float:
        return _positive_min(self.entries)


@dataclass(frozen=True, eq=False)
class StochasticVector:
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _read_only(self.values, 1)
        if np.any(values < 0):
            raise ValueError("stochastic vector has negative entries")
        drift = abs(float(values.sum()) - 1.0)
        if drift > VECTOR_TOL:
            raise ValueError(f"stochastic vector sums to {float(values.sum())!r}, off by {drift:.3e}")
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, n: int) -> "StochasticVector":
        return cls(np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def min(self) -> float:
        return float(self.values.min())

    @property
    def max(self) -> float:
        return float(self.values.max())


def _stochastic_rows(support: np.ndarray, scheme: str) -> np.ndarray:
    """Rows that put weight on ``support[i]`` plus the diagonal and sum to one."""
    mask = support.astype(float)
    degree = mask.sum(axis=1)
    eye = np.eye(mask.shape[0])
    if scheme == "uniform":
        return (mask + eye) / (degree + 1.0)[:, None]
    if scheme == "lazy":
        spread = np.divide(mask, degree[:, None], out=np.zeros_like(mask), where=degree[:, None] > 0)
        return np.where(degree[:, None] > 0, 0.5 * eye + 0.5 * spread, eye)
    raise ValueError(f"unknown weight scheme '{scheme}' (expected one of {WEIGHT_SCHEMES})")


def build_row_stochastic(g: Digraph, scheme: str = "uniform") -> RowStochasticMatrix:
    """A with [A]_ij > 0 exactly for j in N_in(i) and j = i."""
    return RowStochasticMatrix(_stochastic_rows(g.adjacency.T, scheme))


def build_column_stochastic(g: Digraph, scheme: str = "uniform") -> ColumnStochasticMatrix:
    """B with [B]_ji > 0 exactly for j in N_out(i) and j = i."""
    return ColumnStochasticMatrix(_stochastic_rows(g.adjacency, scheme).T)


@dataclass(frozen=True, eq=False)
class MixingRound:
    graph: Digraph
    A: RowStochasticMatrix
    B: ColumnStochasticMatrix


@dataclass(frozen=True, eq=False)
class MixingSchedule:
    """Matrices for rounds 0..horizon-1, shared by the engine and the diagnostics."""

    rounds: Tuple[MixingRound, ...]
    n: int
    window: int = 1
    scheme: str = "uniform"

    def __post_init__(self) -> None:
        for k, r in enumerate(self.rounds):
            if r.A.n != self.n or r.B.n != self.n:
                raise ValueError(f"round {k}: matrices do not match the node count {self.n}")

    @property
    def horizon(self) -> int:
        return len(self.rounds)

    @property
    def graphs(self) -> List[Digraph]:
        return [r.graph for r in self.rounds]

    @property
    def row_matrices(self) -> List[RowStochasticMatrix]:
        return [r.A for r in self.rounds]

    @property
    def column_matrices(self) -> List[ColumnStochasticMatrix]:
        return [r.B for r in self.rounds]

    @cached_property
    def a(self) -> float:
        """Lower bound on the positive entries of every A_k."""
        return min((r.A.min_positive for r in self.rounds), default=1.0)

    @cached_property
    def b(self) -> float:
        """Lower bound on the positive entries of every B_k."""
        return min((r.B.min_positive for r in self.rounds), default=1.0)

    def truncated(self, horizon: int) -> "MixingSchedule":
        if horizon > self.horizon:
            raise ValueError(f"schedule covers {self.horizon} rounds, {horizon} requested")
        return MixingSchedule(self.rounds[:horizon], self.n, self.window, self.scheme)

    def cycled(self, horizon: int) -> "MixingSchedule":
        """Rounds 0..horizon-1, wrapping around like ``DigraphSequence.at``."""
        if horizon < 0:
            raise ValueError(f"horizon must be non-negative, got {horizon}")
        if horizon <= self.horizon:
            return self.truncated(horizon)
        if not self.rounds:
            raise ValueError(f"an empty schedule cannot cover {horizon} rounds")
        logger.info("schedule has %d rounds, cycling it over %d rounds", self.horizon, horizon)
        rounds = tuple(self.rounds[k % self.horizon] for k in range(horizon))
        return MixingSchedule(rounds, self.n, self.window, self.scheme)


def build_schedule(graphs: DigraphSequence, horizon: int, scheme: str = "uniform") -> MixingSchedule:
    """Matrices for ``horizon`` rounds, cycling the graph sequence when it is shorter."""
    if horizon < 0:
        raise ValueError(f"horizon must be non-negative, got {horizon}")
    if scheme not in WEIGHT_SCHEMES:
        raise ValueError(f"unknown weight scheme '{scheme}' (expected one of {WEIGHT_SCHEMES})")
    if horizon > len(graphs):
        logger.info("graph sequence has %d rounds, cycling it over %d rounds", len(graphs), horizon)
    cache: Dict[Digraph, MixingRound] = {}
    rounds = []
    for k in range(horizon):
        g = graphs.at(k)
        if g not in cache:
            cache[g] = MixingRound(g, build_row_stochastic(g, scheme), build_column_stochastic(g, scheme))
        rounds.append(cache[g])
    return MixingSchedule(tuple(rounds), graphs.n, graphs.window, scheme)


def pi_sequence(Bs: Sequence[ColumnStochasticMatrix], n: Optional[int] = None) -> List[StochasticVector]:
    """pi_0 = 1/n, pi_{k+1} = B_k pi_k; returns len(Bs) + 1 vectors."""
    if n is None:
        if not Bs:
            raise ValueError("node count is required for an empty matrix list")
        n = Bs[0].n
    current = np.full(n, 1.0 / n)
    out = [StochasticVector(current)]
    for k, B in enumerate(Bs):
        if B.n != n:
            raise ValueError(f"round {k}: matrix is {B.n}x{B.n}, expected {n}x{n}")
        current = B.entries @ current
        out.append(StochasticVector(current))
    return out


def phi_sequence(
    As: Sequence[RowStochasticMatrix],
    terminal: Optional[StochasticVector] = None,
    n: Optional[int] = None,
) -> List[StochasticVector]:
    """phi_K = terminal (uniform by default), phi_k = A_k^T phi_{k+1}; returns len(As) + 1 vectors."""
    if terminal is not None:
        n = terminal.n
    elif n is None:
        if not As:
            raise ValueError("node count is required for an empty matrix list")
        n = As[0].n
    current = terminal.values if terminal is not None else np.full(n, 1.0 / n)
    out = [StochasticVector(current)]
    for k in range(len(As) - 1, -1, -1):
        A = As[k]
        if A.n != n:
            raise ValueError(f"round {k}: matrix is {A.n}x{A.n}, expected {n}x{n}")
        current = A.entries.T @ current
        out.append(StochasticVector(current))
    out.reverse()
    return out


def weight_sequences(schedule: MixingSchedule) -> Tuple[List[StochasticVector], List[StochasticVector]]:
    """(phis, pis) for every round of the schedule, each of length horizon + 1."""
    phis = phi_sequence(schedule.row_matrices, n=schedule.n)
    pis = pi_sequence(schedule.column_matrices, n=schedule.n)
    return phis, pis


def weight_lower_bound(min_entry: float, n: int, window: int = 1) -> float:
    """min_entry^(n * window) / n, the floor on phi_k and pi_k entries."""
    return min_entry ** (n * window) / n


def matrix_to_text(matrix: np.ndarray) -> str:
    """Dense row-major text with round-trip exact floats."""
    return "\n".join(" ".join(repr(float(v)) for v in row) for row in np.asarray(matrix))
