"""Synchronous simulation of AB/Push-Pull and of the Push-DIGing baseline.

AB/Push-Pull, one round k -> k+1 (A_k row-stochastic, B_k column-stochastic):

  x^{k+1} = A_k x^k - alpha y^k
  y^{k+1} = B_k y^k + grad(x^{k+1}) - grad(x^k),      y^0 = grad(x^0)

Push-DIGing, one round with the column-stochastic B_k only:

  u^{k+1} = B_k (u^k - alpha y^k)        v^{k+1} = B_k v^k,   v^0 = 1
  x^{k+1} = u^{k+1} / v^{k+1}
  y^{k+1} = B_k y^k + grad(x^{k+1}) - grad(x^k),      y^0 = grad(x^0)

Rows of every stack are agents. Each round is committed as a whole; the gradient of
the current iterate is kept in the state so every agent evaluates one gradient per
round.

Usage:
  from pushpull import engine
  result = engine.run(problem, graphs, engine.RunConfig(alpha=0.05, horizon=2000))
  result.trace[-1].relative_residual
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from pushpull import diagnostics, mixing
from pushpull.graph_core import DigraphSequence
from pushpull.mixing import ColumnStochasticMatrix, MixingSchedule, RowStochasticMatrix, StochasticVector
from pushpull.objectives import ObjectiveFamily, optimum

logger = logging.getLogger(__name__)

METHODS = ("ab_push_pull", "push_diging")
TRACE_FIELDS = ("k", "relative_residual", "opt_gap", "D", "S", "max_agent_error")
MIN_PUSH_SUM_WEIGHT = 1e-12


class DivergenceError(FloatingPointError):
    """An iterate left the finite range, or a push-sum weight collapsed."""

    def __init__(self, round_index: int, agent: int, reason: str = "non-finite iterate"):
        self.round = round_index
        self.agent = agent
        super().__init__(f"{reason} at round {round_index}, agent {agent}; the stepsize is likely too large")


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NetworkState:
    x: np.ndarray
    y: np.ndarray
    k: int
    grad: np.ndarray

    def __post_init__(self) -> None:
        for name in ("x", "y", "grad"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (self.x.shape == self.y.shape == self.grad.shape) or self.x.ndim != 2:
            raise ValueError(f"state stacks disagree: x{self.x.shape} y{self.y.shape} grad{self.grad.shape}")


@dataclass(frozen=True, eq=False)
class RunConfig:
    alpha: float
    horizon: int
    x0: Optional[np.ndarray] = None
    trace_every: int = 1
    x0_seed: int = 0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be a positive finite number, got {self.alpha!r}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be non-negative, got {self.horizon}")
        if self.trace_every < 1:
            raise ValueError(f"trace_every must be at least 1, got {self.trace_every}")

    def initial_iterates(self, n: int, p: int) -> np.ndarray:
        if self.x0 is not None:
            x0 = np.asarray(self.x0, dtype=float)
            if x0.shape != (n, p):
                raise ValueError(f"x0 must have shape {(n, p)}, got {x0.shape}")
            return x0
        return np.random.Generator(np.random.PCG64(self.x0_seed)).standard_normal((n, p))


@dataclass(frozen=True)
class TraceRecord:
    k: int
    relative_residual: float
    opt_gap: float
    x_dispersion: float
    y_dispersion: float
    max_agent_error: float

    def as_row(self) -> tuple:
        return (self.k, self.relative_residual, self.opt_gap, self.x_dispersion, self.y_dispersion, self.max_agent_error)


@dataclass
class RunResult:
    method: str
    alpha: float
    final_state: NetworkState
    trace: List[TraceRecord]
    schedule: MixingSchedule
    phis: List[StochasticVector]
    pis: List[StochasticVector]
    x_star: np.ndarray = field(repr=False, default=None)


RoundCallback = Callable[[int, NetworkState], None]
StepCallback = Callable[[int, NetworkState, NetworkState], None]


def _check_finite(values: np.ndarray, round_index: int) -> None:
    bad = ~np.all(np.isfinite(values), axis=1)
    if bad.any():
        raise DivergenceError(round_index, int(np.argmax(bad)))


def init(f: ObjectiveFamily, x0: np.ndarray) -> NetworkState:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (f.n, f.p):
        raise ValueError(f"x0 must have shape {(f.n, f.p)}, got {x0.shape}")
    grad = f.grad_all(x0)
    return NetworkState(x=x0, y=grad, k=0, grad=grad)


def step(
    state: NetworkState,
    A: RowStochasticMatrix,
    B: ColumnStochasticMatrix,
    f: ObjectiveFamily,
    alpha: float,
) -> NetworkState:
    n = state.x.shape[0]
    if A.n != n or B.n != n:
        raise ValueError(f"matrices are {A.n}x{A.n} and {B.n}x{B.n} but the network has {n} agents")
    with np.errstate(over="ignore", invalid="ignore"):
        x_next = A.entries @ state.x - alpha * state.y
        _check_finite(x_next, state.k + 1)
        grad_next = f.grad_all(x_next)
        y_next = B.entries @ state.y + grad_next - state.grad
        _check_finite(y_next, state.k + 1)
    return NetworkState(x=x_next, y=y_next, k=state.k + 1, grad=grad_next)


def relative_residual(x: np.ndarray, x_star: np.ndarray, initial: float) -> float:
    """||x - 1 x*^T||^2 / initial, where ``initial`` is the same quantity at round 0."""
    diff = x - x_star
    sq = float(np.sum(diff * diff))
    return sq / initial if initial > 0 else sq


def trace_record(
    state: NetworkState,
    phi,
    pi,
    x_star: np.ndarray,
    initial: float,
) -> TraceRecord:
    vector = diagnostics.composite_vector(state, phi, pi, x_star)
    errors = np.linalg.norm(state.x - x_star, axis=1)
    return TraceRecord(
        k=state.k,
        relative_residual=relative_residual(state.x, x_star, initial),
        opt_gap=vector.opt_gap,
        x_dispersion=vector.x_dispersion,
        y_dispersion=vector.y_dispersion,
        max_agent_error=float(errors.max()),
    )


def _prepare(
    graphs: Union[DigraphSequence, MixingSchedule],
    horizon: int,
    scheme: str,
) -> MixingSchedule:
    if isinstance(graphs, MixingSchedule):
        return graphs.cycled(horizon) if graphs.horizon != horizon else graphs
    return mixing.build_schedule(graphs, horizon, scheme)


def _notify(callback: Optional[Callable], *args) -> None:
    if callback is None:
        return
    try:
        callback(*args)
    except Exception as e:
        raise RuntimeError(f"trace callback failed at round {args[0]}: {e}") from e


def _is_traced(k: int, cfg: RunConfig) -> bool:
    return k % cfg.trace_every == 0 or k == cfg.horizon


def run(
    f: ObjectiveFamily,
    graphs: Union[DigraphSequence, MixingSchedule],
    cfg: RunConfig,
    on_round: Optional[RoundCallback] = None,
    on_step: Optional[StepCallback] = None,
    x_star: Optional[np.ndarray] = None,
    scheme: str = "uniform",
) -> RunResult:
    """Run AB/Push-Pull for ``cfg.horizon`` rounds.

    ``on_round(k, state)`` fires on every traced round; ``on_step(k, before, after)``
    fires after every round and is what the streaming verifier hooks into.
    """
    schedule = _prepare(graphs, cfg.horizon, scheme)
    if schedule.n != f.n:
        raise ValueError(f"graphs have {schedule.n} nodes but the objective has {f.n} agents")
    phis, pis = mixing.weight_sequences(schedule)
    x_star = optimum(f) if x_star is None else np.asarray(x_star, dtype=float)

    state = init(f, cfg.initial_iterates(f.n, f.p))
    initial = float(np.sum((state.x - x_star) ** 2))
    trace = [trace_record(state, phis[0], pis[0], x_star, initial)]
    _notify(on_round, 0, state)

    for k, rnd in enumerate(schedule.rounds):
        following = step(state, rnd.A, rnd.B, f, cfg.alpha)
        _notify(on_step, k, state, following)
        state = following
        if _is_traced(state.k, cfg):
            trace.append(trace_record(state, phis[state.k], pis[state.k], x_star, initial))
            _notify(on_round, state.k, state)

    logger.info(
        "AB/Push-Pull: %d rounds, alpha=%.6g, relative residual %.3e",
        cfg.horizon, cfg.alpha, trace[-1].relative_residual,
    )
    return RunResult("ab_push_pull", cfg.alpha, state, trace, schedule, phis, pis, x_star)


def run_push_diging(
    f: ObjectiveFamily,
    graphs: Union[DigraphSequence, MixingSchedule],
    cfg: RunConfig,
    on_round: Optional[RoundCallback] = None,
    x_star: Optional[np.ndarray] = None,
    scheme: str = "uniform",
) -> RunResult:
    """Push-DIGing baseline over the column-stochastic half of the schedule.

    The trace reuses the AB/Push-Pull schema: x-average and D use uniform weights,
    S uses the push-sum weights v^k / n.
    """
    schedule = _prepare(graphs, cfg.horizon, scheme)
    if schedule.n != f.n:
        raise ValueError(f"graphs have {schedule.n} nodes but the objective has {f.n} agents")
    n = f.n
    x_star = optimum(f) if x_star is None else np.asarray(x_star, dtype=float)
    uniform = np.full(n, 1.0 / n)

    x = cfg.initial_iterates(n, f.p)
    grad = f.grad_all(x)
    u, v, y = x.copy(), np.ones(n), grad.copy()
    state = NetworkState(x=x, y=y, k=0, grad=grad)
    initial = float(np.sum((x - x_star) ** 2))
    trace = [trace_record(state, uniform, v / n, x_star, initial)]
    pis = [StochasticVector(v / n)]
    _notify(on_round, 0, state)

    for k, rnd in enumerate(schedule.rounds):
        C = rnd.B.entries
        with np.errstate(over="ignore", invalid="ignore"):
            u = C @ (u - cfg.alpha * y)
            v = C @ v
            if v.min() < MIN_PUSH_SUM_WEIGHT:
                raise DivergenceError(k + 1, int(np.argmin(v)), reason="push-sum weight below 1e-12")
            x = u / v[:, None]
            _check_finite(x, k + 1)
            grad_next = f.grad_all(x)
            y = C @ y + grad_next - grad
            _check_finite(y, k + 1)
        grad = grad_next
        state = NetworkState(x=x, y=y, k=k + 1, grad=grad)
        pis.append(StochasticVector(v / n))
        if _is_traced(state.k, cfg):
            trace.append(trace_record(state, uniform, v / n, x_star, initial))
            _notify(on_round, state.k, state)

    logger.info(
        "Push-DIGing: %d rounds, alpha=%.6g, relative residual %.3e",
        cfg.horizon, cfg.alpha, trace[-1].relative_residual,
    )
    phis = [StochasticVector(uniform)] * (schedule.horizon + 1)
    return RunResult("push_diging", cfg.alpha, state, trace, schedule, phis, pis, x_star)
