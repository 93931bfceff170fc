"""Analysis quantities for AB/Push-Pull and checks of the inequalities that bound them.

Three quantities follow a trajectory:

  opt_gap       ||x_hat^k - x*||            x_hat^k = sum_i [phi_k]_i x_i^k
  x_dispersion  D(x^k, phi_k) = sqrt(sum_i [phi_k]_i ||x_i^k - x_hat^k||^2)
  y_dispersion  S(y^k, pi_k)  = sqrt(sum_i [pi_k]_i ||y_i^k / [pi_k]_i - sum_l y_l^k||^2)

Stacked as V_k they satisfy V_{k+1} <= M_k(alpha) V_k, and M_k(alpha) <= M(alpha) once
per-round constants are replaced by their worst values over the horizon. The stepsize
range keeps rho(M(alpha)) < 1, which is certified by a diagonal and determinant test.

CompositeChecker replays a trajectory round by round and records, per inequality
family, how many rounds were checked or skipped and the smallest margin seen.

Usage:
  from pushpull import diagnostics
  consts = diagnostics.uniform_constants(schedule, phis, pis, metrics)
  bound = consts.stepsize(problem.L, problem.mu, problem.n)
  cert = diagnostics.spectral_certificate(consts.bound_matrix(problem.L, problem.mu, problem.n, bound.alpha))
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from pushpull.graph_core import ConnectivityError, Digraph, GraphMetrics, round_metrics
from pushpull.mixing import (
    ColumnStochasticMatrix,
    MixingSchedule,
    RowStochasticMatrix,
    StochasticVector,
    weight_lower_bound,
    weight_sequences,
)
from pushpull.objectives import ObjectiveFamily, contraction_factor

if TYPE_CHECKING:
    from pushpull.engine import NetworkState

logger = logging.getLogger(__name__)

Weights = Union[StochasticVector, np.ndarray, Sequence[float]]

RTOL = 1e-8
IDENTITY_RTOL = 1e-10
BOUNDARY_BACKOFF = 1e-2
SIGMA_MODES = ("empirical", "worst_case")
STEPSIZE_TERMS = ("x_dispersion", "y_dispersion", "determinant", "gradient")
CHECK_FAMILIES = (
    "conservation",
    "mean_recursion",
    "y_norm_identity",
    "optimality_gap",
    "gradient_sum",
    "x_dispersion",
    "x_step",
    "y_dispersion",
    "composite",
    "composite_no_gamma",
    "composite_uniform",
    "phi_lower_bound",
    "pi_lower_bound",
)


def _weights(w: Weights) -> np.ndarray:
    return w.values if isinstance(w, StochasticVector) else np.asarray(w, dtype=float)


def _positive_weights(w: Weights, n: int) -> np.ndarray:
    values = _weights(w)
    if values.shape != (n,):
        raise ValueError(f"weight vector has shape {values.shape}, expected {(n,)}")
    if np.any(values <= 0):
        raise ValueError("weight vector has a nonpositive entry")
    return values


def _stack(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"expected an n x p stack, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# weighted averages, dispersions and norms
# ---------------------------------------------------------------------------


def weighted_average(x, phi: Weights) -> np.ndarray:
    x = _stack(x)
    w = _weights(phi)
    if w.shape != (x.shape[0],):
        raise ValueError(f"weight vector has shape {w.shape}, expected {(x.shape[0],)}")
    return w @ x


def dispersion_x(x, phi: Weights) -> float:
    x = _stack(x)
    w = _positive_weights(phi, x.shape[0])
    dev = x - w @ x
    return math.sqrt(float(w @ np.sum(dev * dev, axis=1)))


def dispersion_y(y, pi: Weights) -> float:
    y = _stack(y)
    w = _positive_weights(pi, y.shape[0])
    dev = y / w[:, None] - y.sum(axis=0)
    return math.sqrt(float(w @ np.sum(dev * dev, axis=1)))


def weighted_norm(x, a: Weights) -> float:
    """||x||_a = sqrt(sum_i a_i ||x_i||^2)."""
    x = _stack(x)
    w = _weights(a)
    return math.sqrt(float(w @ np.sum(x * x, axis=1)))


def inverse_weighted_norm(y, a: Weights) -> float:
    """||y||_{a^-1} = sqrt(sum_i ||y_i||^2 / a_i)."""
    y = _stack(y)
    w = _positive_weights(a, y.shape[0])
    return math.sqrt(float(np.sum(np.sum(y * y, axis=1) / w)))


# ---------------------------------------------------------------------------
# identities and one-step inequalities (each returns (lhs, rhs))
# ---------------------------------------------------------------------------


def combination_identity(gammas, u, point=None) -> Dict[str, Tuple[float, float]]:
    """Both sides of the weighted-combination identities.

    ``norm_of_sum`` holds for any real weights; ``pairwise_dispersion`` and
    ``shifted_average`` need the weights to sum to one.
    """
    g = np.asarray(gammas, dtype=float)
    u = _stack(u)
    point = np.zeros(u.shape[1]) if point is None else np.asarray(point, dtype=float)
    sq = np.sum(u * u, axis=1)
    pair = np.sum((u[:, None, :] - u[None, :, :]) ** 2, axis=2)
    pairwise = 0.5 * float(g @ pair @ g)
    combo = g @ u
    around_mean = float(g @ np.sum((u - combo) ** 2, axis=1))
    around_point = float(g @ np.sum((u - point) ** 2, axis=1))
    shifted = combo - point
    return {
        "norm_of_sum": (float(combo @ combo), float(g.sum() * (g @ sq)) - pairwise),
        "pairwise_dispersion": (pairwise, around_mean),
        "shifted_average": (float(shifted @ shifted), around_point - around_mean),
    }


def edge_dispersion_bound(g: Digraph, metrics: GraphMetrics, x) -> Tuple[float, float]:
    """sum over edges of ||x_j - x_l||^2 against (1 / (D K)) sum over pairs j < l."""
    x = _stack(x)
    pair = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    lhs = float(sum(pair[j, l] for j, l in g.edges))
    rhs = float(np.sum(np.triu(pair, k=1))) / (metrics.diameter * metrics.max_edge_utility)
    return lhs, rhs


def row_mixing_bound(
    A: RowStochasticMatrix,
    metrics: GraphMetrics,
    pi: Weights,
    x,
    u=None,
) -> Tuple[float, float]:
    """Contraction of a row-stochastic mixing step, with phi = A^T pi.

    lhs = sum_i pi_i ||(A x)_i - u||^2
    rhs = sum_j phi_j ||x_j - u||^2 - min(pi) a^2 / (max(phi)^2 D K) * D(x, phi)^2
    """
    x = _stack(x)
    p = _weights(pi)
    phi = A.entries.T @ p
    u = np.zeros(x.shape[1]) if u is None else np.asarray(u, dtype=float)
    z = A.entries @ x
    lhs = float(p @ np.sum((z - u) ** 2, axis=1))
    spread = float(phi @ np.sum((x - phi @ x) ** 2, axis=1))
    coef = p.min() * A.min_positive**2 / (phi.max() ** 2 * metrics.diameter * metrics.max_edge_utility)
    rhs = float(phi @ np.sum((x - u) ** 2, axis=1)) - coef * spread
    return lhs, rhs


def column_mixing_bound(
    B: ColumnStochasticMatrix,
    metrics: GraphMetrics,
    nu: Weights,
    y,
) -> Tuple[float, float]:
    """S(B y, B nu) against tau S(y, nu) for a column-stochastic mixing step."""
    y = _stack(y)
    v = _positive_weights(nu, y.shape[0])
    pi = B.entries @ v
    tau_sq = 1.0 - (v.min() ** 2 * B.min_positive**2) / (
        v.max() ** 2 * pi.max() * metrics.diameter * metrics.max_edge_utility
    )
    return dispersion_y(B.entries @ y, pi), math.sqrt(max(tau_sq, 0.0)) * dispersion_y(y, v)


def gradient_contraction(f: ObjectiveFamily, x, x_star, alpha: float) -> Tuple[float, float]:
    """||x - x* - alpha grad f(x)|| against q(alpha) ||x - x*|| for the average cost."""
    x = np.asarray(x, dtype=float)
    grad = f.grad_all(np.broadcast_to(x, (f.n, f.p))).mean(axis=0)
    lhs = float(np.linalg.norm(x - x_star - alpha * grad))
    return lhs, contraction_factor(alpha, f.L, f.mu) * float(np.linalg.norm(x - x_star))


# ---------------------------------------------------------------------------
# per-round constants, composite vector and matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoundConstants:
    alpha: float
    q: float
    c: float
    tau: float
    r: float
    gamma: float
    varphi: float
    varphi_next: float
    connected: bool = True


def _stepsize_ceiling(L: float, n: int) -> float:
    return 2.0 / (n * L)


def round_constants(
    phi_k: Weights,
    phi_k1: Weights,
    pi_k: Weights,
    pi_k1: Weights,
    metrics: Optional[GraphMetrics],
    a: float,
    b: float,
    L: float,
    mu: float,
    n: int,
    alpha: float,
) -> RoundConstants:
    """Evaluate q_k, c_k, tau_k, r_k, gamma_k and varphi_k for one round.

    ``metrics`` is None for a round that is not strongly connected; c and tau are then
    reported as nan with ``connected=False``.
    """
    if not 0.0 < alpha < _stepsize_ceiling(L, n):
        raise ValueError(f"alpha must lie in (0, 2/(nL)) = (0, {_stepsize_ceiling(L, n)!r}), got {alpha!r}")
    f0, f1 = _positive_weights(phi_k, n), _positive_weights(phi_k1, n)
    p0, p1 = _positive_weights(pi_k, n), _positive_weights(pi_k1, n)

    q = contraction_factor(alpha * n * p0.min(), L, mu)
    r = math.sqrt(n) + 1.0 / math.sqrt(p1.min())
    gamma = math.sqrt(float(np.max(f1 * p0)))
    varphi, varphi_next = math.sqrt(1.0 / f0.min()), math.sqrt(1.0 / f1.min())

    if metrics is None:
        return RoundConstants(alpha, q, math.nan, math.nan, r, gamma, varphi, varphi_next, connected=False)
    dk = metrics.diameter * metrics.max_edge_utility
    if dk == 0:
        c = tau = 0.0
    else:
        c = math.sqrt(max(1.0 - f1.min() * a * a / (f0.max() ** 2 * dk), 0.0))
        tau = math.sqrt(max(1.0 - p0.min() ** 2 * b * b / (p0.max() ** 2 * p1.max() * dk), 0.0))
    return RoundConstants(alpha, q, c, tau, r, gamma, varphi, varphi_next)


@dataclass(frozen=True)
class CompositeVector:
    opt_gap: float
    x_dispersion: float
    y_dispersion: float

    def as_array(self) -> np.ndarray:
        return np.array([self.opt_gap, self.x_dispersion, self.y_dispersion])


def composite_vector(state: "NetworkState", phi: Weights, pi: Weights, x_star) -> CompositeVector:
    x_hat = weighted_average(state.x, phi)
    return CompositeVector(
        opt_gap=float(np.linalg.norm(x_hat - np.asarray(x_star, dtype=float))),
        x_dispersion=dispersion_x(state.x, phi),
        y_dispersion=dispersion_y(state.y, pi),
    )


def composite_matrix(consts: RoundConstants, L: float, n: int, alpha: float, use_gamma: bool = True) -> np.ndarray:
    """M_k(alpha); ``use_gamma=False`` replaces gamma_k by its upper bound 1."""
    if not consts.connected:
        raise ConnectivityError("round constants of a round that is not strongly connected")
    if alpha != consts.alpha:
        raise ValueError(f"constants were evaluated at alpha={consts.alpha!r}, not {alpha!r}")
    if not 0.0 <= alpha < _stepsize_ceiling(L, n):
        raise ValueError(f"alpha must lie in [0, 2/(nL)), got {alpha!r}")
    g = consts.gamma if use_gamma else 1.0
    sn = math.sqrt(n)
    v, v1 = consts.varphi, consts.varphi_next
    r, c = consts.r, consts.c
    return np.array(
        [
            [consts.q, alpha * L * sn * v, alpha],
            [alpha * L * g * sn * v, c + alpha * L * g * sn * v, alpha * g],
            [alpha * L * L * r * sn * v, L * r * (c * v1 + v) + alpha * L * L * r * sn * v, consts.tau + alpha * L * r],
        ]
    )


def _check_uniform_inputs(c: float, tau: float, r: float, varphi: float, sigma: float, L: float, mu: float, n: int) -> None:
    if not (0.0 <= c < 1.0 and 0.0 <= tau < 1.0):
        raise ValueError(f"c={c!r} and tau={tau!r} must lie in [0, 1); are the rounds strongly connected?")
    if min(r, varphi, sigma, L, mu) <= 0 or n < 1:
        raise ValueError("r, varphi, sigma, L and mu must be positive")


def bound_matrix(
    c: float,
    tau: float,
    r: float,
    varphi: float,
    sigma: float,
    L: float,
    mu: float,
    n: int,
    alpha: float,
) -> np.ndarray:
    """Uniform upper bound M(alpha) of every M_k(alpha), valid for alpha < 2/(n(L+mu))."""
    _check_uniform_inputs(c, tau, r, varphi, sigma, L, mu, n)
    ceiling = 2.0 / (n * (L + mu))
    if not 0.0 <= alpha < ceiling:
        raise ValueError(f"alpha must lie in [0, 2/(n(L+mu))) = [0, {ceiling!r}), got {alpha!r}")
    off = alpha * L * math.sqrt(n) * varphi
    return np.array(
        [
            [1.0 - alpha * n * sigma * mu, off, alpha],
            [off, c + off, alpha],
            [L * r * off, L * r * (1.0 + c) * varphi + L * r * off, tau + alpha * L * r],
        ]
    )


@dataclass(frozen=True)
class StepsizeBound:
    terms: Tuple[float, float, float, float]
    eta: float
    limit: float
    alpha: float

    def as_dict(self) -> Dict[str, float]:
        out = dict(zip(STEPSIZE_TERMS, self.terms))
        out.update(eta=self.eta, limit=self.limit, alpha=self.alpha)
        return out


def stepsize_upper_bound(
    c: float,
    tau: float,
    r: float,
    varphi: float,
    sigma: float,
    L: float,
    mu: float,
    n: int,
) -> StepsizeBound:
    """Largest stepsize range that keeps rho(M(alpha)) < 1.

    ``limit`` is the minimum of the four expressions; ``alpha`` sits BOUNDARY_BACKOFF
    (relative) inside it because the certificate inequalities are strict.
    """
    _check_uniform_inputs(c, tau, r, varphi, sigma, L, mu, n)
    sn = math.sqrt(n)
    eta = L * (n * sigma * mu + L * sn * varphi) * ((1.0 + c) * r * varphi + (1.0 - c) * r + (1.0 - tau) * sn * varphi)
    terms = (
        (1.0 - c) / (L * sn * varphi),
        (1.0 - tau) / (L * r),
        n * sigma * mu * (1.0 - tau) * (1.0 - c) / eta,
        2.0 / (n * (L + mu)),
    )
    limit = min(terms)
    return StepsizeBound(terms=terms, eta=eta, limit=limit, alpha=limit * (1.0 - BOUNDARY_BACKOFF))


@dataclass(frozen=True)
class SpectralCertificate:
    rho: float
    certified: bool
    det_gap: float
    diagonal_ok: bool


def spectral_certificate(M) -> SpectralCertificate:
    """rho(M) from the eigenvalues, plus the sufficient test diag(M) < 1 and det(I - M) > 0."""
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {M.shape}")
    rho = float(np.max(np.abs(np.linalg.eigvals(M))))
    m = np.eye(3) - M
    det_gap = float(
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )
    diagonal_ok = bool(np.all(np.diag(M) < 1.0))
    return SpectralCertificate(rho=rho, certified=diagonal_ok and det_gap > 0.0, det_gap=det_gap, diagonal_ok=diagonal_ok)


@dataclass(frozen=True)
class UniformConstants:
    c: float
    tau: float
    r: float
    varphi: float
    sigma: float
    sigma_mode: str = "empirical"

    def stepsize(self, L: float, mu: float, n: int) -> StepsizeBound:
        return stepsize_upper_bound(self.c, self.tau, self.r, self.varphi, self.sigma, L, mu, n)

    def bound_matrix(self, L: float, mu: float, n: int, alpha: float) -> np.ndarray:
        return bound_matrix(self.c, self.tau, self.r, self.varphi, self.sigma, L, mu, n, alpha)


def uniform_constants(
    schedule: MixingSchedule,
    phis: Sequence[StochasticVector],
    pis: Sequence[StochasticVector],
    metrics: Sequence[Optional[GraphMetrics]],
    sigma_mode: str = "empirical",
) -> UniformConstants:
    """Worst per-round c, tau, r, varphi over the schedule and the lower bound sigma."""
    if sigma_mode not in SIGMA_MODES:
        raise ValueError(f"unknown sigma mode '{sigma_mode}' (expected one of {SIGMA_MODES})")
    K = schedule.horizon
    if K == 0:
        raise ValueError("uniform constants need at least one round")
    if len(phis) != K + 1 or len(pis) != K + 1 or len(metrics) != K:
        raise ValueError("weight and metric sequences do not match the schedule horizon")
    for k, m in enumerate(metrics):
        if m is None:
            raise ConnectivityError(f"round {k} is not strongly connected; uniform constants do not exist")

    n, a, b = schedule.n, schedule.a, schedule.b
    phi_min = np.array([p.min for p in phis])
    phi_max = np.array([p.max for p in phis])
    pi_min = np.array([p.min for p in pis])
    pi_max = np.array([p.max for p in pis])
    dk = np.array([m.diameter * m.max_edge_utility for m in metrics], dtype=float)
    with np.errstate(divide="ignore"):
        c_sq = np.where(dk > 0, 1.0 - phi_min[1:] * a * a / (phi_max[:-1] ** 2 * dk), 0.0)
        tau_sq = np.where(dk > 0, 1.0 - pi_min[:-1] ** 2 * b * b / (pi_max[:-1] ** 2 * pi_max[1:] * dk), 0.0)
    c = float(np.sqrt(np.clip(c_sq, 0.0, None)).max())
    tau = float(np.sqrt(np.clip(tau_sq, 0.0, None)).max())
    r = float((math.sqrt(n) + 1.0 / np.sqrt(pi_min[1:])).max())
    varphi = float(np.sqrt(1.0 / phi_min).max())
    if sigma_mode == "empirical":
        sigma = float(pi_min.min())
    else:
        sigma = weight_lower_bound(b, n, schedule.window)
    logger.debug("uniform constants: c=%.6g tau=%.6g r=%.6g varphi=%.6g sigma=%.6g (%s)", c, tau, r, varphi, sigma, sigma_mode)
    return UniformConstants(c, tau, r, varphi, sigma, sigma_mode)


# ---------------------------------------------------------------------------
# trajectory verification
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    family: str
    checked: int = 0
    skipped: int = 0
    violations: int = 0
    worst_margin: float = math.inf
    worst_round: Optional[int] = None
    first_violation: Optional[str] = None
    first_violation_round: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def record(self, k: int, lhs, rhs, slack) -> bool:
        """Check lhs <= rhs + slack (elementwise); margin is rhs - lhs."""
        lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        gap = rhs - lhs
        margin = float(gap.min())
        self.checked += 1
        if margin < self.worst_margin:
            self.worst_margin, self.worst_round = margin, k
        bad = bool(np.any(gap < -np.asarray(slack)) or not np.all(np.isfinite(gap)))
        if bad:
            self.violations += 1
            if self.first_violation is None:
                self.first_violation_round = k
                self.first_violation = (
                    f"{self.family} violated at round {k}: lhs={lhs.tolist()!r} rhs={rhs.tolist()!r} margin={margin!r}"
                )
        return not bad

    def to_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        margin = "n/a" if self.checked == 0 else f"{self.worst_margin:.6e}"
        worst = "n/a" if self.worst_round is None else str(self.worst_round)
        return (
            f"{status} {self.family:<20} checked={self.checked} skipped={self.skipped} "
            f"violations={self.violations} worst_margin={margin} worst_round={worst}"
        )


@dataclass
class VerificationReport:
    results: Dict[str, CheckResult] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    @property
    def first_violation(self) -> Optional[str]:
        failing = [r for r in self.results.values() if not r.passed]
        if not failing:
            return None
        return min(failing, key=lambda r: r.first_violation_round).first_violation

    def __getitem__(self, family: str) -> CheckResult:
        return self.results[family]

    def to_text(self) -> str:
        lines = [r.to_line() for r in self.results.values()]
        lines.append(f"verification: {'PASS' if self.passed else 'FAIL'}")
        if not self.passed:
            lines.append(f"first violation: {self.first_violation}")
        return "\n".join(lines) + "\n"


class CompositeChecker:
    """Streaming verifier fed with consecutive (before, after) states of one run.

    Inequalities are checked only inside the stepsize range they are stated for:
    the optimality-gap and per-round composite relations need alpha < 2/(nL), the
    uniform composite relation needs alpha < 2/(n(L+mu)). Rounds that are not
    strongly connected are skipped for every relation that uses c_k or tau_k.
    """

    def __init__(
        self,
        schedule: MixingSchedule,
        f: ObjectiveFamily,
        x_star,
        alpha: float,
        metrics: Optional[Sequence[Optional[GraphMetrics]]] = None,
        phis: Optional[Sequence[StochasticVector]] = None,
        pis: Optional[Sequence[StochasticVector]] = None,
        uniform: Optional[UniformConstants] = None,
    ):
        self.schedule = schedule
        self.f = f
        self.x_star = np.asarray(x_star, dtype=float)
        self.alpha = float(alpha)
        self.n = schedule.n
        self.L, self.mu = f.L, f.mu
        if phis is None or pis is None:
            phis, pis = weight_sequences(schedule)
        self.phis, self.pis = list(phis), list(pis)
        self.metrics = list(round_metrics(schedule.graphs) if metrics is None else metrics)
        if uniform is None and schedule.horizon > 0:
            try:
                uniform = uniform_constants(schedule, self.phis, self.pis, self.metrics)
            except ConnectivityError:
                logger.info("schedule has rounds that are not strongly connected; uniform bound not checked")
        self.uniform = uniform
        self.per_round_ok = self.alpha < _stepsize_ceiling(self.L, self.n)
        self.uniform_ok = uniform is not None and self.alpha < 2.0 / (self.n * (self.L + self.mu))
        self.uniform_matrix = uniform.bound_matrix(self.L, self.mu, self.n, self.alpha) if self.uniform_ok else None
        self.phi_floor = weight_lower_bound(schedule.a, self.n, schedule.window)
        self.pi_floor = weight_lower_bound(schedule.b, self.n, schedule.window)
        self.results = {name: CheckResult(name) for name in CHECK_FAMILIES}
        self.scale: Optional[float] = None
        self._seen: set = set()

    def _check_state(self, j: int, state: "NetworkState") -> None:
        if j in self._seen:
            return
        self._seen.add(j)
        total = state.y.sum(axis=0)
        grad_total = self.f.grad_all(state.x).sum(axis=0)
        self.results["conservation"].record(
            j, float(np.linalg.norm(total - grad_total)), 0.0, 1e-9 * (1.0 + float(np.linalg.norm(grad_total)))
        )
        pi = self.pis[j].values
        lhs = inverse_weighted_norm(state.y, pi) ** 2
        rhs = dispersion_y(state.y, pi) ** 2 + float(total @ total)
        self.results["y_norm_identity"].record(j, abs(lhs - rhs), 0.0, IDENTITY_RTOL * (abs(lhs) + self.scale))
        self.results["phi_lower_bound"].record(j, self.phi_floor, self.phis[j].min, 0.0)
        self.results["pi_lower_bound"].record(j, self.pi_floor, self.pis[j].min, 0.0)

    def observe(self, k: int, before: "NetworkState", after: "NetworkState") -> None:
        if before.k != k or after.k != k + 1:
            raise ValueError(f"expected states for rounds {k} and {k + 1}, got {before.k} and {after.k}")
        if k >= self.schedule.horizon:
            raise ValueError(f"round {k} is past the schedule horizon {self.schedule.horizon}")
        phi0, phi1 = self.phis[k], self.phis[k + 1]
        pi0, pi1 = self.pis[k], self.pis[k + 1]
        V = composite_vector(before, phi0, pi0, self.x_star)
        V1 = composite_vector(after, phi1, pi1, self.x_star)
        if self.scale is None:
            self.scale = 1.0 + float(np.linalg.norm(self.x_star)) * math.sqrt(self.n) + float(np.linalg.norm(V.as_array()))
        atol = 1e-12 * self.scale
        res = self.results
        self._check_state(k, before)
        self._check_state(k + 1, after)

        alpha, L, n = self.alpha, self.L, self.n
        sn = math.sqrt(n)
        varphi, varphi1 = math.sqrt(1.0 / phi0.min), math.sqrt(1.0 / phi1.min)
        y_norm = float(np.linalg.norm(before.y))

        predicted = weighted_average(before.x, phi0) - alpha * weighted_average(before.y, phi1)
        drift = float(np.linalg.norm(weighted_average(after.x, phi1) - predicted))
        res["mean_recursion"].record(k, drift, 0.0, 1e-10 * self.scale)

        total = float(np.linalg.norm(before.y.sum(axis=0)))
        bound = L * sn * varphi * (V.opt_gap + V.x_dispersion)
        res["gradient_sum"].record(k, total, bound, RTOL * bound + atol)

        if self.per_round_ok:
            q = contraction_factor(alpha * n * pi0.min, L, self.mu)
            rhs = q * V.opt_gap + alpha * L * sn * varphi * V.x_dispersion + alpha * V.y_dispersion
            res["optimality_gap"].record(k, V1.opt_gap, rhs, RTOL * rhs + atol)
        else:
            res["optimality_gap"].skipped += 1

        metrics = self.metrics[k]
        if metrics is None or not self.per_round_ok:
            for name in ("x_dispersion", "x_step", "y_dispersion", "composite", "composite_no_gamma"):
                res[name].skipped += 1
            if metrics is None:
                logger.debug("round %d is not strongly connected; c_k and tau_k are undefined", k)
        else:
            consts = round_constants(phi0, phi1, pi0, pi1, metrics, self.schedule.a, self.schedule.b, L, self.mu, n, alpha)
            rhs = consts.c * V.x_dispersion + alpha * dispersion_x(before.y, phi1)
            res["x_dispersion"].record(k, V1.x_dispersion, rhs, RTOL * rhs + atol)

            step_len = float(np.linalg.norm(after.x - before.x))
            rhs = (consts.c * varphi1 + varphi) * V.x_dispersion + alpha * y_norm
            res["x_step"].record(k, step_len, rhs, RTOL * rhs + atol)

            rhs = consts.tau * V.y_dispersion + alpha * L * consts.r * y_norm + L * consts.r * (consts.c * varphi1 + varphi) * V.x_dispersion
            res["y_dispersion"].record(k, V1.y_dispersion, rhs, RTOL * rhs + atol)

            vec = V.as_array()
            for name, use_gamma in (("composite", True), ("composite_no_gamma", False)):
                rhs = composite_matrix(consts, L, n, alpha, use_gamma=use_gamma) @ vec
                res[name].record(k, V1.as_array(), rhs, RTOL * np.abs(rhs) + atol)
            logger.debug("round %d: c=%.6g tau=%.6g q=%.6g gamma=%.6g", k, consts.c, consts.tau, consts.q, consts.gamma)

        if self.uniform_matrix is not None:
            rhs = self.uniform_matrix @ V.as_array()
            res["composite_uniform"].record(k, V1.as_array(), rhs, RTOL * np.abs(rhs) + atol)
        else:
            res["composite_uniform"].skipped += 1

    def report(self) -> VerificationReport:
        return VerificationReport(dict(self.results))


def verify_composite_relation(
    states: Sequence["NetworkState"],
    schedule: MixingSchedule,
    f: ObjectiveFamily,
    x_star,
    alpha: float,
    metrics: Optional[Sequence[Optional[GraphMetrics]]] = None,
    phis: Optional[Sequence[StochasticVector]] = None,
    pis: Optional[Sequence[StochasticVector]] = None,
) -> VerificationReport:
    """Check every analysis inequality along a stored trajectory of consecutive states."""
    if len(states) < 2:
        raise ValueError("verification needs at least two consecutive states")
    checker = CompositeChecker(schedule, f, x_star, alpha, metrics=metrics, phis=phis, pis=pis)
    for before, after in zip(states, states[1:]):
        checker.observe(before.k, before, after)
    report = checker.report()
    logger.info("verified %d rounds: %s", len(states) - 1, "PASS" if report.passed else "FAIL")
    return report


def composite_norms(trace_vectors: Sequence[CompositeVector]) -> List[float]:
    """Euclidean norms of a sequence of composite vectors."""
    return [float(np.linalg.norm(v.as_array())) for v in trace_vectors]
