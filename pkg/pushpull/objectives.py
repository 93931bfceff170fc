"""Per-agent cost oracles: the sensor-fusion least-squares family and its constants.

Agent i holds f_i(x) = ||z_i - H_i x||^2 + lambda_i ||x||^2, so the network solves
min_x (1/n) sum_i f_i(x). Each f_i is quadratic with Hessian
Q_i = 2 (H_i^T H_i + lambda_i I), which gives closed forms for the optimum and for

  L  = max_i lambda_max(Q_i)           (smoothness of every f_i)
  mu = lambda_min((1/n) sum_i Q_i)     (strong convexity of the average)

Generated instances draw H_i uniformly and rescale it so lambda_max(2 H_i^T H_i) = 1,
i.e. the data term alone is 1-smooth; the regularizer is added on top.

Problem files (``save_problem`` / ``load_problem``) are YAML:
  kind: sensor_fusion
  n: 2
  p: 3
  s: 1
  seed: 4
  lambdas: [0.01, 0.01]
  H: [[...s*p entries, row-major...], ...]   # one list per agent
  z: [[...s entries...], ...]
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Optional, Protocol, Sequence, Tuple

import numpy as np
import yaml

logger = logging.getLogger(__name__)


class ObjectiveFamily(Protocol):
    """What the engine and the diagnostics need from a set of agent costs."""

    @property
    def n(self) -> int: ...

    @property
    def p(self) -> int: ...

    @property
    def L(self) -> float: ...

    @property
    def mu(self) -> float: ...

    def grad(self, i: int, x: np.ndarray) -> np.ndarray: ...

    def grad_all(self, X: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class SensorFusion:
    H: np.ndarray
    z: np.ndarray
    lambdas: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        H = np.array(self.H, dtype=float, copy=True)
        z = np.array(self.z, dtype=float, copy=True)
        lambdas = np.array(self.lambdas, dtype=float, copy=True)
        if H.ndim != 3:
            raise ValueError(f"H must have shape (n, s, p), got {H.shape}")
        n, s, _ = H.shape
        if z.shape != (n, s):
            raise ValueError(f"z must have shape {(n, s)}, got {z.shape}")
        if lambdas.ndim == 0:
            lambdas = np.full(n, float(lambdas))
        if lambdas.shape != (n,):
            raise ValueError(f"lambdas must have shape {(n,)}, got {lambdas.shape}")
        if np.any(lambdas < 0):
            raise ValueError("regularization weights must be non-negative")
        for arr in (H, z, lambdas):
            arr.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "lambdas", lambdas)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def s(self) -> int:
        return self.H.shape[1]

    @property
    def p(self) -> int:
        return self.H.shape[2]

    @cached_property
    def hessians(self) -> np.ndarray:
        """Q_i = 2 (H_i^T H_i + lambda_i I), shape (n, p, p)."""
        gram = np.einsum("isp,isq->ipq", self.H, self.H)
        Q = 2.0 * (gram + self.lambdas[:, None, None] * np.eye(self.p)[None, :, :])
        Q.setflags(write=False)
        return Q

    @cached_property
    def linear(self) -> np.ndarray:
        """g_i = 2 H_i^T z_i, so that grad f_i(x) = Q_i x - g_i."""
        g = 2.0 * np.einsum("isp,is->ip", self.H, self.z)
        g.setflags(write=False)
        return g

    @cached_property
    def _constants(self) -> Tuple[float, float]:
        L = float(max(np.linalg.eigvalsh(Q)[-1] for Q in self.hessians))
        mu = float(np.linalg.eigvalsh(self.hessians.mean(axis=0))[0])
        return L, mu

    @property
    def L(self) -> float:
        return self._constants[0]

    @property
    def mu(self) -> float:
        return self._constants[1]

    def grad(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.hessians[i] @ np.asarray(x, dtype=float) - self.linear[i]

    def grad_all(self, X: np.ndarray) -> np.ndarray:
        """Row i is grad f_i(X[i])."""
        X = np.asarray(X, dtype=float)
        if X.shape != (self.n, self.p):
            raise ValueError(f"expected iterates of shape {(self.n, self.p)}, got {X.shape}")
        return np.einsum("ipq,iq->ip", self.hessians, X) - self.linear

    def value(self, i: int, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        residual = self.z[i] - self.H[i] @ x
        return float(residual @ residual + self.lambdas[i] * (x @ x))

    def value_all(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        residual = self.z - np.einsum("isp,ip->is", self.H, X)
        return np.sum(residual * residual, axis=1) + self.lambdas * np.sum(X * X, axis=1)

    def average_grad(self, x: np.ndarray) -> np.ndarray:
        """grad f(x) for f = (1/n) sum_i f_i at a single point."""
        x = np.asarray(x, dtype=float)
        return self.hessians.mean(axis=0) @ x - self.linear.mean(axis=0)


def sensor_fusion_from_arrays(H, z, lambdas, seed: Optional[int] = None) -> SensorFusion:
    return SensorFusion(np.asarray(H, dtype=float), np.asarray(z, dtype=float), np.asarray(lambdas, dtype=float), seed)


def make_sensor_fusion(n: int, p: int, s: int, lam: float, seed: int) -> SensorFusion:
    """Random instance; rng is numpy's PCG64 seeded with ``seed``."""
    if min(n, p, s) < 1:
        raise ValueError(f"dimensions must be positive, got n={n} p={p} s={s}")
    if not lam > 0:
        raise ValueError(f"regularization weight must be positive, got {lam}")
    rng = np.random.Generator(np.random.PCG64(seed))
    H = rng.uniform(size=(n, s, p))
    spectral = np.linalg.norm(H, ord=2, axis=(1, 2))
    # ||sqrt(2) H_i||_2 = 1  <=>  lambda_max(2 H_i^T H_i) = 1
    H = H / (np.sqrt(2.0) * spectral)[:, None, None]
    x_true = rng.standard_normal(p)
    noise = rng.standard_normal((n, s))
    z = np.einsum("isp,p->is", H, x_true) + noise
    logger.debug("sensor fusion instance n=%d p=%d s=%d lambda=%g seed=%d", n, p, s, lam, seed)
    return SensorFusion(H, z, np.full(n, float(lam)), seed)


def optimum(q: SensorFusion) -> np.ndarray:
    """Unique minimizer of sum_i f_i."""
    if not q.mu > 0:
        raise ValueError(f"the average cost is not strongly convex (mu = {q.mu!r})")
    lhs = q.hessians.sum(axis=0)
    rhs = q.linear.sum(axis=0)
    try:
        return np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as e:
        raise ValueError(f"normal equations are singular: {e}") from e


def constants(q: SensorFusion) -> Tuple[float, float]:
    """(L, mu)."""
    return q.L, q.mu


@dataclass
class ConditionReport:
    trials: int
    checks: Dict[str, int] = field(default_factory=dict)
    first_violation: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.first_violation is None

    def __bool__(self) -> bool:
        return self.ok


def contraction_factor(alpha: float, L: float, mu: float) -> float:
    """q(alpha) = max(|1 - alpha mu|, |1 - alpha L|)."""
    return max(abs(1.0 - alpha * mu), abs(1.0 - alpha * L))


def check_lipschitz_and_convexity(
    f: SensorFusion,
    trials: int = 100,
    seed: int = 0,
    alphas: Optional[Sequence[float]] = None,
    rtol: float = 1e-10,
) -> ConditionReport:
    """Sample point pairs and check smoothness, strong convexity and gradient contraction.

    The contraction check runs on the average cost against its minimizer for every
    stepsize in ``alphas`` (ten evenly spaced points inside (0, 2/L) by default).
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    L, mu = f.L, f.mu
    x_star = optimum(f)
    if alphas is None:
        alphas = (2.0 / L) * np.arange(1, 11) / 11.0
    scale = 1.0 + float(np.linalg.norm(x_star))
    atol = 1e-12 * scale
    rng = np.random.Generator(np.random.PCG64(seed))
    report = ConditionReport(trials=trials, checks={"lipschitz": 0, "strong_convexity": 0, "contraction": 0})

    def violated(family: str, t: int, lhs: float, rhs: float) -> bool:
        report.checks[family] += 1
        if lhs > rhs + rtol * abs(rhs) + atol:
            if report.first_violation is None:
                report.first_violation = f"{family} violated at trial {t}: lhs={lhs!r} rhs={rhs!r}"
            return True
        return False

    for t in range(trials):
        x = x_star + scale * rng.standard_normal(f.p)
        u = x_star + scale * rng.standard_normal(f.p)
        gap = float(np.linalg.norm(x - u))
        gx = f.grad_all(np.broadcast_to(x, (f.n, f.p)))
        gu = f.grad_all(np.broadcast_to(u, (f.n, f.p)))
        for i in range(f.n):
            violated("lipschitz", t, float(np.linalg.norm(gx[i] - gu[i])), L * gap)
        inner = float((gx.mean(axis=0) - gu.mean(axis=0)) @ (x - u))
        violated("strong_convexity", t, mu * gap * gap, inner)
        grad_x = f.average_grad(x)
        dist = float(np.linalg.norm(x - x_star))
        for alpha in alphas:
            lhs = float(np.linalg.norm(x - x_star - alpha * grad_x))
            violated("contraction", t, lhs, contraction_factor(alpha, L, mu) * dist)
        if not report.ok:
            break
    return report


def save_problem(q: SensorFusion, path: str | Path) -> None:
    doc: Dict[str, Any] = {
        "kind": "sensor_fusion",
        "n": q.n,
        "p": q.p,
        "s": q.s,
        "seed": q.seed,
        "lambdas": q.lambdas.tolist(),
        "H": [h.reshape(-1).tolist() for h in q.H],
        "z": q.z.tolist(),
    }
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(doc, f, sort_keys=False, default_flow_style=None)


def load_problem(path: str | Path) -> SensorFusion:
    with open(path, "r", encoding="utf-8") as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict):
        raise ValueError(f"Invalid problem file format in {path} - expected a mapping")
    for key in ("n", "p", "s", "lambdas", "H", "z"):
        if key not in doc:
            raise ValueError(f"Invalid problem file format - missing '{key}' key")
    if doc.get("kind", "sensor_fusion") != "sensor_fusion":
        raise ValueError(f"unsupported problem kind '{doc['kind']}'")
    n, p, s = int(doc["n"]), int(doc["p"]), int(doc["s"])
    try:
        H = np.array(doc["H"], dtype=float).reshape(n, s, p)
        z = np.array(doc["z"], dtype=float).reshape(n, s)
    except ValueError as e:
        raise ValueError(f"problem file {path} does not match its declared dimensions: {e}") from e
    return SensorFusion(H, z, np.array(doc["lambdas"], dtype=float), doc.get("seed"))
