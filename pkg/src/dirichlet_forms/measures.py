"""Dirichlet densities, moments, samplers, aggregation, the split measures
and the rescaling map between them."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from . import streams
from .simplex import (
    CylinderFunction,
    DirichletParams,
    InfiniteDirichletParams,
    SimplexPoint,
    as_array,
)


class SingularDensityError(ValueError):
    """The density is infinite at the requested boundary point."""


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    n_samples: int
    seed: int
    estimand: str = ""

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be non-negative")

    @classmethod
    def from_values(cls, values: np.ndarray, seed: int, estimand: str = "") -> MonteCarloEstimate:
        values = np.asarray(values, dtype=np.float64)
        n = values.shape[0]
        mean = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, stderr, n, int(seed), estimand)

    def zscore(self, target: float) -> float:
        diff = self.mean - target
        if self.stderr == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.stderr

    def to_dict(self) -> dict:
        return asdict(self)


def log_normalizer(params: DirichletParams) -> float:
    """log Gamma(|alpha|_1) - sum log Gamma(alpha_i)."""
    full = params.full
    return float(gammaln(full.sum()) - gammaln(full).sum())


def log_density(params: DirichletParams, x) -> np.ndarray | float:
    """Log Dirichlet density at one point or a stack of points (last axis)."""
    arr = as_array(x)
    if arr.shape[-1] != params.dim:
        raise ValueError(f"point has dimension {arr.shape[-1]}, params have {params.dim}")
    slack = 1.0 - arr.sum(axis=-1)
    coords = np.concatenate([arr, slack[..., None]], axis=-1)
    exps = params.full - 1.0
    if np.any((coords <= 0) & (exps < 0)):
        raise SingularDensityError("density singular at boundary")
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(exps == 0, 0.0, exps * np.log(coords))
    out = log_normalizer(params) + logs.sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def moment(params: DirichletParams, kappa: Sequence[int]) -> float:
    """E[prod x_i**kappa_i] = Gamma(|a|)/Gamma(|a|+|k|) * prod Gamma(a_i+k_i)/Gamma(a_i)."""
    kappa = np.asarray(kappa, dtype=np.float64)
    if kappa.shape[0] > params.dim:
        if np.any(kappa[params.dim :]):
            raise ValueError("multi-index uses coordinates beyond the measure's dimension")
        kappa = kappa[: params.dim]
    if np.any(kappa < 0):
        raise ValueError("multi-index must be non-negative")
    a = np.array(params.alphas[: kappa.shape[0]])
    s = params.total
    log_m = gammaln(s) - gammaln(s + kappa.sum()) + np.sum(gammaln(a + kappa) - gammaln(a))
    return float(np.exp(log_m))


def expectation(f: CylinderFunction, params: DirichletParams) -> float:
    """Exact mean of a polynomial under D(params), term by term."""
    if f.m > params.dim:
        raise ValueError(f"function has {f.m} variables, measure only {params.dim}")
    return math.fsum(c * moment(params, e) for e, c in f.terms)


def _gamma_draw(params: DirichletParams, rng: np.random.Generator, size: int) -> np.ndarray:
    g = rng.standard_gamma(params.full, size=(size, params.dim + 1))
    return g[:, :-1] / g.sum(axis=1, keepdims=True)


def sample(params: DirichletParams, rng: np.random.Generator) -> SimplexPoint:
    """One draw (G_1..G_n)/sum G with G_i ~ Gamma(alpha_i) independent (slack included)."""
    return SimplexPoint(_gamma_draw(params, rng, 1)[0])


def sample_array(
    params: DirichletParams, n_samples: int, seed: int, estimand: str = "sample", executor=None
) -> np.ndarray:
    """``n_samples`` draws as an (N, n) array, drawn chunk-wise from keyed sub-streams."""
    return streams.chunked(
        n_samples, seed, estimand, lambda rng, k: _gamma_draw(params, rng, k), executor
    )


def mc_expectation(
    f: CylinderFunction, params: DirichletParams, n_samples: int, seed: int, estimand: str = "mean"
) -> MonteCarloEstimate:
    if f.is_constant:
        value = f.eval(np.zeros(f.m))
        return MonteCarloEstimate(value, 0.0, n_samples, seed, estimand)
    X = sample_array(params, n_samples, seed, estimand)
    return MonteCarloEstimate.from_values(f.eval(X), seed, estimand)


def aggregate(params: DirichletParams, partition: Sequence[Sequence[int]]) -> DirichletParams:
    """Parameters of (sum_{r in A_j} X_r)_j for a partition {A_j} of {1..n} (1-based)."""
    blocks = [sorted(int(i) for i in block) for block in partition]
    flat = [i for block in blocks for i in block]
    if any(not block for block in blocks):
        raise ValueError("partition blocks must be non-empty")
    if len(flat) != len(set(flat)):
        raise ValueError("partition blocks overlap")
    if sorted(flat) != list(range(1, params.dim + 1)):
        raise ValueError(f"partition must cover 1..{params.dim} exactly once")
    beta = [math.fsum(params.alphas[i - 1] for i in block) for block in blocks]
    return DirichletParams(beta, params.alpha_inf)


def aggregate_points(x, partition: Sequence[Sequence[int]]) -> np.ndarray:
    arr = as_array(x)
    return np.stack([arr[..., [i - 1 for i in block]].sum(axis=-1) for block in partition], axis=-1)


@dataclass(frozen=True)
class SplitMeasures:
    """mu1 on the n-simplex and mu2 on the (m-n)-simplex."""

    mu1: DirichletParams
    mu2: DirichletParams
    n: int
    m: int


def split(params: InfiniteDirichletParams, n: int, m: int) -> SplitMeasures:
    """mu1 = D(a_1..a_n, a_inf); mu2 = D(a_{n+1}..a_{m-1}, sum_{i>=m} a_i, sum_{i<=n} a_i + a_inf)."""
    if not 1 <= n < m:
        raise ValueError(f"need 1 <= n < m, got n={n}, m={m}")
    head = params.head(m - 1)
    tail = params.tail_sum(m)
    if not tail > 0:
        raise ValueError(f"tail mass sum_(i>={m}) alpha_i must be positive")
    mu1 = DirichletParams(head[:n], params.alpha_inf)
    mu2 = DirichletParams(tuple(head[n:]) + (tail,), math.fsum(head[:n]) + params.alpha_inf)
    return SplitMeasures(mu1, mu2, n, m)


def map_T(x, y) -> np.ndarray | SimplexPoint:
    """(x, y) -> (x * (1 - |y|_1), y); vectorized over leading axes."""
    xa, ya = as_array(x), as_array(y)
    scale = 1.0 - ya.sum(axis=-1, keepdims=True)
    out = np.concatenate([xa * scale, ya], axis=-1)
    if isinstance(x, SimplexPoint) and isinstance(y, SimplexPoint):
        return SimplexPoint(out)
    return out


def inverse_T(z, n: int) -> np.ndarray:
    """Inverse of map_T on the interior: z -> (z_{1..n} / (1 - s), z_{n+1..}), s = sum_{i>n} z_i."""
    za = as_array(z)
    s = za[..., n:].sum(axis=-1, keepdims=True)
    return np.concatenate([za[..., :n] / (1.0 - s), za[..., n:]], axis=-1)


def jacobian_det_T_inverse(tail, n: int) -> float:
    """(1 - sum tail)**(-n)."""
    s = float(np.sum(as_array(tail)))
    if s >= 1.0:
        raise ZeroDivisionError("tail mass equals 1: inverse map is singular")
    return (1.0 - s) ** (-n)


def verify_projection(
    f: CylinderFunction, params: InfiniteDirichletParams, n: int, m: int, n_samples: int, seed: int
) -> tuple[MonteCarloEstimate, MonteCarloEstimate]:
    """Direct estimate of mu^(m)(f) against the nested estimate mu1(mu2(f o T_m))."""
    if f.m > m:
        raise ValueError(f"function has {f.m} variables, truncation is m={m}")
    if f.is_constant:
        c = f.eval(np.zeros(f.m))
        return (
            MonteCarloEstimate(c, 0.0, n_samples, seed, "projection/lhs"),
            MonteCarloEstimate(c, 0.0, n_samples, seed, "projection/rhs"),
        )
    sm = split(params, n, m)
    direct = sample_array(params.truncate(m), n_samples, seed, "projection/lhs")
    xs = sample_array(sm.mu1, n_samples, seed, "projection/rhs/mu1")
    ys = sample_array(sm.mu2, n_samples, seed, "projection/rhs/mu2")
    lhs = MonteCarloEstimate.from_values(f.eval(direct), seed, "projection/lhs")
    rhs = MonteCarloEstimate.from_values(f.eval(map_T(xs, ys)), seed, "projection/rhs")
    return lhs, rhs


def projection_convergence(
    f: CylinderFunction, params: InfiniteDirichletParams, levels: Sequence[int]
) -> list[tuple[int, float]]:
    """Exact mu^(m)(f) for each truncation level m >= f.m (trend only, no rate asserted)."""
    return [(m, expectation(f, params.truncate(m))) for m in levels if m >= f.m]
