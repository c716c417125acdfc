"""Euler-Maruyama simulation of the two simplex diffusions.

Generators are read as L = sum a_ij d_ij + sum b_i d_i with sigma sigma^T = 2a:
  type1: a = diag(x_i (1 - |x|_1)),  b_i = alpha_i (1 - |x|_1) - alpha_inf x_i
  type2: a_ij = x_i (delta_ij - x_j), b_i = alpha_i - |alpha|_1 x_i
After each step the state is clamped to x >= 0 and rescaled onto |x|_1 <= 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from . import streams
from .forms import Kind, _check_kind
from .measures import MonteCarloEstimate
from .simplex import CylinderFunction, DirichletParams, SimplexPoint, as_array

PIVOT_TOL = 1e-14
STEP_CHUNK = 1 << 16
BOUNDARY_POLICIES = ("clamp-project",)


class DivergenceError(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"non-finite state at step {step}")
        self.step = step


@dataclass(frozen=True)
class SdeConfig:
    kind: Kind
    params: DirichletParams
    dt: float = 1e-3
    steps: int = 10**6
    burn_in: int = 10**5
    boundary_policy: str = "clamp-project"
    seed: int = 0
    replica: int = 0
    x0: tuple[float, ...] | None = None
    noise: bool = True

    def __post_init__(self):
        _check_kind(self.kind)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.dt * self.params.total >= 0.5:
            raise ValueError(f"dt * |alpha|_1 = {self.dt * self.params.total:.3g} must be < 0.5")
        if self.steps < 1 or not 0 <= self.burn_in < self.steps:
            raise ValueError("need steps >= 1 and 0 <= burn_in < steps")
        if self.boundary_policy not in BOUNDARY_POLICIES:
            raise ValueError(f"boundary_policy must be one of {BOUNDARY_POLICIES}")
        if self.x0 is not None:
            x0 = SimplexPoint(self.x0)
            if x0.dim != self.params.dim:
                raise ValueError("x0 dimension does not match params")
            object.__setattr__(self, "x0", x0.coords)

    def start(self) -> np.ndarray:
        if self.x0 is not None:
            return np.array(self.x0)
        return np.array(self.params.alphas) / self.params.total


@numba.njit(cache=True)
def _pivoted_sqrt_apply(A, z, tol):
    """Return S z with S S^T = A, from a pivoted Cholesky truncated at zero pivots."""
    n = A.shape[0]
    A = A.copy()
    perm = np.arange(n)
    L = np.zeros((n, n))
    for k in range(n):
        p = k
        for i in range(k + 1, n):
            if A[i, i] > A[p, p]:
                p = i
        if A[p, p] <= tol:
            break
        if p != k:
            for j in range(n):
                t = A[k, j]
                A[k, j] = A[p, j]
                A[p, j] = t
            for i in range(n):
                t = A[i, k]
                A[i, k] = A[i, p]
                A[i, p] = t
            for j in range(k):
                t = L[k, j]
                L[k, j] = L[p, j]
                L[p, j] = t
            t2 = perm[k]
            perm[k] = perm[p]
            perm[p] = t2
        d = math.sqrt(A[k, k])
        L[k, k] = d
        for i in range(k + 1, n):
            L[i, k] = A[i, k] / d
        for i in range(k + 1, n):
            for j in range(k + 1, i + 1):
                A[i, j] -= L[i, k] * L[j, k]
                A[j, i] = A[i, j]
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for j in range(i + 1):
            s += L[i, j] * z[j]
        out[perm[i]] = s
    return out


@numba.njit(cache=True)
def _em_run(kind, alphas, alpha_inf, x, dt, normals, noise_scale, tol, out):
    """Advance x through len(normals) steps, writing each post-step state to out.

    Returns -1, or the index of the first step with a non-finite state.
    """
    n = x.shape[0]
    total = alpha_inf
    for i in range(n):
        total += alphas[i]
    sq = math.sqrt(dt) * noise_scale
    A = np.zeros((n, n))
    for t in range(normals.shape[0]):
        s = 0.0
        for i in range(n):
            s += x[i]
        slack = 1.0 - s
        if slack < 0.0:
            slack = 0.0
        new = np.empty(n)
        if kind == 1:
            for i in range(n):
                drift = alphas[i] * slack - alpha_inf * x[i]
                new[i] = x[i] + drift * dt + sq * math.sqrt(2.0 * x[i] * slack) * normals[t, i]
        else:
            for i in range(n):
                for j in range(n):
                    A[i, j] = -2.0 * x[i] * x[j]
                A[i, i] += 2.0 * x[i]
            dw = _pivoted_sqrt_apply(A, normals[t], tol)
            for i in range(n):
                new[i] = x[i] + (alphas[i] - total * x[i]) * dt + sq * dw[i]
        s = 0.0
        for i in range(n):
            if not math.isfinite(new[i]):
                return t
            if new[i] < 0.0:
                new[i] = 0.0
            s += new[i]
        if s > 1.0:
            for i in range(n):
                new[i] /= s
        for i in range(n):
            x[i] = new[i]
            out[t, i] = new[i]
    return -1


def _kind_code(kind: Kind) -> int:
    return 1 if kind == "type1" else 2


def step(config: SdeConfig, x, rng: np.random.Generator) -> SimplexPoint:
    """One Euler-Maruyama step from x followed by the boundary projection."""
    xa = as_array(x).copy()
    z = rng.standard_normal((1, config.params.dim))
    out = np.empty((1, config.params.dim))
    bad = _em_run(
        _kind_code(config.kind),
        np.array(config.params.alphas),
        config.params.alpha_inf,
        xa,
        config.dt,
        z,
        1.0 if config.noise else 0.0,
        PIVOT_TOL,
        out,
    )
    if bad >= 0:
        raise DivergenceError(0)
    return SimplexPoint(out[0])


def trajectory_chunks(config: SdeConfig):
    """Yield (first_step_index, states) blocks covering steps 1..config.steps."""
    rng = streams.stream_for(config.seed, "diffusion", config.replica)
    x = config.start()
    alphas = np.array(config.params.alphas)
    code = _kind_code(config.kind)
    scale = 1.0 if config.noise else 0.0
    done = 0
    while done < config.steps:
        k = min(STEP_CHUNK, config.steps - done)
        z = rng.standard_normal((k, config.params.dim))
        out = np.empty((k, config.params.dim))
        bad = _em_run(code, alphas, config.params.alpha_inf, x, config.dt, z, scale, PIVOT_TOL, out)
        if bad >= 0:
            raise DivergenceError(done + bad + 1)
        yield done + 1, out
        done += k


def simulate_moments(
    config: SdeConfig,
    monomials: Sequence[CylinderFunction],
    n_batches: int = 50,
    dump_path: str | Path | None = None,
) -> list[MonteCarloEstimate]:
    """Post-burn-in time averages of each monomial with batch-means errors."""
    kept = config.steps - config.burn_in
    if kept < n_batches:
        raise ValueError("fewer kept steps than batches")
    edges = np.linspace(0, kept, n_batches + 1).astype(np.int64)
    sums = np.zeros((len(monomials), n_batches))
    writer = None
    fh = None
    if dump_path is not None:
        fh = open(dump_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["step"] + [f"x{i}" for i in range(1, config.params.dim + 1)])
    try:
        for first, states in trajectory_chunks(config):
            if writer is not None:
                for t, row in enumerate(states):
                    writer.writerow([first + t] + [repr(float(v)) for v in row])
            idx = np.arange(first, first + states.shape[0]) - config.burn_in - 1
            keep = idx >= 0
            if not keep.any():
                continue
            batch_of = np.searchsorted(edges, idx[keep], side="right") - 1
            for j, f in enumerate(monomials):
                sums[j] += np.bincount(batch_of, weights=f.eval(states[keep]), minlength=n_batches)
    finally:
        if fh is not None:
            fh.close()
    counts = np.diff(edges).astype(np.float64)
    out = []
    for j, f in enumerate(monomials):
        means = sums[j] / counts
        mean = float(np.dot(means, counts) / kept)
        stderr = float(means.std(ddof=1) / math.sqrt(n_batches))
        if f.is_constant:
            mean, stderr = float(f.eval(np.zeros(f.m))), 0.0
        out.append(MonteCarloEstimate(mean, stderr, kept, config.seed, f"time-average/{j}"))
    return out
