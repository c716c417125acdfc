"""Bound formulas for the (weighted, super) Poincare inequalities and
Monte Carlo certifiers over polynomial test families."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import measures
from .forms import FormSpec, Kind, _check_kind, form_values
from .measures import MonteCarloEstimate
from .simplex import (
    CylinderFunction,
    DirichletParams,
    InfiniteDirichletParams,
    WeightSequence,
    monomial_family,
)

log = logging.getLogger(__name__)

N_MAX = 10**6
SIGMA = 3.0
# both selection rules take the weight infimum over i > n
TAIL_INFIMUM_INDEX = "i>n"


class RangeError(ValueError):
    """r is below the range reachable by any truncation level."""


def theta_exponent(params: DirichletParams | InfiniteDirichletParams, n: int) -> float:
    """sum_{i<=n} max(1, 2 alpha_i) + max(0, alpha_inf - 1)."""
    head = params.head(n) if n > 0 else np.zeros(0)
    return float(np.sum(np.maximum(1.0, 2.0 * head)) + max(0.0, params.alpha_inf - 1.0))


def _selection_lhs(params: InfiniteDirichletParams, weights: WeightSequence, n: int) -> float:
    return 1.0 / ((params.head_sum(n) + params.alpha_inf) * weights.inf_after(n))


def smallest_n(
    kind: Kind,
    r: float,
    params: InfiniteDirichletParams,
    weights: WeightSequence,
    n_max: int = N_MAX,
) -> int:
    """Smallest n >= 1 with 1 / ((sum_{i<=n} alpha_i + alpha_inf) inf_{i>n} gamma_i) <= r.

    The left side is non-increasing in n, so the search doubles then bisects.
    """
    _check_kind(kind)
    if not r > 0:
        raise ValueError("r must be positive")

    def ok(n: int) -> bool:
        return _selection_lhs(params, weights, n) <= r

    if ok(1):
        return 1
    hi = 2
    while not ok(hi):
        if hi >= n_max:
            limit = _selection_lhs(params, weights, n_max)
            raise RangeError(
                f"r={r} below achievable range: condition still {limit:.6g} > r at n={n_max}"
            )
        hi = min(2 * hi, n_max)
    lo = hi // 2  # ok(lo) is False
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class BetaBoundSpec:
    kind: Kind
    c_n: float
    r: float
    params: InfiniteDirichletParams
    weights: WeightSequence = field(default_factory=WeightSequence)

    def __post_init__(self):
        _check_kind(self.kind)
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not self.c_n > 0:
            raise ValueError("c_n must be positive")


def rate_divisor(kind: Kind) -> float:
    return 3.0 if kind == "type1" else 2.0


def beta_bound_details(spec: BetaBoundSpec) -> tuple[int, float, float]:
    """(n, theta, c_n * (r/k)**(-theta)) with k = 3 for type 1 and 2 for type 2."""
    n = smallest_n(spec.kind, spec.r, spec.params, spec.weights)
    theta = theta_exponent(spec.params, n)
    return n, theta, spec.c_n * (spec.r / rate_divisor(spec.kind)) ** (-theta)


def beta_bound(spec: BetaBoundSpec) -> float:
    return beta_bound_details(spec)[2]


def poincare_constant(kind: Kind, params: DirichletParams) -> float:
    """Poincare constant C in Var(f) <= C E(f, f).

    type1: 1/alpha_inf, the weight of the slack coordinate.
    type2: 1/|alpha|_1 over every parameter, slack included.
    """
    _check_kind(kind)
    if kind == "type1":
        return 1.0 / params.alpha_inf
    return 1.0 / params.total


def type2_candidate_constants(params: InfiniteDirichletParams, n: int) -> dict[str, float]:
    """The three readings of the tail-measure constant for the type-2 form.

    tail:  1 / (sum_{i>n} alpha_i + alpha_inf)
    head:  1 / (sum_{i<=n} alpha_i + alpha_inf)
    full:  1 / (sum_{i>=1} alpha_i + alpha_inf)
    """
    return {
        "tail": 1.0 / (params.tail_sum(n + 1) + params.alpha_inf),
        "head": 1.0 / (params.head_sum(n) + params.alpha_inf),
        "full": 1.0 / params.total,
    }


@dataclass(frozen=True)
class VarianceEstimate:
    variance: MonteCarloEstimate
    second_moment: MonteCarloEstimate
    abs_mean_sq: MonteCarloEstimate

    def to_dict(self) -> dict:
        return {
            "variance": self.variance.to_dict(),
            "second_moment": self.second_moment.to_dict(),
            "abs_mean_sq": self.abs_mean_sq.to_dict(),
        }


def _variance_from_values(fv: np.ndarray, seed: int, name: str) -> VarianceEstimate:
    n = fv.shape[0]
    sq = MonteCarloEstimate.from_values(fv * fv, seed, name + "/f2")
    a = np.abs(fv)
    a_bar = float(a.mean())
    a_var = float(a.var(ddof=1)) if n > 1 else 0.0
    # mean(|f|)^2 is biased upward by Var(|f|)/N
    abs_sq = MonteCarloEstimate(
        a_bar * a_bar - a_var / n, 2.0 * abs(a_bar) * math.sqrt(a_var / n), n, seed, name + "/absf2"
    )
    centered = fv - fv.mean()
    var = float(centered.var(ddof=1)) if n > 1 else 0.0
    m4 = float(np.mean(centered**4))
    var_se = math.sqrt(max(m4 - var * var, 0.0) / n)
    return VarianceEstimate(MonteCarloEstimate(var, var_se, n, seed, name + "/var"), sq, abs_sq)


def estimate_variance(
    f: CylinderFunction, params: DirichletParams, n_samples: int, seed: int
) -> VarianceEstimate:
    """Estimates of Var(f), mu(f^2) and mu(|f|)^2 with delta-method errors."""
    if f.is_constant:
        c = float(f.eval(np.zeros(f.m)))
        zero = MonteCarloEstimate(0.0, 0.0, n_samples, seed, "variance/var")
        return VarianceEstimate(
            zero,
            MonteCarloEstimate(c * c, 0.0, n_samples, seed, "variance/f2"),
            MonteCarloEstimate(c * c, 0.0, n_samples, seed, "variance/absf2"),
        )
    X = measures.sample_array(params, n_samples, seed, "variance")
    return _variance_from_values(f.eval(X), seed, "variance")


def rayleigh_quotients(
    kind: Kind,
    params: DirichletParams,
    family: Sequence[CylinderFunction],
    n_samples: int,
    seed: int,
    spec: FormSpec | None = None,
) -> list[float | None]:
    """E(f, f) / Var(f) for each family member on common samples (None for constants)."""
    spec = spec or FormSpec(kind)
    X = measures.sample_array(params, n_samples, seed, "rayleigh")
    out: list[float | None] = []
    for f in family:
        if f.is_constant:
            out.append(None)
            continue
        fv = f.eval(X)
        energy = float(np.mean(form_values(spec, f, f, X)))
        out.append(energy / float(fv.var(ddof=1)))
    return out


def rayleigh_gap(
    kind: Kind,
    params: DirichletParams,
    family: Sequence[CylinderFunction],
    n_samples: int,
    seed: int,
    spec: FormSpec | None = None,
) -> float:
    """Minimum Rayleigh quotient over the family: an upper estimate of the spectral gap."""
    quotients = [q for q in rayleigh_quotients(kind, params, family, n_samples, seed, spec) if q is not None]
    if not quotients:
        raise ValueError("family has no non-constant member")
    return min(quotients)


@dataclass
class PoincareRow:
    index: int
    variance: float
    energy: float
    constant: float
    slack: float
    passed: bool


@dataclass
class PoincareReport:
    kind: str
    constant: float
    n_samples: int
    seed: int
    rows: list[PoincareRow]

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "constant": self.constant,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "rows": [asdict(r) for r in self.rows],
            "pass": self.passed,
        }


def certify_poincare(
    kind: Kind,
    params: DirichletParams,
    family: Sequence[CylinderFunction],
    n_samples: int,
    seed: int,
    constant: float | None = None,
) -> PoincareReport:
    """Check Var(f) <= C E(f, f) + 3 sigma for every family member."""
    C = poincare_constant(kind, params) if constant is None else float(constant)
    spec = FormSpec(kind)
    X = measures.sample_array(params, n_samples, seed, "poincare")
    rows = []
    for idx, f in enumerate(family):
        if f.is_constant:
            rows.append(PoincareRow(idx, 0.0, 0.0, C, 0.0, True))
            continue
        fv = f.eval(X)
        b = form_values(spec, f, f, X)
        centered = fv - fv.mean()
        psi = centered * centered - C * b
        var = float(fv.var(ddof=1))
        energy = float(b.mean())
        slack = SIGMA * float(psi.std(ddof=1)) / math.sqrt(n_samples)
        rows.append(PoincareRow(idx, var, energy, C, slack, var <= C * energy + slack))
    return PoincareReport(kind, C, n_samples, seed, rows)


def compare_type2_constants(
    params: InfiniteDirichletParams,
    n: int,
    m: int,
    family: Sequence[CylinderFunction],
    n_samples: int,
    seed: int,
) -> dict[str, PoincareReport]:
    """Certify each candidate tail constant on mu2 of the (n, m) split."""
    mu2 = measures.split(params, n, m).mu2
    return {
        name: certify_poincare("type2", mu2, family, n_samples, seed, constant=c)
        for name, c in type2_candidate_constants(params, n).items()
    }


def default_family(m: int, max_degree: int = 3) -> list[CylinderFunction]:
    """Monomials of degree <= max_degree in min(m, 4) variables plus centered coordinates."""
    k = min(m, 4)
    family = monomial_family(k, max_degree)
    return family + [CylinderFunction.coordinate(i, k) - 0.5 for i in range(1, k + 1)]


@dataclass
class CertificateRow:
    r: float
    n: int
    theta: float
    beta_hat: float
    beta_hat_stderr: float
    argmax: int
    bound: float
    passed: bool


@dataclass
class CertificateReport:
    kind: str
    c_n: float
    c_n_source: str
    family_size: int
    n_samples: int
    seed: int
    truncation: int
    rows: list[CertificateRow]
    skipped: list[int] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def r_grid(self) -> list[float]:
        return [row.r for row in self.rows]

    @property
    def selected_n(self) -> list[int]:
        return [row.n for row in self.rows]

    @property
    def beta_hat(self) -> list[float]:
        return [row.beta_hat for row in self.rows]

    @property
    def bound(self) -> list[float]:
        return [row.bound for row in self.rows]

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "n", "beta_hat", "bound", "pass"])
        for row in self.rows:
            w.writerow([repr(row.r), row.n, repr(row.beta_hat), repr(row.bound), row.passed])
        return buf.getvalue()


def certify_super_poincare(
    kind: Kind,
    params: InfiniteDirichletParams,
    weights: WeightSequence,
    r_grid: Sequence[float],
    family: Sequence[CylinderFunction],
    n_mc: int,
    seed: int,
    c_n: float | None = None,
    truncation: int | None = None,
) -> CertificateReport:
    """Empirical minimal rate beta_hat(r) against c_n (r/k)**(-theta) on a grid of r.

    Samples come from the truncation mu^(m) with m > every active variable and
    every selected n, so the family and the type-2 denominator see the exact
    finite-dimensional marginals. One sample set serves every r and every
    member. Without ``c_n`` the smallest constant making the bound hold on the
    grid is used.
    """
    _check_kind(kind)
    r_grid = [float(r) for r in r_grid]
    if not r_grid or any(r <= 0 for r in r_grid):
        raise ValueError("r_grid must be non-empty and positive")
    if not family:
        raise ValueError("empty test family")
    ns = [smallest_n(kind, r, params, weights) for r in r_grid]
    m = truncation or max(max(f.m for f in family), max(ns)) + 1
    if m <= max(f.m for f in family) or m <= max(ns):
        raise ValueError(f"truncation {m} must exceed every active variable and selected n")
    X = measures.sample_array(params.truncate(m), n_mc, seed, "super-poincare")
    k = rate_divisor(kind)

    members = []
    skipped = []
    for idx, f in enumerate(family):
        fv = f.eval(X)
        d = np.abs(fv)
        d_bar = float(d.mean())
        d_se = float(d.std(ddof=1)) / math.sqrt(n_mc)
        if d_bar <= SIGMA * d_se:
            log.warning("family member %d skipped: mu(|f|) indistinguishable from 0", idx)
            skipped.append(idx)
            continue
        members.append((idx, f, fv * fv, d, d_bar))

    energies: dict[tuple[int, int | None], np.ndarray] = {}

    def energy(idx: int, f: CylinderFunction, n: int) -> np.ndarray:
        level = n if kind == "type2" else None
        key = (idx, level)
        if key not in energies:
            spec = FormSpec(kind, weights, level)
            energies[key] = np.zeros(n_mc) if f.is_constant else form_values(spec, f, f, X)
        return energies[key]

    raw = []
    for r, n in zip(r_grid, ns):
        best, best_se, best_idx = 1.0, 0.0, -1
        for idx, f, a, d, d_bar in members:
            b = energy(idx, f, n)
            num = a - r * b
            num_bar = float(num.mean())
            value = num_bar / d_bar**2
            if value > best:
                psi = num / d_bar**2 - 2.0 * num_bar * d / d_bar**3
                best, best_se, best_idx = value, float(psi.std(ddof=1)) / math.sqrt(n_mc), idx
        theta = theta_exponent(params, n)
        raw.append((r, n, theta, best, best_se, best_idx, (r / k) ** (-theta)))

    if c_n is None:
        c_used = max(row[3] / row[6] for row in raw)
        source = "fitted"
    else:
        c_used = float(c_n)
        source = "user"
    rows = []
    for r, n, theta, b_hat, se, idx, shape in raw:
        bound = c_used * shape
        ok = b_hat - SIGMA * se <= bound * (1.0 + 1e-12)
        rows.append(CertificateRow(r, n, theta, b_hat, se, idx, bound, ok))
    return CertificateReport(
        kind,
        c_used,
        source,
        len(family),
        n_mc,
        seed,
        m,
        rows,
        skipped,
        {"tail_infimum_index": TAIL_INFIMUM_INDEX, "rate_divisor": k},
    )


def loglog_slope(report: CertificateReport) -> float:
    """Least-squares slope of log beta_hat against log r."""
    r = np.log(np.array(report.r_grid))
    b = np.log(np.array(report.beta_hat))
    return float(np.polyfit(r, b, 1)[0])
