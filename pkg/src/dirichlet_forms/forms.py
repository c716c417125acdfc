"""Carre du champ operators of the two Dirichlet forms, their weighted
variants, the generators, and the integration-by-parts check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Mapping

import numpy as np

from . import measures, quadrature
from .measures import MonteCarloEstimate
from .simplex import CylinderFunction, DirichletParams, WeightSequence, as_array

Kind = Literal["type1", "type2"]
KINDS = ("type1", "type2")


class SingularWeightError(ZeroDivisionError):
    """1 - sum_{i>n} x_i vanished in the type-2 denominator."""


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise ValueError(f"form kind must be one of {KINDS}, got {kind!r}")


@dataclass(frozen=True)
class FormSpec:
    """Which form to evaluate.

    ``denominator_level`` n switches on the factor 1/(1 - sum_{i>n} x_i) of
    the weighted type-2 form; it is not defined for type 1.
    """

    kind: Kind = "type1"
    weights: WeightSequence = field(default_factory=WeightSequence)
    denominator_level: int | None = None

    def __post_init__(self):
        _check_kind(self.kind)
        if self.denominator_level is not None:
            if self.kind != "type2":
                raise ValueError("denominator_level only applies to the type-2 form")
            if self.denominator_level < 0:
                raise ValueError("denominator_level must be non-negative")

    @property
    def is_plain(self) -> bool:
        return self.weights.is_trivial and self.denominator_level is None

    def with_level(self, n: int | None) -> FormSpec:
        return FormSpec(self.kind, self.weights, n)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "gamma_rule": self.weights.to_dict(),
            "denominator_level": self.denominator_level,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> FormSpec:
        return cls(
            d.get("kind", "type1"),
            WeightSequence.from_dict(d.get("gamma_rule")),
            d.get("denominator_level"),
        )


def gamma_type1(x: np.ndarray, gf: np.ndarray, gg: np.ndarray) -> np.ndarray:
    """(1 - |x|_1) sum_i x_i df_i dg_i."""
    return (1.0 - x.sum(axis=-1)) * np.sum(x * gf * gg, axis=-1)


def gamma_type2(x: np.ndarray, gf: np.ndarray, gg: np.ndarray) -> np.ndarray:
    """sum_{ij} x_i (delta_ij - x_j) df_i dg_j."""
    return np.sum(x * gf * gg, axis=-1) - np.sum(x * gf, axis=-1) * np.sum(x * gg, axis=-1)


def carre_du_champ(spec: FormSpec, x, gf, gg):
    """Pointwise integrand of the (weighted) form; broadcasts over leading axes."""
    xa, gf, gg = as_array(x), np.asarray(gf, dtype=np.float64), np.asarray(gg, dtype=np.float64)
    if gf.shape[-1] != xa.shape[-1] or gg.shape[-1] != xa.shape[-1]:
        raise ValueError("gradients and point must share the same dimension")
    if not spec.weights.is_trivial:
        # type1 carries gamma_i once, type2 carries gamma_i gamma_j
        gamma = spec.weights.head(xa.shape[-1])
        gf = gf * gamma
        if spec.kind == "type2":
            gg = gg * gamma
    if spec.kind == "type1":
        out = gamma_type1(xa, gf, gg)
    else:
        out = gamma_type2(xa, gf, gg)
        if spec.denominator_level is not None:
            rest = 1.0 - xa[..., spec.denominator_level :].sum(axis=-1)
            if np.any(rest <= 0):
                raise SingularWeightError("sum_{i>n} x_i = 1: type-2 weight is singular")
            out = out / rest
    return float(out) if np.ndim(out) == 0 else out


def form_values(spec: FormSpec, f: CylinderFunction, g: CylinderFunction, X: np.ndarray):
    """Carre du champ of (f, g) at every row of X."""
    return carre_du_champ(spec, X, f.gradient(X), g.gradient(X))


def estimate_form(
    spec: FormSpec,
    f: CylinderFunction,
    g: CylinderFunction,
    params: DirichletParams,
    n_samples: int,
    seed: int,
    estimand: str = "form",
) -> MonteCarloEstimate:
    if max(f.m, g.m) > params.dim:
        raise ValueError("test functions use more variables than the sampling dimension")
    if f.is_constant or g.is_constant:
        return MonteCarloEstimate(0.0, 0.0, n_samples, seed, estimand)
    X = measures.sample_array(params, n_samples, seed, estimand)
    return MonteCarloEstimate.from_values(form_values(spec, f, g, X), seed, estimand)


def form_polynomial(spec: FormSpec, f: CylinderFunction, g: CylinderFunction, dim: int):
    """The carre du champ as an exact polynomial in ``dim`` variables (no denominator)."""
    if spec.denominator_level is not None:
        raise ValueError("the type-2 denominator makes the integrand non-polynomial")
    x = [CylinderFunction.coordinate(i, dim) for i in range(1, dim + 1)]
    gam = spec.weights.head(dim)
    df = [f.with_m(max(f.m, dim)).derivative(i) * gam[i - 1] for i in range(1, dim + 1)]
    gam_g = gam if spec.kind == "type2" else [1.0] * dim
    dg = [g.with_m(max(g.m, dim)).derivative(i) * gam_g[i - 1] for i in range(1, dim + 1)]
    zero = CylinderFunction.constant(0.0, dim)
    if spec.kind == "type1":
        slack = 1.0 - sum(x, zero)
        return slack * sum((x[i] * df[i] * dg[i] for i in range(dim)), zero)
    diag = sum((x[i] * df[i] * dg[i] for i in range(dim)), zero)
    return diag - sum((x[i] * df[i] for i in range(dim)), zero) * sum(
        (x[j] * dg[j] for j in range(dim)), zero
    )


def exact_form(spec: FormSpec, f, g, params: DirichletParams) -> float:
    """E(f, g) in closed form from Dirichlet moments."""
    return measures.expectation(form_polynomial(spec, f, g, params.dim), params)


def apply_generator(kind: Kind, f: CylinderFunction, params: DirichletParams, x):
    """L f at x (or along a stack of points) from exact first and second derivatives."""
    _check_kind(kind)
    xa = as_array(x)
    if xa.shape[-1] != params.dim:
        raise ValueError(f"point has dimension {xa.shape[-1]}, params have {params.dim}")
    grad = f.gradient(xa)
    hess = f.hessian(xa)
    alphas = np.array(params.alphas)
    diag = np.diagonal(hess, axis1=-2, axis2=-1)
    if kind == "type1":
        slack = (1.0 - xa.sum(axis=-1))[..., None]
        drift = alphas * slack - params.alpha_inf * xa
        out = np.sum(xa * slack * diag + drift * grad, axis=-1)
    else:
        second = np.sum(xa * diag, axis=-1) - np.einsum("...i,...ij,...j->...", xa, hess, xa)
        out = second + np.sum((alphas - params.total * xa) * grad, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def generator_polynomial(kind: Kind, f: CylinderFunction, params: DirichletParams):
    """L f as an exact polynomial in params.dim variables."""
    _check_kind(kind)
    d = params.dim
    f = f.with_m(max(f.m, d))
    x = [CylinderFunction.coordinate(i, d) for i in range(1, d + 1)]
    zero = CylinderFunction.constant(0.0, d)
    slack = 1.0 - sum(x, zero)
    total = zero
    for i in range(d):
        di = f.derivative(i + 1)
        a = params.alphas[i]
        if kind == "type1":
            total = total + x[i] * slack * di.derivative(i + 1)
            total = total + (a * slack - params.alpha_inf * x[i]) * di
        else:
            for j in range(d):
                coef = (1.0 if i == j else 0.0) - x[j]
                total = total + x[i] * coef * di.derivative(j + 1)
            total = total + (a - params.total * x[i]) * di
    return total


def _symmetry_integrand(kind, f, g, params, X):
    spec = FormSpec(kind)
    return f.eval(X) * apply_generator(kind, g, params, X) + form_values(spec, f, g, X)


def check_symmetry(
    kind: Kind,
    f: CylinderFunction,
    g: CylinderFunction,
    params: DirichletParams,
    method: str = "quadrature",
    order_or_n: int | None = None,
    seed: int = 0,
) -> float | MonteCarloEstimate:
    """mu(f L g) + E(f, g), which vanishes by integration by parts.

    ``quadrature`` returns a float (n <= 2, density exponents >= 0);
    ``monte-carlo`` returns the estimate of the residual with its stderr.
    """
    _check_kind(kind)
    if f.is_constant or g.is_constant:
        if method == "monte-carlo":
            return MonteCarloEstimate(0.0, 0.0, order_or_n or 1, seed, "symmetry")
        return 0.0
    if method == "quadrature":
        if params.dim > 2:
            raise ValueError("quadrature symmetry check is limited to n <= 2")
        if np.any(params.full < 1.0):
            raise measures.SingularDensityError(
                "quadrature needs all density exponents >= 0 (alpha >= 1)"
            )
        order = order_or_n or quadrature.DEFAULT_ORDER
        # the Jacobi rule absorbs the density's boundary powers, so fractional alphas stay exact
        X, W = quadrature.jacobi_simplex_rule(params.full - 1.0, order)
        dens = np.exp(measures.log_density(params, X))
        vals = _symmetry_integrand(kind, f, g, params, X)
        return float(np.dot(W, dens * vals))
    if method == "monte-carlo":
        n_samples = order_or_n or 100_000
        X = measures.sample_array(params, n_samples, seed, "symmetry")
        vals = _symmetry_integrand(kind, f, g, params, X)
        return MonteCarloEstimate.from_values(vals, seed, "symmetry")
    raise ValueError(f"unknown method {method!r}")


def exact_symmetry_residual(kind: Kind, f, g, params: DirichletParams) -> float:
    """mu(f L g) + E(f, g) from closed-form moments."""
    lg = generator_polynomial(kind, g, params)
    fl = f.with_m(max(f.m, params.dim)) * lg
    return measures.expectation(fl, params) + exact_form(FormSpec(kind), f, g, params)
