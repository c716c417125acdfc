"""Value types: simplex points, Dirichlet parameters, weight sequences and
polynomial cylinder functions with exact derivatives."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import zeta

SIMPLEX_ATOL = 1e-12

Exponent = tuple[int, ...]


def as_array(x) -> np.ndarray:
    """Coordinates of a SimplexPoint, or an array of points, as float64."""
    if isinstance(x, SimplexPoint):
        return x.array
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class SimplexPoint:
    """A point of the closed simplex {x in [0,1]^m : sum(x) <= 1}."""

    coords: tuple[float, ...]

    def __init__(self, coords: Iterable[float]):
        values = tuple(float(c) for c in np.ravel(np.asarray(coords, dtype=np.float64)))
        if not values:
            raise ValueError("a simplex point needs at least one coordinate")
        if any(not math.isfinite(c) for c in values):
            raise ValueError(f"non-finite coordinate in {values}")
        if min(values) < -SIMPLEX_ATOL or max(values) > 1.0 + SIMPLEX_ATOL:
            raise ValueError(f"coordinates must lie in [0, 1], got {values}")
        if math.fsum(values) > 1.0 + SIMPLEX_ATOL:
            raise ValueError(f"|x|_1 = {math.fsum(values)!r} exceeds 1")
        object.__setattr__(self, "coords", values)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def l1(self) -> float:
        return math.fsum(self.coords)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords, dtype=np.float64)

    def padded(self, dim: int) -> SimplexPoint:
        if dim < self.dim:
            raise ValueError(f"cannot pad a {self.dim}-point down to {dim}")
        return SimplexPoint(self.coords + (0.0,) * (dim - self.dim))

    def __len__(self) -> int:
        return self.dim


@dataclass(frozen=True)
class DirichletParams:
    """Parameters of D(alpha_1, ..., alpha_n, alpha_inf) on the n-simplex.

    ``alpha_inf`` is the weight of the slack coordinate 1 - |x|_1.
    """

    alphas: tuple[float, ...]
    alpha_inf: float

    def __init__(self, alphas: Iterable[float], alpha_inf: float):
        alphas = tuple(float(a) for a in alphas)
        alpha_inf = float(alpha_inf)
        if not alphas:
            raise ValueError("need at least one coordinate parameter")
        if any(not (a > 0 and math.isfinite(a)) for a in alphas):
            raise ValueError(f"all alphas must be positive and finite, got {alphas}")
        if not (alpha_inf > 0 and math.isfinite(alpha_inf)):
            raise ValueError(f"alpha_inf must be positive and finite, got {alpha_inf}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_inf", alpha_inf)

    @property
    def dim(self) -> int:
        return len(self.alphas)

    @property
    def total(self) -> float:
        """|alpha|_1, including alpha_inf."""
        return math.fsum(self.alphas) + self.alpha_inf

    @property
    def full(self) -> np.ndarray:
        """All n + 1 parameters, slack last."""
        return np.array(self.alphas + (self.alpha_inf,))

    def head(self, n: int) -> np.ndarray:
        if n > self.dim:
            raise ValueError(f"only {self.dim} parameters stored, asked for {n}")
        return np.array(self.alphas[:n])

    def to_dict(self) -> dict:
        return {"alphas": list(self.alphas), "alpha_inf": self.alpha_inf}


@dataclass(frozen=True)
class AlphaSequence:
    """Summable positive sequence alpha_1, alpha_2, ... (1-based).

    kinds:
      geometric  alpha_i = scale * ratio**i, 0 < ratio < 1
      power      alpha_i = scale * i**(-exponent), exponent > 1
      table      explicit head ``values`` followed by ``tail`` (a geometric or
                 power sequence re-indexed to start after the table)
    """

    kind: str
    scale: float = 1.0
    ratio: float = 0.5
    exponent: float = 2.0
    values: tuple[float, ...] = ()
    tail: AlphaSequence | None = None

    def __post_init__(self):
        if self.kind == "geometric":
            if not (self.scale > 0 and 0 < self.ratio < 1):
                raise ValueError("geometric alphas need scale > 0 and 0 < ratio < 1")
        elif self.kind == "power":
            if not (self.scale > 0 and self.exponent > 1):
                raise ValueError("power-law alphas need scale > 0 and exponent > 1")
        elif self.kind == "table":
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if not self.values or any(v <= 0 for v in self.values):
                raise ValueError("table alphas need a non-empty list of positive values")
            if self.tail is None:
                raise ValueError("table alphas need a summable tail rule")
            if self.tail.kind == "table":
                raise ValueError("nested tables are not supported")
        else:
            raise ValueError(f"unknown alpha sequence kind {self.kind!r}")

    @classmethod
    def geometric(cls, scale: float = 1.0, ratio: float = 0.5) -> AlphaSequence:
        return cls("geometric", scale=scale, ratio=ratio)

    @classmethod
    def power(cls, scale: float = 1.0, exponent: float = 2.0) -> AlphaSequence:
        return cls("power", scale=scale, exponent=exponent)

    @classmethod
    def table(cls, values: Sequence[float], tail: AlphaSequence) -> AlphaSequence:
        return cls("table", values=tuple(values), tail=tail)

    def value(self, i: int) -> float:
        if i < 1:
            raise ValueError("alpha indices start at 1")
        if self.kind == "geometric":
            return self.scale * self.ratio**i
        if self.kind == "power":
            return self.scale * float(i) ** (-self.exponent)
        if i <= len(self.values):
            return self.values[i - 1]
        return self.tail.value(i - len(self.values))

    def head(self, n: int) -> np.ndarray:
        return np.array([self.value(i) for i in range(1, n + 1)])

    def tail_sum(self, m: int) -> float:
        """sum_{i >= m} alpha_i."""
        m = max(int(m), 1)
        if self.kind == "geometric":
            return self.scale * self.ratio**m / (1.0 - self.ratio)
        if self.kind == "power":
            return self.scale * float(zeta(self.exponent, m))
        k = len(self.values)
        if m > k:
            return self.tail.tail_sum(m - k)
        return math.fsum(self.values[m - 1 :]) + self.tail.tail_sum(1)

    @property
    def total(self) -> float:
        return self.tail_sum(1)

    def head_sum(self, n: int) -> float:
        """sum_{i <= n} alpha_i."""
        if n <= 0:
            return 0.0
        if self.kind == "table" and n <= len(self.values):
            return math.fsum(self.values[:n])
        if self.kind == "geometric":
            return self.scale * self.ratio * (1.0 - self.ratio**n) / (1.0 - self.ratio)
        return self.total - self.tail_sum(n + 1)

    def to_dict(self) -> dict:
        if self.kind == "geometric":
            return {"kind": "geometric", "scale": self.scale, "ratio": self.ratio}
        if self.kind == "power":
            return {"kind": "power", "scale": self.scale, "exponent": self.exponent}
        return {"kind": "table", "values": list(self.values), "tail": self.tail.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping) -> AlphaSequence:
        kind = d.get("kind")
        if kind == "geometric":
            return cls.geometric(float(d.get("scale", 1.0)), float(d.get("ratio", 0.5)))
        if kind == "power":
            return cls.power(float(d.get("scale", 1.0)), float(d.get("exponent", 2.0)))
        if kind == "table":
            if "tail" not in d:
                raise ValueError("table alphas need a 'tail' rule")
            return cls.table(d["values"], cls.from_dict(d["tail"]))
        raise ValueError(f"unknown alpha sequence kind {kind!r}")


@dataclass(frozen=True)
class InfiniteDirichletParams:
    """The infinite family (alpha_i)_{i>=1} with terminal weight alpha_inf."""

    sequence: AlphaSequence
    alpha_inf: float

    def __post_init__(self):
        if not (self.alpha_inf > 0 and math.isfinite(self.alpha_inf)):
            raise ValueError(f"alpha_inf must be positive and finite, got {self.alpha_inf}")

    def alpha(self, i: int) -> float:
        return self.sequence.value(i)

    def head(self, n: int) -> np.ndarray:
        return self.sequence.head(n)

    def head_sum(self, n: int) -> float:
        return self.sequence.head_sum(n)

    def tail_sum(self, m: int) -> float:
        return self.sequence.tail_sum(m)

    @property
    def total(self) -> float:
        return self.sequence.total + self.alpha_inf

    def truncate(self, m: int) -> DirichletParams:
        """D(alpha_1, ..., alpha_{m-1}, sum_{i>=m} alpha_i, alpha_inf) on the m-simplex."""
        if m < 1:
            raise ValueError("truncation level must be >= 1")
        tail = self.tail_sum(m)
        if not tail > 0:
            raise ValueError(f"tail mass sum_(i>={m}) alpha_i = {tail} is not positive")
        return DirichletParams(tuple(self.head(m - 1)) + (tail,), self.alpha_inf)

    def to_dict(self) -> dict:
        return {"sequence": self.sequence.to_dict(), "alpha_inf": self.alpha_inf}


@dataclass(frozen=True)
class WeightSequence:
    """Weights gamma_i >= 1 with an exactly computable tail infimum.

    kinds:
      constant    gamma_i = scale
      geometric   gamma_i = scale * ratio**(i-1), ratio >= 1
      polynomial  gamma_i = scale * i**power, power >= 0
      table       gamma_i = values[i-1] for i <= len(values), else ``tail_value``
    """

    kind: str = "constant"
    scale: float = 1.0
    ratio: float = 1.0
    power: float = 0.0
    values: tuple[float, ...] = ()
    tail_value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "geometric", "polynomial", "table"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "table":
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if any(v < 1 for v in self.values) or self.tail_value < 1:
                raise ValueError("table weights must all be >= 1")
        elif self.scale < 1:
            raise ValueError(f"weights need scale >= 1, got {self.scale}")
        if self.kind == "geometric" and self.ratio < 1:
            raise ValueError("geometric weights need ratio >= 1")
        if self.kind == "polynomial" and self.power < 0:
            raise ValueError("polynomial weights need power >= 0")

    @classmethod
    def constant(cls, value: float = 1.0) -> WeightSequence:
        return cls("constant", scale=value)

    @classmethod
    def polynomial(cls, power: float = 1.0, scale: float = 1.0) -> WeightSequence:
        return cls("polynomial", scale=scale, power=power)

    @classmethod
    def geometric(cls, ratio: float, scale: float = 1.0) -> WeightSequence:
        return cls("geometric", scale=scale, ratio=ratio)

    @classmethod
    def table(cls, values: Sequence[float], tail_value: float = 1.0) -> WeightSequence:
        return cls("table", values=tuple(values), tail_value=tail_value)

    @property
    def is_trivial(self) -> bool:
        """True when gamma_i == 1 for every i."""
        if self.kind == "table":
            return all(v == 1.0 for v in self.values) and self.tail_value == 1.0
        if self.scale != 1.0:
            return False
        return (
            self.kind == "constant"
            or (self.kind == "geometric" and self.ratio == 1.0)
            or (self.kind == "polynomial" and self.power == 0.0)
        )

    def value(self, i: int) -> float:
        if i < 1:
            raise ValueError("weight indices start at 1")
        if self.kind == "constant":
            return self.scale
        if self.kind == "geometric":
            try:
                return self.scale * self.ratio ** (i - 1)
            except OverflowError:
                return math.inf
        if self.kind == "polynomial":
            return self.scale * float(i) ** self.power
        return self.values[i - 1] if i <= len(self.values) else self.tail_value

    def head(self, d: int) -> np.ndarray:
        return np.array([self.value(i) for i in range(1, d + 1)])

    def inf_after(self, n: int) -> float:
        """inf_{i > n} gamma_i (exact for every supported shape)."""
        if n < 0:
            raise ValueError("n must be non-negative")
        if self.kind == "table":
            rest = self.values[n:]
            return min(rest + (self.tail_value,))
        # the three closed-form shapes are non-decreasing in i
        return self.value(n + 1)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.scale}
        if self.kind == "geometric":
            return {"kind": "geometric", "scale": self.scale, "ratio": self.ratio}
        if self.kind == "polynomial":
            return {"kind": "polynomial", "scale": self.scale, "power": self.power}
        return {"kind": "table", "values": list(self.values), "tail_value": self.tail_value}

    @classmethod
    def from_dict(cls, d: Mapping | None) -> WeightSequence:
        if d is None:
            return cls.constant(1.0)
        kind = d.get("kind", "constant")
        if kind == "constant":
            return cls.constant(float(d.get("value", 1.0)))
        if kind == "geometric":
            return cls.geometric(float(d["ratio"]), float(d.get("scale", 1.0)))
        if kind == "polynomial":
            return cls.polynomial(float(d.get("power", 1.0)), float(d.get("scale", 1.0)))
        if kind == "table":
            return cls.table(d["values"], float(d.get("tail_value", 1.0)))
        raise ValueError(f"unknown weight kind {kind!r}")


@dataclass(frozen=True)
class CylinderFunction:
    """Polynomial sum_k c_k prod_i x_i**k_i in the first ``m`` coordinates.

    Terms are stored sparsely as a sorted tuple of (exponent, coefficient)
    pairs; zero coefficients are dropped.
    """

    m: int
    terms: tuple[tuple[Exponent, float], ...] = field(default=())

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("a cylinder function needs m >= 1")
        merged: dict[Exponent, float] = {}
        for exp, coef in self.terms:
            exp = tuple(int(e) for e in exp)
            if len(exp) > self.m:
                if any(exp[self.m :]):
                    raise ValueError(f"exponent {exp} uses coordinates beyond m={self.m}")
                exp = exp[: self.m]
            if any(e < 0 for e in exp):
                raise ValueError(f"negative exponent in {exp}")
            exp = exp + (0,) * (self.m - len(exp))
            merged[exp] = merged.get(exp, 0.0) + float(coef)
        terms = tuple(sorted((e, c) for e, c in merged.items() if c != 0.0))
        object.__setattr__(self, "terms", terms)

    # construction

    @classmethod
    def from_terms(cls, terms: Mapping[Exponent, float] | Iterable, m: int | None = None):
        pairs = list(terms.items()) if isinstance(terms, Mapping) else [tuple(t) for t in terms]
        if m is None:
            m = max((len(e) for e, _ in pairs), default=1)
        return cls(m, tuple((tuple(e), c) for e, c in pairs))

    @classmethod
    def constant(cls, value: float = 1.0, m: int = 1) -> CylinderFunction:
        return cls(m, (((0,) * m, value),))

    @classmethod
    def coordinate(cls, i: int, m: int | None = None) -> CylinderFunction:
        """x_i (1-based)."""
        m = i if m is None else m
        exp = [0] * m
        exp[i - 1] = 1
        return cls(m, ((tuple(exp), 1.0),))

    @classmethod
    def monomial(cls, exponent: Sequence[int], coef: float = 1.0) -> CylinderFunction:
        return cls(max(len(exponent), 1), ((tuple(exponent), coef),))

    def to_pairs(self) -> list:
        return [[list(e), c] for e, c in self.terms]

    # structure

    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    @property
    def is_constant(self) -> bool:
        return all(sum(e) == 0 for e, _ in self.terms)

    def with_m(self, m: int) -> CylinderFunction:
        return CylinderFunction(m, self.terms)

    def __add__(self, other):
        if not isinstance(other, CylinderFunction):
            other = CylinderFunction.constant(float(other), self.m)
        m = max(self.m, other.m)
        return CylinderFunction(m, self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return CylinderFunction(self.m, tuple((e, -c) for e, c in self.terms))

    def __sub__(self, other):
        return self + (-other if isinstance(other, CylinderFunction) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, CylinderFunction):
            s = float(other)
            return CylinderFunction(self.m, tuple((e, c * s) for e, c in self.terms))
        m = max(self.m, other.m)
        a, b = self.with_m(m), other.with_m(m)
        out = []
        for (ea, ca), (eb, cb) in itertools.product(a.terms, b.terms):
            out.append((tuple(p + q for p, q in zip(ea, eb)), ca * cb))
        return CylinderFunction(m, tuple(out))

    __rmul__ = __mul__

    def derivative(self, i: int) -> CylinderFunction:
        """Exact d/dx_i as a polynomial (1-based index)."""
        if i > self.m:
            return CylinderFunction.constant(0.0, self.m)
        out = []
        for exp, coef in self.terms:
            k = exp[i - 1]
            if k:
                e = list(exp)
                e[i - 1] = k - 1
                out.append((tuple(e), coef * k))
        return CylinderFunction(self.m, tuple(out))

    # evaluation

    def _check(self, x: np.ndarray) -> None:
        if x.ndim == 0 or x.shape[-1] < self.m:
            d = 0 if x.ndim == 0 else x.shape[-1]
            raise ValueError(f"function needs {self.m} coordinates, point has {d}")

    def __call__(self, x) -> np.ndarray | float:
        return self.eval(x)

    def eval(self, x):
        """f(x) for one point or a stack of points along the last axis."""
        arr = as_array(x)
        self._check(arr)
        out = np.zeros(arr.shape[:-1])
        for exp, coef in self.terms:
            out = out + coef * _power_product(arr, exp)
        return float(out) if out.ndim == 0 else out

    def gradient(self, x) -> np.ndarray:
        arr = as_array(x)
        self._check(arr)
        grad = np.zeros(arr.shape)
        for exp, coef in self.terms:
            for i, k in enumerate(exp):
                if k:
                    e = list(exp)
                    e[i] = k - 1
                    grad[..., i] += coef * k * _power_product(arr, e)
        return grad

    def hessian(self, x) -> np.ndarray:
        arr = as_array(x)
        self._check(arr)
        d = arr.shape[-1]
        hess = np.zeros(arr.shape + (d,))
        for exp, coef in self.terms:
            for i, ki in enumerate(exp):
                if not ki:
                    continue
                for j in range(i, self.m):
                    e = list(exp)
                    e[i] -= 1
                    if e[j] == 0:
                        continue
                    c = coef * ki * e[j]
                    e[j] -= 1
                    val = c * _power_product(arr, e)
                    hess[..., i, j] += val
                    if j != i:
                        hess[..., j, i] += val
        return hess


def _power_product(arr: np.ndarray, exp: Sequence[int]) -> np.ndarray:
    out = np.ones(arr.shape[:-1])
    for i, k in enumerate(exp):
        if k == 1:
            out = out * arr[..., i]
        elif k > 1:
            out = out * arr[..., i] ** k
    return out


def exponents(m: int, max_degree: int, min_degree: int = 0) -> list[Exponent]:
    """All exponent vectors over m coordinates with total degree in range."""
    out = []
    for deg in range(min_degree, max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(m), deg):
            e = [0] * m
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return sorted(set(out), key=lambda e: (sum(e), tuple(-k for k in e)))


def monomial_family(m: int, max_degree: int, min_degree: int = 0) -> list[CylinderFunction]:
    return [CylinderFunction(m, ((e, 1.0),)) for e in exponents(m, max_degree, min_degree)]
