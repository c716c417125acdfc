"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

Oracles are closed forms (Gamma-ratio moments, Beta integrals, Jacobi
eigenvalues) or independent numerics (finite differences, Gauss-Jacobi
quadrature). Seeds are fixed once per criterion.
"""

import itertools
import json
import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from dirichlet_forms import cli, diffusion, forms, inequalities, measures, quadrature
from dirichlet_forms.forms import FormSpec, carre_du_champ
from dirichlet_forms.simplex import (
    AlphaSequence,
    CylinderFunction,
    DirichletParams,
    InfiniteDirichletParams,
    WeightSequence,
    exponents,
    monomial_family,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
HALVES = InfiniteDirichletParams(AlphaSequence.geometric(1.0, 0.5), 1.0)
GAMMA_I = WeightSequence.polynomial(1.0)
ONE = WeightSequence.constant(1.0)


class Clock:
    def __init__(self, budget: float):
        self.budget = budget
        self.start = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    @property
    def ok(self) -> bool:
        return self.elapsed < self.budget

    def __str__(self):
        return f"{self.elapsed:.1f}s/{self.budget:.0f}s"


def test_criterion_01_density_normalization(record):
    clock = Clock(10)
    cases = [
        ((1.0,), 1.0),
        ((2.0,), 3.0),
        ((1.5,), 1.0),
        ((2.5,), 1.5),
        ((1.0, 1.0), 1.0),
        ((2.0, 1.0), 1.0),
        ((1.5, 2.5), 2.0),
        ((3.0, 2.0), 1.5),
        ((1.2, 1.0), 1.7),
    ]
    worst = 0.0
    for alphas, a_inf in cases:
        p = DirichletParams(alphas, a_inf)
        X, W = quadrature.jacobi_simplex_rule(p.full - 1.0, quadrature.DEFAULT_ORDER)
        worst = max(worst, abs(np.dot(W, np.exp(measures.log_density(p, X))) - 1.0))
        if np.all(p.full == np.round(p.full)):
            # integer exponents: the plain Legendre rule is exact too
            Xl, Wl = quadrature.simplex_rule(p.dim)
            worst = max(worst, abs(np.dot(Wl, np.exp(measures.log_density(p, Xl))) - 1.0))
    passed = worst <= 1e-8 and clock.ok
    record(1, passed, f"max |integral - 1| = {worst:.2e} over {len(cases)} parameter sets ({clock})")
    assert passed


MOMENT_SETS = [
    ((1.0,), 1.0),
    ((0.5,), 2.0),
    ((1.0, 1.0), 1.0),
    ((2.0, 0.5), 1.5),
    ((0.3, 3.0), 0.7),
    ((1.0, 1.0, 1.0), 1.0),
    ((0.5, 1.5, 2.5), 1.0),
    ((4.0, 0.2, 1.0), 0.5),
]


def test_criterion_02_moment_oracle(record):
    clock = Clock(30)
    worst, count = 0.0, 0
    for k, (alphas, a_inf) in enumerate(MOMENT_SETS):
        p = DirichletParams(alphas, a_inf)
        X = measures.sample_array(p, 10**5, 202, f"criterion-2/{k}")
        for e in exponents(p.dim, 2, 1):
            est = measures.MonteCarloEstimate.from_values(CylinderFunction.monomial(e).eval(X), 202)
            worst = max(worst, abs(est.zscore(measures.moment(p, e))))
            count += 1
    passed = worst <= 4.0 and clock.ok
    record(2, passed, f"max |z| = {worst:.2f} over {count} moments ({clock})")
    assert passed


def test_criterion_03_aggregation(record):
    clock = Clock(60)
    rng = np.random.default_rng(303)
    p = DirichletParams([0.5, 1.0, 1.5, 2.0, 0.7, 1.2], 0.8)
    worst, count = 0.0, 0
    for trial in range(10):
        labels = rng.integers(0, rng.integers(2, 5), size=p.dim)
        blocks = [list(np.flatnonzero(labels == b) + 1) for b in np.unique(labels)]
        agg = measures.aggregate(p, blocks)
        Y = measures.aggregate_points(measures.sample_array(p, 10**5, 303, f"criterion-3/{trial}"), blocks)
        for e in exponents(agg.dim, 2, 1):
            est = measures.MonteCarloEstimate.from_values(CylinderFunction.monomial(e).eval(Y), 303)
            worst = max(worst, abs(est.zscore(measures.moment(agg, e))))
            count += 1
    passed = worst <= 4.0 and clock.ok
    record(3, passed, f"max |z| = {worst:.2f} over {count} aggregated moments, 10 partitions ({clock})")
    assert passed


def test_criterion_04_projection_identity(record):
    clock = Clock(300)
    family = monomial_family(4, 3)
    total, failures, worst = 0, 0, 0.0
    for n in (1, 2):
        for idx, f in enumerate(family):
            lhs, rhs = measures.verify_projection(f, HALVES, n, 4, 10**6, 404 + 1000 * n + idx)
            combined = math.hypot(lhs.stderr, rhs.stderr)
            diff = abs(lhs.mean - rhs.mean)
            z = diff / combined if combined > 0 else (0.0 if diff == 0 else math.inf)
            worst = max(worst, z)
            failures += z > 3.0
            total += 1
    rate = failures / total
    passed = rate <= 0.01 and clock.ok
    record(4, passed, f"{failures}/{total} beyond 3 sigma (rate {rate:.3f}), max z = {worst:.2f} ({clock})")
    assert passed


def _fd_det(n: int, z: np.ndarray, h: float = 1e-6) -> float:
    J = np.empty((z.size, z.size))
    for j in range(z.size):
        e = np.zeros(z.size)
        e[j] = h
        J[:, j] = (measures.inverse_T(z + e, n) - measures.inverse_T(z - e, n)) / (2 * h)
    return float(np.linalg.det(J))


def test_criterion_05_jacobian(record):
    clock = Clock(5)
    rng = np.random.default_rng(505)
    worst = 0.0
    for n, m in [(1, 2), (1, 3), (2, 4)]:
        Z = rng.dirichlet(np.ones(m + 1), size=10)[:, :m]
        for z in Z:
            exact = measures.jacobian_det_T_inverse(z[n:], n)
            worst = max(worst, abs(_fd_det(n, z) - exact) / abs(exact))
    passed = worst <= 1e-6 and clock.ok
    record(5, passed, f"max relative error {worst:.2e} over 30 points ({clock})")
    assert passed


def test_criterion_06_generator_symmetry(record):
    clock = Clock(120)
    quad_worst = 0.0
    family1 = monomial_family(1, 3)
    for a, a_inf in itertools.product([1.0, 1.5, 2.0, 3.0], [1.0, 2.0, 3.5]):
        p = DirichletParams([a], a_inf)
        for kind in forms.KINDS:
            for f in family1:
                for g in family1:
                    quad_worst = max(quad_worst, abs(forms.check_symmetry(kind, f, g, p, "quadrature")))
    mc_cases = [
        (DirichletParams([2.0, 1.0], 2.0), monomial_family(2, 2, 1)),
        (
            DirichletParams([1.0, 0.5, 2.0], 1.5),
            monomial_family(3, 1, 1) + [CylinderFunction.monomial((2, 0, 0)), CylinderFunction.monomial((0, 1, 1))],
        ),
    ]
    mc_worst, mc_count = 0.0, 0
    for p, fam in mc_cases:
        for kind in forms.KINDS:
            for i, f in enumerate(fam):
                for g in fam[i:]:
                    est = forms.check_symmetry(kind, f, g, p, "monte-carlo", 2 * 10**5, 606)
                    mc_worst = max(mc_worst, abs(est.zscore(0.0)))
                    mc_count += 1
    passed = quad_worst <= 1e-8 and mc_worst <= 3.0 and clock.ok
    record(
        6,
        passed,
        f"quadrature max |residual| = {quad_worst:.1e}; Monte Carlo max |z| = {mc_worst:.2f} "
        f"over {mc_count} pairs ({clock})",
    )
    assert passed


def test_criterion_07_poincare_tightness(record):
    clock = Clock(120)
    u = DirichletParams([1.0], 1.0)
    X, W = quadrature.simplex_rule(1)
    x = X[:, 0]
    var = np.dot(W, x * x) - np.dot(W, x) ** 2
    energy = np.dot(W, carre_du_champ(FormSpec("type2"), X, np.ones_like(X), np.ones_like(X)))
    ratio = var / energy
    p = DirichletParams([1.0, 1.0], 1.0)
    gap = inequalities.rayleigh_gap("type2", p, monomial_family(2, 2, 1), 10**6, 707)
    ok_ratio = abs(ratio - inequalities.poincare_constant("type2", u)) <= 1e-3
    ok_gap = abs(gap - 3.0) <= 0.05 * 3.0
    passed = ok_ratio and ok_gap and clock.ok
    record(7, passed, f"Var/E2 = {ratio:.6f} (target 0.5); Rayleigh gap = {gap:.4f} (target 3) ({clock})")
    assert passed


# weights, r grid spanning one decade, hand-computed selections on three grid points
SUPER_CASES = [
    ("gamma=1", ONE, [0.55, 0.6, 0.7, 1.0, 2.0, 5.5], {0.55: 3, 0.6: 2, 1.0: 1}),
    ("gamma_i=i", GAMMA_I, [0.12, 0.15, 0.2, 0.5, 1.2], {0.12: 4, 0.15: 3, 0.2: 2, 0.5: 1}),
]


def test_criterion_08_super_poincare_shape(record):
    clock = Clock(600)
    notes, passed = [], True
    family = inequalities.default_family(4)
    for kind in forms.KINDS:
        for label, weights, grid, hand in SUPER_CASES:
            rep = inequalities.certify_super_poincare(kind, HALVES, weights, grid, family, 10**5, 808)
            b = rep.beta_hat
            ok_a = all(v >= 1.0 for v in b) and all(x >= y for x, y in zip(b, b[1:]))
            ns = rep.selected_n
            ok_b = all(x >= y for x, y in zip(ns, ns[1:])) and all(
                ns[grid.index(r)] == n for r, n in hand.items()
            )
            k = inequalities.rate_divisor(kind)
            c_fit = max(row.beta_hat / (row.r / k) ** (-row.theta) for row in rep.rows)
            ok_c = rep.c_n_source == "fitted" and math.isclose(rep.c_n, c_fit, rel_tol=1e-12) and rep.passed
            ok = ok_a and ok_b and ok_c
            passed &= ok
            notes.append(f"{kind}/{label}: n={ns} c_n={rep.c_n:.3g} {'ok' if ok else 'FAILED'}")
    passed &= clock.ok
    record(8, passed, "; ".join(notes) + f" ({clock})")
    assert passed


def _random_pairs(rng, size, d):
    X = rng.dirichlet(np.ones(d + 1), size=size)[:, :d]
    return X, rng.normal(size=(size, d)), rng.normal(size=(size, d))


def test_criterion_09_reduction_and_domination(record):
    clock = Clock(5)
    rng = np.random.default_rng(909)
    X, G, H = _random_pairs(rng, 1000, 4)
    identical = True
    for kind, plain in (("type1", forms.gamma_type1), ("type2", forms.gamma_type2)):
        ref = plain(X, G, H)
        for w in (ONE, WeightSequence.table([1.0, 1.0, 1.0, 1.0]), WeightSequence.geometric(1.0)):
            identical &= np.array_equal(carre_du_champ(FormSpec(kind, w), X, G, H), ref)
    weighted = carre_du_champ(FormSpec("type1", GAMMA_I), X, G, G)
    plain = carre_du_champ(FormSpec("type1"), X, G, G)
    violations1 = int(np.sum(weighted < plain))
    violations2 = {}
    for level in (None, 1, 2, 3):
        w2 = carre_du_champ(FormSpec("type2", GAMMA_I, level), X, G, G)
        violations2[level] = int(np.sum(w2 < carre_du_champ(FormSpec("type2"), X, G, G)))
    passed = identical and violations1 == 0 and not any(violations2.values()) and clock.ok
    record(
        9,
        passed,
        f"reduction bit-identical: {identical}; type1 domination violations {violations1}/1000; "
        f"type2 violations by denominator level {violations2} ({clock})",
    )
    assert passed


def test_criterion_10_diffusion_stationarity(record):
    clock = Clock(300)
    worst, failures, count = 0.0, 0, 0
    for kind in forms.KINDS:
        for n in (1, 2):
            for combo in itertools.product([1.0, 2.0], repeat=n + 1):
                p = DirichletParams(combo[:n], combo[n])
                cfg = diffusion.SdeConfig(kind, p, dt=1e-3, steps=10**6, burn_in=10**5, seed=1010)
                monos = monomial_family(n, 2, 1)
                for f, est in zip(monos, diffusion.simulate_moments(cfg, monos)):
                    exact = measures.expectation(f, p)
                    tol = max(4 * est.stderr, 0.02 * abs(exact))
                    worst = max(worst, abs(est.mean - exact) / tol)
                    failures += abs(est.mean - exact) > tol
                    count += 1
    passed = failures == 0 and clock.ok
    record(10, passed, f"{failures}/{count} moments outside tolerance, worst |err|/tol = {worst:.2f} ({clock})")
    assert passed


def _strip_timestamp(text: str) -> str:
    report = json.loads(text)
    report.pop("timestamp")
    return json.dumps(report, indent=2, sort_keys=True)


def test_criterion_11_determinism(record, tmp_path):
    clock = Clock(60)
    configs = sorted(CONFIG_DIR.glob("*.json"))
    assert {c.stem for c in configs} == set(cli.COMMANDS)
    mismatched = []
    for cfg in configs:
        local = tmp_path / cfg.name
        shutil.copy(cfg, local)
        texts = []
        for run in ("first", "second"):
            out = tmp_path / f"{cfg.stem}.{run}.json"
            cli.main([cfg.stem, str(local), "-o", str(out)])
            texts.append(out.read_bytes().decode())
        if _strip_timestamp(texts[0]).encode() != _strip_timestamp(texts[1]).encode():
            mismatched.append(cfg.stem)
        # byte-level: the only differing line is the timestamp
        diff = [a for a, b in zip(texts[0].splitlines(), texts[1].splitlines()) if a != b]
        if any('"timestamp"' not in line for line in diff):
            mismatched.append(cfg.stem)
    passed = not mismatched and clock.ok
    record(11, passed, f"{len(configs)} configs re-run, mismatches: {mismatched or 'none'} ({clock})")
    assert passed
