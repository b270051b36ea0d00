"""Randomised verification suites comparing production code to the oracles.

Each suite draws its instances from a fixed seed, so a failure is
reproducible by rerunning the same suite with the same ``iters``.
"""

import time
from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from . import aggregate as agg
from . import local as _local
from . import model as _model
from . import oracle
from .vecops import relative_error


@dataclass
class SuiteResult:
    name: str
    cases: int
    max_error: float
    tolerance: float
    passed: bool
    seconds: float = 0.0
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: {self.cases} cases, max error {self.max_error:.3e} "
                f"(tol {self.tolerance:.0e}) {self.detail}".rstrip())


def random_instance(gen, k_max=16, d_max=64):
    """Random gradients (K x d, d >= K) and positive rates."""
    K = int(gen.integers(1, k_max + 1))
    d = int(gen.integers(K, d_max + 1))
    grads = gen.normal(size=(K, d)) * gen.uniform(0.1, 10.0)
    rates = gen.uniform(0.1, 10.0, size=K)
    return grads, rates


def rate_identity(iters=1000, seed=0) -> SuiteResult:
    """Every retained client sees ``g_k . direction == r_k / eta``."""
    gen = np.random.default_rng(seed)
    worst, min_deriv = 0.0, np.inf
    for _ in range(iters):
        grads, rates = random_instance(gen)
        plan = agg.dqnfed_plan(grads, rates)
        got = np.array([g @ plan.direction for g in grads])
        want = rates / plan.eta
        worst = max(worst, float(np.max(np.abs(got - want) / np.abs(want))))
        min_deriv = min(min_deriv, float(got.min()))
    ok = worst <= 1e-8 and min_deriv > 0
    return SuiteResult("rate-identity", iters, worst, 1e-8, ok,
                       detail=f"min directional derivative {min_deriv:.3e}")


def fw(iters=500, seed=1) -> SuiteResult:
    """Closed-form weights against Frank-Wolfe on orthogonalized bases."""
    gen = np.random.default_rng(seed)
    worst_obj, worst_w = 0.0, 0.0
    for _ in range(iters):
        grads, rates = random_instance(gen, k_max=8, d_max=32)
        basis = agg.orthogonalize(grads, rates)
        lam = agg.optimal_weights(basis)
        V = np.asarray(basis.vectors)
        p = lam @ V
        ref = oracle.frank_wolfe_min_norm(V, tol=1e-12)
        worst_obj = max(worst_obj, abs(float(ref.point @ ref.point) - float(p @ p)))
        worst_w = max(worst_w, float(np.max(np.abs(ref.weights - lam))))
    ok = worst_obj <= 1e-6 and worst_w <= 1e-4
    return SuiteResult("fw", iters, worst_obj, 1e-6, ok,
                       detail=f"max weight gap {worst_w:.3e} (tol 1e-04)")


def _spd(gen, d, cond=10.0):
    q, _ = np.linalg.qr(gen.normal(size=(d, d)))
    return (q * np.geomspace(1.0, cond, d)) @ q.T


def bfgs(iters=1000, seed=2, sequences=200) -> SuiteResult:
    """Secant condition, two-loop vs dense inverse recurrence, and PD checks."""
    gen = np.random.default_rng(seed)
    secant = 0.0
    for _ in range(iters):
        d = int(gen.integers(2, 21))
        B = _spd(gen, d)
        s = gen.normal(size=d)
        y = _spd(gen, d) @ s
        pair = _local.accept_pair(s, y)
        if pair is None:
            continue
        B1 = _local.bfgs_update_dense(B, pair)
        secant = max(secant, relative_error(B1 @ s, y))

    product, pd_fail = 0.0, 0
    for _ in range(sequences):
        d = int(gen.integers(2, 11))
        A = _spd(gen, d)
        pairs = []
        for _ in range(int(gen.integers(1, d + 1))):
            s = gen.normal(size=d)
            pair = _local.accept_pair(s, A @ s)
            if pair is not None:
                pairs.append(pair)
        g = gen.normal(size=d)
        fast = _local.lbfgs_apply(pairs, g, memory=len(pairs), h0=1.0)
        H = oracle.dense_inverse_bfgs(pairs, d)
        product = max(product, relative_error(fast, H @ g))
        B = _local.dense_hessian(pairs, d)
        if np.linalg.eigvalsh(B).min() <= 0 or np.linalg.eigvalsh(H).min() <= 0:
            pd_fail += 1
    ok = secant <= 1e-10 and product <= 1e-8 and pd_fail == 0
    return SuiteResult("bfgs", iters + sequences, max(secant, product), 1e-8, ok,
                       detail=f"secant {secant:.3e} (tol 1e-10), two-loop {product:.3e}, "
                              f"non-PD {pd_fail}")


def random_model(gen):
    kind = _model.KINDS[int(gen.integers(len(_model.KINDS)))]
    dim = int(gen.integers(1, 7))
    classes = int(gen.integers(2, 5))
    spec = _model.ModelSpec(
        kind=kind,
        input_dim=dim,
        num_classes=classes if kind != "quadratic" else 1,
        hidden_dim=int(gen.integers(1, 6)) if kind == "mlp-1h" else 0,
        l2_reg=float(gen.choice([0.0, 1e-3, 0.1])),
    )
    n = int(gen.integers(1, 9))
    X = gen.normal(size=(n, dim))
    y = gen.integers(0, classes, size=n) if kind != "quadratic" else np.zeros(n, dtype=int)
    theta = gen.normal(size=spec.num_params) * 0.5
    return spec, _model.Batch(X, y), theta


def grad(iters=200, seed=3) -> SuiteResult:
    """Analytic gradients against central finite differences."""
    gen = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(iters):
        spec, batch, theta = random_model(gen)
        _, g = _model.loss_and_grad(spec, theta, batch)
        ref = oracle.finite_diff_grad(lambda p: _model.loss(spec, p, batch), theta)
        worst = max(worst, relative_error(g, ref))
    return SuiteResult("grad", iters, worst, 1e-5, worst <= 1e-5)


def order(iters=100, seed=4, perms=5) -> SuiteResult:
    """Per-client rates do not depend on the processing order."""
    gen = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(iters):
        grads, rates = random_instance(gen)
        K = len(rates)
        base = agg.dqnfed_plan(grads, rates)
        ref = dict(zip(base.client_ids, base.per_client_rate))
        for _ in range(perms):
            ids = [int(i) for i in gen.permutation(K)]
            plan = agg.dqnfed_plan(grads, rates, ids)
            got = dict(zip(plan.client_ids, plan.per_client_rate))
            for pos, cid in enumerate(ids):
                worst = max(worst, abs(got[cid] - ref[pos]) / abs(ref[pos]))
    return SuiteResult("order", iters, worst, 1e-8, worst <= 1e-8)


def scale(iters=100, seed=5, factors=(1e-3, 1.0, 1e3)) -> SuiteResult:
    """Scaling every rate by c keeps the weights and scales the update by c."""
    gen = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(iters):
        grads, rates = random_instance(gen)
        base = agg.dqnfed_plan(grads, rates)
        step = base.eta * base.direction
        for c in factors:
            plan = agg.dqnfed_plan(grads, c * rates)
            worst = max(worst,
                        relative_error(plan.eta * plan.direction / c, step),
                        float(np.max(np.abs(plan.lambdas - base.lambdas))))
    return SuiteResult("scale", iters, worst, 1e-8, worst <= 1e-8)


SUITES: Dict[str, Callable[..., SuiteResult]] = {
    "rate-identity": rate_identity,
    "fw": fw,
    "bfgs": bfgs,
    "grad": grad,
    "order": order,
    "scale": scale,
}


def run_suite(name, iters=None) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    start = time.perf_counter()
    res = SUITES[name]() if iters is None else SUITES[name](iters=iters)
    res.seconds = time.perf_counter() - start
    res.max_error, res.passed = float(res.max_error), bool(res.passed)
    return res
