"""Acceptance suite: one test per release criterion.

Every test records a single PASS/FAIL line through :func:`check`. The lines
are echoed immediately (visible with ``-s``) and collected into a summary
that the pytest terminal report prints at the end of the session. Running
this file directly (``python tests/test_acceptance.py``) is shorthand for
``pytest -s`` on it.
"""

import csv
import io
import math
import time

import mpmath
import numpy as np
import pytest
from scipy import stats

from conftest import circles_data
from fedkern import cli
from fedkern.audit import probe_attack, verify_no_mask_leak
from fedkern.comm import Network
from fedkern.dataio import make_vertical, samples_from_arrays
from fedkern.engine import (
    Federation,
    TheoryConstants,
    TrainConfig,
    theory_iteration_bound,
    theory_terms,
    train_centralized,
)
from fedkern.loss import KINDS, LossSpec, loss, loss_derivative
from fedkern.protocol import TWO_PI, random_protocol, secure_inner_product
from fedkern.rff import KernelSpec, approximation_errors, directions

RESULTS = []


def check(number, name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}" + (f" ({detail})" if detail else "")
    RESULTS.append(line)
    print(line)
    return ok


def _sklearn_data(name, q, seed=0):
    from sklearn.datasets import load_breast_cancer, load_digits

    if name == "breast_cancer":
        X, y = load_breast_cancer(return_X_y=True)
        y = np.where(y == 1, 1, -1)
    else:
        X, y = load_digits(return_X_y=True)
        y = np.where(y < 5, 1, -1)
    return make_vertical(samples_from_arrays(X, y), q, seed=seed)


# tuned per dataset; kernel width follows the feature count
REAL_SETTINGS = {
    "breast_cancer": dict(sigma=2.0, gamma=0.2, lam=1e-3),
    "digits": dict(sigma=4.0, gamma=0.2, lam=1e-3),
}


def _cfg(sigma, gamma, lam, iterations, seed=0):
    return TrainConfig(gamma=gamma, lam=lam, iterations=iterations, kernel=KernelSpec("rbf", sigma), seed=seed)


# 1. federated coefficients equal the centralized oracle


def test_oracle_equivalence():
    cases = []
    for q in (1, 2, 4, 8):
        cases.append(("circles", q, circles_data(n=2000, d=8, q=q, seed=1), _cfg(0.5, 0.1, 2e-3, 1000)))
        s = REAL_SETTINGS["breast_cancer"]
        cases.append(("breast_cancer", q, _sklearn_data("breast_cancer", q), _cfg(s["sigma"], s["gamma"], s["lam"], 1000)))
    worst, slowest, bad = 0.0, 0.0, []
    for name, q, data, cfg in cases:
        t0 = time.perf_counter()
        fed = Federation(data, cfg)
        fed.train()
        elapsed = time.perf_counter() - t0
        fc = fed.coefficients()
        model = train_centralized(data, cfg)
        got = np.array([fc[int(j)] for j in model.iterations])
        dev = float(np.max(np.abs(got - model.alphas)))
        if len(fc) != len(model.alphas) or dev > 1e-10 or elapsed >= 60:
            bad.append((name, q, dev, round(elapsed, 1)))
        worst, slowest = max(worst, dev), max(slowest, elapsed)
    ok = check(1, "federated coefficients match the oracle", not bad,
               f"max deviation {worst:.2e}, slowest configuration {slowest:.1f} s, failures {bad}")
    assert ok


# 2. per-call identity and uniform surviving phase


def test_projection_identity():
    q, n = 4, 1000
    proto = random_protocol(q, seed=0)
    net = Network(range(q))
    rng = np.random.default_rng(0)
    X = rng.random((n, proto.d))
    err = np.empty(n)
    residual = np.empty(n)
    for k in range(n):
        j = k + 1
        slices = {w: X[k, list(proto.groups[w])] for w in range(q)}
        got = secure_inner_product(proto, 0, j, slices, net)
        inner = float(directions(proto.kernel, proto.seed, [j], proto.d)[0] @ X[k])
        err[k] = abs(got - (inner + proto.surviving_mask(0, [j])[0]))
        residual[k] = got - inner
    ks = stats.kstest(residual, stats.uniform(loc=0, scale=TWO_PI).cdf)
    ok = check(2, "masked projection identity and uniform phase", err.max() <= 1e-10 and ks.pvalue > 0.01,
               f"max |error| {err.max():.2e}, KS D={ks.statistic:.4f} p={ks.pvalue:.3f}")
    assert ok


# 3. Monte Carlo rate of the feature approximation


def test_kernel_approximation_rate():
    ms = [64 * 2**k for k in range(9)]
    rows = approximation_errors(KernelSpec("rbf", 1.0), ms, d=2, n_points=20, seeds=range(5))
    m = np.array([r[0] for r in rows], dtype=float)
    mae = np.array([r[1] for r in rows])
    slope = np.polyfit(np.log(m), np.log(mae), 1)[0]
    at4096 = mae[ms.index(4096)]
    ok = check(3, "kernel approximation error rate", abs(slope + 0.5) <= 0.1 and at4096 < 0.02,
               f"log-log slope {slope:.3f}, mean |error| at m=4096 {at4096:.4f}")
    assert ok


# 4. gap to a long-run reference shrinks with t


def test_convergence_trend():
    data = circles_data(n=2000, d=8, q=4, seed=1)
    Xp, _ = data.matrix("test")
    Xp = Xp[:200]
    ts = (500, 1000, 2000)
    gaps = {t: 0.0 for t in ts + (4000,)}
    for seed in range(5):
        cfg = _cfg(0.5, 0.1, 2e-3, 50_000, seed=seed)
        ref, snaps = train_centralized(data, cfg, snapshots=tuple(gaps))
        fref = ref.decision_function(Xp)
        for t in gaps:
            gaps[t] += np.mean((snaps[t].decision_function(Xp) - fref) ** 2) / 5
    ratios = [gaps[2 * t] / gaps[t] for t in ts]
    ok = check(4, "prediction gap to 50k-step reference shrinks", all(r <= 0.7 for r in ratios),
               "gap(2t)/gap(t) " + ", ".join(f"t={t}: {r:.3f}" for t, r in zip(ts, ratios)))
    assert ok


# 5. same accuracy as the oracle after a time budget


def test_generalization_parity():
    budget = 4.0
    details, ok_all = [], True
    for name in ("breast_cancer", "digits"):
        s = REAL_SETTINGS[name]
        data = _sklearn_data(name, 4)
        cfg = _cfg(s["sigma"], s["gamma"], s["lam"], 100_000)
        fed = Federation(data, cfg)
        metrics = fed.train(time_budget=budget)
        fed_err = fed.evaluate_test_error()
        Xt, yt = data.matrix("test")
        same_iters = train_centralized(data, cfg, iterations=fed.t)
        oracle_err = same_iters.error(Xt, yt)
        same_wall = train_centralized(data, cfg, time_budget=metrics.train_seconds)
        wall_err = same_wall.error(Xt, yt)
        ok_all &= abs(fed_err - oracle_err) <= 0.02
        details.append(
            f"{name}: {fed.t} iterations, federated {fed_err:.4f} vs oracle {oracle_err:.4f}"
            f" [oracle on the same wall budget: {len(same_wall.alphas)} iterations, {wall_err:.4f}]"
        )
    ok = check(5, "federated test error matches the oracle", ok_all, "; ".join(details))
    assert ok


# 6. communication grows quadratically in t


def test_complexity_accounting():
    q, T = 4, 2000
    fed = Federation(circles_data(n=2000, d=8, q=q, seed=1), _cfg(0.5, 0.1, 2e-3, T))
    metrics = fed.train()
    per_iter = np.array(metrics.scalars_per_iteration)
    cum = np.cumsum(per_iter)
    ts = np.arange(100, T + 1, 100)
    A = np.column_stack([ts.astype(float) ** 2, ts.astype(float)])
    coef, *_ = np.linalg.lstsq(A, cum[ts - 1], rcond=None)
    fit = A @ coef
    r2 = 1 - np.sum((cum[ts - 1] - fit) ** 2) / np.sum((cum[ts - 1] - cum[ts - 1].mean()) ** 2)
    observed = np.arange(100, T + 1)
    within = bool(np.all(per_iter[observed - 1] <= 3 * q * observed))
    ok = check(6, "cumulative scalar traffic is quadratic in t", r2 > 0.99 and coef[0] > 0 and within,
               f"a={coef[0]:.3f}, b={coef[1]:.2f}, R^2={r2:.5f}, per-iteration <= 3qt for t in [100, {T}]: {within}")
    assert ok


# 7. tree rounds beat star and ring


def test_structure_ordering(capsys):
    assert cli.main(["comm-bench", "--workers", "4,8,16"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    rounds = {(r["structure"], int(r["q"])): int(r["rounds"]) for r in rows}
    ok = all(
        rounds[("tree", q)] == math.ceil(math.log2(q)) < rounds[("star", q)] == rounds[("ring", q)] == q - 1
        for q in (4, 8, 16)
    )
    ok = check(7, "tree rounds below star and ring", ok,
               ", ".join(f"q={q}: tree {rounds[('tree', q)]}, star {rounds[('star', q)]}, ring {rounds[('ring', q)]}"
                         for q in (4, 8, 16)))
    assert ok


# 8. security suite


def test_security_suite(tmp_path):
    honest_ok, min_ratio, worst_leak, pairs_ok, n_pairs = True, math.inf, 0.0, True, 0
    for q in (3, 4, 8):
        for seed in range(10):
            report, net = probe_attack(q, seed)
            honest_ok &= report.verdict == "fails"
            min_ratio = min(min_ratio, report.median_error / report.noise_floor,
                            report.centered_median_error / report.centered_noise_floor)
            pairs_ok &= verify_no_mask_leak(net.tree_log)
            n_pairs += len(net.tree_log)
            leak, _ = probe_attack(q, seed, mask_mode="none")
            worst_leak = max(worst_leak, leak.median_error)
        fed = Federation(circles_data(n=200, d=2 * q, q=q, seed=1), _cfg(0.5, 0.1, 2e-3, 60))
        fed.train()
        pairs_ok &= verify_no_mask_leak(fed.net.tree_log)
        n_pairs += len(fed.net.tree_log)
    out = str(tmp_path / "audit.json")
    codes = {
        "honest": cli.main(["audit", "--workers", "4", "-o", out]),
        "no-masks": cli.main(["audit", "--workers", "4", "--inject", "no-masks", "-o", out]),
        "same-tree": cli.main(["audit", "--workers", "4", "--inject", "same-tree", "-o", out]),
        "bad config": cli.main(["audit", "--workers", "1", "-o", out]),
    }
    codes_ok = codes == {"honest": 0, "no-masks": 4, "same-tree": 4, "bad config": 2}
    ok = check(8, "security suite", honest_ok and worst_leak < 1e-6 and pairs_ok and codes_ok,
               f"honest attack fails on all 30 runs: {honest_ok} (min error/floor {min_ratio:.2f}),"
               f" no-mask error {worst_leak:.1e}, {n_pairs} tree pairs safe: {pairs_ok}, exit codes {codes}")
    assert ok


# 9. loss derivatives


def test_loss_derivatives():
    u = np.linspace(-5.0, 5.0, 1001)
    h = 1e-6
    worst = 0.0
    for kind in KINDS:
        spec = LossSpec(kind)
        for y in (-1.0, 1.0):
            fd = (loss(spec, u + h, y) - loss(spec, u - h, y)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - loss_derivative(spec, u, y)))))
    hinge = LossSpec("smooth-hinge")
    jump = 0.0
    for y in (-1.0, 1.0):
        for m in (0.0, 1.0):
            b = m / y
            left, right = np.nextafter(b, -np.inf), np.nextafter(b, np.inf)
            for fn in (loss, loss_derivative):
                jump = max(jump, abs(float(fn(hinge, left, y)) - float(fn(hinge, right, y))))
    ok = check(9, "loss derivatives and smooth-hinge continuity", worst <= 1e-6 and jump <= 1e-12,
               f"max finite-difference gap {worst:.2e} (h={h:g}), max jump at breakpoints {jump:.2e}")
    assert ok


# 10. theory diagnostic


def _independent_B(kappa, phi, M, lam):
    mpmath.mp.dps = 50
    kappa, phi, M, lam = map(mpmath.mpf, (kappa, phi, M, lam))
    g1 = 2 * kappa * M**2 / lam
    g2 = mpmath.sqrt(kappa) * M * (mpmath.sqrt(kappa) + mpmath.sqrt(phi)) / (2 * lam ** mpmath.mpf(1.5))
    return float((mpmath.sqrt(g2**2 + g1) + g2) ** 2)


def _monotone(values):
    return all(b >= a for a, b in zip(values, values[1:])) and values[-1] > values[0]


def test_theory_diagnostic():
    tc = TheoryConstants(kappa=1, phi=2, M=1)
    B = theory_terms(tc, 1.0)[0]
    ref = _independent_B(1, 2, 1, 1)
    bound = lambda **kw: theory_iteration_bound(TheoryConstants(kappa=1, phi=2, M=1, **kw.get("tc", {})),
                                                kw.get("lam", 0.1))[1]
    mono_eps = _monotone([bound(tc={"epsilon": e}) for e in (0.4, 0.2, 0.1, 0.05)])
    mono_theta = _monotone([bound(tc={"vartheta": v}) for v in (1.0, 0.5, 0.25, 0.1)])
    mono_lam = _monotone([bound(lam=l) for l in (1.0, 0.5, 0.1, 0.01)])
    ok = check(10, "theory bound: B against an independent calculation, monotone t_min",
               abs(B - ref) <= 1e-3 and mono_eps and mono_theta and mono_lam,
               f"B={B:.5f}, high-precision B={ref:.5f}; monotone in 1/eps {mono_eps}, 1/vartheta {mono_theta},"
               f" 1/lambda {mono_lam}")
    assert ok


@pytest.mark.xfail(strict=True, reason="the quoted hand value 9.417 disagrees with the formula, which gives 9.40294")
def test_theory_diagnostic_quoted_value():
    B = theory_terms(TheoryConstants(kappa=1, phi=2, M=1), 1.0)[0]
    ok = check(10, "theory bound reproduces the quoted hand value B=9.417", abs(B - 9.417) <= 1e-3,
               f"B={B:.5f}, |B - 9.417| = {abs(B - 9.417):.4f}")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
