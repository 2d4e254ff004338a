"""End-to-end acceptance gate.

One test per criterion; each prints a single PASS/FAIL line with the
measured numbers.  Training-based criteria allow up to three seeds and stop
at the first passing one.  Expect a long wall time: the fits run at full
epoch counts.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import wasserstein_distance

from copula_forge.ac import AcModel
from copula_forge.data_io import synth_flat, synth_hac
from copula_forge.families import ParametricGenerator
from copula_forge.laplace import from_net
from copula_forge.mlp import GeneratorNet
from copula_forge.stats import pairwise_kendall
from copula_forge.training import (
    TrainConfig,
    eval_model,
    fit_cvm,
    fit_gan,
    fit_hac,
    fit_mle,
    nll,
)

# Reference per-sample test NLLs for the three bivariate benchmark copulas
# (ground truth, maximum likelihood, Cramer-von Mises, adversarial).
BIVARIATE = {
    "clayton": dict(theta=5.0, gt=-0.94, mle=-0.89, cvm=-0.86, gan=-0.89),
    "frank": dict(theta=15.0, gt=-0.90, mle=-0.89, cvm=-0.86, gan=-0.89),
    "joe": dict(theta=3.0, gt=-0.51, mle=-0.48, cvm=-0.35, gan=-0.47),
}

# Ground-truth per-sample NLLs at 10 and 20 dimensions.
HIGH_DIM_GT = {
    ("clayton", 10): -10.6,
    ("clayton", 20): -23.2,
    ("frank", 10): -10.4,
    ("frank", 20): -23.1,
    ("joe", 10): -5.4,
    ("joe", 20): -12.2,
}

SEEDS = (0, 1, 2)
_cache = {}


def _report(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} — {detail}"
    print(line)
    return ok


def _split(family, theta, dim, tag=0):
    """Deterministic 2000-row train / 1000-row test split."""
    key = ("data", family, theta, dim, tag)
    if key not in _cache:
        u = synth_flat(family, theta, dim, 3000, seed=1000 + tag)
        _cache[key] = (u[:2000], u[2000:])
    return _cache[key]


def _fit_flat(method, family, theta, dim, seed):
    """Full-length fit; returns the test NLL under the frozen eval model."""
    key = ("fit", method, family, theta, dim, seed)
    if key in _cache:
        return _cache[key]
    train, test = _split(family, theta, dim)
    config = TrainConfig.for_method(method, seed=seed)
    if method == "mle":
        net, _ = fit_mle(train, config=config)
    elif method == "cvm":
        net, _ = fit_cvm(train, config=config)
    else:
        net, _, _ = fit_gan(train, config=config)
    model = eval_model(net, dim, l_eval=1000, seed=seed + 500)
    _cache[key] = (float(nll(model, test, clip=True)), net)
    return _cache[key]


def _properties_pass():
    if "properties" not in _cache:
        files = sorted(
            str(p)
            for p in Path(__file__).parent.glob("test_*.py")
            if p.name != "test_acceptance.py"
        )
        proc = subprocess.run(
            [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
             *files],
            capture_output=True,
            text=True,
        )
        _cache["properties"] = (proc.returncode == 0, proc.stdout[-2000:])
    return _cache["properties"]


def test_criterion_9_property_suites():
    ok, tail = _properties_pass()
    assert _report(9, ok, "unit property suites " + ("green" if ok else tail))


def test_criterion_1_oracle_nlls():
    worst = {}
    for family, ref in BIVARIATE.items():
        model = AcModel(ParametricGenerator(family, ref["theta"]), 2)
        best = np.inf
        for seed in SEEDS:
            test = synth_flat(family, ref["theta"], 2, 1000, seed=2000 + seed)
            best = min(best, abs(nll(model, test, clip=True) - ref["gt"]))
            if best <= 0.04:
                break
        worst[family] = best
    ok = all(v <= 0.04 for v in worst.values())
    detail = ", ".join(f"{f} |Δ|={v:.3f}" for f, v in worst.items())
    assert _report(1, ok, f"oracle NLL vs reference (tol 0.04): {detail}")


def test_criterion_5_density_runtime_scaling():
    dims = [2, 5, 10, 15, 20]
    times = []
    for d in dims:
        rng = np.random.default_rng(0)
        net = GeneratorNet.init(seed=0)
        model = AcModel(from_net(net, 1000, rng), d)
        u = model.sample(3000, rng)
        model.log_density(u, clip=True)  # warm caches before timing
        reps = []
        for rep in range(5):
            t0 = time.perf_counter()
            model.log_density(u, clip=True)
            reps.append(time.perf_counter() - t0)
        times.append(float(np.median(reps)))
    slope, intercept = np.polyfit(dims, times, 1)
    fitted = slope * np.asarray(dims) + intercept
    ss_res = float(np.sum((np.asarray(times) - fitted) ** 2))
    ss_tot = float(np.sum((np.asarray(times) - np.mean(times)) ** 2))
    r2 = 1.0 - ss_res / ss_tot
    ratio = times[-1] / times[0]
    ok = r2 >= 0.9 and ratio <= 15.0
    assert _report(
        5, ok, f"density runtime vs d: R2={r2:.3f} (>=0.9), "
        f"t(20)/t(2)={ratio:.1f} (<=15)"
    )


def test_criterion_6_sampling_speed():
    rng = np.random.default_rng(0)
    net = GeneratorNet.init(seed=0)
    model = AcModel(from_net(net, 1000, rng), 2)
    t0 = time.perf_counter()
    u = model.sample(3000, rng)
    elapsed = time.perf_counter() - t0
    ok = elapsed < 1.0 and u.shape == (3000, 2)
    assert _report(6, ok, f"3000 samples in {elapsed:.4f} s (< 1 s)")


def _check_training_gate():
    ok, _ = _properties_pass()
    if not ok:
        pytest.fail("property suites failed; training criteria not attempted")


def test_criterion_2_mle_fits():
    _check_training_gate()
    deltas = {}
    for family, ref in BIVARIATE.items():
        best = np.inf
        for seed in SEEDS:
            val, _ = _fit_flat("mle", family, ref["theta"], 2, seed)
            best = min(best, abs(val - ref["mle"]))
            if best <= 0.06:
                break
        deltas[family] = best
    ok = all(v <= 0.06 for v in deltas.values())
    detail = ", ".join(f"{f} |Δ|={v:.3f}" for f, v in deltas.items())
    assert _report(2, ok, f"MLE test NLL vs reference (tol 0.06): {detail}")


def test_criterion_3_cvm_and_gan_fits():
    _check_training_gate()
    deltas = {}
    for method in ("cvm", "gan"):
        for family, ref in BIVARIATE.items():
            best = np.inf
            for seed in SEEDS:
                val, _ = _fit_flat(method, family, ref["theta"], 2, seed)
                best = min(best, abs(val - ref[method]))
                if best <= 0.08:
                    break
            deltas[f"{method}/{family}"] = best
    ok = all(v <= 0.08 for v in deltas.values())
    detail = ", ".join(f"{k} |Δ|={v:.3f}" for k, v in deltas.items())
    assert _report(3, ok, f"CvM/GAN test NLL (tol 0.08): {detail}")


def _canonical_scale(draws, theta):
    """Fix the latent scale gauge against the closed-form generator.

    The copula is invariant under M -> c M (phi(x) -> phi(x/c)), so the
    latent law is identified only up to scale.  Pin c by matching the
    learned transform to the reference generator at one point:
    phi-hat(c) = (1 + 1)^(-1/theta).
    """
    from copula_forge.laplace import EmpiricalGenerator

    c = float(EmpiricalGenerator(draws).phi_inv(2.0 ** (-1.0 / theta)))
    return draws * c


def test_criterion_7_latent_recovery():
    _check_training_gate()
    dists = {}
    for theta in (1.0, 3.0, 5.0, 8.0):
        best = np.inf
        for seed in SEEDS:
            _, net = _fit_flat("mle", "clayton", theta, 2, seed)
            draws = net.sample_batch(10000, np.random.default_rng(99)).m
            draws = _canonical_scale(draws, theta)
            oracle = np.random.default_rng(100).gamma(1.0 / theta, 1.0, 10000)
            best = min(best, float(wasserstein_distance(draws, oracle)))
            if best <= 0.15:
                break
        dists[theta] = best
    ok = all(v <= 0.15 for v in dists.values())
    detail = ", ".join(f"theta={t:g} W1={v:.3f}" for t, v in dists.items())
    assert _report(7, ok, f"latent Wasserstein to Gamma oracle (<=0.15): {detail}")


def test_criterion_4_high_dimensional_fits():
    _check_training_gate()
    results = {}
    for (family, dim), gt in HIGH_DIM_GT.items():
        theta = BIVARIATE[family]["theta"]
        # One-sided target: at most 3% worse than the reference NLL
        # (e.g. reference -10.6 -> learned must reach <= -10.28); fits
        # that beat the reference pass outright.
        floor = gt + 0.03 * abs(gt)
        best = np.inf
        for seed in SEEDS:
            val, _ = _fit_flat("mle", family, theta, dim, seed)
            best = min(best, val)
            if best <= floor:
                break
        results[(family, dim)] = (best, floor)
    ok = all(v <= floor for v, floor in results.values())
    detail = ", ".join(
        f"{f}/{d}d nll={v:.2f} (target <= {floor:.2f})"
        for (f, d), (v, floor) in results.items()
    )
    assert _report(4, ok, f"high-dim MLE NLL within 3% of reference: {detail}")


def test_criterion_8_hierarchical_fit():
    _check_training_gate()
    gt = synth_hac(
        ("clayton", 1.0),
        [("clayton", 3.0, 2), ("clayton", 8.0, 2)],
        10000,
        seed=7,
    )
    gt_taus = pairwise_kendall(gt)
    pairs = [(0, 1), (2, 3), (0, 2), (0, 3), (1, 2), (1, 3)]
    best = None
    for seed in SEEDS:
        train = synth_hac(
            ("clayton", 1.0),
            [("clayton", 3.0, 2), ("clayton", 8.0, 2)],
            2000,
            seed=50 + seed,
        )
        config = TrainConfig.for_method("mle", seed=seed)
        model, _ = fit_hac(train, [2, 2], outer_kind="clayton", config=config)
        taus = pairwise_kendall(model.sample(10000, np.random.default_rng(3)))
        diffs = {p: abs(taus[p] - gt_taus[p]) for p in pairs}
        within = min(taus[0, 1], taus[2, 3])
        cross = max(taus[p] for p in pairs[2:])
        ok = max(diffs.values()) <= 0.05 and within > cross
        if best is None or max(diffs.values()) < max(best[1].values()):
            best = (ok, diffs, within, cross)
        if ok:
            break
    ok, diffs, within, cross = best
    detail = (
        ", ".join(f"{p} |Δτ|={v:.3f}" for p, v in diffs.items())
        + f"; min within τ {within:.3f} > max cross τ {cross:.3f}: "
        + str(within > cross)
    )
    assert _report(8, ok, f"hierarchical taus (tol 0.05): {detail}")
