"""Acceptance suite: one test per exit criterion, printed pass/fail.

The three experiment criteria run at paper scale (5 links, 100 drops, 100
slots for the dynamic case) on module-scoped cached results; the solver
criteria run on seeded synthetic instances with independent oracles.
"""
import dataclasses
import itertools
import time

import numpy as np
import pytest

from bpcoord.baselines import exhaustive_optimum
from bpcoord.core import (
    InterferenceSystem,
    SchedulingProfile,
    SchedulingSet,
    build_factor_graph,
    total_utility,
)
from bpcoord.exact_bp import BPConfig, gibbs_distribution, run_exact_bp
from bpcoord.femto import path_loss_db
from bpcoord.first_order_bp import (
    classify_edges,
    first_order_message,
    overhead_rows,
    run_first_order_bp,
    sensitivities,
)
from bpcoord.gauss_bp import (
    EdgeMoments,
    ReceiverInterference,
    conditional_interference_moments,
    cross_message,
    gauss_hermite_nodes,
    interference_moments,
    log_partition_value,
    run_gaussian_bp,
)
from bpcoord.harness import ExperimentConfig, run_experiment, write_results
from bpcoord.utility import CallableUtility, RateModel, RateUtility, UtilitySpec

NOISE_W = 5.00035e-14  # thermal floor over 5 MHz with a 4 dB noise figure


def report(name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    assert ok, line


def timed(limit_s, started):
    return time.perf_counter() - started, time.perf_counter() - started < limit_s


# --- shared instance generators -------------------------------------------

def random_tree_system(rng, n, m):
    sets = [SchedulingSet(rng.uniform(0.0, 1.0, size=(m, 1))) for _ in range(n)]
    mixing = {}
    for j in range(1, n):
        parent = int(rng.integers(0, j))
        pair = (j, parent) if rng.random() < 0.5 else (parent, j)
        mixing[pair] = np.array([[rng.uniform(0.2, 2.0)]])
    tables = rng.normal(size=(n, m))

    def make(i):
        cand = sets[i].candidates

        def f(x, z, tab=tables[i], cand=cand):
            c = int(np.argmin(np.abs(cand[:, 0] - x[0])))
            return float(tab[c]) + 0.6 * np.cos(z[0]) - 0.15 * z[0] ** 2

        return CallableUtility(f)

    return InterferenceSystem(sets, mixing, 1,
                              utilities=[make(i) for i in range(n)])


def dense_onoff_instance(rng, n=4):
    """Apartment-grade link budget with random weights, fully connected."""
    power, bandwidth = 1e-3, 5e6
    gdb = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            dist = rng.uniform(2, 8) if i == j else rng.uniform(5, 25)
            walls = 0 if i == j else int(rng.integers(0, 3))
            gdb[i, j] = -path_loss_db(dist) - 10.0 * walls - rng.normal(0, 10.0)
    g = 10 ** (gdb / 10) * rng.exponential(1.0, (n, n))
    sets = [SchedulingSet(np.array([[0.0], [power]])) for _ in range(n)]
    mixing = {(i, j): np.array([[g[i, j]]])
              for i in range(n) for j in range(n) if i != j}
    avg = 10 ** rng.uniform(4.5, 7.5, n)
    utils = [
        RateUtility(RateModel(gains=np.array([g[i, i]]), noise_w=NOISE_W,
                              bandwidth_hz=bandwidth),
                    UtilitySpec(kind="weighted-rate"), link=i, weight=1.0 / avg[i])
        for i in range(n)
    ]
    return InterferenceSystem(sets, mixing, 1, utils)


def sensitivity_fixture(rng):
    n_z = int(rng.integers(1, 4))
    gains = rng.uniform(0.5, 2.0, size=n_z)
    model = RateModel(gains=gains, noise_w=0.2, bandwidth_hz=1.0)
    util = RateUtility(model, UtilitySpec("proportional-fair"))
    cands = rng.uniform(0.2, 1.5, size=(3, n_z))
    serving = rng.normal(size=3) * 0.3
    mean = rng.uniform(1.0, 2.0, size=n_z)
    cov_scaled = np.diag(rng.uniform(0.002, 0.02, size=n_z))
    u = rng.uniform(2.0, 6.0)
    return util, cands, serving, ReceiverInterference(mean=mean,
                                                      cov=cov_scaled * u), u


# --- experiment caches -----------------------------------------------------

@pytest.fixture(scope="module")
def dynamic_result():
    config = ExperimentConfig(
        mode="onoff", algorithms=("reuse1", "fo-bp-2", "gauss-bp-4", "exhaustive"),
        drops=100, slots=100, seed=0)
    started = time.perf_counter()
    result = run_experiment(config)
    return result, time.perf_counter() - started


@pytest.fixture(scope="module")
def subband_result():
    config = ExperimentConfig(
        mode="subband", algorithms=("reuse1", "fo-bp-4", "gauss-bp-4", "exhaustive"),
        drops=100, seed=0)
    started = time.perf_counter()
    result = run_experiment(config)
    return result, time.perf_counter() - started


@pytest.fixture(scope="module")
def beamforming_result():
    config = ExperimentConfig(
        mode="beamforming",
        algorithms=("serving-only", "fo-bp-2", "gauss-bp-4", "exhaustive"),
        drops=100, seed=0)
    started = time.perf_counter()
    result = run_experiment(config)
    return result, time.perf_counter() - started


# --- criteria --------------------------------------------------------------

def test_oracle_exactness_on_trees():
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 5))
        m = int(rng.integers(2, 5))
        system = random_tree_system(rng, n, m)
        graph = build_factor_graph(system)
        config = BPConfig(sharpness=4.0, scale=1.0, rounds=graph.diameter())
        res = run_exact_bp(system, config)
        truth = gibbs_distribution(system, config)
        for j in range(n):
            worst = max(worst, np.abs(res.marginals[j] - truth.marginal(j)).max())
    elapsed, in_time = timed(60, started)
    report("oracle exactness: tree marginals vs brute force <= 1e-9",
           worst <= 1e-9 and in_time,
           f"worst {worst:.2e}, {elapsed:.0f}s")


def test_large_sharpness_decision_quality():
    started = time.perf_counter()
    rng = np.random.default_rng(20260810)
    ok_exact = ok_gauss = top2 = 0
    count = 200
    for _ in range(count):
        system = dense_onoff_instance(rng)
        values = sorted(
            (total_utility(system, SchedulingProfile(c))
             for c in itertools.product(range(2), repeat=4)),
            reverse=True)
        best, second = values[0], values[1]
        exact = run_exact_bp(system, BPConfig(sharpness=50.0, rounds=8))
        gauss = run_gaussian_bp(system, BPConfig(sharpness=50.0, rounds=8,
                                                 damping=0.7))
        ok_exact += exact.objective >= 0.95 * best
        ok_gauss += gauss.objective >= 0.95 * best
        top2 += exact.objective >= second - 1e-9 * abs(second)
    elapsed, in_time = timed(120, started)
    report("large-u decisions: exact-BP within 5% of optimum on >= 80%",
           ok_exact >= 0.80 * count and in_time,
           f"{ok_exact}/{count}, {elapsed:.0f}s")
    report("large-u decisions: gauss-BP within 5% of optimum on >= 80%",
           ok_gauss >= 0.80 * count, f"{ok_gauss}/{count}")
    report("large-u decisions: exact-BP in the top-2 profiles on >= 95%",
           top2 >= 0.95 * count, f"{top2}/{count}")


def test_gradient_identity():
    started = time.perf_counter()
    rng = np.random.default_rng(303)
    worst_g = worst_h = 0.0
    for _ in range(100):
        util, cands, serving, agg, u = sensitivity_fixture(rng)
        sens = sensitivities(util, cands, serving, agg, u)
        n_z = len(agg.mean)
        h = 1e-3

        def value_at(mean):
            return log_partition_value(
                util, cands, serving,
                ReceiverInterference(mean=mean, cov=agg.cov), u)

        grad = np.zeros(n_z)
        for k in range(n_z):
            e = np.zeros(n_z)
            e[k] = h
            grad[k] = (value_at(agg.mean + e) - value_at(agg.mean - e)) / (2 * h)
        worst_g = max(worst_g, np.linalg.norm(grad - sens.grad)
                      / max(np.linalg.norm(grad), 1e-12))
        hess = np.zeros((n_z, n_z))
        base = value_at(agg.mean)
        for k in range(n_z):
            ek = np.zeros(n_z)
            ek[k] = h
            hess[k, k] = (value_at(agg.mean + ek) - 2 * base
                          + value_at(agg.mean - ek)) / h**2
            for l in range(k + 1, n_z):
                el = np.zeros(n_z)
                el[l] = h
                mixed = (value_at(agg.mean + ek + el)
                         - value_at(agg.mean + ek - el)
                         - value_at(agg.mean - ek + el)
                         + value_at(agg.mean - ek - el)) / (4 * h**2)
                hess[k, l] = hess[l, k] = mixed
        worst_h = max(worst_h, np.linalg.norm(hess - sens.hess)
                      / max(np.linalg.norm(hess), 1e-12))
    elapsed, in_time = timed(60, started)
    report("gradient identity: sensitivity vs finite differences (1e-4 / 1e-3)",
           worst_g <= 1e-4 and worst_h <= 1e-3 and in_time,
           f"grad {worst_g:.2e}, hess {worst_h:.2e}, {elapsed:.0f}s")


def _taylor_error(scale):
    u = 4.0
    util = RateUtility(RateModel(gains=np.array([1.2]), noise_w=0.3,
                                 bandwidth_hz=1.0),
                       UtilitySpec("proportional-fair"))
    cands_i = np.array([[0.6], [1.0], [1.4]])
    serving = np.array([0.0, 0.15, -0.2])
    agg = ReceiverInterference(mean=np.array([1.4]), cov=np.array([[0.05]]) * u)
    a = np.array([[0.25 * scale]])
    cand_j = np.array([[0.0], [0.5], [1.0]])
    tx_mean, tx_cov = np.array([0.4]), np.array([[0.08]]) * u
    cond_cov = agg.cov - a @ tx_cov @ a.T
    offsets, log_w = gauss_hermite_nodes(cond_cov, u, order=15)
    full = cross_message(util, cands_i, serving, agg.mean - a @ tx_mean,
                         cand_j @ a.T, u, offsets, log_w)
    sens = sensitivities(util, cands_i, serving, agg, u, quad_order=15)
    linear = cand_j @ first_order_message(a, sens, tx_mean)
    diff = (linear - linear.mean()) - (full - full.mean())
    return np.abs(diff).max()


def test_taylor_scaling():
    started = time.perf_counter()
    scales = np.logspace(0, -3, 10)
    errors = np.array([_taylor_error(s) for s in scales])
    slope = np.polyfit(np.log(scales), np.log(errors), 1)[0]
    elapsed, in_time = timed(60, started)
    report("taylor scaling: weak-edge message error slope 2 +- 0.2",
           abs(slope - 2.0) <= 0.2 and in_time,
           f"slope {slope:.3f}, {elapsed:.0f}s")


def test_moment_algebra_and_quadrature():
    rng = np.random.default_rng(404)
    worst_downdate = 0.0
    for _ in range(50):
        n, n_x, n_z = 4, 2, 3
        sets = [SchedulingSet(rng.normal(size=(3, n_x))) for _ in range(n)]
        mixing = {(0, j): rng.normal(size=(n_z, n_x)) for j in range(1, n)}
        system = InterferenceSystem(sets, mixing, n_z,
                                    [CallableUtility(lambda x, z: 0.0)] * n)
        moments = EdgeMoments()
        for j in range(1, n):
            moments.mean[(0, j)] = rng.normal(size=n_x)
            raw = rng.normal(size=(n_x, n_x))
            moments.cov[(0, j)] = raw @ raw.T / n_x
        agg = interference_moments(system, moments, 0)
        for j in range(1, n):
            cond = conditional_interference_moments(
                system, moments, 0, j, rng.normal(size=n_x), aggregate=agg)
            a = system.mixing_matrix(0, j)
            rebuilt = cond.cov + a @ moments.cov[(0, j)] @ a.T
            denom = max(np.abs(agg.cov).max(), 1.0)
            worst_downdate = max(worst_downdate,
                                 np.abs(rebuilt - agg.cov).max() / denom)

    worst_quad = 0.0
    for _ in range(50):
        n_z = int(rng.integers(1, 4))
        u = rng.uniform(2.0, 6.0)
        mean = rng.normal(size=n_z)
        raw = rng.normal(size=(n_z, n_z))
        cov_scaled = (raw @ raw.T / n_z) * rng.uniform(0.1, 0.6) * u
        c = rng.normal(size=n_z)
        c *= 0.8 / (u * np.sqrt(c @ cov_scaled @ c / u) + 1e-12)
        util = CallableUtility(lambda x, z, c=c: float(c @ z))
        agg = ReceiverInterference(mean=mean, cov=cov_scaled)
        got = log_partition_value(util, np.zeros((1, 1)), np.zeros(1), agg, u)
        expected = c @ mean + 0.5 * c @ cov_scaled @ c
        worst_quad = max(worst_quad, abs(got - expected) / max(abs(expected), 1e-9))

    report("moment algebra: covariance downdate identity <= 1e-12",
           worst_downdate <= 1e-12, f"worst {worst_downdate:.2e}")
    report("moment algebra: quadrature vs closed-form Gaussian integral <= 1e-8",
           worst_quad <= 1e-8, f"worst {worst_quad:.2e}")


def test_dynamic_onoff_experiment(dynamic_result):
    # The two-round first-order run is only required to beat reuse-1 on
    # 85% of drops (its broadcast approximation loses the odd drop); the
    # 95% per-drop consistency bar binds the full-message orderings.
    result, elapsed = dynamic_result
    labels = ("reuse1", "fo-bp-2", "gauss-bp-4", "exhaustive")
    sysu = {lab: result.system_utilities(lab) for lab in labels}
    rates = {lab: result.link_rates(lab) for lab in labels}
    tol = 1e-9

    chain = np.mean(
        (sysu["exhaustive"] >= sysu["gauss-bp-4"] * (1 - tol))
        & (sysu["gauss-bp-4"] >= sysu["reuse1"] * (1 - tol)))
    fo_vs_reuse = np.mean(sysu["fo-bp-2"] >= sysu["reuse1"] * (1 - tol))
    med = {lab: np.median(sysu[lab]) for lab in labels}
    medians_ok = (med["exhaustive"] >= med["gauss-bp-4"] >= med["reuse1"]
                  and med["fo-bp-2"] >= med["reuse1"])
    ratio = (np.percentile(rates["gauss-bp-4"], 20)
             / np.percentile(rates["reuse1"], 20))

    report("dynamic on-off: exhaustive >= gauss >= reuse-1 on >= 95% of drops",
           chain >= 0.95, f"consistency {chain:.2f}")
    report("dynamic on-off: first-order >= reuse-1 on >= 85% of drops",
           fo_vs_reuse >= 0.85, f"consistency {fo_vs_reuse:.2f}")
    report("dynamic on-off: median system-utility ordering",
           medians_ok,
           "medians " + ", ".join(f"{lab} {med[lab]/1e6:.1f}M" for lab in labels))
    report("dynamic on-off: 20th-percentile rate gain in [2x, 8x] over reuse-1",
           2.0 <= ratio <= 8.0, f"ratio {ratio:.2f}")
    report("dynamic on-off: runtime target under 10 min",
           elapsed < 600, f"{elapsed:.0f}s")


def test_subband_experiment(subband_result):
    result, elapsed = subband_result
    reuse = result.link_rates("reuse1")
    gauss = result.link_rates("gauss-bp-4")
    med_ok = np.median(gauss) >= np.median(reuse)
    dominated = all(
        result.meta[(d, lab)]["objective"]
        <= result.meta[(d, "exhaustive")]["objective"] + 1e-9
        for d in range(result.config.drops)
        for lab in ("reuse1", "fo-bp-4", "gauss-bp-4"))
    report("subband: gauss-BP median link rate >= reuse-1 median",
           med_ok,
           f"gauss {np.median(gauss)/1e6:.2f}M vs reuse {np.median(reuse)/1e6:.2f}M")
    report("subband: exhaustive search completes and dominates every drop",
           dominated, f"{result.config.drops} drops")
    report("subband: runtime target under 30 min", elapsed < 1800,
           f"{elapsed:.0f}s")


def test_beamforming_experiment(beamforming_result):
    result, elapsed = beamforming_result
    serving = result.link_rates("serving-only")
    gauss = result.link_rates("gauss-bp-4")
    ratio = np.median(gauss) / np.median(serving)
    report("beamforming: gauss-BP median rate in [1.2x, 2x] of serving-only",
           1.2 <= ratio <= 2.0, f"ratio {ratio:.3f}")
    report("beamforming: runtime under 10 min", elapsed < 600, f"{elapsed:.0f}s")


def test_complexity_scaling():
    rng = np.random.default_rng(505)

    # broadcast payloads stay flat as the network grows, all edges weak
    per_size = {}
    for n in (5, 10, 20):
        sets = [SchedulingSet(np.array([[0.0], [1.0]])) for _ in range(n)]
        mixing = {(i, j): np.array([[rng.uniform(0.001, 0.01)]])
                  for i in range(n) for j in range(n) if i != j}
        utils = [RateUtility(RateModel(gains=np.array([1.0]), noise_w=0.1,
                                       bandwidth_hz=1.0), UtilitySpec("sum-rate"))
                 for _ in range(n)]
        system = InterferenceSystem(sets, mixing, 1, utils)
        res = run_first_order_bp(system, BPConfig(rounds=2), threshold_db=np.inf)
        rows = overhead_rows(res.bundles)
        bcast = sorted({r["bytes"] for r in rows
                        if r["kind"] == "broadcast" and r["round"] == 1})
        per_size[n] = bcast
    flat = max(abs(a - b)
               for n in per_size for a, b in zip(per_size[5], per_size[n])) <= 8
    report("complexity: all-weak broadcast bytes constant in network size (+-1 scalar)",
           flat and all(len(per_size[n]) == len(per_size[5]) for n in per_size),
           f"{per_size}")

    # receiver work linear in degree for the approximate engines
    r2 = {}
    for engine, kwargs in (("gauss", {}), ("first-order", {"threshold_db": np.inf})):
        counts = {}
        for deg in (2, 3, 4, 5, 6, 7, 8):
            n = deg + 1
            sets = [SchedulingSet(np.array([[0.0], [1.0]])) for _ in range(n)]
            mixing = {(0, j): np.array([[0.01]]) for j in range(1, n)}
            utils = [RateUtility(RateModel(gains=np.array([1.0]), noise_w=0.1,
                                           bandwidth_hz=1.0),
                                 UtilitySpec("sum-rate")) for _ in range(n)]
            system = InterferenceSystem(sets, mixing, 1, utils)
            if engine == "gauss":
                res = run_gaussian_bp(system, BPConfig(rounds=1))
            else:
                res = run_first_order_bp(system, BPConfig(rounds=1), **kwargs)
            counts[deg] = res.stats["rx_ops_by_round"][0][0]
        degs = np.array(sorted(counts))
        ops = np.array([counts[d] for d in degs], dtype=float)
        fit = np.polyfit(degs, ops, 1)
        resid = ops - np.polyval(fit, degs)
        r2[engine] = 1 - resid.var() / ops.var()
    report("complexity: approximate RX work linear in degree (R^2 > 0.99)",
           all(v > 0.99 for v in r2.values()),
           ", ".join(f"{k} R2 {v:.4f}" for k, v in r2.items()))

    # exact engine cost is candidates ** degree
    m = 4
    exact_ok = True
    detail = []
    for deg in (2, 3, 4):
        n = deg
        sets = [SchedulingSet(np.linspace(0, 1, m)[:, None]) for _ in range(n)]
        mixing = {(0, j): np.array([[0.5]]) for j in range(1, n)}
        utils = [CallableUtility(lambda x, z: -float(z[0])) for _ in range(n)]
        system = InterferenceSystem(sets, mixing, 1, utils)
        res = run_exact_bp(system, BPConfig(sharpness=2.0, rounds=1))
        got = res.stats["rx_utility_evals"][0]
        expected = deg * m**deg
        detail.append(f"deg {deg}: {got}")
        exact_ok &= got == expected
    report("complexity: exact RX work grows as |candidates|^degree",
           exact_ok, "; ".join(detail))


def test_determinism_bitwise(tmp_path):
    outputs = []
    for run in range(2):
        blobs = []
        for config in (
            ExperimentConfig(mode="onoff",
                             algorithms=("reuse1", "fo-bp-2", "gauss-bp-4"),
                             drops=3, slots=20, seed=13),
            ExperimentConfig(mode="subband",
                             algorithms=("reuse1", "gauss-bp-2", "exhaustive"),
                             drops=2, seed=13),
            ExperimentConfig(mode="beamforming",
                             algorithms=("serving-only", "fo-bp-2", "exhaustive"),
                             drops=3, seed=13),
        ):
            path = tmp_path / f"{config.mode}_{run}.csv"
            write_results(run_experiment(config), str(path))
            blobs.append(path.read_bytes())
        outputs.append(blobs)
    same = all(a == b for a, b in zip(outputs[0], outputs[1]))
    report("determinism: identical config and seed reproduce results.csv bitwise",
           same)
