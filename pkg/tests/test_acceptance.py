"""Acceptance criteria 1-9, one test each; every test prints one PASS/FAIL line.

The lines are also collected into the terminal summary of the run.
"""

import itertools
import json
import math
import time
from collections import Counter

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from test_sampler import _field_sample, _random_unobserved
from toy_oracle import chain_histogram, total_variation, toy_posterior

from rarepop import dists
from rarepop.cli import main
from rarepop.config import config_from_dict
from rarepop.design import adaptive_sample, enumerate_selection_probs, sample_from_counts, selection_log_prob
from rarepop.diagnose import diagnose_chain, hpd
from rarepop.grid import PopulationSpec, generate_population
from rarepop.harness import run
from rarepop.model import PriorConfig
from rarepop.rng import RandomSource
from rarepop.sampler import McmcConfig, MixtureSampler, fit_mixture

LIGHT = dict(cell_moves=3, component_moves=2, allocation_moves=2)
SCENARIO = {"rows": 20, "cols": 20, "alpha": 0.15, "beta": 0.10}


def _report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


# --------------------------------------------------------------------------


def _ordered_draws(counts, m):
    """Distinct ordered size sequences of length m drawn without replacement from a multiset."""
    if m == 0:
        yield ()
        return
    for v in sorted(counts):
        if counts[v]:
            counts[v] -= 1
            for rest in _ordered_draws(counts, m - 1):
                yield (v,) + rest
            counts[v] += 1


def test_criterion_1_selection_oracle():
    t0 = time.perf_counter()
    worst_sum, worst_term, cases = 0.0, 0.0, 0
    for k in range(1, 9):
        for Z in itertools.combinations_with_replacement(range(1, 5), k):
            for m in range(1, k + 1):
                enum = enumerate_selection_probs(Z, m)
                # every feasible ordered size sequence, generated independently of the enumeration
                feasible = set(_ordered_draws(Counter(Z), m))
                total = math.fsum(math.exp(selection_log_prob(s, Z)) for s in feasible)
                worst_sum = max(worst_sum, abs(total - 1.0))
                assert set(enum) == feasible
                for s, p in enum.items():
                    worst_term = max(worst_term, abs(math.exp(selection_log_prob(s, Z)) - p))
                cases += 1
    dt = time.perf_counter() - t0
    ok = worst_sum <= 1e-10 and worst_term <= 1e-12 and dt < 10
    _report(1, ok, f"{cases} (Z, m) cases, max |sum - 1| = {worst_sum:.1e}, "
                   f"max term deviation = {worst_term:.1e}, {dt:.1f} s")
    assert ok


def test_criterion_2_distribution_kernel():
    t0 = time.perf_counter()
    worst = 0.0
    for lam in np.geomspace(1e-6, 50, 60):
        y = np.arange(1, 400)
        total = math.fsum(math.exp(dists.trunc_poisson_logpmf(int(v), float(lam))) for v in y)
        worst = max(worst, abs(total - 1.0))
    for n in (1, 2, 5, 20, 100, 400):
        for p in (1e-4, 0.05, 0.15, 0.5, 0.9):
            total = math.fsum(math.exp(dists.trunc_binomial_logpmf(k, n, p)) for k in range(1, n + 1))
            worst = max(worst, abs(total - 1.0))
    for X in range(1, 9):
        for R in range(1, X + 1):
            comps = [c for c in itertools.product(range(1, X + 1), repeat=R) if sum(c) == X]
            total = math.fsum(math.exp(dists.shifted_multinomial_logpmf(list(c), R)) for c in comps)
            worst = max(worst, abs(total - 1.0))
    grid = np.geomspace(1e-6, 50, 2000)
    rt = max(abs(dists.inv_trunc_poisson_mean(dists.trunc_poisson_mean(float(l))) - l) for l in grid)
    gap = max(dists.trunc_poisson_mean(float(l)) - l for l in np.linspace(7, 50, 500))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and rt < 1e-9 and gap < 0.01 and dt < 5
    _report(2, ok, f"max pmf mass error {worst:.1e}, round-trip error {rt:.1e}, "
                   f"max lambda' - lambda for lambda >= 7 = {gap:.2e}, {dt:.1f} s")
    assert ok


@pytest.mark.slow
def test_criterion_3_exhaustive_posterior():
    t0 = time.perf_counter()
    s = sample_from_counts(4, [[2], [0]])
    pri = PriorConfig()
    cap = s.T_s + 3 * s.free_cells  # unobserved counts capped at 3; the tail is lumped
    oracle = toy_posterior(s, pri, cap)
    ch = fit_mixture(s, pri, McmcConfig(iterations=1_000_000, burn_in=1000, thin=1, seed=3, **LIGHT))
    tv = total_variation(oracle, chain_histogram(ch, cap))
    dt = time.perf_counter() - t0
    ok = tv <= 0.05 and dt < 300
    _report(3, ok, f"TV distance {tv:.4f} over (X_unobs, R_unobs, T) after 10^6 sweeps, {dt:.0f} s")
    assert ok


def test_criterion_4_split_combine_reversibility():
    _, _, s = _field_sample()
    rng = np.random.default_rng(44)
    worst, checked = 0.0, 0
    for prior in ("independent", "dependent"):
        sm = MixtureSampler(s, PriorConfig(lambda_prior=prior), McmcConfig(), RandomSource(44))
        target = 5000
        done = 0
        while done < target:
            _random_unobserved(sm, rng)
            prop = sm.propose_split()
            if prop is None:
                continue
            la = sm.log_accept_split(prop)
            if not math.isfinite(la):
                continue
            sm.apply_split(prop)
            lc = sm.log_accept_combine(prop.target)
            worst = max(worst, abs(la + lc))
            done += 1
        checked += done
    ok = worst <= 1e-9 and checked == 10_000
    _report(4, ok, f"{checked} frozen proposals, max |log A(split) + log A(combine)| = {worst:.1e}")
    assert ok


def _single_population():
    """The first replication of the scenario whose sample observes a non-empty network."""
    spec = PopulationSpec(20, 20, 0.15, 0.10)
    for i in range(100):
        src = RandomSource(31, i)
        pop, net, rates = generate_population(spec, src.spawn(0))
        s = adaptive_sample(pop, net, 0.05, src.spawn(1))
        if s.R_s >= 1:
            return pop, net, s, src
    raise AssertionError("no usable sample")


@pytest.mark.slow
def test_criterion_5_single_population_replication():
    t0 = time.perf_counter()
    pop, net, s, src = _single_population()
    # full-length sweeps, thinned so Raftery-Lewis still has its 3746-draw minimum
    cfg = McmcConfig(iterations=100_000, burn_in=10_000, thin=18)
    ch = fit_mixture(s, PriorConfig(), cfg, src.spawn(2))
    iv = hpd(ch.T, 0.95)
    rep = diagnose_chain(ch)
    zs = {k: v["geweke_z"] for k, v in rep.items() if v["geweke_z"] is not None}
    fs = {k: v["rl_factor"] for k, v in rep.items() if v["rl_factor"] is not None}
    inside = iv.lower <= pop.total <= iv.upper
    zmax = max(abs(z) for z in zs.values())
    fmax = max(fs.values())
    dt = time.perf_counter() - t0
    ok = inside and zmax < 2 and fmax < 5 and dt < 600
    detail = (f"T = {pop.total}, HPD [{iv.lower:.0f}, {iv.upper:.0f}], posterior mean {ch.T.mean():.0f}; "
              f"max |Geweke z| = {zmax:.2f}, max R-L factor = {fmax:.2f}; "
              + ", ".join(f"{k}: z={zs[k]:.2f} f={fs[k]:.2f}" for k in zs) + f"; {dt:.0f} s")
    _report(5, ok, detail)
    assert ok


@pytest.mark.slow
def test_criterion_6_scaled_table2_cell(tmp_path):
    t0 = time.perf_counter()
    cfg = config_from_dict({"seed": 6, "population": dict(SCENARIO, cv=0.95), "replications": 100}, "replicate")
    res = run(cfg, tmp_path)
    T = res["summaries"]["T"]
    dt = time.perf_counter() - t0
    ok = 85 <= T.coverage <= 99 and T.rmse <= 0.10 and dt < 4 * 3600
    _report(6, ok, f"T coverage {T.coverage:.1f}%, RMSE {T.rmse:.3f}, RAE {T.rae:.3f}, width {T.width:.2f} "
                   f"over {T.n} replications ({len(res['failures'])} excluded), {dt / 60:.0f} min")
    assert ok


@pytest.mark.slow
def test_criterion_7_model_comparison(tmp_path):
    t0 = time.perf_counter()
    cfg = config_from_dict({"seed": 7, "population": dict(SCENARIO, cv=0.5), "replications": 50}, "compare")
    res = run(cfg, tmp_path)
    mix, net = res["summaries"]["mixture"]["T"], res["summaries"]["network"]["T"]
    rows = [ln.split(",") for ln in (tmp_path / "relative_errors.csv").read_text().splitlines()[1:]]
    net_re = np.mean([float(r[4]) for r in rows if r[1] == "network"])
    mix_re = np.mean([float(r[4]) for r in rows if r[1] == "mixture"])
    dt = time.perf_counter() - t0
    ok = mix.rmse <= net.rmse and net_re < 0
    _report(7, ok, f"T RMSE mixture {mix.rmse:.3f} vs network {net.rmse:.3f}; mean relative error "
                   f"mixture {mix_re:+.3f}, network {net_re:+.3f} over {mix.n} paired samples, {dt / 60:.0f} min")
    assert ok


@pytest.mark.slow
def test_criterion_8_prior_sensitivity(tmp_path):
    t0 = time.perf_counter()
    cfg = config_from_dict({"seed": 8, "population": SCENARIO, "replications": 25,
                            "truths": [[4.5, 4.8, 8.0, 11.3, 13.8]], "taus": [5]}, "sensitivity")
    res = run(cfg, tmp_path)
    rm = {(r[1], r[2], r[4]): (r[5], r[6]) for r in res["rmse_rows"]}
    ind = rm.get(("independent", 1, "observed"))
    dep = rm.get(("tau=5", 1, "observed"))
    dt = time.perf_counter() - t0
    ok = ind is not None and dep is not None and ind[0] <= dep[0]
    detail = "smallest rate 4.5 (observed): " + (
        f"RMSE independent {ind[0]:.4f} (n={ind[1]}) vs tau=5 {dep[0]:.4f} (n={dep[1]})"
        if ind and dep else "never observed") + f", {dt / 60:.0f} min"
    _report(8, ok, detail)
    assert ok


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_criterion_9_determinism(tmp_path):
    tiny = {"iterations": 1500, "burn_in": 300, "thin": 3, **LIGHT}
    long = {"iterations": 4300, "burn_in": 300, "thin": 1, **LIGHT}
    configs = {
        "generate": {"seed": 9, "population": dict(SCENARIO, cv=0.95)},
        "sample": {"seed": 9, "population_file": "IN/generate/population.csv", "rows": 20, "cols": 20,
                   "initial_fraction": 0.1},
        "fit-mixture": {"seed": 9, "sample_file": "IN/sample/sample.json", "mcmc": long},
        "fit-network": {"seed": 9, "sample_file": "IN/sample/sample.json", "mcmc": tiny},
        "diagnose": {"chain_dir": "IN/fit-mixture"},
        "replicate": {"seed": 9, "population": dict(SCENARIO, cv=0.95), "replications": 2, "mcmc": tiny},
        "compare": {"seed": 9, "population": dict(SCENARIO, cv=0.5), "replications": 2, "mcmc": tiny},
        "sensitivity": {"seed": 9, "population": SCENARIO, "replications": 2,
                        "truths": [[4.5, 4.8, 8.0, 11.3, 13.8]], "taus": [5], "mcmc": tiny},
    }
    same, codes = {}, {}
    for run_id in ("a", "b"):
        base = tmp_path / run_id
        base.mkdir()
        for mode, doc in configs.items():
            doc = json.loads(json.dumps(doc).replace("IN/", f"{base}/"))
            conf = base / f"{mode}.json"
            conf.write_text(json.dumps(doc))
            codes[(run_id, mode)] = main([mode, "--config", str(conf), "--out", str(base / mode)])
    for mode in configs:
        same[mode] = _files(tmp_path / "a" / mode) == _files(tmp_path / "b" / mode) and bool(
            _files(tmp_path / "a" / mode))
    ok = all(same.values()) and all(c == 0 for c in codes.values())
    _report(9, ok, "bit-identical outputs: " + ", ".join(f"{m}={'yes' if v else 'NO'}" for m, v in same.items())
            + ("" if all(c == 0 for c in codes.values()) else f"; exit codes {codes}"))
    assert ok
