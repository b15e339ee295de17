import math

import numpy as np
import pytest
from toy_oracle import chain_histogram, total_variation, toy_posterior

from rarepop import dists
from rarepop.design import adaptive_sample, sample_from_counts
from rarepop.errors import ConfigError, DomainError, ParseError
from rarepop.grid import PopulationSpec, generate_population
from rarepop.model import PriorConfig
from rarepop.rng import RandomSource
from rarepop.sampler import (
    McmcConfig,
    MixtureSampler,
    NetworkSampler,
    fit_mixture,
    fit_network_model,
    read_chain,
    write_chain,
)

LIGHT = dict(cell_moves=3, component_moves=2, allocation_moves=2)


def _field_sample(seed=5, fraction=0.05, lam=None):
    spec = PopulationSpec(20, 20, 0.15, 0.10, lam=lam) if lam else PopulationSpec(20, 20, 0.15, 0.10)
    src = RandomSource(seed)
    for i in range(50):
        pop, net, _ = generate_population(spec, src.spawn(2 * i))
        s = adaptive_sample(pop, net, fraction, src.spawn(2 * i + 1))
        if s.R_s >= 1:
            return pop, net, s
    raise AssertionError("no sample with an observed network")


def test_config_validation():
    with pytest.raises(ConfigError):
        McmcConfig(iterations=10, burn_in=10)
    with pytest.raises(ConfigError):
        McmcConfig(thin=0)
    with pytest.raises(ConfigError):
        McmcConfig(split_prob=1.0)
    with pytest.raises(ConfigError):
        McmcConfig.from_dict({"iterations": 10, "bogus": 1})
    cfg = McmcConfig(iterations=100, burn_in=10, thin=7)
    assert cfg.n_draws == 12
    assert McmcConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("fit", [fit_mixture, fit_network_model])
def test_census_gives_point_mass(fit):
    pop, net, _ = generate_population(PopulationSpec(8, 8, 0.15, 0.2), RandomSource(1))
    s = adaptive_sample(pop, net, 1.0, RandomSource(2))
    ch = fit(s, PriorConfig(), McmcConfig(iterations=300, burn_in=50, thin=5))
    assert len(ch) == 50
    assert set(ch.T.tolist()) == {pop.total}
    assert set(ch.x_unobs.tolist()) == {0}


@pytest.mark.parametrize("fit", [fit_mixture, fit_network_model])
def test_determinism(fit, tmp_path):
    _, _, s = _field_sample()
    cfg = McmcConfig(iterations=400, burn_in=100, thin=3, seed=9)
    a = fit(s, PriorConfig(), cfg)
    b = fit(s, PriorConfig(), cfg)
    pa, pb = write_chain(a, tmp_path / "a"), write_chain(b, tmp_path / "b")
    for k in pa:
        assert pa[k].read_bytes() == pb[k].read_bytes()
    c = fit(s, PriorConfig(), McmcConfig(iterations=400, burn_in=100, thin=3, seed=10))
    assert not np.array_equal(a.T, c.T) or not np.array_equal(a.alpha, c.alpha)


def test_chain_invariants_and_round_trip(tmp_path):
    _, _, s = _field_sample()
    cfg = McmcConfig(iterations=500, burn_in=100, thin=4)
    ch = fit_mixture(s, PriorConfig(), cfg)
    assert len(ch) == cfg.n_draws
    assert (ch.T >= s.T_s).all()
    assert all(len(lu) == r for lu, r in zip(ch.lambda_unobs, ch.r_unobs))
    assert all(all(a < b for a, b in zip(lu, lu[1:])) for lu in ch.lambda_unobs)
    write_chain(ch, tmp_path)
    back = read_chain(tmp_path)
    for name in ("iters", "alpha", "beta", "nu", "x_unobs", "r_unobs", "T", "lambda_s"):
        assert np.array_equal(getattr(back, name), getattr(ch, name)), name
    assert back.lambda_unobs == ch.lambda_unobs
    assert back.acceptance == ch.acceptance


def test_read_chain_errors(tmp_path):
    with pytest.raises(ParseError):
        read_chain(tmp_path)
    (tmp_path / "chain_scalars.csv").write_text("iter,alpha\n1,0.5\n")
    with pytest.raises(ParseError, match="header"):
        read_chain(tmp_path)


def test_dependent_prior_needs_observed_network():
    s = sample_from_counts(10, [[0], [0]])
    with pytest.raises(DomainError):
        MixtureSampler(s, PriorConfig(lambda_prior="dependent"), McmcConfig(), RandomSource(0))


# ------------------------------------------------------------ single moves


def test_nu_update_is_conjugate():
    # census of one cell: no unobserved components, one observed rate
    s = sample_from_counts(3, [[1], [0], [0]])
    sm = MixtureSampler(s, PriorConfig(d=1.0, e=1.0, f=1.0), McmcConfig(), RandomSource(4))
    sm.lam_s = [1.0]
    draws = []
    for _ in range(40000):
        sm.update_nu()
        draws.append(sm.nu)
    draws = np.array(draws)
    # Gamma(2, 2): mean 1, variance 1/2
    assert abs(draws.mean() - 1.0) < 4 * math.sqrt(0.5 / len(draws))
    assert draws.var() == pytest.approx(0.5, rel=0.05)


def test_nu_prior_draw_without_components():
    s = sample_from_counts(6, [[0], [0], [0]])
    sm = MixtureSampler(s, PriorConfig(e=3.0, f=2.0), McmcConfig(), RandomSource(4))
    sm.u_lam, sm.u_Y, sm.u_S, sm.u_L = [], [], [], []
    draws = []
    for _ in range(20000):
        sm.update_nu()
        draws.append(sm.nu)
    assert np.mean(draws) == pytest.approx(1.5, rel=0.03)


def test_count_gibbs_mean():
    _, _, s = _field_sample()
    sm = MixtureSampler(s, PriorConfig(), McmcConfig(), RandomSource(3))
    sm.u_lam, sm.u_Y, sm.u_S, sm.u_L = [], [], [], []
    sm._append_comp(0.7, [1] * 5)
    sm._append_comp(4.0, [1] * 12)
    tot = np.zeros(2)
    n = 4000
    for _ in range(n):
        sm.update_counts()
        assert all(y >= 1 for ys in sm.u_Y for y in ys)
        tot += [np.mean(sm.u_Y[0]), np.mean(sm.u_Y[1])]
    assert tot[0] / n == pytest.approx(dists.trunc_poisson_mean(0.7), rel=0.02)
    assert tot[1] / n == pytest.approx(dists.trunc_poisson_mean(4.0), rel=0.02)


def test_large_rates_accept_nearly_always():
    # census: only observed components, all with large rates
    s = sample_from_counts(4, [[60, 55], [0], [70]])
    ch = fit_mixture(s, PriorConfig(), McmcConfig(iterations=400, burn_in=10, thin=1))
    p, a = ch.acceptance["lambda"]
    assert a / p > 0.99


def test_alpha_accepts_nearly_always_for_large_populations():
    s = sample_from_counts(400, [[3]] * 80 + [[0]] * 320)
    ch = fit_mixture(s, PriorConfig(), McmcConfig(iterations=200, burn_in=10, thin=1))
    p, a = ch.acceptance["alpha"]
    assert a / p > 0.99


def _random_unobserved(sm, rng):
    sm.u_lam, sm.u_Y, sm.u_S, sm.u_L = [], [], [], []
    k = int(rng.integers(1, 5))
    lams = np.sort(rng.uniform(0.02, 30.0, k))
    for lam in lams:
        c = int(rng.integers(1, 9))
        sm._append_comp(float(lam), [int(dists.trunc_poisson_sample(lam, rng)) for _ in range(c)])


@pytest.mark.parametrize("lambda_prior", ["independent", "dependent"])
def test_split_combine_reversibility(lambda_prior):
    _, _, s = _field_sample()
    sm = MixtureSampler(s, PriorConfig(lambda_prior=lambda_prior), McmcConfig(), RandomSource(6))
    rng = np.random.default_rng(6)
    checked = 0
    while checked < 1000:
        _random_unobserved(sm, rng)
        prop = sm.propose_split()
        if prop is None:
            continue
        C = prop.c1 + prop.c2
        mu = dists.trunc_poisson_excess(sm.u_lam[prop.target])
        mu1 = dists.trunc_poisson_excess(prop.lam1)
        mu2 = dists.trunc_poisson_excess(prop.lam2)
        assert prop.c1 * mu1 + prop.c2 * mu2 == pytest.approx(C * mu, rel=1e-10)
        assert prop.lam1 < prop.lam2 and prop.c1 >= 1 and prop.c2 >= 1
        la = sm.log_accept_split(prop)
        if not math.isfinite(la):
            continue
        lam_before = sm.u_lam[prop.target]
        sm.apply_split(prop)
        lc = sm.log_accept_combine(prop.target)
        merged, _, _ = sm.merged(prop.target)
        assert merged == pytest.approx(lam_before, rel=1e-10)
        assert la + lc == pytest.approx(0.0, abs=1e-9)
        checked += 1


def test_split_never_targets_single_cells():
    _, _, s = _field_sample()
    sm = MixtureSampler(s, PriorConfig(), McmcConfig(), RandomSource(6))
    sm.u_lam, sm.u_Y, sm.u_S, sm.u_L = [], [], [], []
    sm._append_comp(1.0, [2])
    sm._append_comp(3.0, [1])
    assert sm.propose_split() is None
    sm._append_comp(5.0, [1, 4])
    for _ in range(50):
        assert sm.propose_split().target == 2


# ------------------------------------------------- debug-mode consistency


@pytest.mark.parametrize("priors", [
    PriorConfig(e=10.0),
    PriorConfig(lambda_prior="dependent"),
    PriorConfig(e=10.0, allocation="weights"),
    PriorConfig(lambda_prior="dependent", allocation="weights"),
])
@pytest.mark.parametrize("nets,N", [([[2], [0]], 4), ([[2]], 4), ([[3, 1], [0], [5]], 12)])
def test_incremental_terms_match_full_posterior(priors, nets, N):
    s = sample_from_counts(N, nets)
    cfg = McmcConfig(iterations=600, burn_in=0, thin=1, debug=True, cell_moves=2, component_moves=2,
                     allocation_moves=2)
    ch = MixtureSampler(s, priors, cfg, RandomSource(1)).run()
    assert len(ch) == 600


def test_incremental_terms_on_field_sample():
    _, _, s = _field_sample()
    cfg = McmcConfig(iterations=150, burn_in=0, thin=1, debug=True)
    MixtureSampler(s, PriorConfig(), cfg, RandomSource(2)).run()
    NetworkSampler(s, PriorConfig(), cfg, RandomSource(2)).run()


@pytest.mark.parametrize("nets,N", [([[2], [0]], 4), ([[3, 1], [0], [5]], 12)])
def test_network_incremental_terms(nets, N):
    s = sample_from_counts(N, nets)
    cfg = McmcConfig(iterations=600, burn_in=0, thin=1, debug=True, cell_moves=2, component_moves=2,
                     allocation_moves=2)
    NetworkSampler(s, PriorConfig(e=10.0), cfg, RandomSource(1)).run()


# ------------------------------------------------------ toy enumeration


@pytest.mark.parametrize("nets", [[[2], [0]], [[2]], [[1, 3]]])
def test_mixture_matches_enumeration(nets):
    s = sample_from_counts(4, nets)
    pri = PriorConfig(e=10.0)
    cap = s.T_s + 12
    oracle = toy_posterior(s, pri, cap)
    ch = fit_mixture(s, pri, McmcConfig(iterations=150_000, burn_in=1000, thin=1, seed=3, **LIGHT))
    assert total_variation(oracle, chain_histogram(ch, cap)) < 0.03


def test_mixture_matches_enumeration_weights_allocation():
    s = sample_from_counts(4, [[2]])
    pri = PriorConfig(e=10.0, allocation="weights")
    cap = s.T_s + 12
    oracle = toy_posterior(s, pri, cap)
    ch = fit_mixture(s, pri, McmcConfig(iterations=150_000, burn_in=1000, thin=1, seed=4, **LIGHT))
    assert total_variation(oracle, chain_histogram(ch, cap)) < 0.03


def _structure_marginal(post):
    out = {}
    for (xu, ru, _), p in post.items():
        out[(xu, ru)] = out.get((xu, ru), 0.0) + p
    return out


@pytest.mark.parametrize("nets", [[[2], [0]], [[2]]])
def test_network_model_structure_matches_enumeration(nets):
    # with rates and counts integrated out both models share the posterior of (X_unobs, R_unobs)
    s = sample_from_counts(4, nets)
    pri = PriorConfig(e=10.0)
    oracle = _structure_marginal(toy_posterior(s, pri, s.T_s + 12))
    ch = fit_network_model(s, pri, McmcConfig(iterations=100_000, burn_in=1000, thin=1, seed=5, **LIGHT))
    emp = {}
    for xu, ru in zip(ch.x_unobs, ch.r_unobs):
        emp[(int(xu), int(ru))] = emp.get((int(xu), int(ru)), 0) + 1 / len(ch)
    assert total_variation(oracle, emp) < 0.02


def test_models_agree_on_structure_for_field_sample():
    _, _, s = _field_sample(seed=8, fraction=0.1)
    cfg = McmcConfig(iterations=12000, burn_in=2000, thin=5, seed=1)
    a = fit_mixture(s, PriorConfig(), cfg)
    b = fit_network_model(s, PriorConfig(), cfg)
    sd = math.sqrt(a.x_unobs.var() + b.x_unobs.var() + 1.0)
    assert abs(a.x_unobs.mean() - b.x_unobs.mean()) < 1.5 * sd
