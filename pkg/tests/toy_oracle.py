"""Exact posterior of (X_unobs, R_unobs, T) on tiny universes, by enumeration.

Independent of the samplers: the unobserved structure (ordered sizes) is
enumerated, ``alpha`` and ``beta`` are integrated by quadrature, every rate
is integrated on a log grid against its Gamma(d, nu) prior, ``nu`` on a grid
against Gamma(e, f), and the distribution of the sum of ``c`` truncated
Poisson counts uses Stirling numbers of the second kind:
``P(S = s) = c! S2(s, c) / s! * lam^s / (e^lam - 1)^c``.
"""

import math

import numpy as np
from scipy import integrate, stats

from rarepop import dists
from rarepop.design import selection_log_prob
from rarepop.model import allocation_log_factor


def compositions(n, k):
    """Ordered tuples of ``k`` positive integers summing to ``n``."""
    if k == 0:
        if n == 0:
            yield ()
        return
    for first in range(1, n - k + 2):
        for rest in compositions(n - first, k - 1):
            yield (first,) + rest


def log_stirling2_table(smax, cmax):
    S = [[0] * (cmax + 1) for _ in range(smax + 1)]
    S[0][0] = 1
    for s in range(1, smax + 1):
        for c in range(1, min(s, cmax) + 1):
            S[s][c] = c * S[s - 1][c] + S[s - 1][c - 1]
    out = np.full((smax + 1, cmax + 1), -np.inf)
    for s in range(smax + 1):
        for c in range(cmax + 1):
            if S[s][c] > 0:
                out[s, c] = math.log(S[s][c])
    return out


def _beta_marginals(X, R, N, priors):
    fb = lambda b: math.exp(dists.trunc_binomial_logpmf(R, X, b)
                            + dists.beta_logpdf(b, priors.a_beta, priors.b_beta))
    fa = lambda a: math.exp(dists.trunc_binomial_logpmf(X, N, a)
                            + dists.beta_logpdf(a, priors.a_alpha, priors.b_alpha))
    return (math.log(integrate.quad(fb, 0, 1, limit=200)[0])
            + math.log(integrate.quad(fa, 0, 1, limit=200)[0]))


def toy_posterior(sample, priors, t_cap, n_nu=600, n_lam=4000):
    """Posterior mass of ``(X_unobs, R_unobs, min(T, t_cap))`` under the independent prior."""
    priors = priors.resolve(sample)
    N, U = sample.N, sample.free_cells
    d = priors.d
    obs = [(len(nw.counts), sum(nw.counts), sum(math.lgamma(y + 1) for y in nw.counts))
           for nw in sample.nonempty]
    T_s = sample.T_s
    smax = max(t_cap - T_s, U, 1)
    cmax = max([U] + [c for c, _, _ in obs] + [1])
    smax_all = max([smax] + [s for _, s, _ in obs])

    nu_prior = stats.gamma(priors.e, scale=1.0 / priors.f)
    nu = np.geomspace(nu_prior.ppf(1e-12) / 2, nu_prior.ppf(1 - 1e-12) * 2, n_nu)
    lam = np.geomspace(1e-9, 400.0, n_lam)
    loglam = np.log(lam)
    # trapezoid weights in log(lam); the integrand carries the extra factor lam
    wl = np.gradient(loglam)
    log_g = (d * np.log(nu)[:, None] - math.lgamma(d) + (d - 1) * loglam[None, :]
             - nu[:, None] * lam[None, :])
    G = np.exp(log_g) * (lam * wl)[None, :]
    log_em1 = np.where(lam > 1e-3, lam + np.log1p(-np.exp(-lam)), np.log(np.expm1(lam)))

    def lam_integral(s, c):
        """``int Gamma(lam; d, nu) lam^s (e^lam - 1)^-c dlam`` on the nu grid."""
        return G @ np.exp(s * loglam - c * log_em1)

    w_nu = nu_prior.pdf(nu) * np.gradient(nu)
    for c, s, L in obs:
        w_nu = w_nu * lam_integral(s, c) * math.exp(-L)

    ls2 = log_stirling2_table(smax_all, cmax)
    # P(S = s | c cells) on the nu grid
    pmf = {}
    for c in range(1, cmax + 1):
        rows = np.zeros((n_nu, smax + 1))
        for s in range(c, smax + 1):
            k = math.lgamma(c + 1) + ls2[s, c] - math.lgamma(s + 1)
            rows[:, s] = np.exp(k) * lam_integral(s, c)
        pmf[c] = rows
    base = float(w_nu.sum())

    post = {}
    C_s = list(sample.C_s)
    for X_u in range(U + 1):
        for R_u in (range(1, X_u + 1) if X_u else (0,)):
            X, R = sample.X_s + X_u, sample.R_s + R_u
            if X == 0:
                continue
            m = _beta_marginals(X, R, N, priors)
            for comp in compositions(X_u, R_u):
                C = C_s + list(comp)
                Z = tuple(C) + (1,) * (N - X)
                lw = (selection_log_prob(sample.sizes, Z) + dists.shifted_multinomial_logpmf(C, R) + m)
                # sum over the X_u! / prod C_j! allocation vectors sharing these sizes
                lw += (allocation_log_factor(C, comp, priors.allocation)
                       + math.lgamma(X_u + 1) - sum(math.lgamma(c + 1) for c in comp))
                w = math.exp(lw)
                conv = np.zeros((n_nu, smax + 1))
                conv[:, 0] = 1.0
                for c in comp:
                    new = np.zeros_like(conv)
                    for s in range(c, smax + 1):
                        new[:, s:] += conv[:, : smax + 1 - s] * pmf[c][:, s][:, None]
                    conv = new
                dist_t = (w_nu[:, None] * conv).sum(axis=0)
                total = w * base
                acc = 0.0
                for s in range(smax + 1):
                    T = T_s + s
                    if T >= t_cap:
                        break
                    p = w * dist_t[s]
                    if p > 0:
                        post[(X_u, R_u, T)] = post.get((X_u, R_u, T), 0.0) + p
                        acc += p
                key = (X_u, R_u, t_cap)
                post[key] = post.get(key, 0.0) + max(total - acc, 0.0)
    z = sum(post.values())
    return {k: v / z for k, v in post.items()}


def chain_histogram(chain, t_cap):
    h = {}
    for xu, ru, t in zip(chain.x_unobs, chain.r_unobs, chain.T):
        key = (int(xu), int(ru), int(min(t, t_cap)))
        h[key] = h.get(key, 0) + 1
    n = len(chain)
    return {k: v / n for k, v in h.items()}


def total_variation(p, q):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
