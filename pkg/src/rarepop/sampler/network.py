"""MCMC for the network baseline: one shared per-cell rate, network totals truncated Poisson.

The unobserved part of the population is an ordered list of networks, each a
size ``C_k`` and a count total ``Y_k``. Moves per sweep: ``alpha`` and
``beta`` by independence MH, ``nu`` by Gibbs, the shared rate by independence
MH from its conjugate gamma; Gibbs redraw of every unobserved total;
single-cell birth/death inside an unobserved network; birth/death of a
whole network; transfer of one cell between unobserved networks.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from typing import Optional

import numpy as np

from .. import dists
from ..design import AdaptiveSample
from ..errors import DomainError
from ..model import NetworkState, ObservedData, PriorConfig, network_log_posterior
from ..rng import RandomSource, as_generator
from .chain import Chain
from .config import McmcConfig
from .mixture import _log_expm1, _log_trunc_norm, _Uniforms

MOVES = ("alpha", "beta", "lambda", "cell_birth", "cell_death", "network_birth",
         "network_death", "transfer")


class NetworkSampler:
    """Mutable chain state plus the moves. Built by :func:`fit_network_model`."""

    def __init__(self, sample: AdaptiveSample, priors: PriorConfig, cfg: McmcConfig, rng):
        self.obs = obs = ObservedData.from_sample(sample)
        self.sample = sample
        # the network model always carries the gamma prior on its rate
        self.priors = priors = priors.resolve(sample)
        self.cfg = cfg
        self.gen = as_generator(rng)
        self.u = _Uniforms(self.gen)
        self.N, self.U = obs.N, obs.free
        self.Xs, self.Rs = obs.X_s, obs.R_s
        if self.Xs == 0 and self.U == 0:
            raise DomainError("sample covers every cell and holds no non-empty cell")
        self.m_by_size = sorted(Counter(obs.sizes).items())
        cum, const = 0, 0.0
        for z in obs.sizes:
            const += math.log(z) - math.log(self.N - cum)
            cum += z
        self.sel_const = const
        self.C_s = list(obs.C_s)
        self.Y_s = [int(s) for s in obs.S_s]
        self.d = priors.d
        mean_c = max(2.0, sum(self.C_s) / self.Rs) if self.Rs else 2.0
        self.size_rho = 1.0 - 1.0 / mean_c
        self.acc = {m: [0, 0] for m in MOVES}
        p = priors
        self._set_alpha(p.a_alpha / (p.a_alpha + p.b_alpha))
        self._set_beta(p.a_beta / (p.a_beta + p.b_beta))
        self.nu = p.e / p.f
        Y = sample.Y_s
        self.lam = 0.5 * (min(Y) + max(Y)) if Y else p.d * p.f / p.e
        X_u = min(self.U, max(1, int(round(self.N * self.alpha - self.Xs))))
        self.u_C, self.u_Y = [], []
        if X_u > 0:
            self.u_C.append(X_u)
            self.u_Y.append(dists.trunc_poisson_sample(self.lam * X_u, self.gen))

    # ------------------------------------------------------------------ state

    @property
    def X_u(self) -> int:
        return sum(self.u_C)

    @property
    def R_u(self) -> int:
        return len(self.u_C)

    @property
    def T(self) -> int:
        return self.obs.T_s + sum(self.u_Y)

    def to_state(self) -> NetworkState:
        return NetworkState(self.sample, self.alpha, self.beta, self.nu, self.lam,
                            tuple(self.u_C), tuple(self.u_Y))

    def full_log_posterior(self) -> float:
        return network_log_posterior(self.to_state(), self.priors)

    # ----------------------------------------------------------- log terms

    def net_term(self, C, Y) -> float:
        """Truncated-Poisson total of one network plus its multinomial ``1/(C-1)!``."""
        mu = self.lam * C
        return Y * math.log(mu) - math.lgamma(Y + 1) - _log_expm1(mu) - math.lgamma(C)

    def _xr_term(self, X, R) -> float:
        """Size-multinomial normalizer and both truncated binomials; cached until alpha or beta moves."""
        v = self._xr_cache.get((X, R))
        if v is None:
            lg = math.lgamma
            b, a, N = self.beta, self.alpha, self.N
            v = lg(X + 1) - lg(R + 1) + R * math.log(b) + (X - R) * math.log1p(-b)
            if X > R:
                v -= (X - R) * math.log(R)
            v -= _log_trunc_norm(X, b)
            v += lg(N + 1) - lg(X + 1) - lg(N - X + 1) + X * math.log(a) + (N - X) * math.log1p(-a)
            v -= self._ltn_alpha
            self._xr_cache[(X, R)] = v
        return v

    def _set_alpha(self, a):
        self.alpha = a
        self._ltn_alpha = _log_trunc_norm(self.N, a)
        self._xr_cache = {}

    def _set_beta(self, b):
        self.beta = b
        self._xr_cache = {}

    def global_term(self, X_u, R_u, n_single, sizes) -> float:
        X = self.Xs + X_u
        R = self.Rs + R_u
        if X == 0:
            return -math.inf
        lg = math.lgamma
        sel = self.sel_const
        for z, m in self.m_by_size:
            a = n_single + self.U - X_u if z == 1 else sizes.get(z, 0)
            sel += lg(m + a + 1) - lg(a + 1)
        v = sel + self._xr_term(X, R)
        return v

    def _accept(self, log_a: float) -> bool:
        return log_a >= 0.0 or self.u() < math.exp(log_a)

    def _sizes(self):
        sizes = defaultdict(int)
        for c in self.u_C:
            sizes[c] += 1
        return sizes, sizes.get(1, 0)

    # ------------------------------------------------------------ parameters

    def update_alpha(self):
        p = self.priors
        X = self.Xs + self.X_u
        prop = float(self.gen.beta(p.a_alpha + X, p.b_alpha + self.N - X))
        self.acc["alpha"][0] += 1
        if not (0.0 < prop < 1.0):
            return
        if self._accept(_log_trunc_norm(self.N, self.alpha) - _log_trunc_norm(self.N, prop)):
            self._set_alpha(prop)
            self.acc["alpha"][1] += 1

    def update_beta(self):
        p = self.priors
        X = self.Xs + self.X_u
        R = self.Rs + self.R_u
        prop = float(self.gen.beta(p.a_beta + R, p.b_beta + X - R))
        self.acc["beta"][0] += 1
        if not (0.0 < prop < 1.0):
            return
        if self._accept(_log_trunc_norm(X, self.beta) - _log_trunc_norm(X, prop)):
            self._set_beta(prop)
            self.acc["beta"][1] += 1

    def update_nu(self):
        p = self.priors
        self.nu = float(self.gen.standard_gamma(p.e + p.d)) / (p.f + self.lam)

    def update_lambda(self):
        C = self.C_s + self.u_C
        Y = self.Y_s + self.u_Y
        self.acc["lambda"][0] += 1
        prop = float(self.gen.standard_gamma(self.d + sum(Y))) / (self.nu + sum(C))
        if not prop > 0.0:
            return
        log_a = sum(dists.log1mexp(self.lam * c) - dists.log1mexp(prop * c) for c in C)
        if self._accept(log_a):
            self.lam = prop
            self.acc["lambda"][1] += 1

    # ---------------------------------------------------------- unobserved

    def update_totals(self):
        if self.u_C:
            mu = self.lam * np.asarray(self.u_C, dtype=float)
            self.u_Y = [int(dists.trunc_poisson_sample(m, self.gen)) for m in mu]

    def cell_move(self) -> Optional[float]:
        """Add or remove one cell of an unobserved network, keeping its total."""
        bp = self.cfg.birth_prob
        X_u, R_u = self.X_u, self.R_u
        sizes, n1 = self._sizes()
        K = R_u - n1
        g_old = self.global_term(X_u, R_u, n1, sizes)
        if self.u() < bp:
            self.acc["cell_birth"][0] += 1
            if R_u == 0 or X_u >= self.U:
                return None
            k = self.u.below(R_u)
            c, y = self.u_C[k], self.u_Y[k]
            new = sizes.copy()
            new[c] -= 1
            new[c + 1] += 1
            delta = (self.net_term(c + 1, y) - self.net_term(c, y)
                     + self.global_term(X_u + 1, R_u, n1 - (c == 1), new) - g_old)
            K_new = K + (c == 1)
            log_q = math.log(1.0 - bp) - math.log(K_new) - math.log(bp) + math.log(R_u)
            if self._accept(delta + log_q):
                self.u_C[k] += 1
                self.acc["cell_birth"][1] += 1
                return delta
            return None
        self.acc["cell_death"][0] += 1
        if K == 0:
            return None
        big = [k for k, c in enumerate(self.u_C) if c >= 2]
        k = big[self.u.below(K)]
        c, y = self.u_C[k], self.u_Y[k]
        new = sizes.copy()
        new[c] -= 1
        new[c - 1] += 1
        delta = (self.net_term(c - 1, y) - self.net_term(c, y)
                 + self.global_term(X_u - 1, R_u, n1 + (c == 2), new) - g_old)
        log_q = math.log(bp) - math.log(R_u) - math.log(1.0 - bp) + math.log(K)
        if self._accept(delta + log_q):
            self.u_C[k] -= 1
            self.acc["cell_death"][1] += 1
            return delta
        return None

    def _size_logq(self, c, cmax) -> float:
        rho = self.size_rho
        if rho == 0.0:
            return 0.0 if c == 1 else -math.inf
        return math.log1p(-rho) + (c - 1) * math.log(rho) - math.log1p(-rho ** cmax)

    def _draw_size(self, cmax) -> int:
        rho = self.size_rho
        if rho == 0.0:
            return 1
        v = self.u() * -math.expm1(cmax * math.log(rho))
        return min(cmax, 1 + int(math.log1p(-v) / math.log(rho)))

    def network_move(self) -> Optional[float]:
        """Birth or death of a whole unobserved network.

        A birth draws the size from a truncated geometric and the total from
        the truncated Poisson, and inserts the network at a uniform position.
        """
        bp = self.cfg.birth_prob
        X_u, R_u = self.X_u, self.R_u
        sizes, n1 = self._sizes()
        g_old = self.global_term(X_u, R_u, n1, sizes)
        if self.u() < bp:
            self.acc["network_birth"][0] += 1
            cmax = self.U - X_u
            if cmax <= 0:
                return None
            c = self._draw_size(cmax)
            y = int(dists.trunc_poisson_sample(self.lam * c, self.gen))
            at = self.u.below(R_u + 1)
            new = sizes.copy()
            new[c] += 1
            delta = self.net_term(c, y) + self.global_term(X_u + c, R_u + 1, n1 + (c == 1), new) - g_old
            log_q_rev = math.log(1.0 - bp) - math.log(R_u + 1)
            log_q_fwd = (math.log(bp) - math.log(R_u + 1) + self._size_logq(c, cmax)
                         + dists.trunc_poisson_logpmf(y, self.lam * c))
            if self._accept(delta + log_q_rev - log_q_fwd):
                self.u_C.insert(at, c)
                self.u_Y.insert(at, y)
                self.acc["network_birth"][1] += 1
                return delta
            return None
        self.acc["network_death"][0] += 1
        if R_u == 0:
            return None
        k = self.u.below(R_u)
        c, y = self.u_C[k], self.u_Y[k]
        new = sizes.copy()
        new[c] -= 1
        delta = -self.net_term(c, y) + self.global_term(X_u - c, R_u - 1, n1 - (c == 1), new) - g_old
        log_q_fwd = math.log(1.0 - bp) - math.log(R_u)
        log_q_rev = (math.log(bp) - math.log(R_u) + self._size_logq(c, self.U - X_u + c)
                     + dists.trunc_poisson_logpmf(y, self.lam * c))
        if self._accept(delta + log_q_rev - log_q_fwd):
            del self.u_C[k]
            del self.u_Y[k]
            self.acc["network_death"][1] += 1
            return delta
        return None

    def transfer_move(self) -> Optional[float]:
        """Move one cell between two unobserved networks, keeping both totals."""
        R_u = self.R_u
        if R_u < 2:
            return None
        big = [k for k, c in enumerate(self.u_C) if c >= 2]
        if not big:
            return None
        self.acc["transfer"][0] += 1
        i = big[self.u.below(len(big))]
        j = self.u.below(R_u - 1)
        j += j >= i
        ci, cj = self.u_C[i], self.u_C[j]
        sizes, n1 = self._sizes()
        new = sizes.copy()
        for c, dc in ((ci, -1), (ci - 1, 1), (cj, -1), (cj + 1, 1)):
            new[c] += dc
        n1_new = n1 + (ci == 2) - (cj == 1)
        yi, yj = self.u_Y[i], self.u_Y[j]
        delta = (self.net_term(ci - 1, yi) + self.net_term(cj + 1, yj)
                 - self.net_term(ci, yi) - self.net_term(cj, yj)
                 + self.global_term(self.X_u, R_u, n1_new, new)
                 - self.global_term(self.X_u, R_u, n1, sizes))
        K_new = len(big) - (ci == 2) + (cj == 1)
        if self._accept(delta + math.log(len(big)) - math.log(K_new)):
            self.u_C[i] -= 1
            self.u_C[j] += 1
            self.acc["transfer"][1] += 1
            return delta
        return None

    # ----------------------------------------------------------------- sweep

    def sweep(self):
        self._run(self.update_alpha)
        self._run(self.update_beta)
        self._run(self.update_nu)
        self._run(self.update_lambda)
        self._run(self.update_totals)
        for _ in range(self.cfg.cell_moves):
            self._run(self.cell_move)
        for _ in range(self.cfg.component_moves):
            self._run(self.network_move)
        for _ in range(self.cfg.allocation_moves):
            self._run(self.transfer_move)
        if self.cfg.debug:
            self.check_invariants()

    def _run(self, move):
        if not self.cfg.debug:
            move()
            return
        before = self.full_log_posterior()
        delta = move()
        if delta is not None:
            after = self.full_log_posterior()
            if not math.isclose(after - before, delta, rel_tol=1e-9, abs_tol=1e-7):
                raise AssertionError(f"{move.__name__}: incremental {delta} vs full {after - before}")

    def check_invariants(self):
        self.to_state().validate()
        if not math.isfinite(self.full_log_posterior()):
            raise AssertionError("state has zero posterior mass")

    def run(self) -> Chain:
        cfg = self.cfg
        n = cfg.n_draws
        iters = np.zeros(n, dtype=np.int64)
        al, be, nu = np.zeros(n), np.zeros(n), np.zeros(n)
        xu, ru, T = (np.zeros(n, dtype=np.int64) for _ in range(3))
        lam = np.zeros((n, 1))
        r = 0
        for it in range(cfg.iterations):
            self.sweep()
            if it >= cfg.burn_in and (it - cfg.burn_in + 1) % cfg.thin == 0 and r < n:
                iters[r] = it + 1
                al[r], be[r], nu[r] = self.alpha, self.beta, self.nu
                xu[r], ru[r], T[r] = self.X_u, self.R_u, self.T
                lam[r, 0] = self.lam
                r += 1
        meta = {"model": "network", "mcmc": cfg.to_dict(), "priors": self.priors.to_dict(),
                "R_s": self.Rs, "X_s": self.Xs, "T_s": self.obs.T_s, "N": self.N}
        return Chain(iters, al, be, nu, xu, ru, T, lam, [()] * n,
                     {k: tuple(v) for k, v in self.acc.items()}, meta)


def fit_network_model(sample: AdaptiveSample, priors: PriorConfig, cfg: McmcConfig, rng=None) -> Chain:
    """Run the network-model sampler; ``rng`` defaults to a stream seeded by ``cfg.seed``."""
    if rng is None:
        rng = RandomSource(cfg.seed)
    return NetworkSampler(sample, priors, cfg, rng).run()
