"""Reversible-jump sampler for the truncated-Poisson mixture.

The unobserved part of the population is kept as one list of cell counts per
unobserved component, components sorted by rate. The target is the complete
posterior over the ordered allocation vector; every move is symmetric in the
position of cells within that vector, so the chain on the lumped
representation is exact as long as births carry the ``1 / (X_unobs + 1)``
insertion probability and deaths pick cells uniformly.

Moves per sweep
---------------
1. ``alpha`` and ``beta`` by independence MH, ``nu`` by Gibbs, each rate by
   independence MH from its conjugate gamma.
2. Count Gibbs step; single-cell birth/death inside an existing component;
   birth/death of a whole component (needed to reach ``R_unobs = 0``).
3. Reallocation of one cell between unobserved components.
4. Split/combine of unobserved components, moment-matched on the
   truncated-Poisson mean.
"""

from __future__ import annotations

import bisect
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import dists
from ..design import AdaptiveSample
from ..errors import DomainError
from ..model import AugmentedState, MixtureParams, ObservedData, PriorConfig, log_posterior
from ..rng import RandomSource, as_generator
from .chain import Chain
from .config import McmcConfig

_LOG2 = math.log(2.0)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_BUF = 4096
MOVES = ("alpha", "beta", "lambda", "cell_birth", "cell_death", "component_birth",
         "component_death", "allocation", "split", "combine")


def _log_expm1(lam: float) -> float:
    """``log(exp(lam) - 1)``."""
    if lam > 0.6931471805599453:
        return lam + math.log1p(-math.exp(-lam))
    return math.log(math.expm1(lam))


def _log_trunc_norm(n: int, p: float) -> float:
    """``log(1 - (1 - p)^n)``."""
    return math.log(-math.expm1(n * math.log1p(-p)))


def _log_nontrivial_subsets(c: int) -> float:
    """``log(2^c - 2)`` for ``c >= 2``."""
    return c * _LOG2 + math.log1p(-2.0 ** (1 - c))


class _Uniforms:
    """Buffered U(0,1) stream; keeps per-draw overhead low in the sweep."""

    __slots__ = ("gen", "buf", "i")

    def __init__(self, gen):
        self.gen = gen
        self.buf = gen.random(_BUF).tolist()
        self.i = 0

    def __call__(self) -> float:
        if self.i == _BUF:
            self.buf = self.gen.random(_BUF).tolist()
            self.i = 0
        v = self.buf[self.i]
        self.i += 1
        return v

    def below(self, n: int) -> int:
        return min(int(self() * n), n - 1)


@dataclass(frozen=True)
class SplitProposal:
    """A frozen split of unobserved component ``target``.

    Cells at positions ``subset`` of the target's count list go to the lower
    component. ``u1 = c1 / (c1 + c2)`` is the cell split; ``u2`` is the
    rate-split variable, with ``lambda'_1 - 1 = u2 (lambda'_* - 1)``.
    """

    target: int
    u1: float
    u2: float
    c1: int
    c2: int
    subset: tuple
    log_p_alloc: float
    log_jacobian: float
    lam1: float
    lam2: float


class MixtureSampler:
    """Mutable chain state plus the moves. Built by :func:`fit_mixture`."""

    def __init__(self, sample: AdaptiveSample, priors: PriorConfig, cfg: McmcConfig, rng):
        self.obs = obs = ObservedData.from_sample(sample)
        self.sample = sample
        self.priors = priors = priors.resolve(sample) if priors.independent else priors
        self.cfg = cfg
        self.gen = as_generator(rng)
        self.u = _Uniforms(self.gen)
        self.N, self.U = obs.N, obs.free
        self.Xs, self.Rs = obs.X_s, obs.R_s
        if self.Xs == 0 and self.U == 0:
            raise DomainError("sample covers every cell and holds no non-empty cell")
        if not priors.independent and self.Rs == 0:
            raise DomainError("the dependent prior needs at least one observed non-empty network")
        # sampled-size multiplicities and the constant part of the selection term
        self.m_by_size = sorted(Counter(obs.sizes).items())
        cum, const = 0, 0.0
        for z in obs.sizes:
            const += math.log(z) - math.log(self.N - cum)
            cum += z
        self.sel_const = const
        self.C_s, self.S_s, self.L_s = list(obs.C_s), list(obs.S_s), list(obs.L_s)
        self.d = priors.d
        self.lgamma_d = math.lgamma(priors.d)
        self.indep = priors.independent
        self.exch = priors.allocation == "exchangeable"
        self.tau = priors.tau
        self.log_tau_c = math.log(priors.tau) + _HALF_LOG_2PI - _LOG2
        Y = sample.Y_s
        self.midrange = 0.5 * (min(Y) + max(Y)) if Y else priors.d * priors.f / priors.e
        # reference birth density for new components under the dependent prior
        self.ref_rate = priors.d / self.midrange
        # geometric birth sizes with the mean observed network size
        mean_c = max(2.0, sum(self.C_s) / self.Rs) if self.Rs else 2.0
        self.size_rho = 1.0 - 1.0 / mean_c
        self.acc = {m: [0, 0] for m in MOVES}
        self._init_state()

    # ------------------------------------------------------------------ state

    def _init_state(self):
        p = self.priors
        self._set_alpha(p.a_alpha / (p.a_alpha + p.b_alpha))
        self._set_beta(p.a_beta / (p.a_beta + p.b_beta))
        self.nu = p.e / p.f if self.indep else math.nan
        lam0 = self.midrange
        self.lam_s = [lam0] * self.Rs
        X_u = min(self.U, max(1, int(round(self.N * self.alpha - self.Xs))))
        self.u_lam, self.u_Y, self.u_S, self.u_L = [], [], [], []
        if X_u > 0:
            ys = dists.trunc_poisson_sample_n(lam0, X_u, self.gen).tolist()
            self._append_comp(lam0, ys)

    def _append_comp(self, lam, ys, at=None):
        at = len(self.u_lam) if at is None else at
        self.u_lam.insert(at, lam)
        self.u_Y.insert(at, ys)
        self.u_S.insert(at, sum(ys))
        self.u_L.insert(at, sum(math.lgamma(y + 1) for y in ys))

    def _drop_comp(self, k):
        for lst in (self.u_lam, self.u_Y, self.u_S, self.u_L):
            del lst[k]

    @property
    def X_u(self) -> int:
        return sum(len(ys) for ys in self.u_Y)

    @property
    def R_u(self) -> int:
        return len(self.u_lam)

    @property
    def T(self) -> int:
        return self.obs.T_s + sum(self.u_S)

    def n_single(self) -> int:
        return sum(1 for ys in self.u_Y if len(ys) == 1)

    def size_counts(self) -> defaultdict:
        """Number of unobserved components of each size."""
        sizes = defaultdict(int)
        for ys in self.u_Y:
            sizes[len(ys)] += 1
        return sizes

    def eligible(self) -> int:
        """Unobserved cells whose removal leaves their component non-empty."""
        return sum(len(ys) for ys in self.u_Y if len(ys) >= 2)

    def to_state(self) -> AugmentedState:
        eps = tuple(k for k, ys in enumerate(self.u_Y) for _ in ys)
        Y = tuple(y for ys in self.u_Y for y in ys)
        params = MixtureParams(self.alpha, self.beta, self.nu if self.indep else 1.0,
                               tuple(self.lam_s), tuple(self.u_lam))
        return AugmentedState(self.sample, params, len(Y), self.R_u, eps, Y)

    def full_log_posterior(self) -> float:
        return log_posterior(self.to_state(), self.priors)

    # ----------------------------------------------------------- log terms

    def comp_term(self, C, S, L, lam) -> float:
        """Per-component log target: counts, allocation and size factors, independent prior."""
        v = S * math.log(lam) - C * _log_expm1(lam) - L - math.lgamma(C)
        v += math.lgamma(C + 1) if self.exch else C * math.log(C)
        if self.indep:
            v += (self.d - 1.0) * math.log(lam) - self.nu * lam + self.d * math.log(self.nu) - self.lgamma_d
        return v

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
        """Terms depending only on ``(X, R)`` and the multiset of unobserved sizes."""
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
        v -= lg(X_u + 1) if self.exch else X * math.log(X)
        return v + lg(R_u + 1)

    def chain_term(self, lams) -> float:
        """Dependent prior: half-normal increments over all rates sorted together."""
        v = sorted(lams)
        tot = 0.0
        inv = 1.0 / self.tau
        for k in range(1, len(v)):
            g = (v[k] - v[k - 1]) * inv
            tot -= 0.5 * g * g + self.log_tau_c
        return tot

    def _cur_global(self) -> float:
        return self.global_term(self.X_u, self.R_u, self.n_single(), self.size_counts())

    def _ztp(self, lam: float) -> int:
        if lam > 30.0:
            return dists._ztp_draw(lam, self.gen)
        target = self.u() * -math.expm1(-lam)
        pk = lam * math.exp(-lam)
        cum = pk
        k = 1
        kmax = int(lam + 40.0 * math.sqrt(lam) + 60.0)
        while cum < target and k < kmax:
            k += 1
            pk *= lam / k
            cum += pk
        return k

    def _ztp_logpmf(self, y, lam) -> float:
        return y * math.log(lam) - math.lgamma(y + 1) - _log_expm1(lam)

    def _accept(self, log_a: float) -> bool:
        return log_a >= 0.0 or self.u() < math.exp(log_a)

    def _pick_eligible(self, E):
        """Uniform cell among components with at least two cells: (component, position)."""
        r = self.u.below(E)
        for k, ys in enumerate(self.u_Y):
            c = len(ys)
            if c >= 2:
                if r < c:
                    return k, r
                r -= c
        raise AssertionError("eligible count out of sync")

    # --------------------------------------------------------------- step 1

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
        if not self.indep:
            return
        p = self.priors
        lams = self.lam_s + self.u_lam
        shape = p.e + len(lams) * p.d
        rate = p.f + sum(lams)
        self.nu = float(self.gen.standard_gamma(shape)) / rate

    def _lambda_step(self, lam, C, S, lo, hi, replace):
        """One independence-MH step for a rate; ``replace(new)`` installs it."""
        self.acc["lambda"][0] += 1
        if self.indep:
            prop = float(self.gen.standard_gamma(self.d + S)) / (self.nu + C)
        else:
            prop = float(self.gen.standard_gamma(1.0 + S)) / C
        if not (lo < prop < hi) or prop <= 0.0:
            return
        log_a = C * (dists.log1mexp(lam) - dists.log1mexp(prop))
        if not self.indep:
            old = self.chain_term(self.lam_s + self.u_lam)
            replace(prop)
            log_a += self.chain_term(self.lam_s + self.u_lam) - old
            replace(lam)
        if self._accept(log_a):
            replace(prop)
            self.acc["lambda"][1] += 1

    def update_lambda(self):
        for j in range(self.Rs):
            def rep(v, j=j):
                self.lam_s[j] = v
            self._lambda_step(self.lam_s[j], self.C_s[j], self.S_s[j], 0.0, math.inf, rep)
        R_u = self.R_u
        for k in range(R_u):
            lo = self.u_lam[k - 1] if k > 0 else 0.0
            hi = self.u_lam[k + 1] if k + 1 < R_u else math.inf

            def rep(v, k=k):
                self.u_lam[k] = v
            self._lambda_step(self.u_lam[k], len(self.u_Y[k]), self.u_S[k], lo, hi, rep)

    # --------------------------------------------------------------- step 2

    def update_counts(self):
        lg = math.lgamma
        for k, lam in enumerate(self.u_lam):
            c = len(self.u_Y[k])
            if c >= 8:
                ys = dists.trunc_poisson_sample_n(lam, c, self.gen).tolist()
            else:
                ys = [self._ztp(lam) for _ in range(c)]
            self.u_Y[k] = ys
            self.u_S[k] = sum(ys)
            self.u_L[k] = sum(lg(y + 1) for y in ys)

    def cell_move(self) -> Optional[float]:
        """Birth or death of one cell inside an existing unobserved component."""
        bp = self.cfg.birth_prob
        X_u, R_u = self.X_u, self.R_u
        sizes = self.size_counts()
        n1 = sizes.get(1, 0)
        E = self.eligible()
        g_old = self.global_term(X_u, R_u, n1, sizes)
        if self.u() < bp:
            self.acc["cell_birth"][0] += 1
            if R_u == 0 or X_u >= self.U:
                return None
            k = self.u.below(R_u)
            lam, c = self.u_lam[k], len(self.u_Y[k])
            y = self._ztp(lam)
            ly = math.lgamma(y + 1)
            S, L = self.u_S[k], self.u_L[k]
            new_sizes = sizes.copy()
            new_sizes[c] -= 1
            new_sizes[c + 1] += 1
            n1_new = n1 - (c == 1)
            E_new = E + (2 if c == 1 else 1)
            delta = (self.comp_term(c + 1, S + y, L + ly, lam) - self.comp_term(c, S, L, lam)
                     + self.global_term(X_u + 1, R_u, n1_new, new_sizes) - g_old)
            log_q_rev = math.log(1.0 - bp) - math.log(E_new)
            log_q_fwd = math.log(bp) - math.log(R_u) + self._ztp_logpmf(y, lam) - math.log(X_u + 1)
            if self._accept(delta + log_q_rev - log_q_fwd):
                self.u_Y[k].append(y)
                self.u_S[k] = S + y
                self.u_L[k] = L + ly
                self.acc["cell_birth"][1] += 1
                return delta
            return None
        self.acc["cell_death"][0] += 1
        if E == 0:
            return None
        k, pos = self._pick_eligible(E)
        lam, ys = self.u_lam[k], self.u_Y[k]
        c, y = len(ys), ys[pos]
        ly = math.lgamma(y + 1)
        S, L = self.u_S[k], self.u_L[k]
        new_sizes = sizes.copy()
        new_sizes[c] -= 1
        new_sizes[c - 1] += 1
        n1_new = n1 + (c == 2)
        delta = (self.comp_term(c - 1, S - y, L - ly, lam) - self.comp_term(c, S, L, lam)
                 + self.global_term(X_u - 1, R_u, n1_new, new_sizes) - g_old)
        log_q_fwd = math.log(1.0 - bp) - math.log(E)
        log_q_rev = math.log(bp) - math.log(R_u) + self._ztp_logpmf(y, lam) - math.log(X_u)
        if self._accept(delta + log_q_rev - log_q_fwd):
            ys[pos] = ys[-1]
            ys.pop()
            self.u_S[k] = S - y
            self.u_L[k] = L - ly
            self.acc["cell_death"][1] += 1
            return delta
        return None

    def _birth_logq(self, lam) -> float:
        rate = self.nu if self.indep else self.ref_rate
        d = self.d
        return d * math.log(rate) - self.lgamma_d + (d - 1.0) * math.log(lam) - rate * lam

    def _size_logq(self, c, cmax) -> float:
        """Log pmf of the birth size: geometric on ``1..cmax``."""
        rho = self.size_rho
        if rho == 0.0:
            return 0.0 if c == 1 else -math.inf
        return math.log1p(-rho) + (c - 1) * math.log(rho) - math.log1p(-rho ** cmax)

    def _draw_size(self, cmax) -> int:
        rho = self.size_rho
        if rho == 0.0:
            return 1
        # inverse cdf of the truncated geometric
        v = self.u() * -math.expm1(cmax * math.log(rho))
        return min(cmax, 1 + int(math.log1p(-v) / math.log(rho)))

    def _new_comp_logq(self, c, S, L, lam, X_u_after, cmax) -> float:
        """Proposal density of a new component; ``X_u_after`` includes its cells."""
        return (self._size_logq(c, cmax) + self._birth_logq(lam)
                + S * math.log(lam) - L - c * _log_expm1(lam)
                - dists.log_binom_coef(X_u_after, c))

    def component_move(self) -> Optional[float]:
        """Birth or death of a whole unobserved component.

        A birth draws the size from a truncated geometric, the rate from the
        reference gamma and every count from the truncated Poisson; its cells
        are interleaved uniformly into the allocation vector.
        """
        bp = self.cfg.birth_prob
        X_u, R_u = self.X_u, self.R_u
        sizes = self.size_counts()
        n1 = sizes.get(1, 0)
        g_old = self.global_term(X_u, R_u, n1, sizes)
        if self.u() < bp:
            self.acc["component_birth"][0] += 1
            cmax = self.U - X_u
            if cmax <= 0:
                return None
            rate = self.nu if self.indep else self.ref_rate
            lam = float(self.gen.standard_gamma(self.d)) / rate
            if not lam > 0.0:
                return None
            c = self._draw_size(cmax)
            ys = [self._ztp(lam) for _ in range(c)]
            S = sum(ys)
            L = sum(math.lgamma(y + 1) for y in ys)
            at = bisect.bisect_left(self.u_lam, lam)
            new_sizes = sizes.copy()
            new_sizes[c] += 1
            delta = (self.comp_term(c, S, L, lam)
                     + self.global_term(X_u + c, R_u + 1, n1 + (c == 1), new_sizes) - g_old)
            if not self.indep:
                lams = self.lam_s + self.u_lam
                delta += self.chain_term(lams + [lam]) - self.chain_term(lams)
            log_q_rev = math.log(1.0 - bp) - math.log(R_u + 1)
            log_q_fwd = math.log(bp) + self._new_comp_logq(c, S, L, lam, X_u + c, cmax)
            if self._accept(delta + log_q_rev - log_q_fwd):
                self._append_comp(lam, ys, at)
                self.acc["component_birth"][1] += 1
                return delta
            return None
        self.acc["component_death"][0] += 1
        if R_u == 0:
            return None
        k = self.u.below(R_u)
        lam, c = self.u_lam[k], len(self.u_Y[k])
        S, L = self.u_S[k], self.u_L[k]
        new_sizes = sizes.copy()
        new_sizes[c] -= 1
        delta = (-self.comp_term(c, S, L, lam)
                 + self.global_term(X_u - c, R_u - 1, n1 - (c == 1), new_sizes) - g_old)
        if not self.indep:
            lams = self.lam_s + self.u_lam
            rest = self.lam_s + self.u_lam[:k] + self.u_lam[k + 1:]
            delta += self.chain_term(rest) - self.chain_term(lams)
        log_q_fwd = math.log(1.0 - bp) - math.log(R_u)
        log_q_rev = math.log(bp) + self._new_comp_logq(c, S, L, lam, X_u, self.U - X_u + c)
        if self._accept(delta + log_q_rev - log_q_fwd):
            self._drop_comp(k)
            self.acc["component_death"][1] += 1
            return delta
        return None

    # --------------------------------------------------------------- step 3

    def allocation_move(self) -> Optional[float]:
        R_u = self.R_u
        if R_u < 2:
            return None
        E = self.eligible()
        if E == 0:
            return None
        self.acc["allocation"][0] += 1
        i, pos = self._pick_eligible(E)
        j = self.u.below(R_u - 1)
        j += j >= i
        yi, yj = self.u_Y[i], self.u_Y[j]
        ci, cj = len(yi), len(yj)
        y = yi[pos]
        ly = math.lgamma(y + 1)
        li, lj = self.u_lam[i], self.u_lam[j]
        sizes = self.size_counts()
        n1 = sizes.get(1, 0)
        new_sizes = sizes.copy()
        for c, dc in ((ci, -1), (ci - 1, 1), (cj, -1), (cj + 1, 1)):
            new_sizes[c] += dc
        n1_new = n1 + (ci == 2) - (cj == 1)
        X_u = self.X_u
        delta = (self.comp_term(ci - 1, self.u_S[i] - y, self.u_L[i] - ly, li)
                 + self.comp_term(cj + 1, self.u_S[j] + y, self.u_L[j] + ly, lj)
                 - self.comp_term(ci, self.u_S[i], self.u_L[i], li)
                 - self.comp_term(cj, self.u_S[j], self.u_L[j], lj)
                 + self.global_term(X_u, R_u, n1_new, new_sizes)
                 - self.global_term(X_u, R_u, n1, sizes))
        E_new = E - (2 if ci == 2 else 1) + (2 if cj == 1 else 1)
        if self._accept(delta + math.log(E) - math.log(E_new)):
            yi[pos] = yi[-1]
            yi.pop()
            yj.append(y)
            self.u_S[i] -= y
            self.u_L[i] -= ly
            self.u_S[j] += y
            self.u_L[j] += ly
            self.acc["allocation"][1] += 1
            return delta
        return None

    # --------------------------------------------------------------- step 4

    def _split_prob(self, k) -> float:
        """Probability of choosing split when ``k`` unobserved components exist."""
        return 1.0 if k == 1 else self.cfg.split_prob

    def propose_split(self) -> Optional[SplitProposal]:
        cands = [k for k, ys in enumerate(self.u_Y) if len(ys) >= 2]
        if not cands:
            return None
        j = cands[self.u.below(len(cands))]
        C = len(self.u_Y[j])
        while True:
            subset = tuple(i for i in range(C) if self.u() < 0.5)
            if 0 < len(subset) < C:
                break
        u2 = self.u()
        if u2 <= 0.0:
            return None
        return self.build_split(j, subset, u2)

    def build_split(self, j, subset, u2) -> Optional[SplitProposal]:
        """Deterministic part of a split; ``None`` when the new rates are not representable."""
        C = len(self.u_Y[j])
        c1 = len(subset)
        c2 = C - c1
        lam = self.u_lam[j]
        mu = dists.trunc_poisson_excess(lam)
        mu1 = u2 * mu
        mu2 = mu * (C - c1 * u2) / c2
        try:
            lam1 = dists.inv_trunc_poisson_excess(mu1)
            lam2 = dists.inv_trunc_poisson_excess(mu2)
        except DomainError:
            return None
        g = dists.trunc_poisson_mean_deriv
        log_j = math.log(mu * C / c2) + math.log(g(lam)) - math.log(g(lam1)) - math.log(g(lam2))
        return SplitProposal(j, c1 / C, u2, c1, c2, tuple(subset), -_log_nontrivial_subsets(C),
                             log_j, lam1, lam2)

    def _split_parts(self, prop: SplitProposal):
        ys = self.u_Y[prop.target]
        inside = set(prop.subset)
        y1 = [ys[i] for i in prop.subset]
        y2 = [y for i, y in enumerate(ys) if i not in inside]
        return y1, y2

    def log_accept_split(self, prop: SplitProposal) -> float:
        """Log acceptance ratio of a split; ``-inf`` outside the ordering window."""
        j, k = prop.target, self.R_u
        lo = self.u_lam[j - 1] if j > 0 else 0.0
        hi = self.u_lam[j + 1] if j + 1 < k else math.inf
        if not (lo < prop.lam1 < prop.lam2 < hi):
            return -math.inf
        y1, y2 = self._split_parts(prop)
        lg = math.lgamma
        S1, S2 = sum(y1), sum(y2)
        L1 = sum(lg(y + 1) for y in y1)
        L2 = sum(lg(y + 1) for y in y2)
        C = prop.c1 + prop.c2
        sizes = self.size_counts()
        n1 = sizes.get(1, 0)
        new_sizes = sizes.copy()
        new_sizes[C] -= 1
        new_sizes[prop.c1] += 1
        new_sizes[prop.c2] += 1
        n1_new = n1 + (prop.c1 == 1) + (prop.c2 == 1)
        X_u = self.X_u
        delta = (self.comp_term(prop.c1, S1, L1, prop.lam1) + self.comp_term(prop.c2, S2, L2, prop.lam2)
                 - self.comp_term(C, self.u_S[j], self.u_L[j], self.u_lam[j])
                 + self.global_term(X_u, k + 1, n1_new, new_sizes)
                 - self.global_term(X_u, k, n1, sizes))
        if not self.indep:
            rest = self.lam_s + self.u_lam[:j] + self.u_lam[j + 1:]
            delta += self.chain_term(rest + [prop.lam1, prop.lam2]) - self.chain_term(self.lam_s + self.u_lam)
        K = sum(1 for ys in self.u_Y if len(ys) >= 2)
        log_move = (math.log(1.0 - self.cfg.split_prob) - math.log(k)
                    - math.log(self._split_prob(k)) + math.log(K))
        self._last_delta = delta
        return delta + log_move - prop.log_p_alloc + prop.log_jacobian

    def apply_split(self, prop: SplitProposal):
        y1, y2 = self._split_parts(prop)
        j = prop.target
        self._drop_comp(j)
        self._append_comp(prop.lam2, y2, j)
        self._append_comp(prop.lam1, y1, j)

    def merged(self, i):
        """Rate and jacobian pieces of combining components ``i`` and ``i + 1``."""
        c1, c2 = len(self.u_Y[i]), len(self.u_Y[i + 1])
        l1, l2 = self.u_lam[i], self.u_lam[i + 1]
        mu1, mu2 = dists.trunc_poisson_excess(l1), dists.trunc_poisson_excess(l2)
        C = c1 + c2
        mu = (c1 * mu1 + c2 * mu2) / C
        lam = dists.inv_trunc_poisson_excess(mu)
        g = dists.trunc_poisson_mean_deriv
        log_j = math.log(mu * C / c2) + math.log(g(lam)) - math.log(g(l1)) - math.log(g(l2))
        return lam, log_j, mu1 / mu

    def log_accept_combine(self, i) -> float:
        k = self.R_u
        c1, c2 = len(self.u_Y[i]), len(self.u_Y[i + 1])
        C = c1 + c2
        lam, log_j, _ = self.merged(i)
        sizes = self.size_counts()
        n1 = sizes.get(1, 0)
        new_sizes = sizes.copy()
        new_sizes[c1] -= 1
        new_sizes[c2] -= 1
        new_sizes[C] += 1
        n1_new = n1 - (c1 == 1) - (c2 == 1)
        X_u = self.X_u
        S = self.u_S[i] + self.u_S[i + 1]
        L = self.u_L[i] + self.u_L[i + 1]
        delta = (self.comp_term(C, S, L, lam)
                 - self.comp_term(c1, self.u_S[i], self.u_L[i], self.u_lam[i])
                 - self.comp_term(c2, self.u_S[i + 1], self.u_L[i + 1], self.u_lam[i + 1])
                 + self.global_term(X_u, k - 1, n1_new, new_sizes)
                 - self.global_term(X_u, k, n1, sizes))
        if not self.indep:
            rest = self.lam_s + self.u_lam[:i] + self.u_lam[i + 2:]
            delta += self.chain_term(rest + [lam]) - self.chain_term(self.lam_s + self.u_lam)
        # components with at least two cells after the merge
        K_new = sum(1 for ys in self.u_Y if len(ys) >= 2) - (c1 >= 2) - (c2 >= 2) + 1
        log_move_rev = (math.log(1.0 - self.cfg.split_prob) - math.log(k - 1)
                        - math.log(self._split_prob(k - 1)) + math.log(K_new))
        self._last_delta = delta
        return delta - log_move_rev - _log_nontrivial_subsets(C) - log_j

    def apply_combine(self, i):
        lam, _, _ = self.merged(i)
        ys = self.u_Y[i] + self.u_Y[i + 1]
        self._drop_comp(i + 1)
        self._drop_comp(i)
        self._append_comp(lam, ys, i)

    def split_combine(self) -> Optional[float]:
        k = self.R_u
        if k == 0:
            return None
        if self.u() < self._split_prob(k):
            self.acc["split"][0] += 1
            prop = self.propose_split()
            if prop is None:
                return None
            if self._accept(self.log_accept_split(prop)):
                self.apply_split(prop)
                self.acc["split"][1] += 1
                return self._last_delta
            return None
        self.acc["combine"][0] += 1
        i = self.u.below(k - 1)
        if self._accept(self.log_accept_combine(i)):
            self.apply_combine(i)
            self.acc["combine"][1] += 1
            return self._last_delta
        return None

    # ----------------------------------------------------------------- sweep

    def sweep(self):
        self.update_alpha()
        self.update_beta()
        self.update_nu()
        self.update_lambda()
        self.update_counts()
        for _ in range(self.cfg.cell_moves):
            self._run(self.cell_move)
        for _ in range(self.cfg.component_moves):
            self._run(self.component_move)
        for _ in range(self.cfg.allocation_moves):
            self._run(self.allocation_move)
        self._run(self.split_combine)
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
        st = self.to_state()
        st.validate()
        if any(self.u_lam[k] >= self.u_lam[k + 1] for k in range(self.R_u - 1)):
            raise AssertionError("unobserved rates out of order")
        for k, ys in enumerate(self.u_Y):
            if self.u_S[k] != sum(ys) or not math.isclose(self.u_L[k], sum(math.lgamma(y + 1) for y in ys),
                                                          rel_tol=1e-12, abs_tol=1e-9):
                raise AssertionError("cached component sums out of sync")
        if self.T < self.Xs + self.X_u:
            raise AssertionError("T below the number of non-empty cells")
        if not math.isfinite(self.full_log_posterior()):
            raise AssertionError("state has zero posterior mass")

    def run(self) -> Chain:
        cfg = self.cfg
        n = cfg.n_draws
        iters = np.zeros(n, dtype=np.int64)
        al, be, nu = np.zeros(n), np.zeros(n), np.zeros(n)
        xu, ru, T = (np.zeros(n, dtype=np.int64) for _ in range(3))
        ls = np.zeros((n, self.Rs))
        lu = []
        r = 0
        for it in range(cfg.iterations):
            self.sweep()
            if it >= cfg.burn_in and (it - cfg.burn_in + 1) % cfg.thin == 0 and r < n:
                iters[r] = it + 1
                al[r], be[r], nu[r] = self.alpha, self.beta, self.nu
                xu[r], ru[r], T[r] = self.X_u, self.R_u, self.T
                ls[r] = self.lam_s
                lu.append(tuple(self.u_lam))
                r += 1
        meta = {"model": "mixture", "mcmc": cfg.to_dict(), "priors": self.priors.to_dict(),
                "R_s": self.Rs, "X_s": self.Xs, "T_s": self.obs.T_s, "N": self.N}
        return Chain(iters, al, be, nu, xu, ru, T, ls, lu,
                     {k: tuple(v) for k, v in self.acc.items()}, meta)


def fit_mixture(sample: AdaptiveSample, priors: PriorConfig, cfg: McmcConfig, rng=None) -> Chain:
    """Run the mixture sampler; ``rng`` defaults to a stream seeded by ``cfg.seed``."""
    if rng is None:
        rng = RandomSource(cfg.seed)
    return MixtureSampler(sample, priors, cfg, rng).run()
