"""Log-density bookkeeping for the mixture model and the network baseline.

The complete-data likelihood is the product of six factors:

* ``selection``: probability of the ordered sequence of sampled network sizes
  under size-biased draws without replacement;
* ``counts``: zero-truncated Poisson pmf of every non-empty cell count given
  its component rate;
* ``allocation``: probability of the allocation vector given the component
  sizes. Under ``allocation="weights"`` every cell picks component ``j`` with
  weight ``C_j / X``, giving ``prod_j C_j^C_j / X^X``; under the default
  ``allocation="exchangeable"`` every arrangement of the unobserved cells is
  equally likely, giving ``prod_j C_j! / X_unobs!`` over unobserved components;
* ``sizes``: shifted multinomial pmf of the network sizes ``C`` given ``(X, R)``;
* ``networks``: truncated binomial pmf of ``R`` given ``(X, beta)``;
* ``cells``: truncated binomial pmf of ``X`` given ``(N, alpha)``.

The unobserved part of the population is represented by an allocation vector
``eps_unobs`` (component label per unobserved non-empty cell, labels
``0 .. R_unobs - 1``) and the matching count vector ``Y_unobs``. Unobserved
components are labeled in increasing order of their rates.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import dists
from .design import AdaptiveSample, selection_log_prob
from .dists import BetaParam, GammaParam
from .errors import ConfigError, DomainError

LAMBDA_PRIORS = ("independent", "dependent")
ALLOCATIONS = ("exchangeable", "weights")


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters.

    ``f = None`` means the rate of the Gamma(e, f) prior on ``nu`` is elicited
    from the observed counts (see :func:`elicit_independent_hyperparams`).
    ``tau`` is the standard deviation of the truncated-normal increments of
    the dependent prior. ``allocation`` selects the allocation factor of the
    likelihood (see the module docstring).
    """

    a_alpha: float = 3.0
    b_alpha: float = 1.0
    a_beta: float = 15.0
    b_beta: float = 9.0
    lambda_prior: str = "independent"
    d: float = 1.1
    e: float = 2.0
    f: Optional[float] = None
    tau: float = 5.0
    allocation: str = "exchangeable"

    def __post_init__(self):
        if self.lambda_prior not in LAMBDA_PRIORS:
            raise ConfigError(f"lambda_prior must be one of {LAMBDA_PRIORS}, got {self.lambda_prior!r}")
        if self.allocation not in ALLOCATIONS:
            raise ConfigError(f"allocation must be one of {ALLOCATIONS}, got {self.allocation!r}")
        for name in ("a_alpha", "b_alpha", "a_beta", "b_beta", "d", "e", "tau"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ConfigError(f"prior field {name!r} must be a positive number, got {v!r}")
        if self.f is not None and not self.f > 0:
            raise ConfigError(f"prior field 'f' must be positive, got {self.f!r}")

    @property
    def alpha_prior(self) -> BetaParam:
        return BetaParam(self.a_alpha, self.b_alpha)

    @property
    def beta_prior(self) -> BetaParam:
        return BetaParam(self.a_beta, self.b_beta)

    @property
    def independent(self) -> bool:
        return self.lambda_prior == "independent"

    def resolve(self, sample: AdaptiveSample) -> "PriorConfig":
        """Fill in an elicited ``f`` when it was left unspecified."""
        if self.f is not None:
            return self
        Y = sample.Y_s
        if not Y:
            raise DomainError("cannot elicit the nu prior without observed non-empty cells; set f explicitly")
        return replace(self, f=elicit_independent_hyperparams(Y, self.d, self.e).rate)

    def nu_prior(self) -> GammaParam:
        if self.f is None:
            raise DomainError("nu prior rate is unresolved; call resolve(sample) first")
        return GammaParam(self.e, self.f)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PriorConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown prior fields: {sorted(unknown)}")
        return cls(**d)


def elicit_independent_hyperparams(Y_s: Sequence[int], d: float, e: float = 2.0) -> GammaParam:
    """Gamma(e, f) prior for ``nu`` centering ``d / (e / f)`` on the midrange of ``Y_s``."""
    Y_s = list(Y_s)
    if not Y_s:
        raise DomainError("elicitation needs at least one observed count")
    if not (d > 0 and e > 0):
        raise DomainError("d and e must be positive")
    midrange = 0.5 * (min(Y_s) + max(Y_s))
    if midrange <= 0:
        raise DomainError("observed counts must be positive")
    return GammaParam(e, e * midrange / d)


@dataclass(frozen=True)
class ObservedData:
    """Summaries of a sample used by the likelihood and the samplers."""

    N: int
    sizes: tuple          # ordered sizes of all sampled networks, empties included
    C_s: tuple            # sizes of sampled non-empty networks
    S_s: tuple            # count totals of sampled non-empty networks
    L_s: tuple            # sum of log(y!) per sampled non-empty network
    counts_s: tuple       # per-cell counts per sampled non-empty network
    free: int             # cells outside all sampled networks

    @classmethod
    def from_sample(cls, sample: AdaptiveSample) -> "ObservedData":
        nets = sample.nonempty
        return cls(
            N=sample.N,
            sizes=sample.sizes,
            C_s=tuple(nw.size for nw in nets),
            S_s=tuple(sum(nw.counts) for nw in nets),
            L_s=tuple(sum(math.lgamma(y + 1) for y in nw.counts) for nw in nets),
            counts_s=tuple(tuple(nw.counts) for nw in nets),
            free=sample.free_cells,
        )

    @property
    def X_s(self) -> int:
        return sum(self.C_s)

    @property
    def R_s(self) -> int:
        return len(self.C_s)

    @property
    def T_s(self) -> int:
        return sum(self.S_s)


@dataclass(frozen=True)
class MixtureParams:
    alpha: float
    beta: float
    nu: float
    lambda_s: tuple
    lambda_unobs: tuple

    def __post_init__(self):
        object.__setattr__(self, "lambda_s", tuple(float(x) for x in self.lambda_s))
        object.__setattr__(self, "lambda_unobs", tuple(float(x) for x in self.lambda_unobs))
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise DomainError(f"{name} must lie in (0, 1), got {v}")
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")
        if any(not x > 0 for x in self.lambda_s + self.lambda_unobs):
            raise DomainError("component rates must be positive")

    @property
    def lambdas(self) -> tuple:
        return self.lambda_s + self.lambda_unobs


@dataclass(frozen=True)
class AugmentedState:
    sample: AdaptiveSample
    params: MixtureParams
    X_unobs: int
    R_unobs: int
    eps_unobs: tuple
    Y_unobs: tuple

    def __post_init__(self):
        object.__setattr__(self, "eps_unobs", tuple(int(e) for e in self.eps_unobs))
        object.__setattr__(self, "Y_unobs", tuple(int(y) for y in self.Y_unobs))

    @property
    def C_unobs(self) -> tuple:
        cnt = Counter(self.eps_unobs)
        return tuple(cnt.get(j, 0) for j in range(self.R_unobs))

    @property
    def T(self) -> int:
        return self.sample.T_s + sum(self.Y_unobs)

    def validate(self) -> None:
        s = self.sample
        if self.X_unobs < 0 or self.R_unobs < 0:
            raise DomainError("X_unobs and R_unobs must be non-negative")
        if self.X_unobs > s.free_cells:
            raise DomainError(
                f"X_unobs = {self.X_unobs} exceeds the {s.free_cells} cells outside the sampled networks"
            )
        if self.R_unobs > self.X_unobs or (self.R_unobs == 0) != (self.X_unobs == 0):
            raise DomainError("need R_unobs <= X_unobs, and R_unobs = 0 exactly when X_unobs = 0")
        if len(self.eps_unobs) != self.X_unobs or len(self.Y_unobs) != self.X_unobs:
            raise DomainError("eps_unobs and Y_unobs must have length X_unobs")
        if any(not (0 <= e < self.R_unobs) for e in self.eps_unobs):
            raise DomainError("allocation labels out of range")
        if any(c < 1 for c in self.C_unobs):
            raise DomainError("every unobserved component needs at least one cell")
        if any(y < 1 for y in self.Y_unobs):
            raise DomainError("unobserved non-empty cells need counts >= 1")
        if len(self.params.lambda_s) != s.R_s or len(self.params.lambda_unobs) != self.R_unobs:
            raise DomainError("rate vectors do not match the number of components")


def _population_sizes(state: AugmentedState) -> tuple:
    """Full multiset Z of network sizes implied by the state."""
    s = state.sample
    X = s.X_s + state.X_unobs
    C = list(s.C_s) + list(state.C_unobs)
    return tuple(C) + (1,) * (s.N - X)


def allocation_log_factor(C: Sequence[int], C_unobs: Sequence[int], allocation: str = "exchangeable") -> float:
    """Log allocation factor; ``C`` holds every component size, ``C_unobs`` the unobserved ones."""
    if allocation == "weights":
        X = sum(C)
        return sum(c * math.log(c) for c in C) - X * math.log(X)
    if allocation == "exchangeable":
        return sum(math.lgamma(c + 1) for c in C_unobs) - math.lgamma(sum(C_unobs) + 1)
    raise DomainError(f"unknown allocation {allocation!r}")


def likelihood_factors(state: AugmentedState, allocation: str = "exchangeable") -> dict:
    """Log of each complete-data likelihood factor, evaluated separately."""
    state.validate()
    s, p = state.sample, state.params
    X = s.X_s + state.X_unobs
    R = s.R_s + state.R_unobs
    C = list(s.C_s) + list(state.C_unobs)
    if X == 0:
        # the population must hold a non-empty cell
        return dict(selection=-math.inf, counts=0.0, allocation=0.0, sizes=0.0, networks=-math.inf,
                    cells=-math.inf)
    counts = 0.0
    for nw, lam in zip(s.nonempty, p.lambda_s):
        counts += sum(dists.trunc_poisson_logpmf(y, lam) for y in nw.counts)
    for e, y in zip(state.eps_unobs, state.Y_unobs):
        counts += dists.trunc_poisson_logpmf(y, p.lambda_unobs[e])
    return dict(
        selection=selection_log_prob(s.sizes, _population_sizes(state)),
        counts=counts,
        allocation=allocation_log_factor(C, state.C_unobs, allocation),
        sizes=dists.shifted_multinomial_logpmf(C, R),
        networks=dists.trunc_binomial_logpmf(R, X, p.beta),
        cells=dists.trunc_binomial_logpmf(X, s.N, p.alpha),
    )


def log_complete_data_likelihood(state: AugmentedState, priors: Optional[PriorConfig] = None) -> float:
    """Sum of the six factor logs; ``-inf`` when the state is impossible.

    Only ``priors.allocation`` is read from ``priors``; the default is the
    exchangeable allocation.
    """
    allocation = priors.allocation if priors is not None else "exchangeable"
    return float(sum(likelihood_factors(state, allocation).values()))


def _dependent_chain(lams: Sequence[float], tau: float) -> float:
    v = sorted(lams)
    return sum(dists.truncnormal_below_logpdf(v[k], v[k - 1], tau, v[k - 1]) for k in range(1, len(v)))


def log_prior(params: MixtureParams, R_unobs: int, priors: PriorConfig) -> float:
    """Joint prior of ``(alpha, beta, nu, lambda)`` on the ordered unobserved region.

    Independent variant: Gamma(d, nu) for every rate, ``log R_unobs!`` for the
    ordering restriction, and Gamma(e, f) for ``nu``. Dependent variant: a
    truncated-normal increment chain over all rates sorted together, flat on
    the smallest (improper, only meaningful in ratios), with the same
    ``log R_unobs!`` ordering factor; ``nu`` carries no prior mass there.
    """
    lu = params.lambda_unobs
    if len(lu) != R_unobs:
        raise DomainError("lambda_unobs length differs from R_unobs")
    if any(lu[k] >= lu[k + 1] for k in range(len(lu) - 1)):
        raise DomainError("unobserved component rates must be strictly increasing")
    lp = dists.beta_logpdf(params.alpha, priors.a_alpha, priors.b_alpha)
    lp += dists.beta_logpdf(params.beta, priors.a_beta, priors.b_beta)
    lp += math.lgamma(R_unobs + 1)
    if priors.independent:
        lp += sum(dists.gamma_logpdf(lam, priors.d, params.nu) for lam in params.lambdas)
        nu = priors.nu_prior()
        lp += dists.gamma_logpdf(params.nu, nu.shape, nu.rate)
    else:
        lp += _dependent_chain(params.lambdas, priors.tau)
    return lp


def log_posterior(state: AugmentedState, priors: PriorConfig) -> float:
    """Unnormalized log posterior of the augmented state."""
    return log_complete_data_likelihood(state, priors) + log_prior(state.params, state.R_unobs, priors)


# --------------------------------------------------------------------------
# network baseline: one shared per-cell rate, network totals truncated Poisson


@dataclass(frozen=True)
class NetworkState:
    """Augmented state of the network model.

    ``C_unobs[k]`` and ``Y_unobs[k]`` are the size and count total of the
    ``k``-th unobserved non-empty network.
    """

    sample: AdaptiveSample
    alpha: float
    beta: float
    nu: float
    lam: float
    C_unobs: tuple
    Y_unobs: tuple

    def __post_init__(self):
        object.__setattr__(self, "C_unobs", tuple(int(c) for c in self.C_unobs))
        object.__setattr__(self, "Y_unobs", tuple(int(y) for y in self.Y_unobs))

    @property
    def X_unobs(self) -> int:
        return sum(self.C_unobs)

    @property
    def R_unobs(self) -> int:
        return len(self.C_unobs)

    @property
    def T(self) -> int:
        return self.sample.T_s + sum(self.Y_unobs)

    def validate(self) -> None:
        if not self.lam > 0:
            raise DomainError(f"network-model rate must be positive, got {self.lam}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise DomainError(f"{name} must lie in (0, 1), got {v}")
        if len(self.C_unobs) != len(self.Y_unobs):
            raise DomainError("C_unobs and Y_unobs must have equal length")
        if any(c < 1 for c in self.C_unobs):
            raise DomainError("unobserved networks need at least one cell")
        if any(y < 1 for y in self.Y_unobs):
            raise DomainError("network totals must be >= 1")
        if self.X_unobs > self.sample.free_cells:
            raise DomainError("unobserved networks exceed the cells outside the sample")


def network_likelihood_factors(state: NetworkState) -> dict:
    state.validate()
    s = state.sample
    C = list(s.C_s) + list(state.C_unobs)
    Ytot = [sum(nw.counts) for nw in s.nonempty] + list(state.Y_unobs)
    X, R = sum(C), len(C)
    if X == 0:
        return dict(selection=-math.inf, counts=0.0, sizes=0.0, networks=-math.inf, cells=-math.inf)
    Z = tuple(C) + (1,) * (s.N - X)
    return dict(
        selection=selection_log_prob(s.sizes, Z),
        counts=sum(dists.trunc_poisson_logpmf(y, state.lam * c) for c, y in zip(C, Ytot)),
        sizes=dists.shifted_multinomial_logpmf(C, R),
        networks=dists.trunc_binomial_logpmf(R, X, state.beta),
        cells=dists.trunc_binomial_logpmf(X, s.N, state.alpha),
    )


def network_model_log_likelihood(state: NetworkState) -> float:
    return float(sum(network_likelihood_factors(state).values()))


def network_model_log_prior(state: NetworkState, priors: PriorConfig) -> float:
    """Beta priors on ``alpha, beta``; Gamma(d, nu) on the rate; Gamma(e, f) on ``nu``.

    Unobserved networks are an ordered list, so no ordering factor enters.
    """
    nu = priors.nu_prior()
    return (dists.beta_logpdf(state.alpha, priors.a_alpha, priors.b_alpha)
            + dists.beta_logpdf(state.beta, priors.a_beta, priors.b_beta)
            + dists.gamma_logpdf(state.lam, priors.d, state.nu)
            + dists.gamma_logpdf(state.nu, nu.shape, nu.rate))


def network_log_posterior(state: NetworkState, priors: PriorConfig) -> float:
    return network_model_log_likelihood(state) + network_model_log_prior(state, priors)
