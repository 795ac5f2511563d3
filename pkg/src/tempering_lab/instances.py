"""Lower-bound constructions and the binomial error-count sampler.

A "good" hypothesis h0 with error L* competes with a block of independent
"bad" hypotheses of error L'. Under the construction's source every
hypothesis errs independently on each example, so a dataset is fully
described by independent Binomial(m, L_D(h)) error counts.
"""
import math
import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit
from scipy.stats import binom

from . import kernels as K
from .errors import ConvexityError, DomainError
from .model import ErrorCounts, HypothesisClass, Instance, Posterior
from .tempering import ell_lambda

REGIMES = ("sub_one", "super_one", "two_hypothesis", "fixed")
MAX_CLASS_SIZE = 10**8
GOOD_PRIOR = 0.1


def universal_prior(n):
    """Unnormalized weights: 1/10 for h0, then 1/(i log2(i)^2 + 10)."""
    n = int(n)
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    i = np.arange(n, dtype=float)
    w = np.empty(n)
    w[0] = GOOD_PRIOR
    w[1:] = 1.0 / (i[1:] * np.log2(i[1:]) ** 2 + 10.0)
    return w


def _lhat(lam, lprime):
    # minimizer p* of lam KL(p||L') + H(p), for lam > 1
    return float(expit(lam / (lam - 1.0) * K.logit_e(lprime)))


def class_size(regime, m, lprime, lam=1.0, truncation=None):
    """Number of hypotheses (h0 included) the construction needs at sample size m."""
    if regime == "two_hypothesis":
        return 2
    if regime == "fixed":
        if truncation is None or truncation < 1:
            raise DomainError("the fixed regime needs an explicit truncation >= 1")
        return int(truncation)
    if regime == "sub_one":
        log2_k = 1.0 + 0.5 * math.log2(m) - m * math.log2(1.0 - lprime)
    elif regime == "super_one":
        log2_k = m * K.binary_kl(_lhat(lam, lprime), lprime)
    else:
        raise DomainError(f"unknown regime {regime!r}")
    if log2_k > math.log2(MAX_CLASS_SIZE):
        return MAX_CLASS_SIZE + 1
    return int(math.ceil(2.0 ** log2_k)) + 1


@dataclass(frozen=True)
class LowerBoundSpec:
    """Parameters of one lower-bound construction.

    ``check_premise`` enforces L' < ell_lam(L*) for the tempered regimes; it can
    be switched off to probe the construction outside the region where it is a
    lower bound.
    """

    lstar: float
    lprime: float
    regime: str
    m: int
    lam: float = 1.0
    truncation: int | None = None
    check_premise: bool = True

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise DomainError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        K.check_prob(self.lstar, "lstar")
        K.check_prob(self.lprime, "lprime")
        lo_ok = self.lstar >= 0 if self.regime in ("two_hypothesis", "fixed") else self.lstar > 0
        if not (lo_ok and self.lstar < 0.5):
            raise DomainError(f"lstar={self.lstar} outside the admissible range for {self.regime}")
        if self.lprime < self.lstar:
            raise DomainError(f"need lstar <= lprime, got {self.lstar} > {self.lprime}")
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m!r}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda must be finite and > 0, got {self.lam!r}")
        if self.regime == "sub_one" and self.lam > 1:
            raise DomainError("the sub_one construction needs lambda <= 1")
        if self.regime == "super_one" and self.lam <= 1:
            raise DomainError("the super_one construction needs lambda > 1")
        if self.regime in ("sub_one", "super_one"):
            if not self.lprime < 0.5:
                raise DomainError("lprime must be < 1/2")
            if self.check_premise:
                bound = ell_lambda(self.lam, self.lstar)
                if self.lprime >= bound:
                    raise DomainError(
                        f"lprime={self.lprime} is not below the limiting error {bound:.6f} "
                        f"for lambda={self.lam}, lstar={self.lstar}")
        n = self.size
        if n > MAX_CLASS_SIZE:
            fit = max_feasible_m(self.regime, self.lprime, self.lam)
            raise DomainError(f"class size at m={self.m} exceeds {MAX_CLASS_SIZE:.0e}; "
                              f"largest feasible m is {fit}")

    @property
    def size(self):
        return class_size(self.regime, self.m, self.lprime, self.lam, self.truncation)

    def with_m(self, m):
        return LowerBoundSpec(self.lstar, self.lprime, self.regime, int(m), self.lam,
                              self.truncation, self.check_premise)

    def to_dict(self):
        return {"lstar": self.lstar, "lprime": self.lprime, "regime": self.regime, "m": self.m,
                "lam": self.lam, "truncation": self.truncation, "check_premise": self.check_premise}


def max_feasible_m(regime, lprime, lam=1.0):
    m = 1
    while class_size(regime, m + 1, lprime, lam) <= MAX_CLASS_SIZE:
        m += 1
        if m > 10**7:
            break
    return m


def build_lb_instance(spec):
    """Class [h0, h1, ...] with errors [L*, L', L', ...] and Q* the point mass on h0."""
    n = spec.size
    if spec.regime == "two_hypothesis":
        prior = np.array([GOOD_PRIOR, 1.0 - GOOD_PRIOR])
    else:
        prior = universal_prior(n)
    pop = np.full(n, spec.lprime)
    pop[0] = spec.lstar
    hc = HypothesisClass(prior, pop)
    return Instance(hc, Posterior.point_mass(n, 0, "custom"), spec.lstar)


# ------------------------------------------------------------- sampling

def _purpose_key(purpose):
    if isinstance(purpose, int):
        return purpose
    return zlib.crc32(str(purpose).encode())


@dataclass(frozen=True)
class SeededRng:
    """Derives independent generators from (master seed, coordinates)."""

    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise DomainError("master seed must be a 64-bit unsigned integer")

    def stream(self, *coords):
        key = tuple(_purpose_key(c) for c in coords)
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(self.master_seed), spawn_key=key)))


@lru_cache(maxsize=1024)
def _cdf_table(m, p):
    cdf = binom.cdf(np.arange(m + 1), m, p)
    cdf[-1] = 1.0
    cdf.setflags(write=False)
    return cdf


def sample_error_counts(inst, m, rng):
    """k_i ~ Binomial(m, L_D(h_i)) independently, via inverse-CDF tables per distinct rate."""
    hc = inst.hclass if isinstance(inst, Instance) else inst
    m = int(m)
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    pop = hc.pop_error
    u = rng.random(pop.size)
    counts = np.empty(pop.size, dtype=np.int64)
    vals, inv = hc.rate_groups
    for j, p in enumerate(vals):
        idx = inv == j if vals.size > 1 else slice(None)
        if p == 0.0:
            counts[idx] = 0
        elif p == 1.0:
            counts[idx] = m
        else:
            counts[idx] = np.searchsorted(_cdf_table(m, float(p)), u[idx], side="right")
    return ErrorCounts(m, counts)


# ------------------------------------------------------- mixture weights

def _check_qstar_args(lstar, lprime, m, lam):
    K.check_prob(lstar, "lstar")
    K.check_prob(lprime, "lprime")
    if m < 1 or not (lam > 0 and math.isfinite(lam)):
        raise DomainError("need m >= 1 and finite lambda > 0")


def qstar_formula_profile(lstar, lprime, m, lam):
    """Weight the profile posterior keeps on h0 in the two-hypothesis construction."""
    _check_qstar_args(lstar, lprime, m, lam)
    if lprime == lstar:
        return GOOD_PRIOR
    shift = (m / lam) * K.LN2 * (K.binary_entropy(lprime) - K.binary_entropy(lstar))
    return K.sigmoid_e(K.logit_e(GOOD_PRIOR) + shift)


def qstar_formula_pacbayes(lstar, lprime, m, lam):
    """argmin over q of lam KL(q||0.1) + m H(q L* + (1-q) L').

    The objective is strongly convex when lam > m L'/(1 - L'); the stationary
    point is found by bisection on the derivative in logit coordinates.
    """
    _check_qstar_args(lstar, lprime, m, lam)
    if not lprime < 1.0 or lam <= m * lprime / (1.0 - lprime):
        raise ConvexityError(f"lambda={lam} does not exceed m L'/(1-L') = "
                             f"{m * lprime / (1.0 - lprime) if lprime < 1 else math.inf}")
    if lprime == lstar:
        return GOOD_PRIOR
    t0 = K.logit_e(GOOD_PRIOR)

    def deriv(t):
        q = float(expit(t))
        loss = q * lstar + (1.0 - q) * lprime
        return lam * (t - t0) - m * (lprime - lstar) * (math.log1p(-loss) - math.log(loss))

    hi = 1.0
    while deriv(t0 + hi) <= 0:
        hi *= 2.0
    lo = -1.0
    while deriv(t0 + lo) >= 0:
        lo *= 2.0
    t = brentq(deriv, t0 + lo, t0 + hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return float(expit(t))


def mixture_error(q, lstar, lprime):
    return q * lstar + (1.0 - q) * lprime
