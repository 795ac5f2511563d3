"""Finite (prior, source) instances reduced to sufficient statistics.

A hypothesis class is a prior weight and a population error per predictor.
A dataset of size m enters only through the per-hypothesis error counts,
so ``ErrorCounts`` *is* the dataset.
"""
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, ShapeError
from .kernels import LN2, entropy_array

PROVENANCES = ("mdl_point_mass", "empirical_bayes", "profile", "bayes", "oracle_grid", "custom")

WEIGHT_FLOOR = 1e-300
COMPETITOR_KL_BUDGET = 10.0


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HypothesisClass:
    """Prior weights (possibly unnormalized) and population errors.

    The prior is kept as given; ``normalizer`` records its total mass and
    every KL against the prior uses the normalized version unless stated.
    """

    prior: np.ndarray
    pop_error: np.ndarray
    labels: tuple | None = None

    def __post_init__(self):
        prior = _frozen(self.prior)
        pop = _frozen(self.pop_error)
        if prior.ndim != 1 or prior.shape != pop.shape or prior.size == 0:
            raise ShapeError("prior and pop_error must be equal-length, non-empty vectors")
        if not np.all(np.isfinite(prior)) or np.any(prior <= 0):
            raise DomainError("prior weights must be finite and > 0")
        if np.any(~((pop >= 0) & (pop <= 1))):
            raise DomainError("population errors must lie in [0, 1]")
        if self.labels is not None and len(self.labels) != prior.size:
            raise ShapeError("labels must match the class size")
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "pop_error", pop)
        total = math.fsum(prior)
        object.__setattr__(self, "normalizer", total)
        log2_norm = np.log2(prior) - math.log2(total)
        log2_norm.setflags(write=False)
        object.__setattr__(self, "log2_prior", log2_norm)
        norm = np.exp2(log2_norm)
        norm.setflags(write=False)
        object.__setattr__(self, "normalized_prior", norm)

    def __len__(self):
        return self.prior.size

    @property
    def size(self):
        return self.prior.size

    @cached_property
    def rate_groups(self):
        """(distinct population errors, index of each hypothesis into them)."""
        return np.unique(self.pop_error, return_inverse=True)


@dataclass(frozen=True, eq=False)
class ErrorCounts:
    """Number of training errors k_i of each hypothesis on a sample of size m."""

    m: int
    counts: np.ndarray

    def __post_init__(self):
        m = int(self.m)
        if m < 1 or m != self.m:
            raise DomainError(f"sample size must be a positive integer, got {self.m!r}")
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size == 0:
            raise ShapeError("counts must be a non-empty vector")
        if not np.all(counts == np.round(counts)):
            raise DomainError("counts must be integers")
        counts = _frozen(counts, dtype=np.int64)
        if np.any(counts < 0) or np.any(counts > m):
            raise DomainError(f"counts must lie in [0, {m}]")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "counts", counts)

    def __len__(self):
        return self.counts.size

    @property
    def rates(self):
        return self.counts / self.m


@dataclass(frozen=True, eq=False)
class Posterior:
    """Normalized weights over the hypotheses of a class.

    ``negated`` marks a posterior over the negated predictors (see the
    empirical-Bayes rule); losses are then read through 1 - error.
    """

    weights: np.ndarray
    provenance: str = "custom"
    negated: bool = False

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ShapeError("weights must be a non-empty vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise DomainError("weights must be finite and >= 0")
        w[w < WEIGHT_FLOOR] = 0.0
        total = w.sum()
        if total <= 0:
            raise DomainError("weights sum to zero")
        if abs(total - 1.0) > 1e-12:
            w = w / total
        if self.provenance not in PROVENANCES:
            raise DomainError(f"unknown provenance {self.provenance!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size

    @classmethod
    def from_log2(cls, log2_weights, provenance="custom", negated=False):
        lw = np.asarray(log2_weights, dtype=float)
        lw = lw - lw.max()
        w = np.exp2(lw)
        return cls(w / w.sum(), provenance, negated)

    @classmethod
    def point_mass(cls, n, index, provenance="custom"):
        w = np.zeros(n)
        w[index] = 1.0
        return cls(w, provenance)


@dataclass(frozen=True, eq=False)
class Instance:
    """A class together with a competitor posterior of error ``lstar``."""

    hclass: HypothesisClass
    qstar: Posterior
    lstar: float
    strict_budget: bool = True
    kl_budget: float = field(default=COMPETITOR_KL_BUDGET)

    def __post_init__(self):
        _same_size(self.qstar, self.hclass)
        ld = population_loss(self.qstar, self.hclass)
        if abs(ld - self.lstar) > 1e-12:
            raise DomainError(f"competitor error {ld!r} differs from lstar={self.lstar!r}")
        kl = kl_to_prior(self.qstar, self.hclass, raw=self.strict_budget)
        if kl > self.kl_budget:
            raise DomainError(f"KL(Q*||prior) = {kl:.4f} exceeds the budget {self.kl_budget}")

    def to_dict(self):
        return {
            "prior": self.hclass.prior.tolist(),
            "pop_error": self.hclass.pop_error.tolist(),
            "qstar": self.qstar.weights.tolist(),
            "lstar": self.lstar,
        }

    @classmethod
    def from_dict(cls, d):
        for key in ("prior", "pop_error", "qstar", "lstar"):
            if key not in d:
                raise DomainError(f"instance is missing field {key!r}")
        hc = HypothesisClass(d["prior"], d["pop_error"], tuple(d["labels"]) if d.get("labels") else None)
        return cls(hc, Posterior(d["qstar"], "custom"), float(d["lstar"]))


def load_instance(path):
    with open(path) as fh:
        return Instance.from_dict(json.load(fh))


def save_instance(inst, path):
    with open(path, "w") as fh:
        json.dump(inst.to_dict(), fh)


def _same_size(a, b):
    if len(a) != len(b):
        raise ShapeError(f"size mismatch: {len(a)} vs {len(b)}")


def _counts(q, ec):
    return ec.m - ec.counts if q.negated else ec.counts


def empirical_loss(q, ec):
    """L_S(Q) = sum_i w_i k_i / m."""
    _same_size(q, ec)
    return float(q.weights @ _counts(q, ec)) / ec.m


def population_loss(q, hc):
    _same_size(q, hc)
    err = 1.0 - hc.pop_error if q.negated else hc.pop_error
    return float(q.weights @ err)


def kl_to_prior(q, hc, raw=False):
    """KL(Q || prior) in bits against the normalized prior.

    ``raw=True`` uses the stored, possibly sub-normalized weights instead, so a
    point mass on h costs exactly -log2 prior[h].
    """
    _same_size(q, hc)
    w = q.weights
    mask = w > 0
    log2_prior = np.log2(hc.prior) if raw else hc.log2_prior
    return float(w[mask] @ (np.log2(w[mask]) - log2_prior[mask]))


def objective_eb(q, ec, hc, lam):
    """m H(L_S(Q)) + lam KL(Q||prior)."""
    _check_lam(lam)
    _same_size(q, hc)
    loss = empirical_loss(q, ec)
    return ec.m * float(entropy_array(loss)) + lam * kl_to_prior(q, hc)


def objective_pp(q, ec, hc, lam):
    """m E_Q[H(L_S(h))] + lam KL(Q||prior)."""
    _check_lam(lam)
    _same_size(q, hc)
    _same_size(q, ec)
    return ec.m * float(q.weights @ entropy_array(ec.rates)) + lam * kl_to_prior(q, hc)


def _check_lam(lam):
    if not (lam >= 0 and math.isfinite(lam)):
        raise DomainError(f"lambda must be finite and >= 0, got {lam!r}")


def log2_sum(log2_values):
    return float(logsumexp(np.asarray(log2_values) * LN2) / LN2)
