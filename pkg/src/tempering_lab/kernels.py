"""Binary entropy, binary KL, and their derivatives and inverses.

Everything is measured in bits. The only natural-base functions are
``logit_e`` and ``sigmoid_e``, kept for closed forms that are stated with
the natural logistic function.

Scalar functions take and return Python floats and validate their
arguments; the ``*_array`` variants are unchecked numpy versions used in
inner loops.
"""
import math

import numpy as np
from scipy.optimize import bisect
from scipy.special import expit

from .errors import DomainError

LN2 = math.log(2.0)

# Bisection settings shared by every inverse in the package.
BISECT_XTOL = 1e-15
BISECT_MAXITER = 200


def check_prob(p, name="p"):
    p = float(p)
    if not (0.0 <= p <= 1.0):  # also rejects NaN
        raise DomainError(f"{name} must lie in [0, 1], got {p!r}")
    return p


def _h_small(p):
    # p <= 1/2; the log1p form keeps full precision for tiny p
    if p == 0.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log1p(-p) / LN2


def binary_entropy(p):
    """H(p) in bits, with 0 log 0 = 0. Exactly symmetric under p -> 1 - p."""
    p = check_prob(p)
    return _h_small(min(p, 1.0 - p))


def binary_entropy_deriv(p):
    """H'(p) = log2((1 - p) / p)."""
    p = check_prob(p)
    if p == 0.0 or p == 1.0:
        raise DomainError(f"H'(p) is infinite at p={p}")
    return (math.log1p(-p) - math.log(p)) / LN2


def binary_entropy_deriv_inv(beta):
    """The p with H'(p) = beta, i.e. 1 / (1 + 2**beta)."""
    beta = float(beta)
    if not math.isfinite(beta):
        raise DomainError(f"beta must be finite, got {beta!r}")
    return float(expit(-beta * LN2))


def binary_entropy_inv_lower(hval):
    """The unique p in [0, 1/2] with H(p) = hval."""
    hval = float(hval)
    if not (0.0 <= hval <= 1.0):
        raise DomainError(f"entropy value must lie in [0, 1], got {hval!r}")
    if hval == 0.0:
        return 0.0
    if hval == 1.0:
        return 0.5
    return bisect(lambda p: _h_small(p) - hval, 0.0, 0.5,
                  xtol=BISECT_XTOL, maxiter=BISECT_MAXITER)


def binary_kl(p, q):
    """KL(Ber(p) || Ber(q)) in bits; ``math.inf`` when q puts no mass where p does."""
    p = check_prob(p)
    q = check_prob(q)
    return _kl(p, q)


def _kl(p, q):
    out = 0.0
    if p > 0.0:
        if q == 0.0:
            return math.inf
        out += p * (math.log(p) - math.log(q))
    if p < 1.0:
        if q == 1.0:
            return math.inf
        out += (1.0 - p) * (math.log1p(-p) - math.log1p(-q))
    # rounding can leave -1e-17 at p == q
    return max(out / LN2, 0.0)


def logit_e(p):
    p = check_prob(p)
    if p == 0.0 or p == 1.0:
        raise DomainError(f"logit is infinite at p={p}")
    return math.log(p) - math.log1p(-p)


def logit2(p):
    """Base-2 logit, log2(p / (1 - p)) = -H'(p)."""
    return logit_e(p) / LN2


def sigmoid_e(t):
    """Natural logistic 1 / (1 + e^-t)."""
    t = float(t)
    if math.isnan(t):
        raise DomainError("sigmoid of NaN")
    return float(expit(t))


def entropy_array(p):
    p = np.minimum(np.asarray(p, dtype=float), 1.0 - np.asarray(p, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -p * np.log2(p) - (1.0 - p) * np.log1p(-p) / LN2
    return np.where(p > 0.0, out, 0.0)


def kl_array(p, q):
    """Vectorized binary KL in bits, inf where the support condition fails."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(p > 0.0, p * (np.log(p) - np.log(q)), 0.0)
        b = np.where(p < 1.0, (1.0 - p) * (np.log1p(-p) - np.log1p(-q)), 0.0)
    out = np.maximum((a + b) / LN2, 0.0)
    return np.where(np.isnan(out), np.inf, out)
