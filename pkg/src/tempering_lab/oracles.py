"""Brute-force reference solutions, deliberately free of closed forms."""
from functools import lru_cache

import numpy as np

from .kernels import LN2, entropy_array, kl_array
from .model import Posterior


def grid_min_t(lam, q, step=1e-6):
    """min over p in {0, step, ..., 1/2} of lam*KL(p||q) + H(p)."""
    p = np.linspace(0.0, 0.5, int(round(0.5 / step)) + 1)
    return float(np.min(lam * kl_array(p, q) + entropy_array(p)))


def simplex_grid(n, step):
    """All points of the 2- or 1-simplex (n = 3 or 2) with coordinates on the lattice step * Z."""
    s = int(round(1.0 / step))
    if n == 2:
        a = np.arange(s + 1)
        pts = np.stack([a, s - a], axis=1)
    elif n == 3:
        i, j = np.triu_indices(s + 1)
        # i <= j: coordinates (i, j - i, s - j)
        pts = np.stack([i, j - i, s - j], axis=1)
    else:
        raise ValueError("simplex grid supports 2 or 3 hypotheses")
    return pts / s


@lru_cache(maxsize=4)
def _lattice(n, step):
    w = simplex_grid(n, step)
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_ent = np.where(w > 0, w * np.log2(w), 0.0).sum(axis=1)
    w.setflags(write=False)
    neg_ent.setflags(write=False)
    return w, neg_ent


def simplex_search(ec, hc, lam, objective="eb", step=5e-4):
    """Exhaustive lattice minimization of the empirical-Bayes or profile objective.

    The empirical-Bayes search is restricted to L_S(Q) <= 1/2.
    Returns (Posterior, objective value).
    """
    w, neg_ent = _lattice(len(hc), step)
    kl = neg_ent - w @ hc.log2_prior
    if objective == "eb":
        loss = w @ ec.counts / ec.m
        val = ec.m * entropy_array(loss) + lam * kl
        val = np.where(loss <= 0.5 + 1e-12, val, np.inf)
    elif objective == "pp":
        val = ec.m * (w @ entropy_array(ec.rates)) + lam * kl
    else:
        raise ValueError(f"unknown objective {objective!r}")
    i = int(np.argmin(val))
    return Posterior(w[i], "oracle_grid"), float(val[i])


__all__ = ["grid_min_t", "simplex_grid", "simplex_search", "LN2"]
