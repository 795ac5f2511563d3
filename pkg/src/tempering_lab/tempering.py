"""Limiting-error calculus for the entropy-regularized rule.

``t_lambda`` is the worst-case transform min_p lambda*KL(p||q) + H(p) over
p in [0, 1/2]; ``ell_lambda`` inverts it at H(L*) and gives the worst-case
limiting population error for a fixed regularization strength.
"""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect, brentq
from scipy.special import expit

from . import kernels as K
from .errors import DomainError, NoSolutionError


def _check_lambda(lam, strict_above=0.0):
    lam = float(lam)
    if not (math.isfinite(lam) and lam > strict_above):
        raise DomainError(f"lambda must be finite and > {strict_above:g}, got {lam!r}")
    return lam


def _pstar(lam, q):
    """Unconstrained minimizer of lam*KL(p||q) + H(p) for lam > 1."""
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0
    # logit(p*) = lam/(lam-1) * logit(q); evaluated in log space so lam -> 1+
    # sends p* to 0 instead of overflowing
    with np.errstate(over="ignore"):
        t = (lam / (lam - 1.0)) * K.logit_e(q)
    return float(expit(t))


def _objective(lam, p, q):
    return lam * K._kl(p, q) + K._h_small(min(p, 1.0 - p))


def t_lambda(lam, q):
    """min over p in [0, 1/2] of lam*KL(p||q) + H(p), in closed form."""
    lam = _check_lambda(lam)
    q = K.check_prob(q, "q")
    if lam <= 1.0:
        at_zero = _objective(lam, 0.0, q)
        if q <= 0.5:
            return at_zero
        # concave in logit(p) for lam <= 1, so the minimum sits at an endpoint
        return min(at_zero, _objective(lam, 0.5, q))
    p = min(_pstar(lam, q), 0.5)
    return _objective(lam, p, q)


def u_lambda(lam, q):
    """lam*KL(p*||q) + H(p*) with the interior minimizer p*; needs lam > 1."""
    lam = _check_lambda(lam, 1.0)
    q = K.check_prob(q, "q")
    if q > 0.5:
        raise DomainError(f"u_lambda is defined for q <= 1/2, got {q}")
    return _objective(lam, _pstar(lam, q), q)


def u_lambda_inverse(lam, hval):
    """The q in [0, 1/2] with U_lam(q) = hval (U is increasing there)."""
    lam = _check_lambda(lam, 1.0)
    hval = float(hval)
    if not (0.0 <= hval <= 1.0):
        raise NoSolutionError(f"U_lambda takes values in [0, 1] on [0, 1/2], got {hval!r}")
    if hval == 0.0:
        return 0.0
    if hval == 1.0:
        return 0.5
    # relative tolerance matters: near q = 0 an absolute 1e-15 is coarser than the root
    return brentq(lambda q: _objective(lam, _pstar(lam, q), q) - hval, 0.0, 0.5,
                  xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=K.BISECT_MAXITER)


def _ell(lam, lstar):
    h = K._h_small(lstar)
    if lam <= 1.0:
        return -math.expm1(-h * K.LN2 / lam)
    # U <= H, so the exact value is >= lstar; only subnormal lstar can round below
    return max(u_lambda_inverse(lam, h), lstar)


def ell_lambda(lam, lstar):
    """Worst-case limiting error for fixed lam when a competitor has error lstar."""
    lam = _check_lambda(lam)
    lstar = K.check_prob(lstar, "lstar")
    if lstar >= 0.5:
        raise DomainError(f"lstar must be < 1/2, got {lstar}")
    return _ell(lam, lstar)


def lemma9_gap(lam, q):
    """U_lam(q) + lam/(lam-1)^2 - H(q); positive for every lam > 1, q <= 1/2."""
    lam = _check_lambda(lam, 1.0)
    return u_lambda(lam, q) + lam / (lam - 1.0) ** 2 - K.binary_entropy(q)


def tempering_crossing(lam):
    """L* at which ell_lam(L*) reaches 1/2, or None when lam >= 1 (never reached)."""
    lam = _check_lambda(lam)
    if lam >= 1.0:
        return None
    return bisect(lambda x: _ell(lam, x) - 0.5, 0.0, 0.5,
                  xtol=K.BISECT_XTOL, maxiter=K.BISECT_MAXITER)


@dataclass(frozen=True)
class TemperingCurve:
    lam: float
    lstar_grid: tuple
    values: tuple
    crossing: float | None = None

    def __post_init__(self):
        if len(self.lstar_grid) != len(self.values):
            raise ValueError("grid and values differ in length")


DEFAULT_GRID = dict(lo=0.001, hi=0.499, points=512)


def default_grid(lo=0.001, hi=0.499, points=512):
    if points < 1:
        raise DomainError("grid needs at least one point")
    if not (0.0 <= lo <= hi < 0.5):
        raise DomainError(f"grid must satisfy 0 <= lo <= hi < 1/2, got [{lo}, {hi}]")
    return tuple(float(x) for x in np.linspace(lo, hi, points))


def emit_tempering_grid(lambdas, lstar_grid=None):
    """One curve per lambda over a shared L* grid (default 512 points on [0.001, 0.499])."""
    grid = default_grid() if lstar_grid is None else tuple(float(x) for x in lstar_grid)
    curves = []
    for lam in lambdas:
        lam = _check_lambda(lam)
        values = tuple(ell_lambda(lam, x) for x in grid)
        curves.append(TemperingCurve(lam, grid, values, tempering_crossing(lam)))
    return curves


def write_curves_csv(curves, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["lambda", "l_star", "ell"])
    for c in curves:
        for x, v in zip(c.lstar_grid, c.values):
            w.writerow([format(c.lam, ".12g"), format(x, ".12g"), format(v, ".12g")])


def curves_envelope(curves, grid_spec=None):
    """JSON-ready summary: grid specification plus the lambda < 1 crossings."""
    return {
        "grid": grid_spec or {"points": len(curves[0].lstar_grid) if curves else 0},
        "columns": ["lambda", "l_star", "ell"],
        "curves": [{"lambda": c.lam, "crossing": c.crossing} for c in curves],
    }


_SCHEDULE_KINDS = ("constant", "power", "sqrt_optimal", "linear", "inverse_log")


@dataclass(frozen=True)
class LambdaSchedule:
    """Maps the sample size m to a regularization strength lambda_m.

    constant: value;  power: c * m**alpha;  sqrt_optimal: sqrt(m / (kl_budget + log2 m));
    linear: c * m;  inverse_log: c / log2(m + 2).
    """

    kind: str
    value: float = 0.0
    c: float = 1.0
    alpha: float = 0.5
    kl_budget: float = field(default=math.log2(10.0))

    def __post_init__(self):
        if self.kind not in _SCHEDULE_KINDS:
            raise DomainError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "constant" and not (math.isfinite(self.value) and self.value >= 0):
            raise DomainError("constant schedule needs a finite value >= 0")
        if self.kind in ("power", "linear", "inverse_log") and not self.c > 0:
            raise DomainError(f"{self.kind} schedule needs c > 0")
        if self.kind == "power" and not math.isfinite(self.alpha):
            raise DomainError("power schedule needs a finite exponent")
        if self.kind == "sqrt_optimal" and not self.kl_budget > 0:
            raise DomainError("sqrt_optimal schedule needs kl_budget > 0")

    @classmethod
    def constant(cls, value):
        return cls("constant", value=float(value))

    @classmethod
    def power(cls, c, alpha):
        return cls("power", c=float(c), alpha=float(alpha))

    @classmethod
    def sqrt_optimal(cls, kl_budget=math.log2(10.0)):
        return cls("sqrt_optimal", kl_budget=float(kl_budget))

    @classmethod
    def linear(cls, c):
        return cls("linear", c=float(c))

    @classmethod
    def inverse_log(cls, c=1.0):
        return cls("inverse_log", c=float(c))

    def evaluate(self, m):
        if m < 1:
            raise DomainError(f"sample size must be >= 1, got {m}")
        if self.kind == "constant":
            return self.value
        if self.kind == "power":
            return self.c * m ** self.alpha
        if self.kind == "sqrt_optimal":
            return math.sqrt(m / (self.kl_budget + math.log2(m)))
        if self.kind == "linear":
            return self.c * m
        return self.c / math.log2(m + 2)

    __call__ = evaluate

    def to_dict(self):
        keys = {"constant": ("value",), "power": ("c", "alpha"), "sqrt_optimal": ("kl_budget",),
                "linear": ("c",), "inverse_log": ("c",)}[self.kind]
        return {"kind": self.kind, **{k: getattr(self, k) for k in keys}}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, **{k: float(v) for k, v in d.items()})


def dump_curves_json(curves, fh, grid_spec=None):
    json.dump(curves_envelope(curves, grid_spec), fh, indent=2, sort_keys=True)
