"""Learning rules over a finite class: MDL, empirical-Bayes Gibbs, profile, Bayes.

Every rule depends on the data only through (prior_i, k_i), and all except MDL
depend on it only through the prior mass sitting on each distinct count.
The solvers therefore work on count groups, which keeps a sweep over a
million-hypothesis class at O(N) per dataset.
"""
import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate
from scipy.optimize import brentq, minimize_scalar
from scipy.special import betaln, expit, gammaln, log_expit, logsumexp

from . import kernels as K
from .errors import ConvergenceError, DomainError, QuadratureError, ShapeError
from .model import ErrorCounts, HypothesisClass, Posterior, _same_size

LN2 = K.LN2


def _check_rule_lam(lam, allow_zero=False):
    lam = float(lam)
    ok = lam >= 0 if allow_zero else lam > 0
    if not (ok and math.isfinite(lam)):
        raise DomainError(f"lambda must be finite and {'>=' if allow_zero else '>'} 0, got {lam!r}")
    return lam


def _check_pair(ec, hc):
    if not isinstance(ec, ErrorCounts) or not isinstance(hc, HypothesisClass):
        raise TypeError("expected (ErrorCounts, HypothesisClass)")
    _same_size(ec, hc)


# ---------------------------------------------------------------- MDL

def mdl_select(ec, hc, lam, form="entropy"):
    """Point mass on argmin_h  codelength(k_h) + lam * log2(1/prior(h)); first index wins ties."""
    _check_pair(ec, hc)
    lam = _check_rule_lam(lam, allow_zero=True)
    if form == "entropy":
        data = ec.m * K.entropy_array(ec.rates)
    elif form == "exact_binomial":
        k = ec.counts
        data = (gammaln(ec.m + 1) - gammaln(k + 1) - gammaln(ec.m - k + 1)) / LN2
    else:
        raise DomainError(f"unknown MDL form {form!r}")
    score = data - lam * hc.log2_prior if lam > 0 else data
    return Posterior.point_mass(len(hc), int(np.argmin(score)), "mdl_point_mass")


# ------------------------------------------------------ count grouping

@dataclass(frozen=True)
class _Groups:
    m: int
    counts: np.ndarray  # distinct counts present, ascending
    log_mass: np.ndarray  # natural log of normalized prior mass per count


def _group(k, m, prior):
    mass = np.bincount(k, weights=prior, minlength=m + 1)
    present = np.flatnonzero(mass > 0)
    with np.errstate(divide="ignore"):
        log_mass = np.log(mass[present]) - math.log(mass[present].sum())
    return _Groups(m, present.astype(float), log_mass)


def _tilted(g, u):
    """Log masses of the count groups under the tilt exp(-u * count), normalized."""
    a = g.log_mass - u * g.counts
    return a - logsumexp(a)


def _group_loss(g, logp):
    p = np.exp(logp)
    return float(p @ g.counts) / g.m


def _group_kl(g, logp):
    p = np.exp(logp)
    mask = p > 0
    return float(p[mask] @ (logp[mask] - g.log_mass[mask])) / LN2


# ------------------------------------------------ empirical-Bayes Gibbs

@dataclass(frozen=True)
class FixedPointDiagnostics:
    beta_star: float
    iterations: int
    residual: float
    degenerate: bool
    negated: bool = False
    objective: float = float("nan")
    roots: int = 0

    def to_dict(self):
        d = asdict(self)
        return {k: (repr(v) if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


SCAN_RATIO = 1.1
SCAN_FLOOR = 1e-8


def beta_cap(m, lam):
    """Largest inverse temperature scanned before declaring the crossing infinite."""
    return 65536.0 * max(1.0, lam, 2.0 * m / lam)


def _log_gap(g, lam, beta):
    # log (H')^{-1}(beta) - log L_S(Q_beta); positive while the tilt is too weak
    logp = _tilted(g, beta * LN2 / lam)
    pos = g.counts > 0
    if not pos.any():
        return math.inf
    log_loss = logsumexp(logp[pos] + np.log(g.counts[pos])) - math.log(g.m)
    return float(log_expit(-beta * LN2)) - float(log_loss)


def _log_gap_many(g, lam, betas):
    pos = g.counts > 0
    if not pos.any():
        return np.full(len(betas), math.inf)
    a = g.log_mass[None, :] - (betas * LN2 / lam)[:, None] * g.counts[None, :]
    lz = logsumexp(a, axis=1)
    log_loss = logsumexp(a[:, pos] + np.log(g.counts[pos])[None, :], axis=1) - lz - math.log(g.m)
    return log_expit(-betas * LN2) - log_loss


def _eb_candidate(g, lam, beta):
    logp = _tilted(g, beta * LN2 / lam)
    loss = _group_loss(g, logp)
    return g.m * K._h_small(min(loss, 1.0 - loss)) + lam * _group_kl(g, logp), loss


def empirical_bayes_posterior(ec, hc, lam, strict=False):
    """Minimizer of m H(L_S(Q)) + lam KL(Q || prior) over Q with L_S(Q) <= 1/2.

    The minimizer is Q_b(h) ~ prior(h) 2^(-b k_h / lam) with b = H'(L_S(Q_b)).
    Along this family dJ/db = m L'(b) (H'(L_b) - b), so the candidates are the
    self-consistent roots plus, when zero-error hypotheses exist, the b -> inf
    limit (prior restricted to the empirical minimizers). All roots are found
    by a geometric scan with bisection and the one with the smallest objective
    is returned.

    When L_S(prior) > 1/2 the rule is applied to the negated predictors
    (counts m - k) and the result is flagged; ``strict=True`` raises instead.
    """
    _check_pair(ec, hc)
    lam = _check_rule_lam(lam)
    m = ec.m
    k = ec.counts
    ls_prior = float(hc.normalized_prior @ k) / m
    negated = False
    if ls_prior >= 0.5 and strict:
        raise DomainError(f"L_S(prior) = {ls_prior:.6g} >= 1/2; the rule needs a better-than-chance prior")
    if ls_prior > 0.5:
        k = m - k
        negated = True
    g = _group(k, m, hc.normalized_prior)

    cap = beta_cap(m, lam)
    n = int(math.ceil(math.log(cap / SCAN_FLOOR) / math.log(SCAN_RATIO))) + 1
    betas = np.concatenate(([0.0], np.geomspace(SCAN_FLOOR, cap, n)))
    s = _log_gap_many(g, lam, betas)

    roots = []
    iterations = 0
    if s[0] <= 1e-12:
        # L_S(prior) = 1/2 up to rounding: the prior itself is self-consistent
        roots.append(0.0)
    for i in range(len(betas) - 1):
        a, b = s[i], s[i + 1]
        if i == 0 and a <= 1e-12:
            continue
        if a == 0.0:
            roots.append(float(betas[i]))
        elif np.sign(a) * np.sign(b) < 0 and math.isfinite(a) and math.isfinite(b):
            r, info = brentq(lambda x: _log_gap(g, lam, x), betas[i], betas[i + 1],
                             xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=K.BISECT_MAXITER,
                             full_output=True)
            iterations += info.iterations
            roots.append(float(r))

    candidates = []
    for r in roots:
        J, loss = _eb_candidate(g, lam, r)
        candidates.append((J, r, loss))
    has_interpolator = g.counts[0] == 0
    if s[-1] > 0:
        if not has_interpolator:
            raise ConvergenceError("no finite self-consistent temperature below the scan cap",
                                   where={"beta_cap": cap})
        # ERM-restricted limit: all mass on the zero-count group
        J_inf = lam * (-g.log_mass[0] / LN2)
        candidates.append((J_inf, math.inf, 0.0))
    if not candidates:
        raise ConvergenceError("self-consistent temperature not found", where={"beta_cap": cap})

    J, beta, loss = min(candidates, key=lambda c: (c[0], c[1]))
    if math.isinf(beta):
        w = np.where(k == 0, hc.normalized_prior, 0.0)
        q = Posterior(w / w.sum(), "empirical_bayes", negated)
        diag = FixedPointDiagnostics(math.inf, iterations, 0.0, True, negated, J, len(roots))
        return q, diag
    log2w = hc.log2_prior - beta * k / lam
    q = Posterior.from_log2(log2w, "empirical_bayes", negated)
    ls = float(q.weights @ k) / m
    residual = abs(K.binary_entropy_deriv(ls) - beta) if 0.0 < ls < 1.0 else math.inf
    diag = FixedPointDiagnostics(beta, iterations, residual, False, negated, J, len(roots))
    return q, diag


# ------------------------------------------------------------- profile

def profile_log2_weights(ec, hc, lam):
    """Normalized log2 weights of the profile posterior."""
    _check_pair(ec, hc)
    lam = _check_rule_lam(lam)
    lw = hc.log2_prior - (ec.m / lam) * K.entropy_array(ec.rates)
    return lw - logsumexp(lw * LN2) / LN2


def profile_posterior(ec, hc, lam):
    """prior(h) 2^(-(m/lam) H(k_h/m)), normalized; the exact minimizer of the profile objective."""
    return Posterior.from_log2(profile_log2_weights(ec, hc, lam), "profile")


# ------------------------------------------------------------ eta priors

@dataclass(frozen=True)
class EtaPrior:
    """Prior on the noise level eta of the label channel.

    uniform; p_lambda with density ((1-eta)^lam + eta^lam)^(-m/lam); custom with
    a positive log-density callable on (0, 1).
    """

    kind: str
    lam: float | None = None
    m: int | None = None
    log_density: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "p_lambda", "custom"):
            raise DomainError(f"unknown eta prior {self.kind!r}")
        if self.kind == "p_lambda":
            _check_rule_lam(self.lam)
            if self.m is None or int(self.m) < 1:
                raise DomainError("p_lambda prior needs m >= 1")
        if self.kind == "custom" and not callable(self.log_density):
            raise DomainError("custom prior needs a log-density callable")

    @classmethod
    def uniform(cls):
        return cls("uniform")

    @classmethod
    def p_lambda(cls, lam, m):
        return cls("p_lambda", float(lam), int(m))

    @classmethod
    def custom(cls, density=None, grid=None, values=None):
        """From a density callable, or from a table interpolated linearly in log space."""
        if density is not None:
            def logd(eta):
                v = density(eta)
                if not v > 0:
                    raise DomainError(f"density must be positive, got {v!r} at eta={eta}")
                return math.log(v)
            return cls("custom", log_density=logd)
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise ShapeError("tabulated density needs matching grid and values")
        if np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > 1 or np.any(values <= 0):
            raise DomainError("tabulated density needs an increasing grid in [0, 1] and positive values")
        logv = np.log(values)
        return cls("custom", log_density=lambda eta: float(np.interp(eta, grid, logv)))

    @property
    def is_uniform(self):
        return self.kind == "uniform" or (self.kind == "p_lambda" and self.lam == 1.0)

    def log_pdf(self, eta):
        """Natural-log (unnormalized) density."""
        if self.is_uniform:
            return 0.0
        if self.kind == "p_lambda":
            a = self.lam * math.log1p(-eta) if eta < 1 else -math.inf
            b = self.lam * math.log(eta) if eta > 0 else -math.inf
            return -(self.m / self.lam) * float(np.logaddexp(a, b))
        return self.log_density(eta)


# ------------------------------------------------------------- quadrature

QUAD_RTOL = 1e-8
T_RANGE = 40.0


def _log_integrand_t(k, m, prior):
    if prior.kind == "p_lambda":
        lam, mm = prior.lam, prior.m

        def f(t):
            lo, l1 = log_expit(t), log_expit(-t)
            return (k + 1) * lo + (m - k + 1) * l1 - (mm / lam) * np.logaddexp(lam * l1, lam * lo)
    else:
        def f(t):
            lo, l1 = log_expit(t), log_expit(-t)
            return (k + 1) * lo + (m - k + 1) * l1 + prior.log_density(float(np.exp(lo)))
    return f


def log_eta_integral_quad(k, m, prior):
    """ln of int_0^1 eta^k (1-eta)^(m-k) p(eta) d eta by adaptive quadrature in t = logit(eta)."""
    f = _log_integrand_t(k, m, prior)
    res = minimize_scalar(lambda t: -f(t), bounds=(-T_RANGE, T_RANGE), method="bounded",
                          options={"xatol": 1e-9})
    t0 = float(res.x)
    fmax = float(f(t0))
    pts = [t0] if -T_RANGE < t0 < T_RANGE else None
    val, err, info = integrate.quad(lambda t: math.exp(f(t) - fmax), -T_RANGE, T_RANGE,
                                    points=pts, epsabs=0.0, epsrel=QUAD_RTOL * 1e-2, limit=500,
                                    full_output=1)[:3]
    if not (val > 0 and err <= QUAD_RTOL * val):
        raise QuadratureError(f"quadrature for k={k}, m={m} reached relative error {err / max(val, 1e-300):.2e}")
    return math.log(val) + fmax


@lru_cache(maxsize=200_000)
def _log_eta_integral_cached(k, m, kind, lam, mm):
    if kind == "uniform":
        return float(betaln(k + 1, m - k + 1))
    return log_eta_integral_quad(k, m, EtaPrior(kind, lam, mm))


def log_eta_integral(k, m, prior):
    """ln int eta^k (1-eta)^(m-k) p(eta) d eta; exact Beta function for the uniform prior."""
    if prior.is_uniform:
        return _log_eta_integral_cached(int(k), int(m), "uniform", None, None)
    if prior.kind == "p_lambda":
        return _log_eta_integral_cached(int(k), int(m), "p_lambda", prior.lam, prior.m)
    return log_eta_integral_quad(int(k), int(m), prior)


def bayes_posterior(ec, hc, eta_prior):
    """prior(h) * int eta^k_h (1-eta)^(m-k_h) P(eta) d eta, normalized."""
    _check_pair(ec, hc)
    present = np.unique(ec.counts)
    table = np.empty(ec.m + 1)
    for idx, c in enumerate(present):
        try:
            table[c] = log_eta_integral(int(c), ec.m, eta_prior)
        except QuadratureError as exc:
            first = int(np.flatnonzero(ec.counts == c)[0])
            raise QuadratureError(str(exc), index=first) from exc
    lw = hc.log2_prior + table[ec.counts] / LN2
    return Posterior.from_log2(lw, "bayes")


# ------------------------------------------------------------ eta estimators

class EtaEstimate(NamedTuple):
    eta: float
    boundary: bool = False
    iterations: int = 0
    residual: float = 0.0


def eta_hat_profile(k, m, eta_prior):
    """Per-hypothesis maximizer of P(S | eta, h) P(eta); k/m for the uniform prior."""
    k, m = int(k), int(m)
    if m < 1 or not 0 <= k <= m:
        raise DomainError(f"need 0 <= k <= m and m >= 1, got k={k}, m={m}")
    if k == 0 or k == m:
        return EtaEstimate(float(k == m), True)
    if eta_prior.is_uniform:
        return EtaEstimate(k / m)
    if eta_prior.kind == "p_lambda" and eta_prior.m == m:
        # (1-eta)/eta = ((1-k/m)/(k/m))^(1/lam)
        return EtaEstimate(float(K.sigmoid_e((math.log(k) - math.log(m - k)) / eta_prior.lam)))
    f = _log_integrand_t(k, m, eta_prior)
    # f carries the d eta / d t Jacobian; strip it to maximize over eta itself
    res = minimize_scalar(lambda t: -(f(t) - log_expit(t) - log_expit(-t)),
                          bounds=(-T_RANGE, T_RANGE), method="bounded", options={"xatol": 1e-12})
    return EtaEstimate(float(K.sigmoid_e(res.x)))


def _log_lik_eta(g, eta):
    """ln P(S | eta) = ln sum_c mass_c eta^c (1-eta)^(m-c)."""
    if eta == 0.0:
        return float(g.log_mass[0]) if g.counts[0] == 0 else -math.inf
    return float(logsumexp(g.log_mass + g.counts * math.log(eta) + (g.m - g.counts) * math.log1p(-eta)))


def _loss_at_eta(g, eta):
    if eta <= 0.0:
        return 0.0
    u = math.log1p(-eta) - math.log(eta)  # tilt per error, in nats
    return _group_loss(g, _tilted(g, u))


def _eta_map_many(g, etas, lam):
    etas = np.asarray(etas, dtype=float)
    u = np.log1p(-etas) - np.log(etas)
    a = g.log_mass[None, :] - u[:, None] * g.counts[None, :]
    loss = np.exp(a - logsumexp(a, axis=1)[:, None]) @ g.counts / g.m
    if lam == 1.0:
        return loss
    with np.errstate(divide="ignore"):
        return expit((np.log(loss) - np.log1p(-loss)) / lam)


def _eta_map(g, eta, lam):
    loss = _loss_at_eta(g, eta)
    if loss <= 0.0:
        return 0.0
    if lam == 1.0:
        return loss
    return float(K.sigmoid_e(K.logit_e(loss) / lam))


def eta_hat_marginal(ec, hc, eta_prior, max_iter=10_000, damping=1.0):
    """argmax over eta in [0, 1/2] of P(S | eta) P(eta).

    Stationary points satisfy eta = s(L_S(P(h | S, eta))) with s the identity for the
    uniform prior and s(L) = 1/(1 + ((1-L)/L)^(1/lam)) for p_lambda. The map is
    iterated from eta = 1/2, polished by bisection, and compared against every
    other stationary point found on a logit grid.
    """
    _check_pair(ec, hc)
    if eta_prior.kind == "custom" or (eta_prior.kind == "p_lambda" and eta_prior.m != ec.m):
        return _eta_hat_marginal_direct(ec, hc, eta_prior)
    lam = 1.0 if eta_prior.is_uniform else eta_prior.lam
    g = _group(ec.counts, ec.m, hc.normalized_prior)

    def score(eta):
        return _log_lik_eta(g, eta) + (eta_prior.log_pdf(eta) if not eta_prior.is_uniform else 0.0)

    def psi(eta):
        return _eta_map(g, eta, lam) - eta

    eta, it = 0.5, 0
    while it < max_iter:
        nxt = eta + damping * (_eta_map(g, eta, lam) - eta)
        it += 1
        if abs(nxt - eta) <= 1e-15:
            eta = nxt
            break
        eta = nxt
    cands = {eta} if it < max_iter else set()

    grid = expit(np.concatenate(([0.0], np.linspace(-0.01, -T_RANGE, 4000))))
    vals = _eta_map_many(g, grid, lam) - grid
    for i in range(len(grid) - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            cands.add(float(grid[i]))
        elif a * b < 0:
            cands.add(brentq(psi, grid[i + 1], grid[i], xtol=1e-300, rtol=4 * np.finfo(float).eps))
    if g.counts[0] == 0:
        cands.add(0.0)
    # polish the iterate itself to full precision
    polished = set()
    for c in cands:
        if 0.0 < c < 0.5 and abs(psi(c)) > 0:
            lo, hi = c * (1 - 1e-9), min(c * (1 + 1e-9), 0.5)
            if psi(lo) * psi(hi) < 0:
                c = brentq(psi, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
        polished.add(c)
    if not polished:
        raise ConvergenceError("no stationary noise level found", where={"iterations": it})
    best = max(sorted(polished), key=score)
    return EtaEstimate(best, best == 0.0, it, abs(psi(best)) if best > 0 else 0.0)


def _eta_hat_marginal_direct(ec, hc, eta_prior):
    g = _group(ec.counts, ec.m, hc.normalized_prior)

    def neg(t):
        eta = float(K.sigmoid_e(t))
        return -(_log_lik_eta(g, eta) + eta_prior.log_pdf(eta))

    ts = np.linspace(-T_RANGE, 0.0, 801)
    i = int(np.argmin([neg(t) for t in ts]))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, len(ts) - 1)]
    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return EtaEstimate(float(K.sigmoid_e(res.x)), False, int(res.nfev))


def plugin_posterior(ec, hc, eta):
    """P(h | S, eta) ~ prior(h) eta^k (1-eta)^(m-k)."""
    _check_pair(ec, hc)
    eta = K.check_prob(eta, "eta")
    k, m = ec.counts, ec.m
    if eta == 0.0 or eta == 1.0:
        hit = k == (0 if eta == 0.0 else m)
        if not hit.any():
            raise DomainError(f"no hypothesis has positive likelihood at eta={eta}")
        w = np.where(hit, hc.normalized_prior, 0.0)
        return Posterior(w / w.sum(), "bayes")
    lw = hc.log2_prior + k * math.log2(eta) + (m - k) * math.log2(1.0 - eta)
    return Posterior.from_log2(lw, "bayes")


def profile_by_eta_log2_weights(ec, hc, eta_prior):
    """Normalized log2 of prior(h) max_eta P(S | eta, h) P(eta), built from eta_hat_profile."""
    _check_pair(ec, hc)
    m = ec.m
    out = np.empty(len(hc))
    cache = {}
    for i, k in enumerate(ec.counts):
        k = int(k)
        if k not in cache:
            eta = eta_hat_profile(k, m, eta_prior).eta
            ll = 0.0
            if k:
                ll += k * math.log(eta)
            if m - k:
                ll += (m - k) * math.log1p(-eta)
            cache[k] = (ll + eta_prior.log_pdf(eta)) / LN2
        out[i] = cache[k]
    lw = hc.log2_prior + out
    return lw - logsumexp(lw * LN2) / LN2


def posterior_tv(a, b):
    """Half the L1 distance between two weight vectors."""
    _same_size(a, b)
    return 0.5 * float(np.abs(a.weights - b.weights).sum())


# ------------------------------------------------------------------ dumps

def posterior_csv(q, ec, hc, diagnostics=None):
    """CSV `index,prior,count,weight,log2_weight` with a trailing JSON diagnostics line."""
    _check_pair(ec, hc)
    _same_size(q, hc)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "prior", "count", "weight", "log2_weight"])
    with np.errstate(divide="ignore"):
        l2 = np.log2(q.weights)
    for i in range(len(q)):
        w.writerow([i, format(hc.normalized_prior[i], ".12g"), int(ec.counts[i]),
                    format(q.weights[i], ".12g"), format(l2[i], ".12g")])
    footer = {"provenance": q.provenance, "negated": q.negated}
    if diagnostics is not None:
        footer["diagnostics"] = diagnostics.to_dict() if hasattr(diagnostics, "to_dict") else diagnostics
    buf.write(json.dumps(footer, sort_keys=True) + "\n")
    return buf.getvalue()
