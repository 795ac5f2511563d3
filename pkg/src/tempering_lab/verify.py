"""Property batteries run by ``tempering-lab verify``.

Each suite yields Check records; a suite passes when every check does.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import kernels as K
from . import rules as R
from . import tempering as T
from .harness import DEFAULT_SEED, MARGIN, RuleSpec, equivalence_sweep, regime_summary
from .instances import SeededRng
from .model import ErrorCounts, HypothesisClass, Instance, Posterior, empirical_loss, objective_eb, objective_pp
from .oracles import grid_min_t, simplex_search

SUITES = ("kernels", "tempering", "gibbs", "equivalence", "regimes")

ROUND_TRIP_LAMBDAS = (0.25, 0.5, 1.0, 1.5, 2.0, 4.0, 8.0, 32.0)


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    value: float
    tolerance: float
    passed: bool

    def to_dict(self):
        v = self.value if math.isfinite(self.value) else repr(self.value)
        return {"suite": self.suite, "check": self.name, "status": "PASS" if self.passed else "FAIL",
                "value": v, "tolerance": self.tolerance}


def _le(suite, name, value, tol):
    return Check(suite, name, float(value), tol, bool(value <= tol))


def lstar_grid(points=97):
    """Interior grid of (0, 1/2)."""
    return np.linspace(0.0, 0.5, points + 2)[1:-1]


# ----------------------------------------------------------------- kernels

def deriv_round_trip(lo=-60.0, hi=60.0, points=1201):
    """Worst |H'((H')^-1(b)) - b| over [lo, hi].

    Below b = -20 the inverse sits within 1e-6 of 1 and a double cannot hold
    1 - p accurately enough, so there the check runs on the mirrored point:
    (H')^-1(-b) = 1 - (H')^-1(b) and H'(1 - p) = -H'(p).
    """
    worst = 0.0
    for b in np.linspace(lo, hi, points):
        if b >= -20.0:
            got = K.binary_entropy_deriv(K.binary_entropy_deriv_inv(b))
        else:
            got = -K.binary_entropy_deriv(K.binary_entropy_deriv_inv(-b))
        worst = max(worst, abs(got - b))
    return worst


def kernels_suite(seed=DEFAULT_SEED):
    s = "kernels"
    p = np.linspace(0.0, 1.0, 10_001)
    h = np.array([K.binary_entropy(x) for x in p])
    hm = np.array([K.binary_entropy(1.0 - x) for x in p])
    # 1 - (1 - p) != p in floating point, hence the rounding-level tolerance
    yield _le(s, "entropy_symmetry", np.max(np.abs(h - hm)), 2e-15)
    t = np.linspace(0.0, 1.0, 101)
    conc = min(float(np.min(K.entropy_array(tt * p) - tt * h)) for tt in t)
    yield _le(s, "entropy_concavity_scaling", -conc, 1e-15)

    q = np.linspace(0.0, 1.0, 201)
    P, Q = np.meshgrid(q, q)
    kl = np.array([[K.binary_kl(a, b) for a, b in zip(ra, rb)] for ra, rb in zip(P, Q)])
    off = P != Q
    yield _le(s, "kl_nonnegative", -float(np.min(kl)), 0.0)
    yield _le(s, "kl_zero_on_diagonal", float(np.max(kl[~off])), 1e-12)
    low = float(np.min(kl[off]))
    yield Check(s, "kl_positive_off_diagonal", low, 1e-12, low > 1e-12)

    v = np.linspace(0.0, 1.0, 1001)
    rt = max(abs(K.binary_entropy(K.binary_entropy_inv_lower(x)) - x) for x in v)
    yield _le(s, "entropy_inverse_round_trip", rt, 1e-10)
    yield _le(s, "entropy_derivative_round_trip", deriv_round_trip(), 1e-9)
    rng = SeededRng(seed).stream("verify", "kernels")
    xs = rng.random(200)
    pure = all(K.binary_entropy(x) == K.binary_entropy(x) and K.binary_kl(x, 0.3) == K.binary_kl(x, 0.3)
               for x in xs)
    yield Check(s, "pure_functions", 0.0 if pure else 1.0, 0.0, pure)


# --------------------------------------------------------------- tempering

def tempering_round_trip():
    worst, below = 0.0, 0.0
    for lam in ROUND_TRIP_LAMBDAS:
        for x in lstar_grid():
            e = T.ell_lambda(lam, x)
            worst = max(worst, abs(T.t_lambda(lam, e) - K.binary_entropy(x)))
            below = max(below, x - e)
    return worst, below


def crossing_errors():
    return max(abs(T.tempering_crossing(lam) - K.binary_entropy_inv_lower(lam))
               for lam in ROUND_TRIP_LAMBDAS if lam < 1)


def random_t_pairs(rng, n=200):
    lam = np.exp(rng.uniform(math.log(0.1), math.log(50.0), n))
    q = rng.uniform(0.001, 1.0, n)
    return list(zip(lam.tolist(), q.tolist()))


def closed_form_vs_grid(pairs):
    worst = 0.0
    for lam, q in pairs:
        worst = max(worst, abs(T.t_lambda(lam, q) - grid_min_t(lam, q)))
        if lam > 1 and q <= 0.5:
            worst = max(worst, abs(T.u_lambda(lam, q) - grid_min_t(lam, q)))
    return worst


def lemma9_grid(points=50):
    lams = np.geomspace(1.0001, 1e4, points)
    qs = np.linspace(0.0, 0.5, points)
    return min(T.lemma9_gap(l, q) for l in lams for q in qs)


def tempering_suite(seed=DEFAULT_SEED):
    s = "tempering"
    worst, below = tempering_round_trip()
    yield _le(s, "round_trip_T_of_ell", worst, 1e-9)
    yield _le(s, "above_diagonal", below, 0.0)
    yield _le(s, "crossing_equals_entropy_inverse", crossing_errors(), 1e-6)
    bad = 0
    for lam in ROUND_TRIP_LAMBDAS:
        cross = K.binary_entropy_inv_lower(lam) if lam < 1 else None
        for x in lstar_grid():
            e = T.ell_lambda(lam, x)
            if cross is None:
                bad += e >= 0.5
            elif abs(x - cross) > 1e-9:
                bad += (e < 0.5) != (x < cross)
    yield _le(s, "tempered_region", bad, 0)
    rng = SeededRng(seed).stream("verify", "tempering")
    yield _le(s, "closed_form_vs_grid", closed_form_vs_grid(random_t_pairs(rng)), 1e-8)
    gap = lemma9_grid()
    yield Check(s, "lemma9_gap_positive", gap, 0.0, gap > 0)
    slack = max(abs(T.u_lambda(l, q) - K.binary_entropy(q)) - l / (l - 1) ** 2
                for l in (1.01, 1.5, 2, 10, 100, 1e4) for q in np.linspace(0.01, 0.5, 50))
    yield _le(s, "u_lambda_limit_bound", slack, 0.0)
    sched = T.LambdaSchedule.sqrt_optimal()
    decades = [10**j for j in range(1, 8)]
    vals = [sched(m) for m in decades]
    ratios = [v / (m / math.log2(m)) for v, m in zip(vals, decades)]
    ok = all(b > a for a, b in zip(vals, vals[1:])) and all(b < a for a, b in zip(ratios, ratios[1:]))
    yield Check(s, "sqrt_schedule_sublinear", ratios[-1], ratios[0], ok)


# ------------------------------------------------------------------- gibbs

def random_three_hypothesis(rng):
    """Random 3-hypothesis case with m <= 50, lambda in [0.2, 20] and L_S(prior) < 1/2."""
    while True:
        m = int(rng.integers(1, 51))
        lam = float(math.exp(rng.uniform(math.log(0.2), math.log(20.0))))
        hc = HypothesisClass(rng.dirichlet(np.ones(3)), rng.uniform(0.0, 0.5, 3))
        ec = ErrorCounts(m, rng.binomial(m, hc.pop_error))
        if float(hc.normalized_prior @ ec.counts) / m < 0.5:
            return ec, hc, lam


def gibbs_oracle_battery(seed=DEFAULT_SEED, cases=100, step=5e-4):
    """Worst TV / objective gaps of both rules against the simplex lattice search."""
    rng = SeededRng(seed).stream("verify", "gibbs")
    out = dict(eb_tv=0.0, eb_gap=-math.inf, pp_tv=0.0, pp_gap=-math.inf, residual=0.0, half=-math.inf)
    for _ in range(cases):
        ec, hc, lam = random_three_hypothesis(rng)
        q, d = R.empirical_bayes_posterior(ec, hc, lam)
        g, jg = simplex_search(ec, hc, lam, "eb", step)
        out["eb_tv"] = max(out["eb_tv"], R.posterior_tv(q, g))
        out["eb_gap"] = max(out["eb_gap"], objective_eb(q, ec, hc, lam) - jg)
        if not d.degenerate:
            out["residual"] = max(out["residual"], abs(K.binary_entropy_deriv(empirical_loss(q, ec)) - d.beta_star))
        out["half"] = max(out["half"], empirical_loss(q, ec) - 0.5)
        p = R.profile_posterior(ec, hc, lam)
        g, jg = simplex_search(ec, hc, lam, "pp", step)
        out["pp_tv"] = max(out["pp_tv"], R.posterior_tv(p, g))
        out["pp_gap"] = max(out["pp_gap"], objective_pp(p, ec, hc, lam) - jg)
    return out


def gibbs_suite(seed=DEFAULT_SEED):
    s = "gibbs"
    r = gibbs_oracle_battery(seed)
    yield _le(s, "eb_vs_grid_tv", r["eb_tv"], 2e-3)
    yield _le(s, "eb_vs_grid_objective_gap", r["eb_gap"], 1e-4)
    yield _le(s, "profile_vs_grid_tv", r["pp_tv"], 2e-3)
    yield _le(s, "profile_vs_grid_objective_gap", r["pp_gap"], 1e-4)
    yield _le(s, "self_consistency_residual", r["residual"], 1e-9)
    yield _le(s, "loss_at_most_half", r["half"], 1e-12)


# ------------------------------------------------------------- equivalence

def random_small_instance(rng, m_max=60):
    n = int(rng.integers(1, 6))
    m = int(rng.integers(1, m_max + 1))
    hc = HypothesisClass(rng.random(n) + 0.01, rng.uniform(0.0, 0.5, n))
    ec = ErrorCounts(m, rng.binomial(m, hc.pop_error))
    return ec, hc


def ladder_battery(seed=DEFAULT_SEED, cases=100):
    rng = SeededRng(seed).stream("verify", "ladder")
    out = {"plugin_tv_1": 0.0, "plugin_tv_2": 0.0, "profile_log2": 0.0, "beta_vs_quad": 0.0}
    unit = R.EtaPrior.custom(density=lambda eta: 1.0)
    for _ in range(cases):
        ec, hc = random_small_instance(rng)
        if float(hc.normalized_prior @ ec.counts) / ec.m >= 0.5:
            continue
        for lam, key in ((1.0, "plugin_tv_1"), (2.0, "plugin_tv_2")):
            q, _ = R.empirical_bayes_posterior(ec, hc, lam)
            prior = R.EtaPrior.uniform() if lam == 1.0 else R.EtaPrior.p_lambda(lam, ec.m)
            eta = R.eta_hat_marginal(ec, hc, prior).eta
            out[key] = max(out[key], R.posterior_tv(R.plugin_posterior(ec, hc, eta), q))
            a = R.profile_log2_weights(ec, hc, lam)
            b = R.profile_by_eta_log2_weights(ec, hc, prior)
            out["profile_log2"] = max(out["profile_log2"], float(np.max(np.abs(a - b))))
        for k in set(ec.counts.tolist()):
            exact = R.log_eta_integral(k, ec.m, R.EtaPrior.uniform())
            quad = R.log_eta_integral_quad(k, ec.m, unit)
            out["beta_vs_quad"] = max(out["beta_vs_quad"], abs(math.expm1(quad - exact)))
    return out


def five_hypothesis_instance():
    pop = np.array([0.20, 0.22, 0.24, 0.26, 0.28])
    return Instance(HypothesisClass(np.ones(5), pop), Posterior.point_mass(5, 0), 0.20)


EQUIVALENCE_GRID = (100, 1000, 10000)


def equivalence_trends(seed=DEFAULT_SEED, trials=200, threads=1):
    inst = five_hypothesis_instance()
    a = equivalence_sweep(inst, EQUIVALENCE_GRID, (RuleSpec("bayes", "uniform"), RuleSpec("profile")),
                          lam=1.0, trials=trials, seed=seed, threads=threads, name="bayes_uniform_vs_profile_1")
    b = equivalence_sweep(inst, EQUIVALENCE_GRID, (RuleSpec("bayes", "p_lambda"), RuleSpec("profile")),
                          lam=2.0, trials=trials, seed=seed, threads=threads, name="bayes_plambda_vs_profile_2")
    return a, b


def equivalence_suite(seed=DEFAULT_SEED):
    s = "equivalence"
    r = ladder_battery(seed)
    yield _le(s, "plugin_vs_eb_lambda1_tv", r["plugin_tv_1"], 1e-8)
    yield _le(s, "plugin_vs_eb_lambda2_tv", r["plugin_tv_2"], 1e-8)
    yield _le(s, "profile_max_over_eta_log2", r["profile_log2"], 1e-10)
    yield _le(s, "beta_identity_vs_quadrature", r["beta_vs_quad"], 1e-8)
    for rep in equivalence_trends(seed):
        tv = [row["mean_tv"] for row in rep.rows]
        yield Check(s, f"tv_decreasing[{rep.meta['config']['name']}]", tv[-1], tv[0],
                    rep.meta["strictly_decreasing"])


# ----------------------------------------------------------------- regimes

def regimes_suite(seed=DEFAULT_SEED):
    rep = regime_summary(seed=seed)
    for row in rep.rows:
        yield Check("regimes", f"{row['case']}:{row['tag']}", row["terminal_error"], MARGIN,
                    bool(row["match"]))


_SUITE_FNS = {"kernels": kernels_suite, "tempering": tempering_suite, "gibbs": gibbs_suite,
              "equivalence": equivalence_suite, "regimes": regimes_suite}


def run_suite(name, seed=DEFAULT_SEED):
    if name not in _SUITE_FNS:
        raise KeyError(name)
    return list(_SUITE_FNS[name](seed))
