"""Monte Carlo sweeps, bound audits, equivalence trajectories and regime tags.

Every trial draws its data from its own stream keyed by (m, trial), so the
numbers do not depend on how trials are spread over worker threads; per-trial
results are collected in trial order before any averaging.
"""
import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from . import kernels as K
from . import rules as R
from .errors import ConfigError, ConvergenceError, DomainError
from .instances import (LowerBoundSpec, SeededRng, build_lb_instance, mixture_error,
                        qstar_formula_pacbayes, qstar_formula_profile, sample_error_counts)
from .model import Instance, kl_to_prior, load_instance, population_loss
from .tempering import LambdaSchedule, ell_lambda, t_lambda

DEFAULT_SEED = 0x5EEDBAC2
THREADS_ENV = "TEMPERING_LAB_THREADS"
MARGIN = 0.02
UNDERFIT_RATIO = 10.0

RULE_NAMES = ("mdl", "empirical_bayes", "profile", "bayes")
OUTPUTS = ("mean_pop_error", "mean_mass_h0", "bound_violation_rate", "mean_tv")

_RULE_SCHEMA = {
    "type": "object",
    "required": ["name"],
    "properties": {
        "name": {"enum": list(RULE_NAMES)},
        "eta_prior": {"enum": ["uniform", "p_lambda"]},
        "form": {"enum": ["entropy", "exact_binomial"]},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["instance", "rule", "schedule", "m_grid", "trials"],
    "properties": {
        "instance": {
            "type": "object",
            "oneOf": [
                {"required": ["spec"]},
                {"required": ["file"]},
                {"required": ["prior", "pop_error", "qstar", "lstar"]},
            ],
            "properties": {
                "spec": {
                    "type": "object",
                    "required": ["lstar", "lprime", "regime"],
                    "properties": {
                        "lstar": {"type": "number", "minimum": 0, "maximum": 1},
                        "lprime": {"type": "number", "minimum": 0, "maximum": 1},
                        "regime": {"enum": ["sub_one", "super_one", "two_hypothesis", "fixed"]},
                        "lam": {"type": "number", "exclusiveMinimum": 0},
                        "truncation": {"type": ["integer", "null"], "minimum": 1},
                        "check_premise": {"type": "boolean"},
                    },
                    "additionalProperties": False,
                },
                "file": {"type": "string"},
                "prior": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "pop_error": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "qstar": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "lstar": {"type": "number"},
            },
        },
        "rule": _RULE_SCHEMA,
        "compare_rule": _RULE_SCHEMA,
        "schedule": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "power", "sqrt_optimal", "linear", "inverse_log"]},
                "value": {"type": "number", "minimum": 0},
                "c": {"type": "number", "exclusiveMinimum": 0},
                "alpha": {"type": "number"},
                "kl_budget": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "m_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "trials": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "outputs": {"type": "array", "items": {"enum": list(OUTPUTS)}},
        "name": {"type": "string"},
    },
    "additionalProperties": False,
}


def resolve_threads(threads=None):
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    return int(threads)


def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ------------------------------------------------------------------ rules

@dataclass(frozen=True)
class RuleSpec:
    name: str
    eta_prior: str = "uniform"
    form: str = "entropy"
    lam: float | None = None  # fixed lambda; otherwise taken from the schedule

    def __post_init__(self):
        if self.name not in RULE_NAMES:
            raise ConfigError(f"unknown rule {self.name!r}")
        if self.eta_prior not in ("uniform", "p_lambda"):
            raise ConfigError(f"unknown eta prior {self.eta_prior!r}")

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d.get("eta_prior", "uniform"), d.get("form", "entropy"), d.get("lam"))

    def to_dict(self):
        d = {"name": self.name}
        if self.name == "bayes":
            d["eta_prior"] = self.eta_prior
        if self.name == "mdl":
            d["form"] = self.form
        if self.lam is not None:
            d["lam"] = self.lam
        return d

    def label(self):
        if self.name == "bayes":
            return f"bayes[{self.eta_prior}]"
        return self.name

    def apply(self, ec, hc, lam):
        lam = self.lam if self.lam is not None else lam
        if self.name == "mdl":
            return R.mdl_select(ec, hc, lam, self.form)
        if self.name == "empirical_bayes":
            return R.empirical_bayes_posterior(ec, hc, lam)[0]
        if self.name == "profile":
            return R.profile_posterior(ec, hc, lam)
        prior = R.EtaPrior.uniform() if self.eta_prior == "uniform" else R.EtaPrior.p_lambda(lam, ec.m)
        return R.bayes_posterior(ec, hc, prior)


# ----------------------------------------------------------------- config

@dataclass(frozen=True)
class ExperimentConfig:
    instance: dict
    rule: RuleSpec
    schedule: LambdaSchedule
    m_grid: tuple
    trials: int
    master_seed: int = DEFAULT_SEED
    outputs: tuple = ("mean_pop_error", "mean_mass_h0")
    compare_rule: RuleSpec | None = None
    delta: float = 0.05
    name: str = "sweep"

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.m_grid or any(b <= a for a, b in zip(self.m_grid, self.m_grid[1:])):
            raise ConfigError("m_grid must be non-empty and strictly increasing")
        if any(m < 1 for m in self.m_grid):
            raise ConfigError("every m must be >= 1")
        if "mean_tv" in self.outputs and self.compare_rule is None:
            raise ConfigError("mean_tv needs a compare_rule")

    @classmethod
    def from_dict(cls, d, base_dir=None):
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {path}: {exc.message}") from None
        inst = dict(d["instance"])
        if "file" in inst and base_dir is not None and not os.path.isabs(inst["file"]):
            inst["file"] = os.path.join(base_dir, inst["file"])
        try:
            sched = LambdaSchedule.from_dict(d["schedule"])
        except (DomainError, TypeError) as exc:
            raise ConfigError(f"schedule invalid: {exc}") from None
        return cls(
            instance=inst,
            rule=RuleSpec.from_dict(d["rule"]),
            schedule=sched,
            m_grid=tuple(int(m) for m in d["m_grid"]),
            trials=int(d["trials"]),
            master_seed=int(d.get("master_seed", DEFAULT_SEED)),
            outputs=tuple(d.get("outputs", ("mean_pop_error", "mean_mass_h0"))),
            compare_rule=RuleSpec.from_dict(d["compare_rule"]) if "compare_rule" in d else None,
            delta=float(d.get("delta", 0.05)),
            name=d.get("name", "sweep"),
        )

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_dict(d, base_dir=os.path.dirname(os.path.abspath(path)))

    def to_dict(self):
        d = {
            "name": self.name,
            "instance": self.instance,
            "rule": self.rule.to_dict(),
            "schedule": self.schedule.to_dict(),
            "m_grid": list(self.m_grid),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "outputs": list(self.outputs),
            "delta": self.delta,
        }
        if self.compare_rule is not None:
            d["compare_rule"] = self.compare_rule.to_dict()
        return d

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def materialize(self, m, lam):
        """The instance used at sample size m (lower-bound classes grow with m)."""
        inst = self.instance
        if "spec" in inst:
            s = dict(inst["spec"])
            s.setdefault("lam", lam if lam > 0 else 1.0)
            return build_lb_instance(LowerBoundSpec(m=m, **s))
        if "file" in inst:
            return load_instance(inst["file"])
        return Instance.from_dict(inst)


# ----------------------------------------------------------------- report

@dataclass
class ExperimentReport:
    """Per-m rows plus provenance. ``csv_columns`` fixes what lands in the CSV."""

    kind: str
    rows: list
    csv_columns: tuple
    config_hash: str
    seed: int
    meta: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_columns)
        for row in self.rows:
            w.writerow([_fmt(row.get(c)) for c in self.csv_columns])
        return buf.getvalue()

    def csv_sha256(self):
        return hashlib.sha256(self.to_csv().encode()).hexdigest()

    def summary(self):
        return {
            "kind": self.kind,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "csv_sha256": self.csv_sha256(),
            "rows": [{k: _jsonable(v) for k, v in r.items()} for r in self.rows],
            **{k: _jsonable(v) for k, v in self.meta.items()},
        }

    def write(self, out_dir, stem=None):
        os.makedirs(out_dir, exist_ok=True)
        stem = stem or self.kind
        csv_path = os.path.join(out_dir, f"{stem}.csv")
        json_path = os.path.join(out_dir, f"{stem}.json")
        with open(csv_path, "w") as fh:
            fh.write(self.to_csv())
        with open(json_path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return csv_path, json_path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return math.fsum(x) / x.size, se


# ------------------------------------------------------------------ sweep

def audit_rhs(lstar_q, kl_q, lam, m, delta):
    """Right-hand side of the entropy-transformed PAC-Bayes inequality, in bits."""
    d2 = delta / 2.0
    return (K.binary_entropy(lstar_q) + lam * math.log2((m + 1) / d2) / m + lam * kl_q / m
            + math.sqrt(2.0 * math.log2(m) ** 2 * math.log2(1.0 / d2) / m))


def _trial_fn(cfg, inst, m, lam, rng, audit):
    hc = inst.hclass
    want_tv = "mean_tv" in cfg.outputs
    if audit is not None:
        rhs = audit

    def run(trial):
        try:
            ec = sample_error_counts(inst, m, rng.stream(m, trial, "data"))
            q = cfg.rule.apply(ec, hc, lam)
            out = {"pop": population_loss(q, hc), "mass": float(q.weights[0])}
            if want_tv:
                out["tv"] = R.posterior_tv(q, cfg.compare_rule.apply(ec, hc, lam))
            if audit is not None:
                out["lhs"] = t_lambda(lam, out["pop"])
                out["viol"] = out["lhs"] > rhs
            return out
        except (ConvergenceError, DomainError, ValueError) as exc:
            raise ConvergenceError(f"trial failed: {exc}", where={"m": m, "trial": trial}) from exc
    return run


def run_sweep(cfg, threads=1, audit=False):
    """Monte Carlo estimate of E_S[L_D(Q(S))] and the h0 mass for every m in the grid."""
    rng = SeededRng(cfg.master_seed)
    rows, runtimes = [], {}
    columns = ["m", "lambda", "trials", "mean_pop_error", "std_error", "mean_mass_h0", "std_error_mass"]
    if "mean_tv" in cfg.outputs:
        columns += ["mean_tv", "std_error_tv"]
    if audit:
        columns += ["rhs", "mean_lhs", "max_lhs", "violations", "bound_violation_rate"]
    for m in cfg.m_grid:
        t0 = time.perf_counter()
        lam = float(cfg.schedule(m))
        inst = cfg.materialize(m, lam)
        rhs = None
        if audit:
            if lam <= 0:
                raise DomainError("the bound audit needs lambda > 0")
            rhs = audit_rhs(population_loss(inst.qstar, inst.hclass),
                            kl_to_prior(inst.qstar, inst.hclass), lam, m, cfg.delta)
        res = _map(_trial_fn(cfg, inst, m, lam, rng, rhs), list(range(cfg.trials)), threads)
        pop, se = _mean_se([r["pop"] for r in res])
        mass, se_mass = _mean_se([r["mass"] for r in res])
        row = {"m": m, "lambda": lam, "trials": cfg.trials, "mean_pop_error": pop, "std_error": se,
               "mean_mass_h0": mass, "std_error_mass": se_mass, "class_size": len(inst.hclass)}
        if "mean_tv" in cfg.outputs:
            row["mean_tv"], row["std_error_tv"] = _mean_se([r["tv"] for r in res])
        if audit:
            lhs = np.array([r["lhs"] for r in res])
            v = int(sum(r["viol"] for r in res))
            row.update(rhs=rhs, mean_lhs=float(lhs.mean()), max_lhs=float(lhs.max()), violations=v,
                       bound_violation_rate=v / cfg.trials)
        rows.append(row)
        runtimes[str(m)] = time.perf_counter() - t0
    meta = {"config": cfg.to_dict(), "runtime_seconds": runtimes, "margin": MARGIN, "threads": threads}
    return ExperimentReport("audit" if audit else "sweep", rows, tuple(columns), cfg.config_hash(),
                            cfg.master_seed, meta)


def bound_audit(cfg, delta=None, threads=1):
    """Per-trial check of T_lam(L_D(Q)) <= RHS; passes when the violation rate is <= delta."""
    if cfg.rule.name != "empirical_bayes":
        raise ConfigError("the bound audit applies to the empirical_bayes rule")
    if delta is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "delta": float(delta)})
    if not 0 < cfg.delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    rep = run_sweep(cfg, threads=threads, audit=True)
    rate = max(r["bound_violation_rate"] for r in rep.rows)
    rep.meta.update(delta=cfg.delta, violation_rate=rate, passed=rate <= cfg.delta)
    return rep


# ------------------------------------------------------------ equivalence

def equivalence_sweep(inst, m_grid, pair, lam=1.0, trials=200, seed=DEFAULT_SEED, threads=1, name="equivalence"):
    """Mean posterior TV between two rules on shared datasets, for every m."""
    rule_a, rule_b = pair
    cfg = ExperimentConfig(instance=inst.to_dict(), rule=rule_a, schedule=LambdaSchedule.constant(lam),
                           m_grid=tuple(m_grid), trials=trials, master_seed=seed,
                           outputs=("mean_pop_error", "mean_tv"), compare_rule=rule_b, name=name)
    rep = run_sweep(cfg, threads=threads)
    rep.kind = "equivalence"
    rep.csv_columns = ("m", "lambda", "trials", "mean_tv", "std_error_tv")
    rep.meta["pair"] = [rule_a.label(), rule_b.label()]
    tvs = [r["mean_tv"] for r in rep.rows]
    rep.meta["strictly_decreasing"] = all(b < a for a, b in zip(tvs, tvs[1:]))
    return rep


# ----------------------------------------------------------------- regimes

REGIME_TAGS = ("overfit_catastrophic", "tempered", "consistent", "underfit_catastrophic", "inconclusive")


@dataclass(frozen=True)
class RegimeCase:
    """A schedule run on a construction, with the tag it is expected to earn."""

    name: str
    spec: dict
    schedule: LambdaSchedule
    m_grid: tuple
    trials: int
    expected: str
    rule: RuleSpec = RuleSpec("empirical_bayes")


def default_regime_cases():
    return [
        RegimeCase("constant_1", {"lstar": 0.1, "lprime": 0.25, "regime": "sub_one"},
                   LambdaSchedule.constant(1.0), (10, 20, 30, 40), 100, "tempered"),
        RegimeCase("sqrt_optimal", {"lstar": 0.1, "lprime": 0.25, "regime": "fixed", "truncation": 100},
                   LambdaSchedule.sqrt_optimal(), (100, 1000, 10000), 100, "consistent"),
        RegimeCase("linear_100", {"lstar": 0.1, "lprime": 0.3, "regime": "two_hypothesis"},
                   LambdaSchedule.linear(100.0), (100, 1000, 10000), 200, "underfit_catastrophic"),
        RegimeCase("inverse_log", {"lstar": 0.1, "lprime": 0.45, "regime": "sub_one"},
                   LambdaSchedule.inverse_log(1.0), (10, 15, 20), 100, "overfit_catastrophic"),
    ]


def classify(terminal_error, lstar, lam, m, mixture):
    """Tag a terminal mean error; 'inconclusive' unless exactly one band matches.

    Strong regularization (lam/m > 10) is judged against the prior-mixture
    prediction; otherwise against L*, the tempered band up to ell and beyond it.
    """
    e = terminal_error
    hits = []
    if lam / m > UNDERFIT_RATIO:
        if abs(e - mixture) <= MARGIN:
            hits.append("underfit_catastrophic")
        if abs(e - lstar) <= MARGIN:
            hits.append("consistent")
    else:
        ell = ell_lambda(max(lam, 1.0), lstar)
        if abs(e - lstar) <= MARGIN:
            hits.append("consistent")
        if lstar + MARGIN < e <= ell + MARGIN:
            hits.append("tempered")
        if e > ell + MARGIN:
            hits.append("overfit_catastrophic")
    return hits[0] if len(hits) == 1 else "inconclusive"


def regime_summary(cases=None, seed=DEFAULT_SEED, threads=1):
    """Run every case and tag its terminal error. Returns an ExperimentReport."""
    cases = default_regime_cases() if cases is None else cases
    rows, meta_cases = [], []
    for case in cases:
        cfg = ExperimentConfig(instance={"spec": case.spec}, rule=case.rule, schedule=case.schedule,
                               m_grid=case.m_grid, trials=case.trials, master_seed=seed, name=case.name)
        rep = run_sweep(cfg, threads=threads)
        last = rep.rows[-1]
        m, lam = last["m"], last["lambda"]
        lstar, lprime = case.spec["lstar"], case.spec["lprime"]
        mixture = math.nan
        if lam / m > UNDERFIT_RATIO:
            if case.rule.name == "profile":
                q = qstar_formula_profile(lstar, lprime, m, lam)
            else:
                q = qstar_formula_pacbayes(lstar, lprime, m, lam)
            mixture = mixture_error(q, lstar, lprime)
        tag = classify(last["mean_pop_error"], lstar, lam, m, mixture)
        rows.append({
            "case": case.name, "schedule": case.schedule.kind, "m": m, "lambda": lam,
            "terminal_error": last["mean_pop_error"], "std_error": last["std_error"],
            "l_star": lstar, "ell": ell_lambda(max(lam, 1.0), lstar), "mixture": mixture,
            "tag": tag, "expected": case.expected, "match": tag == case.expected,
        })
        meta_cases.append({"name": case.name, "trajectory": [r["mean_pop_error"] for r in rep.rows],
                           "runtime_seconds": rep.meta["runtime_seconds"]})
    cols = ("case", "schedule", "m", "lambda", "terminal_error", "std_error", "l_star", "ell",
            "mixture", "tag", "expected", "match")
    blob = json.dumps([{"name": c.name, "spec": c.spec, "schedule": c.schedule.to_dict(),
                        "m_grid": list(c.m_grid), "trials": c.trials, "expected": c.expected,
                        "rule": c.rule.to_dict()} for c in cases], sort_keys=True)
    h = hashlib.sha256(f"{blob}|{seed}".encode()).hexdigest()
    return ExperimentReport("regimes", rows, cols, h, seed, {"cases": meta_cases, "margin": MARGIN})
