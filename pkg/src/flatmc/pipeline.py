"""End-to-end runs: profile, threshold, chains, SNIS estimates, CSV rows.

A run derives a growth profile for the target, fixes M, evaluates the
tractability condition and the matching rho bound, then for each
replication runs Langevin chains on T o U and reweights them.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import adversarial
from .bounds import RhoBound, mixture_condition, rho_bound_coco, rho_bound_coco2, rho_bound_mixture
from .density import BnnPosterior, GaussianMixture, target_from_config
from .errors import FlatmcError, InputError
from .estimator import batch_means_se, ess, log_weights, snis_from_log_weights, test_function_from_config
from .flatten import FlattenedTarget, FlattenSpec, choose_M
from .profiles import (A1Profile, a1_from_convex_outside_ball, a1_from_dissipativity, a1_from_mixture,
                       bnn_condition_lhs, bnn_profile, check_tractability, cocoa_lhs,
                       DissipativityParams)
from .samplers import ChainConfig, run_chains

CSV_COLUMNS = ("replication", "seed", "phi", "d", "M", "rho_bound", "ess", "estimate", "se",
               "condition_met")
COMPARE_COLUMNS = ("method", "replication", "seed", "phi", "d", "evals", "estimate", "se", "ess",
                   "truth", "abs_error", "mode_fractions")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplerSpec:
    method: str = "mala"
    step: float | str = "auto"
    steps: int = 10_000
    burn_in: int = 1_000
    thin: int = 1
    chains: int = 1
    init: tuple | None = None
    direct_step: float | None = None

    def __post_init__(self):
        if self.method not in ("mala", "ula"):
            raise InputError(f"unknown sampler method {self.method!r}")
        if self.chains < 1:
            raise InputError("chains must be at least 1")
        if self.step != "auto" and not float(self.step) > 0:
            raise InputError("step must be positive or 'auto'")


@dataclass(frozen=True)
class PipelineConfig:
    target: dict
    threshold: dict = field(default_factory=lambda: {"rule": "a1"})
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    test_functions: tuple = ({"name": "mean0", "kind": "mean", "coord": 0},)
    replications: int = 1
    seed: int = 0
    output: str | None = None
    c: float = 1.0
    c_hat: float = 1.0
    batches: int = 20

    def __post_init__(self):
        if self.replications < 1:
            raise InputError("replications must be at least 1")
        if not self.test_functions:
            raise InputError("at least one test function is required")
        if self.c_hat < 1:
            raise InputError("c_hat must be at least 1")

    @classmethod
    def from_dict(cls, cfg: dict) -> "PipelineConfig":
        if "target" not in cfg:
            raise InputError("config needs a 'target' section")
        est = cfg.get("estimator", {})
        tfs = tuple(est.get("test_functions", cls.test_functions))
        return cls(target=dict(cfg["target"]),
                   threshold=dict(cfg.get("threshold", {"rule": "a1"})),
                   sampler=SamplerSpec(**cfg.get("sampler", {})),
                   test_functions=tfs,
                   replications=int(cfg.get("replications", 1)),
                   seed=int(cfg.get("seed", 0)),
                   output=cfg.get("output"),
                   c=float(cfg.get("c", 1.0)),
                   c_hat=float(cfg.get("c_hat", 1.0)),
                   batches=int(est.get("batches", 20)))

    @classmethod
    def from_yaml(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))


# ---------------------------------------------------------------------------
# targets, profiles and bounds
# ---------------------------------------------------------------------------

def build_target(cfg: dict):
    kind = cfg.get("kind", "mixture")
    if kind in ("mixture", "bnn"):
        return target_from_config(cfg)
    if kind not in ("f3", "f4"):
        raise InputError(f"unknown target kind {kind!r}")
    if "d" not in cfg:
        raise InputError(f"target kind {kind!r} needs 'd'")
    d = int(cfg["d"])
    direction = cfg.get("direction")
    if direction is None:
        direction = np.eye(d)[0]
    if kind == "f3":
        m0 = float(cfg.get("m0", 1.0))
        kappa = float(cfg.get("kappa", 20.0 * math.exp(24.0 / d)))
        return adversarial.build_f3(m0, kappa * m0, direction, d)
    m1 = float(cfg.get("m1", 1.0))
    return adversarial.build_f4(m1, float(cfg.get("kappa", 16.0)) * m1, direction, d)


def derive_profile(target) -> A1Profile:
    if isinstance(target, GaussianMixture):
        return a1_from_mixture(target)
    if isinstance(target, BnnPosterior):
        return bnn_profile(target)
    if isinstance(target, adversarial.SewnBimodal):
        R = 3.0 * math.sqrt(target.dim * math.log(target.kappa0) / target.L0)
        grad0 = float(np.linalg.norm(target.grad_u(np.zeros(target.dim))))
        return a1_from_convex_outside_ball(R, target.m0, 396.0 * target.L0, grad0)
    if isinstance(target, adversarial.AngularTwoScale):
        return a1_from_dissipativity(DissipativityParams(target.m1, 0.0), 686.0 * target.L1)
    raise InputError(f"no profile rule for {type(target).__name__}")


def lower_bound_min_u(target) -> float:
    """A valid lower bound on min U for the supported families."""
    if isinstance(target, GaussianMixture):
        return -1.0
    if isinstance(target, adversarial.SewnBimodal):
        return min(target._c1, target._c2)
    return 0.0


def threshold_from_config(rule_cfg: dict, profile: A1Profile, target, u0: float) -> float:
    rule = rule_cfg.get("rule", "a1")
    if rule == "fixed":
        return float(rule_cfg["value"])
    if rule == "u0":
        return u0 + float(rule_cfg.get("offset", 0.0))
    if rule == "bnn":
        if not isinstance(target, BnnPosterior):
            raise InputError("rule 'bnn' needs a network target")
        return choose_M(profile, u0, "bnn", c_hat_bias=target.c_hat_bias,
                        n_classes=target.n_classes)
    return choose_M(profile, u0, rule)


@dataclass(frozen=True)
class BoundReport:
    condition: str
    condition_lhs: float
    condition_rhs: float
    condition_met: bool
    rho: RhoBound


def evaluate_bound(target, profile: A1Profile, M: float, c: float = 1.0,
                   c_hat: float = 1.0) -> BoundReport:
    """Tractability condition and rho bound shared by the pipeline and the bounds command.

    Mixtures use their dedicated condition and bound; networks their own
    condition. Where the dedicated bound is unavailable the general
    profile bound at threshold M is reported (possibly infinite).
    """
    d = target.dim
    u_min = lower_bound_min_u(target)
    general = lambda: rho_bound_coco(profile, max(M, u_min), u_min, c, d)
    if isinstance(target, GaussianMixture):
        lhs, rhs = mixture_condition(target)
        met = lhs <= rhs
        return BoundReport("mixture", lhs, rhs, met,
                           rho_bound_mixture(target, c) if met else general())
    if isinstance(target, BnnPosterior):
        lhs, rhs = bnn_condition_lhs(target), float(d - 1)
        return BoundReport("bnn", lhs, rhs, lhs <= rhs, general())
    lhs, rhs = cocoa_lhs(profile), (d - 1) / (math.e * c_hat ** 2)
    met = check_tractability(profile, d, c_hat)[0]
    rho = rho_bound_coco2(profile, c_hat, c, d) if (met and d >= 2) else general()
    return BoundReport("profile", lhs, rhs, met, rho)


def replication_seed(master: int, r: int) -> int:
    """64-bit seed for replication r, derived from the master seed."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(r),))
    return int(ss.generate_state(1, np.uint64)[0])


def _auto_step(profile: A1Profile) -> float:
    from .profiles import flattened_smoothness
    return 1.0 / (2.0 * flattened_smoothness(profile))


def _chain_config(s: SamplerSpec, seed: int, step: float) -> ChainConfig:
    return ChainConfig(step=step, steps=s.steps, burn_in=s.burn_in, thin=s.thin, seed=seed,
                       init=s.init)


def _test_functions(cfg: PipelineConfig, d: int):
    out = []
    for j, tf in enumerate(cfg.test_functions):
        name = tf.get("name", f"{tf.get('kind')}{j}")
        out.append((name, tf, test_function_from_config(tf, d)))
    return out


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineReport:
    rows: list
    profile: A1Profile
    M: float
    u0: float
    bound: BoundReport
    step: float
    evals_per_replication: int

    def to_csv(self) -> str:
        return rows_to_csv(self.rows, CSV_COLUMNS)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def write_csv(text: str, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def setup(cfg: PipelineConfig):
    """Target, profile, U(0), M, bound report and step shared by every replication."""
    target = build_target(cfg.target)
    d = target.dim
    u0 = float(target.u(np.zeros(d)))
    profile = derive_profile(target)
    M = threshold_from_config(cfg.threshold, profile, target, u0)
    bound = evaluate_bound(target, profile, M, cfg.c, cfg.c_hat)
    step = _auto_step(profile) if cfg.sampler.step == "auto" else float(cfg.sampler.step)
    return target, profile, u0, M, bound, step


def run_pipeline(cfg: PipelineConfig) -> PipelineReport:
    target, profile, u0, M, bound, step = setup(cfg)
    spec = FlattenSpec(M, cfg.c)
    flat = FlattenedTarget(target, spec)
    d = target.dim
    tfs = _test_functions(cfg, d)
    rows = []
    s = cfg.sampler
    for r in range(cfg.replications):
        seed = replication_seed(cfg.seed, r)
        states, _ = run_chains(flat, _chain_config(s, seed, step), s.chains, s.method)
        X = np.concatenate(states)
        lw = log_weights(X, target, spec)
        e = ess(lw)
        for name, _, phi in tfs:
            f = np.asarray(phi(X), dtype=float)
            res = snis_from_log_weights(f, lw)
            rows.append({"replication": r, "seed": seed, "phi": name, "d": d, "M": M,
                         "rho_bound": bound.rho.value, "ess": e, "estimate": res.estimate,
                         "se": batch_means_se(f, lw, max(cfg.batches, s.chains)),
                         "condition_met": bound.condition_met})
    report = PipelineReport(rows, profile, M, u0, bound, step, s.chains * s.steps)
    if cfg.output:
        write_csv(report.to_csv(), cfg.output)
    return report


# ---------------------------------------------------------------------------
# direct MALA versus tail matching
# ---------------------------------------------------------------------------

def oracle_expectation(gm: GaussianMixture, tf: dict) -> float:
    """Exact mixture expectation of a built-in test function."""
    kind = tf.get("kind")
    pk = gm.component_mass()
    if kind == "mean":
        return float(pk @ gm.means[:, int(tf.get("coord", 0))])
    if kind == "affine":
        return float(np.asarray(tf["coef"], float) @ (pk @ gm.means) + float(tf.get("offset", 0.0)))
    if kind == "bump":
        return gm.expect_gaussian_bump(tf.get("center", [0.0] * gm.dim), float(tf.get("width", 1.0)))
    raise InputError(f"no oracle for test function kind {kind!r}")


def mode_fractions(gm: GaussianMixture, X) -> np.ndarray:
    """Share of states whose most responsible component is each mode."""
    idx = np.argmax(gm.responsibilities(X), axis=1)
    return np.bincount(idx, minlength=gm.n_components) / len(idx)


@dataclass
class CompareReport:
    rows: list

    def to_csv(self) -> str:
        return rows_to_csv(self.rows, COMPARE_COLUMNS)

    def win_rate(self, phi: str | None = None) -> float:
        """Share of (replication, phi) pairs where tail matching has error <= direct."""
        tm = {(r["replication"], r["phi"]): r["abs_error"] for r in self.rows
              if r["method"] == "tailmatch" and (phi is None or r["phi"] == phi)}
        wins = [tm[(r["replication"], r["phi"])] <= r["abs_error"] for r in self.rows
                if r["method"] == "direct" and (r["replication"], r["phi"]) in tm]
        return float(np.mean(wins)) if wins else math.nan


def compare_direct_vs_tailmatch(cfg: PipelineConfig) -> CompareReport:
    """MALA on U against the tail-matching pipeline at the same number of (U, grad U) evaluations."""
    target, profile, u0, M, bound, step = setup(cfg)
    spec = FlattenSpec(M, cfg.c)
    flat = FlattenedTarget(target, spec)
    d = target.dim
    tfs = _test_functions(cfg, d)
    is_mix = isinstance(target, GaussianMixture)
    truths = {}
    for name, tf, _ in tfs:
        try:
            truths[name] = oracle_expectation(target, tf) if is_mix else math.nan
        except FlatmcError:
            truths[name] = math.nan
    s = cfg.sampler
    direct_step = float(s.direct_step) if s.direct_step is not None else step
    evals = s.chains * s.steps
    rows = []
    for r in range(cfg.replications):
        seed = replication_seed(cfg.seed, r)
        runs = {}
        st, _ = run_chains(flat, _chain_config(s, seed, step), s.chains, s.method)
        X = np.concatenate(st)
        runs["tailmatch"] = (X, log_weights(X, target, spec))
        st, _ = run_chains(target, _chain_config(s, seed, direct_step), s.chains, s.method)
        Xd = np.concatenate(st)
        runs["direct"] = (Xd, np.zeros(len(Xd)))
        for method in ("direct", "tailmatch"):
            X, lw = runs[method]
            fr = ";".join(format(v, ".6g") for v in mode_fractions(target, X)) if is_mix else ""
            e = ess(lw)
            for name, _, phi in tfs:
                f = np.asarray(phi(X), dtype=float)
                est = snis_from_log_weights(f, lw).estimate
                rows.append({"method": method, "replication": r, "seed": seed, "phi": name, "d": d,
                             "evals": evals, "estimate": est,
                             "se": batch_means_se(f, lw, max(cfg.batches, s.chains)), "ess": e,
                             "truth": truths[name], "abs_error": abs(est - truths[name]),
                             "mode_fractions": fr})
    return CompareReport(rows)
