"""Command-line entry point: ``flatmc <subcommand>``; every command writes CSV."""

from __future__ import annotations

import math

import click
import numpy as np
import yaml

from . import adversarial as adv
from .bounds import sample_size_plan
from .errors import FlatmcError
from .estimator import empirical_rho, ess, log_weights, snis_from_log_weights, test_function_from_config
from .flatten import FlattenedTarget, FlattenSpec
from .pipeline import (PipelineConfig, compare_direct_vs_tailmatch, rows_to_csv, run_pipeline, setup,
                       write_csv)
from .profiles import check_tractability
from .samplers import run_chains


def _emit(text: str, out: str | None):
    if out:
        write_csv(text, out)
    else:
        click.echo(text, nl=False)


def _load(path) -> PipelineConfig:
    return PipelineConfig.from_yaml(path)


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except FlatmcError as exc:
            raise click.ClickException(str(exc)) from None


@click.group(cls=_Group)
def main():
    """Tail-matching importance sampling toolkit."""


@main.command()
@click.option("--config", "config", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, help="CSV path (stdout if omitted).")
def profile(config, out):
    """Growth profile and tractability condition for a target."""
    cfg = _load(config)
    target, prof, u0, M, bound, step = setup(cfg)
    ok, margin = check_tractability(prof, target.dim, cfg.c_hat)
    row = {**prof.as_row(), "d": target.dim, "U0": u0, "M": M, "tractable": ok,
           "tractability_margin": margin}
    _emit(rows_to_csv([row], list(row)), out)


@main.command()
@click.option("--config", "config", required=True, type=click.Path(exists=True))
@click.option("--eps-bar", default=0.1, show_default=True)
@click.option("--eps-prime", default=0.1, show_default=True)
@click.option("--out", default=None)
def bounds(config, eps_bar, eps_prime, out):
    """Condition and rho bound, with the implied sample-size plan."""
    cfg = _load(config)
    target, prof, u0, M, b, step = setup(cfg)
    rho = b.rho.value
    if math.isfinite(rho):
        N, tv, _ = sample_size_plan(rho, eps_bar, eps_prime)
    else:
        N, tv = math.inf, 0.0
    row = {"d": target.dim, "c": cfg.c, "c_hat": cfg.c_hat, "condition_lhs": b.condition_lhs,
           "condition_rhs": b.condition_rhs, "rho_bound": rho, "regime": b.rho.regime,
           "N_plan": N, "tv_budget": tv}
    _emit(rows_to_csv([row], list(row)), out)


@main.command()
@click.option("--config", "config", required=True, type=click.Path(exists=True))
@click.option("--steps", type=int, default=None)
@click.option("--burn-in", "burn_in", type=int, default=None)
@click.option("--thin", type=int, default=None)
@click.option("--step", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--chains", type=int, default=None)
@click.option("--method", type=click.Choice(["mala", "ula"]), default=None)
@click.option("--out", required=True, help="Trace CSV, one row per kept state.")
def sample(config, steps, burn_in, thin, step, seed, chains, method, out):
    """Run Langevin chains on the flattened target and write the states."""
    from dataclasses import replace

    cfg = _load(config)
    s = cfg.sampler
    over = {k: v for k, v in dict(steps=steps, burn_in=burn_in, thin=thin, step=step,
                                  chains=chains, method=method).items() if v is not None}
    cfg = replace(cfg, sampler=replace(s, **over), seed=cfg.seed if seed is None else seed)
    target, prof, u0, M, b, h = setup(cfg)
    from .pipeline import _chain_config
    states, rates = run_chains(FlattenedTarget(target, FlattenSpec(M, cfg.c)),
                               _chain_config(cfg.sampler, cfg.seed, h), cfg.sampler.chains,
                               cfg.sampler.method)
    X = np.concatenate(states)
    cols = [f"x_{j + 1}" for j in range(target.dim)]
    write_csv(rows_to_csv([dict(zip(cols, x)) for x in X], cols), out)
    click.echo(f"wrote {len(X)} states; acceptance {', '.join(f'{r:.3f}' for r in rates)}",
               err=True)


def _read_trace(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))


@main.command()
@click.option("--config", "config", required=True, type=click.Path(exists=True))
@click.option("--trace", required=True, type=click.Path(exists=True))
@click.option("--phi", "phis", multiple=True,
              help="Test function as inline YAML, e.g. '{kind: bump, center: [0], width: 1}'.")
@click.option("--out", default=None)
def estimate(config, trace, phis, out):
    """SNIS estimates from a trace file."""
    cfg = _load(config)
    target, prof, u0, M, b, h = setup(cfg)
    spec = FlattenSpec(M, cfg.c)
    X = _read_trace(trace)
    if X.shape[1] != target.dim:
        raise click.BadParameter(f"trace has {X.shape[1]} columns, target has d={target.dim}")
    tfs = [yaml.safe_load(p) for p in phis] if phis else list(cfg.test_functions)
    lw = log_weights(X, target, spec)
    rho_hat = empirical_rho(X, target, spec)
    rows = []
    for j, tf in enumerate(tfs):
        phi = test_function_from_config(tf, target.dim)
        res = snis_from_log_weights(phi(X), lw)
        rows.append({"phi": tf.get("name", f"{tf.get('kind')}{j}"), "estimate": res.estimate,
                     "ess": ess(lw), "rho_hat": rho_hat, "n": len(X)})
    _emit(rows_to_csv(rows, ["phi", "estimate", "ess", "rho_hat", "n"]), out)


@main.command()
@click.option("--family", type=click.Choice(["f3", "f4"]), required=True)
@click.option("--d", "d", type=int, required=True)
@click.option("--kappa", type=float, default=None, help="L/m; defaults to 20 e^{24/d} (f3) or 16 (f4).")
@click.option("--check", type=click.Choice(["mass", "smoothness", "threshold", "modehit"]),
              required=True)
@click.option("--n-mc", "n_mc", type=int, default=1_000_000, show_default=True)
@click.option("--n-points", "n_points", type=int, default=None)
@click.option("--trials", type=int, default=20, show_default=True)
@click.option("--sampler", "sampler_kind", type=click.Choice(["ula", "mala", "static", "oracle"]),
              default="ula", show_default=True)
@click.option("--steps", type=int, default=10_000, show_default=True)
@click.option("--step", type=float, default=None)
@click.option("--theta", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None)
def adversarial(family, d, kappa, check, n_mc, n_points, trials, sampler_kind, steps, step, theta,
                seed, out):
    """Checks on the counterexample densities."""
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(d)
    if family == "f3":
        kappa = 20.0 * math.exp(24.0 / d) if kappa is None else kappa
    else:
        kappa = 16.0 if kappa is None else kappa
    row = {"family": family, "d": d, "kappa": kappa, "check": check}
    if check == "threshold":
        which = "comp" if family == "f3" else "comp2"
        angle = adv.COMP_ANGLE if family == "f3" else adv.COMP2_ANGLE
        row.update(value=adv.intractability_threshold(d, theta, which),
                   packing=adv.packing_lower_bound(d, angle) if d >= 3 else math.nan,
                   bound=math.nan, se=math.nan)
    else:
        f = (adv.build_f3(1.0, kappa, direction, d) if family == "f3"
             else adv.build_f4(1.0, kappa, direction, d))
        L = f.L0 if family == "f3" else f.L1
        if check == "mass":
            val, se = (adv.f3_mass_ratio(f, n_mc, seed) if family == "f3"
                       else adv.f4_cap_mass(f, n_mc, seed))
            row.update(value=val, se=se, bound=0.25 if family == "f3" else 0.5)
        elif check == "smoothness":
            if family == "f3":
                val = adv.probe_smoothness(f, adv.annulus_sampler(f), n_points or 500,
                                           "hessian_norm", seed)
                row.update(value=val, se=math.nan, bound=396.0 * L)
            else:
                val = adv.probe_smoothness(f, adv.cone_sampler(f), n_points or 10_000,
                                           "grad_lipschitz", seed)
                row.update(value=val, se=math.nan, bound=686.0 * L)
        else:
            if family != "f3":
                raise click.BadParameter("the mode-hit experiment uses f3")
            h = step if step is not None else 1.0 / (2.0 * 396.0 * L)
            val, se = adv.mode_hit_experiment({"kind": sampler_kind, "step": h, "steps": steps},
                                              d, trials, seed, kappa0=kappa)
            row.update(value=val, se=se, bound=math.nan)
    row.setdefault("packing", math.nan)
    cols = ["family", "d", "kappa", "check", "value", "se", "bound", "packing"]
    _emit(rows_to_csv([row], cols), out)


@main.command()
@click.option("--config", "config", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, help="CSV path; overrides the config's output.")
def pipeline(config, out):
    """Full tail-matching run: one CSV row per (replication, test function)."""
    from dataclasses import replace

    cfg = _load(config)
    if out:
        cfg = replace(cfg, output=out)
    rep = run_pipeline(cfg)
    if not cfg.output:
        click.echo(rep.to_csv(), nl=False)


@main.command()
@click.option("--config", "config", required=True, type=click.Path(exists=True))
@click.option("--out", default=None)
def compare(config, out):
    """Direct MALA against tail matching at equal evaluation budget."""
    rep = compare_direct_vs_tailmatch(_load(config))
    _emit(rep.to_csv(), out)
    click.echo(f"tail-matching error <= direct error in {rep.win_rate():.3f} of cases", err=True)

