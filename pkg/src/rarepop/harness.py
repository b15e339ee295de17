"""Command implementations and replication drivers.

Every command is a pure function of ``(RunConfig, input files)`` to files in
an output directory. Replication ``i`` draws all of its randomness from the
stream ``RandomSource(seed, i)`` (plus a path element per truth vector in the
sensitivity study), with child streams 0 for the population, 1 for the
sample and 2, 3, ... for the fits. Results are therefore independent of the
number of workers and of the order in which replications finish.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .design import adaptive_sample, read_sample, write_sample
from .diagnose import (
    HPD_MIN_SAMPLES,
    HpdInterval,
    diagnose_chain,
    hpd,
    summarize_replications,
    write_diagnostics,
    write_summary_csv,
)
from .dists import GammaParam
from .errors import ConfigError
from .grid import extract_networks, generate_population, ingest_grid, write_grid
from .rng import RandomSource
from .sampler import fit_mixture, fit_network_model, read_chain, write_chain

MIXTURE, NETWORK = "mixture", "network"
FITTERS = {MIXTURE: fit_mixture, NETWORK: fit_network_model}
TABLE_COLUMNS = ("T", "alpha", "beta", "nu", "lambda_s", "lambda_unobs")
RELATIVE_WIDTH = {"T", "lambda_s", "lambda_unobs"}


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _write_csv(rows, header, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    Path(path).write_text(buf.getvalue())


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def _run_meta(cfg, **extra) -> dict:
    meta = {"version": __version__, "config": cfg.to_dict(), "scale": cfg.scale_factors()}
    meta.update(extra)
    return meta


def _pmap(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=1))


# --------------------------------------------------------------------------
# posterior summaries of one chain


def _estimate(x):
    """Posterior mean and 95% HPD, or ``None`` with too few draws."""
    x = np.asarray(x, dtype=float)
    if len(x) < HPD_MIN_SAMPLES:
        return None
    iv = hpd(x, 0.95)
    return float(x.mean()), iv.lower, iv.upper


def chain_targets(chain, sample, truth) -> list:
    """Rows ``(target, index, truth, mean, lower, upper)`` for one fitted chain.

    ``truth`` holds ``T``, ``alpha``, ``beta``, optionally ``nu``, and the
    population rates by network label. Observed rates pair with the rate of
    the sampled network; unobserved rates pair, in ascending order, with the
    true unobserved rates, using only draws whose number of unobserved
    components equals the true one.
    """
    rows = []
    scalars = [("T", chain.T), ("alpha", chain.alpha), ("beta", chain.beta)]
    if truth.get("nu") is not None and chain.meta.get("model") == MIXTURE:
        scalars.append(("nu", chain.nu))
    for name, x in scalars:
        if truth.get(name) is None:
            continue
        est = _estimate(x)
        if est is not None:
            rows.append((name, 0, float(truth[name])) + est)
    R_s = sample.R_s
    R = np.asarray(chain.r_unobs) + R_s
    if truth.get("R") is not None:
        r = np.asarray(R, dtype=float)
        iv = hpd(r, 0.95)
        rows.append(("R", 0, float(truth["R"]), float(np.median(r)), iv.lower, iv.upper))
    rates = truth.get("rates")
    if rates is None or chain.meta.get("model") != MIXTURE:
        return rows
    labels = [nw.label for nw in sample.nonempty]
    for j, lab in enumerate(labels):
        est = _estimate(chain.lambda_s[:, j])
        if est is not None:
            rows.append(("lambda_s", int(lab), float(rates[lab])) + est)
    seen = set(labels)
    unobs = sorted((float(rates[k]), k) for k in range(len(rates)) if k not in seen)
    keep = [u for u, ru in zip(chain.lambda_unobs, chain.r_unobs) if ru == len(unobs)]
    for rank, (rate, lab) in enumerate(unobs):
        est = _estimate([u[rank] for u in keep])
        if est is not None:
            rows.append(("lambda_unobs", int(lab), rate) + est)
    return rows


def _posterior_summary(chain) -> dict:
    out = {}
    for name in ("T", "alpha", "beta", "nu"):
        est = _estimate(chain.scalar(name))
        if est is not None:
            out[name] = {"mean": est[0], "hpd95": [est[1], est[2]]}
    R = np.asarray(chain.r_unobs) + chain.R_s if chain.meta.get("model") == MIXTURE else None
    if R is not None and len(R) >= HPD_MIN_SAMPLES:
        iv = hpd(R, 0.95)
        out["R"] = {"median": float(np.median(R)), "hpd95": [iv.lower, iv.upper]}
    return out


# --------------------------------------------------------------------------
# single-shot commands


def cmd_generate(cfg, out) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    pop, net, rates = generate_population(cfg.population, RandomSource(cfg.seed).spawn(0))
    write_grid(pop, out / "population.csv")
    truth = {
        "rows": pop.rows, "cols": pop.cols, "seed": cfg.seed,
        "T": int(pop.total), "X": int(net.X), "R": int(net.R),
        "C": [int(c) for c in net.C], "lambda": [float(x) for x in rates],
    }
    _dump_json(truth, out / "truth.json")
    return {"population": out / "population.csv", "truth": out / "truth.json"}


def _ingest(cfg):
    if not cfg.population_file.exists():
        raise ConfigError(f"{cfg.population_file}: population file not found")
    return ingest_grid(cfg.population_file, cfg.rows, cfg.cols)


def cmd_sample(cfg, out) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    pop = _ingest(cfg)
    s = adaptive_sample(pop, extract_networks(pop), cfg.fraction, RandomSource(cfg.seed).spawn(1),
                        seed=cfg.seed)
    write_sample(s, out / "sample.json")
    return {"sample": out / "sample.json"}


def cmd_fit(cfg, out, model: str) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if not cfg.sample_file.exists():
        raise ConfigError(f"{cfg.sample_file}: sample file not found")
    s = read_sample(cfg.sample_file)
    chain = FITTERS[model](s, cfg.priors, cfg.mcmc, RandomSource(cfg.seed).spawn(2))
    chain.meta["scale"] = cfg.scale_factors()
    paths = write_chain(chain, out)
    _dump_json(_posterior_summary(chain), out / "posterior_summary.json")
    paths["summary"] = out / "posterior_summary.json"
    return paths


def cmd_diagnose(cfg, out) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    chain = read_chain(cfg.chain_dir)
    report = diagnose_chain(chain)
    write_diagnostics(report, out / "diagnostics.json")
    names = list(report)
    rows = [[stat] + [report[n][stat] for n in names] for stat in ("geweke_z", "rl_nmin", "rl_factor")]
    _write_csv(rows, ["statistic"] + names, out / "diagnostics.csv")
    return {"diagnostics": out / "diagnostics.json", "table": out / "diagnostics.csv"}


# --------------------------------------------------------------------------
# replication studies


def _truth_of(spec, pop, net, rates) -> dict:
    return {
        "T": float(pop.total), "alpha": spec.alpha, "beta": spec.beta,
        "nu": spec.lam.rate if isinstance(spec.lam, GammaParam) else None,
        "R": int(net.R), "rates": [float(x) for x in rates],
    }


def _one_replication(task):
    """Generate (or reuse) a population, sample it and fit every requested variant."""
    cfg, i, path, spec, variants = task
    src = RandomSource(cfg.seed, i, path)
    try:
        if cfg.mode == "compare" and cfg.experiment == "design":
            pop = _ingest(cfg)
            net = extract_networks(pop)
            truth = {"T": float(pop.total), "alpha": None, "beta": None, "nu": None, "R": None, "rates": None}
        else:
            pop, net, rates = generate_population(spec, src.spawn(0))
            truth = _truth_of(spec, pop, net, rates)
        s = adaptive_sample(pop, net, cfg.fraction, src.spawn(1))
        rows = []
        for k, (label, model, priors) in enumerate(variants):
            chain = FITTERS[model](s, priors, cfg.mcmc, src.spawn(2 + k))
            for r in chain_targets(chain, s, truth):
                rows.append((i, label) + r)
        return {"replication": i, "rows": rows, "error": None}
    except Exception as exc:  # recorded and excluded, never dropped silently
        return {"replication": i, "rows": [], "error": f"{type(exc).__name__}: {exc}"}


RECORD_HEADER = ["replication", "variant", "target", "index", "truth", "mean", "lower", "upper"]


def _collect(results):
    rows, failures = [], []
    for res in sorted(results, key=lambda r: r["replication"]):
        if res["error"] is not None:
            failures.append({"replication": res["replication"], "error": res["error"]})
        rows.extend(res["rows"])
    return rows, failures


def _summaries(rows, variant, columns=TABLE_COLUMNS, comparator=None):
    """Coverage, error and width summaries for one variant, pooling vector targets."""
    out = {}
    for col in columns:
        sel = [r for r in rows if r[1] == variant and r[2] == col]
        if not sel:
            continue
        ivs = [HpdInterval(r[6], r[7], 0.95) for r in sel]
        comp = None
        if comparator is not None and col in comparator:
            comp = comparator[col]
        out[col] = summarize_replications([r[4] for r in sel], [r[5] for r in sel], ivs,
                                          relative_width=col in RELATIVE_WIDTH, comparator=comp)
    return out


def cmd_replicate(cfg, out) -> dict:
    """Replication study of the mixture model on simulated populations."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    variants = [(MIXTURE, MIXTURE, cfg.priors)]
    tasks = [(cfg, i, (), cfg.population, variants) for i in range(cfg.replications)]
    rows, failures = _collect(_pmap(_one_replication, tasks, cfg.workers))
    _write_csv(rows, RECORD_HEADER, out / "replications.csv")
    summ = _summaries(rows, MIXTURE)
    write_summary_csv(summ, out / "summary.csv")
    _dump_json(_run_meta(cfg, n_requested=cfg.replications, n_failed=len(failures), failures=failures),
               out / "run_meta.json")
    return {"records": out / "replications.csv", "summary": out / "summary.csv",
            "meta": out / "run_meta.json", "summaries": summ, "failures": failures}


def cmd_compare(cfg, out) -> dict:
    """Mixture versus network model on the same samples."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    variants = [(MIXTURE, MIXTURE, cfg.priors), (NETWORK, NETWORK, cfg.priors)]
    tasks = [(cfg, i, (), cfg.population, variants) for i in range(cfg.replications)]
    rows, failures = _collect(_pmap(_one_replication, tasks, cfg.workers))
    _write_csv(rows, RECORD_HEADER, out / "replications.csv")
    # pair the two models on replications where both produced an estimate
    cols = ("T", "alpha", "beta")
    paired = {}
    for col in cols:
        m = {r[0]: r for r in rows if r[1] == MIXTURE and r[2] == col}
        n = {r[0]: r for r in rows if r[1] == NETWORK and r[2] == col}
        paired[col] = sorted(set(m) & set(n))
    prow = [r for r in rows if r[2] in cols and r[0] in set(paired[r[2]])]
    comp = {col: [r[5] for r in prow if r[1] == NETWORK and r[2] == col] for col in cols}
    summ = {MIXTURE: _summaries(prow, MIXTURE, cols, comparator=comp),
            NETWORK: _summaries(prow, NETWORK, cols)}
    flat = {f"{model}_{col}": s for model, d in summ.items() for col, s in d.items()}
    write_summary_csv(flat, out / "summary.csv")
    re_rows = [(r[0], r[1], r[4], r[5], (r[5] - r[4]) / r[4]) for r in prow if r[2] == "T"]
    _write_csv(re_rows, ["replication", "model", "T_true", "T_mean", "relative_error"],
               out / "relative_errors.csv")
    _dump_json(_run_meta(cfg, n_requested=cfg.replications, n_failed=len(failures), failures=failures,
                         n_paired=len(paired["T"])), out / "run_meta.json")
    return {"records": out / "replications.csv", "summary": out / "summary.csv",
            "relative_errors": out / "relative_errors.csv", "meta": out / "run_meta.json",
            "summaries": summ, "failures": failures}


def _prior_variants(cfg):
    ind = replace(cfg.priors, lambda_prior="independent")
    out = [("independent", MIXTURE, ind)]
    for tau in cfg.taus:
        out.append((f"tau={tau:g}", MIXTURE, replace(cfg.priors, lambda_prior="dependent", tau=tau)))
    return out


def cmd_prior_sensitivity(cfg, out) -> dict:
    """Independent versus dependent rate priors on populations with fixed rate vectors."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    variants = _prior_variants(cfg)
    tasks = []
    for v, truth in enumerate(cfg.truths):
        spec = replace(cfg.population, lam=tuple(truth))
        tasks.extend((cfg, i, (v,), spec, variants) for i in range(cfg.replications))
    results = _pmap(_one_replication, tasks, cfg.workers)
    rmse_rows, r_rows, t_summ, failures, all_rows = [], [], {}, [], []
    for v, truth in enumerate(cfg.truths):
        part = results[v * cfg.replications:(v + 1) * cfg.replications]
        rows, fails = _collect(part)
        failures.extend({"R": len(truth), **f} for f in fails)
        all_rows.extend((len(truth),) + r for r in rows)
        for label, _, _ in variants:
            for status in ("lambda_s", "lambda_unobs"):
                for j in range(len(truth)):
                    sel = [r for r in rows if r[1] == label and r[2] == status and r[3] == j]
                    if not sel:
                        continue
                    rel = [((r[5] - r[4]) / r[4]) ** 2 for r in sel]
                    rmse_rows.append((len(truth), label, j + 1, truth[j],
                                      "observed" if status == "lambda_s" else "unobserved",
                                      float(np.mean(rel)), len(sel)))
            for r in rows:
                if r[1] == label and r[2] == "R":
                    r_rows.append((len(truth), label, r[0], r[4], r[6], r[5], r[7]))
            s = _summaries(rows, label, ("T",))
            if "T" in s:
                t_summ[f"R={len(truth)} {label}"] = s["T"]
    _write_csv(all_rows, ["R_true"] + RECORD_HEADER, out / "replications.csv")
    _write_csv(rmse_rows, ["R_true", "prior", "j", "lambda", "status", "rmse", "n"], out / "lambda_rmse.csv")
    _write_csv(r_rows, ["R_true", "prior", "replication", "truth", "lower", "median", "upper"],
               out / "r_intervals.csv")
    write_summary_csv(t_summ, out / "t_summary.csv")
    _dump_json(_run_meta(cfg, n_requested=cfg.replications * len(cfg.truths), n_failed=len(failures),
                         failures=failures), out / "run_meta.json")
    return {"lambda_rmse": out / "lambda_rmse.csv", "r_intervals": out / "r_intervals.csv",
            "t_summary": out / "t_summary.csv", "meta": out / "run_meta.json",
            "rmse_rows": rmse_rows, "failures": failures}


COMMANDS = {
    "generate": cmd_generate,
    "sample": cmd_sample,
    "fit-mixture": lambda cfg, out: cmd_fit(cfg, out, MIXTURE),
    "fit-network": lambda cfg, out: cmd_fit(cfg, out, NETWORK),
    "diagnose": cmd_diagnose,
    "replicate": cmd_replicate,
    "compare": cmd_compare,
    "sensitivity": cmd_prior_sensitivity,
}


def run(cfg, out) -> dict:
    return COMMANDS[cfg.mode](cfg, out)
