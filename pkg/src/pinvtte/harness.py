"""Replicated experiments, exhaustive oracles, and bound-driven selection.

Everything here is deterministic for a fixed configuration: replicate r of
an experiment seeded with s draws its assignment from the stream (s, r), and
all reductions into summary statistics use ``math.fsum`` in a fixed order,
so parallel or repeated runs produce identical numbers.
"""

from __future__ import annotations

import math
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, TextIO

import numpy as np

from .bounds import BoundReport, bias_exact, variance_bound
from .clustering import Clustering, cluster_stats
from .design import Design, draw_from_w, enumerate_support, sample
from .errors import InputError
from .estimator import (
    batch_ht_weights,
    batch_pinv_weights,
    crd_beta1_estimate,
    gcr_explicit_estimate,
)
from .graph import InterferenceGraph
from .moments import analytic_cluster_moments, monte_carlo_moments
from .outcomes import LowOrderModel, evaluate, outcome_bound, true_tte

__all__ = [
    "EstimatorSpec",
    "ExperimentConfig",
    "ExperimentReport",
    "replicate_estimates",
    "run_experiment",
    "report_rows",
    "exhaustive_expectation",
    "select_clustering",
    "rmse_ratio",
    "mc_convergence_report",
    "write_csv",
    "git_describe",
]

_KINDS = ("pinv", "gcr_explicit", "ht", "crd1")


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to run, and at what interaction order.

    kind is one of "pinv", "gcr_explicit", "ht", "crd1". The two
    pseudoinverse routes need beta >= 1; "ht" takes no order and "crd1" is
    pinned at beta = 1.
    """

    kind: str
    beta: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise InputError(f"unknown estimator kind {self.kind!r}")
        if self.kind in ("pinv", "gcr_explicit"):
            if self.beta is None or self.beta < 1:
                raise InputError(f"{self.kind} needs beta >= 1, got {self.beta}")
        elif self.kind == "ht":
            if self.beta is not None:
                raise InputError("ht takes no beta")
        elif self.beta not in (None, 1):
            raise InputError(f"crd1 is a beta=1 estimator, got beta={self.beta}")

    @classmethod
    def parse(cls, text: str) -> "EstimatorSpec":
        """Parse "kind" or "kind:beta", the CLI surface form."""
        kind, sep, tail = text.partition(":")
        if not sep:
            return cls(kind=kind.strip())
        try:
            beta = int(tail)
        except ValueError:
            raise InputError(f"bad estimator spec {text!r}: beta must be an integer")
        return cls(kind=kind.strip(), beta=beta)

    @property
    def label(self) -> str:
        return self.kind if self.beta is None else f"{self.kind}:{self.beta}"


@dataclass(frozen=True)
class ExperimentConfig:
    """One replicated-experiment cell: everything a run needs, plus a seed.

    tag is a free-form label copied into the report (the CLI uses it to mark
    grid cells such as "w=4"). out_path is carried for the CLI; the run
    itself never writes files.
    """

    graph: InterferenceGraph
    model: LowOrderModel
    design: Design
    estimator: EstimatorSpec
    replications: int
    seed: int
    gamma_source: str = "quadform"
    tag: str = ""
    out_path: str | None = None

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise InputError(f"replications must be >= 1, got {self.replications}")
        if self.seed < 0:
            raise InputError(f"seed must be nonnegative, got {self.seed}")


@dataclass(frozen=True)
class ExperimentReport:
    """Summary statistics of one experiment cell.

    empirical_mse is the decomposition bias^2 + variance (population
    variance, matching mean((estimate - tte)^2) up to float rounding).
    analytic_bias is None when no closed form applies (Horvitz-Thompson
    under a complete design); var_bound is None for Horvitz-Thompson.
    """

    kind: str
    beta: int | None
    tag: str
    replications: int
    seed: int
    true_tte: float
    mean_estimate: float
    empirical_bias: float
    empirical_variance: float
    empirical_mse: float
    empirical_rmse: float
    analytic_bias: float | None
    var_bound: float | None
    wall_time_s: float


def replicate_estimates(
    g: InterferenceGraph,
    model: LowOrderModel,
    d: Design,
    spec: EstimatorSpec,
    W: np.ndarray,
) -> np.ndarray:
    """Estimates for a batch of cluster assignments, one per row of W.

    The pseudoinverse and Horvitz-Thompson routes run through the batched
    weight kernels; the explicit product-form and complete-design closed
    forms go through their public per-draw functions. Outcomes are realized
    per draw from the model.
    """
    W = np.asarray(W, dtype=np.int8)
    if W.ndim != 2 or W.shape[1] != d.m:
        raise InputError(f"W has shape {W.shape}, expected (R, {d.m})")
    R = W.shape[0]
    assignment = np.asarray(d.clustering.assignment)
    Z = W[:, assignment]
    Y = np.empty((R, g.n))
    for r in range(R):
        Y[r] = evaluate(model, g, Z[r])
    if spec.kind == "pinv":
        weights = batch_pinv_weights(g, d, spec.beta, W)
        return np.mean(Y * weights, axis=1)
    if spec.kind == "ht":
        weights = batch_ht_weights(g, d, W)
        return np.mean(Y * weights, axis=1)
    if spec.kind == "gcr_explicit":
        if not d.is_bernoulli:
            raise InputError("gcr_explicit needs a Bernoulli design")
        out = np.empty(R)
        for r in range(R):
            draw = draw_from_w(d, W[r])
            out[r] = gcr_explicit_estimate(
                g, Y[r], draw, d.clustering, d.p, spec.beta
            ).tte_hat
        return out
    # crd1
    if d.variant != "complete_gcr":
        raise InputError("crd1 needs a complete cluster design")
    out = np.empty(R)
    for r in range(R):
        draw = draw_from_w(d, W[r])
        out[r] = crd_beta1_estimate(g, Y[r], draw, d.clustering, d.k).tte_hat
    return out


def _analytic_bias(cfg: ExperimentConfig) -> float | None:
    spec = cfg.estimator
    if spec.kind == "ht":
        # Horvitz-Thompson is unbiased whenever its weights are defined
        # under a Bernoulli design; no closed form is kept for the complete
        # design, where full-contact units can bias it.
        return 0.0 if cfg.design.is_bernoulli else None
    beta = 1 if spec.kind == "crd1" else spec.beta
    return bias_exact(cfg.model, cfg.graph, cfg.design, beta)


def _var_bound(cfg: ExperimentConfig) -> float | None:
    spec = cfg.estimator
    if spec.kind == "ht":
        return None
    B = outcome_bound(cfg.model, cfg.graph)
    if B <= 0.0:
        return None
    beta = 1 if spec.kind == "crd1" else spec.beta
    stats = cluster_stats(cfg.graph, cfg.design.clustering)
    rep = variance_bound(
        cfg.graph, stats, cfg.design, beta, B, gamma_source=cfg.gamma_source
    )
    return rep.var_bound_pairwise


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run one experiment cell: R replicated draws, summary statistics.

    Replicate r draws its assignment from the stream (cfg.seed, r), so the
    report is identical no matter how replicates are scheduled. Empirical
    variance uses the population convention (divide by R).
    """
    d = cfg.design
    tte = true_tte(cfg.model)
    R = cfg.replications
    W = np.empty((R, d.m), dtype=np.int8)
    for r in range(R):
        W[r] = sample(d, cfg.seed, r).w
    t0 = time.perf_counter()
    estimates = replicate_estimates(cfg.graph, cfg.model, d, cfg.estimator, W)
    wall = time.perf_counter() - t0
    vals = estimates.tolist()
    mean_est = math.fsum(vals) / R
    bias = mean_est - tte
    var = math.fsum((e - mean_est) ** 2 for e in vals) / R
    mse = bias * bias + var
    return ExperimentReport(
        kind=cfg.estimator.kind,
        beta=cfg.estimator.beta,
        tag=cfg.tag,
        replications=R,
        seed=cfg.seed,
        true_tte=tte,
        mean_estimate=mean_est,
        empirical_bias=bias,
        empirical_variance=var,
        empirical_mse=mse,
        empirical_rmse=math.sqrt(mse),
        analytic_bias=_analytic_bias(cfg),
        var_bound=_var_bound(cfg),
        wall_time_s=wall,
    )


_METRICS = (
    "mean_estimate",
    "empirical_bias",
    "empirical_variance",
    "empirical_mse",
    "empirical_rmse",
    "analytic_bias",
    "var_bound",
)


def report_rows(report: ExperimentReport, include_timing: bool = True) -> list[dict]:
    """Flatten a report into tidy rows, one per metric.

    Timing is real elapsed time and therefore not reproducible; tests that
    compare emitted CSV byte-for-byte pass include_timing=False.
    """
    base = {
        "estimator": report.kind,
        "beta": "" if report.beta is None else report.beta,
        "tag": report.tag,
        "replications": report.replications,
        "true_tte": repr(report.true_tte),
    }
    rows = []
    for name in _METRICS:
        value = getattr(report, name)
        rows.append(dict(base, metric=name, value="" if value is None else repr(value)))
    if include_timing:
        rows.append(dict(base, metric="wall_time_s", value=repr(report.wall_time_s)))
    return rows


def exhaustive_expectation(
    g: InterferenceGraph,
    model: LowOrderModel,
    d: Design,
    spec: EstimatorSpec,
) -> tuple[float, float]:
    """Exact mean and variance of an estimator over the design's support.

    When the support is uniform (complete designs, Bernoulli at p = 1/2)
    the reduction is the plain average in support order, so a replicated
    run over exactly the support points reproduces this value bit for bit.
    """
    support = enumerate_support(d)
    W = np.stack([w for _, w in support])
    probs = [pr for pr, _ in support]
    vals = replicate_estimates(g, model, d, spec, W).tolist()
    if all(pr == probs[0] for pr in probs):
        mean = math.fsum(vals) / len(vals)
        var = math.fsum((e - mean) ** 2 for e in vals) / len(vals)
        return mean, var
    mean = math.fsum(pr * e for pr, e in zip(probs, vals))
    var = math.fsum(pr * (e - mean) ** 2 for pr, e in zip(probs, vals))
    return mean, var


def select_clustering(
    g: InterferenceGraph,
    candidates: Sequence[Clustering],
    design_for: Callable[[Clustering], Design],
    beta: int,
    B: float,
) -> tuple[int, list[tuple[int, BoundReport]]]:
    """Pick the candidate clustering with the lowest pairwise variance bound.

    Bounds use the quadform gamma source so every design family is scored
    by the same quantity. Ties break toward fewer clusters, then toward the
    earlier candidate. The full ranking comes back for audit.

    Returns
    -------
    (chosen, ranking)
        chosen indexes into candidates; ranking lists (candidate index,
        BoundReport) from best to worst.
    """
    if not candidates:
        raise InputError("no candidate clusterings")
    scored = []
    for idx, c in enumerate(candidates):
        d = design_for(c)
        rep = variance_bound(
            g, cluster_stats(g, c), d, beta, B, gamma_source="quadform"
        )
        scored.append((rep.var_bound_pairwise, c.m, idx, rep))
    scored.sort(key=lambda t: t[:3])
    ranking = [(idx, rep) for _, _, idx, rep in scored]
    return ranking[0][0], ranking


def rmse_ratio(
    g: InterferenceGraph,
    model: LowOrderModel,
    candidates: Sequence[Clustering],
    design_for: Callable[[Clustering], Design],
    spec: EstimatorSpec,
    replications: int,
    seed: int,
    chosen: int,
) -> tuple[float, list[float]]:
    """Simulated RMSE of the chosen candidate relative to the best candidate.

    Brute-forces every candidate with the same replication stream; a ratio
    of 1.0 means the bound-driven choice matched the oracle choice.
    """
    rmses = []
    for c in candidates:
        cfg = ExperimentConfig(
            graph=g,
            model=model,
            design=design_for(c),
            estimator=spec,
            replications=replications,
            seed=seed,
        )
        rmses.append(run_experiment(cfg).empirical_rmse)
    return rmses[chosen] / min(rmses), rmses


def mc_convergence_report(
    d: Design,
    g: InterferenceGraph,
    units: Sequence[int],
    beta: int,
    R_grid: Sequence[int],
    seeds: Sequence[int],
) -> dict[str, list[dict]]:
    """Frobenius error of Monte Carlo moment pseudoinverses vs analytic.

    Returns
    -------
    dict with two tidy tables: "detail" has one row per (R, seed, unit)
    with the Frobenius error; "summary" has per-R medians and standard
    deviations over all (seed, unit) pairs, with log10 columns ready for
    log-log plotting.
    """
    targets = {}
    for i in units:
        ground = tuple(
            sorted({int(d.clustering.assignment[j]) for j in g.in_neighbors[i]})
        )
        targets[i] = analytic_cluster_moments(d, ground, beta).M_pinv
    detail = []
    per_R: dict[int, list[float]] = {R: [] for R in R_grid}
    for R in R_grid:
        for seed in seeds:
            for i in units:
                mc = monte_carlo_moments(d, g, i, beta, R, seed)
                err = float(np.linalg.norm(mc.M_pinv - targets[i]))
                detail.append({"R": R, "seed": seed, "unit": i, "fro_error": err})
                per_R[R].append(err)
    summary = []
    for R in R_grid:
        errs = per_R[R]
        med = float(np.median(errs))
        summary.append(
            {
                "R": R,
                "median_fro_error": med,
                "std_fro_error": float(np.std(errs)),
                "log10_R": math.log10(R),
                "log10_median_fro_error": math.log10(max(med, 1e-300)),
            }
        )
    return {"detail": detail, "summary": summary}


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

_GIT_DESCRIBE: str | None = None


def git_describe() -> str:
    """Best-effort `git describe` of the source tree, else "unknown"."""
    global _GIT_DESCRIBE
    if _GIT_DESCRIBE is None:
        try:
            out = subprocess.run(
                ["git", "describe", "--always", "--dirty"],
                capture_output=True,
                text=True,
                timeout=10,
                cwd=Path(__file__).resolve().parent,
            )
            _GIT_DESCRIBE = out.stdout.strip() if out.returncode == 0 else "unknown"
        except OSError:
            _GIT_DESCRIBE = "unknown"
        if not _GIT_DESCRIBE:
            _GIT_DESCRIBE = "unknown"
    return _GIT_DESCRIBE


def write_csv(
    rows: Sequence[dict],
    fieldnames: Sequence[str],
    path: str | None = None,
    seed: int | None = None,
) -> None:
    """Write tidy rows as CSV with a trailing metadata comment block.

    path None writes to stdout. Values are written as-is (callers repr()
    floats they want round-trippable). The trailing comments record the
    seed and the source version so every output file is self-describing.
    """
    out: TextIO
    close = False
    if path is None:
        out = sys.stdout
    else:
        out = open(path, "w", encoding="utf-8", newline="")
        close = True
    try:
        out.write(",".join(fieldnames) + "\n")
        for row in rows:
            out.write(",".join(str(row.get(f, "")) for f in fieldnames) + "\n")
        if seed is not None:
            out.write(f"# seed={seed}\n")
        out.write(f"# git_describe={git_describe()}\n")
    finally:
        if close:
            out.close()
