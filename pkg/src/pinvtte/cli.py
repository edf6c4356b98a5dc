"""Command line front end.

Report subcommands: ``simulate`` (replicated experiments), ``bounds`` (one
variance/bias bound report), ``select`` (rank candidate clusterings),
``mc-moments`` (Monte Carlo moment estimation), and ``oracle``
(exhaustive expectation over a design's support). Artifact subcommands:
``cluster`` and ``model gen`` write clustering/model text files, and
``estimate`` runs one estimator on one sampled draw. Every option can also
be given in a flat key=value config file via --config; explicit flags win.
Reports are CSV, to --out or stdout.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields as dataclass_fields

import numpy as np

from .bounds import variance_bound
from .clustering import (
    Clustering,
    cluster_stats,
    contiguous_cycle_clusters,
    load_clustering,
    louvain,
    save_clustering,
    singleton_clustering,
)
from .design import Design, bernoulli_gcr, bernoulli_unit, complete_gcr, sample
from .errors import (
    CapacityError,
    GeometryError,
    InputError,
    PositivityError,
    PreconditionError,
)
from .estimator import (
    crd_beta1_estimate,
    gcr_explicit_estimate,
    ht_estimate,
    pinv_estimate,
)
from .graph import InterferenceGraph, cycle_power, load_edge_list, sbm_sample
from .harness import (
    EstimatorSpec,
    ExperimentConfig,
    exhaustive_expectation,
    mc_convergence_report,
    report_rows,
    run_experiment,
    select_clustering,
    write_csv,
)
from .moments import analytic_cluster_moments, monte_carlo_moments
from .outcomes import (
    LowOrderModel,
    evaluate,
    gen_cycle_model,
    gen_named_model,
    load_model,
    outcome_bound,
    save_model,
    true_tte,
)

__all__ = ["main"]

_ERRORS = (InputError, GeometryError, CapacityError, PositivityError, PreconditionError)


def _parse_config_file(path: str) -> dict[str, str]:
    """Flat key=value lines; # starts a comment; blank lines are skipped."""
    vals: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise InputError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            vals[key.strip().replace("-", "_")] = value.strip()
    return vals


class _Opts:
    """Merge parsed flags over config-file values over defaults."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        cfg_path = self._args.get("config")
        self._file = _parse_config_file(cfg_path) if cfg_path else {}

    def get(self, name, parse, default=None, required=False):
        raw = self._args.get(name)
        if raw is None:
            raw = self._file.get(name)
        if raw is None:
            if required:
                raise InputError(f"missing required option --{name.replace('_', '-')}")
            return default
        return parse(raw)


def _int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"expected an integer, got {raw!r}")


def _float(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise InputError(f"expected a number, got {raw!r}")


def _str(raw: str) -> str:
    return raw


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise InputError(f"expected true/false, got {raw!r}")


def _ints(raw: str) -> list[int]:
    return [_int(part) for part in raw.split(",") if part.strip()]


def _floats(raw: str) -> list[float]:
    return [_float(part) for part in raw.split(",") if part.strip()]


def _specs(raw: str) -> list[EstimatorSpec]:
    return [EstimatorSpec.parse(part) for part in raw.split(",") if part.strip()]


def _gamma(raw: str) -> str:
    # "mc" is the short CLI spelling of the Monte Carlo source
    names = {
        "closed": "closed",
        "quadform": "quadform",
        "mc": "monte_carlo",
        "monte_carlo": "monte_carlo",
    }
    if raw not in names:
        raise InputError(f"gamma source must be closed, quadform, or mc; got {raw!r}")
    return names[raw]


# ---------------------------------------------------------------------------
# builders shared by the subcommands
# ---------------------------------------------------------------------------


def _build_graph(o: _Opts) -> InterferenceGraph:
    kind = o.get("graph", _str, default="cycle")
    if kind == "cycle":
        n = o.get("n", _int, default=120)
        return cycle_power(n, o.get("radius", _int, default=3))
    if kind == "sbm":
        n = o.get("n", _int, default=200)
        return sbm_sample(
            n,
            o.get("blocks", _int, default=8),
            o.get("pi_in", _float, default=0.5),
            o.get("pi_out", _float, default=0.0),
            o.get("graph_seed", _int, default=0),
        )
    return load_edge_list(kind)


def _build_clustering(o: _Opts, g: InterferenceGraph, width: int | None = None) -> Clustering:
    kind = o.get("clustering", _str, default="singleton")
    if kind == "singleton":
        return singleton_clustering(g.n)
    if kind == "contiguous":
        w = width if width is not None else o.get("width", _int, default=1)
        return contiguous_cycle_clusters(g.n, w)
    if kind == "louvain":
        return louvain(
            g,
            o.get("resolution", _float, default=1.0),
            o.get("cluster_seed", _int, default=0),
        )
    return load_clustering(kind, g.n)


def _build_model(o: _Opts, g: InterferenceGraph, required: bool = True) -> LowOrderModel | None:
    kind = o.get("model", _str)
    if kind is None:
        if required:
            raise InputError("missing required option --model")
        return None
    if kind == "cycle":
        return gen_cycle_model(g, o.get("beta_star", _int, default=1))
    if kind in ("null", "weak", "strong"):
        return gen_named_model(g, kind, o.get("model_seed", _int, default=0))
    return load_model(kind, g.n)


_DESIGN_NAMES = {
    "bern": "bernoulli_unit",
    "bernoulli_unit": "bernoulli_unit",
    "gcr": "bernoulli_gcr",
    "bernoulli_gcr": "bernoulli_gcr",
    "crd": "complete_gcr",
    "complete_gcr": "complete_gcr",
}


def _design_kind(o: _Opts) -> str:
    raw = o.get("design", _str, default="gcr")
    if raw not in _DESIGN_NAMES:
        raise InputError(f"unknown design {raw!r} (expected bern, gcr, or crd)")
    return _DESIGN_NAMES[raw]


def _build_design(o: _Opts, g: InterferenceGraph, c: Clustering) -> Design:
    kind = _design_kind(o)
    if kind == "bernoulli_unit":
        return bernoulli_unit(g.n, o.get("p", _float, default=0.25))
    if kind == "bernoulli_gcr":
        return bernoulli_gcr(c, o.get("p", _float, default=0.25))
    return complete_gcr(c, o.get("k", _int, required=True))


def _resolve_B(o: _Opts, g: InterferenceGraph, model: LowOrderModel | None) -> float:
    B = o.get("B_bound", _float)
    if B is not None:
        return B
    if model is None:
        raise InputError("give --B-bound or a --model to derive the outcome bound from")
    return outcome_bound(model, g)


def _write_text(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# report subcommands
# ---------------------------------------------------------------------------


def _cmd_simulate(o: _Opts) -> None:
    g = _build_graph(o)
    model = _build_model(o, g)
    specs = o.get("estimator", _specs, default=[EstimatorSpec("pinv", 1)])
    replications = o.get("replications", _int, default=500)
    seed = o.get("seed", _int, default=0)
    gamma = o.get("gamma", _gamma, default="quadform")
    clustering_kind = o.get("clustering", _str, default="singleton")
    if clustering_kind == "contiguous":
        widths = o.get("width", _ints, default=[1])
        cells = [(f"w={w}", _build_clustering(o, g, width=w)) for w in widths]
    else:
        cells = [("", _build_clustering(o, g))]
    rows = []
    for tag, c in cells:
        d = _build_design(o, g, c)
        for spec in specs:
            cfg = ExperimentConfig(
                graph=g,
                model=model,
                design=d,
                estimator=spec,
                replications=replications,
                seed=seed,
                gamma_source=gamma,
                tag=tag,
            )
            rows.extend(report_rows(run_experiment(cfg)))
    names = ["estimator", "beta", "tag", "replications", "true_tte", "metric", "value"]
    write_csv(rows, names, o.get("out", _str), seed=seed)


def _cmd_bounds(o: _Opts) -> None:
    g = _build_graph(o)
    c = _build_clustering(o, g)
    d = _build_design(o, g, c)
    model = _build_model(o, g, required=False)
    beta = o.get("beta", _int, default=1)
    B = _resolve_B(o, g, model)
    rep = variance_bound(
        g,
        cluster_stats(g, c),
        d,
        beta,
        B,
        gamma_source=o.get("gamma", _gamma, default="quadform"),
        model=model,
        monotone=o.get("monotone", _bool, default=False),
    )
    names = [f.name for f in dataclass_fields(rep)]

    def cell(v):
        if v is None:
            return ""
        return repr(v) if isinstance(v, float) else v

    row = {k: cell(getattr(rep, k)) for k in names}
    write_csv([row], names, o.get("out", _str))


def _cmd_select(o: _Opts) -> None:
    g = _build_graph(o)
    model = _build_model(o, g, required=False)
    grid = o.get(
        "resolution_grid", _floats, default=[0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0]
    )
    cluster_seed = o.get("cluster_seed", _int, default=0)
    candidates = [louvain(g, res, cluster_seed) for res in grid]
    design_kind = _design_kind(o)
    if design_kind == "bernoulli_gcr":
        p = o.get("p", _float, default=0.25)

        def design_for(c: Clustering) -> Design:
            return bernoulli_gcr(c, p)

    elif design_kind == "complete_gcr":
        k = o.get("k", _int, required=True)

        def design_for(c: Clustering) -> Design:
            return complete_gcr(c, k)

    else:
        raise InputError("select needs a cluster design (gcr or crd)")
    beta = o.get("beta", _int, default=1)
    B = _resolve_B(o, g, model)
    chosen, ranking = select_clustering(g, candidates, design_for, beta, B)
    rows = []
    for rank, (idx, rep) in enumerate(ranking):
        rows.append(
            {
                "rank": rank,
                "candidate": idx,
                "resolution": repr(grid[idx]),
                "clusters": candidates[idx].m,
                "var_bound_pairwise": repr(rep.var_bound_pairwise),
                "var_bound_simplified": repr(rep.var_bound_simplified),
                "C_max": rep.C_max,
                "N_max": rep.N_max,
                "chosen": int(idx == chosen),
            }
        )
    names = list(rows[0].keys())
    write_csv(rows, names, o.get("out", _str), seed=cluster_seed)


def _cmd_oracle(o: _Opts) -> None:
    g = _build_graph(o)
    model = _build_model(o, g)
    c = _build_clustering(o, g)
    d = _build_design(o, g, c)
    specs = o.get("estimator", _specs, default=[EstimatorSpec("pinv", 1)])
    rows = []
    for spec in specs:
        mean, var = exhaustive_expectation(g, model, d, spec)
        tte = true_tte(model)
        rows.append(
            {
                "estimator": spec.kind,
                "beta": "" if spec.beta is None else spec.beta,
                "true_tte": repr(tte),
                "mean": repr(mean),
                "variance": repr(var),
                "bias": repr(mean - tte),
            }
        )
    names = ["estimator", "beta", "true_tte", "mean", "variance", "bias"]
    write_csv(rows, names, o.get("out", _str))


def _cmd_mc_moments(o: _Opts) -> None:
    g = _build_graph(o)
    c = _build_clustering(o, g)
    d = _build_design(o, g, c)
    beta = o.get("beta", _int, default=1)
    samples = o.get("samples", _int)
    if samples is not None:
        # single-shot mode: one unit, one R, one seed; emit the estimated
        # matrix, its pseudoinverse, and the Frobenius error vs analytic
        unit = o.get("unit", _int, default=0)
        seed = o.get("seed", _int, default=0)
        mc = monte_carlo_moments(d, g, unit, beta, samples, seed)
        ground = tuple(
            sorted({int(d.clustering.assignment[j]) for j in g.in_neighbors[unit]})
        )
        analytic = analytic_cluster_moments(d, ground, beta)
        err = float(np.linalg.norm(mc.M_pinv - analytic.M_pinv))
        rows = []
        for section, mat in (("M", mc.M), ("M_pinv", mc.M_pinv)):
            for r in range(mat.shape[0]):
                for col in range(mat.shape[1]):
                    rows.append(
                        {
                            "section": section,
                            "row": r,
                            "col": col,
                            "value": repr(float(mat[r, col])),
                        }
                    )
        rows.append({"section": "fro_error", "row": "", "col": "", "value": repr(err)})
        write_csv(rows, ["section", "row", "col", "value"], o.get("out", _str), seed=seed)
        return
    tables = mc_convergence_report(
        d,
        g,
        o.get("units", _ints, default=[0]),
        beta,
        o.get("r_grid", _ints, default=[400, 4000, 40000]),
        o.get("mc_seeds", _ints, default=[0, 1, 2, 3, 4]),
    )
    names = [
        "table",
        "R",
        "seed",
        "unit",
        "fro_error",
        "median_fro_error",
        "std_fro_error",
        "log10_R",
        "log10_median_fro_error",
    ]
    rows = []
    for row in tables["detail"]:
        rows.append(dict(row, table="detail", fro_error=repr(row["fro_error"])))
    for row in tables["summary"]:
        out = {k: repr(v) for k, v in row.items() if k != "R"}
        rows.append(dict(out, table="summary", R=row["R"]))
    write_csv(rows, names, o.get("out", _str))


# ---------------------------------------------------------------------------
# artifact subcommands
# ---------------------------------------------------------------------------


def _cmd_cluster(o: _Opts) -> None:
    g = _build_graph(o)
    method = o.get("method", _str, default="louvain")
    if method == "louvain":
        c = louvain(
            g, o.get("resolution", _float, default=1.0), o.get("seed", _int, default=0)
        )
    elif method == "cycle":
        c = contiguous_cycle_clusters(g.n, o.get("width", _int, required=True))
    elif method == "singleton":
        c = singleton_clustering(g.n)
    elif method == "file":
        c = load_clustering(o.get("in", _str, required=True), g.n)
    else:
        raise InputError(f"unknown clustering method {method!r}")
    out = o.get("out", _str)
    if out is None:
        _write_text(
            "".join(f"{i}\t{c.assignment[i]}\n" for i in range(c.n)), None
        )
    else:
        save_clustering(c, out)


def _cmd_model(o: _Opts) -> None:
    action = o.get("action", _str)
    if action != "gen":
        raise InputError(f"model supports the 'gen' action, got {action!r}")
    g = _build_graph(o)
    kind = o.get("kind", _str, required=True)
    if kind == "cycle":
        model = gen_cycle_model(g, o.get("beta_star", _int, default=1))
    elif kind in ("null", "weak", "strong"):
        model = gen_named_model(g, kind, o.get("seed", _int, default=0))
    else:
        raise InputError(f"unknown model kind {kind!r}")
    out = o.get("out", _str)
    if out is None:
        lines = []
        for i, cmap in enumerate(model.coeffs):
            for s, val in sorted(cmap.items(), key=lambda kv: (len(kv[0]), kv[0])):
                key = ",".join(str(j) for j in s) if s else "-"
                lines.append(f"{i}\t{key}\t{val!r}\n")
        _write_text("".join(lines), None)
    else:
        save_model(model, out)


def _cmd_estimate(o: _Opts) -> None:
    g = _build_graph(o)
    model = _build_model(o, g)
    c = _build_clustering(o, g)
    d = _build_design(o, g, c)
    kind = o.get("estimator", _str, default="pinv")
    if ":" in kind:
        spec = EstimatorSpec.parse(kind)
    elif kind in ("pinv", "gcr_explicit"):
        spec = EstimatorSpec(kind, o.get("beta", _int, default=1))
    else:
        spec = EstimatorSpec(kind)
    seed = o.get("seed", _int, default=0)
    draw = sample(d, seed, o.get("replicate", _int, default=0))
    Y = evaluate(model, g, draw.z)
    if spec.kind == "pinv":
        breakdown = pinv_estimate(g, Y, draw, d, spec.beta)
    elif spec.kind == "gcr_explicit":
        if not d.is_bernoulli:
            raise InputError("gcr_explicit needs a Bernoulli design")
        breakdown = gcr_explicit_estimate(g, Y, draw, d.clustering, d.p, spec.beta)
    elif spec.kind == "ht":
        breakdown = ht_estimate(g, Y, draw, d)
    else:
        if d.variant != "complete_gcr":
            raise InputError("crd1 needs a complete cluster design")
        breakdown = crd_beta1_estimate(g, Y, draw, d.clustering, d.k)
    rows = [
        {
            "estimator": breakdown.kind,
            "beta": "" if spec.beta is None else spec.beta,
            "metric": "tte_hat",
            "unit": "",
            "value": repr(breakdown.tte_hat),
        }
    ]
    if o.get("weights", _bool, default=False):
        for i, wi in enumerate(breakdown.weights):
            rows.append(
                {
                    "estimator": breakdown.kind,
                    "beta": "" if spec.beta is None else spec.beta,
                    "metric": "weight",
                    "unit": i,
                    "value": repr(float(wi)),
                }
            )
    names = ["estimator", "beta", "metric", "unit", "value"]
    write_csv(rows, names, o.get("out", _str), seed=seed)


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

_GRAPH_OPTS = ["graph", "n", "radius", "blocks", "pi-in", "pi-out", "graph-seed"]
_CLUSTER_OPTS = ["clustering", "width", "resolution", "cluster-seed"]
_MODEL_OPTS = ["model", "beta-star", "model-seed"]
_DESIGN_OPTS = ["design", "p", "k"]
_IO_OPTS = ["out", "config"]

_SUBCOMMANDS = {
    "simulate": (
        _cmd_simulate,
        _GRAPH_OPTS + _CLUSTER_OPTS + _MODEL_OPTS + _DESIGN_OPTS + _IO_OPTS
        + ["estimator", "replications", "seed", "gamma"],
        "run a replicated experiment and emit tidy metric rows",
    ),
    "bounds": (
        _cmd_bounds,
        _GRAPH_OPTS + _CLUSTER_OPTS + _MODEL_OPTS + _DESIGN_OPTS + _IO_OPTS
        + ["beta", "B-bound", "gamma", "monotone"],
        "compute one variance/bias bound report",
    ),
    "select": (
        _cmd_select,
        _GRAPH_OPTS + _MODEL_OPTS + _DESIGN_OPTS + _IO_OPTS
        + ["resolution-grid", "cluster-seed", "beta", "B-bound"],
        "rank candidate clusterings by variance bound",
    ),
    "oracle": (
        _cmd_oracle,
        _GRAPH_OPTS + _CLUSTER_OPTS + _MODEL_OPTS + _DESIGN_OPTS + _IO_OPTS
        + ["estimator"],
        "exhaustive mean and variance over the design support",
    ),
    "mc-moments": (
        _cmd_mc_moments,
        _GRAPH_OPTS + _CLUSTER_OPTS + _DESIGN_OPTS + _IO_OPTS
        + ["beta", "units", "r-grid", "mc-seeds", "unit", "samples", "seed"],
        "Monte Carlo moment-estimation tables",
    ),
    "cluster": (
        _cmd_cluster,
        _GRAPH_OPTS + _IO_OPTS + ["method", "resolution", "width", "seed", "in"],
        "build a clustering and write the unit/label file",
    ),
    "model": (
        _cmd_model,
        _GRAPH_OPTS + _IO_OPTS + ["kind", "beta-star", "seed"],
        "generate a response model and write the coefficient file",
    ),
    "estimate": (
        _cmd_estimate,
        _GRAPH_OPTS + _CLUSTER_OPTS + _MODEL_OPTS + _DESIGN_OPTS + _IO_OPTS
        + ["estimator", "beta", "seed", "replicate", "weights"],
        "run one estimator on one sampled draw",
    ),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pinvtte",
        description="Design-based treatment effect estimation under interference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, opts, help_text) in _SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        if name == "model":
            sp.add_argument("action", choices=["gen"])
        for opt in opts:
            sp.add_argument(f"--{opt}", type=str, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handler = _SUBCOMMANDS[args.command][0]
    try:
        handler(_Opts(args))
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
