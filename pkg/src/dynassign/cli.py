"""Command-line entry point.

Subcommands:
  solve            static assignment of a cost-matrix file
  backtest         replay a cohort under configured mechanisms, write reports
  train-predictor  fit and save a prediction ensemble
  serve            run the live assignment HTTP service
  gen-synthetic    write a synthetic pool/cohort/capacities triple

Exit codes: 0 success, 1 validation error (including unknown flags),
2 infeasibility, 3 I/O error.

Every filesystem-writing subcommand also writes a manifest recording the
resolved flags, the seed, input digests, output digests, and artifact
versions; re-running with the same inputs reproduces the outputs byte for
byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import (
    RESULT_SCHEMA,
    Cohort,
    emit_plot_data,
    run_backtest,
)
from .dataio import (
    apply_direction,
    canonical_json,
    read_capacities,
    read_cohort_csv,
    read_cost_matrix,
    read_pool,
    sha256_file,
    write_capacities,
    write_cohort_csv,
    write_pool,
)
from .errors import InfeasibleError, ValidationError
from .lap import AgentPool, CostMatrix, solve
from .mechanisms import MECHANISM_KINDS, MechanismConfig

_SIMULATED = ("min_risk", "approx_min_risk")
_DEFAULT_MECHANISMS = ["min_risk", "approx_min_risk", "weighted_cq", "sequential_cq"]

_GEN_SYNTHETIC_HELP = """\
Writes pool.csv, cohort.csv, and capacities.csv drawn from one generating
process: the score of item i at agent j is
    sigmoid(agent_effect_j + item_effect_i + interaction * <traits_i, w_j> + noise)
with agent effects ~ N(0, agent-sd^2), item effects ~ N(0, item-sd^2), trait
vectors standard normal, and independent N(0, noise-sd^2) noise per cell.
Costs are 1 - score. The historical pool and the cohort are drawn from the
same process, so the stationarity the simulation mechanisms rely on holds by
construction. Capacities split the cohort size evenly (earlier agents take
the remainder).

Seed contract: --seed fully determines every value through one master
SeedSequence; the same flags and seed always reproduce identical files.
"""


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _common_flags(parser):
    parser.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    parser.add_argument(
        "--direction",
        choices=("min", "max"),
        default="min",
        help="min: inputs are costs; max: inputs are scores, converted to 1-score",
    )
    parser.add_argument(
        "--format", choices=("json", "csv"), default="json", help="stdout format"
    )
    parser.add_argument(
        "--threads", type=int, default=0, help="cap kernel threads (0 = all cores)"
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="dynassign", description="dynamic assignment engine")
    parser.add_argument("--version", action="version", version=f"dynassign {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("solve", help="static assignment of a cost-matrix file")
    p.add_argument("--costs", required=True, help="CSV: header = agent ids, rows = items")
    p.add_argument("--capacities", help="CSV agent,capacity (default: 1 per agent)")
    p.add_argument("--out", help="also write the result document here")
    _common_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("backtest", help="replay a cohort under configured mechanisms")
    p.add_argument("--cohort", required=True, help="CSV item_id[,batch_id],<agents>")
    p.add_argument("--pool", required=True, help="historical pool CSV")
    p.add_argument("--capacities", required=True, help="CSV agent,capacity")
    p.add_argument("--out-dir", required=True, help="report directory")
    p.add_argument(
        "--mechanism",
        action="append",
        choices=MECHANISM_KINDS,
        help="repeatable; default: min_risk approx_min_risk weighted_cq sequential_cq",
    )
    p.add_argument("--m", type=int, help="simulation draws / ensemble members")
    p.add_argument("--lambda", dest="lam", type=float, default=0.2, help="weighted_cq mix")
    p.add_argument("--t", type=int, default=6, help="sequential_cq shortlist length")
    p.add_argument("--model", help="saved ensemble for predicted configs")
    p.add_argument(
        "--replications",
        type=int,
        default=1,
        help="re-run with seeds seed..seed+R-1 for confidence intervals",
    )
    _common_flags(p)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("train-predictor", help="fit and save a prediction ensemble")
    p.add_argument("--pool", required=True, help="historical pool CSV")
    p.add_argument("--capacities", required=True, help="CSV agent,capacity")
    p.add_argument("--n", type=int, required=True, help="cohort length to simulate")
    p.add_argument("--m", type=int, default=10, help="ensemble members")
    p.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    p.add_argument("--out", required=True, help="model file to write")
    _common_flags(p)
    p.set_defaults(func=cmd_train_predictor)

    p = sub.add_parser("serve", help="run the live assignment HTTP service")
    p.add_argument("--journal-dir", default="journals", help="session journal directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    _common_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser(
        "gen-synthetic",
        help="write a synthetic pool/cohort/capacities triple",
        description=_GEN_SYNTHETIC_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--agents", type=int, default=4, help="number of agents")
    p.add_argument("--items", type=int, default=20, help="cohort length")
    p.add_argument("--pool-size", type=int, default=100, help="historical pool rows")
    p.add_argument("--agent-sd", type=float, default=0.6)
    p.add_argument("--item-sd", type=float, default=0.8)
    p.add_argument("--interaction", type=float, default=1.5)
    p.add_argument("--noise-sd", type=float, default=0.25)
    p.add_argument("--traits", type=int, default=3, help="latent trait dimensions")
    p.add_argument("--out-dir", required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_gen_synthetic)

    return parser


def _apply_threads(n: int) -> None:
    if n and n > 0:
        import numba

        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_DEFAULT_NUM_THREADS)))


def _flags_document(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _manifest(command, args, inputs: dict, outputs: list[Path]) -> dict:
    return {
        "schema": "v1",
        "command": command,
        "artifact_versions": {
            "dynassign": __version__,
            "result_schema": RESULT_SCHEMA,
            "ensemble_format": 1,
        },
        "flags": _flags_document(args),
        "seed": args.seed,
        "inputs": {
            name: {"path": str(path), "sha256": sha256_file(path)}
            for name, path in sorted(inputs.items())
        },
        "outputs": {p.name: sha256_file(p) for p in sorted(outputs)},
    }


def _write_manifest(path: Path, command, args, inputs, outputs) -> Path:
    path.write_text(canonical_json(_manifest(command, args, inputs, outputs)))
    return path


def _print_doc(doc: dict, fmt: str, csv_rows) -> None:
    if fmt == "json":
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        for row in csv_rows:
            print(",".join(str(c) for c in row))


# --- subcommands ---------------------------------------------------------------


def cmd_solve(args) -> int:
    _apply_threads(args.threads)
    items, agents, values = read_cost_matrix(args.costs)
    values = apply_direction(values, args.direction)
    if args.capacities:
        pool = read_capacities(args.capacities)
        if pool.agents != agents:
            raise ValidationError(
                f"capacities agents {pool.agents} do not match cost columns {agents}"
            )
    else:
        pool = AgentPool(agents, (1,) * len(agents))
    got = solve(CostMatrix(items, agents, values), pool)
    doc = {
        "schema": RESULT_SCHEMA,
        "items": list(items),
        "agents": list(agents),
        "assignment": [
            {"item": i, "agent": a, "unit": u, "cost": float(values[k, agents.index(a)])}
            for k, (i, a, u) in enumerate(zip(got.items, got.agents, got.units))
        ],
        "total_cost": got.total,
        "mean_cost": got.mean,
    }
    rows = [("item", "agent", "cost")]
    rows += [(e["item"], e["agent"], f"{e['cost']:.17g}") for e in doc["assignment"]]
    rows += [("total", "", f"{got.total:.17g}")]
    _print_doc(doc, args.format, rows)
    if args.out:
        out = Path(args.out)
        out.write_text(canonical_json(doc))
        inputs = {"costs": args.costs}
        if args.capacities:
            inputs["capacities"] = args.capacities
        _write_manifest(out.with_name(out.name + ".manifest.json"), "solve", args, inputs, [out])
    return 0


def _backtest_configs(args) -> list[MechanismConfig]:
    kinds = args.mechanism or list(_DEFAULT_MECHANISMS)
    configs = []
    for kind in kinds:
        draws = args.m if kind in (*_SIMULATED, "predicted") else None
        configs.append(MechanismConfig(kind, n_draws=draws, lam=args.lam, t=args.t))
    return configs


def cmd_backtest(args) -> int:
    _apply_threads(args.threads)
    if args.replications < 1:
        raise ValidationError("--replications must be at least 1")
    items, batch_ids, agents, costs = read_cohort_csv(args.cohort, args.direction)
    pool = read_pool(args.pool, args.direction)
    caps = read_capacities(args.capacities)
    cohort = Cohort(items=items, agents=agents, costs=costs, batch_ids=batch_ids)
    configs = _backtest_configs(args)

    models = None
    if args.model:
        from .predictor import load_ensemble_file

        ensemble = load_ensemble_file(args.model)
        models = {i: ensemble for i, c in enumerate(configs) if c.kind == "predicted"}

    results = [
        run_backtest(cohort, pool, caps, configs, run_seed=args.seed + r, models=models)
        for r in range(args.replications)
    ]

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result_path = out_dir / "result.json"
    if args.replications == 1:
        result_path.write_text(results[0].to_json())
    else:
        result_path.write_text(
            canonical_json(
                {"schema": RESULT_SCHEMA, "replications": [r.to_document() for r in results]}
            )
        )
    plot_path = out_dir / "plot.csv"
    emit_plot_data(results, plot_path)
    trace_path = out_dir / "trace.jsonl"
    trace_path.write_text(results[0].trace_jsonl())

    from .figures import render_report_figures

    figure_paths = render_report_figures(results, out_dir)

    inputs = {"cohort": args.cohort, "pool": args.pool, "capacities": args.capacities}
    if args.model:
        inputs["model"] = args.model
    outputs = [result_path, plot_path, trace_path, *figure_paths]
    manifest_path = _write_manifest(out_dir / "manifest.json", "backtest", args, inputs, outputs)

    doc = results[0].to_document()
    rows = [("mechanism", "mean_score")]
    rows += [
        ("static_optimal", f"{results[0].optimal.mean_score:.6f}"),
        ("greedy", f"{results[0].greedy.mean_score:.6f}"),
    ]
    rows += [(r.name, f"{r.mean_score:.6f}") for r in results[0].runs]
    _print_doc(
        {
            "schema": RESULT_SCHEMA,
            "out_dir": str(out_dir),
            "outputs": sorted(p.name for p in (*outputs, manifest_path)),
            "baselines": doc["baselines"],
            "runs": doc["runs"],
        },
        args.format,
        rows,
    )
    return 0


def cmd_train_predictor(args) -> int:
    _apply_threads(args.threads)
    from .predictor import PredictorConfig, ensemble_summary, save_ensemble, train_ensemble

    pool = read_pool(args.pool, args.direction)
    caps = read_capacities(args.capacities)
    if pool.agents != caps.agents:
        raise ValidationError("pool and capacities agents differ")
    if args.n < 1 or args.m < 1:
        raise ValidationError("--n and --m must be positive")
    ensemble = train_ensemble(
        pool, caps, args.n, args.m, PredictorConfig(folds=args.folds), args.seed
    )
    out = Path(args.out)
    save_ensemble(ensemble, out)
    summary_path = out.with_name(out.name + ".summary.txt")
    summary_path.write_text(ensemble_summary(ensemble))
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        "train-predictor",
        args,
        {"pool": args.pool, "capacities": args.capacities},
        [out, summary_path],
    )
    doc = {
        "schema": RESULT_SCHEMA,
        "model": str(out),
        "sha256": sha256_file(out),
        "agents": list(ensemble.agents),
        "members": len(ensemble.members),
    }
    _print_doc(doc, args.format, [("model", "members"), (str(out), len(ensemble.members))])
    return 0


def cmd_serve(args) -> int:
    _apply_threads(args.threads)
    from .service import run_server

    run_server(args.journal_dir, host=args.host, port=args.port)
    return 0


def cmd_gen_synthetic(args) -> int:
    from .synth import SyntheticSpec, generate_instance

    spec = SyntheticSpec(
        n_agents=args.agents,
        n_items=args.items,
        pool_size=args.pool_size,
        agent_sd=args.agent_sd,
        item_sd=args.item_sd,
        interaction=args.interaction,
        noise_sd=args.noise_sd,
        n_traits=args.traits,
    )
    instance = generate_instance(spec, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    # --direction max writes scores so the files re-ingest with the same flag
    pool_values = instance.pool.values if args.direction == "min" else 1.0 - instance.pool.values
    cohort_values = (
        instance.cohort_costs if args.direction == "min" else instance.cohort_scores
    )
    pool_path = out_dir / "pool.csv"
    write_pool(pool_path, instance.agents, pool_values)
    cohort_path = out_dir / "cohort.csv"
    write_cohort_csv(
        cohort_path,
        tuple(f"i{k}" for k in range(args.items)),
        instance.agents,
        cohort_values,
    )
    caps_path = out_dir / "capacities.csv"
    write_capacities(caps_path, AgentPool(instance.agents, instance.capacity))
    outputs = [pool_path, cohort_path, caps_path]
    _write_manifest(out_dir / "manifest.json", "gen-synthetic", args, {}, outputs)
    doc = {
        "schema": RESULT_SCHEMA,
        "out_dir": str(out_dir),
        "outputs": sorted(p.name for p in outputs),
        "agents": list(instance.agents),
        "capacity": list(instance.capacity),
    }
    _print_doc(doc, args.format, [("file",)] + [(p.name,) for p in outputs])
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"dynassign: {exc}", file=sys.stderr)
        return 1
    except InfeasibleError as exc:
        print(f"dynassign: infeasible: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"dynassign: i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
