"""Batch command line wiring the fitters, benchmarks and pipelines.

Every subcommand validates and loads its inputs first, computes, then
writes its outputs plus a manifest.json recording the tool version, the
parameters and every seed, so a run can be reproduced exactly.  Nothing
is written until the inputs have loaded, and manifests carry no
timestamps or absolute paths, so reruns with the same arguments emit
identical bytes.  Exit codes: 0 success, 2 usage or validation failure,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import pandas as pd

from . import __version__
from .archetypes import FitOptions, fit_aa, model_from_json, write_model_json
from .archetypoids import fit_ada
from .data import DataMatrix
from .detect import _experiment_options, inclusion_experiment, radab, \
    radab_metrics_experiment
from .errors import InputError, NumericError
from .fdbasis import (
    BasisSystem,
    FunctionalDataset,
    functional_fit,
    select_basis_count,
    smooth,
    standardize,
)
from .finance import (
    DEFAULT_BASIS_M,
    DEFAULT_MAX_MISSING,
    DEFAULT_START_DATE,
    DEFAULT_WINDOW,
    UNKNOWN_SECTOR,
    build_features,
    build_functional_panel,
    filter_missing,
    load_panel,
)
from .losses import LossSpec, TuningPolicy
from .robust import fit_robust_aa
from .simgen import (
    ContaminationSpec,
    WaveformSpec,
    curves_from_csv,
    curves_to_csv,
    gen_waveform,
    waveform_components,
    waveform_manifest,
)
from .taxonomy import (
    TaxonomyConfig,
    assign_clusters,
    assignments_frame,
    export_network,
    sector_weights,
)

_EXIT_OK = 0
_EXIT_USAGE = 2
_EXIT_NUMERIC = 3


def _write_json(payload: dict, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _prepare_out(out) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(subcommand: str, parameters: dict, seeds, outputs) -> dict:
    return {
        "tool": "robarch",
        "version": __version__,
        "subcommand": subcommand,
        "parameters": parameters,
        "seeds": [int(s) for s in seeds],
        "outputs": sorted(str(name) for name in outputs),
    }


def _options_payload(options: FitOptions) -> dict:
    return {
        "restarts": options.restarts,
        "max_iters": options.max_iters,
        "rel_tol": options.rel_tol,
        "penalty_weight": options.penalty_weight,
    }


def _fit_options(args, seed=None) -> FitOptions | None:
    """FitOptions from explicit flags only; None when nothing was set.

    Returning None lets library entry points apply their own defaults
    (the replicated experiments use a cheaper configuration than the
    fitters).  Passing a seed always forces a concrete object.
    """
    kwargs = {}
    for name in ("restarts", "max_iters", "rel_tol"):
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    if seed is None and not kwargs:
        return None
    if seed is not None:
        kwargs["seed"] = seed
    return FitOptions(**kwargs)


def _loss_from_args(args) -> LossSpec:
    if args.loss == "squared":
        if args.policy is not None:
            raise InputError("--policy applies only to --loss bisquare")
        return LossSpec.squared()
    return LossSpec.bisquare(args.policy or "median6")


def _parse_policies(text: str) -> list[TuningPolicy]:
    policies = [TuningPolicy.parse(p) for p in text.split(",") if p.strip()]
    if not policies:
        raise InputError("at least one tuning policy is required")
    return policies


def _read_sector_map(path) -> dict[str, str]:
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise InputError(f"cannot read sector map from {path}: {exc}") from exc
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    if "symbol" not in frame.columns or "sector" not in frame.columns:
        raise InputError(f"{path}: sector map needs symbol and sector columns")
    return {str(r.symbol): str(r.sector) for r in frame.itertuples()}


def _archetype_columns(k: int) -> list[str]:
    return [f"A{j + 1}" for j in range(k)]


def _write_weight_csvs(model, labels, out: Path) -> list[str]:
    cols = _archetype_columns(model.k)
    alpha = pd.DataFrame(model.alpha, index=labels, columns=cols)
    alpha.to_csv(out / "alpha.csv", index_label="record")
    beta = pd.DataFrame(model.beta, index=cols, columns=labels)
    beta.to_csv(out / "beta.csv", index_label="archetype")
    return ["alpha.csv", "beta.csv"]


def _maybe_figures(args, out: Path) -> None:
    if getattr(args, "figures", False):
        from .plots import render_run

        for path in render_run(out):
            print(f"figure: {path}")


def _run_stage(name: str, func, *func_args, **func_kwargs):
    """Run one pipeline stage, prefixing any domain error with its name."""
    try:
        return func(*func_args, **func_kwargs)
    except (InputError, NumericError) as exc:
        raise type(exc)(f"{name}: {exc}") from exc


# ---------------------------------------------------------------- fit


def cmd_fit(args) -> None:
    loss = _loss_from_args(args)
    options = _fit_options(args, seed=args.seed)
    if args.sidecar is not None:
        dataset = FunctionalDataset.from_csv(args.input, args.sidecar)
        labels = dataset.record_labels
        model = functional_fit(dataset, args.k, options, loss, mode=args.mode)
    else:
        matrix = DataMatrix.from_csv(args.input)
        labels = matrix.row_labels
        if args.mode == "ada":
            model = fit_ada(matrix, args.k, options, loss)
        elif loss.family == "bisquare":
            model = fit_robust_aa(matrix, args.k, options, loss)
        else:
            model = fit_aa(matrix, args.k, options)

    out = _prepare_out(args.out)
    write_model_json(model, out / "model.json", row_labels=labels)
    outputs = ["model.json"] + _write_weight_csvs(model, labels, out)
    parameters = {
        "input": args.input,
        "sidecar": args.sidecar,
        "mode": args.mode,
        "k": args.k,
        "loss": args.loss,
        "policy": loss.policy.label() if loss.policy else None,
        "options": _options_payload(options),
    }
    manifest = _manifest("fit", parameters, [args.seed], outputs + ["manifest.json"])
    _write_json(manifest, out / "manifest.json")
    print(f"fit: mode={args.mode} k={model.k} "
          f"objective={model.objective:.6g} -> {out}")
    _maybe_figures(args, out)


# ----------------------------------------------------------- simulate


def _simulate_waveform(args, out: Path) -> tuple[dict, list[str]]:
    spec = WaveformSpec(n_per_class=args.n_per_class, noise_sd=args.noise_sd)
    sample = gen_waveform(spec, args.seed)
    labels = [f"r{i}_c{c}" for i, c in enumerate(sample.class_labels)]
    curves_to_csv(sample.curves, spec.grid, out / "curves.csv", labels=labels)
    components = waveform_components(spec.grid)
    curves_to_csv(components, spec.grid, out / "components.csv",
                  labels=[f"h{j + 1}" for j in range(components.shape[0])])
    parameters = {
        "experiment": "waveform",
        "n_per_class": spec.n_per_class,
        "noise_sd": spec.noise_sd,
    }
    manifest = _manifest("simulate", parameters, [args.seed],
                         ["curves.csv", "components.csv", "manifest.json"])
    manifest["generator"] = waveform_manifest(spec, args.seed, sample)
    return manifest, ["curves.csv"]


def _simulate_table(args, out: Path) -> tuple[dict, list[str]]:
    spec = ContaminationSpec(n=args.n, contamination_rate=args.cr)
    options = _fit_options(args) or _experiment_options()
    if args.experiment == "contamination-inclusion":
        policies = _parse_policies(args.policies)
        table, seeds = inclusion_experiment(
            spec, args.k, policies, args.replicates, args.seed, options
        )
        filename = "inclusion.csv"
        extra = {"policies": [p.label() for p in policies]}
    else:
        kwargs = {} if args.basis_m is None else {"basis_m": args.basis_m}
        table, seeds = radab_metrics_experiment(
            spec, args.k, args.replicates, args.seed, options, **kwargs
        )
        filename = "metrics.csv"
        extra = {"basis_m": args.basis_m}
    table.to_csv(out / filename, index=False)
    parameters = {
        "experiment": args.experiment,
        "n": spec.n,
        "cr": spec.contamination_rate,
        "k": args.k,
        "replicates": args.replicates,
        "options": _options_payload(options),
        **extra,
    }
    manifest = _manifest("simulate", parameters, seeds,
                         [filename, "manifest.json"])
    return manifest, [filename]


def cmd_simulate(args) -> None:
    if args.experiment != "waveform" and args.replicates < 1:
        raise InputError("--replicates must be a positive integer")
    out = _prepare_out(args.out)
    if args.experiment == "waveform":
        manifest, tables = _simulate_waveform(args, out)
    else:
        manifest, tables = _simulate_table(args, out)
    _write_json(manifest, out / "manifest.json")
    print(f"simulate: {args.experiment} -> {out / tables[0]}")
    _maybe_figures(args, out)


# ------------------------------------------------------------- detect


def _load_functional_input(args) -> FunctionalDataset:
    if args.sidecar is not None:
        return FunctionalDataset.from_csv(args.input, args.sidecar)
    curves, grid, labels = curves_from_csv(args.input)
    basis = BasisSystem.create(args.basis, args.m,
                               (float(grid.min()), float(grid.max())))
    return smooth([(grid, curve) for curve in curves], basis, labels=labels)


def cmd_detect(args) -> None:
    dataset = _load_functional_input(args)
    options = _fit_options(args, seed=args.seed)
    report = radab(dataset, args.k, options)

    out = _prepare_out(args.out)
    table = pd.DataFrame({
        "record": dataset.record_labels,
        "residual_norm": report.residual_norms,
        "flagged": report.flags.astype(bool),
    })
    table.to_csv(out / "detection.csv", index=False)
    write_model_json(report.model, out / "model.json",
                     row_labels=dataset.record_labels)
    parameters = {
        "input": args.input,
        "sidecar": args.sidecar,
        "k": args.k,
        "basis": args.basis,
        "m": args.m,
        "options": _options_payload(options),
    }
    manifest = _manifest("detect", parameters, [args.seed],
                         ["detection.csv", "model.json", "manifest.json"])
    manifest["fence"] = report.fence
    _write_json(manifest, out / "manifest.json")
    flagged = int(report.flags.sum())
    print(f"detect: flagged {flagged} of {dataset.n_records} records "
          f"(fence={report.fence:.6g}) -> {out}")
    _maybe_figures(args, out)


# ------------------------------------------------------------- smooth


def _parse_m_range(text: str) -> range:
    try:
        lo, hi = (int(part) for part in text.split(":"))
    except ValueError as exc:
        raise InputError(f"--select-m expects LO:HI, got {text!r}") from exc
    if lo > hi:
        raise InputError("--select-m range must be ascending")
    return range(lo, hi + 1)


def cmd_smooth(args) -> None:
    if (args.m is None) == (args.select_m is None):
        raise InputError("exactly one of --m and --select-m is required")
    curves, grid, labels = curves_from_csv(args.input)
    samples = [(grid, curve) for curve in curves]
    selection_curve = None
    if args.select_m is not None:
        m, selection_curve = select_basis_count(samples, args.basis,
                                                _parse_m_range(args.select_m))
    else:
        m = args.m
    basis = BasisSystem.create(args.basis, m,
                               (float(grid.min()), float(grid.max())))
    dataset = smooth(samples, basis, labels=labels)
    if args.standardize:
        dataset = standardize(dataset)

    out = _prepare_out(args.out)
    dataset.to_csv(out / "coeffs.csv", out / "basis.json")
    parameters = {
        "input": args.input,
        "basis": args.basis,
        "m": m,
        "select_m": args.select_m,
        "standardize": args.standardize,
    }
    manifest = _manifest("smooth", parameters, [],
                         ["coeffs.csv", "basis.json", "manifest.json"])
    if selection_curve is not None:
        manifest["selection_curve"] = [
            {"m": mm, "variance": var} for mm, var in selection_curve
        ]
    _write_json(manifest, out / "manifest.json")
    print(f"smooth: {dataset.n_records} records onto {args.basis} m={m} -> {out}")
    _maybe_figures(args, out)


# ----------------------------------------------------------- taxonomy


def _taxonomy_outputs(model, labels, sectors, config: TaxonomyConfig,
                      out: Path) -> tuple[list[str], list]:
    assignments = assign_clusters(model.alpha, config)
    frame = assignments_frame(assignments, labels=labels, sectors=sectors)
    frame.to_csv(out / "assignments.csv", index=False)
    weights = sector_weights(model.alpha, sectors)
    weights.to_csv(out / "sector_weights.csv", index_label="sector")
    export_network(assignments, model, sectors, out / "network.dot",
                   fmt="dot", labels=labels)
    export_network(assignments, model, sectors, out / "network.json",
                   fmt="json", labels=labels)
    names = ["assignments.csv", "sector_weights.csv", "network.dot",
             "network.json"]
    return names, assignments


def cmd_taxonomy(args) -> None:
    model = model_from_json(_read_json(args.model))
    if args.labels is not None:
        try:
            labels = [str(x) for x in pd.read_csv(args.labels, index_col=0).index]
        except (OSError, ValueError, pd.errors.ParserError) as exc:
            raise InputError(f"cannot read labels from {args.labels}: {exc}") from exc
    else:
        labels = [str(i) for i in range(model.n_cases)]
    sector_map = _read_sector_map(args.sectors) if args.sectors else {}
    sectors = [sector_map.get(name, UNKNOWN_SECTOR) for name in labels]
    config = TaxonomyConfig(args.u)

    out = _prepare_out(args.out)
    outputs, assignments = _taxonomy_outputs(model, labels, sectors, config, out)
    parameters = {
        "model": args.model,
        "labels": args.labels,
        "sectors": args.sectors,
        "u": args.u,
    }
    manifest = _manifest("taxonomy", parameters, [], outputs + ["manifest.json"])
    _write_json(manifest, out / "manifest.json")
    kinds = pd.Series([a.kind for a in assignments])
    counts = ", ".join(f"{kind}={n}" for kind, n in
                       kinds.value_counts().sort_index().items())
    print(f"taxonomy: U={args.u} {counts} -> {out}")
    _maybe_figures(args, out)


# ------------------------------------------------------------ finance


def cmd_finance(args) -> None:
    if args.k_min < 1 or args.k_min > args.k_max:
        raise InputError("--k-min must satisfy 1 <= k-min <= k-max")
    taxonomy_k = args.taxonomy_k if args.taxonomy_k is not None else args.k_max
    if not args.k_min <= taxonomy_k <= args.k_max:
        raise InputError("--taxonomy-k must lie inside the k range")
    options = _fit_options(args, seed=args.seed)

    panel = _run_stage("load", load_panel, args.prices, args.format,
                       args.index, args.sectors)
    panel = _run_stage("filter", filter_missing, panel,
                       args.start_date, args.max_missing)
    features = _run_stage("features", build_features, panel, args.window)
    dataset, dropped = _run_stage("smooth", build_functional_panel,
                                  features, m=args.basis_m)
    symbols = dataset.record_labels
    models = {}
    for k in range(args.k_min, args.k_max + 1):
        models[k] = _run_stage(f"fit k={k}", functional_fit,
                               dataset, k, options, mode="ada")

    out = _prepare_out(args.out)
    dataset.to_csv(out / "dataset.csv", out / "dataset_basis.json")
    outputs = ["dataset.csv", "dataset_basis.json", "summary.csv"]
    rows = []
    for k, model in models.items():
        name = f"model_k{k}.json"
        write_model_json(model, out / name, row_labels=symbols)
        outputs.append(name)
        rows.append({
            "k": k,
            "objective": model.objective,
            "members": ";".join(symbols[i] for i in model.member_indices),
        })
    pd.DataFrame(rows, columns=["k", "objective", "members"]).to_csv(
        out / "summary.csv", index=False
    )
    sectors = [features.sectors.get(sym, UNKNOWN_SECTOR) for sym in symbols]
    taxonomy_files, _ = _run_stage(
        "taxonomy", _taxonomy_outputs, models[taxonomy_k], symbols, sectors,
        TaxonomyConfig(args.u), out
    )
    outputs += taxonomy_files
    parameters = {
        "prices": args.prices,
        "format": args.format,
        "index": args.index,
        "sectors": args.sectors,
        "window": args.window,
        "start_date": args.start_date,
        "max_missing": args.max_missing,
        "basis_m": args.basis_m,
        "k_min": args.k_min,
        "k_max": args.k_max,
        "taxonomy_k": taxonomy_k,
        "u": args.u,
        "options": _options_payload(options),
    }
    manifest = _manifest("finance", parameters, [args.seed],
                         outputs + ["manifest.json"])
    manifest["symbols"] = symbols
    manifest["dropped_symbols"] = dropped
    manifest["rejected_inputs"] = panel.rejects
    _write_json(manifest, out / "manifest.json")
    fitted = ", ".join(f"k={k}: {m.objective:.6g}" for k, m in models.items())
    print(f"finance: {len(symbols)} symbols ({fitted}) -> {out}")
    _maybe_figures(args, out)


# ------------------------------------------------------------- report


def cmd_report(args) -> None:
    from .plots import render_run

    for path in render_run(args.run):
        print(f"figure: {path}")


# ------------------------------------------------------------- parser


def _add_option_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--restarts", type=int, default=None,
                        help="random restarts per fit")
    parser.add_argument("--max-iters", type=int, default=None,
                        help="alternating iterations per restart")
    parser.add_argument("--rel-tol", type=float, default=None,
                        help="relative objective tolerance")


def _add_common_output(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--figures", action="store_true",
                        help="also render PNG figures into the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robarch",
        description="Archetype/archetypoid fitting, simulation benchmarks, "
                    "outlier detection and the financial pipeline.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("fit", help="fit archetypes or archetypoids to a CSV")
    p.add_argument("--input", required=True,
                   help="data matrix CSV, or coefficient CSV with --sidecar")
    p.add_argument("--sidecar", default=None,
                   help="basis sidecar JSON marking the input as functional")
    p.add_argument("--mode", choices=("aa", "ada"), default="aa")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--loss", choices=("squared", "bisquare"), default="squared")
    p.add_argument("--policy", default=None,
                   help="bisquare tuning policy, e.g. median6 or percentile:50")
    p.add_argument("--seed", type=int, default=0)
    _add_option_flags(p)
    _add_common_output(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run a seeded simulation experiment")
    p.add_argument("--experiment", required=True,
                   choices=("waveform", "contamination-inclusion",
                            "radab-metrics"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--n", type=int, default=100,
                   help="records per contaminated replicate")
    p.add_argument("--cr", type=float, default=0.1, help="contamination rate")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--policies", default="median6",
                   help="comma-separated tuning policies for the inclusion table")
    p.add_argument("--basis-m", type=int, default=None,
                   help="smoothing basis size for the detector experiment")
    p.add_argument("--n-per-class", type=int, default=150)
    p.add_argument("--noise-sd", type=float, default=1.0)
    _add_option_flags(p)
    _add_common_output(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="flag outlying records in functional data")
    p.add_argument("--input", required=True,
                   help="curves CSV (grid in header) or coefficient CSV")
    p.add_argument("--sidecar", default=None,
                   help="basis sidecar JSON marking the input as coefficients")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--basis", choices=("fourier", "cubic_bspline"),
                   default="cubic_bspline")
    p.add_argument("--m", type=int, default=13,
                   help="basis size when smoothing raw curves")
    p.add_argument("--seed", type=int, default=0)
    _add_option_flags(p)
    _add_common_output(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("smooth", help="project sampled curves onto a basis")
    p.add_argument("--input", required=True, help="curves CSV (grid in header)")
    p.add_argument("--basis", choices=("fourier", "cubic_bspline"),
                   default="cubic_bspline")
    p.add_argument("--m", type=int, default=None, help="basis size")
    p.add_argument("--select-m", default=None,
                   help="LO:HI range to pick the basis size automatically")
    p.add_argument("--standardize", action="store_true",
                   help="center and scale per variable after smoothing")
    _add_common_output(p)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("taxonomy", help="cluster records by mixture weights")
    p.add_argument("--model", required=True, help="model JSON from a fit run")
    p.add_argument("--labels", default=None,
                   help="CSV whose index column names the records (e.g. alpha.csv)")
    p.add_argument("--sectors", default=None,
                   help="CSV mapping symbol to sector")
    p.add_argument("--u", type=float, default=0.8,
                   help="membership threshold in (0.5, 1]")
    _add_common_output(p)
    p.set_defaults(func=cmd_taxonomy)

    p = sub.add_parser("finance", help="OHLCV panel to archetypoid taxonomy")
    p.add_argument("--prices", required=True,
                   help="per-symbol CSV directory or one long CSV")
    p.add_argument("--format", choices=("per-symbol", "long"),
                   default="per-symbol")
    p.add_argument("--index", required=True, help="index series CSV")
    p.add_argument("--sectors", default=None, help="symbol,sector CSV")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--start-date", default=DEFAULT_START_DATE)
    p.add_argument("--max-missing", type=float, default=DEFAULT_MAX_MISSING)
    p.add_argument("--basis-m", type=int, default=DEFAULT_BASIS_M)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=5)
    p.add_argument("--taxonomy-k", type=int, default=None,
                   help="k whose model feeds the taxonomy (default: k-max)")
    p.add_argument("--u", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    _add_option_flags(p)
    _add_common_output(p)
    p.set_defaults(func=cmd_finance)

    p = sub.add_parser("report", help="render figures for an existing run")
    p.add_argument("--run", required=True, help="run directory with a manifest")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return _EXIT_NUMERIC
    return _EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
