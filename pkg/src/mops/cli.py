"""Command-line entry point.

Subcommands: ``build`` (induce the candidate tree), ``synthesize`` (designs
-> verified premises, with masking/shuffle ablations), ``evaluate``
(diversity and judged quality reports, with figures), ``curate``
(quality-diversity subset), ``baseline`` (direct premise induction).

Exit codes: 0 success, 1 usage/config/data error, 2 backend failure,
3 run finished partially (details in the written report).
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_io
from . import judge as judge_mod
from .config import ConfigError, RunConfig
from .curation import BinnedPremise, assign_bins, curate
from .diversity import DiversityError, density_stats, diversity_report
from .gateway import GatewayError
from .induction import build_tree, generate_baseline
from .judge import PREMISE_DIMENSIONS, aggregate, significance_test
from .prompts import PromptError
from .synthesis import synthesize_corpus
from .tree import (
    ModuleKind,
    TreeError,
    apply_mask,
    load_tree,
    mask_following,
    save_tree,
    shuffle_dependencies,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BACKEND = 2
EXIT_PARTIAL = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this CLI reserves 2 for backend
    # failures, so remap.
    def error(self, message: str):  # noqa: D102 - argparse contract
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    if getattr(args, "out", None):
        config.output_dir = str(args.out)
    return config


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config_header(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True)


def _tokens_mean(texts: list[str]) -> float:
    return float(np.mean([len(t.split()) for t in texts])) if texts else 0.0


# -- build -------------------------------------------------------------------


def cmd_build(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    out = _out_dir(config)
    tree_path = out / "tree.json"
    checkpoint = out / "checkpoint.json"
    if not args.resume:
        for stale in (tree_path, checkpoint):
            stale.unlink(missing_ok=True)

    gateway = config.make_gateway()
    embedder = config.make_embedder(cache_dir=out)
    tree, report = build_tree(
        gateway,
        embedder,
        config.branching,
        themes=config.themes,
        settings=config.stage_settings("induction"),
        templates=config.make_templates(),
        checkpoint_path=checkpoint,
    )
    save_tree(tree, tree_path)
    report.write_jsonl(out / "build_report.jsonl", header={"config": config.to_dict()})

    n_designs = len(tree.enumerate_designs())
    print(f"tree: {n_designs} designs -> {tree_path}")
    print(f"build report -> {out / 'build_report.jsonl'}")
    if not report.ok:
        failed = sum(1 for e in report.entries if e.error)
        print(f"partial build: {failed} induction call(s) failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


# -- synthesize ----------------------------------------------------------------


def _parse_kinds(raw: str) -> set[ModuleKind]:
    return {ModuleKind.from_label(part) for part in raw.split(",") if part.strip()}


def cmd_synthesize(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    out = _out_dir(config)

    transforms = [name for name, on in (
        ("--mask", bool(args.mask)),
        ("--mask-following", bool(args.mask_following)),
        ("--shuffle", args.shuffle),
    ) if on]
    if len(transforms) > 1:
        raise ConfigError(f"conflicting transform flags: {' and '.join(transforms)}")
    if args.all == (args.sample is not None):
        raise ConfigError("choose exactly one of --all or --sample N")

    tree = load_tree(args.tree)
    designs = tree.enumerate_designs()
    if not designs:
        raise ConfigError(f"{args.tree} holds no complete designs")
    if args.sample is not None:
        if not 0 < args.sample <= len(designs):
            raise ConfigError(f"--sample must be in [1, {len(designs)}]")
        designs = random.Random(args.seed).sample(designs, args.sample)

    if args.mask:
        kinds = _parse_kinds(args.mask)
        designs = [apply_mask(d, kinds) for d in designs]
    elif args.mask_following:
        kind = ModuleKind.from_label(args.mask_following)
        designs = [mask_following(d, kind) for d in designs]
    elif args.shuffle:
        designs = shuffle_dependencies(designs, args.seed)

    corpus_path = Path(args.corpus_out) if args.corpus_out else out / "corpus.jsonl"
    gateway = config.make_gateway()
    summary = synthesize_corpus(
        gateway,
        designs,
        corpus_path,
        synthesis_model=config.models["synthesis"],
        verification_model=config.models["verification"],
        synthesis_temperature=config.temperatures["synthesis"],
        max_tokens=config.max_tokens["synthesis"],
        templates=config.make_templates(),
        max_workers=config.max_in_flight,
        resume=args.resume,
    )
    if args.format == "plain":
        plain_path = corpus_path.with_suffix(".txt")
        corpus_io.write_corpus(corpus_io.read_corpus(corpus_path), plain_path, fmt="plain")
        print(f"plain corpus -> {plain_path}")

    summary_path = out / "synthesis_summary.json"
    summary_path.write_text(
        json.dumps({"config": config.to_dict(), "summary": summary.to_dict()}, sort_keys=True, indent=2)
        + "\n",
        encoding="utf-8",
    )
    print(
        f"corpus -> {corpus_path} (kept {summary.kept}, discarded {summary.discarded}, "
        f"unparseable {summary.unparseable}, errored {summary.errored}, skipped {summary.skipped})"
    )
    return EXIT_PARTIAL if summary.errored else EXIT_OK


# -- evaluate ------------------------------------------------------------------


def _corpus_labels(paths: list[str]) -> list[str]:
    labels = []
    for path in paths:
        stem = Path(path).stem
        label = stem
        n = 2
        while label in labels:
            label = f"{stem}-{n}"
            n += 1
        labels.append(label)
    return labels


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    out = _out_dir(config)
    if args.no_figures:
        config.figures = False

    labels = _corpus_labels(args.corpora)
    rows: list[dict] = []
    quality_scores: dict[str, dict[str, list[int]]] = {}
    missing_total = 0

    gateway = None
    if args.which in ("quality", "both"):
        gateway = config.make_gateway()
    embedder = config.make_embedder(cache_dir=out) if args.which in ("diversity", "both") else None

    for label, path in zip(labels, args.corpora):
        records = [r for r in corpus_io.read_corpus(path) if r.verified]
        if not records:
            raise ConfigError(f"{path}: no kept premises to evaluate")
        texts = [r.text for r in records]
        row: dict = {"corpus": label, "size": len(records), "tokens_mean": _tokens_mean(texts)}

        if embedder is not None:
            report = diversity_report(
                texts,
                embedder,
                seeds=config.seeds,
                m=config.grid_m,
                perplexity=config.perplexity,
                iterations=config.tsne_iterations,
                label=label,
            )
            row["diversity"] = report.to_dict()
            row["breadth"] = report.breadth
            row["density"] = report.density
            first_seed = config.seeds[0]
            points = report.projections[first_seed]
            if args.export_coords:
                coords_path = out / f"{label}_coords_seed{first_seed}.csv"
                with coords_path.open("w", encoding="utf-8") as fh:
                    fh.write("id,x,y\n")
                    for rec, (x, y) in zip(records, points):
                        fh.write(f"{rec.id},{x:.6f},{y:.6f}\n")
            if config.figures:
                from .figures import save_density_figure, save_projection_figure

                hull, grid, counts, mask, _ = density_stats(points, config.grid_m)
                fig_dir = out / "figures"
                fig_dir.mkdir(exist_ok=True)
                save_projection_figure(
                    points, hull, fig_dir / f"{label}_scatter_seed{first_seed}.png",
                    f"{label}: projected premises (seed {first_seed})",
                )
                save_density_figure(
                    counts, mask, grid, fig_dir / f"{label}_density_seed{first_seed}.png",
                    f"{label}: bin occupancy (seed {first_seed})",
                )

        if gateway is not None:
            records_and_misses = judge_mod.score_many(
                gateway,
                [(r.id, r.text) for r in records],
                PREMISE_DIMENSIONS,
                model=config.models["judge"],
                max_workers=config.max_in_flight,
                templates=config.make_templates(),
            )
            qrecords, missing = records_and_misses
            missing_total += len(missing)
            judge_mod.write_scores(qrecords, out / f"{label}_scores.jsonl")
            report = aggregate(qrecords)
            row["quality"] = report.to_dict()
            row["missing_scores"] = [
                {"id": item_id, "dimension": dim, "reason": reason} for item_id, dim, reason in missing
            ]
            quality_scores[label] = {
                dim: [r.score for r in qrecords if r.dimension == dim] for dim in PREMISE_DIMENSIONS
            }
        rows.append(row)

    significance: list[dict] = []
    if len(labels) >= 2 and quality_scores:
        for i, a in enumerate(labels):
            for b in labels[i + 1 :]:
                for dim in PREMISE_DIMENSIONS:
                    sa, sb = quality_scores[a].get(dim, []), quality_scores[b].get(dim, [])
                    if len(sa) >= 2 and len(sb) >= 2:
                        significance.append(
                            {
                                "corpus_a": a,
                                "corpus_b": b,
                                "dimension": dim,
                                "p_value": significance_test(sa, sb),
                            }
                        )

    report_json = out / "report.json"
    report_json.write_text(
        json.dumps(
            {"config": config.to_dict(), "corpora": rows, "significance": significance},
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    _write_report_csv(out / "report.csv", config, rows)
    if significance:
        _write_significance_csv(out / "significance.csv", significance)

    for row in rows:
        bits = [f"{row['corpus']}: n={row['size']}", f"tokens={row['tokens_mean']:.2f}"]
        if "breadth" in row:
            bits.append(f"breadth={row['breadth']:.2f}")
            bits.append(f"density={row['density']:.2f}")
        if "quality" in row:
            avg = row["quality"]["average"]
            bits.append(f"quality={avg['mean']:.2f}±{avg['std']:.2f}")
        print("  ".join(bits))
    print(f"report -> {report_json}")
    return EXIT_PARTIAL if missing_total else EXIT_OK


def _write_report_csv(path: Path, config: RunConfig, rows: list[dict]) -> None:
    columns = ["corpus", "size", "tokens_mean", "breadth", "density"]
    for dim in PREMISE_DIMENSIONS:
        columns += [f"{dim}_mean", f"{dim}_std"]
    columns += ["average_mean", "average_std"]

    def fmt(value: object) -> str:
        if value is None:
            return ""
        if isinstance(value, float):
            return f"{value:.6f}"
        return str(value)

    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"# config: {_config_header(config)}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            quality = row.get("quality", {})
            dims = quality.get("dimensions", {})
            record = {
                "corpus": row["corpus"],
                "size": row["size"],
                "tokens_mean": row["tokens_mean"],
                "breadth": row.get("breadth"),
                "density": row.get("density"),
                "average_mean": quality.get("average", {}).get("mean"),
                "average_std": quality.get("average", {}).get("std"),
            }
            for dim in PREMISE_DIMENSIONS:
                record[f"{dim}_mean"] = dims.get(dim, {}).get("mean")
                record[f"{dim}_std"] = dims.get(dim, {}).get("std")
            fh.write(",".join(fmt(record.get(col)) for col in columns) + "\n")


def _write_significance_csv(path: Path, significance: list[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write("corpus_a,corpus_b,dimension,p_value\n")
        for row in significance:
            fh.write(
                f"{row['corpus_a']},{row['corpus_b']},{row['dimension']},{row['p_value']:.6g}\n"
            )


# -- curate --------------------------------------------------------------------


def cmd_curate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    out = _out_dir(config)

    records = [r for r in corpus_io.read_corpus(args.corpus) if r.verified]
    if not records:
        raise ConfigError(f"{args.corpus}: no kept premises to curate")
    if args.k > len(records):
        raise ConfigError(f"-k {args.k} exceeds corpus size {len(records)}")

    by_id: dict[str, dict[str, int]] = {}
    for score in judge_mod.read_scores(args.scores):
        by_id.setdefault(score.item_id, {})[score.dimension] = score.score
    for rec in records:
        have = by_id.get(rec.id, {})
        missing = [d for d in PREMISE_DIMENSIONS if d not in have]
        if missing:
            raise ConfigError(f"premise {rec.id} lacks scores for: {', '.join(missing)}")

    curated_path = Path(args.curated_out) if args.curated_out else out / "curated.jsonl"
    if args.k == 0:
        curated_path.write_text("", encoding="utf-8")
        print(f"curated 0 premises -> {curated_path}")
        return EXIT_OK

    embedder = config.make_embedder(cache_dir=out)
    vectors = embedder.embed([r.text for r in records])
    from .diversity import project_2d

    points = project_2d(vectors, config.seeds[0], config.perplexity, config.tsne_iterations)
    hull, grid, _, _, _ = density_stats(points, config.grid_m)
    assignments = assign_bins(points, grid, hull)

    items = [
        BinnedPremise(
            premise_id=rec.id,
            bin_index=assignment.bin_index,
            total_score=sum(by_id[rec.id][d] for d in PREMISE_DIMENSIONS),
            in_hull=assignment.in_hull,
        )
        for rec, assignment in zip(records, assignments)
    ]
    selection = curate(items, args.k)

    rec_by_id = {r.id: r for r in records}
    with curated_path.open("w", encoding="utf-8") as fh:
        for entry in selection:
            rec = rec_by_id[entry.premise_id]
            merged = {**rec.to_record(), **entry.to_record()}
            fh.write(json.dumps(merged, ensure_ascii=False) + "\n")
    (out / "curate_summary.json").write_text(
        json.dumps(
            {
                "config": config.to_dict(),
                "k": args.k,
                "champions": sum(1 for e in selection if e.stage == "champion"),
                "fills": sum(1 for e in selection if e.stage == "fill"),
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"curated {len(selection)} premises -> {curated_path}")
    return EXIT_OK


# -- baseline ------------------------------------------------------------------


def cmd_baseline(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    out = _out_dir(config)

    exemplars = None
    if args.exemplars:
        exemplars = [r.text for r in corpus_io.read_corpus(args.exemplars) if r.verified]
    gateway = config.make_gateway()
    embedder = config.make_embedder(cache_dir=out)
    premises = generate_baseline(
        gateway,
        embedder,
        mode=args.mode,
        count=args.count,
        exemplars=exemplars,
        settings=config.stage_settings("baseline"),
        templates=config.make_templates(),
    )
    records = [
        corpus_io.PremiseRecord(id=f"{args.mode}-{i:05d}", design_id="", text=text, verified=True)
        for i, text in enumerate(premises, start=1)
    ]
    corpus_path = Path(args.corpus_out) if args.corpus_out else out / f"baseline_{args.mode}.jsonl"
    corpus_io.write_corpus(records, corpus_path, fmt=args.format)
    print(f"baseline {args.mode}: {len(records)} premises -> {corpus_path}")
    return EXIT_OK if len(records) == args.count else EXIT_PARTIAL


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mops", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON run config (defaults apply if omitted)")
        p.add_argument("--out", help="output directory (overrides config)")

    p_build = sub.add_parser("build", help="induce the candidate tree")
    add_common(p_build)
    p_build.add_argument("--resume", action="store_true", help="resume from an existing checkpoint")
    p_build.set_defaults(func=cmd_build)

    p_syn = sub.add_parser("synthesize", help="turn designs into verified premises")
    add_common(p_syn)
    p_syn.add_argument("--tree", required=True, help="tree file from build")
    p_syn.add_argument("--all", action="store_true", help="synthesize every design")
    p_syn.add_argument("--sample", type=int, help="synthesize N sampled designs")
    p_syn.add_argument("--seed", type=int, default=0, help="seed for --sample/--shuffle")
    p_syn.add_argument("--mask", help="comma-separated components to mask")
    p_syn.add_argument("--mask-following", dest="mask_following", help="mask this component and all after it")
    p_syn.add_argument("--shuffle", action="store_true", help="break dependencies by cross-selecting slots")
    p_syn.add_argument("--format", choices=("records", "plain"), default="records")
    p_syn.add_argument("--resume", action="store_true", help="skip designs already in the output")
    p_syn.add_argument("--corpus-out", dest="corpus_out", help="corpus output path")
    p_syn.set_defaults(func=cmd_synthesize)

    p_eval = sub.add_parser("evaluate", help="diversity and quality reports")
    add_common(p_eval)
    p_eval.add_argument("corpora", nargs="+", help="corpus file(s): records or plain text")
    p_eval.add_argument("--which", choices=("diversity", "quality", "both"), default="both")
    p_eval.add_argument("--export-coords", action="store_true", help="write projected coordinates CSV")
    p_eval.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p_eval.set_defaults(func=cmd_evaluate)

    p_cur = sub.add_parser("curate", help="select a diverse high-quality subset")
    add_common(p_cur)
    p_cur.add_argument("--corpus", required=True)
    p_cur.add_argument("--scores", required=True, help="scores file from evaluate")
    p_cur.add_argument("-k", type=int, required=True, help="curated set size")
    p_cur.add_argument("--curated-out", dest="curated_out", help="curated output path")
    p_cur.set_defaults(func=cmd_curate)

    p_base = sub.add_parser("baseline", help="direct premise induction baselines")
    add_common(p_base)
    p_base.add_argument("--mode", choices=("vanilla", "complex"), required=True)
    p_base.add_argument("--count", type=int, required=True)
    p_base.add_argument("--exemplars", help="corpus file with >= 3 exemplar premises (complex mode)")
    p_base.add_argument("--format", choices=("records", "plain"), default="records")
    p_base.add_argument("--corpus-out", dest="corpus_out", help="corpus output path")
    p_base.set_defaults(func=cmd_baseline)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (ConfigError, PromptError, TreeError, DiversityError, ValueError,
            corpus_io.CorpusFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GatewayError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    raise SystemExit(main())
