"""Command-line pipeline: simulate, train, eval, report.

All randomness flows from one seed (``--seed`` overrides the config).
Every output directory receives the resolved config and a manifest with
content hashes of the inputs, so any artifact can be re-derived. Exit
codes: 0 success, 2 configuration error, 3 training divergence, 4
evaluation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from .config import PRESETS, ConfigError, RunConfig, load_config
from .encoder import DivergenceError, save_model, train
from .evaluate import (
    FoldError,
    aggregate_report,
    correlation_report,
    latent_scatter_csv,
    loocv,
    report_to_csv,
    report_to_json,
)
from .simulator import (
    DEFAULT_LAP_PLAN,
    FACTOR_NAMES,
    cohort_from_json,
    cohort_to_json,
    generate_dataset,
    sample_cohort,
    trajectories_from_jsonl,
    trajectories_to_jsonl,
)
from .snippets import (
    batch_normalize_factors,
    corpus_manifest,
    corpus_to_jsonl,
    extract_corpus,
    filter_min_exposure,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_EVAL = 4


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _emit_manifest(out_dir: str, cfg: RunConfig, inputs: dict[str, str]) -> None:
    _write(os.path.join(out_dir, "resolved_config.json"), cfg.to_json() + "\n")
    manifest = {
        "config_hash": cfg.content_hash(),
        "inputs_sha256": {k: _sha256(v) for k, v in sorted(inputs.items())},
    }
    _write(
        os.path.join(out_dir, "run_manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = RunConfig.from_preset("desk")
    if args.preset:
        # explicit flag pins the full profile, overriding config hyper keys
        cfg.preset = args.preset
        cfg.apply_preset()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "jobs", None) is not None:
        cfg.eval.jobs = args.jobs
    if getattr(args, "streaming", False):
        cfg.eval.streaming = True
    cfg.validate()
    return cfg


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    if args.n_subjects is not None:
        cfg.cohort.n_subjects = args.n_subjects
        cfg.validate()
    os.makedirs(args.out, exist_ok=True)

    cohort = sample_cohort(cfg.cohort, cfg.seed)
    dataset = generate_dataset(
        cohort, cfg.scenario, DEFAULT_LAP_PLAN, seed=cfg.seed, effect=cfg.hmi_effect
    )
    cohort_json = cohort_to_json(cohort)
    traj_jsonl = trajectories_to_jsonl(dataset)
    _write(os.path.join(args.out, "cohort.json"), cohort_json)
    _write(os.path.join(args.out, "trajectories.jsonl"), traj_jsonl)

    ctx = cfg.hyper.context_len(cfg.scenario.sample_rate)
    snips = filter_min_exposure(
        extract_corpus(dataset, ctx, cfg.dataset.decision_hop, cfg.dataset.decision_span),
        cfg.dataset.min_exposure_s,
    )
    _write(os.path.join(args.out, "snippets.jsonl"), corpus_to_jsonl(snips))
    _write(
        os.path.join(args.out, "snippets_manifest.json"),
        json.dumps(
            corpus_manifest(ctx, cfg.dataset.decision_hop, cfg.dataset.min_exposure_s, traj_jsonl),
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    _emit_manifest(args.out, cfg, {"config": cfg.to_json()})
    print(
        f"simulated {len(cohort)} subjects, {len(dataset)} laps, "
        f"{len(snips)} decision snippets after the {cfg.dataset.min_exposure_s:.1f}s exposure filter"
    )
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    if args.epochs is not None:
        cfg.hyper.epochs = args.epochs
    if args.alpha1 is not None:
        cfg.hyper.alpha1 = args.alpha1
    cfg.validate()
    os.makedirs(args.out, exist_ok=True)

    cohort_json = _read(os.path.join(args.data, "cohort.json"))
    traj_jsonl = _read(os.path.join(args.data, "trajectories.jsonl"))
    cohort = cohort_from_json(cohort_json)
    dataset = trajectories_from_jsonl(traj_jsonl, cfg.scenario.sample_rate)

    rate = cfg.scenario.sample_rate
    ctx = cfg.hyper.context_len(rate)
    corpus = extract_corpus(dataset, ctx, cfg.dataset.encoder_hop, cfg.dataset.encoder_span)
    by_id = {d.subject_id: d for d in cohort}
    sids = sorted(by_id)
    y = batch_normalize_factors(
        np.stack([by_id[s].factors.as_array() for s in sids]), names=FACTOR_NAMES
    )
    y_by_sid = {s: y[k] for k, s in enumerate(sids)}

    model, history = train(corpus, y_by_sid, cfg.hyper, rate, cfg.seed)
    save_model(model, os.path.join(args.out, "model.bin"))
    _write(os.path.join(args.out, "training_log.csv"), history.to_csv())
    _emit_manifest(args.out, cfg, {"cohort.json": cohort_json, "trajectories.jsonl": traj_jsonl})
    last = history.total[-1] if history.total else float("nan")
    print(f"trained {cfg.hyper.epochs} epochs on {len(corpus)} snippets; final loss {last:.4f}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    os.makedirs(args.out, exist_ok=True)

    cohort_json = _read(os.path.join(args.data, "cohort.json"))
    traj_jsonl = _read(os.path.join(args.data, "trajectories.jsonl"))
    cohort = cohort_from_json(cohort_json)
    dataset = trajectories_from_jsonl(traj_jsonl, cfg.scenario.sample_rate)
    factors = {d.subject_id: d.factors for d in cohort}

    streaming = cfg.eval.streaming
    try:
        folds = loocv(dataset, factors, cfg, streaming=streaming)
    except FoldError as exc:
        report = None
        if exc.partial:
            try:
                report = aggregate_report(dataset, exc.partial, cfg, streaming=streaming)
            except Exception:
                report = None
        if report is not None:
            _write(os.path.join(args.out, "decision_rules.csv"), report_to_csv(report.rows))
        _write(
            os.path.join(args.out, "eval_bundle.json"),
            report_to_json(report, exc.partial) if report else "{}\n",
        )
        _write(
            os.path.join(args.out, "failure_manifest.json"),
            json.dumps(
                {
                    "failed_fold": {"held_out": exc.held_out, "seed": exc.seed},
                    "message": exc.message,
                    "completed_folds": len(exc.partial),
                },
                indent=2,
                sort_keys=True,
            )
            + "\n",
        )
        _emit_manifest(args.out, cfg, {"cohort.json": cohort_json, "trajectories.jsonl": traj_jsonl})
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_EVAL

    report = aggregate_report(dataset, folds, cfg, streaming=streaming)
    _write(os.path.join(args.out, "decision_rules.csv"), report_to_csv(report.rows))
    if report.stream_rows:
        _write(
            os.path.join(args.out, "decision_rules_streaming.csv"),
            report_to_csv(report.stream_rows),
        )
    _write(os.path.join(args.out, "eval_bundle.json"), report_to_json(report, folds) + "\n")
    _write(
        os.path.join(args.out, "latent_scatter.csv"), latent_scatter_csv(folds, factors)
    )
    corr = correlation_report(dataset, factors)
    corr_lines = ["factor,behavior_stat,pearson_r"]
    for (f, s), r in sorted(corr.items()):
        corr_lines.append(f"{f},{s},{r!r}")
    _write(os.path.join(args.out, "correlations.csv"), "\n".join(corr_lines) + "\n")
    _emit_manifest(args.out, cfg, {"cohort.json": cohort_json, "trajectories.jsonl": traj_jsonl})

    print(f"{'rule':<18}{'speed':>8}{'se':>8}{'kappa':>8}{'bal.acc':>9}")
    for row in report.rows:
        print(
            f"{row.rule:<18}{row.mean_speed:>8.2f}{row.standard_error:>8.2f}"
            f"{row.kappa:>8.3f}{row.balanced_accuracy:>9.3f}"
        )
    if report.stream_agreement is not None:
        print(f"stream/batch decision agreement: {report.stream_agreement:.2%}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    os.makedirs(args.out, exist_ok=True)
    bundle = json.loads(_read(args.bundle))
    lines = ["rule,mean_yellow_speed,standard_error,kappa,balanced_accuracy"]
    for row in bundle.get("rules", []):
        lines.append(
            f"{row['rule']},{row['mean_speed']!r},{row['standard_error']!r},"
            f"{row['kappa']!r},{row['balanced_accuracy']!r}"
        )
    _write(os.path.join(args.out, "decision_rules.csv"), "\n".join(lines) + "\n")
    print(f"re-emitted {max(len(lines) - 1, 0)} rule rows")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driverlatent",
        description="simulate driving cohorts, train the latent encoder, evaluate decisions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="run configuration JSON", default=None)
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--preset", choices=sorted(PRESETS), default=None)
        p.add_argument("--out", required=True, help="output directory")

    p_sim = sub.add_parser("simulate", help="generate cohort and trajectory files")
    common(p_sim)
    p_sim.add_argument("--n-subjects", type=int, default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_train = sub.add_parser("train", help="train the encoder on a simulated dataset")
    common(p_train)
    p_train.add_argument("--data", required=True, help="directory from the simulate step")
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--alpha1", type=float, default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="leave-one-out evaluation")
    common(p_eval)
    p_eval.add_argument("--data", required=True, help="directory from the simulate step")
    p_eval.add_argument("--jobs", type=int, default=None, help="parallel folds")
    p_eval.add_argument("--streaming", action="store_true", help="add the streaming table")
    p_eval.set_defaults(func=cmd_eval)

    p_rep = sub.add_parser("report", help="re-emit CSV tables from an eval bundle")
    p_rep.add_argument("--bundle", required=True, help="eval_bundle.json path")
    p_rep.add_argument("--out", required=True)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
