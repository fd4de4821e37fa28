"""Pipeline orchestration CLI: forge -> train -> eval -> study, plus the
data-volume sweep and report rendering.

Global options: `--config FILE` (flat key=value lines, '#' comments),
`--rng-seed`, `--log-level`. The effective configuration is echoed to the run
log so mock-backend runs can be reproduced bit-identically.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import random
import sys
from pathlib import Path

import click
import torch

from . import corpus, dataforge, evalmetrics
from .microlm import (
    MicroTransformer,
    ModelConfig,
    TrainConfig,
    encode_text,
    decode_tokens,
    generate_greedy,
    inject_lora,
    load_checkpoint,
    save_checkpoint,
    train as train_model,
)

log = logging.getLogger("sotana")


class CliError(click.ClickException):
    pass


def load_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    cfg: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg


def echo_effective_config(name: str, settings: dict) -> None:
    log.info("effective config for %s: %s", name, json.dumps(settings, sort_keys=True, default=str))


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--rng-seed", type=int, default=None)
@click.option("--log-level", default="INFO")
@click.pass_context
def main(ctx, config_path, rng_seed, log_level):
    logging.basicConfig(level=getattr(logging, log_level.upper(), logging.INFO))
    ctx.ensure_object(dict)
    ctx.obj["config"] = load_config_file(config_path)
    if rng_seed is not None:
        ctx.obj["config"]["rng_seed"] = str(rng_seed)


def _cfg_get(ctx, key: str, flag_value, default):
    if flag_value is not None:
        return flag_value
    if key in ctx.obj["config"]:
        return type(default)(ctx.obj["config"][key])
    return default


# ---------------------------------------------------------------------------
# forge


@main.command()
@click.option("--seeds", "seeds_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--target", type=int, default=None)
@click.option("--backend", "backend_kind", type=click.Choice(["mock", "http"]), default="mock")
@click.option("--endpoint", default="")
@click.option("--fixture", type=click.Path(), default="")
@click.option("--rng-seed", "seed", type=int, default=None)
@click.pass_context
def forge(ctx, seeds_path, out_path, target, backend_kind, endpoint, fixture, seed):
    """Generate instruction triples from a seed pool."""
    target = _cfg_get(ctx, "forge.target", target, 100)
    seed = _cfg_get(ctx, "rng_seed", seed, 0)
    cfg = dataforge.ForgeConfig(target_count=target, rng_seed=seed)
    echo_effective_config("forge", vars(cfg))
    seeds = dataforge.read_dataset(seeds_path, origin="seed")
    pool = dataforge.SeedPool(seeds=seeds)
    try:
        backend = dataforge.make_backend(backend_kind, endpoint=endpoint, fixture=fixture)
        dataset, report = dataforge.run_generation(backend, pool, cfg)
    except dataforge.ForgeError as exc:
        raise CliError(str(exc))
    dataforge.write_dataset(dataset, out_path)
    click.echo(
        f"accepted={report.accepted} rejected={report.rejected_by_reason} "
        f"queries={report.queries} budget_exhausted={report.budget_exhausted}"
    )


# ---------------------------------------------------------------------------
# train / generate


@main.command("train")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--out", "ckpt_path", required=True, type=click.Path())
@click.option("--r", "rank", type=int, default=8)
@click.option("--alpha", type=float, default=16.0)
@click.option("--lr", type=float, default=1e-4)
@click.option("--epochs", type=int, default=5)
@click.option("--batch-size", type=int, default=32)
@click.option("--rng-seed", "seed", type=int, default=None)
@click.option("--int8", "int8_frozen", is_flag=True, default=False)
@click.pass_context
def train_cmd(ctx, data_path, ckpt_path, rank, alpha, lr, epochs, batch_size, seed, int8_frozen):
    """LoRA fine-tune the micro model on an instruction dataset."""
    seed = _cfg_get(ctx, "rng_seed", seed, 0)
    cfg = TrainConfig(
        r=rank, alpha=alpha, learning_rate=lr, epochs=epochs,
        batch_size=batch_size, rng_seed=seed, int8_frozen=int8_frozen,
    )
    echo_effective_config("train", vars(cfg))
    dataset = dataforge.read_dataset(data_path)
    if not dataset:
        raise CliError("training dataset is empty")
    torch.manual_seed(seed)
    model = MicroTransformer(ModelConfig(max_seq_len=cfg.max_seq_len))
    gen = torch.Generator().manual_seed(seed)
    inject_lora(
        model, r=cfg.r, alpha=cfg.alpha, dropout_p=cfg.dropout_p,
        int8_frozen=cfg.int8_frozen, generator=gen,
    )
    history = train_model(model, dataset, cfg)
    save_checkpoint(model, cfg, ckpt_path)
    if history.losses:
        click.echo(f"steps={len(history.losses)} first_loss={history.losses[0]:.4f} last_loss={history.losses[-1]:.4f}")
    else:
        click.echo("steps=0")


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--prompt-file", required=True, type=click.Path(exists=True))
@click.option("--max-new", type=int, default=64)
def generate(ckpt_path, prompt_file, max_new):
    """Greedy-decode a completion for each line of the prompt file."""
    model, _ = load_checkpoint(ckpt_path)
    for line in Path(prompt_file).read_text(encoding="utf-8").splitlines():
        toks = encode_text(line, model.cfg.vocab_size)[: model.cfg.max_seq_len - 1]
        out = generate_greedy(model, toks, max_new)
        click.echo(decode_tokens(out[len(toks):]))


# ---------------------------------------------------------------------------
# eval


@main.command("eval")
@click.argument("suite", type=click.Choice(["qa", "summ", "codegen"]))
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--k", type=int, default=1)
@click.option("--samples", type=int, default=1)
@click.option("--limit", type=int, default=100)
def eval_cmd(suite, pred_path, data_path, out_path, k, samples, limit):
    """Score predictions against a dataset and write a metric report."""
    preds = _read_predictions(pred_path)
    if suite == "qa":
        records, _ = corpus.load_so_questions(data_path)
        ids = [r.id for r in records]
        refs = [r.answer for r in records]
        report = _text_report(ids, preds, refs)
    elif suite == "summ":
        records, _ = corpus.load_code_summaries(data_path, limit=limit)
        ids = [str(i) for i in range(len(records))]
        refs = [r.summary for r in records]
        report = _text_report(ids, preds, refs)
    else:
        tasks, _ = corpus.load_codegen_tasks(data_path)
        report = _codegen_report(tasks, preds, k=k, n_samples=samples)
    Path(out_path).write_text(json.dumps(report, indent=2), encoding="utf-8")
    click.echo(f"wrote {out_path}")


def _read_predictions(path) -> dict[str, list[str]]:
    """id -> list of predicted texts (multiple samples allowed per id)."""
    preds: dict[str, list[str]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        preds.setdefault(str(obj["id"]), []).append(obj["text"])
    return preds


def _text_report(ids, preds, refs) -> dict:
    missing = [i for i in ids if i not in preds]
    if missing:
        raise CliError(f"predictions missing for ids: {missing[:5]}")
    cands = [preds[i][0] for i in ids]
    return evalmetrics.score_corpus(ids, cands, refs).to_dict()


def _codegen_report(tasks, preds, k: int, n_samples: int) -> dict:
    per_task = []
    for task in tasks:
        samples = preds.get(task.task_id, [])
        if len(samples) < n_samples:
            raise CliError(f"need {n_samples} samples for task {task.task_id}")
        n_correct = 0
        for completion in samples[:n_samples]:
            outcome = evalmetrics.execute_candidate(task, completion)
            n_correct += int(outcome.passed)
        per_task.append(
            {
                "task_id": task.task_id,
                "n": n_samples,
                "c": n_correct,
                "pass_at_k": evalmetrics.pass_at_k(n_samples, n_correct, k),
            }
        )
    mean = sum(t["pass_at_k"] for t in per_task) / len(per_task) if per_task else 0.0
    return {
        "scale": {"pass_at_k": "0-1", "k": k},
        "per_example": per_task,
        "corpus": {"pass_at_k_mean": mean},
    }


# ---------------------------------------------------------------------------
# sweep


def sweep(
    dataset: list[dataforge.InstructionTriple],
    sizes: list[int],
    train_cfg: TrainConfig,
    eval_triples: list[dataforge.InstructionTriple],
    model_cfg: ModelConfig | None = None,
    max_new: int = 32,
) -> list[dict]:
    """Train on fixed-shuffle prefixes of each size and score each model.

    A single shuffle (by train_cfg.rng_seed) is applied once; each size takes
    the first `s` examples, so larger runs strictly contain smaller ones.
    """
    for s in sizes:
        if s > len(dataset):
            raise ValueError(f"sweep size {s} exceeds dataset size {len(dataset)}")
    order = list(range(len(dataset)))
    random.Random(train_cfg.rng_seed).shuffle(order)
    shuffled = [dataset[i] for i in order]
    model_cfg = model_cfg or ModelConfig(max_seq_len=train_cfg.max_seq_len)
    rows = []
    for s in sizes:
        torch.manual_seed(train_cfg.rng_seed)
        model = MicroTransformer(model_cfg)
        gen = torch.Generator().manual_seed(train_cfg.rng_seed)
        inject_lora(
            model, r=train_cfg.r, alpha=train_cfg.alpha,
            dropout_p=train_cfg.dropout_p, int8_frozen=train_cfg.int8_frozen,
            generator=gen,
        )
        train_model(model, shuffled[:s], train_cfg)
        ids, cands, refs = [], [], []
        for i, t in enumerate(eval_triples):
            prompt = corpus.render_prompt(
                t.instruction, t.input, max_tokens=train_cfg.max_seq_len
            ).rendered
            toks = encode_text(prompt + "\n", model_cfg.vocab_size)
            toks = toks[: model_cfg.max_seq_len - 1]
            out = generate_greedy(model, toks, max_new)
            ids.append(str(i))
            cands.append(decode_tokens(out[len(toks):]))
            refs.append(t.output)
        report = evalmetrics.score_corpus(ids, cands, refs)
        rows.append({"size": s, **report.corpus})
    return rows


@main.command("sweep")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--eval-data", "eval_path", required=True, type=click.Path(exists=True))
@click.option("--sizes", required=True, help="comma-separated training sizes")
@click.option("--epochs", type=int, default=1)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--rng-seed", "seed", type=int, default=None)
@click.pass_context
def sweep_cmd(ctx, data_path, eval_path, sizes, epochs, out_path, seed):
    """Data-volume sweep: train at several dataset sizes and tabulate metrics."""
    seed = _cfg_get(ctx, "rng_seed", seed, 0)
    size_list = [int(s) for s in sizes.split(",")]
    dataset = dataforge.read_dataset(data_path)
    eval_triples = dataforge.read_dataset(eval_path)
    cfg = TrainConfig(epochs=epochs, rng_seed=seed)
    echo_effective_config("sweep", {"sizes": size_list, **vars(cfg)})
    try:
        rows = sweep(dataset, size_list, cfg, eval_triples)
    except ValueError as exc:
        raise CliError(str(exc))
    _write_csv(rows, out_path)
    click.echo(render_sweep_table(rows))


def _write_csv(rows: list[dict], path) -> None:
    if not rows:
        raise CliError("no rows to write")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# study


@main.group("study")
def study_group():
    """Human-evaluation study commands."""


@study_group.command("init")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True))
@click.option("--raters", required=True, help="comma-separated rater ids")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--rng-seed", "seed", type=int, default=0)
def study_init(pairs_path, raters, out_path, seed):
    from .study import create_assignments, load_pairs

    pairs = load_pairs(pairs_path)
    rater_list = [r.strip() for r in raters.split(",") if r.strip()]
    assignments = create_assignments(pairs, rater_list, rng=random.Random(seed))
    Path(out_path).write_text(json.dumps({"assignments": assignments}, indent=2))
    click.echo(f"assigned {len(pairs)} pairs to {len(rater_list)} raters")


@study_group.command("serve")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True))
@click.option("--assignments", "assign_path", required=True, type=click.Path(exists=True))
@click.option("--port", type=int, default=8000)
@click.option("--static-dir", type=click.Path(), default=None)
@click.option("--audit-log", type=click.Path(), default=None)
@click.option("--snapshot", "snapshot_path", type=click.Path(), default=None)
def study_serve(pairs_path, assign_path, port, static_dir, audit_log, snapshot_path):
    import uvicorn

    from .server import create_app
    from .study import Study, load_pairs

    pairs = load_pairs(pairs_path)
    assignments = json.loads(Path(assign_path).read_text())["assignments"]
    study = Study(pairs, assignments, audit_log=audit_log)
    app = create_app(study, static_dir=static_dir, snapshot_path=snapshot_path)
    uvicorn.run(app, host="127.0.0.1", port=port)


@study_group.command("report")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True))
@click.option("--assignments", "assign_path", required=True, type=click.Path(exists=True))
@click.option("--snapshot", "snapshot_path", required=True, type=click.Path(exists=True))
@click.option("--allow-incomplete", is_flag=True, default=False)
def study_report(pairs_path, assign_path, snapshot_path, allow_incomplete):
    from .study import Study, load_pairs, load_snapshot

    pairs = load_pairs(pairs_path)
    assignments = json.loads(Path(assign_path).read_text())["assignments"]
    study = Study(pairs, assignments)
    load_snapshot(study, snapshot_path)
    agg = study.aggregate_scores(allow_incomplete=allow_incomplete)
    click.echo(render_study_table(agg))
    click.echo(json.dumps(study.agreement_report(), indent=2))


# ---------------------------------------------------------------------------
# report rendering


METRIC_COLUMNS = [("bleu_mean", "BLEU"), ("meteor_mean", "Meteor"),
                  ("rouge_l_mean", "Rouge-L"), ("cider", "Cider")]


def render_metric_table(reports: dict[str, dict]) -> str:
    """reports: label -> metric report dict (with a `corpus` object)."""
    if not reports:
        raise ValueError("no metric reports given")
    header = f"{'Model':<16}" + "".join(f"{title:>10}" for _, title in METRIC_COLUMNS)
    lines = [header, "-" * len(header)]
    for label, rep in reports.items():
        corpus_obj = rep.get("corpus")
        if corpus_obj is None:
            raise ValueError(f"report {label!r} missing 'corpus' object")
        cells = []
        for key, _ in METRIC_COLUMNS:
            if key not in corpus_obj:
                raise ValueError(f"report {label!r} missing corpus field {key!r}")
            v = corpus_obj[key]
            cells.append(f"{v:>10.2f}" if v is not None else f"{'-':>10}")
        lines.append(f"{label:<16}" + "".join(cells))
    return "\n".join(lines)


def render_study_table(aggregate: dict) -> str:
    """aggregate: model -> dimension -> {mean, std}; cells as `mean (±std)`."""
    if not aggregate:
        raise ValueError("no study aggregate given")
    dims = ["alignment", "accuracy", "readability"]
    header = f"{'Model':<16}" + "".join(f"{d.capitalize():>16}" for d in dims)
    lines = [header, "-" * len(header)]
    for model in sorted(aggregate):
        cells = []
        for d in dims:
            stats = aggregate[model][d]
            cells.append(f"{stats['mean']:.2f} (±{stats['std']:.2f})".rjust(16))
        lines.append(f"{model:<16}" + "".join(cells))
    return "\n".join(lines)


def render_sweep_table(rows: list[dict]) -> str:
    header = f"{'Size':>8}" + "".join(f"{t:>10}" for _, t in METRIC_COLUMNS)
    lines = [header, "-" * len(header)]
    for row in rows:
        cells = []
        for key, _ in METRIC_COLUMNS:
            v = row.get(key)
            cells.append(f"{v:>10.2f}" if v is not None else f"{'-':>10}")
        lines.append(f"{row['size']:>8}" + "".join(cells))
    return "\n".join(lines)


def render_metric_csv(reports: dict[str, dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["model"] + [t for _, t in METRIC_COLUMNS])
    for label, rep in reports.items():
        writer.writerow([label] + [rep["corpus"].get(k) for k, _ in METRIC_COLUMNS])
    return buf.getvalue()


@main.command("report")
@click.option("--metric", "metric_paths", multiple=True, type=click.Path(exists=True))
@click.option("--study", "study_paths", multiple=True, type=click.Path(exists=True))
@click.option("--csv-out", type=click.Path(), default=None)
def report_cmd(metric_paths, study_paths, csv_out):
    """Render metric/study report files as fixed-width tables and CSV."""
    if not metric_paths and not study_paths:
        raise CliError("no input report files given")
    reports = {}
    for p in metric_paths:
        try:
            blob = json.loads(Path(p).read_text(encoding="utf-8"))
            reports[Path(p).stem] = blob
        except (json.JSONDecodeError, KeyError) as exc:
            raise CliError(f"bad report file {p}: {exc}")
    if reports:
        try:
            click.echo(render_metric_table(reports))
        except ValueError as exc:
            raise CliError(str(exc))
        if csv_out:
            Path(csv_out).write_text(render_metric_csv(reports), encoding="utf-8")
    for p in study_paths:
        blob = json.loads(Path(p).read_text(encoding="utf-8"))
        try:
            click.echo(render_study_table(blob))
        except (ValueError, KeyError) as exc:
            raise CliError(f"bad study file {p}: {exc}")


if __name__ == "__main__":
    main()
