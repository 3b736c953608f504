"""Command-line entry points: noise injection, knowledge-base builds, the
three evaluation stages, offline scoring, QA filtering, and report rendering."""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import docmodel, generation, harness, imgnoise, metrics, qafilter, retrieval
from .fmtnoise import ALL_RULES, FmtPlan, FmtRule, perturb_doc


def _parse_rules(spec: str | None) -> frozenset[FmtRule]:
    if not spec:
        return ALL_RULES
    return frozenset(FmtRule(name.strip()) for name in spec.split(","))


def _load_parsed_corpus(path: str) -> list[docmodel.StructuredDoc]:
    return docmodel.load_corpus(path)


def _load_kb_dir(path: str) -> dict[str, retrieval.KnowledgeBase]:
    kbs = {}
    for kb_file in sorted(Path(path).glob("*.json")):
        kb = retrieval.load_kb(kb_file)
        kbs[kb.domain or kb_file.stem] = kb
    if not kbs:
        raise click.ClickException(f"no knowledge bases found under {path}")
    return kbs


def _write_report(report: harness.EvalReport, out: str) -> None:
    Path(out).write_text(report.to_json() + "\n", encoding="utf-8")
    click.echo(harness.render_report_table([(report.stage, report)]))
    click.echo(f"wrote {out}")


def _make_retriever(name: str, endpoint: str | None, model: str | None):
    if name == "bm25":
        return harness.BM25Retriever()
    if name == "dense":
        if not endpoint or not model:
            raise click.ClickException("dense retrieval needs --embed-endpoint and --embed-model")
        return harness.DenseRetriever(retrieval.EmbeddingClient(endpoint, model))
    if name == "oracle":
        return harness.OracleRetriever()
    raise click.ClickException(f"unknown retriever {name!r}")


@click.group()
def main():
    """Evaluate the impact of OCR noise on retrieval-augmented generation."""


@main.command("perturb-fmt")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--rate", type=float, required=True, help="Perturbation rate in [0, 1].")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rules", default=None,
              help="Comma-separated rule names (default: all rules).")
@click.option("--break-prob", type=float, default=None,
              help="Per word-gap line-break probability (default: the rate).")
def perturb_fmt(in_path, out_path, rate, seed, rules, break_prob):
    """Inject formatting noise into a JSONL page corpus."""
    plan = FmtPlan(rate=rate, seed=seed, rules=_parse_rules(rules), break_prob=break_prob)
    rows = []
    for row in docmodel.read_jsonl(in_path):
        doc = docmodel.parse_doc(row["content"], row["doc_id"], int(row["page_no"]),
                                 row["domain"])
        row = dict(row)
        row["content"] = docmodel.serialize_doc(perturb_doc(doc, plan))
        row.update(noise="fmt", rate=rate, seed=seed)
        rows.append(row)
    docmodel.write_jsonl(rows, out_path)
    click.echo(f"perturbed {len(rows)} pages -> {out_path}")


@main.command("perturb-img")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--mode", type=click.Choice([m.value for m in imgnoise.SeverityMode]),
              required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--provenance", default=None, type=click.Path(),
              help="Sidecar JSONL listing the applied distortions per page.")
def perturb_img(in_dir, out_dir, mode, seed, provenance):
    """Apply semantic-noise distortions to a directory of page images."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    images = sorted(p for p in Path(in_dir).iterdir() if p.suffix.lower() == ".png")
    if not images:
        raise click.ClickException(f"no .png pages under {in_dir}")
    for index, path in enumerate(images):
        image = imgnoise.load_image(path)
        distorted, specs = imgnoise.apply_mode(
            image, mode, imgnoise.derive_seed(seed, index, path.name))
        imgnoise.save_image(distorted, out / path.name)
        records.append({"page": path.name, "specs": [s.to_dict() for s in specs]})
    if provenance:
        docmodel.write_jsonl(records, provenance)
    click.echo(f"distorted {len(records)} pages -> {out_dir}")


@main.command("build-kb")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--domain", default=None, help="Build only this domain.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--size", type=int, default=1024, show_default=True)
@click.option("--overlap", type=int, default=0, show_default=True)
@click.option("--strip/--no-strip", default=False, show_default=True,
              help="Index formatting-stripped text instead of raw text.")
def build_kb(in_path, domain, out_dir, size, overlap, strip):
    """Chunk a page corpus and build per-domain BM25 knowledge bases."""
    docs = _load_parsed_corpus(in_path)
    if domain:
        docs = [d for d in docs if d.domain == domain]
        if not docs:
            raise click.ClickException(f"no pages with domain {domain!r} in {in_path}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kbs = retrieval.build_domain_kbs(docs, size=size, overlap=overlap, strip=strip)
    for name, kb in kbs.items():
        retrieval.save_kb(kb, out / f"{name.lower()}.json")
        click.echo(f"{name}: {kb.n_chunks} chunks")
    click.echo(f"wrote {len(kbs)} knowledge bases -> {out_dir}")


_retriever_options = [
    click.option("--retriever", default="bm25", show_default=True,
                 type=click.Choice(["bm25", "dense", "oracle"])),
    click.option("--embed-endpoint", default=None),
    click.option("--embed-model", default=None),
    click.option("--k", type=int, default=2, show_default=True),
]


def _with(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@main.command("eval-retrieval")
@click.option("--kb", "kb_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--qa", "qa_path", required=True, type=click.Path(exists=True))
@_with(_retriever_options)
@click.option("--fmt-aware", is_flag=True, default=False)
@click.option("--rate", type=float, default=None, help="Plan rate for rule-aware stripping.")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", required=True, type=click.Path())
def eval_retrieval_cmd(kb_dir, qa_path, retriever, embed_endpoint, embed_model,
                       k, fmt_aware, rate, seed, out_path):
    """Score evidence inclusion of top-k retrieved chunks."""
    qas = docmodel.load_qa(qa_path)
    plan = FmtPlan(rate=rate, seed=seed) if rate is not None else None
    report = harness.eval_retrieval(
        _load_kb_dir(kb_dir), qas, _make_retriever(retriever, embed_endpoint, embed_model),
        k=k, fmt_aware=fmt_aware, plan=plan)
    _write_report(report, out_path)


@main.command("eval-gen")
@click.option("--docs", "docs_path", required=True, type=click.Path(exists=True))
@click.option("--qa", "qa_path", required=True, type=click.Path(exists=True))
@click.option("--endpoint", required=True)
@click.option("--model", required=True)
@click.option("--max-tokens", type=int, default=256, show_default=True)
@click.option("--timeout", type=float, default=60.0, show_default=True)
@click.option("--retries", type=int, default=3, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--checkpoint", default=None, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def eval_gen_cmd(docs_path, qa_path, endpoint, model, max_tokens, timeout,
                 retries, workers, checkpoint, out_path):
    """Score answer F1 with each QA's own page as context."""
    cfg = generation.GenConfig(endpoint_url=endpoint, model_id=model,
                               max_tokens=max_tokens, timeout=timeout,
                               max_retries=retries)
    report = harness.eval_generation(_load_parsed_corpus(docs_path),
                                     docmodel.load_qa(qa_path), cfg,
                                     max_workers=workers, checkpoint_path=checkpoint)
    _write_report(report, out_path)


@main.command("eval-e2e")
@click.option("--kb", "kb_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--qa", "qa_path", required=True, type=click.Path(exists=True))
@_with(_retriever_options)
@click.option("--endpoint", required=True)
@click.option("--model", required=True)
@click.option("--max-tokens", type=int, default=256, show_default=True)
@click.option("--timeout", type=float, default=60.0, show_default=True)
@click.option("--retries", type=int, default=3, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--checkpoint", default=None, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def eval_e2e_cmd(kb_dir, qa_path, retriever, embed_endpoint, embed_model, k,
                 endpoint, model, max_tokens, timeout, retries, workers,
                 checkpoint, out_path):
    """Retrieve top-k chunks, generate from them, and score answer F1."""
    cfg = generation.GenConfig(endpoint_url=endpoint, model_id=model,
                               max_tokens=max_tokens, timeout=timeout,
                               max_retries=retries)
    report = harness.eval_e2e(
        _load_kb_dir(kb_dir), docmodel.load_qa(qa_path),
        _make_retriever(retriever, embed_endpoint, embed_model), cfg, k=k,
        max_workers=workers, checkpoint_path=checkpoint)
    _write_report(report, out_path)


@main.command("score")
@click.option("--task", required=True, type=click.Choice(["retrieval", "generation", "e2e"]))
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--qa", "qa_path", required=True, type=click.Path(exists=True))
@click.option("--fmt-aware", is_flag=True, default=False)
@click.option("--rate", type=float, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", default=None, type=click.Path())
def score_cmd(task, pred_path, qa_path, fmt_aware, rate, seed, out_path):
    """Score externally produced predictions against a QA set."""
    plan = FmtPlan(rate=rate, seed=seed) if rate is not None else None
    report = harness.score_predictions(task, docmodel.read_jsonl(pred_path),
                                       docmodel.load_qa(qa_path),
                                       fmt_aware=fmt_aware, plan=plan)
    if out_path:
        _write_report(report, out_path)
    else:
        click.echo(report.to_json())


@main.command("rnoise")
@click.option("--qa", "qa_path", required=True, type=click.Path(exists=True))
@click.option("--pages", "pages_path", required=True, type=click.Path(exists=True))
def rnoise_cmd(qa_path, pages_path):
    """Fraction of QAs whose evidence no longer sits on the perturbed pages."""
    qas = docmodel.load_qa(qa_path)
    pages = docmodel.load_page_texts(pages_path)
    value = metrics.r_noise(qas, pages)
    click.echo(json.dumps({"r_noise": value, "n_qas": len(qas)}))


@main.command("qa-filter")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report", "report_path", default=None, type=click.Path())
@click.option("--llm-endpoint", default=None)
@click.option("--llm-model", default=None)
def qa_filter_cmd(in_path, out_path, report_path, llm_endpoint, llm_model):
    """Apply the heuristic QA quality filters (plus optional LLM judging)."""
    qas = docmodel.load_qa(in_path)
    kept, report = qafilter.filter_qas(qas)
    if llm_endpoint:
        if not llm_model:
            raise click.ClickException("--llm-endpoint needs --llm-model")
        cfg = generation.GenConfig(endpoint_url=llm_endpoint, model_id=llm_model)
        kept = [qa for qa in kept if qafilter.llm_judge_qa(qa, cfg)]
    docmodel.save_qa(kept, out_path)
    if report_path:
        Path(report_path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    click.echo(f"kept {len(kept)}/{len(qas)} QAs -> {out_path}")


@main.command("report")
@click.argument("reports", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--csv", "csv_path", default=None, type=click.Path())
def report_cmd(reports, csv_path):
    """Render saved EvalReports as a text table (and optionally CSV)."""
    entries = []
    for path in reports:
        report = harness.EvalReport.from_json(Path(path).read_text())
        entries.append((Path(path).stem, report))
    click.echo(harness.render_report_table(entries))
    if csv_path:
        Path(csv_path).write_text(harness.reports_to_csv(entries))
        click.echo(f"wrote {csv_path}")


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def sweep_cmd(config_path, out_dir):
    """Drive a noise-level sweep from a single JSON config.

    Config keys: corpus, qa, seed, rates (list), retriever, k, fmt_aware,
    chat_endpoint {url, model} (optional: adds the e2e stage).
    """
    config = json.loads(Path(config_path).read_text())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs = _load_parsed_corpus(config["corpus"])
    qas = docmodel.load_qa(config["qa"])
    seed = int(config.get("seed", 0))
    retriever = _make_retriever(config.get("retriever", "bm25"),
                                config.get("embed_endpoint"), config.get("embed_model"))
    k = int(config.get("k", 2))
    chat = config.get("chat_endpoint")
    entries = []
    for rate in [0.0] + [float(r) for r in config.get("rates", [0.1, 0.3, 0.6])]:
        plan = FmtPlan(rate=rate, seed=seed)
        pages = docs if rate == 0 else [perturb_doc(d, plan) for d in docs]
        kbs = retrieval.build_domain_kbs(pages, size=int(config.get("size", 1024)))
        label = f"fmt-r{rate:g}"
        report = harness.eval_retrieval(kbs, qas, retriever, k=k,
                                        fmt_aware=bool(config.get("fmt_aware", False)),
                                        plan=plan if rate else None,
                                        config={"rate": rate, "seed": seed})
        (out / f"retrieval_{label}.json").write_text(report.to_json() + "\n")
        entries.append((f"retrieval {label}", report))
        if chat:
            cfg = generation.GenConfig(endpoint_url=chat["url"], model_id=chat["model"])
            e2e = harness.eval_e2e(kbs, qas, retriever, cfg, k=k,
                                   config={"rate": rate, "seed": seed})
            (out / f"e2e_{label}.json").write_text(e2e.to_json() + "\n")
            entries.append((f"e2e {label}", e2e))
    table = harness.render_report_table(entries)
    (out / "summary.txt").write_text(table + "\n")
    (out / "summary.csv").write_text(harness.reports_to_csv(entries))
    click.echo(table)
    click.echo(f"sweep complete -> {out_dir}")


if __name__ == "__main__":
    main()
