"""Command-line interface: one subcommand per stage plus ``pipeline``.

Every stage reads and writes plain files, so a run can resume from any
stage. Outputs are written to a temporary file and moved into place only
when the stage succeeds.
"""

from __future__ import annotations

import contextlib
import json
import logging
import os
import sys
import tempfile
from collections import Counter
from pathlib import Path
from typing import Iterator, Optional, Sequence

import click

from . import analytics, matcher, metrics
from .annotation import AnnotationCache, Annotator, MockBackend, RemoteBackend, RemoteConfig
from .build import build_kb, propagate_levels
from .config import Config, load_config
from .graph import build_graph, load_embeddings, read_graph, write_graph
from .kb import load_kb, read_triples, sort_triples, validate_triples, kb_stats, write_triples
from .parser import count_and_filter, parse_concepts, read_candidates, read_conllu, read_ranked, write_candidates, write_ranked
from .seeds import cluster, cqi, read_clustering, read_seeds, select_seeds, write_clustering, write_seeds
from .taxonomy import Concept, Taxonomy, load_taxonomy

logger = logging.getLogger("esgkb")


@contextlib.contextmanager
def atomic_output(path) -> Iterator[Path]:
    """Yield a temporary path next to ``path``; move it over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _taxonomy(cfg: Config) -> Taxonomy:
    return load_taxonomy(cfg.taxonomy or None)


def make_annotator(cfg: Config, taxonomy: Optional[Taxonomy] = None) -> Annotator:
    if cfg.backend == "mock":
        backend = MockBackend(cfg.mock_fixture or None)
    elif cfg.backend == "remote":
        backend = RemoteBackend(
            RemoteConfig(cfg.base_url, cfg.model, cfg.api_key_env, cfg.timeout, cfg.max_retries)
        )
    else:
        raise click.ClickException(f"unknown backend {cfg.backend!r}")
    cache = AnnotationCache(cfg.cache) if cfg.cache else None
    return Annotator(backend, taxonomy, cfg.batch_size, cfg.max_concurrency, cache)


# ------------------------------------------------------------------ stages


def stage_parse(inputs: Sequence[Path], out: Path) -> int:
    sentences = read_conllu(inputs)
    found = []
    for s in sentences:
        found.extend(sorted(parse_concepts(s), key=lambda c: (c.concept.text, c.pattern)))
    with atomic_output(out) as tmp:
        write_candidates(found, tmp)
    return len(found)


def stage_filter(candidates: Path, out: Path, top_k: int) -> int:
    ranked = count_and_filter(read_candidates(candidates), top_k)
    with atomic_output(out) as tmp:
        write_ranked(ranked, tmp)
    return len(ranked)


def stage_qc(ranked: Path, out: Path, annotator: Annotator) -> int:
    rows = read_ranked(ranked)
    reordered = annotator.reorder([c for c, _ in rows])
    freq: Counter = Counter()
    for c, (_, n) in zip(reordered, rows):
        freq[c] += n
    keep = [c for c, ok in zip(freq, annotator.coherence(list(freq))) if ok]
    result = sorted(((c, freq[c]) for c in keep), key=lambda kv: (-kv[1], kv[0].text))
    with atomic_output(out) as tmp:
        write_ranked(result, tmp)
    return len(result)


def stage_graph(embeddings: Path, concepts: Optional[Path], edges: Path, nodes: Path, cfg: Config) -> tuple[int, int]:
    table = load_embeddings(embeddings)
    if concepts is not None:
        wanted = [c for c, _ in read_ranked(concepts)]
        table_idx = table.index()
        missing = [c.text for c in wanted if c not in table_idx]
        if missing:
            logger.warning("%d concept(s) without embeddings dropped, e.g. %s", len(missing), missing[:5])
        table = table.subset(wanted)
    graph = build_graph(table, cfg.similarity_threshold, cfg.graph_block_size, cfg.n_jobs)
    with atomic_output(edges) as te, atomic_output(nodes) as tn:
        write_graph(graph, table.concepts, te, tn)
    return graph.n_nodes, graph.n_edges


def _read_nodes(nodes: Path) -> list[Concept]:
    out = []
    with open(nodes, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(Concept(line.rstrip("\n").split("\t")[1]))
    return out


def stage_cluster(embeddings: Path, nodes: Path, out: Path, cfg: Config) -> int:
    concepts = _read_nodes(nodes)
    table = load_embeddings(embeddings)
    idx = table.index()
    missing = [c.text for c in concepts if c not in idx]
    if missing:
        raise click.ClickException(f"no embedding for graph node(s): {missing[:5]}")
    table = table.subset(concepts)
    result = cluster(table, cfg.cluster_provider, cfg.cluster_file or None, cfg.similarity_threshold)
    with atomic_output(out) as tmp:
        write_clustering(result, tmp)
    return len(set(result.labels.tolist()))


def stage_seeds(edges: Path, nodes: Path, clustering: Path, out: Path, target: int, beta: float) -> int:
    graph, concepts = read_graph(edges, nodes)
    result = select_seeds(graph, read_clustering(clustering, graph.n_nodes), target, beta)
    with atomic_output(out) as tmp:
        write_seeds(result, [c.text for c in concepts], tmp)
    return len(result)


def stage_annotate(seeds: Path, out: Path, annotator: Annotator, taxonomy: Taxonomy) -> int:
    concepts = [Concept(c) for c, _, _ in read_seeds(seeds)]
    triples = [t for a in annotator.annotate_seeds(concepts, taxonomy) for t in a.triples()]
    triples = sort_triples(triples, taxonomy)
    with atomic_output(out) as tmp:
        write_triples(triples, tmp)
    return len(triples)


def stage_propagate(edges: Path, nodes: Path, seeds: Path, seed_triples: Path, out: Path, cfg: Config,
                    taxonomy: Taxonomy) -> int:
    graph, concepts = read_graph(edges, nodes)
    seed_concepts = [Concept(c) for c, _, _ in read_seeds(seeds)]
    triples = propagate_levels(
        graph, concepts, seed_concepts, read_triples(seed_triples, taxonomy), taxonomy,
        n_layers=cfg.n_layers, alpha=cfg.alpha, tol=cfg.convergence_tol,
        tau_assign=cfg.tau_assign, n_jobs=cfg.n_jobs,
    )
    with atomic_output(out) as tmp:
        write_triples(triples, tmp)
    return len(triples)


def stage_build_kb(seed_triples: Path, propagated: Path, out: Path, taxonomy: Taxonomy) -> int:
    try:
        kb = build_kb(read_triples(seed_triples, taxonomy), read_triples(propagated, taxonomy), taxonomy)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    with atomic_output(out) as tmp:
        write_triples(kb.triples, tmp)
    return len(kb)


def stage_match(kb_path: Path, corpus: Sequence[Path], out: Path, cfg: Config, taxonomy: Taxonomy) -> int:
    kb = load_kb(kb_path, taxonomy)
    docs = matcher.read_corpus(corpus)
    kwargs = {"level": cfg.match_level, "n_jobs": cfg.n_jobs}
    if cfg.match_mode == matcher.FLEXIBLE:
        kwargs["ordered"] = cfg.match_ordered
    found = matcher.match(kb, docs, cfg.match_mode, **kwargs)
    with atomic_output(out) as tmp:
        matcher.write_matches(found, tmp)
    return len(found)


def stage_analyze(kb_path: Path, matches: Path, out: Path, fmt: str, top_n: int, taxonomy: Taxonomy) -> int:
    kb = load_kb(kb_path, taxonomy)
    found = matcher.read_matches(matches)
    freqs = analytics.topic_frequencies(found, kb)
    top = analytics.all_top_concepts(found, kb, top_n)
    with atomic_output(out) as tmp:
        analytics.emit_report(freqs, top, tmp, fmt)
    return sum(r.count for r in freqs.rows)


def stage_eval(terms_from: Path, out: Path, judgments: Optional[Path], annotator: Optional[Annotator],
               judgments_out: Optional[Path] = None) -> metrics.Metrics:
    if terms_from.suffix == ".tsv" and _looks_like_matches(terms_from):
        terms = metrics.collect_topic_terms(matcher.read_matches(terms_from))
    else:
        terms = metrics.collect_topic_terms(terms_from.read_text(encoding="utf-8").splitlines())
    if judgments is not None:
        table = metrics.read_judgments(judgments)
    else:
        table = annotator.judge(sorted(terms))
    if judgments_out is not None:
        with atomic_output(judgments_out) as tmp:
            metrics.write_judgments(table, tmp)
    result = metrics.aggregate_metrics(terms, table)
    doc = {"esg_unique": result.esg_unique, "esg_rel": result.esg_rel, "esg_act": result.esg_act,
           "n_terms": result.n_terms}
    with atomic_output(out) as tmp:
        tmp.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return result


def _looks_like_matches(path: Path) -> bool:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                return line.count("\t") == 4
    return True


# ------------------------------------------------------------------ click


def _cfg(ctx: click.Context, **overrides) -> Config:
    return ctx.obj["config"].update(**overrides)


def _fail_on_error(fn):
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, KeyError, OSError) as exc:
            raise click.ClickException(str(exc)) from None

    return wrapper


existing = click.Path(exists=True, dir_okay=False, path_type=Path)
existing_any = click.Path(exists=True, path_type=Path)
output = click.Path(dir_okay=False, path_type=Path)


@click.group()
@click.option("--config", "config_path", type=existing, help="INI file with an [esgkb] section.")
@click.option("-v", "--verbose", count=True, help="More logging (repeatable).")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[Path], verbose: int) -> None:
    """Build an ESG concept knowledge base and use it for topic analysis."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(config_path)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    ctx.obj = {"config": cfg}


@main.command("parse")
@click.argument("inputs", nargs=-1, required=True, type=existing)
@click.option("-o", "--out", required=True, type=output, help="Candidate concept file.")
@_fail_on_error
def parse_cmd(inputs, out):
    """Extract candidate concepts from CoNLL-U files."""
    n = stage_parse(inputs, out)
    click.echo(f"{n} candidate occurrences -> {out}")


@main.command("filter")
@click.option("--candidates", required=True, type=existing)
@click.option("-o", "--out", required=True, type=output, help="Ranked concept file.")
@click.option("--top-k", type=int, default=None)
@click.pass_context
@_fail_on_error
def filter_cmd(ctx, candidates, out, top_k):
    """Keep the top-k most frequent concepts."""
    cfg = _cfg(ctx, top_k=top_k)
    n = stage_filter(candidates, out, cfg.top_k)
    click.echo(f"{n} concepts -> {out}")


def _annotator_options(fn):
    for opt in reversed([
        click.option("--backend", type=click.Choice(["mock", "remote"]), default=None),
        click.option("--mock-fixture", type=existing, default=None),
        click.option("--cache", type=output, default=None),
        click.option("--batch-size", type=int, default=None),
        click.option("--max-concurrency", type=int, default=None),
    ]):
        fn = opt(fn)
    return fn


def _ann_cfg(ctx, backend, mock_fixture, cache, batch_size, max_concurrency, **extra) -> Config:
    return _cfg(ctx, backend=backend, mock_fixture=str(mock_fixture) if mock_fixture else None,
                cache=str(cache) if cache else None, batch_size=batch_size,
                max_concurrency=max_concurrency, **extra)


@main.command("qc")
@click.option("--ranked", required=True, type=existing)
@click.option("-o", "--out", required=True, type=output)
@_annotator_options
@click.pass_context
@_fail_on_error
def qc_cmd(ctx, ranked, out, **ann):
    """Reorder and coherence-check ranked concepts."""
    cfg = _ann_cfg(ctx, **ann)
    n = stage_qc(ranked, out, make_annotator(cfg))
    click.echo(f"{n} concepts passed quality control -> {out}")


@main.command("graph")
@click.option("--embeddings", required=True, type=existing)
@click.option("--concepts", type=existing, default=None, help="Ranked concept file restricting the nodes.")
@click.option("--edges", required=True, type=output)
@click.option("--nodes", required=True, type=output)
@click.option("--similarity-threshold", type=float, default=None)
@click.option("--n-jobs", type=int, default=None)
@click.pass_context
@_fail_on_error
def graph_cmd(ctx, embeddings, concepts, edges, nodes, similarity_threshold, n_jobs):
    """Build the thresholded cosine-similarity graph."""
    cfg = _cfg(ctx, similarity_threshold=similarity_threshold, n_jobs=n_jobs)
    n, m = stage_graph(embeddings, concepts, edges, nodes, cfg)
    click.echo(f"{n} nodes, {m} edges")


@main.command("cluster")
@click.option("--embeddings", required=True, type=existing)
@click.option("--nodes", required=True, type=existing)
@click.option("-o", "--out", required=True, type=output)
@click.option("--cluster-provider", type=click.Choice(["builtin", "import"]), default=None)
@click.option("--cluster-file", type=existing, default=None)
@click.option("--similarity-threshold", type=float, default=None)
@click.pass_context
@_fail_on_error
def cluster_cmd(ctx, embeddings, nodes, out, cluster_provider, cluster_file, similarity_threshold):
    """Assign graph nodes to clusters with confidences."""
    cfg = _cfg(ctx, cluster_provider=cluster_provider, cluster_file=str(cluster_file) if cluster_file else None,
               similarity_threshold=similarity_threshold)
    k = stage_cluster(embeddings, nodes, out, cfg)
    click.echo(f"{k} clusters -> {out}")


@main.command("cqi")
@click.option("--clustering", required=True, type=existing)
@click.option("--cqi-tau", type=float, default=None)
@click.pass_context
@_fail_on_error
def cqi_cmd(ctx, clustering, cqi_tau):
    """Print the share of nodes with clustering confidence above tau."""
    cfg = _cfg(ctx, cqi_tau=cqi_tau)
    click.echo(f"{cqi(read_clustering(clustering), cfg.cqi_tau):.6f}")


@main.command("seeds")
@click.option("--edges", required=True, type=existing)
@click.option("--nodes", required=True, type=existing)
@click.option("--clustering", required=True, type=existing)
@click.option("-o", "--out", required=True, type=output)
@click.option("--target", "seed_target", type=int, default=None)
@click.option("--beta", type=float, default=None)
@click.pass_context
@_fail_on_error
def seeds_cmd(ctx, edges, nodes, clustering, out, seed_target, beta):
    """Select seeds per cluster by consequential score."""
    cfg = _cfg(ctx, seed_target=seed_target, beta=beta)
    n = stage_seeds(edges, nodes, clustering, out, cfg.seed_target, cfg.beta)
    click.echo(f"{n} seeds -> {out}")


@main.command("annotate")
@click.option("--seeds", required=True, type=existing)
@click.option("-o", "--out", required=True, type=output, help="Seed triple file.")
@_annotator_options
@click.pass_context
@_fail_on_error
def annotate_cmd(ctx, seeds, out, **ann):
    """Label seeds level by level with the annotator."""
    cfg = _ann_cfg(ctx, **ann)
    tax = _taxonomy(cfg)
    n = stage_annotate(seeds, out, make_annotator(cfg, tax), tax)
    click.echo(f"{n} seed triples -> {out}")


@main.command("propagate")
@click.option("--edges", required=True, type=existing)
@click.option("--nodes", required=True, type=existing)
@click.option("--seeds", required=True, type=existing)
@click.option("--seed-triples", required=True, type=existing)
@click.option("-o", "--out", required=True, type=output)
@click.option("--n-layers", type=int, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--tau-assign", type=float, default=None)
@click.option("--n-jobs", type=int, default=None)
@click.pass_context
@_fail_on_error
def propagate_cmd(ctx, edges, nodes, seeds, seed_triples, out, n_layers, alpha, tau_assign, n_jobs):
    """Propagate seed labels to the rest of the graph."""
    cfg = _cfg(ctx, n_layers=n_layers, alpha=alpha, tau_assign=tau_assign, n_jobs=n_jobs)
    n = stage_propagate(edges, nodes, seeds, seed_triples, out, cfg, _taxonomy(cfg))
    click.echo(f"{n} propagated triples -> {out}")


@main.command("build-kb")
@click.option("--seed-triples", required=True, type=existing)
@click.option("--propagated", required=True, type=existing)
@click.option("-o", "--out", required=True, type=output)
@click.pass_context
@_fail_on_error
def build_kb_cmd(ctx, seed_triples, propagated, out):
    """Merge seed and propagated triples into a validated knowledge base."""
    n = stage_build_kb(seed_triples, propagated, out, _taxonomy(ctx.obj["config"]))
    click.echo(f"{n} triples -> {out}")


@main.command("validate")
@click.option("--kb", "kb_path", required=True, type=existing)
@click.option("--require-pillar", is_flag=True, help="Treat a concept without a pillar triple as a violation.")
@click.pass_context
@_fail_on_error
def validate_cmd(ctx, kb_path, require_pillar):
    """Check triples against the relation rules; exit 1 on any violation."""
    kb = load_kb(kb_path, _taxonomy(ctx.obj["config"]))
    report = validate_triples(kb, require_pillar=require_pillar)
    for v in report:
        click.echo(str(v))
    if not report.ok:
        click.echo(f"{len(report)} violation(s)", err=True)
        ctx.exit(1)
    click.echo(f"OK: {len(kb)} triples, {len(kb.concepts)} concepts")


@main.command("stats")
@click.option("--kb", "kb_path", required=True, type=existing)
@click.option("-o", "--out", type=output, default=None)
@click.pass_context
@_fail_on_error
def stats_cmd(ctx, kb_path, out):
    """Per-topic triple counts by relation."""
    table = kb_stats(load_kb(kb_path, _taxonomy(ctx.obj["config"])))
    text = table.to_tsv()
    if out is not None:
        with atomic_output(out) as tmp:
            tmp.write_text(text, encoding="utf-8")
    click.echo(text, nl=False)
    click.echo(f"triples\t{table.total_triples}\nunique_concepts\t{table.unique_concepts}")


@main.command("match")
@click.option("--kb", "kb_path", required=True, type=existing)
@click.option("--corpus", required=True, multiple=True, type=existing_any)
@click.option("-o", "--out", required=True, type=output)
@click.option("--mode", "match_mode", type=click.Choice([matcher.EXACT, matcher.FLEXIBLE]), default=None)
@click.option("--level", "match_level", type=click.Choice([matcher.LEMMA, matcher.SURFACE]), default=None)
@click.option("--unordered", is_flag=True, default=False, help="Flexible mode: verb may follow the noun phrase.")
@click.option("--n-jobs", type=int, default=None)
@click.pass_context
@_fail_on_error
def match_cmd(ctx, kb_path, corpus, out, match_mode, match_level, unordered, n_jobs):
    """Find knowledge-base concepts in report text."""
    cfg = _cfg(ctx, match_mode=match_mode, match_level=match_level, n_jobs=n_jobs,
               match_ordered=False if unordered else None)
    n = stage_match(kb_path, corpus, out, cfg, _taxonomy(cfg))
    click.echo(f"{n} matches -> {out}")


@main.command("analyze")
@click.option("--kb", "kb_path", required=True, type=existing)
@click.option("--matches", required=True, type=existing)
@click.option("-o", "--out", required=True, type=output)
@click.option("--format", "report_format", type=click.Choice([analytics.JSON, analytics.CSV]), default=None)
@click.option("--top-n", type=int, default=None)
@click.pass_context
@_fail_on_error
def analyze_cmd(ctx, kb_path, matches, out, report_format, top_n):
    """Topic frequencies and top concepts from matches."""
    cfg = _cfg(ctx, report_format=report_format, top_n=top_n)
    stage_analyze(kb_path, matches, out, cfg.report_format, cfg.top_n, _taxonomy(cfg))
    click.echo(f"report -> {out}")


@main.command("eval")
@click.option("--terms", "terms_from", required=True, type=existing,
              help="Match file, or a plain list with one term per line.")
@click.option("-o", "--out", required=True, type=output, help="Metrics JSON.")
@click.option("--judgments", type=existing, default=None, help="Use these judgments instead of the annotator.")
@click.option("--judgments-out", type=output, default=None)
@click.option("--compare", type=existing, default=None, help="Second judgments file; print agreement.")
@_annotator_options
@click.pass_context
@_fail_on_error
def eval_cmd(ctx, terms_from, out, judgments, judgments_out, compare, **ann):
    """ESG-relatedness and action-orientation metrics over topic terms."""
    cfg = _ann_cfg(ctx, **ann)
    annotator = None if judgments is not None else make_annotator(cfg)
    result = stage_eval(terms_from, out, judgments, annotator, judgments_out)
    click.echo(f"esg_unique\t{result.esg_unique}\nesg_rel\t{result.esg_rel:.4f}\nesg_act\t{result.esg_act:.4f}")
    if compare is not None:
        if judgments is None:
            raise click.ClickException("--compare needs --judgments")
        agree = metrics.agreement(metrics.read_judgments(judgments), metrics.read_judgments(compare))
        for task, pct in agree.items():
            click.echo(f"agreement_{task}\t{pct:.1f}")


# file names used by ``pipeline`` inside its output directory
PIPELINE_FILES = {
    "candidates": "candidates.tsv",
    "ranked": "ranked.tsv",
    "qc": "concepts.tsv",
    "edges": "graph_edges.tsv",
    "nodes": "graph_nodes.tsv",
    "clustering": "clustering.tsv",
    "cqi": "cqi.txt",
    "seeds": "seeds.tsv",
    "seed_triples": "seed_triples.tsv",
    "propagated": "propagated.tsv",
    "kb": "kb.tsv",
    "stats": "stats.tsv",
    "matches": "matches.tsv",
    "report": "report.json",
    "metrics": "metrics.json",
}


def run_pipeline(conllu: Sequence[Path], embeddings: Path, corpus: Sequence[Path], out_dir: Path, cfg: Config,
                 judgments: Optional[Path] = None) -> dict[str, Path]:
    """Run every stage in order, writing the files named in ``PIPELINE_FILES``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    f = {k: out_dir / v for k, v in PIPELINE_FILES.items()}
    tax = _taxonomy(cfg)
    annotator = make_annotator(cfg, tax)
    stage_parse(conllu, f["candidates"])
    stage_filter(f["candidates"], f["ranked"], cfg.top_k)
    stage_qc(f["ranked"], f["qc"], annotator)
    stage_graph(embeddings, f["qc"], f["edges"], f["nodes"], cfg)
    stage_cluster(embeddings, f["nodes"], f["clustering"], cfg)
    with atomic_output(f["cqi"]) as tmp:
        tmp.write_text(f"{cqi(read_clustering(f['clustering']), cfg.cqi_tau):.6f}\n", encoding="utf-8")
    stage_seeds(f["edges"], f["nodes"], f["clustering"], f["seeds"], cfg.seed_target, cfg.beta)
    stage_annotate(f["seeds"], f["seed_triples"], annotator, tax)
    stage_propagate(f["edges"], f["nodes"], f["seeds"], f["seed_triples"], f["propagated"], cfg, tax)
    stage_build_kb(f["seed_triples"], f["propagated"], f["kb"], tax)
    with atomic_output(f["stats"]) as tmp:
        tmp.write_text(kb_stats(load_kb(f["kb"], tax)).to_tsv(), encoding="utf-8")
    stage_match(f["kb"], corpus, f["matches"], cfg, tax)
    stage_analyze(f["kb"], f["matches"], f["report"], analytics.JSON, cfg.top_n, tax)
    stage_eval(f["matches"], f["metrics"], judgments, annotator if judgments is None else None)
    return f


@main.command("pipeline")
@click.option("--conllu", required=True, multiple=True, type=existing)
@click.option("--embeddings", required=True, type=existing)
@click.option("--corpus", required=True, multiple=True, type=existing_any)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--judgments", type=existing, default=None)
@click.option("--top-k", type=int, default=None)
@click.option("--target", "seed_target", type=int, default=None)
@click.option("--mode", "match_mode", type=click.Choice([matcher.EXACT, matcher.FLEXIBLE]), default=None)
@_annotator_options
@click.pass_context
@_fail_on_error
def pipeline_cmd(ctx, conllu, embeddings, corpus, out_dir, judgments, top_k, seed_target, match_mode, **ann):
    """Run all stages from parsed text to report and metrics."""
    cfg = _ann_cfg(ctx, top_k=top_k, seed_target=seed_target, match_mode=match_mode, **ann)
    files = run_pipeline(conllu, embeddings, corpus, out_dir, cfg, judgments)
    for name, path in files.items():
        click.echo(f"{name}\t{path}")


if __name__ == "__main__":  # pragma: no cover
    main()
