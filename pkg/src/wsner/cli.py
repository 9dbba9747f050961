"""Command-line surface: ingest → annotate → train → evaluate, plus the
experiment sweep.

Exit codes: 0 success, 1 data error (message names the file and line when
known), 2 usage error (argparse).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import evaluation, experiment, ingest, noise, tagger
from .corpus import Dataset, TagSet, read_conll, read_tokens, write_conll
from .date_rules import DateRuleSet, default_date_rules
from .errors import WsnerError
from .gazetteer import annotate_distant, build_gazetteer, read_entity_tsv

ENDPOINT_ENV = "WSNER_ENDPOINT"


def _tag_set(args) -> TagSet:
    if getattr(args, "entity_types", None):
        return TagSet(tuple(args.entity_types.split(",")))
    return TagSet()


def _parse_min_len(values) -> dict[str, int]:
    out = {}
    for item in values or []:
        if "=" not in item:
            raise WsnerError(f"--min-len expects SOURCE=N, got {item!r}")
        source, _, n = item.partition("=")
        out[source] = int(n)
    return out


def _load_rules(spec: str | None) -> DateRuleSet | None:
    if spec is None:
        return None
    if spec == "default":
        return default_date_rules()
    return DateRuleSet.load(spec)


def _build_gazetteer(args, tag_set: TagSet):
    entries = []
    for path in args.gazetteer or []:
        entries.extend(read_entity_tsv(path, tag_set))
    return build_gazetteer(
        entries,
        _parse_min_len(getattr(args, "min_len", None)),
        default_min_len=getattr(args, "default_min_len", 1),
        lowercase=getattr(args, "lowercase", False),
        strip_marks=getattr(args, "strip_diacritics", False),
        tag_set=tag_set,
    )


def _tagger_config(path: str | None, seed: int | None) -> tuple[tagger.TaggerConfig, dict]:
    """Tagger config plus leftover noise-method options from a flat JSON
    file; CLI seed wins over the file."""
    doc = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise WsnerError(f"{path}: invalid JSON: {exc}") from None
    keys = ("hidden_size", "feature_size", "learning_rate", "epochs", "seed",
            "fine_tune_embeddings", "cell")
    cfg_kwargs = {k: doc.pop(k) for k in keys if k in doc}
    if seed is not None:
        cfg_kwargs["seed"] = seed
    try:
        return tagger.TaggerConfig(**cfg_kwargs), doc
    except (TypeError, ValueError) as exc:
        raise WsnerError(f"bad tagger config: {exc}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    query = ingest.EntityQuery(
        entity_class=args.entity_class,
        language_code=args.lang,
        endpoint_url=args.endpoint,
        page_size=args.page_size,
        max_results=args.max_results,
    )
    transport = None
    if args.fixture:
        transport = ingest.FixtureTransport.from_files(args.fixture)
    result = ingest.fetch_entities(query, transport)
    ingest.write_entity_tsv(result.entries, args.out)
    note = " (truncated at max-results)" if result.truncated else ""
    print(f"wrote {len(result.entries)} {args.entity_class} entries to {args.out}{note}")
    return 0


def cmd_annotate(args) -> int:
    tag_set = _tag_set(args)
    corpus = read_tokens(args.corpus)
    corpus = Dataset(corpus.sentences, tag_set)
    gaz = _build_gazetteer(args, tag_set)
    rules = _load_rules(args.keywords)
    annotated = annotate_distant(corpus, gaz, rules)
    write_conll(annotated, args.out)
    n_spans = sum(len(s.spans) for s in annotated.sentences)
    print(f"annotated {len(annotated.sentences)} sentences "
          f"({n_spans} spans) -> {args.out}")
    return 0


def _derive_pairs(clean: Dataset, distant: Dataset, args, tag_set: TagSet) -> Dataset:
    if args.gazetteer:
        gaz = _build_gazetteer(args, tag_set)
        return annotate_distant(clean, gaz, _load_rules(args.keywords))
    index = {}
    for sent in distant.sentences:
        index.setdefault(sent.tokens, sent)
    sentences = []
    for sent in clean.sentences:
        match = index.get(sent.tokens)
        if match is None:
            raise WsnerError(
                "cannot pair clean sentences with distant annotations; "
                "pass --gazetteer/--keywords or include the clean sentences "
                "in the distant file"
            )
        sentences.append(match)
    return Dataset(tuple(sentences), tag_set)


def cmd_train(args) -> int:
    tag_set = _tag_set(args)
    clean = read_conll(args.clean, tag_set=tag_set)
    distant = (read_conll(args.distant, tag_set=tag_set, provenance="distant")
               if args.distant else Dataset((), tag_set))
    table = tagger.EmbeddingTable.load(args.embeddings)
    config, extra = _tagger_config(args.config, args.seed)

    channel = None
    if args.method == "baseline-clean" or not distant.sentences:
        params = tagger.train(clean, config, table)
    elif args.method == "naive-mix":
        params = noise.train_naive_mix(clean, distant, config, table)
    elif args.method == "confusion":
        pairs = _derive_pairs(clean, distant, args, tag_set)
        params, channel = noise.train_confusion_method(
            clean, distant, pairs, config, table,
            alpha=extra.get("alpha", 1.0))
    elif args.method == "noise-channel":
        from .corpus import merge
        data = merge(clean, distant)
        params, state = noise.em_noise_channel(
            data, config, table, extra.get("em_iterations", 10))
        channel = state.channel
    elif args.method == "cleaning":
        pairs = _derive_pairs(clean, distant, args, tag_set)
        params, _ = noise.train_cleaning_method(
            clean, distant, pairs, config, table,
            cleaner_hidden=extra.get("cleaner_hidden", 32),
            cleaner_learning_rate=extra.get("cleaner_learning_rate", 0.1),
            cleaner_epochs=extra.get("cleaner_epochs", 50))
    else:
        raise WsnerError(f"unknown method {args.method!r}")

    tagger.save_checkpoint(args.model_out, params, tag_set)
    print(f"saved model to {args.model_out}")
    if channel is not None and args.confusion_out:
        noise.save_confusion(channel, args.confusion_out)
        print(f"saved confusion matrix to {args.confusion_out}")
    return 0


def cmd_evaluate(args) -> int:
    tag_set = _tag_set(args)
    gold = read_conll(args.gold, tag_set=tag_set)
    if args.pred:
        pred = read_conll(args.pred, tag_set=tag_set)
    else:
        if not (args.model and args.embeddings):
            raise WsnerError("pass either --pred or both --model and --embeddings")
        params, model_tags = tagger.load_checkpoint(args.model)
        gold = read_conll(args.gold, tag_set=model_tags)
        tag_set = model_tags
        table = tagger.EmbeddingTable.load(args.embeddings)
        pred = tagger.predict(gold, params, table)
    metrics = evaluation.span_prf(gold, pred)
    print(evaluation.format_report(metrics))
    if args.csv:
        import csv as _csv
        columns = ["gold", "pred_source"] + evaluation.metrics_columns(tag_set)
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            row = {"gold": args.gold,
                   "pred_source": args.pred or args.model}
            row.update(evaluation.metrics_row(metrics, tag_set))
            writer.writerow(row)
        print(f"wrote metrics to {args.csv}")
    return 0


def cmd_quality(args) -> int:
    tag_set = _tag_set(args)
    gold = read_conll(args.gold, tag_set=tag_set)
    distant = read_conll(args.distant, tag_set=tag_set, provenance="distant")
    metrics = evaluation.annotation_quality(gold, distant)
    print(evaluation.format_report(metrics, title="Distant annotation quality"))
    return 0


def cmd_inspect(args) -> int:
    if args.model:
        params, tag_set = tagger.load_checkpoint(args.model)
        print(f"cell: {params.cell}")
        print(f"labels: {' '.join(tag_set.labels)}")
        print(f"embedding dim: {params.embed_dim}  hidden: {params.hidden_size}  "
              f"features: {params.feature_size}  labels: {params.label_count}")
        print(f"parameters: {params.num_parameters}")
        for name, arr in params.arrays():
            print(f"  {name:8s} shape={arr.shape} "
                  f"min={arr.min():+.4f} max={arr.max():+.4f}")
    elif args.confusion:
        channel = noise.load_confusion(args.confusion)
        width = max(len(lab) for lab in channel.labels)
        header = " ".join(f"{lab:>8s}" for lab in channel.labels)
        print(f"{'':{width}s} {header}")
        for lab, row in zip(channel.labels, channel.matrix):
            cells = " ".join(f"{v:8.4f}" for v in row)
            print(f"{lab:{width}s} {cells}")
    else:
        raise WsnerError("pass --model or --confusion")
    return 0


def cmd_experiment(args) -> int:
    overrides = {}
    if args.out_dir:
        overrides["out_dir"] = os.path.abspath(args.out_dir)
    if args.repeats is not None:
        overrides["repeats"] = args.repeats
    if args.base_seed is not None:
        overrides["base_seed"] = args.base_seed
    if args.budgets:
        overrides["clean_budgets"] = args.budgets.split(",")
    if args.methods:
        overrides["methods"] = args.methods.split(",")
    config = experiment.load_config(args.config, overrides)
    runs_path, agg_path = experiment.run_experiment(config)
    print(f"per-run metrics: {runs_path}")
    print(f"aggregated metrics: {agg_path}")
    return 0


def cmd_synth(args) -> int:
    from .make_synth import write_synth_corpus
    paths = write_synth_corpus(args.out_dir, seed=args.seed)
    print(f"wrote synthetic corpus to {args.out_dir}")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wsner",
        description="Weakly supervised NER: annotate, train, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="fetch an entity list from a SPARQL endpoint")
    p.add_argument("--class", dest="entity_class", required=True,
                   choices=("person", "organization", "location"))
    p.add_argument("--lang", required=True, help="label language code, e.g. yo")
    p.add_argument("--endpoint",
                   default=os.environ.get(ENDPOINT_ENV, ingest.WIKIDATA_ENDPOINT))
    p.add_argument("--out", required=True)
    p.add_argument("--page-size", type=int, default=1000)
    p.add_argument("--max-results", type=int, default=None)
    p.add_argument("--fixture", action="append",
                   help="recorded response page(s); replays instead of HTTP")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("annotate", help="distant annotation via entity lists and date rules")
    p.add_argument("--corpus", required=True,
                   help="pre-tokenized file, one token per line")
    p.add_argument("--gazetteer", action="append", default=[])
    p.add_argument("--keywords", default=None,
                   help="keyword file, or 'default' for the bundled list")
    p.add_argument("--min-len", action="append", dest="min_len",
                   help="SOURCE=N minimum character length per source")
    p.add_argument("--default-min-len", type=int, default=1)
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--strip-diacritics", action="store_true")
    p.add_argument("--entity-types", default=None, help="comma-separated")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("train", help="train a tagger, optionally with noise handling")
    p.add_argument("--clean", required=True)
    p.add_argument("--distant", default=None)
    p.add_argument("--method", default="baseline-clean",
                   choices=("baseline-clean", "naive-mix", "confusion",
                            "noise-channel", "cleaning"))
    p.add_argument("--config", default=None, help="flat JSON tagger/noise config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--gazetteer", action="append", default=[])
    p.add_argument("--keywords", default=None)
    p.add_argument("--min-len", action="append", dest="min_len")
    p.add_argument("--default-min-len", type=int, default=1)
    p.add_argument("--entity-types", default=None)
    p.add_argument("--model-out", required=True)
    p.add_argument("--confusion-out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="span P/R/F1 of predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--entity-types", default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("quality", help="score a distant annotation against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--distant", required=True)
    p.add_argument("--entity-types", default=None)
    p.set_defaults(func=cmd_quality)

    p = sub.add_parser("inspect", help="dump a model checkpoint or confusion matrix")
    p.add_argument("--model", default=None)
    p.add_argument("--confusion", default=None)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("experiment", help="run the clean-size × method × seed sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--base-seed", type=int, default=None)
    p.add_argument("--budgets", default=None,
                   help="comma-separated token budgets; 'unlimited' allowed")
    p.add_argument("--methods", default=None, help="comma-separated method names")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("synth", help="regenerate the bundled synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except WsnerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
