"""Experiment sweep: clean-budget × method × repeat grid with per-run and
aggregated CSV output.

Every cell is seeded as ``base_seed + repeat`` (subsampling and training),
so any cell can be reproduced in isolation and two full runs of the same
config produce byte-identical CSV files. The runner is resumable: rows
already present in the per-run CSV are detected by (setting, method,
repeat) and skipped.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace

from . import noise, tagger
from .corpus import Dataset, TagSet, merge, read_conll, subsample_tokens
from .date_rules import DateRuleSet, default_date_rules
from .errors import WsnerError
from .evaluation import mean_and_se, metrics_columns, metrics_row, span_prf
from .gazetteer import annotate_distant, build_gazetteer, read_entity_tsv
from .tagger import EmbeddingTable, TaggerConfig

METHODS = ("baseline-clean", "naive-mix", "confusion", "noise-channel",
           "cleaning", "distant-only")

UNLIMITED = "unlimited"


@dataclass(frozen=True)
class ExperimentConfig:
    train_path: str
    test_path: str
    embeddings_path: str
    out_dir: str
    clean_budgets: tuple = (1000, 2000, 4000, None)  # None = full dataset
    methods: tuple = METHODS
    repeats: int = 20
    base_seed: int = 0
    distant_path: str | None = None
    distant_test_path: str | None = None
    extra_corpus_path: str | None = None
    gazetteer_paths: tuple = ()
    keywords_path: str | None = None
    entity_types: tuple = ("PER", "ORG", "LOC", "DATE")
    min_len: dict = field(default_factory=dict)
    default_min_len: int = 1
    tagger: TaggerConfig = field(default_factory=TaggerConfig)
    alpha: float = 1.0
    em_iterations: int = 10
    noise_channel_data: str = "mix"  # or "distant-only"
    cleaner_hidden: int = 32
    cleaner_epochs: int = 50
    cleaner_learning_rate: float = 0.1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        numeric = [b for b in self.clean_budgets if b is not None]
        if any(b < 1 for b in numeric):
            raise ValueError("budgets must be positive")
        as_inf = [float("inf") if b is None else b for b in self.clean_budgets]
        if any(a >= b for a, b in zip(as_inf, as_inf[1:])):
            raise ValueError("budgets must be strictly increasing")
        if self.noise_channel_data not in ("mix", "distant-only"):
            raise ValueError("noise_channel_data must be 'mix' or 'distant-only'")

    def validate_paths(self) -> None:
        required = [self.train_path, self.test_path, self.embeddings_path]
        optional = [self.distant_path, self.distant_test_path,
                    self.extra_corpus_path, self.keywords_path]
        for p in required + [p for p in optional if p] + list(self.gazetteer_paths):
            if not os.path.exists(p):
                raise WsnerError(f"configured file does not exist: {p}")


_TAGGER_KEYS = ("hidden_size", "feature_size", "learning_rate", "epochs",
                "cell", "fine_tune_embeddings")
_PATH_KEYS = {"train": "train_path", "test": "test_path",
              "embeddings": "embeddings_path", "distant": "distant_path",
              "distant_test": "distant_test_path",
              "extra_corpus": "extra_corpus_path", "keywords": "keywords_path"}
_PLAIN_KEYS = ("out_dir", "repeats", "base_seed", "alpha", "em_iterations",
               "noise_channel_data", "cleaner_hidden", "cleaner_epochs",
               "cleaner_learning_rate", "default_min_len")


def _parse_budget(value):
    if value == UNLIMITED or value is None:
        return None
    return int(value)


def config_from_dict(doc: dict, base_dir: str = ".") -> ExperimentConfig:
    """Build a config from a flat JSON document; relative paths resolve
    against the document's directory."""
    doc = dict(doc)

    def resolve(p):
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(base_dir, p)

    kwargs = {}
    for key, attr in _PATH_KEYS.items():
        if key in doc:
            kwargs[attr] = resolve(doc.pop(key))
    if "gazetteers" in doc:
        kwargs["gazetteer_paths"] = tuple(resolve(p) for p in doc.pop("gazetteers"))
    for key in _PLAIN_KEYS:
        if key in doc:
            kwargs[key] = doc.pop(key)
    if "out_dir" in kwargs:
        kwargs["out_dir"] = resolve(kwargs["out_dir"])
    if "clean_budgets" in doc:
        kwargs["clean_budgets"] = tuple(_parse_budget(b) for b in doc.pop("clean_budgets"))
    if "methods" in doc:
        kwargs["methods"] = tuple(doc.pop("methods"))
    if "entity_types" in doc:
        kwargs["entity_types"] = tuple(doc.pop("entity_types"))
    if "min_len" in doc:
        kwargs["min_len"] = {k: int(v) for k, v in doc.pop("min_len").items()}
    tagger_kwargs = {k: doc.pop(k) for k in list(doc) if k in _TAGGER_KEYS}
    if "seed" in doc:
        doc.pop("seed")  # per-repeat seeds override any fixed seed
    if doc:
        raise WsnerError(f"unknown config keys: {sorted(doc)}")
    kwargs["tagger"] = TaggerConfig(**tagger_kwargs)
    return ExperimentConfig(**kwargs)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise WsnerError(f"{path}: invalid JSON: {exc}") from None
    if overrides:
        doc.update(overrides)
    return config_from_dict(doc, os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# data loading and per-cell execution


@dataclass
class _Context:
    config: ExperimentConfig
    tag_set: TagSet
    train: Dataset
    test: Dataset
    distant: Dataset
    distant_test: Dataset | None
    table: EmbeddingTable
    gazetteer: object | None
    date_rules: DateRuleSet | None
    distant_index: dict


def _build_context(config: ExperimentConfig) -> _Context:
    config.validate_paths()
    tag_set = TagSet(tuple(config.entity_types))
    train = read_conll(config.train_path, tag_set=tag_set)
    test = read_conll(config.test_path, tag_set=tag_set)
    table = EmbeddingTable.load(config.embeddings_path)

    gaz = None
    rules = None
    if config.gazetteer_paths:
        entries = []
        for p in config.gazetteer_paths:
            entries.extend(read_entity_tsv(p, tag_set))
        gaz = build_gazetteer(entries, config.min_len,
                              default_min_len=config.default_min_len,
                              tag_set=tag_set)
        rules = (DateRuleSet.load(config.keywords_path) if config.keywords_path
                 else default_date_rules())

    if config.distant_path:
        distant = read_conll(config.distant_path, tag_set=tag_set,
                             provenance="distant")
    elif gaz is not None:
        distant = annotate_distant(train, gaz, rules)
        if config.extra_corpus_path:
            from .corpus import read_tokens
            extra = read_tokens(config.extra_corpus_path)
            extra = Dataset(extra.sentences, tag_set)
            distant = merge(distant, annotate_distant(extra, gaz, rules))
    else:
        distant = Dataset((), tag_set)

    distant_test = None
    if config.distant_test_path:
        distant_test = read_conll(config.distant_test_path, tag_set=tag_set,
                                  provenance="distant")
    elif gaz is not None:
        distant_test = annotate_distant(test, gaz, rules)

    index = {}
    for sent in distant.sentences:
        index.setdefault(sent.tokens, sent)
    return _Context(config, tag_set, train, test, distant, distant_test,
                    table, gaz, rules, index)


def _pair_source_for(clean_sub: Dataset, ctx: _Context) -> Dataset:
    """Distant twin of the clean subsample: re-annotate when a gazetteer is
    configured, otherwise align into the distant pool by token sequence."""
    if ctx.gazetteer is not None:
        return annotate_distant(clean_sub, ctx.gazetteer, ctx.date_rules)
    sentences = []
    for sent in clean_sub.sentences:
        match = ctx.distant_index.get(sent.tokens)
        if match is None:
            raise WsnerError(
                "cannot derive clean/distant pairs: a clean sentence has no "
                "token-identical sentence in the distant data"
            )
        sentences.append(match)
    return Dataset(tuple(sentences), ctx.tag_set)


def run_cell(ctx: _Context, budget, method: str, repeat: int):
    """Train/score one sweep cell; returns RunMetrics."""
    config = ctx.config
    seed = config.base_seed + repeat
    if method == "distant-only":
        if ctx.distant_test is None:
            raise WsnerError(
                "distant-only needs a distant_test file or gazetteer paths"
            )
        return span_prf(ctx.test, ctx.distant_test)

    effective = budget if budget is not None else ctx.train.num_tokens
    clean_sub = subsample_tokens(ctx.train, effective, seed)
    tcfg = replace(config.tagger, seed=seed)
    distant = ctx.distant

    if method == "baseline-clean" or not distant.sentences:
        params = tagger.train(clean_sub, tcfg, ctx.table)
    elif method == "naive-mix":
        params = noise.train_naive_mix(clean_sub, distant, tcfg, ctx.table)
    elif method == "confusion":
        params, _ = noise.train_confusion_method(
            clean_sub, distant, _pair_source_for(clean_sub, ctx), tcfg,
            ctx.table, alpha=config.alpha)
    elif method == "noise-channel":
        data = merge(clean_sub, distant) if config.noise_channel_data == "mix" else distant
        params, _ = noise.em_noise_channel(data, tcfg, ctx.table,
                                           config.em_iterations)
    elif method == "cleaning":
        params, _ = noise.train_cleaning_method(
            clean_sub, distant, _pair_source_for(clean_sub, ctx), tcfg,
            ctx.table, cleaner_hidden=config.cleaner_hidden,
            cleaner_learning_rate=config.cleaner_learning_rate,
            cleaner_epochs=config.cleaner_epochs)
    else:
        raise WsnerError(f"unknown method {method!r}")
    predicted = tagger.predict(ctx.test, params, ctx.table)
    return span_prf(ctx.test, predicted)


# ---------------------------------------------------------------------------
# CSV plumbing


def _budget_name(budget) -> str:
    return UNLIMITED if budget is None else str(budget)


def _runs_columns(tag_set: TagSet) -> list[str]:
    return ["setting", "method", "repeat", "seed", "status"] + metrics_columns(tag_set)


def _existing_keys(path) -> set[tuple[str, str, str]]:
    if not os.path.exists(path):
        return set()
    with open(path, encoding="utf-8", newline="") as fh:
        return {(row["setting"], row["method"], row["repeat"])
                for row in csv.DictReader(fh)}


def run_experiment(config: ExperimentConfig) -> tuple[str, str]:
    """Execute every pending sweep cell in deterministic order, appending
    one CSV row per cell; failed cells get an error marker and the sweep
    continues. Returns (runs csv path, aggregate csv path)."""
    ctx = _build_context(config)
    os.makedirs(config.out_dir, exist_ok=True)
    runs_path = os.path.join(config.out_dir, "runs.csv")
    agg_path = os.path.join(config.out_dir, "aggregate.csv")
    columns = _runs_columns(ctx.tag_set)
    done = _existing_keys(runs_path)

    new_file = not os.path.exists(runs_path)
    with open(runs_path, "a", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        if new_file:
            writer.writeheader()
        for budget in config.clean_budgets:
            for method in config.methods:
                for repeat in range(config.repeats):
                    key = (_budget_name(budget), method, str(repeat))
                    if key in done:
                        continue
                    row = {"setting": key[0], "method": method,
                           "repeat": str(repeat),
                           "seed": str(config.base_seed + repeat)}
                    try:
                        metrics = run_cell(ctx, budget, method, repeat)
                    except (WsnerError, ValueError) as exc:
                        row["status"] = f"error: {type(exc).__name__}: {exc}"
                        row.update({c: "" for c in metrics_columns(ctx.tag_set)})
                    else:
                        row["status"] = "ok"
                        row.update(metrics_row(metrics, ctx.tag_set))
                    writer.writerow(row)
                    fh.flush()
    write_aggregate(runs_path, agg_path, ctx.tag_set)
    return runs_path, agg_path


def write_aggregate(runs_path, agg_path, tag_set: TagSet) -> None:
    """Mean and standard error per (setting, method) over the ok rows."""
    groups: dict[tuple[str, str], list[dict]] = {}
    order: list[tuple[str, str]] = []
    with open(runs_path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["status"] != "ok":
                continue
            key = (row["setting"], row["method"])
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(row)
    value_cols = metrics_columns(tag_set)
    out_cols = ["setting", "method", "n"]
    for col in value_cols:
        out_cols += [f"{col}_mean", f"{col}_se"]
    with open(agg_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=out_cols, lineterminator="\n")
        writer.writeheader()
        for key in order:
            rows = groups[key]
            out = {"setting": key[0], "method": key[1], "n": str(len(rows))}
            for col in value_cols:
                mean, se = mean_and_se([float(r[col]) for r in rows])
                out[f"{col}_mean"] = repr(mean)
                out[f"{col}_se"] = repr(se)
            writer.writerow(out)
