"""Self-training: silver-label unlabeled utterances with constrained decoding, merge with gold, retrain."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

from .canonicalizer import Scheme
from .datagen import Example, MaskConfig, NoiseConfig, build_joint_dataset, derive_seed
from .decoding import DecodeConfig, decode_batch
from .grammar import sample, tokenize
from .metrics import evaluate
from .recognizer import TokenTrie
from .scorer import NGramOverlapScorer, Scorer, train

log = logging.getLogger(__name__)


class ParaphraseFormatError(ValueError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"line {line}: {reason}")


@dataclass
class SelfTrainConfig:
    rounds: int = 1
    include_paraphrases: bool = False
    paraphrase_file: str | None = None
    mask_cfg: MaskConfig = field(default_factory=MaskConfig)
    noise_cfg: NoiseConfig | None = None  # None: NoiseConfig.for_grammar(scheme grammar)
    decode_cfg: DecodeConfig = field(default_factory=DecodeConfig)
    n_sampled_targets: int = 1000
    sample_seed: int = 0
    sample_max_depth: int = 16
    shuffle_seed: int = 0
    order: int = 2
    smoothing_alpha: float = 0.1
    overlap_bonus: float = 1.0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.include_paraphrases and not self.paraphrase_file:
            raise ValueError("include_paraphrases requires paraphrase_file")
        if not self.decode_cfg.constrained:
            raise ValueError("self-training labels with constrained decoding only")


@dataclass
class RoundReport:
    round: int
    inputs: int
    silver_count: int
    failed_count: int
    merged_silver: int
    joint_size: int
    metric_before: float | None
    metric_after: float | None
    failures: list[dict] = field(default_factory=list)
    durations: dict[str, float] = field(default_factory=dict)
    silver: list[Example] = field(default_factory=list, repr=False)

    def to_dict(self, timings: bool = False) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("durations", "silver")}
        if timings:
            d["durations"] = dict(self.durations)
        return d


def ingest_paraphrases(path) -> list[tuple[list[str], list[str]]]:
    """Read ``{"original": ..., "paraphrase": ...}`` lines into token-list pairs."""
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParaphraseFormatError(lineno, f"invalid JSON ({e.msg})") from None
            if not isinstance(obj, dict):
                raise ParaphraseFormatError(lineno, "expected an object")
            for key in ("original", "paraphrase"):
                if not isinstance(obj.get(key), str) or not obj[key].strip():
                    raise ParaphraseFormatError(lineno, f"missing or empty {key!r}")
            pairs.append((tokenize(obj["original"]), tokenize(obj["paraphrase"])))
    return pairs


def silver_label(scorer: Scorer, trie: TokenTrie, utterances: Sequence[Sequence[str]],
                 cfg: DecodeConfig | None = None) -> tuple[list[Example], list[dict]]:
    """Label every utterance with its top constrained hypothesis; no confidence filtering."""
    cfg = cfg or DecodeConfig()
    if not cfg.constrained:
        raise ValueError("silver labeling requires constrained decoding")
    silver, failures = [], []
    for utt, res in zip(utterances, decode_batch(scorer, trie, utterances, cfg)):
        if res.ok:
            silver.append(Example(utt, res.tokens, "parse"))
        else:
            failures.append({"source": " ".join(utt), "error": res.error})
    return silver, failures


def merge_gold_first(golden: Sequence[Example], silver: Sequence[Example]) -> list[Example]:
    """Gold plus silver examples whose source is not already present (gold wins)."""
    seen = {ex.source for ex in golden}
    merged = list(golden)
    for ex in silver:
        if ex.source not in seen:
            seen.add(ex.source)
            merged.append(ex)
    return merged


def _heldout_metric(scorer, trie, scheme, heldout, cfg) -> float | None:
    if not heldout:
        return None
    preds = [r.tokens for r in decode_batch(scorer, trie, [ex.source for ex in heldout], cfg)]
    return evaluate(scheme, preds, [ex.target for ex in heldout]).unordered_em


def sampled_targets(scheme: Scheme, cfg: SelfTrainConfig) -> list[list[str]]:
    return [sample(scheme.grammar, derive_seed(cfg.sample_seed, i), cfg.sample_max_depth)
            for i in range(cfg.n_sampled_targets)]


def _joint_scorer(examples, utterances, targets, scheme, cfg) -> tuple[NGramOverlapScorer, int]:
    noise_cfg = cfg.noise_cfg or NoiseConfig.for_grammar(scheme.grammar)
    joint = build_joint_dataset(examples, utterances, targets, cfg.mask_cfg, noise_cfg,
                                cfg.shuffle_seed, content_tokens=scheme.grammar.content)
    pairs = [(ex.source, ex.target) for ex in joint]
    return train(pairs, cfg.order, cfg.smoothing_alpha, cfg.overlap_bonus), len(joint)


def run_round(golden: Sequence[Example], unlabeled: Sequence[Sequence[str]], cfg: SelfTrainConfig,
              heldout: Sequence[Example], *, scheme: Scheme, trie: TokenTrie,
              paraphrases: Sequence[Sequence[str]] = (), scorer: Scorer | None = None,
              round_index: int = 1) -> tuple[NGramOverlapScorer, RoundReport]:
    """One self-training round.

    Without ``scorer`` the starting model is trained on the joint dataset built
    from ``golden``; otherwise labeling starts from the given model.
    """
    if not golden:
        raise ValueError("self-training needs at least one golden example")
    timer = time.perf_counter
    durations = {}
    inputs = [list(u) for u in unlabeled] + [list(p) for p in paraphrases]
    utterances = [u for u in inputs if len(u) >= 2]
    targets = sampled_targets(scheme, cfg)

    t0 = timer()
    if scorer is None:
        scorer, _ = _joint_scorer(golden, utterances, targets, scheme, cfg)
    metric_before = _heldout_metric(scorer, trie, scheme, heldout, cfg.decode_cfg)
    durations["initial"] = timer() - t0

    t0 = timer()
    silver, failures = silver_label(scorer, trie, inputs, cfg.decode_cfg)
    durations["silver_label"] = timer() - t0

    t0 = timer()
    merged = merge_gold_first(golden, silver)
    new_scorer, joint_size = _joint_scorer(merged, utterances, targets, scheme, cfg)
    metric_after = _heldout_metric(new_scorer, trie, scheme, heldout, cfg.decode_cfg)
    durations["retrain"] = timer() - t0

    report = RoundReport(round_index, len(inputs), len(silver), len(failures),
                         len(merged) - len(golden), joint_size, metric_before, metric_after,
                         failures, durations, silver)
    log.info("round %d: %d silver, %d failed, unordered EM %s -> %s", round_index,
             report.silver_count, report.failed_count, metric_before, metric_after)
    return new_scorer, report


def self_train(golden: Sequence[Example], unlabeled: Sequence[Sequence[str]], cfg: SelfTrainConfig,
               heldout: Sequence[Example], *, scheme: Scheme, trie: TokenTrie
               ) -> tuple[NGramOverlapScorer, list[RoundReport]]:
    paraphrases: list[list[str]] = []
    if cfg.include_paraphrases:
        paraphrases = [p for _, p in ingest_paraphrases(cfg.paraphrase_file)]
    scorer = None
    reports = []
    for r in range(1, cfg.rounds + 1):
        scorer, rep = run_round(golden, unlabeled, cfg, heldout, scheme=scheme, trie=trie,
                                paraphrases=paraphrases, scorer=scorer, round_index=r)
        reports.append(rep)
    return scorer, reports
