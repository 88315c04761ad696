"""Auxiliary-task data: span masking of utterances, non-content noise on canonical forms, joint mixing."""
from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .grammar import MASK, Grammar, tokenize

TASKS = ("parse", "mask", "denoise")
OPERATIONS = ("delete", "replace", "swap", "insert", "duplicate")

# Out-of-grammar filler used by Replace/Insert on top of the grammar's non-content terminals.
DEFAULT_JUNK = ("a", "the", "please", "um", "dishes", "notified", "uty", "get", "some", "order")


@dataclass(frozen=True)
class Example:
    source: tuple[str, ...]
    target: tuple[str, ...]
    task: str = "parse"

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "target", tuple(self.target))
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if MASK in self.target:
            raise ValueError("targets never contain MASK")

    def to_dict(self) -> dict:
        return {"source": " ".join(self.source), "target": " ".join(self.target), "task": self.task}

    @classmethod
    def from_dict(cls, d: dict) -> "Example":
        return cls(tokenize(d["source"]), tokenize(d["target"]), d.get("task", "parse"))


def derive_seed(base: int, index: int) -> int:
    """Per-item seed: stable hash of (base seed, item index)."""
    h = hashlib.blake2b(f"{base}:{index}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big")


@dataclass
class MaskConfig:
    mask_ratio: float = 0.25
    span_lambda: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.mask_ratio < 1:
            raise ValueError("mask_ratio must be in (0, 1)")
        if not self.span_lambda > 0:
            raise ValueError("span_lambda must be positive")


@dataclass
class NoiseConfig:
    p_op: float = 0.35
    op_weights: dict[str, float] = field(default_factory=lambda: dict.fromkeys(OPERATIONS, 1.0))
    seed: int = 0
    vocabulary: tuple[str, ...] = DEFAULT_JUNK  # replacement/insertion pool

    def __post_init__(self):
        if not 0 <= self.p_op <= 1:
            raise ValueError("p_op must be in [0, 1]")
        unknown = set(self.op_weights) - set(OPERATIONS)
        if unknown:
            raise ValueError(f"unknown operations {sorted(unknown)}")
        weights = [self.op_weights.get(op, 0.0) for op in OPERATIONS]
        if any(w < 0 for w in weights) or not any(weights):
            raise ValueError("op_weights must be non-negative and not all zero")
        if not self.vocabulary:
            raise ValueError("noise vocabulary is empty")

    @classmethod
    def for_grammar(cls, g: Grammar, junk: Iterable[str] = DEFAULT_JUNK, **kw) -> "NoiseConfig":
        """Pool = non-content terminals of ``g`` plus junk, minus anything that is content."""
        pool = sorted((set(g.non_content_terminals) | set(junk)) - g.content)
        return cls(vocabulary=tuple(pool), **kw)


class TooShortError(ValueError):
    pass


def _poisson(rng: random.Random, lam: float) -> int:
    # Knuth; lam is small (mean span length)
    limit, k, p = math.exp(-lam), 0, 1.0
    while True:
        p *= rng.random()
        if p <= limit:
            return k
        k += 1


def mask_plan(utterance: Sequence[str], cfg: MaskConfig) -> list[tuple[int, int]]:
    """Spans ``(start, length)`` chosen for ``utterance``, in drawing order.

    Span lengths are Poisson(span_lambda), at least 1, and never large enough
    to mask the whole utterance; drawing stops once ``mask_ratio`` of the
    tokens are covered.
    """
    n = len(utterance)
    if n < 2:
        raise TooShortError("masking needs at least 2 tokens")
    rng = random.Random(cfg.seed)
    need = min(math.ceil(cfg.mask_ratio * n), n - 1)
    masked = [False] * n
    spans = []
    covered = 0
    while covered < need:
        length = min(max(1, _poisson(rng, cfg.span_lambda)), n - 1 - covered)
        while True:
            starts = [s for s in range(n - length + 1) if not any(masked[s:s + length])]
            if starts:
                break
            length -= 1
        s = rng.choice(starts)
        for i in range(s, s + length):
            masked[i] = True
        spans.append((s, length))
        covered += length
    return spans


def apply_mask(utterance: Sequence[str], spans: Iterable[tuple[int, int]]) -> Example:
    """Replace each ``(start, length)`` span by one MASK; touching spans share a MASK."""
    masked = [False] * len(utterance)
    for s, length in spans:
        masked[s:s + length] = [True] * length
    source = []
    for i, tok in enumerate(utterance):
        if not masked[i]:
            source.append(tok)
        elif i == 0 or not masked[i - 1]:
            source.append(MASK)
    return Example(source, utterance, "mask")


def mask_spans(utterance: Sequence[str], cfg: MaskConfig) -> Example:
    return apply_mask(utterance, mask_plan(utterance, cfg))


def masked_fraction(ex: Example) -> float:
    """Fraction of target tokens hidden under MASK spans."""
    visible = sum(1 for t in ex.source if t != MASK)
    return (len(ex.target) - visible) / len(ex.target)


def noise_canonical(form: Sequence[str], content_mask: Sequence[bool], cfg: NoiseConfig) -> Example:
    """Corrupt the non-content tokens of ``form``; content tokens pass through in order.

    Each non-content token is picked with probability ``p_op`` and gets one
    operation. Swap exchanges the token with its follower and is skipped when
    the follower is content or absent; Insert puts the new token before it.
    """
    if len(form) != len(content_mask):
        raise ValueError(f"content mask has {len(content_mask)} entries for {len(form)} tokens")
    rng = random.Random(cfg.seed)
    ops = [op for op in OPERATIONS if cfg.op_weights.get(op, 0) > 0]
    weights = [cfg.op_weights[op] for op in ops]
    out: list[str] = []
    i = 0
    while i < len(form):
        tok = form[i]
        if content_mask[i] or rng.random() >= cfg.p_op:
            out.append(tok)
            i += 1
            continue
        op = rng.choices(ops, weights=weights)[0]
        if op == "delete":
            pass
        elif op == "replace":
            out.append(rng.choice(cfg.vocabulary))
        elif op == "insert":
            out += [rng.choice(cfg.vocabulary), tok]
        elif op == "duplicate":
            out += [tok, tok]
        elif op == "swap":
            if i + 1 < len(form) and not content_mask[i + 1]:
                out += [form[i + 1], tok]
                i += 1
            else:
                out.append(tok)
        i += 1
    return Example(out, form, "denoise")


def build_joint_dataset(labeled: Sequence[Example], utterances: Sequence[Sequence[str]],
                        sampled_targets: Sequence[Sequence[str]], mask_cfg: MaskConfig,
                        noise_cfg: NoiseConfig, shuffle_seed: int,
                        content_tokens: Iterable[str] = ()) -> list[Example]:
    """Labeled examples + one mask example per utterance + one denoise example per target, shuffled.

    Item ``i`` of each auxiliary part uses ``derive_seed(cfg.seed, i)``.
    """
    content = frozenset(content_tokens)
    data = list(labeled)
    for i, utt in enumerate(utterances):
        cfg = MaskConfig(mask_cfg.mask_ratio, mask_cfg.span_lambda, derive_seed(mask_cfg.seed, i))
        data.append(mask_spans(utt, cfg))
    for i, form in enumerate(sampled_targets):
        cfg = NoiseConfig(noise_cfg.p_op, noise_cfg.op_weights, derive_seed(noise_cfg.seed, i),
                          noise_cfg.vocabulary)
        data.append(noise_canonical(form, [t in content for t in form], cfg))
    random.Random(shuffle_seed).shuffle(data)
    return data


def write_jsonl(examples: Iterable[Example], f) -> None:
    for ex in examples:
        f.write(json.dumps(ex.to_dict(), ensure_ascii=False) + "\n")


def read_jsonl(f) -> list[Example]:
    out = []
    for lineno, line in enumerate(f, 1):
        if not line.strip():
            continue
        try:
            out.append(Example.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as e:
            raise ValueError(f"line {lineno}: bad example ({e})") from None
    return out
