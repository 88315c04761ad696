"""Next-token scoring contract and the n-gram + source-overlap surrogate scorer."""
from __future__ import annotations

import math
from collections import defaultdict
from typing import Iterable, Mapping, Protocol, Sequence, runtime_checkable

from .grammar import EOS

BOS = "<s>"
FORMAT_VERSION = 1


@runtime_checkable
class Scorer(Protocol):
    """Anything that maps (source, prefix) to a log-score for every vocabulary entry."""

    vocabulary: frozenset[str]

    def score_next(self, source: Sequence[str], prefix: Sequence[str]) -> Mapping[str, float]:
        ...


class EmptyCorpusError(ValueError):
    pass


class UniformScorer:
    def __init__(self, vocabulary: Iterable[str]):
        self.vocabulary = frozenset(vocabulary) | {EOS}
        self._logp = -math.log(len(self.vocabulary))

    def score_next(self, source, prefix):
        return dict.fromkeys(self.vocabulary, self._logp)


class NGramOverlapScorer:
    """Add-alpha smoothed order-k LM over targets, plus a constant bonus for source tokens.

    ``counts[context][token]`` holds how often ``token`` followed ``context``
    (the last ``order - 1`` tokens, BOS-padded) in the training targets.
    """

    def __init__(self, order: int = 2, smoothing_alpha: float = 0.1, overlap_bonus: float = 1.0):
        if order < 1:
            raise ValueError("order must be >= 1")
        if not smoothing_alpha > 0:
            raise ValueError("smoothing_alpha must be positive")
        if overlap_bonus < 0:
            raise ValueError("overlap_bonus must be non-negative")
        self.order = order
        self.smoothing_alpha = float(smoothing_alpha)
        self.overlap_bonus = float(overlap_bonus)
        self.counts: dict[tuple[str, ...], dict[str, int]] = defaultdict(dict)
        self._totals: dict[tuple[str, ...], int] = defaultdict(int)
        self.vocabulary: frozenset[str] = frozenset({EOS})
        self.trained_on = 0

    def context(self, prefix: Sequence[str]) -> tuple[str, ...]:
        k = self.order - 1
        if k == 0:
            return ()
        padded = [BOS] * k + list(prefix)
        return tuple(padded[-k:])

    def update(self, target: Sequence[str], times: int = 1) -> None:
        seq = list(target) + [EOS]
        for i, tok in enumerate(seq):
            ctx = self.context(seq[:i])
            row = self.counts[ctx]
            row[tok] = row.get(tok, 0) + times
            self._totals[ctx] += times
        self.vocabulary = self.vocabulary | set(target)
        self.trained_on += times

    def extend_vocabulary(self, tokens: Iterable[str]) -> None:
        """Add zero-count tokens (e.g. grammar terminals never seen in training)."""
        self.vocabulary = self.vocabulary | set(tokens)

    def probability(self, prefix: Sequence[str], token: str) -> float:
        ctx = self.context(prefix)
        v = len(self.vocabulary)
        c = self.counts.get(ctx, {}).get(token, 0)
        return (c + self.smoothing_alpha) / (self._totals.get(ctx, 0) + self.smoothing_alpha * v)

    def score_next(self, source: Sequence[str], prefix: Sequence[str]) -> dict[str, float]:
        ctx = self.context(prefix)
        row = self.counts.get(ctx, {})
        denom = math.log(self._totals.get(ctx, 0) + self.smoothing_alpha * len(self.vocabulary))
        src = set(source) if self.overlap_bonus else ()
        out = {}
        for tok in self.vocabulary:
            s = math.log(row.get(tok, 0) + self.smoothing_alpha) - denom
            if tok in src:
                s += self.overlap_bonus
            out[tok] = s
        return out

    # -- persistence: a header line, then sorted ``context<TAB>token<TAB>count`` rows

    def dumps(self) -> str:
        lines = [f"ngram-overlap-scorer\tv{FORMAT_VERSION}\torder={self.order}\t"
                 f"alpha={self.smoothing_alpha!r}\tbonus={self.overlap_bonus!r}\t"
                 f"trained_on={self.trained_on}"]
        rows = [(" ".join(ctx), tok, c) for ctx, row in self.counts.items() for tok, c in row.items()]
        seen = {tok for _, tok, _ in rows} | {EOS}
        # zero-count rows carry vocabulary added by extend_vocabulary
        rows += [("", tok, 0) for tok in self.vocabulary - seen]
        rows.sort()
        lines += [f"{ctx}\t{tok}\t{c}" for ctx, tok, c in rows]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "NGramOverlapScorer":
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty scorer file")
        head = lines[0].split("\t")
        if head[0] != "ngram-overlap-scorer" or head[1] != f"v{FORMAT_VERSION}":
            raise ValueError(f"unsupported scorer header: {lines[0]!r}")
        fields = dict(f.split("=", 1) for f in head[2:])
        s = cls(int(fields["order"]), float(fields["alpha"]), float(fields["bonus"]))
        vocab = set()
        for lineno, line in enumerate(lines[1:], 2):
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected context<TAB>token<TAB>count")
            ctx = tuple(parts[0].split())
            c = int(parts[2])
            vocab.add(parts[1])
            if c == 0:
                continue
            if len(ctx) != s.order - 1:
                raise ValueError(f"line {lineno}: context length {len(ctx)} != order - 1")
            s.counts[ctx][parts[1]] = c
            s._totals[ctx] += c
        s.vocabulary = frozenset(vocab | {EOS})
        s.trained_on = int(fields["trained_on"])
        return s


def train(examples: Iterable[tuple[Sequence[str], Sequence[str]]], order: int = 2,
          smoothing_alpha: float = 0.1, overlap_bonus: float = 1.0) -> NGramOverlapScorer:
    """Tally targets of (source, target) pairs into a fresh scorer."""
    s = NGramOverlapScorer(order, smoothing_alpha, overlap_bonus)
    for _, target in examples:
        s.update(target)
    if s.trained_on == 0:
        raise EmptyCorpusError("cannot train a scorer on an empty corpus")
    return s


def score_next(s: Scorer, source: Sequence[str], prefix: Sequence[str]) -> Mapping[str, float]:
    return s.score_next(source, prefix)
