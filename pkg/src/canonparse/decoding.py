"""Beam search over a scorer, optionally masked by a canonical-form trie."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .grammar import EOS
from .recognizer import TokenTrie
from .scorer import Scorer

NEG_INF = float("-inf")
DEFAULT_MAX_LEN = 64


class DecodeError(RuntimeError):
    pass


class NoValidPathError(DecodeError):
    pass


class VocabularyMismatchError(DecodeError):
    pass


@dataclass
class DecodeConfig:
    beam_size: int = 4
    max_len: int | None = None  # None: longest trie path + 1, else DEFAULT_MAX_LEN
    constrained: bool = True
    length_normalize: bool = False

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.max_len is not None and self.max_len < 1:
            raise ValueError("max_len must be >= 1")


@dataclass
class Hypothesis:
    tokens: list[str]  # excludes the end-of-sequence marker
    log_score: float
    finished: bool = False
    step_scores: list[float] = field(default_factory=list, repr=False)

    def rank_score(self, length_normalize: bool) -> float:
        if length_normalize:
            return self.log_score / (len(self.tokens) + (1 if self.finished else 0) or 1)
        return self.log_score


def _sort_key(score: float, tokens: Sequence[str]):
    return (-score, tuple(tokens))


def beam_search(scorer: Scorer, trie: TokenTrie | None, source: Sequence[str],
                cfg: DecodeConfig | None = None) -> list[Hypothesis]:
    """Return up to ``beam_size`` finished hypotheses, best first.

    When constrained, tokens outside the trie's valid-next set are scored
    -inf before top-k selection. Ties break by lexicographic token order.
    Finished hypotheses take a beam slot at the step they finish; the search
    runs until no live hypothesis remains or ``max_len`` is hit.
    """
    cfg = cfg or DecodeConfig()
    constrained = cfg.constrained
    if constrained:
        if trie is None:
            raise ValueError("constrained decoding needs a trie")
        missing = trie.vocabulary - scorer.vocabulary
        if missing:
            raise VocabularyMismatchError(
                f"scorer vocabulary lacks {len(missing)} trie tokens, e.g. {sorted(missing)[:5]}")
    max_len = cfg.max_len
    if max_len is None:
        max_len = trie.longest + 1 if trie is not None else DEFAULT_MAX_LEN

    beams = [Hypothesis([], 0.0)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        candidates = []
        for h in beams:
            scores = scorer.score_next(source, h.tokens)
            if constrained:
                valid = trie.valid_next_tokens(h.tokens)
                scores = {t: (s if t in valid else NEG_INF) for t, s in scores.items()}
            for tok, s in scores.items():
                if s == NEG_INF:
                    continue
                candidates.append((h.log_score + s, h.tokens + [tok], h, s))
        if not candidates:
            break
        candidates.sort(key=lambda c: _sort_key(c[0], c[1]))
        beams = []
        for total, toks, parent, s in candidates[:cfg.beam_size]:
            steps = parent.step_scores + [s]
            if toks[-1] == EOS:
                finished.append(Hypothesis(toks[:-1], total, True, steps))
            else:
                beams.append(Hypothesis(toks, total, False, steps))
        if not beams:
            break

    if not finished:
        raise NoValidPathError(f"no finished hypothesis within max_len={max_len}")
    finished.sort(key=lambda h: _sort_key(h.rank_score(cfg.length_normalize), h.tokens))
    return finished[:cfg.beam_size]


@dataclass
class DecodeOutcome:
    tokens: list[str] | None
    log_score: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def decode_batch(scorer: Scorer, trie: TokenTrie | None, sources: Sequence[Sequence[str]],
                 cfg: DecodeConfig | None = None) -> list[DecodeOutcome]:
    """Top-1 decode of each source; per-item failures are recorded, not raised."""
    out = []
    for src in sources:
        try:
            best = beam_search(scorer, trie, src, cfg)[0]
        except DecodeError as e:
            out.append(DecodeOutcome(None, None, f"{type(e).__name__}: {e}"))
        else:
            out.append(DecodeOutcome(best.tokens, best.log_score))
    return out


def greedy(scorer: Scorer, trie: TokenTrie | None, source: Sequence[str], max_len: int) -> list[str]:
    """Argmax at every step; reference path for beam_size=1."""
    toks: list[str] = []
    for _ in range(max_len):
        scores = scorer.score_next(source, toks)
        if trie is not None:
            valid = trie.valid_next_tokens(toks)
            scores = {t: s for t, s in scores.items() if t in valid}
        tok = min(scores, key=lambda t: (-scores[t], t))
        if tok == EOS:
            return toks
        toks.append(tok)
    raise NoValidPathError("greedy decode hit max_len")

