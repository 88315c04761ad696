"""Exact match, unordered (LF-level) exact match and valid-form rate."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

from .canonicalizer import Scheme, UnparseableFormError, unordered_equal
from .grammar import recognize

log = logging.getLogger(__name__)


def exact_match(pred: Sequence[str], gold: Sequence[str]) -> bool:
    return list(pred) == list(gold)


def unordered_em(scheme: Scheme, pred: Sequence[str], gold: Sequence[str]) -> bool:
    """LF equality up to sibling order. Unparseable predictions score False."""
    if exact_match(pred, gold):
        return True
    try:
        gold_lf = scheme.to_lf(gold)
    except UnparseableFormError:
        log.warning("gold form is outside the grammar: %s", " ".join(gold))
        return False
    try:
        pred_lf = scheme.to_lf(pred)
    except UnparseableFormError:
        return False
    return unordered_equal(pred_lf, gold_lf)


@dataclass
class EvalResult:
    em: float
    unordered_em: float
    valid_form_rate: float
    n: int
    per_example: dict[str, list[bool]]

    def to_dict(self, per_example: bool = False) -> dict:
        d = asdict(self)
        if not per_example:
            del d["per_example"]
        return d


def evaluate(scheme: Scheme, preds: Sequence[Sequence[str] | None], golds: Sequence[Sequence[str]]) -> EvalResult:
    """Aggregate all three metrics. A ``None`` prediction (failed decode) counts as wrong and invalid."""
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions for {len(golds)} gold forms")
    if not golds:
        raise ValueError("nothing to evaluate")
    em, uem, valid = [], [], []
    for p, g in zip(preds, golds):
        if p is None:
            em.append(False)
            uem.append(False)
            valid.append(False)
            continue
        em.append(exact_match(p, g))
        uem.append(unordered_em(scheme, p, g))
        valid.append(recognize(scheme.grammar, p))
    n = len(golds)
    return EvalResult(sum(em) / n, sum(uem) / n, sum(valid) / n, n,
                      {"em": em, "unordered_em": uem, "valid_form": valid})
