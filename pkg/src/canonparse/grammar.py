"""Weighted canonical-form grammars: parsing, sampling, enumeration and a chart recognizer.

Grammar files are line oriented::

    # comment
    ORDER -> "i" "want" NUM SIZE "pizza"   @2.0
    NUM   -> !"one"

Double-quoted items are terminals, ``!"tok"`` marks a content terminal, bare
identifiers are nonterminals, ``@w`` is an optional sampling weight and the
first rule's left-hand side is the start symbol.
"""
from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

EOS = "<eos>"
MASK = "MASK"
RESERVED = frozenset({EOS, MASK})

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_']*$")
_ITEM_RE = re.compile(r'\s*(?:(!?)"([^"]*)"|([A-Za-z_][A-Za-z0-9_\']*))')
_WEIGHT_RE = re.compile(r"\s@\s*([^\s]+)\s*$")


class GrammarError(ValueError):
    """Raised for malformed or invalid grammar text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class UndefinedSymbolError(GrammarError):
    def __init__(self, symbol: str, line: int | None = None):
        self.symbol = symbol
        super().__init__(f"undefined symbol {symbol!r}", line)


class DepthExhaustedError(RuntimeError):
    """No rule of a nonterminal can complete within the remaining depth budget."""


@dataclass(frozen=True)
class Symbol:
    name: str
    terminal: bool

    def __str__(self) -> str:
        return f'"{self.name}"' if self.terminal else self.name


@dataclass(frozen=True)
class Rule:
    lhs: str
    rhs: tuple[Symbol, ...]
    weight: float = 1.0

    def __post_init__(self):
        if not self.rhs:
            raise GrammarError(f"rule for {self.lhs} has an empty right-hand side")
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise GrammarError(f"rule for {self.lhs} has non-positive weight {self.weight}")

    @property
    def nonterminals(self) -> list[str]:
        return [s.name for s in self.rhs if not s.terminal]


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    symbol: str
    message: str


def normalize_token(text: str) -> str:
    if not text or any(c.isspace() for c in text):
        raise GrammarError(f"invalid token {text!r}: tokens are non-empty and whitespace-free")
    if text in RESERVED:
        raise GrammarError(f"token {text!r} is reserved")
    tok = text.lower()
    if tok in RESERVED:
        raise GrammarError(f"token {text!r} is reserved")
    return tok


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization with lowercasing (``MASK`` is kept verbatim)."""
    return [t if t == MASK else t.lower() for t in text.split()]


@dataclass(frozen=True, eq=False)
class Grammar:
    rules: tuple[Rule, ...]
    start: str
    content: frozenset[str] = frozenset()
    diagnostics: tuple[Diagnostic, ...] = field(default=(), compare=False)

    @cached_property
    def nonterminals(self) -> frozenset[str]:
        return frozenset(r.lhs for r in self.rules)

    @cached_property
    def terminals(self) -> frozenset[str]:
        return frozenset(s.name for r in self.rules for s in r.rhs if s.terminal)

    @cached_property
    def rules_for(self) -> dict[str, tuple[Rule, ...]]:
        out: dict[str, list[Rule]] = {}
        for r in self.rules:
            out.setdefault(r.lhs, []).append(r)
        return {k: tuple(v) for k, v in out.items()}

    def is_content(self, token: str) -> bool:
        return token in self.content

    def content_mask(self, tokens: Sequence[str]) -> list[bool]:
        return [t in self.content for t in tokens]

    @property
    def non_content_terminals(self) -> list[str]:
        return sorted(self.terminals - self.content)

    @cached_property
    def min_depth(self) -> dict[str, float]:
        """Smallest derivation depth of each nonterminal (inf if it never terminates)."""
        depth = {n: math.inf for n in self.nonterminals}
        changed = True
        while changed:
            changed = False
            for r in self.rules:
                d = self.rule_min_depth(r, depth)
                if d < depth[r.lhs]:
                    depth[r.lhs] = d
                    changed = True
        return depth

    @staticmethod
    def rule_min_depth(rule: Rule, depth: dict[str, float]) -> float:
        return 1 + max((depth[n] for n in rule.nonterminals), default=0)

    def __repr__(self) -> str:
        return (f"Grammar(start={self.start!r}, nonterminals={len(self.nonterminals)}, "
                f"terminals={len(self.terminals)}, rules={len(self.rules)})")


def _parse_rule_line(line: str, lineno: int) -> tuple[str, list[tuple[str, bool, bool]], float]:
    if "->" not in line:
        raise GrammarError("expected 'LHS -> items'", lineno)
    lhs, rhs = line.split("->", 1)
    lhs = lhs.strip()
    if not _NAME_RE.match(lhs):
        raise GrammarError(f"invalid nonterminal name {lhs!r}", lineno)
    weight = 1.0
    m = _WEIGHT_RE.search(" " + rhs)
    if m:
        try:
            weight = float(m.group(1))
        except ValueError:
            raise GrammarError(f"invalid weight {m.group(1)!r}", lineno) from None
        rhs = (" " + rhs)[: m.start()]
    items = []
    pos = 0
    rhs = rhs.rstrip()
    while pos < len(rhs):
        m = _ITEM_RE.match(rhs, pos)
        if not m:
            raise GrammarError(f"cannot parse rule item at {rhs[pos:].strip()!r}", lineno)
        bang, term, name = m.groups()
        if term is not None:
            try:
                items.append((normalize_token(term), True, bang == "!"))
            except GrammarError as e:
                raise GrammarError(str(e), lineno) from None
        else:
            items.append((name, False, False))
        pos = m.end()
        if pos < len(rhs) and not rhs[pos].isspace():
            raise GrammarError(f"items must be separated by whitespace near {rhs[pos:]!r}", lineno)
    if not items:
        raise GrammarError(f"rule for {lhs} has an empty right-hand side", lineno)
    if weight <= 0 or not math.isfinite(weight):
        raise GrammarError(f"weight must be positive, got {weight}", lineno)
    return lhs, items, weight


def parse_grammar(text: str) -> Grammar:
    """Parse and validate grammar text.

    Raises :class:`GrammarError` (with a line number) on syntax errors and
    :class:`UndefinedSymbolError` when a rule references an undeclared
    nonterminal. Unreachable or non-productive nonterminals do not fail the
    parse; they are reported in ``Grammar.diagnostics``.
    """
    parsed = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        parsed.append((lineno, *_parse_rule_line(line, lineno)))
    if not parsed:
        raise GrammarError("grammar has no rules")

    declared = {lhs for _, lhs, _, _ in parsed}
    content: set[str] = set()
    plain: set[str] = set()
    rules = []
    for lineno, lhs, items, weight in parsed:
        rhs = []
        for name, is_term, is_content in items:
            if not is_term and name not in declared:
                raise UndefinedSymbolError(name, lineno)
            if is_term:
                (content if is_content else plain).add(name)
            rhs.append(Symbol(name, is_term))
        rules.append(Rule(lhs, tuple(rhs), weight))

    g = Grammar(tuple(rules), parsed[0][1], frozenset(content))
    diags = list(_diagnose(g))
    for tok in sorted(content & plain):
        diags.append(Diagnostic("mixed-content", tok,
                                f"terminal {tok!r} is tagged content in some rules only; treated as content"))
    return Grammar(g.rules, g.start, g.content, tuple(diags))


def _strip_comment(line: str) -> str:
    in_quote = False
    for i, c in enumerate(line):
        if c == '"':
            in_quote = not in_quote
        elif c == "#" and not in_quote:
            return line[:i]
    return line


def _diagnose(g: Grammar) -> Iterable[Diagnostic]:
    seen = {g.start}
    stack = [g.start]
    while stack:
        for r in g.rules_for[stack.pop()]:
            for n in r.nonterminals:
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
    for n in sorted(g.nonterminals - seen):
        yield Diagnostic("unreachable", n, f"nonterminal {n} is unreachable from {g.start}")
    for n, d in sorted(g.min_depth.items()):
        if math.isinf(d):
            yield Diagnostic("non-productive", n, f"nonterminal {n} derives no finite string")


def serialize(g: Grammar) -> str:
    lines = []
    for r in g.rules:
        items = []
        for s in r.rhs:
            if s.terminal:
                items.append(('!"%s"' if s.name in g.content else '"%s"') % s.name)
            else:
                items.append(s.name)
        weight = "" if r.weight == 1.0 else f"  @{r.weight!r}"
        lines.append(f"{r.lhs} -> {' '.join(items)}{weight}")
    return "\n".join(lines) + "\n"


def load_grammar(path) -> Grammar:
    with open(path, encoding="utf-8") as f:
        return parse_grammar(f.read())


# -- sampling -----------------------------------------------------------------

def sample(g: Grammar, seed: int, max_depth: int = 16) -> list[str]:
    """Draw one canonical form, choosing rules proportionally to weight.

    Rules whose minimal completion depth exceeds the remaining budget are
    excluded, so recursive grammars always terminate.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    rng = random.Random(seed)
    out: list[str] = []
    _expand(g, g.start, max_depth, rng, out)
    return out


def _expand(g: Grammar, symbol: str, budget: int, rng: random.Random, out: list[str]) -> None:
    depth = g.min_depth
    options = [r for r in g.rules_for[symbol] if g.rule_min_depth(r, depth) <= budget]
    if not options:
        raise DepthExhaustedError(f"no rule for {symbol} completes within depth {budget}")
    rule = rng.choices(options, weights=[r.weight for r in options])[0]
    for s in rule.rhs:
        if s.terminal:
            out.append(s.name)
        else:
            _expand(g, s.name, budget - 1, rng, out)


# -- enumeration --------------------------------------------------------------

@dataclass
class Enumeration:
    forms: list[list[str]]
    truncated: bool

    def __iter__(self):
        return iter(self.forms)

    def __len__(self):
        return len(self.forms)


def enumerate_forms(g: Grammar, max_strings: int = 100_000, max_depth: int = 32,
                    work_limit: int = 2_000_000) -> Enumeration:
    """All distinct strings of L(g) derivable within ``max_depth``, sorted.

    The sorted list is cut at ``max_strings``. ``work_limit`` caps the size of
    any intermediate string set; hitting it also sets ``truncated`` (the result
    is then the smallest strings of the capped sets, not of the full language).
    """
    truncated = False
    level: dict[str, set[tuple[str, ...]]] = {n: set() for n in g.nonterminals}
    for _ in range(max_depth):
        nxt: dict[str, set[tuple[str, ...]]] = {}
        for n in g.nonterminals:
            acc: set[tuple[str, ...]] = set()
            for r in g.rules_for[n]:
                partials: list[tuple[str, ...]] = [()]
                for s in r.rhs:
                    choices = [(s.name,)] if s.terminal else level[s.name]
                    if not choices:
                        partials = []
                        break
                    partials = [p + c for p in partials for c in choices]
                    if len(partials) > work_limit:
                        partials = sorted(partials)[:work_limit]
                        truncated = True
                acc.update(partials)
            if len(acc) > work_limit:
                acc = set(sorted(acc)[:work_limit])
                truncated = True
            nxt[n] = acc
        if nxt == level:
            break
        level = nxt
    forms = sorted(level[g.start])
    if len(forms) > max_strings:
        forms = forms[:max_strings]
        truncated = True
    return Enumeration([list(f) for f in forms], truncated)


# -- recognition --------------------------------------------------------------

class Chart:
    """Bottom-up span chart: ``cell(i, j)`` is the set of nonterminals deriving tokens[i:j].

    Every rule consumes at least one token, so multi-symbol rules only consult
    strictly shorter spans; unit rules are closed per span by fixpoint.
    """

    def __init__(self, g: Grammar, tokens: Sequence[str]):
        self.g = g
        self.tokens = list(tokens)
        n = len(self.tokens)
        self._cells: dict[tuple[int, int], set[str]] = {}
        for length in range(1, n + 1):
            for i in range(n - length + 1):
                self._fill(i, i + length)

    def cell(self, i: int, j: int) -> set[str]:
        return self._cells.get((i, j), set())

    def _fill(self, i: int, j: int) -> None:
        cell: set[str] = set()
        self._cells[(i, j)] = cell
        changed = True
        while changed:
            changed = False
            for r in self.g.rules:
                if r.lhs not in cell and self.splits(r.rhs, i, j):
                    cell.add(r.lhs)
                    changed = True

    def _derives(self, s: Symbol, k: int, j: int) -> Iterable[int]:
        if s.terminal:
            if k < j and self.tokens[k] == s.name:
                yield k + 1
        else:
            for e in range(k + 1, j + 1):
                if s.name in self.cell(k, e):
                    yield e

    def splits(self, rhs: Sequence[Symbol], i: int, j: int) -> bool:
        reach = {i}
        for s in rhs:
            reach = {e for k in reach for e in self._derives(s, k, j)}
            if not reach:
                return False
        return j in reach

    def iter_splits(self, rhs: Sequence[Symbol], i: int, j: int) -> Iterator[list[int]]:
        """Boundaries (len(rhs)+1 of them) covering tokens[i:j], leftmost first."""
        def go(idx: int, k: int) -> Iterator[list[int]]:
            if idx == len(rhs):
                if k == j:
                    yield [k]
                return
            # leave at least one token per remaining symbol
            limit = j - (len(rhs) - idx - 1)
            for e in self._derives(rhs[idx], k, limit):
                for rest in go(idx + 1, e):
                    yield [k] + rest
        return go(0, i)


@dataclass
class Derivation:
    rule: Rule
    children: list["Derivation"]  # one per RHS nonterminal, in order


def recognize(g: Grammar, tokens: Sequence[str]) -> bool:
    if not tokens:
        return False
    return g.start in Chart(g, tokens).cell(0, len(tokens))


def parse(g: Grammar, tokens: Sequence[str]) -> Derivation | None:
    """Deterministic derivation tree: first rule in file order, leftmost splits."""
    if not tokens:
        return None
    chart = Chart(g, tokens)
    if g.start not in chart.cell(0, len(tokens)):
        return None
    return _build(chart, g.start, 0, len(tokens), frozenset())


def _build(chart: Chart, symbol: str, i: int, j: int, active: frozenset) -> Derivation | None:
    key = (symbol, i, j)
    if key in active:
        return None
    active = active | {key}
    for r in chart.g.rules_for[symbol]:
        for bounds in chart.iter_splits(r.rhs, i, j):
            kids = []
            for s, a, b in zip(r.rhs, bounds, bounds[1:]):
                if s.terminal:
                    continue
                d = _build(chart, s.name, a, b, active)
                if d is None:
                    break
                kids.append(d)
            else:
                return Derivation(r, kids)
    return None
