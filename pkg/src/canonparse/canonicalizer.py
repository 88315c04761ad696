"""Rule-based conversion between canonical forms and logical-form trees.

A scheme file is a grammar followed by a ``%templates`` section that maps
each rule (1-based, in file order) to the LF fragment it builds::

    ORDER -> "i" "want" NUM SIZE "pizza" "with" TOPS
    NUM   -> !"one"
    ...
    %templates
    1 => (ORDER (PIZZAORDER $1 $2 $3))
    2 => (NUMBER one)

``$k`` splices the forest built by the k-th nonterminal of the rule's
right-hand side. A template may build several sibling trees, or none.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterator, Sequence

from .grammar import Grammar, GrammarError, Rule, parse, parse_grammar


class LFSyntaxError(ValueError):
    pass


class SchemeError(ValueError):
    pass


class UnparseableFormError(ValueError):
    pass


class UnknownLabelError(ValueError):
    def __init__(self, label: str):
        self.label = label
        super().__init__(f"label {label!r} does not occur in any template")


class UnrealizableLFError(ValueError):
    pass


@dataclass(frozen=True)
class LogicalForm:
    label: str
    children: tuple["LogicalForm", ...] = ()

    def __post_init__(self):
        if not self.label or _BAD_ATOM.search(self.label):
            raise LFSyntaxError(f"invalid label {self.label!r}")

    def __str__(self) -> str:
        if not self.children:
            return self.label
        return "(" + " ".join([self.label] + [str(c) for c in self.children]) + ")"

    def labels(self) -> Iterator[str]:
        yield self.label
        for c in self.children:
            yield from c.labels()


_BAD_ATOM = re.compile(r"[\s()]")
_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


def _read_items(text: str) -> list:
    """Nested lists of atoms; each parenthesized group becomes a list."""
    stack: list[list] = [[]]
    for tok in _TOKEN_RE.findall(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise LFSyntaxError(f"unbalanced ')' in {text!r}")
            done = stack.pop()
            if not done or not isinstance(done[0], str):
                raise LFSyntaxError(f"group without a label in {text!r}")
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise LFSyntaxError(f"unbalanced '(' in {text!r}")
    return stack[0]


def _to_lf(item) -> LogicalForm:
    if isinstance(item, str):
        return LogicalForm(item)
    return LogicalForm(item[0], tuple(_to_lf(c) for c in item[1:]))


def parse_lf(text: str) -> LogicalForm:
    """Parse one s-expression; ``(B)`` and ``B`` both denote a childless node."""
    items = _read_items(text)
    if len(items) != 1:
        raise LFSyntaxError(f"expected exactly one tree, got {len(items)}")
    return _to_lf(items[0])


def _key(t: LogicalForm) -> str:
    if not t.children:
        return t.label
    return "(" + " ".join([t.label] + sorted(_key(c) for c in t.children)) + ")"


def unordered_key(t: LogicalForm) -> str:
    """Serialization with children recursively sorted; equal iff trees are unordered-equal."""
    return _key(t)


def unordered_equal(a: LogicalForm, b: LogicalForm) -> bool:
    return _key(a) == _key(b)


# -- templates ----------------------------------------------------------------

@dataclass(frozen=True)
class Slot:
    index: int  # 1-based position among the rule's RHS nonterminals


@dataclass(frozen=True)
class Pattern:
    label: str
    items: tuple  # of Slot | Pattern


def _to_pattern(item):
    if isinstance(item, str):
        if item.startswith("$"):
            try:
                return Slot(int(item[1:]))
            except ValueError:
                raise SchemeError(f"bad slot {item!r}") from None
        return Pattern(item, ())
    if item[0].startswith("$"):
        raise SchemeError(f"slot {item[0]!r} cannot label a node")
    return Pattern(item[0], tuple(_to_pattern(c) for c in item[1:]))


def _slots(items) -> Iterator[int]:
    for it in items:
        if isinstance(it, Slot):
            yield it.index
        else:
            yield from _slots(it.items)


def _pattern_labels(items) -> Iterator[str]:
    for it in items:
        if isinstance(it, Pattern):
            yield it.label
            yield from _pattern_labels(it.items)


class Scheme:
    """A grammar plus one LF template per rule."""

    def __init__(self, grammar: Grammar, templates: Sequence[tuple]):
        if len(templates) != len(grammar.rules):
            raise SchemeError(f"{len(grammar.rules)} rules but {len(templates)} templates")
        for n, (rule, items) in enumerate(zip(grammar.rules, templates), 1):
            used = sorted(_slots(items))
            expected = list(range(1, len(rule.nonterminals) + 1))
            if used != expected:
                raise SchemeError(f"template {n} must use each of slots {expected} exactly once, got {used}")
        self.grammar = grammar
        self.templates = tuple(tuple(t) for t in templates)
        self._index = {id(r): i for i, r in enumerate(grammar.rules)}
        self.labels = frozenset(l for t in self.templates for l in _pattern_labels(t))

    def template(self, rule: Rule) -> tuple:
        return self.templates[self._index[id(rule)]]

    # canonical form -> LF

    def to_lf(self, tokens: Sequence[str]) -> LogicalForm:
        deriv = parse(self.grammar, tokens)
        if deriv is None:
            raise UnparseableFormError(f"not in the grammar: {' '.join(tokens)!r}")
        forest = self._build(deriv)
        if len(forest) != 1:
            raise SchemeError(f"start template produced {len(forest)} trees, expected 1")
        return forest[0]

    def _build(self, deriv) -> list[LogicalForm]:
        kids = [self._build(c) for c in deriv.children]
        return _fill(self.template(deriv.rule), kids)

    # LF -> canonical form

    def to_canonical(self, lf: LogicalForm) -> list[str]:
        for label in lf.labels():
            if label not in self.labels:
                raise UnknownLabelError(label)
        memo: dict = {}
        out = self._realize(self.grammar.start, (lf,), frozenset(), memo)
        if out is None:
            raise UnrealizableLFError(f"no derivation builds {lf}")
        return out

    def _realize(self, symbol: str, forest: tuple, active: frozenset, memo: dict) -> list[str] | None:
        key = (symbol, tuple(map(str, forest)))
        if key in memo:
            return memo[key]
        if key in active:
            return None
        active = active | {key}
        result = None
        for rule in self.grammar.rules_for[symbol]:
            for binding in _match(self.template(rule), forest):
                result = self._emit(rule, binding, active, memo)
                if result is not None:
                    break
            if result is not None:
                break
        if result is not None:
            # failures may stem from a cut cycle, so only successes are reused
            memo[key] = result
        return result

    def _emit(self, rule: Rule, binding: dict, active, memo) -> list[str] | None:
        out: list[str] = []
        k = 0
        for s in rule.rhs:
            if s.terminal:
                out.append(s.name)
                continue
            k += 1
            part = self._realize(s.name, tuple(binding[k]), active, memo)
            if part is None:
                return None
            out.extend(part)
        return out


def _fill(items, kids: list[list[LogicalForm]]) -> list[LogicalForm]:
    out: list[LogicalForm] = []
    for it in items:
        if isinstance(it, Slot):
            out.extend(kids[it.index - 1])
        else:
            out.append(LogicalForm(it.label, tuple(_fill(it.items, kids))))
    return out


def _match(items, forest: Sequence[LogicalForm]) -> Iterator[dict[int, list]]:
    """Yield slot bindings under which ``items`` build ``forest`` up to sibling order.

    Node patterns claim trees with their label; leftover trees go to the bare
    slots. Order-preserving splits are tried first so that an already ordered
    forest realizes in its own order.
    """
    patterns = [it for it in items if isinstance(it, Pattern)]
    slots = [it.index for it in items if isinstance(it, Slot)]

    def assign(pi: int, used: frozenset) -> Iterator[tuple[dict, frozenset]]:
        if pi == len(patterns):
            yield {}, used
            return
        p = patterns[pi]
        for ti, t in enumerate(forest):
            if ti in used or t.label != p.label:
                continue
            for inner in _match(p.items, t.children):
                for rest, u in assign(pi + 1, used | {ti}):
                    yield {**inner, **rest}, u

    for binding, used in assign(0, frozenset()):
        leftover = [t for i, t in enumerate(forest) if i not in used]
        if not slots:
            if not leftover:
                yield binding
            continue
        choices = list(itertools.product(range(len(slots)), repeat=len(leftover)))
        # non-decreasing choice sequences keep the forest's order
        choices.sort(key=lambda c: any(a > b for a, b in zip(c, c[1:])))
        for choice in choices:
            parts: dict[int, list] = {s: [] for s in slots}
            for t, c in zip(leftover, choice):
                parts[slots[c]].append(t)
            yield {**binding, **parts}


# -- scheme files -------------------------------------------------------------

def parse_scheme(text: str) -> Scheme:
    lines = text.splitlines()
    try:
        split = next(i for i, l in enumerate(lines) if l.strip() == "%templates")
    except StopIteration:
        raise SchemeError("scheme file has no %templates section") from None
    grammar = parse_grammar("\n".join(lines[:split]))
    templates: dict[int, tuple] = {}
    for lineno, raw in enumerate(lines[split + 1:], split + 2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=>" not in line:
            raise SchemeError(f"line {lineno}: expected 'RULE_ID => template'")
        rid, body = line.split("=>", 1)
        try:
            n = int(rid)
        except ValueError:
            raise SchemeError(f"line {lineno}: rule id must be an integer, got {rid.strip()!r}") from None
        if not 1 <= n <= len(grammar.rules):
            raise SchemeError(f"line {lineno}: no rule {n}")
        if n in templates:
            raise SchemeError(f"line {lineno}: rule {n} already has a template")
        try:
            templates[n] = tuple(_to_pattern(it) for it in _read_items(body))
        except LFSyntaxError as e:
            raise SchemeError(f"line {lineno}: {e}") from None
    missing = [n for n in range(1, len(grammar.rules) + 1) if n not in templates]
    if missing:
        raise SchemeError(f"rules without a template: {missing}")
    return Scheme(grammar, [templates[n] for n in range(1, len(grammar.rules) + 1)])


def load_scheme(path) -> Scheme:
    with open(path, encoding="utf-8") as f:
        try:
            return parse_scheme(f.read())
        except GrammarError as e:
            raise SchemeError(str(e)) from None


def canonical_to_lf(scheme: Scheme, form: Sequence[str]) -> LogicalForm:
    return scheme.to_lf(form)


def lf_to_canonical(scheme: Scheme, lf: LogicalForm) -> list[str]:
    return scheme.to_canonical(lf)
