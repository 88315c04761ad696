"""Token trie over canonical forms, answering valid-next-token queries for constrained decoding."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .grammar import EOS, Grammar, enumerate_forms


class InvalidPrefixError(ValueError):
    def __init__(self, prefix: Sequence[str], position: int):
        self.position = position
        self.token = prefix[position]
        super().__init__(f"prefix leaves the trie at position {position} (token {self.token!r})")


class TruncatedEnumerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PrefixState:
    node: int
    depth: int


class TokenTrie:
    """Id-indexed prefix tree; node 0 is the root."""

    __slots__ = ("_children", "_terminal", "_size", "_longest")

    def __init__(self, forms: Iterable[Sequence[str]]):
        self._children: list[dict[str, int]] = [{}]
        self._terminal: list[bool] = [False]
        self._size = 0
        self._longest = 0
        for form in forms:
            self._insert(form)
        if self._size == 0:
            raise ValueError("cannot build a trie from an empty form list")

    def _insert(self, form: Sequence[str]) -> None:
        if not form:
            raise ValueError("forms must be non-empty")
        node = 0
        for tok in form:
            if tok == EOS:
                raise ValueError(f"form contains the end-of-sequence marker: {form!r}")
            nxt = self._children[node].get(tok)
            if nxt is None:
                nxt = len(self._children)
                self._children[node][tok] = nxt
                self._children.append({})
                self._terminal.append(False)
            node = nxt
        if not self._terminal[node]:
            self._terminal[node] = True
            self._size += 1
            self._longest = max(self._longest, len(form))

    @property
    def root(self) -> int:
        return 0

    @property
    def num_nodes(self) -> int:
        return len(self._children)

    @property
    def longest(self) -> int:
        return self._longest

    @property
    def vocabulary(self) -> frozenset[str]:
        toks = {t for kids in self._children for t in kids}
        return frozenset(toks | {EOS})

    def __len__(self) -> int:
        return self._size

    def walk(self, prefix: Sequence[str]) -> PrefixState:
        node = 0
        for i, tok in enumerate(prefix):
            nxt = self._children[node].get(tok)
            if nxt is None:
                raise InvalidPrefixError(prefix, i)
            node = nxt
        return PrefixState(node, len(prefix))

    def step(self, state: PrefixState, token: str) -> PrefixState | None:
        nxt = self._children[state.node].get(token)
        return None if nxt is None else PrefixState(nxt, state.depth + 1)

    def valid_next_tokens(self, prefix: Sequence[str]) -> frozenset[str]:
        node = self.walk(prefix).node
        out = set(self._children[node])
        if self._terminal[node]:
            out.add(EOS)
        return frozenset(out)

    def is_complete(self, prefix: Sequence[str]) -> bool:
        return self._terminal[self.walk(prefix).node]

    def __contains__(self, form) -> bool:
        try:
            return self.is_complete(form)
        except InvalidPrefixError:
            return False

    def forms(self) -> list[list[str]]:
        """All stored forms in lexicographic order."""
        out: list[list[str]] = []

        def visit(node: int, path: list[str]) -> None:
            if self._terminal[node]:
                out.append(list(path))
            for tok in sorted(self._children[node]):
                path.append(tok)
                visit(self._children[node][tok], path)
                path.pop()

        visit(0, [])
        return sorted(out)

    def dumps(self) -> str:
        return "".join(" ".join(f) + "\n" for f in self.forms())

    @classmethod
    def loads(cls, text: str) -> "TokenTrie":
        return cls(line.split() for line in text.splitlines() if line.strip())


def build_trie(forms: Iterable[Sequence[str]]) -> TokenTrie:
    return TokenTrie(forms)


def valid_next_tokens(trie: TokenTrie, prefix: Sequence[str]) -> frozenset[str]:
    return trie.valid_next_tokens(prefix)


def is_complete(trie: TokenTrie, prefix: Sequence[str]) -> bool:
    return trie.is_complete(prefix)


def trie_from_grammar(g: Grammar, max_strings: int = 100_000, max_depth: int = 32,
                      allow_truncation: bool = False) -> TokenTrie:
    """Enumerate ``g`` and build its trie; truncated enumerations fail unless allowed."""
    result = enumerate_forms(g, max_strings=max_strings, max_depth=max_depth)
    if result.truncated and not allow_truncation:
        raise TruncatedEnumerationError(
            f"enumeration of {g.start} was truncated at {len(result)} forms; "
            "constrained decoding would be unsound (pass allow_truncation to override)")
    return TokenTrie(result.forms)
