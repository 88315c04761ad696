import json

import pytest

from canonparse import DATA_DIR
from canonparse.canonicalizer import load_scheme
from canonparse.datagen import read_jsonl
from canonparse.grammar import load_grammar, tokenize
from canonparse.recognizer import trie_from_grammar

from oracles import expand_all, read_rules

TOY_GRAMMAR = DATA_DIR / "toy_pizza.gr"
TOY_SCHEME = DATA_DIR / "toy_pizza.scheme"


@pytest.fixture(scope="session")
def toy():
    return load_grammar(TOY_GRAMMAR)


@pytest.fixture(scope="session")
def scheme():
    return load_scheme(TOY_SCHEME)


@pytest.fixture(scope="session")
def trie(toy):
    return trie_from_grammar(toy)


@pytest.fixture(scope="session")
def toy_forms_oracle():
    rules, start = read_rules(TOY_GRAMMAR.read_text())
    return sorted(expand_all(rules, start))


@pytest.fixture(scope="session")
def golden():
    with open(DATA_DIR / "toy_golden.jsonl") as f:
        return read_jsonl(f)


@pytest.fixture(scope="session")
def heldout():
    with open(DATA_DIR / "toy_heldout.jsonl") as f:
        return read_jsonl(f)


@pytest.fixture(scope="session")
def unlabeled():
    with open(DATA_DIR / "toy_unlabeled.jsonl") as f:
        return [tokenize(json.loads(line)["source"]) for line in f if line.strip()]


# -- acceptance summary: one PASS/FAIL line per criterion -------------------------

_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    _acceptance[number] = (title, call.excinfo is None)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, ok = _acceptance[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}")
