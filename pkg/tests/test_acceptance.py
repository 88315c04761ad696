"""One test per acceptance criterion; the terminal summary prints a PASS/FAIL line for each."""
import json
import random
import statistics
import time
from collections import Counter

import pytest

from canonparse import DATA_DIR
from canonparse.canonicalizer import canonical_to_lf, lf_to_canonical, parse_lf
from canonparse.cli import main
from canonparse.datagen import (MaskConfig, NoiseConfig, build_joint_dataset, derive_seed, mask_plan, mask_spans,
                                masked_fraction, noise_canonical, read_jsonl)
from canonparse.decoding import DecodeConfig, decode_batch
from canonparse.grammar import enumerate_forms, parse_grammar, recognize, sample
from canonparse.metrics import evaluate, exact_match, unordered_em
from canonparse.recognizer import trie_from_grammar
from canonparse.scorer import UniformScorer, train

from oracles import expand_all, next_tokens, read_rules, sexpr_tree
from scorers import TableScorer

acceptance = pytest.mark.acceptance

# a randomized grammar whose oracle expansion has exactly 500 distinct strings
RANDOM_GRAMMAR_SEED = 207
WORDS = "alpha beta gamma delta eps zeta eta theta iota kappa lam mu".split()


def random_grammar(seed):
    rng = random.Random(seed)
    nts = ["A", "B", "C", "D"]
    lines = []
    for _ in range(rng.randint(1, 3)):
        lines.append("S -> " + " ".join(rng.sample(nts, rng.randint(2, 4))))
    for nt in nts:
        for _ in range(rng.randint(2, 6)):
            lines.append(f"{nt} -> " + " ".join(f'"{w}"' for w in rng.sample(WORDS, rng.randint(1, 2))))
    return "\n".join(lines) + "\n"


def content_subsequence(tokens, content):
    return [t for t in tokens if t in content]


@acceptance(1, "constraint soundness over 1000+ decodes")
def test_constraint_soundness(toy, trie):
    vocab = sorted(trie.vocabulary)
    scorers = [UniformScorer(vocab)]
    scorers += [TableScorer(vocab, seed) for seed in range(700)]
    scorers += [TableScorer(vocab, seed, spike=vocab[seed % len(vocab)]) for seed in range(300)]
    scorers += [TableScorer(vocab + ["zzz"], seed, spike="zzz") for seed in range(50)]
    t0 = time.perf_counter()
    decodes = violations = 0
    for i, s in enumerate(scorers):
        cfg = DecodeConfig(beam_size=1 + i % 5)
        for res in decode_batch(s, trie, [["i", "want"]], cfg):
            decodes += 1
            violations += not (res.ok and recognize(toy, res.tokens))
    elapsed = time.perf_counter() - t0
    assert decodes >= 1000
    assert violations == 0
    assert elapsed < 10.0


@acceptance(2, "valid_next_tokens equals the brute-force next-token oracle")
def test_valid_next_tokens_oracle(trie, toy_forms_oracle):
    text = random_grammar(RANDOM_GRAMMAR_SEED)
    rand_forms = sorted(expand_all(*read_rules(text)))
    assert len(rand_forms) == 500
    rand_trie = trie_from_grammar(parse_grammar(text))
    for t, forms in ((trie, toy_forms_oracle), (rand_trie, rand_forms)):
        checked = 0
        for f in forms:
            for k in range(len(f) + 1):
                assert t.valid_next_tokens(f[:k]) == next_tokens(forms, f[:k])
                checked += 1
        assert checked > len(forms)


@acceptance(3, "enumeration matches the recursive-expansion oracle count")
def test_enumeration_count(toy, toy_forms_oracle):
    enum = enumerate_forms(toy)
    assert not enum.truncated
    assert len(enum.forms) == len(toy_forms_oracle) == 192
    assert [tuple(f) for f in enum.forms] == toy_forms_oracle


@acceptance(4, "content tokens survive 10,000 noise samples")
def test_content_preservation(toy):
    violations = 0
    for i in range(10_000):
        form = sample(toy, derive_seed(4, i), 16)
        cfg = NoiseConfig.for_grammar(toy, p_op=0.35, seed=derive_seed(40, i))
        ex = noise_canonical(form, toy.content_mask(form), cfg)
        violations += content_subsequence(ex.source, toy.content) != content_subsequence(form, toy.content)
    assert violations == 0


@acceptance(5, "mask coverage bounds over 10,000 samples")
def test_mask_coverage(golden, unlabeled, heldout):
    utts = [list(ex.source) for ex in golden + heldout] + unlabeled
    fractions = []
    for i in range(10_000):
        utt = utts[i % len(utts)]
        cfg = MaskConfig(mask_ratio=0.25, seed=derive_seed(5, i))
        spans = mask_plan(utt, cfg)
        frac = masked_fraction(mask_spans(utt, cfg))
        max_span = max(length for _, length in spans)
        assert 0.25 <= frac <= 0.25 + max_span / len(utt) + 1e-12
        fractions.append(frac)
    assert 0.25 <= statistics.mean(fractions) <= 0.40


def _shuffle_tree(tree, rng):
    label, kids = tree
    kids = [_shuffle_tree(k, rng) for k in kids]
    rng.shuffle(kids)
    return (label, kids)


def _render(tree):
    label, kids = tree
    return label if not kids else "(" + " ".join([label] + [_render(k) for k in kids]) + ")"


def _topping_order(tree, negated=False, out=None):
    out = [] if out is None else out
    label, kids = tree
    if label == "TOPPING":
        out.append((negated, kids[0][0]))
    for k in kids:
        _topping_order(k, negated or label == "NOT", out)
    return sorted(out, key=lambda x: x[0])  # stable: surface lists positives before negatives


@acceptance(6, "canonical -> LF -> canonical round trip and sibling permutations")
def test_round_trip_and_permutations(scheme, toy_forms_oracle):
    for f in toy_forms_oracle:
        assert lf_to_canonical(scheme, canonical_to_lf(scheme, f)) == list(f)

    rng = random.Random(6)
    non_identity = surface_changed = 0
    for _ in range(1000):
        f = list(rng.choice(toy_forms_oracle))
        tree = sexpr_tree(str(canonical_to_lf(scheme, f)))
        perm = _shuffle_tree(tree, rng)
        realized = lf_to_canonical(scheme, parse_lf(_render(perm)))
        assert unordered_em(scheme, realized, f)
        non_identity += perm != tree
        # only a reordering among TOPPING siblings can reach the surface
        changed = _topping_order(perm) != _topping_order(tree)
        assert exact_match(realized, f) is (not changed)
        surface_changed += changed
    assert non_identity > 500 and surface_changed > 100


@acceptance(7, "em <= unordered_em on 1,000 random pairs with invalid predictions")
def test_metric_ordering(scheme, toy_forms_oracle):
    rng = random.Random(7)
    vocab = sorted({t for f in toy_forms_oracle for t in f}) + ["zzz"]
    preds, golds = [], []
    for i in range(1000):
        gold = list(rng.choice(toy_forms_oracle))
        kind = i % 4
        if kind == 0:
            pred = gold
        elif kind == 1:
            pred = list(rng.choice(toy_forms_oracle))
        elif kind == 2:
            pred = [rng.choice(vocab) for _ in range(rng.randint(0, 12))]
        else:
            pred = None
        preds.append(pred)
        golds.append(gold)
        res = evaluate(scheme, [pred], [gold])
        assert res.em <= res.unordered_em
    res = evaluate(scheme, preds, golds)
    assert res.em <= res.unordered_em
    assert res.valid_form_rate < 1.0


@acceptance(8, "constrained valid rate 1.0 >= unconstrained on 60 held-out utterances")
def test_constrained_beats_unconstrained(golden, heldout, scheme, trie):
    s = train([(ex.source, ex.target) for ex in golden])
    s.extend_vocabulary(trie.vocabulary)
    sources = [ex.source for ex in heldout]
    golds = [ex.target for ex in heldout]
    assert len(golden) == 16 and len(heldout) == 60
    rates = {}
    for constrained in (True, False):
        cfg = DecodeConfig(beam_size=4, constrained=constrained, max_len=trie.longest + 1)
        preds = [r.tokens for r in decode_batch(s, trie if constrained else None, sources, cfg)]
        rates[constrained] = evaluate(scheme, preds, golds).valid_form_rate
    assert rates[True] == 1.0
    assert rates[True] >= rates[False]


@acceptance(9, "self-training fixture run: fast, accounted, valid, byte-identical")
def test_selftrain_pipeline(tmp_path, toy):
    argv = ["selftrain", "--scheme", str(DATA_DIR / "toy_pizza.scheme"),
            "--golden", str(DATA_DIR / "toy_golden.jsonl"),
            "--unlabeled", str(DATA_DIR / "toy_unlabeled.jsonl"),
            "--heldout", str(DATA_DIR / "toy_heldout.jsonl")]
    outputs = []
    for run in range(2):
        report, silver = tmp_path / f"report{run}.json", tmp_path / f"silver{run}.jsonl"
        t0 = time.perf_counter()
        assert main(argv + ["--output", str(report), "--silver-out", str(silver)]) == 0
        assert time.perf_counter() - t0 < 60.0
        outputs.append((report.read_bytes(), silver.read_bytes()))
    assert outputs[0] == outputs[1]

    n_unlabeled = sum(1 for line in open(DATA_DIR / "toy_unlabeled.jsonl") if line.strip())
    rnd = json.loads(outputs[0][0])["rounds"][0]
    assert rnd["silver_count"] + rnd["failed_count"] == n_unlabeled
    with open(tmp_path / "silver0.jsonl") as f:
        silver = read_jsonl(f)
    assert len(silver) == rnd["silver_count"]
    assert all(recognize(toy, ex.target) for ex in silver)


@acceptance(10, "joint dataset: 16 + 100 + 10,000 -> 10,116, deterministic permutation")
def test_joint_accounting(toy, golden, unlabeled, heldout):
    utterances = unlabeled + [list(ex.source) for ex in heldout[:40]]
    targets = [sample(toy, derive_seed(10, i), 16) for i in range(10_000)]
    assert (len(golden), len(utterances)) == (16, 100)

    def build(seed):
        return build_joint_dataset(golden, utterances, targets, MaskConfig(seed=1),
                                   NoiseConfig.for_grammar(toy, seed=2), seed, content_tokens=toy.content)

    data = build(0)
    assert len(data) == 10_116
    assert data == build(0)
    by_task = {task: [ex for ex in data if ex.task == task] for task in ("parse", "mask", "denoise")}
    assert Counter(by_task["parse"]) == Counter(golden)
    assert Counter(ex.target for ex in by_task["mask"]) == Counter(tuple(u) for u in utterances)
    assert Counter(ex.target for ex in by_task["denoise"]) == Counter(tuple(t) for t in targets)
    other = build(1)
    assert other != data and Counter(other) == Counter(data)
