"""Regenerate the toy pizza self-training fixture under src/canonparse/data/.

Utterances come from hand-written surface templates over canonical forms of
the toy grammar, so every item has a known gold form.
"""
import argparse
import json
import random
from pathlib import Path

from canonparse.grammar import enumerate_forms, load_grammar
from canonparse.canonicalizer import load_scheme

DATA = Path(__file__).resolve().parents[1] / "src" / "canonparse" / "data"

NUM_WORDS = {"one": ["one", "a", "a single"], "two": ["two", "a couple of", "2"]}
OPENERS = ["could i have", "i'd like", "can i get", "let me get", "i'll go for", "please bring me"]
PIE = {"one": ["pizza", "pie"], "two": ["pizzas", "pies"]}
JOIN = ["and", "along with", "plus", ""]
AVOID = ["but avoid", "but please no", "hold the", "without any"]


def utterance(lf, rng):
    order = lf.children[0]
    num = size = None
    tops, neg = [], None
    for c in order.children:
        if c.label == "NUMBER":
            num = c.children[0].label
        elif c.label == "SIZE":
            size = c.children[0].label
        elif c.label == "TOPPING":
            tops.append(c.children[0].label)
        elif c.label == "NOT":
            neg = c.children[0].children[0].label
    words = [rng.choice(OPENERS), rng.choice(NUM_WORDS[num]), size, rng.choice(PIE[num]),
             rng.choice(["with", "topped with", "with some"]), tops[0]]
    if len(tops) > 1:
        words += [rng.choice(JOIN), tops[1]]
    if neg:
        words += [rng.choice(AVOID), neg]
    return " ".join(w for w in words if w)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=13)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    scheme = load_scheme(DATA / "toy_pizza.scheme")
    forms = enumerate_forms(load_grammar(DATA / "toy_pizza.gr")).forms
    vocab = {t for f in forms for t in f}

    while True:
        golden_forms = rng.sample(forms, 16)
        if {t for f in golden_forms for t in f} == vocab:
            break
    rest = [f for f in forms if f not in golden_forms]
    rng.shuffle(rest)
    unlabeled_forms, heldout_forms = rest[:60], rest[60:120]

    def rows(fs, with_target):
        for f in fs:
            row = {"source": utterance(scheme.to_lf(f), rng)}
            if with_target:
                row.update(target=" ".join(f), task="parse")
            yield row

    for name, fs, tgt in [("toy_golden.jsonl", golden_forms, True),
                          ("toy_unlabeled.jsonl", unlabeled_forms, False),
                          ("toy_heldout.jsonl", heldout_forms, True)]:
        with open(DATA / name, "w", encoding="utf-8") as f:
            for row in rows(fs, tgt):
                f.write(json.dumps(row) + "\n")
        print(f"written {DATA / name}")

    with open(DATA / "toy_paraphrases.jsonl", "w", encoding="utf-8") as f:
        for f_ in unlabeled_forms[:8]:
            lf = scheme.to_lf(f_)
            f.write(json.dumps({"original": utterance(lf, rng), "paraphrase": utterance(lf, rng)}) + "\n")
    print(f"written {DATA / 'toy_paraphrases.jsonl'}")


if __name__ == "__main__":
    main()
