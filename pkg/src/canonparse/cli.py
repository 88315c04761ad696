"""``canonparse`` command line.

Exit status: 0 on success, 1 on data errors (message as JSON on stderr),
2 on usage errors. All randomness comes from ``--seed`` style flags, which
default to DEFAULT_SEED.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys

from . import __version__
from .canonicalizer import load_scheme
from .datagen import (Example, MaskConfig, NoiseConfig, build_joint_dataset, derive_seed, mask_spans,
                      noise_canonical, read_jsonl, write_jsonl)
from .decoding import DecodeConfig, decode_batch
from .grammar import enumerate_forms, load_grammar, recognize, sample, tokenize
from .metrics import evaluate
from .recognizer import trie_from_grammar
from .scorer import NGramOverlapScorer, train
from .selftrain import SelfTrainConfig, self_train

DEFAULT_SEED = 0
SUBCOMMANDS = ("sample", "enumerate", "mask", "noise", "joint", "train", "decode", "selftrain", "eval")


class DataError(Exception):
    pass


@contextlib.contextmanager
def _out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            yield f


def _read_field(path, key: str) -> list[list[str]]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: invalid JSON ({e.msg})") from None
            if not isinstance(obj, dict) or not isinstance(obj.get(key), str):
                raise DataError(f"{path}:{lineno}: missing string field {key!r}")
            rows.append(tokenize(obj[key]))
    return rows


def _read_examples(path) -> list[Example]:
    with open(path, encoding="utf-8") as f:
        try:
            return read_jsonl(f)
        except ValueError as e:
            raise DataError(f"{path}: {e}") from None


def _sampled(g, n, seed, max_depth):
    return [sample(g, derive_seed(seed, i), max_depth) for i in range(n)]


def _noise_cfg(args, g) -> NoiseConfig:
    weights = None
    if args.op_weights:
        try:
            weights = {k: float(v) for k, v in (kv.split("=") for kv in args.op_weights.split(","))}
        except ValueError:
            raise DataError(f"bad --op-weights {args.op_weights!r}; expected op=w,op=w") from None
    kw = {"p_op": args.p_op, "seed": args.noise_seed}
    if weights is not None:
        kw["op_weights"] = weights
    return NoiseConfig.for_grammar(g, **kw)


# -- subcommands -----------------------------------------------------------------

def cmd_sample(args):
    g = load_grammar(args.grammar)
    with _out(args.output) as f:
        for form in _sampled(g, args.n, args.seed, args.max_depth):
            f.write(" ".join(form) + "\n")


def cmd_enumerate(args):
    g = load_grammar(args.grammar)
    res = enumerate_forms(g, max_strings=args.max_strings, max_depth=args.max_depth)
    if res.truncated:
        print(json.dumps({"warning": "truncated", "count": len(res)}), file=sys.stderr)
    with _out(args.output) as f:
        for form in res.forms:
            f.write(" ".join(form) + "\n")


def cmd_mask(args):
    utts = _read_field(args.input, args.field)
    with _out(args.output) as f:
        write_jsonl((mask_spans(u, MaskConfig(args.mask_ratio, args.span_lambda, derive_seed(args.seed, i)))
                     for i, u in enumerate(utts)), f)


def cmd_noise(args):
    g = load_grammar(args.grammar)
    if args.input:
        forms = _read_field(args.input, "target")
    else:
        forms = _sampled(g, args.sample, args.sample_seed, args.max_depth)
    base = _noise_cfg(args, g)
    with _out(args.output) as f:
        write_jsonl((noise_canonical(form, g.content_mask(form),
                                     NoiseConfig(base.p_op, base.op_weights, derive_seed(base.seed, i),
                                                 base.vocabulary))
                     for i, form in enumerate(forms)), f)


def cmd_joint(args):
    g = load_grammar(args.grammar)
    labeled = _read_examples(args.labeled)
    utts = _read_field(args.utterances, "source") if args.utterances else []
    if args.targets:
        targets = _read_field(args.targets, "target")
    else:
        targets = _sampled(g, args.sample, args.sample_seed, args.max_depth)
    data = build_joint_dataset(labeled, utts, targets, MaskConfig(args.mask_ratio, args.span_lambda, args.mask_seed),
                               _noise_cfg(args, g), args.shuffle_seed, content_tokens=g.content)
    with _out(args.output) as f:
        write_jsonl(data, f)


def cmd_train(args):
    data = _read_examples(args.data)
    scorer = train([(ex.source, ex.target) for ex in data], args.order, args.alpha, args.bonus)
    with _out(args.output) as f:
        f.write(scorer.dumps())


def _load_model(path) -> NGramOverlapScorer:
    with open(path, encoding="utf-8") as f:
        return NGramOverlapScorer.loads(f.read())


def cmd_decode(args):
    scorer = _load_model(args.model)
    g = load_grammar(args.grammar) if args.grammar else None
    if not args.unconstrained and g is None:
        raise DataError("constrained decoding needs --grammar (or pass --unconstrained)")
    trie = trie_from_grammar(g, args.max_strings, args.max_depth) if g is not None else None
    cfg = DecodeConfig(args.beam_size, args.max_len, not args.unconstrained, args.length_normalize)
    sources = _read_field(args.input, "source")
    with _out(args.output) as f:
        for src, res in zip(sources, decode_batch(scorer, trie, sources, cfg)):
            row = {"source": " ".join(src),
                   "prediction": None if res.tokens is None else " ".join(res.tokens),
                   "score": res.log_score}
            if g is not None:
                row["valid"] = res.tokens is not None and recognize(g, res.tokens)
            if res.error:
                row["error"] = res.error
            f.write(json.dumps(row) + "\n")


def cmd_selftrain(args):
    scheme = load_scheme(args.scheme)
    trie = trie_from_grammar(scheme.grammar, args.max_strings, args.max_depth)
    golden = _read_examples(args.golden)
    unlabeled = _read_field(args.unlabeled, "source") if args.unlabeled else []
    heldout = _read_examples(args.heldout) if args.heldout else []
    cfg = SelfTrainConfig(
        rounds=args.rounds,
        include_paraphrases=bool(args.paraphrases),
        paraphrase_file=args.paraphrases,
        mask_cfg=MaskConfig(args.mask_ratio, args.span_lambda, args.mask_seed),
        noise_cfg=_noise_cfg(args, scheme.grammar),
        decode_cfg=DecodeConfig(args.beam_size, args.max_len, True),
        n_sampled_targets=args.sample,
        sample_seed=args.sample_seed,
        sample_max_depth=args.max_depth,
        shuffle_seed=args.shuffle_seed,
        order=args.order, smoothing_alpha=args.alpha, overlap_bonus=args.bonus,
    )
    scorer, reports = self_train(golden, unlabeled, cfg, heldout, scheme=scheme, trie=trie)
    with _out(args.output) as f:
        json.dump({"rounds": [r.to_dict(timings=args.timings) for r in reports]}, f, indent=2, sort_keys=True)
        f.write("\n")
    if args.silver_out:
        with open(args.silver_out, "w", encoding="utf-8", newline="\n") as f:
            write_jsonl(reports[-1].silver, f)
    if args.model_out:
        with open(args.model_out, "w", encoding="utf-8") as f:
            f.write(scorer.dumps())
    if args.plot:
        from .plotting import plot_selftrain
        plot_selftrain(reports, args.plot)


def cmd_eval(args):
    scheme = load_scheme(args.scheme)
    preds = []
    with open(args.predictions, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                p = json.loads(line).get(args.field)
            except (json.JSONDecodeError, AttributeError):
                raise DataError(f"{args.predictions}:{lineno}: expected a JSON object") from None
            preds.append(None if p is None else tokenize(p))
    golds = _read_field(args.gold, "target")
    if len(preds) != len(golds):
        raise DataError(f"{len(preds)} predictions for {len(golds)} gold forms")
    result = evaluate(scheme, preds, golds)
    with _out(args.output) as f:
        json.dump(result.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    if args.tsv:
        with open(args.tsv, "w", encoding="utf-8", newline="\n") as f:
            f.write("index\tprediction\tgold\tem\tunordered_em\tvalid_form\n")
            pe = result.per_example
            for i, (p, g) in enumerate(zip(preds, golds)):
                f.write(f"{i}\t{' '.join(p) if p is not None else ''}\t{' '.join(g)}\t"
                        f"{int(pe['em'][i])}\t{int(pe['unordered_em'][i])}\t{int(pe['valid_form'][i])}\n")
    if args.plot:
        from .plotting import plot_eval
        plot_eval(result, args.plot)


# -- parser -----------------------------------------------------------------------

def _mask_flags(p):
    p.add_argument("--mask-ratio", type=float, default=0.25)
    p.add_argument("--span-lambda", type=float, default=3.0)


def _noise_flags(p):
    p.add_argument("--p-op", type=float, default=0.35)
    p.add_argument("--op-weights", help="e.g. delete=1,replace=1,swap=1,insert=1,duplicate=1")
    p.add_argument("--noise-seed", type=int, default=DEFAULT_SEED)


def _enum_flags(p):
    p.add_argument("--max-strings", type=int, default=100_000)
    p.add_argument("--max-depth", type=int, default=32)


def _scorer_flags(p):
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--alpha", type=float, default=0.1, help="add-alpha smoothing")
    p.add_argument("--bonus", type=float, default=1.0, help="source-overlap log-score bonus")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="canonparse", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")

    p = sub.add_parser("sample", help="sample canonical forms from a grammar")
    p.add_argument("--grammar", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--max-depth", type=int, default=16)
    p.add_argument("--output")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("enumerate", help="list every form of a grammar, sorted")
    p.add_argument("--grammar", required=True)
    _enum_flags(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("mask", help="build mask-prediction examples from utterances")
    p.add_argument("--input", required=True, help="JSONL with a source field")
    p.add_argument("--field", default="source")
    _mask_flags(p)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--output")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("noise", help="build denoising examples from canonical forms")
    p.add_argument("--grammar", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="JSONL with a target field")
    src.add_argument("--sample", type=int, help="sample this many forms from the grammar")
    p.add_argument("--sample-seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--max-depth", type=int, default=16)
    _noise_flags(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("joint", help="merge labeled, mask and denoise data into one shuffled set")
    p.add_argument("--grammar", required=True)
    p.add_argument("--labeled", required=True)
    p.add_argument("--utterances", help="JSONL with a source field")
    p.add_argument("--targets", help="JSONL with a target field; default: sample from the grammar")
    p.add_argument("--sample", type=int, default=10_000)
    p.add_argument("--sample-seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--max-depth", type=int, default=16)
    _mask_flags(p)
    p.add_argument("--mask-seed", type=int, default=DEFAULT_SEED)
    _noise_flags(p)
    p.add_argument("--shuffle-seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--output")
    p.set_defaults(func=cmd_joint)

    p = sub.add_parser("train", help="fit the n-gram overlap scorer")
    p.add_argument("--data", required=True, help="example JSONL")
    _scorer_flags(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="beam-search decode utterances")
    p.add_argument("--model", required=True)
    p.add_argument("--grammar")
    p.add_argument("--input", required=True, help="JSONL with a source field")
    p.add_argument("--beam-size", type=int, default=4)
    p.add_argument("--max-len", type=int)
    p.add_argument("--unconstrained", action="store_true")
    p.add_argument("--length-normalize", action="store_true")
    _enum_flags(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("selftrain", help="run self-training rounds and emit a JSON report")
    p.add_argument("--scheme", required=True)
    p.add_argument("--golden", required=True)
    p.add_argument("--unlabeled")
    p.add_argument("--heldout")
    p.add_argument("--paraphrases", help="JSONL of {original, paraphrase}")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--beam-size", type=int, default=4)
    p.add_argument("--max-len", type=int)
    p.add_argument("--sample", type=int, default=1000, help="sampled targets for denoising")
    p.add_argument("--sample-seed", type=int, default=DEFAULT_SEED)
    _mask_flags(p)
    p.add_argument("--mask-seed", type=int, default=DEFAULT_SEED)
    _noise_flags(p)
    p.add_argument("--shuffle-seed", type=int, default=DEFAULT_SEED)
    _scorer_flags(p)
    _enum_flags(p)
    p.add_argument("--timings", action="store_true", help="include wall-clock durations (breaks byte-identity)")
    p.add_argument("--model-out")
    p.add_argument("--silver-out", help="silver examples of the last round (JSONL)")
    p.add_argument("--plot", help="write a PNG summary of the rounds")
    p.add_argument("--output")
    p.set_defaults(func=cmd_selftrain)

    p = sub.add_parser("eval", help="EM, unordered EM and valid-form rate")
    p.add_argument("--scheme", required=True)
    p.add_argument("--predictions", required=True, help="JSONL with a prediction field")
    p.add_argument("--field", default="prediction")
    p.add_argument("--gold", required=True, help="JSONL with a target field")
    p.add_argument("--tsv", help="per-example TSV")
    p.add_argument("--plot", help="write a PNG bar chart")
    p.add_argument("--output")
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (DataError, ValueError, RuntimeError, OSError, KeyError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e), "command": args.command}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
