#!/usr/bin/env python3
# Copyright 2026 The rtlm Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Generates the bundled synthetic corpora and N-best lists.

Each utterance reads

    <key> <filler> <filler> <answer> <filler> ...

where the answer is fixed by the key of the previous utterance in the same
document. A model that sees across utterance boundaries can predict the
answer; one reset at every utterance cannot.
"""

import argparse
import json
import os
import random

N_KEYS = 10
N_FILLERS = 30
UTT_LEN = 8
ANSWER_POS = 3


def keys():
    return [f"k{i}" for i in range(N_KEYS)]


def answers():
    return [f"a{i}" for i in range(N_KEYS)]


def fillers():
    return [f"f{i}" for i in range(N_FILLERS)]


def answer_map():
    perm = list(range(N_KEYS))
    random.Random(7).shuffle(perm)
    return {f"k{i}": f"a{perm[i]}" for i in range(N_KEYS)}


def make_document(rng, n_utts, amap):
    utts = []
    prev_key = None
    for _ in range(n_utts):
        key = rng.choice(keys())
        words = [key]
        while len(words) < UTT_LEN:
            if len(words) == ANSWER_POS:
                words.append(amap[prev_key] if prev_key else rng.choice(answers()))
            else:
                words.append(rng.choice(fillers()))
        utts.append(words)
        prev_key = key
    return utts


def write_corpus(path, docs):
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n\n".join("\n".join(" ".join(u) for u in d) for d in docs))
        f.write("\n")


def corrupt(rng, words):
    out = list(words)
    kind = rng.randrange(4)
    pos = rng.randrange(len(out))
    if kind == 0:
        out[ANSWER_POS] = rng.choice([a for a in answers() if a != out[ANSWER_POS]])
    elif kind == 1:
        out[pos] = rng.choice(fillers())
    elif kind == 2:
        del out[pos]
    else:
        out.insert(pos, rng.choice(fillers()))
    return out


def make_nbest(rng, docs, n_hyps):
    lines = []
    for c, doc in enumerate(docs):
        for i, ref in enumerate(doc):
            hyps = [ref]
            while len(hyps) < n_hyps:
                cand = corrupt(rng, ref)
                if cand not in hyps:
                    hyps.append(cand)
            rng.shuffle(hyps)
            entries = []
            for h in hyps:
                errors = sum(1 for a, b in zip(h, ref) if a != b) + abs(len(h) - len(ref))
                am = -10.0 * len(h) - 2.0 * errors + rng.uniform(-4.0, 4.0)
                lm = -2.5 * len(h) + rng.uniform(-3.0, 3.0)
                entries.append({"words": h, "am": round(am, 4), "lm": round(lm, 4)})
            lines.append(json.dumps({"conv": f"conv{c:02d}", "utt": f"conv{c:02d}_u{i}",
                                     "idx": i, "ref": ref, "hyps": entries}))
    return lines


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data")
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    amap = answer_map()
    syn = os.path.join(args.out, "synthetic")
    toy = os.path.join(args.out, "toy")
    os.makedirs(syn, exist_ok=True)
    os.makedirs(toy, exist_ok=True)

    write_corpus(os.path.join(syn, "train.txt"), [make_document(rng, 10, amap) for _ in range(120)])
    write_corpus(os.path.join(syn, "valid.txt"), [make_document(rng, 10, amap) for _ in range(20)])
    write_corpus(os.path.join(syn, "test.txt"), [make_document(rng, 10, amap) for _ in range(20)])

    nbest_docs = [make_document(rng, 5, amap) for _ in range(20)]
    with open(os.path.join(syn, "nbest.jsonl"), "w", encoding="utf-8") as f:
        f.write("\n".join(make_nbest(rng, nbest_docs, 6)) + "\n")

    write_corpus(os.path.join(toy, "train.txt"), [make_document(rng, 6, amap) for _ in range(12)])
    write_corpus(os.path.join(toy, "valid.txt"), [make_document(rng, 6, amap) for _ in range(3)])
    with open(os.path.join(toy, "nbest.jsonl"), "w", encoding="utf-8") as f:
        f.write("\n".join(make_nbest(rng, [make_document(rng, 3, amap) for _ in range(3)], 4)) + "\n")


if __name__ == "__main__":
    main()
