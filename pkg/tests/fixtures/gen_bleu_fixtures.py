"""One-off generator for bleu_fixtures.json.

Builds 60 deterministic sentence pairs (perturbed word sequences over a small
vocabulary) and records the oracle smoothing-4 sentence BLEU for each. Run
from the repo root:  python3 tests/fixtures/gen_bleu_fixtures.py
"""

import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
from oracles import oracle_bleu_smooth4  # noqa: E402

VOCAB = (
    "the a to of and in is for on with use code file function return "
    "value error test run list string method class object line print data"
).split()


def main() -> None:
    rng = random.Random(20240817)
    pairs = [("the cat sat on the mat", "the cat is on the mat")]
    for _ in range(59):
        ref_len = rng.randint(3, 14)
        ref = [rng.choice(VOCAB) for _ in range(ref_len)]
        cand = list(ref)
        for _ in range(rng.randint(0, max(1, ref_len // 2))):
            op = rng.choice(["sub", "del", "ins"])
            if op == "sub" and cand:
                cand[rng.randrange(len(cand))] = rng.choice(VOCAB)
            elif op == "del" and len(cand) > 2:
                cand.pop(rng.randrange(len(cand)))
            else:
                cand.insert(rng.randrange(len(cand) + 1), rng.choice(VOCAB))
        pairs.append((" ".join(cand), " ".join(ref)))
    out = [
        {
            "candidate": c,
            "reference": r,
            "bleu": oracle_bleu_smooth4(c.split(), r.split()),
        }
        for c, r in pairs
    ]
    path = Path(__file__).with_name("bleu_fixtures.json")
    path.write_text(json.dumps(out, indent=1), encoding="utf-8")
    print(f"wrote {len(out)} pairs to {path}")


if __name__ == "__main__":
    main()
