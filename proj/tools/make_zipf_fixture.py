# Copyright (c) infernode contributors.
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
"""Regenerates fixtures/zipf_lookup.json.

Table popularity follows a Zipf law over a shuffled rank order, so the
heaviest tables are not adjacent in id order.
"""
import argparse
import json

import numpy as np


def build(seed: int, tables: int, alpha: float, peak: float) -> dict:
    rng = np.random.default_rng(seed)
    ranks = rng.permutation(tables) + 1
    rows = rng.integers(100_000, 4_000_000, size=tables)
    entries = []
    for t in range(tables):
        avg = peak * float(ranks[t]) ** -alpha
        entries.append({
            "rows": int(rows[t]),
            "avg_lookups": round(max(avg, 1.0), 3),
        })
    return {
        "name": "zipf_lookup",
        "zipf_alpha": alpha,
        "seed": seed,
        "cards": 6,
        "batch": 64,
        "embedding_dim": 64,
        "table_dtype": "int4rw",
        "max_lookups": 200,
        "tables": entries,
    }


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--tables", type=int, default=36)
    ap.add_argument("--alpha", type=float, default=1.2)
    ap.add_argument("--peak", type=float, default=150.0)
    ap.add_argument("--out", default="fixtures/zipf_lookup.json")
    args = ap.parse_args()
    doc = build(args.seed, args.tables, args.alpha, args.peak)
    with open(args.out, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
