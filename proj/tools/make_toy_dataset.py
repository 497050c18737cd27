#!/usr/bin/env python3
# Copyright 2026 The kgcascade Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes the bundled toy dataset (data/toy by default).

Entities 0..44 are cells of a 9 x 5 grid, cell (x, y) = 5 * x + y.
Entities 45..49 are row hubs, one per y. Relations:

  0 east        (x, y) -> (x + 1, y)
  1 north       (x, y) -> (x, y + 1)
  2 west        (x, y) -> (x - 1, y)
  3 south       (x, y) -> (x, y - 1)
  4 east2       (x, y) -> (x + 2, y)      east then east
  5 northeast   (x, y) -> (x + 1, y + 1)  east then north
  6 row_of      (x, y) -> hub y
  7 member_at   hub y  -> (0, y)

A seeded subsample keeps about 200 triples. Features are a smooth
position code plus noise; relation features are the mean tail feature.
"""

import argparse
import json
import pathlib
import struct

import numpy as np

W, H = 9, 5
HUB0 = W * H
NUM_ENTITIES = HUB0 + H
RELATIONS = ["east", "north", "west", "south", "east2", "northeast", "row_of", "member_at"]
FEATURE_DIM = 16


def cell(x, y):
    return 5 * x + y


def all_triples():
    out = []
    for x in range(W):
        for y in range(H):
            c = cell(x, y)
            if x + 1 < W:
                out.append((c, 0, cell(x + 1, y)))
                out.append((cell(x + 1, y), 2, c))
            if y + 1 < H:
                out.append((c, 1, cell(x, y + 1)))
                out.append((cell(x, y + 1), 3, c))
            if x + 2 < W:
                out.append((c, 4, cell(x + 2, y)))
            if x + 1 < W and y + 1 < H:
                out.append((c, 5, cell(x + 1, y + 1)))
            out.append((c, 6, HUB0 + y))
    for y in range(H):
        out.append((HUB0 + y, 7, cell(0, y)))
    return sorted(out)


def features(rng):
    f = np.zeros((NUM_ENTITIES, FEATURE_DIM), dtype=np.float64)
    freqs = np.arange(1, FEATURE_DIM // 4 + 1)
    for e in range(NUM_ENTITIES):
        if e < HUB0:
            x, y = divmod(e, 5)
            hub = 0.0
        else:
            x, y, hub = W / 2.0, e - HUB0, 1.0
        code = np.concatenate([
            np.sin(freqs * x / W * np.pi), np.cos(freqs * x / W * np.pi),
            np.sin(freqs * y / H * np.pi), np.cos(freqs * y / H * np.pi)])
        f[e] = code + hub
    f += 0.05 * rng.standard_normal(f.shape)
    return f.astype(np.float32)


def write_fmat(path, m):
    with open(path, "wb") as out:
        out.write(b"FMAT")
        out.write(struct.pack("<QQ", m.shape[0], m.shape[1]))
        out.write(np.ascontiguousarray(m, dtype="<f4").tobytes())


def config():
    def model(tag, kind, dim, gamma, lr, extra=None):
        m = {
            "tag": tag, "kind": kind, "dim": dim, "gamma": gamma,
            "train": {
                "batch_size": 64, "negative_sample_size": 32, "learning_rate": lr,
                "lr_decay_step": 1500, "lr_decay_factor": 0.5, "regularization": 0.0,
                "max_steps": 2000, "adversarial_temperature": 1.0,
            },
        }
        if kind == "note":
            m["group_size"] = 4
        if extra:
            m.update(extra)
        return m

    return {
        "dataset": {
            "triples": "triples.txt",
            "entity_vocab": "entities.txt",
            "relation_vocab": "relations.txt",
            "entity_features": "entity_features.fmat",
            "relation_features": "relation_features.fmat",
        },
        "seed": 7,
        "retrieval": {
            "cap": 20,
            "pie": {"upsample_weights": "relation_weights.txt"},
            "semantic": {"num_subspaces": 4, "centroids": 16, "iterations": 10, "k": 20},
        },
        "ensemble": {"n": 20, "dev_ratio": 0.15},
        "kge": {"models": [
            model("TransE-0", "transe", 32, 1.0, 2.0),
            model("ComplEx-0", "complex", 32, 6.0, 2.0),
            model("NOTE-0", "note", 32, 2.0, 1.0),
        ]},
        "rerank": {"grid_step": 0.1, "normalization": "rank"},
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "toy"))
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--keep", type=float, default=0.75)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    triples = all_triples()
    keep = rng.random(len(triples)) < args.keep
    kept = [t for t, k in zip(triples, keep) if k]
    with open(out / "triples.txt", "w") as f:
        f.write("# toy grid graph: head relation tail\n")
        for h, r, t in kept:
            f.write(f"{h} {r} {t}\n")
    with open(out / "entities.txt", "w") as f:
        for e in range(NUM_ENTITIES):
            f.write(f"cell_{e // 5}_{e % 5}\n" if e < HUB0 else f"row_{e - HUB0}\n")
    with open(out / "relations.txt", "w") as f:
        f.write("".join(r + "\n" for r in RELATIONS))
    with open(out / "relation_weights.txt", "w") as f:
        f.write("# relation_id weight\n6 0.5\n7 2\n")

    ef = features(rng)
    rf = np.zeros((len(RELATIONS), FEATURE_DIM), dtype=np.float32)
    for r in range(len(RELATIONS)):
        tails = [t for _, rr, t in kept if rr == r]
        rf[r] = ef[tails].mean(axis=0)
    write_fmat(out / "entity_features.fmat", ef)
    write_fmat(out / "relation_features.fmat", rf)
    with open(out / "config.json", "w") as f:
        json.dump(config(), f, indent=2)
        f.write("\n")
    print(f"wrote {len(kept)} triples to {out}")


if __name__ == "__main__":
    main()
