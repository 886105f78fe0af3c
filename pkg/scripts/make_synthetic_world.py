"""Build the synthetic cluster world and write its artifacts to disk.

Produces a catalog plus train / in-scope test / out-of-scope test datasets
in the JSONL layout the CLI consumes, so a full train-fit-bench cycle can
run against files instead of in-process fixtures:

    python scripts/make_synthetic_world.py --outdir runs/world
    intentgate train --catalog runs/world/catalog.json \
        --input runs/world/train.jsonl --output runs/world/model.json
"""

from __future__ import annotations

import argparse
from pathlib import Path

from intentgate import synth
from intentgate.domain import save_catalog, save_dataset


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--outdir", required=True, help="directory for the artifacts")
    parser.add_argument("--seed", type=int, default=synth.DEFAULT_SEED)
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--train-per-intent", type=int, default=100)
    parser.add_argument("--eval-size", type=int, default=100)
    parser.add_argument("--eval-oos-fraction", type=float, default=0.2)
    args = parser.parse_args()

    world = synth.make_world(
        seed=args.seed, dim=args.dim, train_per_intent=args.train_per_intent
    )
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    save_catalog(world.catalog, outdir / "catalog.json")
    save_dataset(world.train, outdir / "train.jsonl")
    save_dataset(world.ins_test, outdir / "ins_test.jsonl")
    save_dataset(world.oos_test, outdir / "oos_test.jsonl")
    save_dataset(
        world.eval_mix(size=args.eval_size, oos_fraction=args.eval_oos_fraction),
        outdir / "eval.jsonl",
    )

    print(
        f"world seed={args.seed} dim={world.dim}: "
        f"{len(world.train)} train, {len(world.ins_test)} in-scope test, "
        f"{len(world.oos_test)} out-of-scope -> {outdir}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
