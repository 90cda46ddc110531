#!/usr/bin/env python3
"""Hitting-time benchmark on the subset-sum landscape.

Runs the engine to satisfaction for each problem size and seed, then prints
mean/min/max hitting generations and evaluation counts per size.

Example:
    python3 scripts/benchmark_subset_sum.py --sizes 16 32 64 --seeds 20
"""

import argparse
import statistics
import time

from neurogrow.adaptation import AdaptationConfig
from neurogrow.engine import Engine, EngineConfig, EstimationConfig
from neurogrow.fitness import SubsetSumEvaluator, SubsetSumProblem, bitfield_space
from neurogrow.speciation import SpeciationConfig
from neurogrow.variation import VariationConfig

BITS_PER_SLOT = 4


def run_one(z: int, seed: int, generation_limit: int) -> tuple[str, int, int]:
    assert z % BITS_PER_SLOT == 0, "size must be a multiple of 4"
    space = bitfield_space(z // BITS_PER_SLOT, BITS_PER_SLOT)
    config = EngineConfig(
        individual_init=20,
        tau_q=50,
        tau_k=generation_limit,
        seed=seed,
        variation=VariationConfig(),
        speciation=SpeciationConfig(),
        adaptation=AdaptationConfig(1, 1, 1, 1, 10),
        estimation=EstimationConfig(10, 250, z - 0.5, z - 0.5, 0.5),
    )
    engine = Engine(space, config, SubsetSumEvaluator(SubsetSumProblem.for_space(space)))
    result = engine.run()
    return result.status, engine.generation, engine.total_evaluations


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64])
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--generation-limit", type=int, default=5000)
    args = parser.parse_args()

    print(f"{'Z':>4} {'runs':>5} {'hit':>4} {'mean':>8} {'min':>6} {'max':>6} "
          f"{'evals':>9} {'secs':>6}")
    for z in args.sizes:
        gens, evals = [], []
        misses = 0
        t0 = time.monotonic()
        for seed in range(args.seeds):
            status, generation, n_evals = run_one(z, seed, args.generation_limit)
            if status == "satisfied":
                gens.append(generation)
                evals.append(n_evals)
            else:
                misses += 1
        elapsed = time.monotonic() - t0
        if gens:
            print(f"{z:>4} {args.seeds:>5} {len(gens):>4} "
                  f"{statistics.mean(gens):>8.1f} {min(gens):>6} {max(gens):>6} "
                  f"{statistics.mean(evals):>9.0f} {elapsed:>6.1f}")
        else:
            print(f"{z:>4} {args.seeds:>5} {0:>4} {'-':>8} {'-':>6} {'-':>6} "
                  f"{'-':>9} {elapsed:>6.1f}")
        if misses:
            print(f"     {misses} run(s) hit the generation limit")


if __name__ == "__main__":
    main()
