"""The generation loop: duplicate, vary, speciate, estimate, adapt, select.

The loop is sequential and fully deterministic given the seed: variation and
estimation draw from independent labeled RNG streams, and evaluation results
are merged in ascending genotype-id order.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import random
from dataclasses import dataclass, field

from . import adaptation as adapt
from .adaptation import AdaptationConfig, AdaptationState
from .fitness import COMPLETE, INCOMPLETE, Evaluator
from .genome import Genotype, minimal_genotype
from .space import SearchSpace
from .speciation import SpeciationConfig, Species, SpeciesSet, speciate
from .variation import VariationConfig, vary_round

CHECKPOINT_VERSION = 1

HISTORY_COLUMNS = (
    "generation", "species_id", "size", "best_incomplete", "best_complete",
    "T", "N", "evaluations_this_gen",
)


@dataclass
class EstimationConfig:
    t_i: int = 10
    t_c: int = 250
    tau_f: float = 0.65
    tau_fc: float = 0.75
    train_rate: float = 0.5

    def validate(self) -> None:
        if not self.t_i < self.t_c:
            raise ValueError("t_i must be smaller than t_c")
        if not 0 < self.train_rate <= 1:
            raise ValueError("train_rate must be in (0, 1]")


@dataclass
class EngineConfig:
    individual_init: int = 20
    tau_q: int = 50  # population ceiling
    tau_k: int = 100  # generation limit
    seed: int = 0
    variation: VariationConfig = field(default_factory=VariationConfig)
    speciation: SpeciationConfig = field(default_factory=SpeciationConfig)
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)

    def validate(self) -> None:
        if self.individual_init < 1 or self.individual_init > self.tau_q:
            raise ValueError("individual_init must be in [1, tau_q]")
        if self.tau_k < 1:
            raise ValueError("tau_k must be >= 1")
        self.variation.validate()
        self.speciation.validate()
        self.adaptation.validate()
        self.estimation.validate()


@dataclass
class FitnessRecord:
    incomplete: float | None = None
    complete: float | None = None
    evaluated_generation: int = 0
    failed: bool = False

    def selection_key(self) -> tuple[float, float]:
        score = self.complete if self.complete is not None else self.incomplete
        return (score if score is not None else -math.inf,)

    def to_json(self) -> dict:
        return {
            "incomplete": self.incomplete,
            "complete": self.complete,
            "evaluated_generation": self.evaluated_generation,
            "failed": self.failed,
        }

    @classmethod
    def from_json(cls, doc: dict | None) -> "FitnessRecord | None":
        if doc is None:
            return None
        return cls(**doc)


@dataclass
class RunResult:
    status: str  # "satisfied" | "generation_limit"
    best: Genotype | None
    best_fitness: FitnessRecord | None
    history: list[dict]

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "best": {
                "genotype": self.best.to_json() if self.best else None,
                "fitness": self.best_fitness.to_json() if self.best_fitness else None,
            },
            "history": self.history,
        }


class RestoreError(Exception):
    pass


def quota(species_sizes: list[int], tau_q: int) -> list[int]:
    """Per-species selection counts under the population ceiling.

    Below the ceiling the sizes pass through unchanged; above it each species
    gets its floored proportional share, the remainder goes to the largest
    fractional parts (ties to the lower index), and every non-empty species
    is guaranteed at least one slot, funded by the currently largest count.
    """
    total = sum(species_sizes)
    if total <= tau_q:
        return list(species_sizes)
    shares = [q * tau_q / total for q in species_sizes]
    counts = [int(s) for s in shares]
    remainder = tau_q - sum(counts)
    order = sorted(range(len(shares)), key=lambda i: (-(shares[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    for i, size in enumerate(species_sizes):
        if size >= 1 and counts[i] == 0:
            donors = [j for j in range(len(counts)) if counts[j] > 1]
            if not donors:
                break
            j = max(donors, key=lambda j: (counts[j], -j))
            counts[j] -= 1
            counts[i] = 1
    return counts


def _record_of(genotype: Genotype) -> FitnessRecord | None:
    return genotype.fitness


def _sort_members(members: list[Genotype]) -> list[Genotype]:
    def key(g: Genotype):
        rec = _record_of(g)
        score = -math.inf
        if rec is not None and not rec.failed:
            if rec.complete is not None:
                score = rec.complete
            elif rec.incomplete is not None:
                score = rec.incomplete
        return (-score, g.id)

    return sorted(members, key=key)


def select(
    species_set: SpeciesSet,
    quota_counts: list[int],
    population: dict[int, Genotype],
) -> list[Genotype]:
    """Keep each species' top members and re-anchor its representative."""
    new_population: list[Genotype] = []
    for species, count in zip(species_set.species, quota_counts):
        members = [population[i] for i in species.members]
        retained = _sort_members(members)[:count]
        species.members = [g.id for g in retained]
        if retained:
            species.representative = retained[0]
        new_population.extend(retained)
    species_set.species = [s for s in species_set.species if s.members]
    return new_population


def estimate(
    population: list[Genotype],
    species_set: SpeciesSet,
    evaluator: Evaluator,
    config: EstimationConfig,
    rng: random.Random,
    generation: int,
    seed: int,
    eval_log: list | None = None,
) -> tuple[float, int]:
    """Two-phase early-stop estimation over a speciated population.

    Returns (best incomplete fitness, number of evaluator calls).
    """
    by_id = {g.id: g for g in population}
    evaluations = 0

    def call(genotype: Genotype, phase: str, budget: int):
        nonlocal evaluations
        evaluations += 1
        if eval_log is not None:
            eval_log.append((generation, genotype.id, phase))
        return evaluator.evaluate(genotype, phase, budget, seed)

    # genotypes carrying an inherited record are never re-evaluated, so the
    # per-species sample is drawn from the members still lacking one
    sampled: list[int] = []
    for species in species_set.species:
        want = math.ceil(config.train_rate * len(species.members))
        fresh = [i for i in species.members if by_id[i].fitness is None]
        sampled.extend(rng.sample(fresh, want) if len(fresh) > want else fresh)

    for gid in sorted(sampled):
        genotype = by_id[gid]
        response = call(genotype, INCOMPLETE, config.t_i)
        if response.ok:
            genotype.fitness = FitnessRecord(
                incomplete=response.fitness, evaluated_generation=generation
            )
        else:
            genotype.fitness = FitnessRecord(
                evaluated_generation=generation, failed=True
            )

    # promotion: anything whose short-budget score clears tau_f gets the full budget
    for genotype in sorted(population, key=lambda g: g.id):
        rec = genotype.fitness
        if rec is None or rec.failed or rec.incomplete is None:
            continue
        if rec.incomplete > config.tau_f and rec.complete is None:
            response = call(genotype, COMPLETE, config.t_c)
            if response.ok:
                rec.complete = response.fitness
            else:
                rec.failed = True

    best = -math.inf
    for genotype in population:
        rec = genotype.fitness
        if rec is not None and not rec.failed and rec.incomplete is not None:
            best = max(best, rec.incomplete)
    return best, evaluations


def _rng_state_to_json(state) -> list:
    return json.loads(json.dumps(state))


def _rng_state_from_json(doc) -> tuple:
    def fix(x):
        if isinstance(x, list):
            return tuple(fix(v) for v in x)
        return x

    return fix(doc)


def _genotype_state(g: Genotype) -> dict:
    return {
        **g.to_json(),
        "birth_generation": g.birth_generation,
        "next_key": g.next_key,
        "fitness": g.fitness.to_json() if g.fitness else None,
    }


def _genotype_from_state(doc: dict) -> Genotype:
    g = Genotype.from_json(doc)
    g.birth_generation = doc.get("birth_generation", 0)
    g.next_key = doc.get("next_key", g.next_key)
    g.fitness = FitnessRecord.from_json(doc.get("fitness"))
    return g


def config_digest(config: EngineConfig) -> str:
    """Compatibility fingerprint of a configuration.

    The generation limit is excluded so a checkpointed run can be resumed
    with a longer budget; everything else must match exactly.
    """
    normalized = dataclasses.replace(config, tau_k=0)
    return hashlib.sha256(repr(normalized).encode()).hexdigest()[:16]


class Engine:
    """Drives one evolution run; checkpointable between generations."""

    def __init__(self, space: SearchSpace, config: EngineConfig, evaluator: Evaluator):
        config.validate()
        self.space = space
        self.config = config
        self.evaluator = evaluator

        self.generation = 0
        self.next_genotype_id = 1
        self.population = [
            self._fresh(minimal_genotype(space, 0)) for _ in range(config.individual_init)
        ]
        self.species_set = SpeciesSet()
        self.adaptation_state = AdaptationState.initial(config.adaptation)
        self.rng_variation = random.Random(f"{config.seed}/variation")
        self.rng_estimate = random.Random(f"{config.seed}/estimate")
        self.history: list[dict] = []
        self.best: Genotype | None = None
        self.satisfied: Genotype | None = None
        self.total_evaluations = 0
        self.eval_log: list = []

    def _fresh(self, genotype: Genotype) -> Genotype:
        genotype.id = self.next_genotype_id
        self.next_genotype_id += 1
        return genotype

    def _allocate_id(self) -> int:
        gid = self.next_genotype_id
        self.next_genotype_id += 1
        return gid

    def step(self) -> bool:
        """Run one generation; returns True when the run is satisfied."""
        self.generation += 1
        k = self.generation
        t, n = self.adaptation_state.t, self.adaptation_state.n

        offspring: list[Genotype] = []
        for parent in self.population:
            for _ in range(n):
                child = parent.clone(self._allocate_id())
                child.birth_generation = k
                child.fitness = None  # variation invalidates the inherited score
                offspring.append(child)

        ids = iter(self._allocate_id, None)
        for _ in range(t):
            offspring = vary_round(
                offspring, self.space, self.config.variation, self.rng_variation, ids
            )

        combined = self.population + offspring
        self.species_set = speciate(combined, self.species_set, self.config.speciation)

        best_f, evaluations = estimate(
            combined,
            self.species_set,
            self.evaluator,
            self.config.estimation,
            self.rng_estimate,
            k,
            self.config.seed,
            self.eval_log,
        )
        self.total_evaluations += evaluations

        by_id = {g.id: g for g in combined}
        self._update_best(combined)
        self._append_history(k, by_id, t, n, evaluations)

        for genotype in sorted(combined, key=lambda g: g.id):
            rec = genotype.fitness
            if (
                rec is not None
                and not rec.failed
                and rec.complete is not None
                and rec.complete > self.config.estimation.tau_fc
            ):
                self.satisfied = genotype
                self.population = combined
                return True

        self.adaptation_state = adapt.step(
            self.adaptation_state, best_f, self.config.adaptation
        )

        counts = quota([len(s.members) for s in self.species_set.species], self.config.tau_q)
        self.population = select(self.species_set, counts, by_id)
        self._apply_elitism(by_id)
        return False

    def _update_best(self, combined: list[Genotype]) -> None:
        def score(g: Genotype) -> float:
            rec = g.fitness
            if rec is None or rec.failed or rec.incomplete is None:
                return -math.inf
            return rec.incomplete

        candidates = [self.best] if self.best is not None else []
        candidates += combined
        self.best = max(candidates, key=lambda g: (score(g), -g.id))

    def _apply_elitism(self, by_id: dict[int, Genotype]) -> None:
        """The globally best genotype of this generation always survives."""
        if self.best is None or self.best.id not in by_id:
            return
        if any(g.id == self.best.id for g in self.population):
            return
        home = None
        for species in self.species_set.species:
            if self.best.id in species.members or species.representative.id == self.best.id:
                home = species
        if self.population and len(self.population) >= self.config.tau_q:
            victim = _sort_members(self.population)[-1]
            self.population = [g for g in self.population if g.id != victim.id]
            for species in self.species_set.species:
                if victim.id in species.members:
                    species.members.remove(victim.id)
        self.population.append(self.best)
        if home is not None:
            home.members.append(self.best.id)
        self.species_set.species = [s for s in self.species_set.species if s.members]

    def _append_history(self, k: int, by_id, t: int, n: int, evaluations: int) -> None:
        for species in self.species_set.species:
            best_i = None
            best_c = None
            for gid in species.members:
                rec = by_id[gid].fitness
                if rec is None or rec.failed:
                    continue
                if rec.incomplete is not None and (best_i is None or rec.incomplete > best_i):
                    best_i = rec.incomplete
                if rec.complete is not None and (best_c is None or rec.complete > best_c):
                    best_c = rec.complete
            self.history.append({
                "generation": k,
                "species_id": species.id,
                "size": len(species.members),
                "best_incomplete": best_i,
                "best_complete": best_c,
                "T": t,
                "N": n,
                "evaluations_this_gen": evaluations,
            })

    def run(self, checkpoint_path=None) -> RunResult:
        while self.generation < self.config.tau_k:
            satisfied = self.step()
            if checkpoint_path is not None:
                write_checkpoint(self.checkpoint(), checkpoint_path)
            if satisfied:
                return RunResult(
                    "satisfied", self.satisfied, self.satisfied.fitness, self.history
                )
        best = self.best
        return RunResult(
            "generation_limit", best, best.fitness if best else None, self.history
        )

    def history_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for row in self.history:
            writer.writerow([row[c] if row[c] is not None else "" for c in HISTORY_COLUMNS])
        return buf.getvalue()

    def checkpoint(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "generation": self.generation,
            "config_digest": config_digest(self.config),
            "next_genotype_id": self.next_genotype_id,
            "total_evaluations": self.total_evaluations,
            "rng_state": {
                "variation": _rng_state_to_json(self.rng_variation.getstate()),
                "estimate": _rng_state_to_json(self.rng_estimate.getstate()),
            },
            "population": [_genotype_state(g) for g in self.population],
            "species": [
                {
                    "id": s.id,
                    "representative": _genotype_state(s.representative),
                    "members": list(s.members),
                    "age": s.age,
                }
                for s in self.species_set.species
            ],
            "next_species_id": self.species_set.next_id,
            "adaptation": {
                "t": self.adaptation_state.t,
                "n": self.adaptation_state.n,
                "generation": self.adaptation_state.generation,
                "best_fitness_prev": self.adaptation_state.best_fitness_prev,
            },
            "best": _genotype_state(self.best) if self.best else None,
            "history": self.history,
        }

    @classmethod
    def restore(
        cls, doc: dict, space: SearchSpace, config: EngineConfig, evaluator: Evaluator
    ) -> "Engine":
        try:
            version = doc["version"]
        except (TypeError, KeyError):
            raise RestoreError("checkpoint document is missing its version")
        if version != CHECKPOINT_VERSION:
            raise RestoreError(f"checkpoint version {version} != {CHECKPOINT_VERSION}")
        if doc.get("config_digest") != config_digest(config):
            raise RestoreError("checkpoint was produced by a different configuration")
        try:
            engine = cls(space, config, evaluator)
            engine.generation = doc["generation"]
            engine.next_genotype_id = doc["next_genotype_id"]
            engine.total_evaluations = doc["total_evaluations"]
            engine.rng_variation.setstate(_rng_state_from_json(doc["rng_state"]["variation"]))
            engine.rng_estimate.setstate(_rng_state_from_json(doc["rng_state"]["estimate"]))
            engine.population = [_genotype_from_state(g) for g in doc["population"]]
            by_id = {g.id: g for g in engine.population}
            engine.species_set = SpeciesSet(
                species=[
                    Species(
                        id=s["id"],
                        representative=by_id.get(
                            s["representative"]["id"],
                            _genotype_from_state(s["representative"]),
                        ),
                        members=list(s["members"]),
                        age=s["age"],
                    )
                    for s in doc["species"]
                ],
                next_id=doc["next_species_id"],
            )
            a = doc["adaptation"]
            engine.adaptation_state = AdaptationState(
                t=a["t"], n=a["n"], generation=a["generation"],
                best_fitness_prev=a["best_fitness_prev"],
            )
            if doc.get("best") is not None:
                best = _genotype_from_state(doc["best"])
                engine.best = by_id.get(best.id, best)
            engine.history = list(doc["history"])
        except (KeyError, TypeError, ValueError) as exc:
            raise RestoreError(f"corrupt checkpoint: {exc}")
        return engine


def write_checkpoint(doc: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(doc, f)


def read_checkpoint(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise RestoreError(f"cannot read checkpoint: {exc}")
