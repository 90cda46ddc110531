"""Compatibility distance and species maintenance.

Species cluster genotypes whose per-organ cell-count vectors lie within a
distance threshold of a representative. Each call to :func:`speciate` first
refreshes every surviving species' representative from the incoming
population, then assigns the remaining genotypes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .genome import Genotype


@dataclass
class SpeciationConfig:
    tau_d: float = 1.0
    species_limit: int = 10
    # optional (organ, cell type) -> coefficient overrides; default weight 1.0
    coefficients: dict[tuple[str, str], float] = field(default_factory=dict)
    default_coefficient: float = 1.0

    def coefficient(self, organ: str, cell_type: str) -> float:
        return self.coefficients.get((organ, cell_type), self.default_coefficient)

    def validate(self) -> None:
        if self.tau_d <= 0:
            raise ValueError("tau_d must be positive")
        if self.species_limit < 1:
            raise ValueError("species_limit must be >= 1")
        if self.default_coefficient < 0 or any(v < 0 for v in self.coefficients.values()):
            raise ValueError("coefficients must be non-negative")


@dataclass
class Species:
    id: int
    representative: Genotype
    members: list[int]
    age: int = 0


@dataclass
class Assignment:
    genotype_id: int
    species_id: int
    kind: str  # "representative" | "assigned" | "founder" | "overflow"
    distance: float


@dataclass
class SpeciesSet:
    species: list[Species] = field(default_factory=list)
    next_id: int = 1
    assignments: list[Assignment] = field(default_factory=list)

    def by_id(self, species_id: int) -> Species:
        for s in self.species:
            if s.id == species_id:
                return s
        raise KeyError(f"unknown species {species_id}")


def distance(g_i: Genotype, g_j: Genotype, config: SpeciationConfig) -> float:
    """Weighted L1 distance between per-(organ, cell type) count vectors."""
    ci = g_i.counts()
    cj = g_j.counts()
    total = 0.0
    for key in ci.keys() | cj.keys():
        gap = abs(ci.get(key, 0) - cj.get(key, 0))
        if gap:
            total += config.coefficient(*key) * gap
    return total


def speciate(
    genotypes: list[Genotype], species_set: SpeciesSet, config: SpeciationConfig
) -> SpeciesSet:
    """Partition a population into species, reusing the existing set.

    Phase 1 re-anchors each surviving species on the incoming genotype
    closest to its old representative (strictly below tau_d); species that
    find no such genotype are dropped. Phase 2 assigns every remaining
    genotype to the nearest representative below tau_d, founding new species
    up to the limit; past the limit a genotype joins the globally nearest
    species.
    """
    log: list[Assignment] = []
    taken: set[int] = set()
    survivors: list[Species] = []

    for s in sorted(species_set.species, key=lambda s: s.id):
        best = None
        best_d = config.tau_d
        for g in genotypes:
            if g.id in taken:
                continue
            d = distance(g, s.representative, config)
            if d < best_d:
                best_d = d
                best = g
        if best is not None:
            taken.add(best.id)
            survivors.append(Species(s.id, best, [best.id], age=s.age + 1))
            log.append(Assignment(best.id, s.id, "representative", best_d))

    next_id = species_set.next_id
    for g in genotypes:
        if g.id in taken:
            continue
        target = None
        best_d = config.tau_d
        for s in survivors:
            d = distance(g, s.representative, config)
            if d < best_d:
                best_d = d
                target = s
        if target is not None:
            target.members.append(g.id)
            log.append(Assignment(g.id, target.id, "assigned", best_d))
        elif len(survivors) < config.species_limit:
            founded = Species(next_id, g, [g.id], age=0)
            next_id += 1
            survivors.append(founded)
            log.append(Assignment(g.id, founded.id, "founder", 0.0))
        else:
            # limit reached: join the globally nearest species
            nearest = min(
                survivors, key=lambda s: (distance(g, s.representative, config), s.id)
            )
            nearest.members.append(g.id)
            log.append(
                Assignment(g.id, nearest.id, "overflow", distance(g, nearest.representative, config))
            )

    survivors = [s for s in survivors if s.members]
    return SpeciesSet(species=survivors, next_id=next_id, assignments=log)
