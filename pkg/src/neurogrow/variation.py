"""Cell-centered mutation and organ-centered crossover.

All operators take an explicit ``random.Random`` handle and return genotypes
that validate against the space they were produced from.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

from .genome import BOUNDARY, CellGene, Genotype
from .space import SearchSpace


@dataclass
class VariationConfig:
    p_add: float = 0.25
    p_modify: float = 0.5
    p_cross: float = 0.25
    # organ name -> selection weight; falls back to space mutation_weight
    organ_weights: dict[str, float] = field(default_factory=dict)
    # cell type -> per-attribute weights; one extra trailing entry (if present)
    # weights affiliated-module modification
    attr_weights: dict[str, tuple[float, ...]] = field(default_factory=dict)
    # cell type -> per-attribute step overrides
    growth_factors: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def validate(self) -> None:
        total = self.p_add + self.p_modify + self.p_cross
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"operator probabilities sum to {total}, expected 1")
        if min(self.p_add, self.p_modify, self.p_cross) < 0:
            raise ValueError("operator probabilities must be non-negative")
        for name, weights in self.attr_weights.items():
            if any(w < 0 for w in weights):
                raise ValueError(f"attr_weights[{name!r}] has negative entries")
            if abs(sum(weights) - 1.0) > 1e-9:
                raise ValueError(f"attr_weights[{name!r}] must sum to 1")


def _organ_weight(space: SearchSpace, config: VariationConfig, organ_name: str) -> float:
    if organ_name in config.organ_weights:
        return config.organ_weights[organ_name]
    return space.organ(organ_name).mutation_weight


def _pick_weighted(rng: random.Random, items: list, weights: list[float]):
    total = sum(weights)
    if total <= 0:
        return rng.choice(items)
    x = rng.random() * total
    acc = 0.0
    for item, w in zip(items, weights):
        acc += w
        if x < acc:
            return item
    return items[-1]


def _growth(space: SearchSpace, config: VariationConfig, cell_type: str, attr_index: int) -> int:
    override = config.growth_factors.get(cell_type)
    if override is not None and attr_index < len(override):
        return override[attr_index]
    return space.cell(cell_type).attrs[attr_index].growth


def _legal_insertions(
    genotype: Genotype, space: SearchSpace, organ_name: str
) -> dict[int, list[str]]:
    """Map insertion position -> admissible cell types for one organ strand."""
    organ = space.organ(organ_name)
    strand = genotype.strands[organ_name]
    counts = genotype.type_counts()
    pairs = space.rule.cell_pairs
    result: dict[int, list[str]] = {}
    for pos in range(len(strand) + 1):
        prev_t = strand[pos - 1].cell_type if pos > 0 else None
        next_t = strand[pos].cell_type if pos < len(strand) else None
        admissible = []
        for t in organ.allowed_cells:
            if counts.get(t, 0) >= space.ceiling(t):
                continue
            if prev_t is not None and (prev_t, t) not in pairs:
                continue
            if next_t is not None and (t, next_t) not in pairs:
                continue
            admissible.append(t)
        if admissible:
            result[pos] = admissible
    return result


def mutate_add_cell(
    genotype: Genotype,
    space: SearchSpace,
    rng: random.Random,
    config: VariationConfig | None = None,
) -> tuple[Genotype, bool]:
    """Insert one fresh cell gene at a random legal position.

    Returns (genotype, saturated); when no organ admits an insertion the
    input genotype is returned unchanged with saturated=True.
    """
    config = config or VariationConfig()
    candidates = []
    weights = []
    insertions: dict[str, dict[int, list[str]]] = {}
    for organ in space.concrete_organs():
        legal = _legal_insertions(genotype, space, organ.name)
        if legal and _organ_weight(space, config, organ.name) > 0:
            candidates.append(organ.name)
            weights.append(_organ_weight(space, config, organ.name))
            insertions[organ.name] = legal
    if not candidates:
        return genotype, True

    organ_name = _pick_weighted(rng, candidates, weights)
    legal = insertions[organ_name]
    pos = rng.choice(sorted(legal))
    cell_type = rng.choice(legal[pos])

    child = genotype.clone(genotype.id)
    strand = child.strands[organ_name]
    cell = space.cell(cell_type)
    gene = CellGene(
        key=child.allocate_key(),
        cell_type=cell_type,
        in_key=BOUNDARY,
        out_key=BOUNDARY,
        attrs=cell.initial_attrs,
        affiliated=cell.initial_affiliated,
    )
    strand.insert(pos, gene)
    _relink(strand)
    return child, False


def _relink(strand: list[CellGene]) -> None:
    for i, gene in enumerate(strand):
        gene.in_key = strand[i - 1].key if i > 0 else BOUNDARY
        gene.out_key = strand[i + 1].key if i < len(strand) - 1 else BOUNDARY


def mutate_modify_cell(
    genotype: Genotype,
    space: SearchSpace,
    rng: random.Random,
    config: VariationConfig | None = None,
) -> Genotype:
    """Step one attribute of one cell, or modify its affiliated modules."""
    config = config or VariationConfig()
    organs = [
        o.name
        for o in space.concrete_organs()
        if genotype.strands[o.name] and _organ_weight(space, config, o.name) > 0
    ]
    if not organs:
        return genotype
    organ_name = _pick_weighted(
        rng, organs, [_organ_weight(space, config, o) for o in organs]
    )
    child = genotype.clone(genotype.id)
    strand = child.strands[organ_name]
    gene = rng.choice(strand)
    cell = space.cell(gene.cell_type)

    n_core = len(cell.attrs)
    weights = config.attr_weights.get(gene.cell_type)
    if weights is None:
        # uniform over core attributes plus one affiliated slot when available
        slots = n_core + (1 if cell.allowed_affiliated else 0)
        weights = tuple(1.0 / slots for _ in range(slots))
    index = _pick_weighted(rng, list(range(len(weights))), list(weights))

    if index >= n_core and cell.allowed_affiliated:
        _modify_affiliated(gene, cell.allowed_affiliated, rng)
    else:
        if index >= n_core:
            index = rng.randrange(n_core)
        spec = cell.attrs[index]
        step = _growth(space, config, gene.cell_type, index)
        sign = 1 if rng.random() < 0.5 else -1
        attrs = list(gene.attrs)
        attrs[index] = spec.clamp(attrs[index] + sign * step)
        gene.attrs = tuple(attrs)
    return child


def _modify_affiliated(gene: CellGene, allowed: frozenset[str], rng: random.Random) -> None:
    present = list(gene.affiliated)
    missing = sorted(allowed - set(present))
    options: list[tuple[str, ...]] = []
    options += [("add", m) for m in missing]
    options += [("remove", p) for p in present]
    options += [("swap", p, m) for p in present for m in missing]
    if not options:
        return
    op = options[rng.randrange(len(options))]
    if op[0] == "add":
        gene.affiliated = tuple(present + [op[1]])
    elif op[0] == "remove":
        present.remove(op[1])
        gene.affiliated = tuple(present)
    else:
        gene.affiliated = tuple(op[2] if p == op[1] else p for p in present)


def _renumber(genotype: Genotype, space: SearchSpace) -> None:
    """Reassign cell keys 1..n in organ/strand order, fixing links."""
    key = itertools.count(1)
    for organ in space.concrete_organs():
        strand = genotype.strands[organ.name]
        for gene in strand:
            gene.key = next(key)
        _relink(strand)
    genotype.next_key = genotype.cell_count() + 1


def crossover(
    parent_a: Genotype,
    parent_b: Genotype,
    space: SearchSpace,
    rng: random.Random,
    config: VariationConfig | None = None,
    id_source=None,
) -> tuple[Genotype, Genotype]:
    """Swap one organ's whole strand between two parents."""
    config = config or VariationConfig()
    organs = [o.name for o in space.concrete_organs()]
    organ_name = _pick_weighted(
        rng, organs, [_organ_weight(space, config, o) for o in organs]
    )
    ids = id_source or iter((parent_a.id, parent_b.id))
    child_c = parent_a.clone(next(ids))
    child_d = parent_b.clone(next(ids))
    child_c.strands[organ_name], child_d.strands[organ_name] = (
        child_d.strands[organ_name],
        child_c.strands[organ_name],
    )
    _renumber(child_c, space)
    _renumber(child_d, space)
    return child_c, child_d


def draw_kind(rng: random.Random, config: VariationConfig) -> str:
    x = rng.random()
    if x < config.p_add:
        return "add"
    if x < config.p_add + config.p_modify:
        return "modify"
    return "cross"


def vary_round(
    pool: list[Genotype],
    space: SearchSpace,
    config: VariationConfig,
    rng: random.Random,
    id_source,
) -> list[Genotype]:
    """Apply one round of variation to an offspring pool.

    Each offspring draws its variation kind independently; crossover-marked
    offspring are then paired uniformly at random without replacement, with
    an unpaired leftover falling back to a modify mutation.
    """
    kinds = [draw_kind(rng, config) for _ in pool]
    result: list[Genotype | None] = [None] * len(pool)

    cross_indices = [i for i, k in enumerate(kinds) if k == "cross"]
    rng.shuffle(cross_indices)
    if len(cross_indices) % 2 == 1:
        kinds[cross_indices.pop()] = "modify"

    for i, kind in enumerate(kinds):
        if kind == "add":
            result[i], _ = mutate_add_cell(pool[i], space, rng, config)
        elif kind == "modify":
            result[i] = mutate_modify_cell(pool[i], space, rng, config)

    for a, b in zip(cross_indices[::2], cross_indices[1::2]):
        result[a], result[b] = crossover(pool[a], pool[b], space, rng, config, id_source)

    return result  # type: ignore[return-value]
