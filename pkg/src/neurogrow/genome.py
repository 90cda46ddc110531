"""Genotypes, phenotype decoding, scale metrics and binary state encoding.

A genotype holds one gene strand per concrete organ; each strand is a chain
of cell genes. Decoding expands genes into a directed module graph with
resolved shapes and derived scale metrics.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from typing import Any

from .space import CellType, SearchSpace

# reserved sentinel for a strand head's in-link and tail's out-link
BOUNDARY = 0


class DecodeError(Exception):
    """An architecture cannot be realized for the given input shape."""

    def __init__(self, message: str, cell_key: int | None = None):
        super().__init__(message)
        self.cell_key = cell_key


class EncodingError(Exception):
    """A genotype cannot be packed under the given state schema."""


@dataclass
class CellGene:
    key: int
    cell_type: str
    in_key: int
    out_key: int
    attrs: tuple[int, ...]
    affiliated: tuple[str, ...]


@dataclass
class Genotype:
    id: int
    strands: dict[str, list[CellGene]]
    birth_generation: int = 0
    fitness: Any = None  # engine.FitnessRecord, attached during evolution
    next_key: int = 1

    def clone(self, new_id: int) -> "Genotype":
        return Genotype(
            id=new_id,
            strands={o: [replace(g) for g in s] for o, s in self.strands.items()},
            birth_generation=self.birth_generation,
            fitness=copy.copy(self.fitness),
            next_key=self.next_key,
        )

    def allocate_key(self) -> int:
        key = self.next_key
        self.next_key += 1
        return key

    def counts(self) -> dict[tuple[str, str], int]:
        """Cell counts per (organ, cell type)."""
        out: dict[tuple[str, str], int] = {}
        for organ, strand in self.strands.items():
            for gene in strand:
                k = (organ, gene.cell_type)
                out[k] = out.get(k, 0) + 1
        return out

    def type_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for strand in self.strands.values():
            for gene in strand:
                out[gene.cell_type] = out.get(gene.cell_type, 0) + 1
        return out

    def cell_count(self) -> int:
        return sum(len(s) for s in self.strands.values())

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "strands": {
                organ: [
                    {
                        "key": g.key,
                        "type": g.cell_type,
                        "in": g.in_key,
                        "out": g.out_key,
                        "attrs": list(g.attrs),
                        "affiliated": list(g.affiliated),
                    }
                    for g in strand
                ]
                for organ, strand in self.strands.items()
            },
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Genotype":
        strands = {
            organ: [
                CellGene(
                    key=g["key"],
                    cell_type=g["type"],
                    in_key=g["in"],
                    out_key=g["out"],
                    attrs=tuple(g["attrs"]),
                    affiliated=tuple(g["affiliated"]),
                )
                for g in strand
            ]
            for organ, strand in doc["strands"].items()
        }
        max_key = max((g.key for s in strands.values() for g in s), default=0)
        return cls(id=doc["id"], strands=strands, next_key=max_key + 1)


@dataclass
class PhenotypeNode:
    kind: str
    attrs: dict[str, int]
    cell_key: int
    organ: str


@dataclass
class Phenotype:
    nodes: list[PhenotypeNode]
    edges: list[tuple[int, int]]
    input_shape: tuple[int, ...]
    cell_counts: dict[str, int] = field(default_factory=dict)
    layer_count: int = 0
    param_count: int = 0

    def to_json(self) -> dict:
        return {
            "nodes": [
                {"kind": n.kind, "attrs": n.attrs, "cell": n.cell_key, "organ": n.organ}
                for n in self.nodes
            ],
            "edges": [[i, j] for i, j in self.edges],
            "input_shape": list(self.input_shape),
        }


@dataclass(frozen=True)
class StateSchema:
    """Per-type bit widths and slot counts for the binary state encoding."""

    bits_per_cell: dict[str, int]
    slots_per_cell: dict[str, int]
    domains: dict[str, tuple[tuple[int, int], ...]]  # cell type -> (lo, hi) per attr
    order: tuple[str, ...]  # catalog order

    @property
    def total_bits(self) -> int:
        return sum(self.slots_per_cell[t] * self.bits_per_cell[t] for t in self.order)

    @classmethod
    def for_space(cls, space: SearchSpace) -> "StateSchema":
        bits: dict[str, int] = {}
        slots: dict[str, int] = {}
        domains: dict[str, tuple[tuple[int, int], ...]] = {}
        for cell in space.cells:
            states = 1
            for spec in cell.attrs:
                states *= spec.size
            bits[cell.name] = max(1, math.ceil(math.log2(states)))
            slots[cell.name] = space.ceiling(cell.name)
            domains[cell.name] = tuple((a.lo, a.hi) for a in cell.attrs)
        return cls(bits, slots, domains, space.cell_names())


def minimal_genotype(space: SearchSpace, genotype_id: int) -> Genotype:
    """One initial cell per concrete organ, using each organ's first allowed type."""
    issues = _space_issues(space)
    if issues:
        raise ValueError(f"invalid space: {issues[0]}")
    strands: dict[str, list[CellGene]] = {}
    key = 1
    for organ in space.concrete_organs():
        cell = space.cell(organ.allowed_cells[0])
        strands[organ.name] = [
            CellGene(
                key=key,
                cell_type=cell.name,
                in_key=BOUNDARY,
                out_key=BOUNDARY,
                attrs=cell.initial_attrs,
                affiliated=cell.initial_affiliated,
            )
        ]
        key += 1
    return Genotype(id=genotype_id, strands=strands, next_key=key)


def _space_issues(space: SearchSpace) -> list[str]:
    from .space import validate_space

    return validate_space(space)


def validate(genotype: Genotype, space: SearchSpace) -> list[str]:
    """Check genotype invariants against a space; empty list means ok."""
    issues: list[str] = []
    concrete = {o.name for o in space.concrete_organs()}
    if set(genotype.strands) != concrete:
        issues.append(
            f"strands: expected organs {sorted(concrete)}, got {sorted(genotype.strands)}"
        )
        return issues

    keys_seen: set[int] = set()
    for organ_name, strand in genotype.strands.items():
        organ = space.organ(organ_name)
        prefix = f"strands[{organ_name!r}]"
        if not strand:
            issues.append(f"{prefix}: empty strand")
            continue
        by_key = {}
        for gene in strand:
            if gene.key in keys_seen or gene.key == BOUNDARY:
                issues.append(f"{prefix}: duplicate or reserved key {gene.key}")
            keys_seen.add(gene.key)
            by_key[gene.key] = gene

        # follow links from the head; the chain must visit every gene once
        heads = [g for g in strand if g.in_key == BOUNDARY]
        if len(heads) != 1:
            issues.append(f"{prefix}: cycle or broken chain ({len(heads)} head genes)")
        else:
            visited = []
            gene = heads[0]
            while True:
                visited.append(gene.key)
                if gene.out_key == BOUNDARY:
                    break
                nxt = by_key.get(gene.out_key)
                if nxt is None or len(visited) > len(strand):
                    issues.append(f"{prefix}: cycle or dangling link at key {gene.key}")
                    break
                if nxt.in_key != gene.key:
                    issues.append(f"{prefix}: link mismatch between {gene.key} and {nxt.key}")
                    break
                gene = nxt
            if len(visited) != len(strand) and not any("cycle" in i for i in issues):
                issues.append(f"{prefix}: cycle (chain covers {len(visited)}/{len(strand)} genes)")
            if visited != [g.key for g in strand]:
                if not any(prefix in i for i in issues):
                    issues.append(f"{prefix}: stored order differs from chain order")

        for gene in strand:
            if gene.cell_type not in organ.allowed_cells:
                issues.append(f"{prefix}: cell type {gene.cell_type!r} not allowed in organ")
                continue
            cell = space.cell(gene.cell_type)
            if len(gene.attrs) != len(cell.attrs):
                issues.append(f"{prefix}[{gene.key}]: attribute count mismatch")
            else:
                for spec, v in zip(cell.attrs, gene.attrs):
                    if not spec.lo <= v <= spec.hi:
                        issues.append(
                            f"{prefix}[{gene.key}]: {spec.name}={v} outside [{spec.lo}, {spec.hi}]"
                        )
            extra = set(gene.affiliated) - cell.allowed_affiliated
            if extra:
                issues.append(f"{prefix}[{gene.key}]: affiliated {sorted(extra)} not allowed")

        for a, b in zip(strand, strand[1:]):
            if (a.cell_type, b.cell_type) not in space.rule.cell_pairs:
                issues.append(
                    f"{prefix}: relation ({a.cell_type}, {b.cell_type}) not in rule"
                )

    for name, count in genotype.type_counts().items():
        if count > space.ceiling(name):
            issues.append(f"ceiling: {count} {name!r} cells exceed ceiling {space.ceiling(name)}")

    organ_order = [o.name for o in space.organs]
    for a, b in zip(organ_order, organ_order[1:]):
        if (a, b) not in space.rule.organ_pairs:
            issues.append(f"organ handoff ({a}, {b}) not in rule")

    return issues


def _normalize_shape(shape: tuple[int, ...]) -> tuple[int, int, int]:
    """Reduce an input shape to (channels, height, width).

    A 4-tuple is treated as (time, C, H, W) with the time axis dropped; a
    1-tuple as a flat vector presented as (C, 1, 1).
    """
    if len(shape) == 4:
        return (shape[1], shape[2], shape[3])
    if len(shape) == 3:
        return (shape[0], shape[1], shape[2])
    if len(shape) == 1:
        return (shape[0], 1, 1)
    raise DecodeError(f"unsupported input shape {shape}")


def _mirror_strand(strand: list[CellGene]) -> list[CellGene]:
    """Reversed strand with conv and convtranspose swapped, convlstm kept."""
    swap = {"conv": "convtranspose", "convtranspose": "conv"}
    mirrored = []
    for gene in reversed(strand):
        mirrored.append(
            CellGene(
                key=gene.key,
                cell_type=swap.get(gene.cell_type, gene.cell_type),
                in_key=BOUNDARY,
                out_key=BOUNDARY,
                attrs=gene.attrs,
                affiliated=gene.affiliated,
            )
        )
    return mirrored


def decode(genotype: Genotype, space: SearchSpace, input_shape: tuple[int, ...]) -> Phenotype:
    """Expand a genotype into a module graph with propagated shapes."""
    issues = validate(genotype, space)
    if issues:
        raise ValueError(f"invalid genotype: {issues[0]}")

    nodes: list[PhenotypeNode] = []
    edges: list[tuple[int, int]] = []
    c, h, w = _normalize_shape(tuple(input_shape))
    cell_counts: dict[str, int] = {}

    def add_node(node: PhenotypeNode) -> None:
        if nodes:
            edges.append((len(nodes) - 1, len(nodes)))
        nodes.append(node)

    for organ in space.organs:
        if organ.mirror_of is not None:
            strand = _mirror_strand(genotype.strands[organ.mirror_of])
        else:
            strand = genotype.strands[organ.name]
        for gene in strand:
            cell_counts[gene.cell_type] = cell_counts.get(gene.cell_type, 0) + 1
            kind = space.cell(gene.cell_type).core_kind
            c, h, w = _apply_core(add_node, kind, gene, organ.name, c, h, w)
            for aff in gene.affiliated:
                c, h, w = _apply_affiliated(add_node, aff, gene, organ.name, c, h, w)

    pheno = Phenotype(
        nodes=nodes,
        edges=edges,
        input_shape=tuple(input_shape),
        cell_counts=cell_counts,
        layer_count=len(nodes),
    )
    pheno.param_count = parameter_count(pheno)
    return pheno


def _apply_core(add_node, kind, gene, organ_name, c, h, w):
    if kind == "conv":
        out_c, k, s, p = gene.attrs[0], gene.attrs[1], gene.attrs[2], gene.attrs[3]
        nh = (h + 2 * p - k) // s + 1
        nw = (w + 2 * p - k) // s + 1
        if nh < 1 or nw < 1:
            raise DecodeError(f"conv underflow at cell {gene.key}", gene.key)
        add_node(PhenotypeNode("conv", {
            "in_channels": c, "out_channels": out_c,
            "kernel": k, "stride": s, "padding": p,
        }, gene.key, organ_name))
        return out_c, nh, nw
    if kind == "convtranspose":
        out_c, k, s, p = gene.attrs[0], gene.attrs[1], gene.attrs[2], gene.attrs[3]
        nh = (h - 1) * s - 2 * p + k
        nw = (w - 1) * s - 2 * p + k
        if nh < 1 or nw < 1:
            raise DecodeError(f"convtranspose underflow at cell {gene.key}", gene.key)
        add_node(PhenotypeNode("convtranspose", {
            "in_channels": c, "out_channels": out_c,
            "kernel": k, "stride": s, "padding": p,
        }, gene.key, organ_name))
        return out_c, nh, nw
    if kind == "convlstm":
        out_c = gene.attrs[0]
        # gate convolutions are 3x3 with padding 1; spatial dims preserved
        add_node(PhenotypeNode("convlstm", {
            "in_channels": c, "out_channels": out_c, "kernel": 3,
        }, gene.key, organ_name))
        return out_c, h, w
    if kind == "linear":
        in_features = c * h * w
        out = gene.attrs[0]
        add_node(PhenotypeNode("linear", {
            "in_features": in_features, "out_features": out,
        }, gene.key, organ_name))
        return out, 1, 1
    raise DecodeError(f"unknown core kind {kind!r} at cell {gene.key}", gene.key)


def _apply_affiliated(add_node, aff, gene, organ_name, c, h, w):
    if aff in ("batchnorm", "groupnorm"):
        add_node(PhenotypeNode(aff, {"channels": c}, gene.key, organ_name))
        return c, h, w
    if aff in ("relu", "leakyrelu"):
        add_node(PhenotypeNode(aff, {}, gene.key, organ_name))
        return c, h, w
    if aff == "maxpool":
        nh, nw = h // 2, w // 2
        if nh < 1 or nw < 1:
            raise DecodeError(f"maxpool underflow at cell {gene.key}", gene.key)
        add_node(PhenotypeNode("maxpool", {"kernel": 2, "stride": 2}, gene.key, organ_name))
        return c, nh, nw
    raise DecodeError(f"unknown affiliated kind {aff!r} at cell {gene.key}", gene.key)


def parameter_count(phenotype: Phenotype) -> int:
    """Total trainable parameters over all nodes."""
    total = 0
    for node in phenotype.nodes:
        a = node.attrs
        if node.kind in ("conv", "convtranspose"):
            total += a["out_channels"] * (a["in_channels"] * a["kernel"] ** 2 + 1)
        elif node.kind == "linear":
            total += a["out_features"] * (a["in_features"] + 1)
        elif node.kind in ("batchnorm", "groupnorm"):
            total += 2 * a["channels"]
        elif node.kind == "convlstm":
            total += 4 * a["out_channels"] * (a["in_channels"] * a["kernel"] ** 2 + 1)
    return total


def state_index(gene: CellGene, schema: StateSchema) -> int:
    """Mixed-radix state of a cell: first attribute is the least significant digit."""
    domains = schema.domains[gene.cell_type]
    if len(gene.attrs) != len(domains):
        raise EncodingError(f"cell {gene.key}: attribute count mismatch")
    index = 0
    radix = 1
    for value, (lo, hi) in zip(gene.attrs, domains):
        if not lo <= value <= hi:
            raise EncodingError(f"cell {gene.key}: {value} outside [{lo}, {hi}]")
        index += (value - lo) * radix
        radix *= hi - lo + 1
    return index


def encode_binary(genotype: Genotype, schema: StateSchema) -> str:
    """Pack a genotype into its fixed-width binary state string.

    For each cell type in catalog order the string carries one slot of
    `bits_per_cell` bits per allowed cell; present cells fill slots in strand
    order with their state index (most significant bit first), absent slots
    stay all-zero.
    """
    by_type: dict[str, list[CellGene]] = {t: [] for t in schema.order}
    for organ in genotype.strands:
        for gene in genotype.strands[organ]:
            if gene.cell_type not in by_type:
                raise EncodingError(f"cell type {gene.cell_type!r} not in schema")
            by_type[gene.cell_type].append(gene)

    chunks: list[str] = []
    for cell_type in schema.order:
        bits = schema.bits_per_cell[cell_type]
        slots = schema.slots_per_cell[cell_type]
        genes = by_type[cell_type]
        if len(genes) > slots:
            raise EncodingError(
                f"{len(genes)} {cell_type!r} cells exceed {slots} schema slots"
            )
        for gene in genes:
            chunks.append(format(state_index(gene, schema), f"0{bits}b"))
        chunks.append("0" * bits * (slots - len(genes)))
    return "".join(chunks)
