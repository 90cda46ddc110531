"""Type-free search space: cell types, organs, connection rules.

A search space declares which cell types exist, how organs are built from
them, and which data-flow directions are legal. Three built-in spaces cover
chain CNNs, DCGAN-style GANs and convolutional LSTM encoder/decoders.
"""

from __future__ import annotations

from dataclasses import dataclass, field

CORE_KINDS = ("conv", "linear", "convtranspose", "convlstm")

AFFILIATED_KINDS = ("batchnorm", "relu", "leakyrelu", "maxpool", "groupnorm")


@dataclass(frozen=True)
class AttrSpec:
    """One integer attribute of a core module: name, finite domain, step size."""

    name: str
    lo: int
    hi: int
    growth: int = 1

    def clamp(self, value: int) -> int:
        return max(self.lo, min(self.hi, value))

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class CellType:
    name: str
    core_kind: str
    attrs: tuple[AttrSpec, ...]
    allowed_affiliated: frozenset[str]
    initial_attrs: tuple[int, ...]
    initial_affiliated: tuple[str, ...]


@dataclass(frozen=True)
class Organ:
    name: str
    allowed_cells: tuple[str, ...]
    mutation_weight: float = 1.0
    # when set, this organ carries no gene strand of its own; its phenotype
    # strand is derived from the named organ at decode time
    mirror_of: str | None = None


@dataclass(frozen=True)
class ConnectionRule:
    degree: int
    organ_pairs: frozenset[tuple[str, str]]
    cell_pairs: frozenset[tuple[str, str]]


@dataclass(frozen=True)
class SearchSpace:
    cells: tuple[CellType, ...]
    organs: tuple[Organ, ...]
    rule: ConnectionRule
    ceilings: dict[str, int] = field(default_factory=dict)

    def cell(self, name: str) -> CellType:
        for c in self.cells:
            if c.name == name:
                return c
        raise KeyError(f"unknown cell type {name!r}")

    def organ(self, name: str) -> Organ:
        for o in self.organs:
            if o.name == name:
                return o
        raise KeyError(f"unknown organ {name!r}")

    def cell_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.cells)

    def ceiling(self, cell_name: str) -> int:
        return self.ceilings.get(cell_name, DEFAULT_CEILING)

    def concrete_organs(self) -> tuple[Organ, ...]:
        """Organs that carry their own gene strand (mirrored ones excluded)."""
        return tuple(o for o in self.organs if o.mirror_of is None)


# per-type maximum cell count when a space does not say otherwise
DEFAULT_CEILING = 32


def validate_space(space: SearchSpace) -> list[str]:
    """Return every invariant violation as a "path: message" string.

    An empty list means the space is valid. Violations are data, not faults.
    """
    issues: list[str] = []
    cell_names = set()
    for i, cell in enumerate(space.cells):
        path = f"cells[{i}]"
        if cell.name in cell_names:
            issues.append(f"{path}.name: duplicate cell type {cell.name!r}")
        cell_names.add(cell.name)
        if cell.core_kind not in CORE_KINDS:
            issues.append(f"{path}.core_kind: unknown kind {cell.core_kind!r}")
        if not cell.attrs:
            issues.append(f"{path}.attrs: attribute schema is empty")
        for j, spec in enumerate(cell.attrs):
            lo_min = 0 if spec.name == "padding" else 1
            if spec.lo < lo_min or spec.hi < spec.lo:
                issues.append(f"{path}.attrs[{j}]: bad domain [{spec.lo}, {spec.hi}]")
            if spec.growth < 1:
                issues.append(f"{path}.attrs[{j}]: growth {spec.growth} < 1")
        if len(cell.initial_attrs) != len(cell.attrs):
            issues.append(f"{path}.initial_attrs: length mismatch")
        else:
            for j, (spec, v) in enumerate(zip(cell.attrs, cell.initial_attrs)):
                if not spec.lo <= v <= spec.hi:
                    issues.append(f"{path}.initial_attrs[{j}]: {v} outside [{spec.lo}, {spec.hi}]")
        unknown = set(cell.initial_affiliated) - cell.allowed_affiliated
        if unknown:
            issues.append(f"{path}.initial_affiliated: {sorted(unknown)} not allowed")
        bad = cell.allowed_affiliated - set(AFFILIATED_KINDS)
        if bad:
            issues.append(f"{path}.allowed_affiliated: unknown kinds {sorted(bad)}")

    organ_names = set()
    for i, organ in enumerate(space.organs):
        path = f"organs[{i}]"
        if organ.name in organ_names:
            issues.append(f"{path}.name: duplicate organ {organ.name!r}")
        organ_names.add(organ.name)
        if not organ.allowed_cells:
            issues.append(f"{path}.allowed_cells: empty")
        for name in organ.allowed_cells:
            if name not in cell_names:
                issues.append(f"{path}.allowed_cells: undeclared cell type {name!r}")
        if organ.mutation_weight < 0:
            issues.append(f"{path}.mutation_weight: negative")
        if organ.mirror_of is not None and organ.mirror_of not in {o.name for o in space.organs}:
            issues.append(f"{path}.mirror_of: undeclared organ {organ.mirror_of!r}")

    if space.rule.degree < 1:
        issues.append(f"rule.degree: {space.rule.degree} < 1")
    for a, b in sorted(space.rule.organ_pairs):
        if a not in organ_names or b not in organ_names:
            issues.append(f"rule.organ_pairs: ({a!r}, {b!r}) references undeclared organ")
    for a, b in sorted(space.rule.cell_pairs):
        if a not in cell_names or b not in cell_names:
            issues.append(f"rule.cell_pairs: ({a!r}, {b!r}) references undeclared cell type")

    for name, ceiling in space.ceilings.items():
        if name not in cell_names:
            issues.append(f"ceilings[{name!r}]: undeclared cell type")
        elif ceiling < 1:
            issues.append(f"ceilings[{name!r}]: {ceiling} < 1")

    return issues


def _conv_attrs(growth_out: int = 8) -> tuple[AttrSpec, ...]:
    return (
        AttrSpec("out_channels", 8, 1024, growth_out),
        AttrSpec("kernel", 1, 11, 2),
        AttrSpec("stride", 1, 4, 2),
        AttrSpec("padding", 0, 5, 2),
    )


def builtin_space(kind: str) -> SearchSpace:
    """Return one of the built-in spaces: "cnn", "gan" or "lstm"."""
    if kind == "cnn":
        conv = CellType(
            name="conv",
            core_kind="conv",
            attrs=_conv_attrs(growth_out=8),
            allowed_affiliated=frozenset({"batchnorm", "relu", "maxpool"}),
            initial_attrs=(16, 3, 1, 0),
            initial_affiliated=("batchnorm", "relu", "maxpool"),
        )
        linear = CellType(
            name="linear",
            core_kind="linear",
            attrs=(AttrSpec("width", 16, 4096, 16),),
            allowed_affiliated=frozenset({"relu"}),
            initial_attrs=(32,),
            initial_affiliated=("relu",),
        )
        return SearchSpace(
            cells=(conv, linear),
            organs=(
                Organ("feature", ("conv",), mutation_weight=0.6),
                Organ("classifier", ("linear",), mutation_weight=0.4),
            ),
            rule=ConnectionRule(
                degree=1,
                organ_pairs=frozenset({("feature", "classifier")}),
                cell_pairs=frozenset({("conv", "conv"), ("linear", "linear")}),
            ),
        )
    if kind == "gan":
        convtranspose = CellType(
            name="convtranspose",
            core_kind="convtranspose",
            attrs=(
                AttrSpec("out_channels", 8, 1024, 8),
                AttrSpec("kernel", 1, 11, 2),
                AttrSpec("stride", 1, 4, 1),
                AttrSpec("padding", 0, 5, 1),
            ),
            allowed_affiliated=frozenset({"batchnorm", "relu"}),
            initial_attrs=(32, 2, 1, 0),
            initial_affiliated=("batchnorm", "relu"),
        )
        conv = CellType(
            name="conv",
            core_kind="conv",
            attrs=(
                AttrSpec("out_channels", 8, 1024, 8),
                AttrSpec("kernel", 1, 11, 2),
                AttrSpec("stride", 1, 4, 1),
                AttrSpec("padding", 0, 5, 1),
            ),
            allowed_affiliated=frozenset({"batchnorm", "leakyrelu"}),
            initial_attrs=(32, 2, 1, 0),
            initial_affiliated=("batchnorm", "leakyrelu"),
        )
        return SearchSpace(
            cells=(convtranspose, conv),
            organs=(
                Organ("generator", ("convtranspose",), mutation_weight=0.5),
                Organ("discriminator", ("conv",), mutation_weight=0.5),
            ),
            rule=ConnectionRule(
                degree=1,
                organ_pairs=frozenset({("generator", "discriminator")}),
                cell_pairs=frozenset({("convtranspose", "convtranspose"), ("conv", "conv")}),
            ),
        )
    if kind == "lstm":
        conv = CellType(
            name="conv",
            core_kind="conv",
            attrs=(
                AttrSpec("out_channels", 8, 1024, 16),
                AttrSpec("kernel", 1, 11, 2),
                AttrSpec("stride", 1, 4, 1),
                AttrSpec("padding", 0, 5, 1),
            ),
            allowed_affiliated=frozenset({"leakyrelu"}),
            initial_attrs=(16, 3, 1, 0),
            initial_affiliated=("leakyrelu",),
        )
        convtranspose = CellType(
            name="convtranspose",
            core_kind="convtranspose",
            attrs=(
                AttrSpec("out_channels", 8, 1024, 16),
                AttrSpec("kernel", 1, 11, 2),
                AttrSpec("stride", 1, 4, 1),
                AttrSpec("padding", 0, 5, 1),
            ),
            allowed_affiliated=frozenset({"leakyrelu"}),
            initial_attrs=(16, 3, 1, 0),
            initial_affiliated=("leakyrelu",),
        )
        convlstm = CellType(
            name="convlstm",
            core_kind="convlstm",
            attrs=(AttrSpec("channels", 1, 256, 2),),
            allowed_affiliated=frozenset({"groupnorm"}),
            initial_attrs=(3,),
            initial_affiliated=("groupnorm",),
        )
        return SearchSpace(
            cells=(conv, convtranspose, convlstm),
            organs=(
                Organ("encoder", ("conv", "convlstm"), mutation_weight=1.0),
                # strand derived from the encoder; never mutated directly
                Organ("decoder", ("convtranspose", "convlstm"), mutation_weight=0.0,
                      mirror_of="encoder"),
            ),
            rule=ConnectionRule(
                degree=1,
                organ_pairs=frozenset({("encoder", "decoder")}),
                cell_pairs=frozenset({
                    ("conv", "conv"), ("convtranspose", "convtranspose"),
                    ("convlstm", "convlstm"), ("conv", "convlstm"),
                    ("convlstm", "conv"), ("convlstm", "convtranspose"),
                    ("convtranspose", "convlstm"),
                }),
            ),
        )
    raise ValueError(f"unknown builtin space {kind!r}")
