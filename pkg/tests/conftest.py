"""Shared fixtures: genotype builders and scripted evaluators."""

from __future__ import annotations

import random

import pytest

from neurogrow.fitness import EvaluationResponse, Evaluator, bitfield_space
from neurogrow.genome import BOUNDARY, CellGene, Genotype
from neurogrow.space import builtin_space


def make_genotype(genotype_id: int, strands_spec: dict) -> Genotype:
    """Build a linked genotype from {organ: [(type, attrs, affiliated), ...]}."""
    strands: dict[str, list[CellGene]] = {}
    key = 1
    for organ, genes in strands_spec.items():
        strand = []
        for cell_type, attrs, affiliated in genes:
            strand.append(
                CellGene(
                    key=key,
                    cell_type=cell_type,
                    in_key=BOUNDARY,
                    out_key=BOUNDARY,
                    attrs=tuple(attrs),
                    affiliated=tuple(affiliated),
                )
            )
            key += 1
        for i, gene in enumerate(strand):
            gene.in_key = strand[i - 1].key if i > 0 else BOUNDARY
            gene.out_key = strand[i + 1].key if i < len(strand) - 1 else BOUNDARY
        strands[organ] = strand
    return Genotype(id=genotype_id, strands=strands, next_key=key)


class ScriptedEvaluator(Evaluator):
    """Returns preset fitness per (genotype cell count, phase); logs every call."""

    def __init__(self, incomplete_fn, complete_fn):
        self.incomplete_fn = incomplete_fn
        self.complete_fn = complete_fn
        self.calls: list[tuple[int, str]] = []

    def evaluate(self, genotype, phase, budget, seed):
        self.calls.append((genotype.id, phase))
        fn = self.incomplete_fn if phase == "incomplete" else self.complete_fn
        return EvaluationResponse(genotype.id, float(fn(genotype)))


@pytest.fixture
def cnn_space():
    return builtin_space("cnn")


@pytest.fixture
def gan_space():
    return builtin_space("gan")


@pytest.fixture
def lstm_space():
    return builtin_space("lstm")


@pytest.fixture
def bits_space():
    return bitfield_space(4, 4)


@pytest.fixture
def rng():
    return random.Random("tests")
