"""Compatibility distance and two-phase species assignment."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_genotype
from neurogrow.speciation import (
    Assignment,
    SpeciationConfig,
    Species,
    SpeciesSet,
    distance,
    speciate,
)


def cnn_genotype(gid, n_conv, n_linear):
    return make_genotype(gid, {
        "feature": [("conv", (16, 3, 1, 0), ())] * n_conv,
        "classifier": [("linear", (32,), ())] * n_linear,
    })


# ----------------------------------------------------------------- distance

def test_distance_frozen_fixture():
    """(2 conv, 1 linear) vs (4 conv, 2 linear): |2-4| + |1-2| = 3.0."""
    config = SpeciationConfig()
    a = cnn_genotype(1, 2, 1)
    b = cnn_genotype(2, 4, 2)
    assert distance(a, b, config) == 3.0


def test_distance_weighted():
    config = SpeciationConfig(coefficients={("feature", "conv"): 0.5})
    a = cnn_genotype(1, 2, 1)
    b = cnn_genotype(2, 4, 2)
    assert distance(a, b, config) == 0.5 * 2 + 1.0 * 1


def test_distance_counts_organ_of_origin():
    """The same cell type in different organs contributes separately."""
    config = SpeciationConfig()
    a = make_genotype(1, {"x": [("conv", (16, 3, 1, 0), ())], "y": []})
    b = make_genotype(2, {"x": [], "y": [("conv", (16, 3, 1, 0), ())]})
    assert distance(a, b, config) == 2.0


genotype_shapes = st.tuples(st.integers(1, 8), st.integers(1, 8))


@settings(max_examples=200)
@given(genotype_shapes, genotype_shapes, genotype_shapes)
def test_distance_is_pseudometric(sa, sb, sc):
    config = SpeciationConfig()
    a, b, c = (cnn_genotype(i, *s) for i, s in enumerate((sa, sb, sc)))
    dab = distance(a, b, config)
    dba = distance(b, a, config)
    dac = distance(a, c, config)
    dcb = distance(c, b, config)
    assert dab >= 0
    assert dab == dba
    assert distance(a, a, config) == 0.0
    assert dab <= dac + dcb + 1e-9


# ----------------------------------------------------------------- speciate

def test_first_speciation_founds_species():
    config = SpeciationConfig(tau_d=1.0, species_limit=10)
    pop = [cnn_genotype(1, 1, 1), cnn_genotype(2, 1, 1), cnn_genotype(3, 5, 5)]
    result = speciate(pop, SpeciesSet(), config)
    assert len(result.species) == 2
    sizes = sorted(len(s.members) for s in result.species)
    assert sizes == [1, 2]


def test_speciation_is_a_partition():
    config = SpeciationConfig(tau_d=1.0, species_limit=3)
    rng = random.Random(2)
    pop = [cnn_genotype(i, rng.randint(1, 6), rng.randint(1, 6)) for i in range(40)]
    result = speciate(pop, SpeciesSet(), config)
    seen = [gid for s in result.species for gid in s.members]
    assert sorted(seen) == [g.id for g in pop]


def test_representative_refresh_prefers_closest():
    config = SpeciationConfig(tau_d=2.0, species_limit=10)
    old_rep = cnn_genotype(99, 3, 3)
    existing = SpeciesSet(species=[Species(1, old_rep, [99], age=4)], next_id=2)
    pop = [cnn_genotype(1, 3, 3), cnn_genotype(2, 3, 4), cnn_genotype(3, 9, 9)]
    result = speciate(pop, existing, config)
    s1 = result.by_id(1)
    assert s1.representative.id == 1  # exact match wins the refresh
    assert s1.age == 5
    rep_log = [a for a in result.assignments if a.kind == "representative"]
    assert rep_log == [Assignment(1, 1, "representative", 0.0)]


def test_representative_taken_once():
    """A genotype closest to two old reps anchors only the lower-id species."""
    config = SpeciationConfig(tau_d=5.0, species_limit=10)
    rep = cnn_genotype(99, 3, 3)
    existing = SpeciesSet(
        species=[Species(1, rep, [], 0), Species(2, rep.clone(98), [], 0)],
        next_id=3,
    )
    pop = [cnn_genotype(1, 3, 3), cnn_genotype(2, 4, 3)]
    result = speciate(pop, existing, config)
    anchors = [a for a in result.assignments if a.kind == "representative"]
    assert [a.genotype_id for a in anchors] == [1, 2]
    assert [a.species_id for a in anchors] == [1, 2]


def test_species_dropped_when_no_member_close():
    config = SpeciationConfig(tau_d=1.0, species_limit=10)
    rep = cnn_genotype(99, 1, 1)
    existing = SpeciesSet(species=[Species(1, rep, [99], 0)], next_id=2)
    pop = [cnn_genotype(1, 6, 6)]
    result = speciate(pop, existing, config)
    assert [s.id for s in result.species] == [2]


def test_overflow_joins_nearest_species():
    config = SpeciationConfig(tau_d=1.0, species_limit=2)
    pop = [
        cnn_genotype(1, 1, 1),
        cnn_genotype(2, 4, 4),
        cnn_genotype(3, 8, 8),  # would found a third species
    ]
    result = speciate(pop, SpeciesSet(), config)
    assert len(result.species) == 2
    overflow = [a for a in result.assignments if a.kind == "overflow"]
    assert len(overflow) == 1
    assert overflow[0].genotype_id == 3
    # nearest representative is the (4, 4) genotype: distance 8 < 14
    assert result.by_id(overflow[0].species_id).representative.id == 2


def test_species_ids_never_reused():
    config = SpeciationConfig(tau_d=1.0, species_limit=10)
    pop = [cnn_genotype(1, 1, 1)]
    r1 = speciate(pop, SpeciesSet(), config)
    # drop the species, then force a new one: the id must advance
    r2 = speciate([cnn_genotype(2, 6, 6)], r1, config)
    assert [s.id for s in r2.species] == [2]


def test_distance_threshold_is_strict():
    config = SpeciationConfig(tau_d=2.0, species_limit=10)
    pop = [cnn_genotype(1, 1, 1), cnn_genotype(2, 2, 2)]  # distance exactly 2.0
    result = speciate(pop, SpeciesSet(), config)
    assert len(result.species) == 2


def test_config_validation():
    with pytest.raises(ValueError):
        SpeciationConfig(tau_d=0.0).validate()
    with pytest.raises(ValueError):
        SpeciationConfig(species_limit=0).validate()
    SpeciationConfig().validate()
