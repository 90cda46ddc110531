"""neurogrow: constructive neuroevolution over type-free cell/organ search spaces."""

from .adaptation import AdaptationConfig, AdaptationState
from .engine import (
    Engine,
    EngineConfig,
    EstimationConfig,
    FitnessRecord,
    RunResult,
    quota,
)
from .fitness import (
    BridgeEvaluator,
    EvaluationResponse,
    Evaluator,
    SubsetSumEvaluator,
    SubsetSumProblem,
    bitfield_space,
)
from .genome import Genotype, Phenotype, StateSchema, decode, encode_binary, minimal_genotype
from .space import AttrSpec, CellType, Organ, SearchSpace, builtin_space, validate_space
from .speciation import SpeciationConfig, Species, SpeciesSet, distance, speciate
from .variation import VariationConfig, crossover, mutate_add_cell, mutate_modify_cell

__version__ = "0.1.0"

__all__ = [
    "AdaptationConfig",
    "AdaptationState",
    "AttrSpec",
    "BridgeEvaluator",
    "CellType",
    "Engine",
    "EngineConfig",
    "EstimationConfig",
    "EvaluationResponse",
    "Evaluator",
    "FitnessRecord",
    "Genotype",
    "Organ",
    "Phenotype",
    "RunResult",
    "SearchSpace",
    "SpeciationConfig",
    "Species",
    "SpeciesSet",
    "StateSchema",
    "SubsetSumEvaluator",
    "SubsetSumProblem",
    "VariationConfig",
    "bitfield_space",
    "builtin_space",
    "crossover",
    "decode",
    "distance",
    "encode_binary",
    "minimal_genotype",
    "mutate_add_cell",
    "mutate_modify_cell",
    "quota",
    "speciate",
    "validate_space",
]
