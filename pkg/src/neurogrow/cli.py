"""Command-line driver: run-config parsing, evolve/resume/inspect/report.

The run config is a YAML document with four sections (dnn, evolution,
training, run) whose keys mirror the evolution-configuration tables,
normalized to snake_case. Probabilities may be written either as fractions
or percentages (values above 1 are divided by 100). Unknown keys are
rejected with the offending path.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .adaptation import AdaptationConfig
from .engine import (
    Engine,
    EngineConfig,
    EstimationConfig,
    HISTORY_COLUMNS,
    RestoreError,
    read_checkpoint,
)
from .fitness import (
    BridgeEvaluator,
    SubsetSumEvaluator,
    SubsetSumProblem,
    TargetMatchEvaluator,
    bitfield_space,
)
from .genome import Genotype, decode
from .space import SearchSpace, builtin_space, validate_space
from .speciation import SpeciationConfig
from .variation import VariationConfig

DEFAULT_INPUT_SHAPES = {
    "cnn": (3, 32, 32),
    "gan": (100,),
    "lstm": (10, 1, 64, 64),
}


class ConfigError(Exception):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class EvaluatorSpec:
    kind: str  # "subset_sum" | "target_match" | "worker"
    options: dict = field(default_factory=dict)


@dataclass
class ParsedConfig:
    space: SearchSpace
    engine: EngineConfig
    evaluator: EvaluatorSpec
    space_kind: str
    input_shape: tuple[int, ...]
    out_dir: str = "runs/out"
    dnn_options: dict = field(default_factory=dict)


def _prob(value, path: str) -> float:
    if not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    v = float(value)
    if v > 1.0:
        v /= 100.0
    if not 0.0 <= v <= 1.0:
        raise ConfigError(path, f"probability {value!r} out of range")
    return v


def _require(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError(f"{path}/{key}", "missing required key")
    return section[key]


def _check_keys(section: dict, known, path: str) -> None:
    for key in section:
        if key not in known:
            raise ConfigError(f"{path}/{key}", "unknown key")


def _int(value, path: str, minimum: int = 1) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(path, f"expected an integer >= {minimum}, got {value!r}")
    return value


def _build_space(dnn: dict) -> tuple[SearchSpace, str, tuple[int, ...], dict]:
    kind = _require(dnn, "type", "/dnn")
    options: dict = {}
    if kind == "subset_sum":
        _check_keys(dnn, {"type", "slots", "bits", "input_shape"}, "/dnn")
        slots = _int(dnn.get("slots", 4), "/dnn/slots")
        bits = _int(dnn.get("bits", 4), "/dnn/bits")
        space = bitfield_space(slots, bits)
        options = {"slots": slots, "bits": bits}
        shape = tuple(dnn.get("input_shape", (1,)))
    elif kind in ("cnn", "gan", "lstm"):
        _check_keys(dnn, {"type", "input_shape", "initial"}, "/dnn")
        space = builtin_space(kind)
        overrides = dnn.get("initial", {})
        if overrides:
            options["initial"] = overrides
            cells = []
            for cell in space.cells:
                doc = overrides.get(cell.name)
                if doc is None:
                    cells.append(cell)
                    continue
                _check_keys(doc, {"attrs", "affiliated"}, f"/dnn/initial/{cell.name}")
                cells.append(replace(
                    cell,
                    initial_attrs=tuple(doc.get("attrs", cell.initial_attrs)),
                    initial_affiliated=tuple(doc.get("affiliated", cell.initial_affiliated)),
                ))
            space = replace(space, cells=tuple(cells))
        shape = tuple(dnn.get("input_shape", DEFAULT_INPUT_SHAPES[kind]))
    else:
        raise ConfigError("/dnn/type", f"unknown space {kind!r}")
    issues = validate_space(space)
    if issues:
        raise ConfigError("/dnn", f"invalid space: {issues[0]}")
    return space, kind, shape, options


_EVOLUTION_KEYS = {
    "individual_init", "individual_limit",
    "npi_init", "npi_step", "npi_limit", "tpg_init", "tpg_step",
    "organ_prob", "add_cell_prob", "modify_cell_prob", "crossover_prob",
    "species_num_limit", "species_distance_threshold",
}

_TRAINING_KEYS = {
    "train_rate", "incomplete_train_epochs", "complete_train_epochs",
    "incomplete_fitness_threshold", "complete_fitness_threshold",
    "train_batches", "learning_rate", "loss_function", "optimizer",
    "evaluator",
}

_RUN_KEYS = {"seed", "generation_limit", "out_dir"}


def _parse_evolution(section: dict, space: SearchSpace) -> tuple[VariationConfig, SpeciationConfig, AdaptationConfig, int, int]:
    cell_names = set(space.cell_names())
    known = set(_EVOLUTION_KEYS)
    for name in cell_names:
        known.add(f"{name}_attr_prob")
        known.add(f"{name}_attr_growth_factor")
    _check_keys(section, known, "/evolution")

    p_add = _prob(section.get("add_cell_prob", 0.25), "/evolution/add_cell_prob")
    p_modify = _prob(section.get("modify_cell_prob", 0.5), "/evolution/modify_cell_prob")
    p_cross = _prob(section.get("crossover_prob", 0.25), "/evolution/crossover_prob")
    if abs(p_add + p_modify + p_cross - 1.0) > 1e-9:
        raise ConfigError("/evolution", "add/modify/crossover probabilities must sum to 1")

    organ_weights: dict[str, float] = {}
    if "organ_prob" in section:
        probs = section["organ_prob"]
        concrete = space.concrete_organs()
        if not isinstance(probs, list) or len(probs) != len(concrete):
            raise ConfigError("/evolution/organ_prob",
                              f"expected {len(concrete)} entries, one per organ")
        for organ, p in zip(concrete, probs):
            organ_weights[organ.name] = _prob(p, "/evolution/organ_prob")

    attr_weights: dict[str, tuple[float, ...]] = {}
    growth_factors: dict[str, tuple[int, ...]] = {}
    for name in cell_names:
        key = f"{name}_attr_prob"
        if key in section:
            n_core = len(space.cell(name).attrs)
            weights = [_prob(p, f"/evolution/{key}") for p in section[key]]
            if len(weights) not in (n_core, n_core + 1):
                raise ConfigError(f"/evolution/{key}",
                                  f"expected {n_core} or {n_core + 1} entries")
            attr_weights[name] = tuple(weights)
        key = f"{name}_attr_growth_factor"
        if key in section:
            value = section[key]
            steps = value if isinstance(value, list) else [value]
            growth_factors[name] = tuple(_int(s, f"/evolution/{key}") for s in steps)

    variation = VariationConfig(
        p_add=p_add, p_modify=p_modify, p_cross=p_cross,
        organ_weights=organ_weights, attr_weights=attr_weights,
        growth_factors=growth_factors,
    )
    speciation = SpeciationConfig(
        tau_d=float(section.get("species_distance_threshold", 1.0)),
        species_limit=_int(section.get("species_num_limit", 10), "/evolution/species_num_limit"),
    )
    adaptation = AdaptationConfig(
        lambda_t=_int(section.get("tpg_init", 1), "/evolution/tpg_init"),
        xi_t=_int(section.get("tpg_step", 1), "/evolution/tpg_step"),
        lambda_n=_int(section.get("npi_init", 1), "/evolution/npi_init"),
        xi_n=_int(section.get("npi_step", 1), "/evolution/npi_step"),
        tau_n=_int(section.get("npi_limit", 10), "/evolution/npi_limit"),
    )
    individual_init = _int(section.get("individual_init", 20), "/evolution/individual_init")
    tau_q = _int(section.get("individual_limit", 50), "/evolution/individual_limit")
    return variation, speciation, adaptation, individual_init, tau_q


def parse_config(document: dict) -> ParsedConfig:
    """Validate a run-config document into a space, engine config and evaluator spec."""
    if not isinstance(document, dict):
        raise ConfigError("/", "config document must be a mapping")
    _check_keys(document, {"dnn", "evolution", "training", "run"}, "/")
    for name in ("dnn", "evolution", "training", "run"):
        if name not in document:
            raise ConfigError(f"/{name}", "missing required section")

    space, kind, shape, dnn_options = _build_space(dict(document["dnn"]))
    variation, speciation, adaptation, individual_init, tau_q = _parse_evolution(
        dict(document["evolution"]), space
    )

    training = dict(document["training"])
    _check_keys(training, _TRAINING_KEYS, "/training")
    estimation = EstimationConfig(
        t_i=_int(training.get("incomplete_train_epochs", 10), "/training/incomplete_train_epochs"),
        t_c=_int(training.get("complete_train_epochs", 250), "/training/complete_train_epochs"),
        tau_f=float(training.get("incomplete_fitness_threshold", 0.65)),
        tau_fc=float(training.get("complete_fitness_threshold", 0.75)),
        train_rate=_prob(training.get("train_rate", 0.5), "/training/train_rate"),
    )
    evaluator_doc = training.get("evaluator", {"kind": "subset_sum"})
    if isinstance(evaluator_doc, str):
        evaluator_doc = {"kind": evaluator_doc}
    ev_kind = _require(evaluator_doc, "kind", "/training/evaluator")
    if ev_kind not in ("subset_sum", "target_match", "worker"):
        raise ConfigError("/training/evaluator/kind", f"unknown evaluator {ev_kind!r}")
    options = {k: v for k, v in evaluator_doc.items() if k != "kind"}
    for key in ("train_batches", "learning_rate", "loss_function", "optimizer"):
        if key in training:
            options.setdefault(key, training[key])

    run = dict(document["run"])
    _check_keys(run, _RUN_KEYS, "/run")
    engine = EngineConfig(
        individual_init=individual_init,
        tau_q=tau_q,
        tau_k=_int(run.get("generation_limit", 100), "/run/generation_limit"),
        seed=_int(run.get("seed", 0), "/run/seed", minimum=0),
        variation=variation,
        speciation=speciation,
        adaptation=adaptation,
        estimation=estimation,
    )
    try:
        engine.validate()
    except ValueError as exc:
        raise ConfigError("/evolution", str(exc))

    return ParsedConfig(
        space=space,
        engine=engine,
        evaluator=EvaluatorSpec(ev_kind, options),
        space_kind=kind,
        input_shape=shape,
        out_dir=str(run.get("out_dir", "runs/out")),
        dnn_options=dnn_options,
    )


def emit_config(parsed: ParsedConfig) -> dict:
    """Inverse of parse_config: a document that parses back to equal values."""
    engine = parsed.engine
    dnn: dict = {"type": parsed.space_kind, "input_shape": list(parsed.input_shape)}
    if parsed.space_kind == "subset_sum":
        dnn.update(parsed.dnn_options)
    elif "initial" in parsed.dnn_options:
        dnn["initial"] = parsed.dnn_options["initial"]

    evolution: dict = {
        "individual_init": engine.individual_init,
        "individual_limit": engine.tau_q,
        "npi_init": engine.adaptation.lambda_n,
        "npi_step": engine.adaptation.xi_n,
        "npi_limit": engine.adaptation.tau_n,
        "tpg_init": engine.adaptation.lambda_t,
        "tpg_step": engine.adaptation.xi_t,
        "add_cell_prob": engine.variation.p_add,
        "modify_cell_prob": engine.variation.p_modify,
        "crossover_prob": engine.variation.p_cross,
        "species_num_limit": engine.speciation.species_limit,
        "species_distance_threshold": engine.speciation.tau_d,
    }
    if engine.variation.organ_weights:
        evolution["organ_prob"] = [
            engine.variation.organ_weights[o.name] for o in parsed.space.concrete_organs()
        ]
    for name, weights in engine.variation.attr_weights.items():
        evolution[f"{name}_attr_prob"] = list(weights)
    for name, steps in engine.variation.growth_factors.items():
        evolution[f"{name}_attr_growth_factor"] = list(steps)

    est = engine.estimation
    training: dict = {
        "train_rate": est.train_rate,
        "incomplete_train_epochs": est.t_i,
        "complete_train_epochs": est.t_c,
        "incomplete_fitness_threshold": est.tau_f,
        "complete_fitness_threshold": est.tau_fc,
        "evaluator": {"kind": parsed.evaluator.kind, **parsed.evaluator.options},
    }
    run = {
        "seed": engine.seed,
        "generation_limit": engine.tau_k,
        "out_dir": parsed.out_dir,
    }
    return {"dnn": dnn, "evolution": evolution, "training": training, "run": run}


def make_evaluator(parsed: ParsedConfig):
    spec = parsed.evaluator
    if spec.kind == "subset_sum":
        target = spec.options.get("target", "")
        return SubsetSumEvaluator(SubsetSumProblem.for_space(parsed.space, target))
    if spec.kind == "target_match":
        counts = {
            (organ, cell): n
            for organ, cells in spec.options.get("target_counts", {}).items()
            for cell, n in cells.items()
        }
        return TargetMatchEvaluator(counts, space=parsed.space)
    command = spec.options.get("command")
    if not command:
        raise ConfigError("/training/evaluator/command", "worker evaluator needs a command")
    extra = []
    if "train_batches" in spec.options:
        extra += ["--batch-size", str(spec.options["train_batches"])]
    if "learning_rate" in spec.options:
        extra += ["--learning-rate", str(spec.options["learning_rate"])]
    pool_size = int(os.environ.get(
        "NEUROGROW_WORKERS", spec.options.get("pool_size", 1)
    ))
    return BridgeEvaluator(
        list(command) + extra,
        parsed.space,
        parsed.input_shape,
        pool_size=pool_size,
        timeout=float(spec.options.get("timeout", 300.0)),
    )


def _load_document(path: str) -> dict:
    with open(path) as f:
        return yaml.safe_load(f)


def _write_outputs(out_dir: Path, engine: Engine, result) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "history.csv").write_text(engine.history_csv())
    with open(out_dir / "result.json", "w") as f:
        json.dump(result.to_json(), f, indent=2)
    with open(out_dir / "checkpoint.json", "w") as f:
        json.dump(engine.checkpoint(), f)


def cmd_evolve(args) -> int:
    try:
        document = _load_document(args.config)
        parsed = parse_config(document)
    except (OSError, yaml.YAMLError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        parsed.engine.seed = args.seed
    out_dir = Path(args.out or parsed.out_dir)
    evaluator = make_evaluator(parsed)
    try:
        engine = Engine(parsed.space, parsed.engine, evaluator)
        result = engine.run()
        _write_outputs(out_dir, engine, result)
        with open(out_dir / "config.yaml", "w") as f:
            yaml.safe_dump(emit_config(parsed), f, sort_keys=False)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        evaluator.close()
    print(f"{result.status}: best fitness "
          f"{result.best_fitness.to_json() if result.best_fitness else None}")
    return 0 if result.status == "satisfied" else 2


def cmd_resume(args) -> int:
    checkpoint_path = Path(args.checkpoint)
    config_path = args.config or checkpoint_path.parent / "config.yaml"
    try:
        document = _load_document(str(config_path))
        parsed = parse_config(document)
        doc = read_checkpoint(checkpoint_path)
    except (OSError, yaml.YAMLError, ConfigError, RestoreError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    evaluator = make_evaluator(parsed)
    try:
        engine = Engine.restore(doc, parsed.space, parsed.engine, evaluator)
        result = engine.run()
        _write_outputs(checkpoint_path.parent, engine, result)
    except RestoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        evaluator.close()
    print(f"{result.status}")
    return 0 if result.status == "satisfied" else 2


def cmd_inspect(args) -> int:
    try:
        document = _load_document(args.config)
        parsed = parse_config(document)
        with open(args.genotype) as f:
            genotype = Genotype.from_json(json.load(f))
        phenotype = decode(genotype, parsed.space, parsed.input_shape)
    except Exception as exc:  # corrupt inputs of any flavor exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1
    counts = ", ".join(f"{n} {t}" for t, n in sorted(phenotype.cell_counts.items()))
    print(f"cells: {sum(phenotype.cell_counts.values())} ({counts})")
    print(f"layers: {phenotype.layer_count}")
    print(f"parameters: {phenotype.param_count}")
    return 0


def cmd_report(args) -> int:
    try:
        with open(args.history) as f:
            lines = f.read().splitlines()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not lines or lines[0].split(",") != list(HISTORY_COLUMNS):
        print("error: not a history file", file=sys.stderr)
        return 1
    if args.json:
        rows = []
        for line in lines[1:]:
            values = line.split(",")
            rows.append(dict(zip(HISTORY_COLUMNS, values)))
        print(json.dumps(rows, indent=2))
    else:
        for line in lines:
            print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neurogrow", description="constructive neuroevolution runner"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run an evolution from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("resume", help="continue a checkpointed run")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("inspect", help="summarize a genotype JSON file")
    p.add_argument("--genotype", required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("report", help="reformat a run's history log")
    p.add_argument("--history", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--csv", action="store_true")
    group.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
