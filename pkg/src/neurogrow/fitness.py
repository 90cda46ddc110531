"""Fitness evaluators: oracles for verification and a subprocess bridge.

All fitness values are oriented so that larger is better. The two oracle
evaluators are pure functions of the genotype, which keeps engine runs fully
deterministic; the bridge forwards phenotype JSON to an external worker over
newline-delimited JSON on stdin/stdout.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
from dataclasses import dataclass, field

from .genome import (
    DecodeError,
    EncodingError,
    Genotype,
    StateSchema,
    decode,
    encode_binary,
)
from .space import AttrSpec, CellType, ConnectionRule, Organ, SearchSpace

INCOMPLETE = "incomplete"
COMPLETE = "complete"


@dataclass
class EvaluationResponse:
    genotype_id: int
    fitness: float
    status: str = "ok"  # "ok" | "error"
    metrics: dict[str, float] = field(default_factory=dict)
    message: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class Evaluator:
    """Contract the engine drives: score one genotype at a given budget."""

    def evaluate(self, genotype: Genotype, phase: str, budget: int, seed: int) -> EvaluationResponse:
        raise NotImplementedError

    def close(self) -> None:
        pass


def bitfield_space(slots: int, bits: int) -> SearchSpace:
    """A benchmark space whose state encoding is exactly ``slots * bits`` wide.

    One organ of one cell type with ``bits`` binary attributes, so every
    attribute maps to a single bit of the cell's state and each growth step
    toggles one bit.
    """
    unit = CellType(
        name="unit",
        core_kind="linear",
        attrs=tuple(AttrSpec(f"b{i}", 1, 2, 1) for i in range(bits)),
        allowed_affiliated=frozenset(),
        initial_attrs=tuple(1 for _ in range(bits)),
        initial_affiliated=(),
    )
    return SearchSpace(
        cells=(unit,),
        organs=(Organ("body", ("unit",), mutation_weight=1.0),),
        rule=ConnectionRule(
            degree=1, organ_pairs=frozenset(), cell_pairs=frozenset({("unit", "unit")})
        ),
        ceilings={"unit": slots},
    )


@dataclass
class SubsetSumProblem:
    schema: StateSchema
    target: str = ""  # defaults to all-ones of the schema width

    def __post_init__(self):
        if not self.target:
            self.target = "1" * self.schema.total_bits
        if len(self.target) != self.schema.total_bits:
            raise ValueError(
                f"target width {len(self.target)} != schema width {self.schema.total_bits}"
            )

    @classmethod
    def for_space(cls, space: SearchSpace, target: str = "") -> "SubsetSumProblem":
        return cls(schema=StateSchema.for_space(space), target=target)


def subset_sum_fitness(genotype: Genotype, problem: SubsetSumProblem) -> float:
    """Width minus Hamming distance of the genotype's state string to the target."""
    x = encode_binary(genotype, problem.schema)
    d = sum(a != b for a, b in zip(x, problem.target))
    return float(len(x) - d)


class SubsetSumEvaluator(Evaluator):
    def __init__(self, problem: SubsetSumProblem):
        self.problem = problem

    def evaluate(self, genotype, phase, budget, seed):
        try:
            fitness = subset_sum_fitness(genotype, self.problem)
        except EncodingError as exc:
            return EvaluationResponse(genotype.id, 0.0, status="error", message=str(exc))
        return EvaluationResponse(genotype.id, fitness, metrics={"hamming": len(self.problem.target) - fitness})


def target_match_fitness(
    genotype: Genotype,
    target_counts: dict[tuple[str, str], int],
    attr_targets: dict[str, tuple[int, ...]] | None = None,
    space: SearchSpace | None = None,
) -> float:
    """1 / (1 + total gap) between a genotype and a target architecture.

    The gap sums per-(organ, cell type) count differences plus, when
    ``attr_targets`` names a cell type, each cell's mean attribute offset
    normalized by its domain span.
    """
    counts = genotype.counts()
    gap = 0.0
    for key in counts.keys() | target_counts.keys():
        gap += abs(counts.get(key, 0) - target_counts.get(key, 0))
    if attr_targets:
        assert space is not None, "attr_targets requires the space for domain spans"
        for strand in genotype.strands.values():
            for gene in strand:
                target = attr_targets.get(gene.cell_type)
                if target is None:
                    continue
                spans = [max(1, a.hi - a.lo) for a in space.cell(gene.cell_type).attrs]
                offsets = [
                    abs(v - t) / s for v, t, s in zip(gene.attrs, target, spans)
                ]
                gap += sum(offsets) / len(offsets)
    return 1.0 / (1.0 + gap)


class TargetMatchEvaluator(Evaluator):
    def __init__(self, target_counts, attr_targets=None, space=None):
        self.target_counts = target_counts
        self.attr_targets = attr_targets
        self.space = space

    def evaluate(self, genotype, phase, budget, seed):
        fitness = target_match_fitness(
            genotype, self.target_counts, self.attr_targets, self.space
        )
        return EvaluationResponse(genotype.id, fitness)


class _Worker:
    """One subprocess speaking one-line-JSON requests and responses."""

    def __init__(self, command: list[str]):
        self.command = command
        self.process: subprocess.Popen | None = None
        self.start()

    def start(self) -> None:
        self.process = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def stop(self) -> None:
        if self.process is not None and self.process.poll() is None:
            self.process.kill()
            self.process.wait()

    def restart(self) -> None:
        self.stop()
        self.start()

    def request(self, payload: dict, timeout: float) -> dict:
        """Send one request line and read one response line within timeout."""
        proc = self.process
        if proc is None or proc.poll() is not None:
            raise WorkerFailure("worker exited")
        try:
            proc.stdin.write(json.dumps(payload, separators=(",", ":")) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise WorkerFailure(f"worker pipe closed: {exc}")

        box: list = []

        def read():
            box.append(proc.stdout.readline())

        reader = threading.Thread(target=read, daemon=True)
        reader.start()
        reader.join(timeout)
        if reader.is_alive():
            # leave the stuck reader behind; the process is killed either way
            raise WorkerFailure("timeout")
        line = box[0] if box else ""
        if not line:
            raise WorkerFailure("worker exited")
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise WorkerFailure(f"protocol: invalid JSON ({exc})")
        if not isinstance(doc, dict) or doc.get("id") != payload["id"]:
            raise WorkerFailure("protocol: response id mismatch")
        return doc


class WorkerFailure(Exception):
    pass


class BridgeEvaluator(Evaluator):
    """Decode genotypes and score them through a pool of worker processes.

    A failed exchange (timeout, crash, malformed response) restarts the
    worker and retries the request once; a second failure yields an error
    response, which the engine turns into sentinel-worst fitness.
    """

    def __init__(
        self,
        command: list[str],
        space: SearchSpace,
        input_shape: tuple[int, ...],
        pool_size: int = 1,
        timeout: float = 60.0,
    ):
        self.space = space
        self.input_shape = tuple(input_shape)
        self.timeout = timeout
        self._pool: queue.Queue[_Worker] = queue.Queue()
        self._workers = [_Worker(command) for _ in range(max(1, pool_size))]
        for w in self._workers:
            self._pool.put(w)

    def evaluate(self, genotype, phase, budget, seed):
        try:
            phenotype = decode(genotype, self.space, self.input_shape)
        except DecodeError as exc:
            return EvaluationResponse(genotype.id, 0.0, status="error", message=f"decode: {exc}")
        payload = {
            "id": genotype.id,
            "phase": phase,
            "budget": budget,
            "seed": seed,
            "phenotype": phenotype.to_json(),
        }
        worker = self._pool.get()
        try:
            last_error = ""
            for attempt in range(2):
                try:
                    doc = worker.request(payload, self.timeout)
                    return self._parse(genotype.id, doc)
                except WorkerFailure as exc:
                    last_error = str(exc)
                    worker.restart()
            return EvaluationResponse(genotype.id, 0.0, status="error", message=last_error)
        finally:
            self._pool.put(worker)

    @staticmethod
    def _parse(genotype_id: int, doc: dict) -> EvaluationResponse:
        status = doc.get("status", "error")
        fitness = doc.get("fitness", 0.0)
        if status == "ok" and not (
            isinstance(fitness, (int, float)) and math.isfinite(fitness)
        ):
            status, fitness = "error", 0.0
        return EvaluationResponse(
            genotype_id,
            float(fitness) if isinstance(fitness, (int, float)) else 0.0,
            status=status,
            metrics={k: v for k, v in doc.get("metrics", {}).items()},
            message=doc.get("message"),
        )

    def close(self) -> None:
        for w in self._workers:
            w.stop()
