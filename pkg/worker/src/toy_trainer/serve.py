"""Serve loop: one-line-JSON requests in, one-line-JSON responses out.

Request:  {"id", "phase", "budget", "seed", "phenotype"}
Response: {"id", "status", "fitness", "metrics", "message"?}

The budget is an epoch count over the configured training subset; the
incomplete and complete phases differ only in that budget. Training is
deterministic for a given (seed, phenotype) pair.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import zlib
from dataclasses import dataclass

import torch
from torch import nn

from .network import BuildError, build_network


@dataclass
class WorkerConfig:
    subset_size: int = 1000
    val_size: int = 400
    batch_size: int = 32
    learning_rate: float = 1e-2
    num_classes: int = 10

    def validate(self) -> None:
        if self.subset_size < self.batch_size:
            raise ValueError("subset_size must be at least batch_size")


_DATA_CACHE: dict[tuple[int, int], tuple] = {}


def load_split(config: WorkerConfig):
    """Digits (8x8 grayscale, 10 classes) split deterministically into a
    train subset and a validation tail. Cached per split size."""
    key = (config.subset_size, config.val_size)
    if key not in _DATA_CACHE:
        from sklearn.datasets import load_digits

        digits = load_digits()
        images = torch.tensor(digits.images, dtype=torch.float32).unsqueeze(1) / 16.0
        labels = torch.tensor(digits.target, dtype=torch.long)
        n = len(labels)
        train_n = min(config.subset_size, n - 1)
        val_n = min(config.val_size, n - train_n)
        _DATA_CACHE[key] = (
            images[:train_n], labels[:train_n],
            images[train_n:train_n + val_n], labels[train_n:train_n + val_n],
        )
    return _DATA_CACHE[key]


def _request_seed(seed: int, phenotype: dict) -> int:
    canonical = json.dumps(phenotype, sort_keys=True, separators=(",", ":"))
    return (seed * 1_000_003 + zlib.crc32(canonical.encode())) % (2 ** 31)


def _train_and_score(net: nn.Module, epochs: int, config: WorkerConfig) -> tuple[float, float]:
    x_train, y_train, x_val, y_val = load_split(config)
    loss_fn = nn.CrossEntropyLoss()
    optimizer = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    last_loss = 0.0
    net.train()
    for _ in range(epochs):
        for start in range(0, len(y_train), config.batch_size):
            xb = x_train[start:start + config.batch_size]
            yb = y_train[start:start + config.batch_size]
            optimizer.zero_grad()
            loss = loss_fn(net(xb), yb)
            if not math.isfinite(loss.item()):
                raise FloatingPointError("diverged")
            loss.backward()
            optimizer.step()
            last_loss = loss.item()
    net.eval()
    with torch.no_grad():
        predictions = net(x_val).argmax(dim=1)
        accuracy = (predictions == y_val).float().mean().item()
    return accuracy, last_loss


def handle_request(request: dict, config: WorkerConfig) -> dict:
    rid = request.get("id")

    def error(message: str) -> dict:
        return {"id": rid, "status": "error", "fitness": 0.0,
                "metrics": {}, "message": message}

    phenotype = request.get("phenotype")
    budget = request.get("budget")
    if not isinstance(phenotype, dict) or not isinstance(budget, int) or budget < 0:
        return error("build: malformed request")

    torch.manual_seed(_request_seed(int(request.get("seed", 0)), phenotype))
    try:
        net = build_network(phenotype, config.num_classes)
        accuracy, loss = _train_and_score(net, budget, config)
    except BuildError as exc:
        return error(str(exc))
    except FloatingPointError:
        return error("diverged")
    except Exception as exc:
        return error(f"build: {exc}")
    if not math.isfinite(accuracy):
        return error("diverged")
    return {
        "id": rid,
        "status": "ok",
        "fitness": accuracy,
        "metrics": {"loss": loss, "epochs": budget},
    }


def serve(stdin=None, stdout=None, config: WorkerConfig | None = None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    config = config or WorkerConfig()
    config.validate()
    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            # no usable id: emit a well-formed error frame and keep serving
            request = {}
        response = handle_request(request if isinstance(request, dict) else {}, config)
        stdout.write(json.dumps(response, separators=(",", ":")) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="phenotype training worker")
    parser.add_argument("--subset-size", type=int, default=1000)
    parser.add_argument("--val-size", type=int, default=400)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--learning-rate", type=float, default=1e-2)
    args = parser.parse_args(argv)
    torch.set_num_threads(1)
    serve(config=WorkerConfig(
        subset_size=args.subset_size,
        val_size=args.val_size,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
    ))
    return 0


if __name__ == "__main__":
    sys.exit(main())
