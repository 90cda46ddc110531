"""Build a torch module from a phenotype node list.

The phenotype document carries an ordered chain of nodes (see the engine's
genotype JSON docs): convolution and linear cores with their resolved
channel/feature sizes, plus norm / activation / pooling affiliates. The
builder appends a linear classification head sized for the requested number
of classes.
"""

from __future__ import annotations

import torch
from torch import nn

SUPPORTED_KINDS = {
    "conv", "linear", "batchnorm", "groupnorm", "relu", "leakyrelu", "maxpool",
}


class BuildError(Exception):
    """The phenotype cannot be realized as a trainable network."""


def _normalize_input_shape(shape: list[int]) -> tuple[int, int, int]:
    if len(shape) == 4:  # (time, C, H, W): time axis is not supported here
        raise BuildError("unsupported: sequence inputs")
    if len(shape) == 3:
        return tuple(shape)
    if len(shape) == 1:
        return (shape[0], 1, 1)
    raise BuildError(f"build: bad input shape {shape}")


def _node_module(kind: str, attrs: dict) -> nn.Module:
    if kind == "conv":
        return nn.Conv2d(
            attrs["in_channels"], attrs["out_channels"],
            kernel_size=attrs["kernel"], stride=attrs["stride"],
            padding=attrs["padding"],
        )
    if kind == "linear":
        return nn.Linear(attrs["in_features"], attrs["out_features"])
    if kind == "batchnorm":
        return nn.BatchNorm2d(attrs["channels"])
    if kind == "groupnorm":
        return nn.GroupNorm(1, attrs["channels"])
    if kind == "relu":
        return nn.ReLU()
    if kind == "leakyrelu":
        return nn.LeakyReLU(0.2)
    if kind == "maxpool":
        return nn.MaxPool2d(kernel_size=attrs["kernel"], stride=attrs["stride"])
    raise BuildError(f"unsupported: {kind}")


def build_network(phenotype: dict, num_classes: int = 10) -> nn.Module:
    """Assemble the node chain plus a classification head; validate by a
    dummy forward pass so shape mismatches fail at build time."""
    nodes = phenotype.get("nodes", [])
    if not nodes:
        raise BuildError("build: empty phenotype")
    for node in nodes:
        if node["kind"] not in SUPPORTED_KINDS:
            raise BuildError(f"unsupported: {node['kind']}")

    shape = _normalize_input_shape(list(phenotype["input_shape"]))
    modules: list[nn.Module] = []
    flattened = False
    try:
        for node in nodes:
            if node["kind"] == "linear" and not flattened:
                modules.append(nn.Flatten())
                flattened = True
            modules.append(_node_module(node["kind"], node["attrs"]))
        net = nn.Sequential(*modules)
        with torch.no_grad():
            out = net(torch.zeros(2, *shape))
        if out.dim() > 2:
            net.append(nn.Flatten())
            out = out.flatten(1)
        net.append(nn.Linear(out.shape[1], num_classes))
        with torch.no_grad():
            net(torch.zeros(2, *shape))
    except BuildError:
        raise
    except Exception as exc:  # torch raises many types for bad shapes
        raise BuildError(f"build: {exc}")
    return net
