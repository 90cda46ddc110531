"""toy_trainer: an external evaluator worker speaking one-line-JSON requests.

Reads phenotype descriptions from stdin, builds a small torch network for
each, trains it briefly on a tiny image-classification subset, and replies
with validation accuracy as fitness.
"""

from .network import BuildError, build_network
from .serve import WorkerConfig, handle_request, serve

__version__ = "0.1.0"

__all__ = ["BuildError", "WorkerConfig", "build_network", "handle_request", "serve"]
