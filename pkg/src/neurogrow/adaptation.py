"""Self-adaptive control of mutation rounds (T) and offspring count (N).

T deepens exploitation: it grows by a fixed step every generation the best
fitness fails to improve, and snaps back to its initial value on improvement.
N widens exploration: it grows only once T has overtaken it, which also
resets T. Both right-hand sides read the pre-update generation-k values.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class AdaptationConfig:
    lambda_t: int = 1  # initial T
    xi_t: int = 1      # T step
    lambda_n: int = 1  # initial N
    xi_n: int = 1      # N step
    tau_n: int = 10    # N ceiling (N may end one step above it)

    def validate(self) -> None:
        for name in ("lambda_t", "xi_t", "lambda_n", "xi_n", "tau_n"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class AdaptationState:
    t: int
    n: int
    generation: int = 0
    best_fitness_prev: float | None = None

    @classmethod
    def initial(cls, config: AdaptationConfig) -> "AdaptationState":
        return cls(t=config.lambda_t, n=config.lambda_n)


def step(state: AdaptationState, best_fitness_now: float, config: AdaptationConfig) -> AdaptationState:
    """Advance (T, N) by one generation given the current best fitness."""
    first = state.generation == 0
    improved = (
        state.best_fitness_prev is not None and best_fitness_now > state.best_fitness_prev
    )

    if first:
        n_next = config.lambda_n
    elif state.t <= state.n:
        n_next = state.n
    elif state.n <= config.tau_n:
        n_next = state.n + config.xi_n
    else:
        n_next = state.n

    if first or improved or state.t > state.n:
        t_next = config.lambda_t
    else:
        t_next = state.t + config.xi_t

    return AdaptationState(
        t=t_next,
        n=n_next,
        generation=state.generation + 1,
        best_fitness_prev=best_fitness_now,
    )
