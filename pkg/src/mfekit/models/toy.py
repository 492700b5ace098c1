"""Two-state toy game: the minimal example on which plain fixed-point
iteration oscillates forever while bisection finds the equilibrium at once.

One action, zero payoffs; from either state the next state is 1 with
probability m and 2 with probability 1 - m, and the aggregate is the mass in
state 2.  The residual is f(m) = 2m - 1 analytically, with root 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ActionSpace, ModelSpec, ScalarBounds, StateSpace


@dataclass(frozen=True)
class TwoStateToyParams:
    """Fixed model; kept as a record so the config surface is uniform."""

    discount: float = 0.95


def build_two_state_toy(params: TwoStateToyParams | None = None) -> ModelSpec:
    params = params or TwoStateToyParams()
    states = StateSpace(labels=(1, 2))
    actions = ActionSpace.uniform(values=(0.0,), n_states=2)

    def payoff(x, a, m):
        return 0.0

    def transition_row(x, a, m):
        return np.array([float(m), 1.0 - float(m)])

    def transition_sample(x, a, m, rng):
        return 0 if rng.random() < float(m) else 1

    def payoff_sample(x, a, m, rng):
        return 0.0, transition_sample(x, a, m, rng)

    def interaction(probs, action_idx, m):
        return float(probs[1])

    return ModelSpec(
        name="two-state-toy",
        state_space=states,
        action_space=actions,
        discount=params.discount,
        payoff=payoff,
        transition_row=transition_row,
        transition_sample=transition_sample,
        interaction=interaction,
        bounds=ScalarBounds(0.0, 1.0),
        payoff_sample=payoff_sample,
        params=params,
    )
