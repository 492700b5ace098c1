"""Ridesharing: drivers accept or reject ride requests of varying value.

State (x1, x2): x1 counts remaining busy periods (0 = available), x2 is the
pending request type (0 = none).  Accepting a type-j request pays u_j and
sets x1 to the trip duration d_j, so a d_j = 1 trip blocks exactly one
decision period; the driver is available again once x1 counts back to 0.  A
fresh request type is drawn every period, including while busy (those draws
are payoff- and action-inert), with no-request probability equal to the
aggregate fraction of available drivers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ActionSpace, ModelSpec, ScalarBounds, StateSpace

REJECT, ACCEPT = 0, 1


@dataclass(frozen=True)
class RidesharingParams:
    payoffs: tuple = (1.0, 1.3, 10.0)   # reward by request type 1..K
    durations: tuple = (1, 2, 3)        # busy periods by request type 1..K
    discount: float = 0.95

    def __post_init__(self):
        if len(self.payoffs) != len(self.durations):
            raise ValueError("payoffs and durations must have equal length")
        if any(d < 1 for d in self.durations):
            raise ValueError("durations must be >= 1")

    @property
    def n_types(self) -> int:
        return len(self.payoffs)

    @property
    def max_duration(self) -> int:
        return max(self.durations)


def build_ridesharing_model(params: RidesharingParams | None = None) -> ModelSpec:
    p = params or RidesharingParams()
    K = p.n_types
    x1_axis = tuple(range(p.max_duration + 1))
    x2_axis = tuple(range(K + 1))
    states = StateSpace.product(x1_axis, x2_axis)
    n = states.n

    feasible = []
    for (x1, x2) in states.labels:
        feasible.append((REJECT, ACCEPT) if x1 == 0 and x2 != 0 else (REJECT,))
    actions = ActionSpace(values=(0.0, 1.0), feasible=tuple(feasible))

    durations = (0,) + tuple(p.durations)   # indexed by request type, 0 unused
    rewards = (0.0,) + tuple(p.payoffs)

    def next_x1(x1: int, x2: int, a: int) -> int:
        if x1 > 0:
            return x1 - 1
        return durations[x2] if (a == ACCEPT and x2 != 0) else 0

    def request_probs(m: float) -> np.ndarray:
        m = float(m)
        probs = np.empty(K + 1)
        probs[0] = m                       # no request when many are available
        probs[1:] = (1.0 - m) / K
        return probs

    def payoff(x, a, m):
        x1, x2 = states.decode(x)
        return rewards[x2] if (a == ACCEPT and x1 == 0 and x2 != 0) else 0.0

    def transition_row(x, a, m):
        x1, x2 = states.decode(x)
        nx1 = next_x1(x1, x2, a)
        probs = request_probs(m)
        row = np.zeros(n)
        for j in range(K + 1):
            row[states.encode((nx1, j))] = probs[j]
        return row

    def transition_sample(x, a, m, rng):
        x1, x2 = states.decode(x)
        nx1 = next_x1(x1, x2, a)
        u = rng.random()
        cdf = np.cumsum(request_probs(m))
        j = int(np.searchsorted(cdf, u, side="right"))
        j = min(j, K)
        return states.encode((nx1, j))

    def payoff_sample(x, a, m, rng):
        return payoff(x, a, m), transition_sample(x, a, m, rng)

    def interaction(probs, action_idx, m):
        avail = 0.0
        for i, (x1, _x2) in enumerate(states.labels):
            if x1 == 0:
                avail += probs[i]
        return float(avail)

    return ModelSpec(
        name="ridesharing",
        state_space=states,
        action_space=actions,
        discount=p.discount,
        payoff=payoff,
        transition_row=transition_row,
        transition_sample=transition_sample,
        interaction=interaction,
        bounds=ScalarBounds(0.0, 1.0),
        payoff_sample=payoff_sample,
        params=p,
    )
