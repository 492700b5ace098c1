"""Dynamic oligopoly: capacity competition and the quality ladder.

Both share the investment technology: effort a succeeds with probability
a/(1+a) (raising the state by one) and the state independently depreciates
with probability delta.  Capacity competition prices a homogeneous good by
linear inverse demand against total production; the quality ladder earns
logit-limit profits proportional to (x+1)^theta1 over the quality aggregate.
The state grid is truncated at max_state, with the upward probability folded
into staying put at the cap so rows stay stochastic and the downward drift
(delta > 1/2) keeps every policy-induced chain ergodic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ActionSpace, ModelSpec, ScalarBounds, StateSpace


@dataclass(frozen=True)
class CapacityParams:
    max_state: int = 39
    action_min: float = 0.05
    action_max: float = 1.0
    action_step: float = 0.05
    depreciation: float = 0.51
    cost_coef: float = 150.0
    cost_exponent: float = 3.0
    alpha: float = 45.0       # demand intercept
    slope: float = 1.0        # demand slope
    discount: float = 0.98

    def __post_init__(self):
        if not 0.0 < self.depreciation < 1.0:
            raise ValueError("depreciation must lie in (0, 1)")
        if not 0.0 < self.action_min <= self.action_max <= 1.0:
            raise ValueError("action grid must lie within (0, 1]")


@dataclass(frozen=True)
class QualityLadderParams:
    max_state: int = 39
    action_min: float = 0.05
    action_max: float = 1.0
    action_step: float = 0.05
    depreciation: float = 0.51
    cost_coef: float = 150.0
    cost_exponent: float = 3.0
    c_tilde: float = 1.0      # profit scale (no canonical calibration)
    theta1: float = 1.0       # quality curvature
    discount: float = 0.98

    def __post_init__(self):
        if self.c_tilde <= 0 or self.theta1 <= 0:
            raise ValueError("c_tilde and theta1 must be positive")
        if not 0.0 < self.depreciation < 1.0:
            raise ValueError("depreciation must lie in (0, 1)")


def _action_grid(p) -> tuple:
    n = int(round((p.action_max - p.action_min) / p.action_step)) + 1
    return tuple(round(p.action_min + i * p.action_step, 10) for i in range(n))


def _ladder_row(n: int, x: int, a: float, delta: float) -> np.ndarray:
    up = (1.0 - delta) * a / (1.0 + a)
    row = np.zeros(n)
    if x == 0:
        row[1] = up
        row[0] = 1.0 - up
        return row
    stay = (1.0 - delta + delta * a) / (1.0 + a)
    down = delta / (1.0 + a)
    if x == n - 1:
        # Truncation: fold the success probability into staying at the cap.
        row[x] = stay + up
        row[x - 1] = down
    else:
        row[x + 1] = up
        row[x] = stay
        row[x - 1] = down
    return row


def _ladder_sample(n: int, x: int, a: float, delta: float, rng: np.random.Generator) -> int:
    u = rng.random()
    up = (1.0 - delta) * a / (1.0 + a)
    if x == 0:
        return 1 if u < up else 0
    stay = (1.0 - delta + delta * a) / (1.0 + a)
    if x == n - 1:
        return x if u < up + stay else x - 1
    if u < up:
        return x + 1
    if u < up + stay:
        return x
    return x - 1


def _build_ladder_dynamics(p, name, payoff_fn, interaction_fn, bounds):
    n = p.max_state + 1
    states = StateSpace(labels=tuple(range(n)))
    grid = _action_grid(p)
    actions = ActionSpace.uniform(values=grid, n_states=n)
    delta = p.depreciation

    def transition_row(x, a, m):
        return _ladder_row(n, x, grid[a], delta)

    def transition_sample(x, a, m, rng):
        return _ladder_sample(n, x, grid[a], delta, rng)

    def payoff(x, a, m):
        return payoff_fn(x, grid[a], m)

    def payoff_sample(x, a, m, rng):
        return payoff_fn(x, grid[a], m), transition_sample(x, a, m, rng)

    return ModelSpec(
        name=name,
        state_space=states,
        action_space=actions,
        discount=p.discount,
        payoff=payoff,
        transition_row=transition_row,
        transition_sample=transition_sample,
        interaction=interaction_fn,
        bounds=bounds,
        payoff_sample=payoff_sample,
        params=p,
    )


def build_capacity_model(params: CapacityParams | None = None) -> ModelSpec:
    p = params or CapacityParams()
    n = p.max_state + 1
    capacities = np.arange(n, dtype=float)  # production of a state-x firm

    def payoff_fn(x, a_val, m):
        price = p.alpha - p.slope * float(m)
        return capacities[x] * price - p.cost_coef * a_val**p.cost_exponent

    def interaction(probs, action_idx, m):
        return float(capacities @ probs)  # average production in the economy

    return _build_ladder_dynamics(
        p, "capacity", payoff_fn, interaction, ScalarBounds(0.0, float(p.max_state))
    )


def build_quality_ladder_model(params: QualityLadderParams | None = None) -> ModelSpec:
    p = params or QualityLadderParams()
    n = p.max_state + 1
    quality = (np.arange(n, dtype=float) + 1.0) ** p.theta1

    def payoff_fn(x, a_val, m):
        return p.c_tilde * quality[x] / float(m) - p.cost_coef * a_val**p.cost_exponent

    def interaction(probs, action_idx, m):
        return float(quality @ probs)

    # Lower bound 1 = aggregate at a point mass on state 0; payoffs divide by m.
    return _build_ladder_dynamics(
        p, "quality-ladder", payoff_fn, interaction, ScalarBounds(1.0, float(quality[-1]))
    )
