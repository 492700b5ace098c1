"""Social learning: beliefs updated by a DeGroot-style mix of own belief,
the population's average belief, and a costly private signal.

Effort a raises both the precision of the private signal (variance
1/(3 + gamma_prec * a)) and the weight k(a) = (0.5+a)/(1.5+a) the agent puts
on it.  The next belief is the grid point nearest to the linear update, so
each transition row is an exact vector of normal-CDF differences over the
nearest-point cells (outer cells absorb the tails), which sums to one by
telescoping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import ActionSpace, ModelSpec, ScalarBounds, StateSpace
from ._support import snap_to_grid


@dataclass(frozen=True)
class SocialLearningParams:
    theta: float = 0.4          # true state
    self_weight: float = 0.4    # weight c on the agent's own belief
    gamma_prec: float = 5.0     # effort-to-precision slope
    effort_cost: float = 0.1
    loss_coef: float = 20.0     # quadratic penalty on belief error
    grid_step: float = 0.05     # belief grid over [0, 1]
    max_effort: int = 5
    discount: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.self_weight < 1.0:
            raise ValueError("self_weight must lie in (0, 1)")
        if self.gamma_prec <= 0:
            raise ValueError("gamma_prec must be positive")


def signal_weight(a: float) -> float:
    return (0.5 + a) / (1.5 + a)


def _phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def build_social_learning_model(params: SocialLearningParams | None = None) -> ModelSpec:
    p = params or SocialLearningParams()
    n_grid = int(round(1.0 / p.grid_step)) + 1
    beliefs = np.round(np.arange(n_grid) * p.grid_step, 10)
    states = StateSpace(labels=tuple(float(b) for b in beliefs))
    efforts = tuple(range(p.max_effort + 1))
    actions = ActionSpace.uniform(values=tuple(float(a) for a in efforts), n_states=n_grid)

    # Nearest-point cell edges: midpoints between grid neighbours.
    edges = (beliefs[:-1] + beliefs[1:]) / 2.0

    def signal_sd(a: float) -> float:
        return math.sqrt(1.0 / (3.0 + p.gamma_prec * a))

    def update_mean(x_val: float, a: float, m: float) -> float:
        k = signal_weight(a)
        return p.self_weight * (1.0 - k) * x_val + (1.0 - p.self_weight) * (1.0 - k) * float(m)

    def payoff(x, a, m):
        return -p.loss_coef * (p.theta - beliefs[x]) ** 2 - p.effort_cost * a

    def transition_row(x, a, m):
        k = signal_weight(a)
        mu = update_mean(beliefs[x], a, m) + k * p.theta
        sd = k * signal_sd(a)
        cdf = np.array([_phi((e - mu) / sd) for e in edges])
        row = np.empty(n_grid)
        row[0] = cdf[0]
        row[1:-1] = np.diff(cdf)
        row[-1] = 1.0 - cdf[-1]
        return row

    def transition_sample(x, a, m, rng):
        k = signal_weight(a)
        zeta = rng.normal(p.theta, signal_sd(a))
        v = update_mean(beliefs[x], a, m) + k * zeta
        return snap_to_grid(v, p.grid_step, n_grid)

    def payoff_sample(x, a, m, rng):
        return payoff(x, a, m), transition_sample(x, a, m, rng)

    def interaction(probs, action_idx, m):
        return float(beliefs @ probs)   # average belief

    return ModelSpec(
        name="social-learning",
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
