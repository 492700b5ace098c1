import numpy as np
import pytest

from mfekit import models
from mfekit.core import ActionSpace, ModelSpec, ScalarBounds, StateSpace


@pytest.fixture(scope="session")
def toy_model():
    return models.build_two_state_toy()


@pytest.fixture(scope="session")
def inventory_model():
    return models.build_inventory_model()


@pytest.fixture(scope="session")
def capacity_model():
    return models.build_capacity_model()


@pytest.fixture(scope="session")
def all_models():
    return {
        "two-state-toy": models.build_two_state_toy(),
        "inventory": models.build_inventory_model(),
        "capacity": models.build_capacity_model(),
        "quality-ladder": models.build_quality_ladder_model(),
        "ridesharing": models.build_ridesharing_model(),
        "social-learning": models.build_social_learning_model(),
        "reputation": models.build_reputation_model(),
    }


def make_random_model(rng: np.random.Generator, n_states=4, n_actions=3, discount=0.9):
    """A dense random model for property tests: random payoffs and rows."""
    payoffs = rng.normal(size=(n_states, n_actions))
    rows = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    cdfs = np.cumsum(rows, axis=2)

    def payoff(x, a, m):
        return float(payoffs[x, a])

    def transition_row(x, a, m):
        return rows[x, a].copy()

    def transition_sample(x, a, m, rng_):
        return int(np.searchsorted(cdfs[x, a], rng_.random(), side="right"))

    def payoff_sample(x, a, m, rng_):
        return payoff(x, a, m), transition_sample(x, a, m, rng_)

    def interaction(probs, action_idx, m):
        return float(np.arange(n_states) @ probs / max(n_states - 1, 1))

    return ModelSpec(
        name="random-test",
        state_space=StateSpace(labels=tuple(range(n_states))),
        action_space=ActionSpace.uniform(tuple(float(a) for a in range(n_actions)), n_states),
        discount=discount,
        payoff=payoff,
        transition_row=transition_row,
        transition_sample=transition_sample,
        interaction=interaction,
        bounds=ScalarBounds(0.0, 1.0),
        payoff_sample=payoff_sample,
    )
