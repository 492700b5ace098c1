"""Model-free equilibrium learners.

The inner learners solve the agent's problem at a frozen interaction value:
tabular Q-learning with epsilon-greedy exploration and experience replay, or
projected policy gradient with direct parameterization.  The adaptive outer
loops wrap either learner in the same dead-zone bisection on the sampled
residual f_hat(m) = m - M(s_hat, g_hat).

Q-learning and the Monte Carlo sampling step touch the model only through the
restricted SampleView, so neither the expected payoff nor the enumerated
transition law can leak into the model-free path.  The exact-gradient policy
gradient variant is the exception: it differentiates through the model's own
transition law (a sampled estimator is available when that is off limits).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import dp
from .chain import monte_carlo_stationary
from .core import (
    ModelSpec,
    SampleView,
    StationaryPolicy,
    as_sample_view,
    interaction_value,
)
from .equilibrium import MfeSolution, SolverConfig, _consistency_residual


@dataclass
class LearningConfig:
    """Hyperparameters for the inner learners and the sampling step.

    updates is the Q-learning budget H, counted in environment steps (1,000
    episodes of length 100 means H = 100,000); each step replays one
    minibatch of stored tuples through the tabular update, so the table
    absorbs minibatch * H tuple-updates in total.  The constant learning
    rate matches the reference experiments; the Robbins-Monro mode
    rate_c / (1 + visits)^rate_exponent satisfies the classical step-size
    conditions and is what the convergence tests use.
    """

    updates: int = 100_000            # H
    learning_rate: float = 0.003
    rate_mode: str = "constant"       # "constant" | "robbins_monro"
    rate_c: float = 1.0
    rate_exponent: float = 0.7
    epsilon0: float = 0.9
    epsilon_min: float = 0.05
    decay_episodes: Optional[int] = None   # default: the full episode budget
    episode_length: int = 100
    replay_capacity: int = 500
    minibatch: int = 16
    mc_samples: int = 200_000         # K
    seed: int = 0
    tail_average: float = 0.0         # fraction of final updates averaged into the readout
    pg_steps: int = 2_000
    pg_rate: float = 0.05
    pg_estimator: str = "exact"       # "exact" | "sampled"
    pg_rollouts: int = 64
    pg_horizon: int = 60

    def __post_init__(self):
        if min(self.updates, self.episode_length, self.replay_capacity, self.minibatch,
               self.mc_samples, self.pg_steps) < 1:
            raise ValueError("all counts must be >= 1")
        if not (0.0 <= self.epsilon_min <= self.epsilon0 <= 1.0):
            raise ValueError("epsilon schedule must satisfy 0 <= eps_min <= eps0 <= 1")
        if self.rate_mode == "constant" and not 0.0 < self.learning_rate < 1.0:
            raise ValueError("constant learning rate must lie in (0, 1)")
        if self.rate_mode not in ("constant", "robbins_monro"):
            raise ValueError(f"unknown rate_mode {self.rate_mode!r}")
        if not 0.0 <= self.tail_average < 1.0:
            raise ValueError("tail_average must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class QTable:
    """Tabular action values at a fixed interaction value, plus update counts."""

    q: np.ndarray                    # (n_states, n_actions), NaN on infeasible
    m: float
    feasible: np.ndarray             # boolean mask
    update_counts: np.ndarray        # per-pair tuple-update counter
    env_steps: int = 0               # environment transitions consumed (= H)
    episodes: int = 0
    trace: list = field(default_factory=list)   # (episode, mean reward, epsilon)

    @property
    def total_updates(self) -> int:
        return int(self.update_counts.sum())


@dataclass
class DirectPolicy:
    """Stochastic policy sigma(x, .) over feasible actions (direct params)."""

    probs: np.ndarray                # (n_states, n_actions), zero on infeasible
    m: float
    feasible: np.ndarray
    value: Optional[float] = None

    def validate(self) -> None:
        if np.any(self.probs < 0):
            raise ValueError("policy probabilities must be non-negative")
        if np.any(self.probs[~self.feasible] != 0.0):
            raise ValueError("probability mass on infeasible action")
        sums = self.probs.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise ValueError("policy rows must sum to 1")

    def mode(self) -> StationaryPolicy:
        """Deterministic reduction: highest-probability action, ties low."""
        masked = np.where(self.feasible, self.probs, -np.inf)
        return StationaryPolicy(masked.argmax(axis=1), self.m)


def _greedy_feasible(q_row: np.ndarray, feasible_row: np.ndarray) -> int:
    masked = np.where(feasible_row, q_row, -np.inf)
    return int(masked.argmax())


def q_learning(model, m: float, cfg: LearningConfig) -> QTable:
    """Episodic asynchronous Q-learning at a frozen interaction value.

    Each environment step: epsilon-greedy action, one simulator draw, push
    the tuple into the FIFO replay ring, then replay a minibatch of stored
    tuples through the standard update with the current table.  Episodes
    restart from a uniformly drawn state, which keeps every state visited.
    Runs exactly cfg.updates environment steps and is deterministic given
    cfg.seed.

    With cfg.tail_average = w > 0 the returned table is the time-average of
    the iterates over the final fraction w of tuple-updates (Polyak-Ruppert
    readout); the recursion itself is unchanged.  The averaged table damps
    the stationary noise of the iterates and is what the oracle-comparison
    tests use.
    """
    view: SampleView = as_sample_view(model)
    rng = np.random.default_rng(cfg.seed)
    n, k = view.n_states, view.n_actions
    beta = view.discount
    feasible = view.action_space.mask(n)
    feasible_lists = [np.array(view.action_space.feasible_at(x)) for x in range(n)]
    neg_mask = np.where(feasible, 0.0, -np.inf)   # for fast feasible row-max

    Q = np.zeros((n, k))                          # table; masked view exported at the end
    counts = np.zeros((n, k), dtype=np.int64)

    H = cfg.updates
    episodes_total = max(1, -(-H // cfg.episode_length))
    decay_over = cfg.decay_episodes or episodes_total
    if cfg.epsilon0 > 0 and cfg.epsilon_min > 0:
        decay = (cfg.epsilon_min / cfg.epsilon0) ** (1.0 / decay_over)
    else:
        decay = 1.0

    buf_x = np.empty(cfg.replay_capacity, dtype=np.int64)
    buf_a = np.empty(cfg.replay_capacity, dtype=np.int64)
    buf_r = np.empty(cfg.replay_capacity, dtype=float)
    buf_y = np.empty(cfg.replay_capacity, dtype=np.int64)
    buf_size = 0
    buf_head = 0

    # Row maxima over feasible actions, maintained incrementally: replay
    # targets need max_a' Q(y, a') once per tuple and recomputing the row is
    # the dominant cost otherwise.
    row_max = np.zeros(n)

    constant_rate = cfg.rate_mode == "constant"
    lr = cfg.learning_rate
    rate_c, rate_exp = cfg.rate_c, cfg.rate_exponent
    batch = cfg.minibatch

    # Tail-average readout bookkeeping: between its updates a cell's value is
    # constant, so the time-average accumulates value * holding-time in O(1)
    # per update.
    total_tuple_updates = H * batch
    avg_start = int(round((1.0 - cfg.tail_average) * total_tuple_updates))
    averaging = cfg.tail_average > 0.0
    acc = np.zeros((n, k))
    last_u = np.full((n, k), avg_start, dtype=np.int64)
    u = 0

    epsilon = cfg.epsilon0
    episode = 0
    trace = []
    x = int(rng.integers(n))
    step_in_episode = 0
    episode_reward = 0.0

    for step in range(H):
        feas = feasible_lists[x]
        if rng.random() < epsilon:
            a = int(feas[rng.integers(len(feas))])
        else:
            a = int((Q[x] + neg_mask[x]).argmax())
        r, y = view.payoff_sample(x, a, m, rng)
        episode_reward += r

        buf_x[buf_head], buf_a[buf_head], buf_r[buf_head], buf_y[buf_head] = x, a, r, int(y)
        buf_head = (buf_head + 1) % cfg.replay_capacity
        buf_size = min(buf_size + 1, cfg.replay_capacity)

        for i in rng.integers(buf_size, size=batch):
            bx, ba = int(buf_x[i]), int(buf_a[i])
            target = buf_r[i] + beta * row_max[int(buf_y[i])]
            if constant_rate:
                gamma = lr
            else:
                gamma = min(rate_c / (1.0 + counts[bx, ba]) ** rate_exp, 1.0)
            old = Q[bx, ba]
            new = old + gamma * (target - old)
            if averaging and u >= avg_start:
                acc[bx, ba] += old * (u - last_u[bx, ba])
                last_u[bx, ba] = u
            Q[bx, ba] = new
            counts[bx, ba] += 1
            u += 1
            if new > row_max[bx]:
                row_max[bx] = new
            elif old == row_max[bx] and new < old:
                row_max[bx] = (Q[bx] + neg_mask[bx]).max()

        x = int(y)
        step_in_episode += 1
        if step_in_episode >= cfg.episode_length:
            trace.append((episode, episode_reward / step_in_episode, epsilon))
            episode += 1
            epsilon = max(cfg.epsilon_min, cfg.epsilon0 * decay**episode)
            x = int(rng.integers(n))
            step_in_episode = 0
            episode_reward = 0.0

    if averaging and total_tuple_updates > avg_start:
        acc += Q * (total_tuple_updates - last_u)
        q_out = acc / (total_tuple_updates - avg_start)
    else:
        q_out = Q

    return QTable(
        q=np.where(feasible, q_out, np.nan), m=float(m), feasible=feasible,
        update_counts=counts, env_steps=H, episodes=episode, trace=trace,
    )


def greedy_policy(q: QTable) -> StationaryPolicy:
    """Feasible argmax per state, lowest index on ties."""
    masked = np.where(q.feasible, q.q, -np.inf)
    masked = np.where(np.isnan(masked), -np.inf, masked)
    return StationaryPolicy(masked.argmax(axis=1), q.m)


def simplex_projection(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("expected a vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, len(v) + 1)
    cond = u + (1.0 - css) / j > 0
    rho = int(np.nonzero(cond)[0][-1]) + 1
    tau = (css[rho - 1] - 1.0) / rho
    return np.maximum(v - tau, 0.0)


def _policy_value_and_gradient(model: ModelSpec, sigma: np.ndarray, m: float):
    """Exact value and gradient of the discounted return under sigma.

    Direct parameterization: grad[x, a] = d(x) * Q_sigma(x, a) / (1 - beta)
    with d the normalized discounted occupancy from a uniform start.
    """
    R, T, mask = dp.model_matrices(model, m)
    n = model.n_states
    beta = model.discount
    R0 = np.where(mask, R, 0.0)
    P_sigma = np.einsum("xa,xay->xy", sigma, T)
    r_sigma = np.einsum("xa,xa->x", sigma, R0)
    V = np.linalg.solve(np.eye(n) - beta * P_sigma, r_sigma)
    Q = np.where(mask, R0 + beta * (T @ V), 0.0)
    rho0 = np.full(n, 1.0 / n)
    # d = (1 - beta) * rho0^T (I - beta P)^{-1}
    d = (1.0 - beta) * np.linalg.solve((np.eye(n) - beta * P_sigma).T, rho0)
    grad = np.where(mask, d[:, None] * Q / (1.0 - beta), 0.0)
    return float(rho0 @ V), grad


def _sampled_value_and_gradient(view: SampleView, sigma: np.ndarray, m: float,
                                cfg: LearningConfig, rng: np.random.Generator):
    """Monte Carlo estimate of the same gradient from simulator rollouts.

    Discounted occupancy is estimated by weighting visits with beta^t; Q by
    the discounted return from the first visit of each (x, a) per rollout.
    """
    n, k = view.n_states, view.n_actions
    beta = view.discount
    occ = np.zeros(n)
    q_sum = np.zeros((n, k))
    q_cnt = np.zeros((n, k))
    value_sum = 0.0
    for _ in range(cfg.pg_rollouts):
        x = int(rng.integers(n))
        rewards = []
        visits = []
        for t in range(cfg.pg_horizon):
            a = int(rng.choice(k, p=sigma[x]))
            occ[x] += beta**t
            visits.append((x, a, t))
            r, y = view.payoff_sample(x, a, m, rng)
            rewards.append(r)
            x = int(y)
        returns = np.zeros(len(rewards))
        acc = 0.0
        for t in reversed(range(len(rewards))):
            acc = rewards[t] + beta * acc
            returns[t] = acc
        value_sum += returns[0]
        seen = set()
        for (x_t, a_t, t) in visits:
            if (x_t, a_t) not in seen:
                seen.add((x_t, a_t))
                q_sum[x_t, a_t] += returns[t]
                q_cnt[x_t, a_t] += 1.0
    d = occ / occ.sum()
    q_hat = np.divide(q_sum, q_cnt, out=np.zeros_like(q_sum), where=q_cnt > 0)
    grad = d[:, None] * q_hat / (1.0 - beta)
    return value_sum / cfg.pg_rollouts, grad


def projected_policy_gradient(
    model,
    m: float,
    steps: Optional[int] = None,
    rate: Optional[float] = None,
    seed: int = 0,
    cfg: Optional[LearningConfig] = None,
    estimator: Optional[str] = None,
) -> DirectPolicy:
    """Projected gradient ascent on the direct policy parameterization.

    Each step moves sigma along the policy gradient and projects every
    state's row back onto the simplex over its feasible actions.  The exact
    estimator differentiates through the model's transition law; the sampled
    estimator only touches the simulator.  Deterministic given the seed.
    """
    cfg = cfg or LearningConfig()
    steps = cfg.pg_steps if steps is None else steps
    rate = cfg.pg_rate if rate is None else rate
    estimator = estimator or cfg.pg_estimator
    rng = np.random.default_rng(seed)

    if estimator == "sampled":
        view = as_sample_view(model)
        mask = view.action_space.mask(view.n_states)
    elif estimator == "exact":
        view = None
        mask = model.action_space.mask(model.n_states)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    n = mask.shape[0]
    feas_idx = [np.where(mask[x])[0] for x in range(n)]

    sigma = np.where(mask, 1.0, 0.0)
    sigma /= sigma.sum(axis=1, keepdims=True)

    value = None
    for _ in range(steps):
        if estimator == "exact":
            value, grad = _policy_value_and_gradient(model, sigma, m)
        else:
            value, grad = _sampled_value_and_gradient(view, sigma, m, cfg, rng)
        updated = sigma + rate * grad
        sigma = np.zeros_like(sigma)
        for x in range(n):
            sigma[x, feas_idx[x]] = simplex_projection(updated[x, feas_idx[x]])
    if estimator == "exact":
        value, _ = _policy_value_and_gradient(model, sigma, m)
    return DirectPolicy(probs=sigma, m=float(m), feasible=mask, value=value)


def _spawned_seed(base_seed: int, *key: int) -> int:
    """Stable child seed for (outer iteration, role) pairs."""
    ss = np.random.SeedSequence(base_seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _adaptive_sampled_bisection(
    model,
    scfg: SolverConfig,
    lcfg: LearningConfig,
    inner,               # (m, outer_iteration) -> StationaryPolicy
    algorithm: str,
) -> MfeSolution:
    """Dead-zone bisection on the sampled residual shared by both learners.

    Per outer iteration: learn a policy at the midpoint, simulate K
    transitions to estimate the invariant distribution, evaluate
    f_hat = m - M(s_hat, g_hat), and move the bracket endpoint only when
    |f_hat| exceeds the dead-zone delta (which is also the stopping test).
    If the outer cap is exhausted, the best-|f_hat| iterate is returned
    flagged as non-converged.
    """
    if model.bounds.dim != 1:
        raise ValueError("the adaptive learners require a scalar interaction")
    view = as_sample_view(model)
    t0 = time.perf_counter()
    lo = float(model.bounds.lo_vec[0])
    hi = float(model.bounds.hi_vec[0])
    delta = scfg.residual_tol
    x0 = 0   # minimal state index; recorded in provenance

    trace = []
    best = None
    converged = False
    outer = 0
    while outer < scfg.max_outer:
        outer += 1
        m_t = 0.5 * (lo + hi)
        g_t = inner(m_t, outer)
        mc_seed = _spawned_seed(lcfg.seed, outer, 1)
        s_hat = monte_carlo_stationary(view, g_t, m_t, lcfg.mc_samples, seed=mc_seed, x0=x0)
        m_of_s = interaction_value(model, s_hat, g_t, m_t)
        f_hat = m_t - float(m_of_s)
        trace.append({"iter": outer, "m": m_t, "f": f_hat, "lo": lo, "hi": hi, "kind": "midpoint"})
        if best is None or abs(f_hat) < abs(best[1]):
            best = (m_t, f_hat, g_t, s_hat)
        if abs(f_hat) <= delta:
            converged = True
            break
        if f_hat > delta:
            hi = m_t
        elif f_hat < -delta:
            lo = m_t

    m_star, f_star, g_star, s_star = best
    # Diagnostic only: the exact consistency residual needs the enumerated
    # kernel, which pure simulators may not provide.  The solve itself stays
    # model-free either way.
    try:
        consistency = _consistency_residual(model, g_star, s_star, m_star)
    except Exception:
        consistency = float("nan")
    return MfeSolution(
        m_star=m_star,
        policy=g_star,
        population=s_star,
        residual=abs(f_star),
        consistency_residual=consistency,
        algorithm=algorithm,
        trace=trace,
        seeds={"base": lcfg.seed},
        wall_time=time.perf_counter() - t0,
        converged=converged,
        stop_reason="residual" if converged else "max_outer",
        iterations=outer,
        model_name=model.name,
        config={**scfg.to_dict(), **lcfg.to_dict()},
        extras={"x0": x0, "model_free": algorithm == "adaptive_q_learning"},
    )


def adaptive_q_learning(model, scfg: SolverConfig, lcfg: LearningConfig) -> MfeSolution:
    """Equilibrium search with Q-learning as the inner solver (model-free)."""
    view = as_sample_view(model)

    def inner(m_t: float, outer: int) -> StationaryPolicy:
        cfg_t = LearningConfig(**{**lcfg.to_dict(), "seed": _spawned_seed(lcfg.seed, outer, 0)})
        q = q_learning(view, m_t, cfg_t)
        return greedy_policy(q)

    return _adaptive_sampled_bisection(model, scfg, lcfg, inner, "adaptive_q_learning")


def adaptive_policy_gradient(model, scfg: SolverConfig, lcfg: LearningConfig) -> MfeSolution:
    """Equilibrium search with projected policy gradient as the inner solver.

    The sampling step simulates the mode (highest-probability action) of the
    learned stochastic policy, the natural deterministic reduction used for
    the chain estimate.
    """

    def inner(m_t: float, outer: int) -> StationaryPolicy:
        sigma = projected_policy_gradient(
            model, m_t, seed=_spawned_seed(lcfg.seed, outer, 0), cfg=lcfg
        )
        return sigma.mode()

    return _adaptive_sampled_bisection(model, scfg, lcfg, inner, "adaptive_policy_gradient")
