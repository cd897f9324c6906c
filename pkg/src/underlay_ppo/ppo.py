"""PPO with generalized advantage estimation, on hand-differentiated nets.

Training runs an outer loop of rollout-then-update iterations. A rollout
collects a fixed number of transitions through the shared world (one batch
per agent, each built from that agent's own observations and rewards), then
every agent takes several full-batch Adam steps on the clipped surrogate and
on the value regression. The clip envelope (1 + sign(A) * eps) * A is treated
as a constant w.r.t. the policy, so gradient flows only through samples where
the unclipped ratio term attains the min.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .env import (
    OBS_CENTRALIZED_DIST,
    OBS_CENTRALIZED_FULL_CSI,
    OBS_PRIMARY,
    OBS_SECONDARY,
    EnvConfig,
    SpectrumSharingEnv,
    build_centralized_obs,
    observation_dim,
)
from .nets import (
    AdamState,
    GaussianPolicyNet,
    ValueNet,
    gaussian_log_prob,
    logprob_grads_from_forward,
    policy_from_arrays,
    policy_to_arrays,
    sample_action,
    value_from_arrays,
    value_to_arrays,
)

MODE_COEXIST = "coexist_dist"
MODE_CENTRALIZED_DIST = OBS_CENTRALIZED_DIST
MODE_CENTRALIZED_FULL_CSI = OBS_CENTRALIZED_FULL_CSI
MODES = (MODE_COEXIST, MODE_CENTRALIZED_DIST, MODE_CENTRALIZED_FULL_CSI)

# per-iteration scalar metrics, averaged over the rollout's steps
METRIC_FIELDS = (
    "reward_p",
    "reward_s",
    "sum_rate_p",
    "sum_rate_s",
    "sum_ee_s",
    "sum_power_p",
    "sum_power_s",
    "nqos_p",
    "delta_p",
    "delta_s",
    "active_p",
    "active_s",
)


class TrainingDiverged(RuntimeError):
    """Raised when an update produces a non-finite loss or gradient."""


@dataclass(frozen=True)
class PpoHyper:
    """Optimization hyperparameters; batch must hold whole episodes."""

    gamma: float = 0.1
    lam: float = 0.94
    clip: float = 0.1
    iters: int = 300
    batch: int = 200
    episode_len: int = 200
    update_epochs: int = 10
    lr_policy: float = 3e-4
    lr_value: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must lie in (0, 1]")
        if not 0.0 < self.clip <= 1.0:
            raise ValueError("clip must lie in (0, 1]")
        if self.iters < 1 or self.batch < 1 or self.episode_len < 1:
            raise ValueError("iters, batch and episode_len must be >= 1")
        if self.batch % self.episode_len != 0:
            raise ValueError("batch must be a multiple of episode_len")
        if self.update_epochs < 1:
            raise ValueError("update_epochs must be >= 1")
        if self.lr_policy <= 0.0 or self.lr_value <= 0.0:
            raise ValueError("learning rates must be positive")


@dataclass(frozen=True, eq=False)
class Transition:
    obs: np.ndarray
    action: np.ndarray
    log_prob_old: float
    reward: float
    done: int
    value_pred: float


@dataclass(eq=False)
class TrajectoryBatch:
    """One agent's rollout; returns/advantages are filled in post-collection."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs_old: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    bootstrap_value: float
    returns: np.ndarray | None = None
    advantages: np.ndarray | None = None

    @classmethod
    def from_transitions(cls, transitions, bootstrap_value: float):
        if not transitions:
            raise ValueError("need at least one transition")
        return cls(
            obs=np.stack([t.obs for t in transitions]),
            actions=np.stack([t.action for t in transitions]),
            log_probs_old=np.array([t.log_prob_old for t in transitions]),
            rewards=np.array([t.reward for t in transitions]),
            dones=np.array([float(t.done) for t in transitions]),
            values=np.array([t.value_pred for t in transitions]),
            bootstrap_value=float(bootstrap_value),
        )

    def __len__(self) -> int:
        return self.rewards.shape[0]


def compute_gae(batch: TrajectoryBatch, hyper: PpoHyper):
    """Backward-recursive rewards-to-go and GAE advantages (unnormalized).

    Both recursions cut at done flags. The bootstrap value stands in for the
    post-batch state's value and only matters when the final transition is
    not terminal.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    gamma, lam = hyper.gamma, hyper.lam
    returns = np.empty(n)
    advantages = np.empty(n)
    next_ret = batch.bootstrap_value
    next_adv = 0.0
    next_value = batch.bootstrap_value
    for t in range(n - 1, -1, -1):
        nonterm = 1.0 - batch.dones[t]
        returns[t] = batch.rewards[t] + gamma * nonterm * next_ret
        delta = batch.rewards[t] + gamma * nonterm * next_value - batch.values[t]
        advantages[t] = delta + gamma * lam * nonterm * next_adv
        next_ret = returns[t]
        next_adv = advantages[t]
        next_value = batch.values[t]
    return returns, advantages


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Zero-mean unit-std rescale with a floor on the std."""
    advantages = np.asarray(advantages, dtype=float)
    std = float(advantages.std())
    return (advantages - advantages.mean()) / max(std, 1e-8)


def clip_envelope(advantage, eps: float):
    """Best clipped objective value per sample: (1 + sign(A) * eps) * A."""
    advantage = np.asarray(advantage, dtype=float)
    out = (1.0 + np.sign(advantage) * eps) * advantage
    if np.ndim(out) == 0:
        return float(out)
    return out


def policy_objective(policy: GaussianPolicyNet, batch: TrajectoryBatch,
                     hyper: PpoHyper):
    """Clipped-surrogate objective, its exact gradient, and update stats."""
    mean, log_std, cache = policy.forward(batch.obs)
    logp = gaussian_log_prob(mean, log_std, batch.actions)
    ratio = np.exp(logp - batch.log_probs_old)
    adv = batch.advantages
    linear = ratio * adv
    envelope = clip_envelope(adv, hyper.clip)
    objective = float(np.minimum(linear, envelope).mean())
    # d(min)/d(theta): only the ratio branch depends on theta
    unclipped = linear <= envelope
    weights = np.where(unclipped, ratio * adv, 0.0) / len(batch)
    grads = logprob_grads_from_forward(policy, cache, mean, log_std,
                                       batch.actions, weights)
    stats = {
        "mean_ratio": float(ratio.mean()),
        "clip_fraction": float(np.mean(~unclipped)),
    }
    return objective, grads, stats


def value_objective(value: ValueNet, batch: TrajectoryBatch):
    """Mean squared error against rewards-to-go, with its exact gradient."""
    v, cache = value.forward(batch.obs)
    err = v - batch.returns
    loss = float(np.mean(err * err))
    grads = value.backward(cache, 2.0 * err / len(batch))
    return loss, grads


@dataclass(eq=False)
class Agent:
    name: str
    policy: GaussianPolicyNet
    value: ValueNet
    opt_policy: AdamState
    opt_value: AdamState


def make_agent(rng, name: str, obs_dim: int, action_dim: int,
               hyper: PpoHyper, hidden=(64, 64)) -> Agent:
    policy = GaussianPolicyNet.init(rng, obs_dim, action_dim, hidden=hidden)
    value = ValueNet.init(rng, obs_dim, hidden=hidden)
    return Agent(
        name=name,
        policy=policy,
        value=value,
        opt_policy=AdamState(policy.params(), lr=hyper.lr_policy),
        opt_value=AdamState(value.params(), lr=hyper.lr_value),
    )


def _check_finite(label: str, value: float, grads) -> None:
    if not np.isfinite(value) or any(not np.all(np.isfinite(g)) for g in grads):
        raise TrainingDiverged(f"non-finite {label} (value={value!r})")


def ppo_update(agent: Agent, batch: TrajectoryBatch, hyper: PpoHyper) -> dict:
    """Full-batch ascent on the surrogate and descent on the value error."""
    if batch.advantages is None or batch.returns is None:
        raise ValueError("batch needs returns and normalized advantages")
    stats: dict = {}
    for _ in range(hyper.update_epochs):
        objective, pgrads, pstats = policy_objective(agent.policy, batch, hyper)
        _check_finite("policy objective", objective, pgrads)
        agent.opt_policy.step(agent.policy.params(), [-g for g in pgrads])
        vloss, vgrads = value_objective(agent.value, batch)
        _check_finite("value loss", vloss, vgrads)
        agent.opt_value.step(agent.value.params(), vgrads)
        stats = dict(pstats, policy_objective=objective, value_loss=vloss)
    return stats


def save_checkpoint(path, agents, rng: np.random.Generator, iteration: int) -> None:
    """Snapshot networks, optimizer moments, rng state and iteration index."""
    arrays = {"iteration": np.array(iteration, dtype=np.int64)}
    for agent in agents:
        for k, v in policy_to_arrays(agent.policy).items():
            arrays[f"{agent.name}_pol_{k}"] = v
        for k, v in value_to_arrays(agent.value).items():
            arrays[f"{agent.name}_val_{k}"] = v
        arrays.update(agent.opt_policy.state_arrays(f"{agent.name}_adam_pol"))
        arrays.update(agent.opt_value.state_arrays(f"{agent.name}_adam_val"))
    state_json = json.dumps(rng.bit_generator.state)
    arrays["rng_state"] = np.frombuffer(state_json.encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path, agents):
    """Restore a snapshot into freshly built agents of matching shapes.

    Returns (rng, iteration). Callers must rebuild env and agents from the
    same seed they trained with so topology and shapes line up.
    """
    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files}
    for agent in agents:
        pol_prefix = f"{agent.name}_pol_"
        val_prefix = f"{agent.name}_val_"
        pol = {k[len(pol_prefix):]: v for k, v in arrays.items()
               if k.startswith(pol_prefix)}
        val = {k[len(val_prefix):]: v for k, v in arrays.items()
               if k.startswith(val_prefix)}
        if not pol or not val:
            raise ValueError(f"checkpoint lacks agent {agent.name!r}")
        for dst, src in zip(agent.policy.params(), policy_from_arrays(pol).params()):
            dst[...] = src
        for dst, src in zip(agent.value.params(), value_from_arrays(val).params()):
            dst[...] = src
        agent.opt_policy.load_state_arrays(f"{agent.name}_adam_pol", arrays)
        agent.opt_value.load_state_arrays(f"{agent.name}_adam_val", arrays)
    rng = np.random.default_rng()
    rng.bit_generator.state = json.loads(
        arrays["rng_state"].tobytes().decode("utf-8")
    )
    return rng, int(arrays["iteration"])


def build_agents(mode: str, env_cfg: EnvConfig, hyper: PpoHyper, rng) -> list[Agent]:
    k_p, k_s = env_cfg.k_p, env_cfg.k_s
    if mode == MODE_COEXIST:
        return [
            make_agent(rng, "p", observation_dim(OBS_PRIMARY, k_p, k_s), k_p, hyper),
            make_agent(rng, "s", observation_dim(OBS_SECONDARY, k_p, k_s), k_s, hyper),
        ]
    if mode in (MODE_CENTRALIZED_DIST, MODE_CENTRALIZED_FULL_CSI):
        return [make_agent(rng, "c", observation_dim(mode, k_p, k_s), k_p + k_s, hyper)]
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def _empty_batch(n: int, obs_dim: int, action_dim: int) -> TrajectoryBatch:
    return TrajectoryBatch(
        obs=np.empty((n, obs_dim)),
        actions=np.empty((n, action_dim)),
        log_probs_old=np.empty(n),
        rewards=np.empty(n),
        dones=np.empty(n),
        values=np.empty(n),
        bootstrap_value=0.0,
    )


def _collect(env: SpectrumSharingEnv, agents, mode: str, hyper: PpoHyper, rng):
    """Roll out one batch of transitions; returns (per-agent batches, metric means)."""
    n, t_len = hyper.batch, hyper.episode_len
    episodes = n // t_len
    coexist = mode == MODE_COEXIST
    batches = [
        _empty_batch(n, agent.policy.obs_dim, agent.policy.action_dim)
        for agent in agents
    ]
    sums = dict.fromkeys(METRIC_FIELDS, 0.0)
    k_p = env.cfg.k_p
    idx = 0
    for _ in range(episodes):
        world, obs_p, obs_s = env.reset(rng)
        if coexist:
            obs = [obs_p, obs_s]
        else:
            obs = [build_centralized_obs(world, mode)]
        for _ in range(t_len):
            actions = []
            for agent, batch, ob in zip(agents, batches, obs):
                act, logp = sample_action(agent.policy, ob, rng)
                batch.obs[idx] = ob
                batch.actions[idx] = act
                batch.log_probs_old[idx] = logp
                batch.values[idx] = agent.value.value(ob)
                actions.append(act)
            if coexist:
                out = env.step(world, actions[0], actions[1], rng)
                rewards = (out.reward_p, out.reward_s)
                obs = [out.obs_primary, out.obs_secondary]
            else:
                out = env.step(world, actions[0][:k_p], actions[0][k_p:], rng)
                rewards = (out.reward_p + out.reward_s,)
                obs = [build_centralized_obs(world, mode)]
            for batch, reward in zip(batches, rewards):
                batch.rewards[idx] = reward
                batch.dones[idx] = float(out.done)
            m = out.metrics
            sums["reward_p"] += out.reward_p
            sums["reward_s"] += out.reward_s
            sums["sum_rate_p"] += m.sum_rate_p
            sums["sum_rate_s"] += m.sum_rate_s
            sums["sum_ee_s"] += m.sum_ee_s
            sums["sum_power_p"] += m.sum_power_p
            sums["sum_power_s"] += m.sum_power_s
            sums["nqos_p"] += m.nqos_p
            sums["delta_p"] += m.delta_p
            sums["delta_s"] += m.delta_s
            sums["active_p"] += m.active_p
            sums["active_s"] += m.active_s
            idx += 1
    for agent, batch, ob in zip(agents, batches, obs):
        batch.bootstrap_value = agent.value.value(ob)
    means = {k: v / n for k, v in sums.items()}
    return batches, means


def train(
    env_cfg: EnvConfig,
    hyper: PpoHyper,
    mode: str,
    rng: np.random.Generator,
    on_iteration=None,
    checkpoint_path=None,
    checkpoint_every: int = 0,
    resume_from=None,
) -> list[dict]:
    """Run the outer training loop; returns one metrics row per iteration.

    Rows carry the METRIC_FIELDS averages plus per-agent update diagnostics
    (suffixed with the agent name). With the same seed and config, histories
    are bit-for-bit reproducible.
    """
    if env_cfg.episode_len != hyper.episode_len:
        raise ValueError("env and hyper disagree on episode length")
    env = SpectrumSharingEnv(env_cfg, rng)
    agents = build_agents(mode, env_cfg, hyper, rng)
    start_iter = 0
    if resume_from is not None:
        rng, start_iter = load_checkpoint(resume_from, agents)
    history: list[dict] = []
    for it in range(start_iter, hyper.iters):
        batches, means = _collect(env, agents, mode, hyper, rng)
        row = {"iter": it + 1, **means}
        for agent, batch in zip(agents, batches):
            batch.returns, raw_adv = compute_gae(batch, hyper)
            batch.advantages = normalize_advantages(raw_adv)
            stats = ppo_update(agent, batch, hyper)
            for key, val in stats.items():
                row[f"{key}_{agent.name}"] = val
        history.append(row)
        if on_iteration is not None:
            on_iteration(row)
        if checkpoint_path is not None and checkpoint_every > 0:
            if (it + 1) % checkpoint_every == 0 or it + 1 == hyper.iters:
                save_checkpoint(checkpoint_path, agents, rng, it + 1)
    return history
