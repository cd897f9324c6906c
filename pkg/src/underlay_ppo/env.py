"""Shared-spectrum power-control environment.

One world is stepped jointly by both systems. The primary agent tries to keep
every licensed link above a rate threshold; the secondary agent maximizes its
energy efficiency while a single integer (the primary's NACK count from the
previous step) tells it how much trouble it is causing. Raw actions are
unconstrained real vectors; the environment clips them into [0, p_max] and
charges a penalty proportional to the clipped-away amount.

Episodes have fixed length. Node positions get a fresh small jitter around
their home locations at every reset; shadowing and fading are redrawn every
step. Observation vectors hold the previous step's metrics, so agents act on
what they last measured.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    ChannelParams,
    GainMatrices,
    Topology,
    pairwise_distance_features,
    perturb_topology,
    sample_gain_matrices,
    sample_topology,
)
from .phy import LinkMetrics, PowerAllocation, RadioConfig, evaluate_links

OBS_PRIMARY = "primary"
OBS_SECONDARY = "secondary"
OBS_CENTRALIZED_DIST = "centralized_dist"
OBS_CENTRALIZED_FULL_CSI = "centralized_full_csi"

# applied powers above this fraction of the cap count as "active" users
ACTIVE_POWER_FRACTION = 1e-3


def observation_dim(kind: str, k_p: int, k_s: int) -> int:
    """Observation vector length per agent kind."""
    if kind == OBS_PRIMARY:
        return k_p * k_p + k_p
    if kind == OBS_SECONDARY:
        return k_s * k_s + k_s + 1
    if kind in (OBS_CENTRALIZED_DIST, OBS_CENTRALIZED_FULL_CSI):
        k = k_p + k_s
        return k * k + k_p + k_s + 1
    raise ValueError(f"unknown observation kind {kind!r}")


@dataclass(frozen=True)
class EnvConfig:
    """Static description of one world: population sizes, geometry, radio."""

    k_p: int = 2
    k_s: int = 2
    radius: float = 100.0
    episode_len: int = 200
    pair_ring_min: float = 10.0
    pair_ring_max: float = 30.0
    channel: ChannelParams = field(default_factory=ChannelParams)
    radio: RadioConfig = field(default_factory=RadioConfig)

    def __post_init__(self):
        if self.k_p < 1 or self.k_s < 1:
            raise ValueError("k_p and k_s must be >= 1")
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        if self.episode_len < 1:
            raise ValueError("episode_len must be >= 1")
        if not 0.0 < self.pair_ring_min <= self.pair_ring_max:
            raise ValueError("pair ring must satisfy 0 < min <= max")


@dataclass(eq=False)
class WorldState:
    """Mutable per-episode state; exclusively owned by one rollout."""

    topology: Topology
    gains: GainMatrices
    last_rate_p: np.ndarray
    last_ee_s: np.ndarray
    last_nqos_p: float
    step_index: int
    episode_length: int


@dataclass(frozen=True)
class StepMetrics:
    """Scalar diagnostics of one environment step."""

    sum_rate_p: float
    sum_rate_s: float
    sum_ee_s: float
    sum_power_p: float
    sum_power_s: float
    nqos_p: int
    delta_p: float
    delta_s: float
    active_p: int
    active_s: int


@dataclass(frozen=True, eq=False)
class StepOutcome:
    obs_primary: np.ndarray
    obs_secondary: np.ndarray
    reward_p: float
    reward_s: float
    done: int
    metrics: StepMetrics
    links: LinkMetrics


def clamp_and_penalize(raw_action, p_max: float) -> tuple[np.ndarray, float]:
    """Clip raw powers into [0, p_max]; the penalty is the total clipped mass."""
    raw = np.asarray(raw_action, dtype=float)
    applied = np.clip(raw, 0.0, p_max)
    delta = float(np.sum(np.maximum(raw - p_max, 0.0) + np.maximum(-raw, 0.0)))
    return applied, delta


def reward_primary(rate_p: np.ndarray, rate_threshold: float, delta_p: float) -> float:
    """Sum of rate margins; scaled down and fined while actions leave the box."""
    margin = float(np.sum(np.asarray(rate_p, dtype=float) - rate_threshold))
    if delta_p > 0.0:
        return 0.1 * margin - 5.0 * delta_p
    return margin


def reward_secondary(ee_s: np.ndarray, nqos_p: float, delta_s: float) -> float:
    """Total secondary EE minus the primary-NACK fine, boundary-penalized."""
    total = float(np.sum(np.asarray(ee_s, dtype=float)))
    if delta_s > 0.0:
        return 0.1 * total - 2.0 * nqos_p - 5.0 * delta_s
    return total - 10.0 * nqos_p


def build_primary_obs(world: WorldState) -> np.ndarray:
    return np.concatenate(
        (pairwise_distance_features(world.topology, "primary"), world.last_rate_p)
    )


def build_secondary_obs(world: WorldState) -> np.ndarray:
    return np.concatenate(
        (
            pairwise_distance_features(world.topology, "secondary"),
            world.last_ee_s,
            [world.last_nqos_p],
        )
    )


def _scaled_log_gains(gains: GainMatrices) -> np.ndarray:
    """log10 gains clipped to [-20, 0] and rescaled into [-1, 1], flattened."""
    x = np.clip(np.log10(gains.stacked()), -20.0, 0.0)
    return (x / 10.0 + 1.0).ravel()


def build_centralized_obs(world: WorldState, variant: str) -> np.ndarray:
    """Single-controller observation: CSI (or distance) block plus metrics."""
    if variant == OBS_CENTRALIZED_FULL_CSI:
        head = _scaled_log_gains(world.gains)
    elif variant == OBS_CENTRALIZED_DIST:
        head = pairwise_distance_features(world.topology, "all")
    else:
        raise ValueError(f"unknown centralized variant {variant!r}")
    return np.concatenate((head, world.last_rate_p, world.last_ee_s, [world.last_nqos_p]))


class SpectrumSharingEnv:
    """Joint world for one primary and one secondary system.

    The constructor draws home positions once; every reset jitters them by at
    most ``channel.max_displacement`` (displacements do not accumulate over
    episodes) and redraws the channel.
    """

    def __init__(self, cfg: EnvConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.base_topology = sample_topology(
            rng,
            cfg.k_p,
            cfg.k_s,
            cfg.radius,
            (cfg.pair_ring_min, cfg.pair_ring_max),
        )

    def reset(
        self, rng: np.random.Generator
    ) -> tuple[WorldState, np.ndarray, np.ndarray]:
        """Start an episode; metric slots in the first observation are zero."""
        cfg = self.cfg
        topo = perturb_topology(self.base_topology, rng, cfg.channel.max_displacement)
        gains = sample_gain_matrices(topo, cfg.channel, rng)
        world = WorldState(
            topology=topo,
            gains=gains,
            last_rate_p=np.zeros(cfg.k_p),
            last_ee_s=np.zeros(cfg.k_s),
            last_nqos_p=0.0,
            step_index=0,
            episode_length=cfg.episode_len,
        )
        return world, build_primary_obs(world), build_secondary_obs(world)

    def step(
        self,
        world: WorldState,
        raw_action_p,
        raw_action_s,
        rng: np.random.Generator,
    ) -> StepOutcome:
        """Advance the world by one slot under both agents' raw power vectors."""
        if world.step_index >= world.episode_length:
            raise RuntimeError("step() called on a finished episode; reset first")
        cfg = self.cfg
        radio = cfg.radio

        raw_p = np.asarray(raw_action_p, dtype=float)
        raw_s = np.asarray(raw_action_s, dtype=float)
        if raw_p.shape != (cfg.k_p,) or raw_s.shape != (cfg.k_s,):
            raise ValueError("action vectors must have shapes (k_p,) and (k_s,)")

        world.gains = sample_gain_matrices(world.topology, cfg.channel, rng)
        applied_p, delta_p = clamp_and_penalize(raw_p, radio.p_max_p)
        applied_s, delta_s = clamp_and_penalize(raw_s, radio.p_max_s)
        links = evaluate_links(
            world.gains, PowerAllocation(applied_p, applied_s), radio
        )
        r_p = reward_primary(links.rate_p, radio.rate_threshold, delta_p)
        r_s = reward_secondary(links.ee_s, float(links.nqos_p), delta_s)

        world.last_rate_p = links.rate_p
        world.last_ee_s = links.ee_s
        world.last_nqos_p = float(links.nqos_p)
        world.step_index += 1
        done = int(world.step_index == world.episode_length)

        metrics = StepMetrics(
            sum_rate_p=float(links.rate_p.sum()),
            sum_rate_s=float(links.rate_s.sum()),
            sum_ee_s=float(links.ee_s.sum()),
            sum_power_p=float(applied_p.sum()),
            sum_power_s=float(applied_s.sum()),
            nqos_p=links.nqos_p,
            delta_p=delta_p,
            delta_s=delta_s,
            active_p=int(np.sum(applied_p > ACTIVE_POWER_FRACTION * radio.p_max_p)),
            active_s=int(np.sum(applied_s > ACTIVE_POWER_FRACTION * radio.p_max_s)),
        )
        return StepOutcome(
            obs_primary=build_primary_obs(world),
            obs_secondary=build_secondary_obs(world),
            reward_p=r_p,
            reward_s=r_s,
            done=done,
            metrics=metrics,
            links=links,
        )
