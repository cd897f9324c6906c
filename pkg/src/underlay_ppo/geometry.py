"""User geometry and radio channel sampling for the shared-spectrum simulator.

Positions live inside a disc centered at the origin; distances are in meters
and gains are linear power ratios. A link gain combines distance-dependent
path loss with a per-draw LOS/NLOS mode decision, lognormal shadowing
(parameterized by a dB standard deviation) and unit-mean small-scale power
fading: Nakagami-m (Gamma) under LOS, exponential under NLOS. All randomness
flows through an explicit ``numpy.random.Generator`` so runs are repeatable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Path loss uses max(d, 1 m); keeps d**-alpha finite when a draw lands two
# nodes (almost) on top of each other.
DISTANCE_FLOOR_M = 1.0

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class ChannelParams:
    """LOS/NLOS path-loss, shadowing, fading and mobility parameters."""

    alpha_los: float = 2.4
    alpha_nlos: float = 3.78
    d0: float = 18.0
    d1: float = 36.0
    nakagami_m: float = 10.0
    shadow_std_los_db: float = 5.0
    shadow_std_nlos_db: float = 8.6
    max_displacement: float = 5.0

    def __post_init__(self):
        if not 0.0 < self.alpha_los < self.alpha_nlos:
            raise ValueError("need 0 < alpha_los < alpha_nlos")
        if self.d0 <= 0.0 or self.d1 <= 0.0:
            raise ValueError("d0 and d1 must be positive")
        if self.nakagami_m < 0.5:
            raise ValueError("nakagami_m must be >= 0.5")
        if self.shadow_std_los_db < 0.0 or self.shadow_std_nlos_db < 0.0:
            raise ValueError("shadowing stds must be non-negative")
        if self.max_displacement < 0.0:
            raise ValueError("max_displacement must be non-negative")


@dataclass(frozen=True, eq=False)
class Topology:
    """Transmitter/receiver positions of both systems inside one disc.

    ``p_*`` arrays have shape (k_p, 2), ``s_*`` arrays (k_s, 2). Row j of a
    tx array and row j of the matching rx array form link j.
    """

    p_tx: np.ndarray
    p_rx: np.ndarray
    s_tx: np.ndarray
    s_rx: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        for name in ("p_tx", "p_rx", "s_tx", "s_rx"):
            pts = getattr(self, name)
            if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
                raise ValueError(f"{name} must be an (n, 2) array with n >= 1")
            # allow a hair of slack for points clamped onto the boundary
            if np.any(np.linalg.norm(pts, axis=1) > self.radius * (1.0 + 1e-9)):
                raise ValueError(f"{name} contains points outside the disc")
        if self.p_tx.shape != self.p_rx.shape or self.s_tx.shape != self.s_rx.shape:
            raise ValueError("transmitter and receiver counts must match per system")

    @property
    def k_p(self) -> int:
        return self.p_tx.shape[0]

    @property
    def k_s(self) -> int:
        return self.s_tx.shape[0]


@dataclass(frozen=True, eq=False)
class GainMatrices:
    """Linear power gains for one channel draw; entry [j, k] is tx j -> rx k."""

    h_pp: np.ndarray  # (k_p, k_p)
    h_ps: np.ndarray  # (k_p, k_s)
    h_sp: np.ndarray  # (k_s, k_p)
    h_ss: np.ndarray  # (k_s, k_s)

    def __post_init__(self):
        k_p = self.h_pp.shape[0]
        k_s = self.h_ss.shape[0]
        if self.h_pp.shape != (k_p, k_p) or self.h_ss.shape != (k_s, k_s):
            raise ValueError("h_pp and h_ss must be square")
        if self.h_ps.shape != (k_p, k_s) or self.h_sp.shape != (k_s, k_p):
            raise ValueError("cross matrices must be (k_p, k_s) and (k_s, k_p)")
        for name in ("h_pp", "h_ps", "h_sp", "h_ss"):
            h = getattr(self, name)
            if h.size and (not np.all(np.isfinite(h)) or np.any(h <= 0.0)):
                raise ValueError(f"{name} entries must be positive and finite")

    @property
    def k_p(self) -> int:
        return self.h_pp.shape[0]

    @property
    def k_s(self) -> int:
        return self.h_ss.shape[0]

    def stacked(self) -> np.ndarray:
        """All gains as one (k_p + k_s) x (k_p + k_s) matrix, primary rows/cols first."""
        return np.block([[self.h_pp, self.h_ps], [self.h_sp, self.h_ss]])


def sample_disc_points(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    """Draw n points i.i.d. uniform over the disc of the given radius."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    r = radius * np.sqrt(rng.random(n))
    theta = _TWO_PI * rng.random(n)
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def clamp_to_disc(points: np.ndarray, radius: float) -> np.ndarray:
    """Radially project any point outside the disc back onto its boundary."""
    points = np.asarray(points, dtype=float)
    norms = np.linalg.norm(points, axis=-1, keepdims=True)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return points * scale


def _ring_offsets(rng: np.random.Generator, n: int, ring: tuple[float, float]) -> np.ndarray:
    lo, hi = ring
    dist = rng.uniform(lo, hi, n)
    ang = rng.uniform(0.0, _TWO_PI, n)
    return np.column_stack((dist * np.cos(ang), dist * np.sin(ang)))


def sample_topology(
    rng: np.random.Generator,
    k_p: int,
    k_s: int,
    radius: float,
    pair_ring: tuple[float, float] = (10.0, 30.0),
) -> Topology:
    """Drop both systems into the disc.

    Transmitters are i.i.d. uniform over the disc. Each receiver sits at a
    uniform angle and a uniform distance in ``pair_ring`` from its own
    transmitter, then gets clamped back into the disc, so that direct links
    are statistically much stronger than cross links.
    """
    if k_p < 1 or k_s < 1:
        raise ValueError("k_p and k_s must be >= 1")
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if not 0.0 < pair_ring[0] <= pair_ring[1]:
        raise ValueError("pair_ring must satisfy 0 < min <= max")
    p_tx = sample_disc_points(rng, k_p, radius)
    p_rx = clamp_to_disc(p_tx + _ring_offsets(rng, k_p, pair_ring), radius)
    s_tx = sample_disc_points(rng, k_s, radius)
    s_rx = clamp_to_disc(s_tx + _ring_offsets(rng, k_s, pair_ring), radius)
    return Topology(p_tx=p_tx, p_rx=p_rx, s_tx=s_tx, s_rx=s_rx, radius=radius)


def perturb_topology(
    topo: Topology, rng: np.random.Generator, max_displacement: float
) -> Topology:
    """Move every node by u * max_displacement (u uniform in [0, 1]) in a
    uniform random direction, clamping escapees back onto the disc boundary."""
    if max_displacement < 0.0:
        raise ValueError("max_displacement must be non-negative")

    def move(pts: np.ndarray) -> np.ndarray:
        n = pts.shape[0]
        dist = rng.random(n) * max_displacement
        ang = rng.uniform(0.0, _TWO_PI, n)
        moved = pts + np.column_stack((dist * np.cos(ang), dist * np.sin(ang)))
        return clamp_to_disc(moved, topo.radius)

    return Topology(
        p_tx=move(topo.p_tx),
        p_rx=move(topo.p_rx),
        s_tx=move(topo.s_tx),
        s_rx=move(topo.s_rx),
        radius=topo.radius,
    )


def los_probability(d, params: ChannelParams):
    """Probability that a link of length d is line-of-sight.

    p(d) = min(d0 / d, 1) * (1 - exp(-d / d1)) + exp(-d / d1), with p(0) = 1
    by continuity. Accepts scalars or arrays; negative distances are invalid.
    """
    arr = np.asarray(d, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("distance must be non-negative")
    far = arr > params.d0
    near = np.where(far, params.d0 / np.where(far, arr, 1.0), 1.0)
    decay = np.exp(-arr / params.d1)
    # the d <= d0 branch is exactly 1 analytically; keep it exact in floats
    p = np.where(far, near * (1.0 - decay) + decay, 1.0)
    if np.ndim(d) == 0:
        return float(p)
    return p


def path_loss(d, alpha: float):
    """Deterministic path-loss factor max(d, 1 m) ** -alpha."""
    arr = np.maximum(np.asarray(d, dtype=float), DISTANCE_FLOOR_M)
    out = arr ** (-alpha)
    if np.ndim(d) == 0:
        return float(out)
    return out


def _sample_gains(
    dists: np.ndarray, params: ChannelParams, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized gain draw for a flat array of link distances."""
    n = dists.shape[0]
    p_los = np.asarray(los_probability(dists, params))
    is_los = rng.random(n) < p_los
    alpha = np.where(is_los, params.alpha_los, params.alpha_nlos)
    shadow_db = rng.standard_normal(n) * np.where(
        is_los, params.shadow_std_los_db, params.shadow_std_nlos_db
    )
    fade_los = rng.gamma(params.nakagami_m, 1.0 / params.nakagami_m, n)
    fade_nlos = rng.exponential(1.0, n)
    fade = np.where(is_los, fade_los, fade_nlos)
    d_eff = np.maximum(dists, DISTANCE_FLOOR_M)
    return d_eff ** (-alpha) * 10.0 ** (shadow_db / 10.0) * fade


def sample_link_gain(d: float, params: ChannelParams, rng: np.random.Generator) -> float:
    """One gain draw for a single link of length d (d > 0)."""
    if d <= 0.0:
        raise ValueError("distance must be positive")
    return float(_sample_gains(np.array([d], dtype=float), params, rng)[0])


def _distance_matrix(tx: np.ndarray, rx: np.ndarray) -> np.ndarray:
    return np.linalg.norm(tx[:, None, :] - rx[None, :, :], axis=2)


def sample_gain_matrices(
    topo: Topology, params: ChannelParams, rng: np.random.Generator
) -> GainMatrices:
    """Independent gain draw for every tx/rx pair across both systems.

    Coincident pairs fall back to the 1 m distance floor instead of erroring.
    """
    tx = np.vstack((topo.p_tx, topo.s_tx))
    rx = np.vstack((topo.p_rx, topo.s_rx))
    dists = _distance_matrix(tx, rx)
    gains = _sample_gains(dists.ravel(), params, rng).reshape(dists.shape)
    kp = topo.k_p
    return GainMatrices(
        h_pp=gains[:kp, :kp].copy(),
        h_ps=gains[:kp, kp:].copy(),
        h_sp=gains[kp:, :kp].copy(),
        h_ss=gains[kp:, kp:].copy(),
    )


def pairwise_distance_features(topo: Topology, which: str) -> np.ndarray:
    """Row-major flattened tx -> rx distance matrix, scaled by 1 / radius.

    ``which`` selects the population: "primary" (k_p**2 entries), "secondary"
    (k_s**2) or "all" ((k_p + k_s)**2, primary transmitters/receivers first).
    Scaled values lie in [0, 2] because the disc has diameter 2 * radius.
    """
    if which == "primary":
        tx, rx = topo.p_tx, topo.p_rx
    elif which == "secondary":
        tx, rx = topo.s_tx, topo.s_rx
    elif which == "all":
        tx = np.vstack((topo.p_tx, topo.s_tx))
        rx = np.vstack((topo.p_rx, topo.s_rx))
    else:
        raise ValueError(f"unknown population {which!r}")
    return (_distance_matrix(tx, rx) / topo.radius).ravel()
