"""Experiment harness: flat key=value configs, seed sweeps, CSV metrics.

Config files hold one ``key=value`` per line with ``#`` comments. Values are
applied in order: built-in defaults, then the selected profile and experiment
preset, then the file's lines, then command-line overrides. Unknown keys and
out-of-range values are rejected with their source location.

Each run writes one ``seed_<seed>.csv`` per seed plus ``aggregate.csv`` with
per-iteration cross-seed means. Columns are fixed: iter, seed (per-seed files
only), then the metric fields in the order defined by ``ppo.METRIC_FIELDS``.
Numbers are written locale-independently with 9 significant digits; rerunning
an identical config reproduces the files byte for byte.
"""
from __future__ import annotations

import csv
import sys
import time
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import EnvConfig
from .geometry import ChannelParams
from .phy import DEFAULT_NOISE_POWER_W, RadioConfig
from .ppo import (
    METRIC_FIELDS,
    MODE_COEXIST,
    MODES,
    PpoHyper,
    train,
)

SEED_COLUMNS = ("iter", "seed") + METRIC_FIELDS
AGGREGATE_COLUMNS = ("iter",) + METRIC_FIELDS

EXPERIMENTS = ("ex1", "ex2", "custom")
PROFILES = ("desk", "paper")


class ConfigError(ValueError):
    """Configuration problem the caller can fix; message names the culprit."""


_DEFAULTS = {
    "experiment": "custom",
    "mode": MODE_COEXIST,
    "profile": "desk",
    # Default seeds are screened so the sampled topology admits a joint QoS
    # solution at symmetric full power (some draws place an interfering
    # transmitter a few metres from a victim receiver, where no power
    # allocation can satisfy every primary link).
    "seeds": (1, 4, 7),
    "out": "",
    "force": False,
    "k_p": 2,
    "k_s": 2,
    "radius": 100.0,
    "pair_ring_min": 10.0,
    "pair_ring_max": 30.0,
    "alpha_los": 2.4,
    "alpha_nlos": 3.78,
    "d0": 18.0,
    "d1": 36.0,
    "nakagami_m": 10.0,
    "shadow_std_los_db": 5.0,
    "shadow_std_nlos_db": 8.6,
    "max_displacement": 5.0,
    "kappa_t_p": 0.1,
    "kappa_r_p": 0.1,
    "kappa_t_s": 0.1,
    "kappa_r_s": 0.1,
    "noise_power": DEFAULT_NOISE_POWER_W,
    "p_max_p": 1.0,
    "p_max_s": 1.0,
    "rate_threshold": 0.5,
    "tau": 1.0,
    "p_circuit": 0.1,
    "rho_decode": 0.1,
    "gamma": 0.1,
    "lam": 0.94,
    "clip": 0.1,
    "iters": 300,
    "batch": 200,
    "episode_len": 200,
    "update_epochs": 10,
    "lr_policy": 3e-4,
    "lr_value": 1e-3,
}

# user-count presets; scale knobs come from the profile
_EXPERIMENT_PRESETS = {
    "ex1": {"k_p": 4, "k_s": 8},
    "ex2": {"k_p": 8, "k_s": 4},
    "custom": {},
}

# "desk" is sized to converge in minutes on a laptop; the short schedule
# needs hotter learning rates than the long "paper" schedule.
_PROFILE_PRESETS = {
    "desk": {
        "iters": 300,
        "batch": 200,
        "episode_len": 200,
        "lr_policy": 1e-3,
        "lr_value": 3e-3,
    },
    "paper": {
        "iters": 4000,
        "batch": 500,
        "episode_len": 500,
        "lr_policy": 3e-4,
        "lr_value": 1e-3,
    },
}

_INT_KEYS = {
    "k_p": 1,
    "k_s": 1,
    "iters": 1,
    "batch": 1,
    "episode_len": 1,
    "update_epochs": 1,
}
_UNIT_INTERVAL_KEYS = ("gamma", "lam", "clip")  # valid range (0, 1]
_POSITIVE_KEYS = (
    "radius",
    "pair_ring_min",
    "pair_ring_max",
    "alpha_los",
    "alpha_nlos",
    "d0",
    "d1",
    "noise_power",
    "p_max",
    "p_max_p",
    "p_max_s",
    "p_circuit",
    "lr_policy",
    "lr_value",
)
_NONNEGATIVE_KEYS = (
    "shadow_std_los_db",
    "shadow_std_nlos_db",
    "max_displacement",
    "rate_threshold",
    "tau",
    "rho_decode",
)
_KAPPA_KEYS = ("kappa", "kappa_t_p", "kappa_r_p", "kappa_t_s", "kappa_r_s")
_CHOICE_KEYS = {
    "experiment": EXPERIMENTS,
    "mode": MODES,
    "profile": PROFILES,
}
_EXPANSIONS = {
    "kappa": ("kappa_t_p", "kappa_r_p", "kappa_t_s", "kappa_r_s"),
    "p_max": ("p_max_p", "p_max_s"),
}

KNOWN_KEYS = frozenset(
    set(_DEFAULTS)
    | set(_EXPANSIONS)
    | {"nakagami_m"}
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved run description."""

    experiment: str
    mode: str
    profile: str
    seeds: tuple[int, ...]
    out_dir: str | None
    env: EnvConfig
    hyper: PpoHyper
    force: bool = False
    settings: tuple[tuple[str, str], ...] = ()


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"malformed value for '{key}': {raw!r}") from None


def _parse_value(key: str, raw):
    """Parse and range-check one setting; raises ConfigError naming the key."""
    if key in _CHOICE_KEYS:
        if raw not in _CHOICE_KEYS[key]:
            raise ConfigError(
                f"invalid value for '{key}': {raw!r} (choose from "
                f"{', '.join(_CHOICE_KEYS[key])})"
            )
        return raw
    if key == "out":
        return raw
    if key == "force":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"malformed value for 'force': {raw!r}")
    if key == "seeds":
        try:
            seeds = tuple(int(part) for part in raw.split(",") if part.strip() != "")
        except ValueError:
            raise ConfigError(f"malformed value for 'seeds': {raw!r}") from None
        if not seeds:
            raise ConfigError("'seeds' must list at least one integer")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("'seeds' must not contain duplicates")
        return seeds
    if key in _INT_KEYS:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"malformed value for '{key}': {raw!r}") from None
        if value < _INT_KEYS[key]:
            raise ConfigError(f"value out of range for '{key}': must be >= {_INT_KEYS[key]}")
        return value
    value = _parse_float(key, raw)
    if key in _UNIT_INTERVAL_KEYS:
        if not 0.0 < value <= 1.0:
            raise ConfigError(f"value out of range for '{key}': must lie in (0, 1]")
    elif key in _KAPPA_KEYS:
        if not 0.0 <= value <= 0.5:
            raise ConfigError(f"value out of range for '{key}': must lie in [0, 0.5]")
    elif key in _POSITIVE_KEYS:
        if value <= 0.0:
            raise ConfigError(f"value out of range for '{key}': must be positive")
    elif key in _NONNEGATIVE_KEYS:
        if value < 0.0:
            raise ConfigError(f"value out of range for '{key}': must be non-negative")
    elif key == "nakagami_m":
        if value < 0.5:
            raise ConfigError("value out of range for 'nakagami_m': must be >= 0.5")
    return value


def read_config_file(path) -> list[tuple[str, str, str]]:
    """Read flat key=value lines; returns (key, raw value, location) triples."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    items = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"{path}:{lineno}: expected key=value, got {line.strip()!r}"
            )
        key, _, raw = stripped.partition("=")
        items.append((key.strip(), raw.strip(), f"{path}:{lineno}"))
    return items


def build_config(config_file=None, overrides=()) -> ExperimentConfig:
    """Resolve defaults, profile/experiment presets, file lines and overrides.

    ``overrides`` is an ordered sequence of (key, raw value) pairs; they are
    applied last, so command-line flags beat the config file.
    """
    items = list(read_config_file(config_file)) if config_file else []
    items += [(key, raw, "command line") for key, raw in overrides]

    parsed = []
    for key, raw, where in items:
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{where}: unknown key '{key}'")
        try:
            parsed.append((key, _parse_value(key, raw), where))
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None

    settings = dict(_DEFAULTS)
    for name, presets in (("profile", _PROFILE_PRESETS), ("experiment", _EXPERIMENT_PRESETS)):
        chosen = settings[name]
        for key, value, _ in parsed:
            if key == name:
                chosen = value
        settings[name] = chosen
        settings.update(presets[chosen])
    for key, value, _ in parsed:
        if key in _EXPANSIONS:
            for target in _EXPANSIONS[key]:
                settings[target] = value
        else:
            settings[key] = value

    try:
        channel = ChannelParams(
            alpha_los=settings["alpha_los"],
            alpha_nlos=settings["alpha_nlos"],
            d0=settings["d0"],
            d1=settings["d1"],
            nakagami_m=settings["nakagami_m"],
            shadow_std_los_db=settings["shadow_std_los_db"],
            shadow_std_nlos_db=settings["shadow_std_nlos_db"],
            max_displacement=settings["max_displacement"],
        )
        radio = RadioConfig(
            kappa_t_p=settings["kappa_t_p"],
            kappa_r_p=settings["kappa_r_p"],
            kappa_t_s=settings["kappa_t_s"],
            kappa_r_s=settings["kappa_r_s"],
            noise_power=settings["noise_power"],
            p_max_p=settings["p_max_p"],
            p_max_s=settings["p_max_s"],
            rate_threshold=settings["rate_threshold"],
            tau=settings["tau"],
            p_circuit=settings["p_circuit"],
            rho_decode=settings["rho_decode"],
        )
        env_cfg = EnvConfig(
            k_p=settings["k_p"],
            k_s=settings["k_s"],
            radius=settings["radius"],
            episode_len=settings["episode_len"],
            pair_ring_min=settings["pair_ring_min"],
            pair_ring_max=settings["pair_ring_max"],
            channel=channel,
            radio=radio,
        )
        hyper = PpoHyper(
            gamma=settings["gamma"],
            lam=settings["lam"],
            clip=settings["clip"],
            iters=settings["iters"],
            batch=settings["batch"],
            episode_len=settings["episode_len"],
            update_epochs=settings["update_epochs"],
            lr_policy=settings["lr_policy"],
            lr_value=settings["lr_value"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    rendered = tuple(
        sorted((k, _render_setting(v)) for k, v in settings.items())
    )
    return ExperimentConfig(
        experiment=settings["experiment"],
        mode=settings["mode"],
        profile=settings["profile"],
        seeds=settings["seeds"],
        out_dir=settings["out"] or None,
        env=env_cfg,
        hyper=hyper,
        force=bool(settings["force"]),
        settings=rendered,
    )


def _render_setting(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def _fmt(value) -> str:
    return format(float(value), ".9g")


def write_seed_csv(path, seed: int, history) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SEED_COLUMNS)
        for row in history:
            writer.writerow(
                [str(int(row["iter"])), str(int(seed))]
                + [_fmt(row[k]) for k in METRIC_FIELDS]
            )


def write_aggregate_csv(path, histories) -> None:
    """Per-iteration cross-seed means; seeds are averaged in sorted order."""
    ordered = sorted(histories, key=lambda pair: pair[0])
    lengths = {len(h) for _, h in ordered}
    if len(lengths) != 1:
        raise ValueError("seed histories differ in length")
    n_iter = lengths.pop()
    n_seeds = len(ordered)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(AGGREGATE_COLUMNS)
        for i in range(n_iter):
            means = [
                sum(h[i][k] for _, h in ordered) / n_seeds for k in METRIC_FIELDS
            ]
            writer.writerow([str(i + 1)] + [_fmt(v) for v in means])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        return [
            {key: float(value) for key, value in row.items()} for row in reader
        ]


def run_experiment(cfg: ExperimentConfig, verbose: bool = False) -> int:
    """Train every seed and write CSVs; returns a process-style exit status.

    Refuses to overwrite an existing result directory unless forced. A
    training failure leaves a traceback in failure_diagnostics.txt and
    returns 1.
    """
    if cfg.out_dir is None:
        raise ConfigError("no output directory configured; set --out or out=...")
    out = Path(cfg.out_dir)
    existing = sorted(out.glob("seed_*.csv"))
    if (out / "aggregate.csv").exists():
        existing.append(out / "aggregate.csv")
    if existing and not cfg.force:
        raise ConfigError(
            f"{out} already holds results ({existing[0].name}, ...); "
            "pass --force to overwrite"
        )
    out.mkdir(parents=True, exist_ok=True)
    for stale in existing:
        stale.unlink()
    (out / "config_used.txt").write_text(
        "".join(f"{k}={v}\n" for k, v in cfg.settings), encoding="utf-8"
    )

    histories = []
    try:
        for seed in cfg.seeds:
            start = time.perf_counter()
            rng = np.random.default_rng(seed)
            history = train(cfg.env, cfg.hyper, cfg.mode, rng)
            write_seed_csv(out / f"seed_{seed}.csv", seed, history)
            histories.append((seed, history))
            if verbose:
                elapsed = time.perf_counter() - start
                print(
                    f"seed {seed}: {len(history)} iterations in {elapsed:.1f}s",
                    file=sys.stderr,
                )
    except Exception:
        (out / "failure_diagnostics.txt").write_text(traceback.format_exc())
        if verbose:
            print(
                f"training failed; see {out / 'failure_diagnostics.txt'}",
                file=sys.stderr,
            )
        return 1
    write_aggregate_csv(out / "aggregate.csv", histories)
    return 0


def summarize_dir(csv_dir, window: float = 0.1) -> dict:
    """Mean of every metric over the final ``window`` fraction of iterations.

    Returns {"seeds": {seed: {metric: mean}}, "mean": {metric: mean},
    "rows_used": n}; the cross-seed mean averages the per-seed window means.
    """
    if not 0.0 < window <= 1.0:
        raise ConfigError("window must lie in (0, 1]")
    csv_dir = Path(csv_dir)
    files = sorted(csv_dir.glob("seed_*.csv"))
    if not files:
        raise ConfigError(f"no seed_*.csv files found in {csv_dir}")
    per_seed: dict[int, dict[str, float]] = {}
    rows_used = None
    for path in files:
        rows = read_metrics_csv(path)
        if not rows:
            raise ConfigError(f"{path} is empty")
        k = max(1, int(round(len(rows) * window)))
        tail = rows[-k:]
        seed = int(rows[0]["seed"])
        per_seed[seed] = {
            m: sum(r[m] for r in tail) / len(tail) for m in METRIC_FIELDS
        }
        rows_used = k
    seeds = sorted(per_seed)
    overall = {
        m: sum(per_seed[s][m] for s in seeds) / len(seeds) for m in METRIC_FIELDS
    }
    return {"seeds": per_seed, "mean": overall, "rows_used": rows_used}


def format_summary(summary: dict) -> str:
    seeds = sorted(summary["seeds"])
    header = ["metric"] + [f"seed {s}" for s in seeds] + ["mean"]
    width = max(14, max(len(m) for m in METRIC_FIELDS) + 2)
    lines = [
        f"final-window means over {summary['rows_used']} iterations",
        "".join(f"{h:>{width}}" for h in header),
    ]
    for metric in METRIC_FIELDS:
        cells = [f"{metric:>{width}}"]
        for s in seeds:
            cells.append(f"{summary['seeds'][s][metric]:>{width}.6g}")
        cells.append(f"{summary['mean'][metric]:>{width}.6g}")
        lines.append("".join(cells))
    return "\n".join(lines)
