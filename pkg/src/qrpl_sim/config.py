"""Scenario configuration: dataclasses, validation and the config-file reader.

Config files are INI-style (``key = value`` lines grouped in sections)::

    [sim]
    node_count = 30
    traffic_ppm = 90
    objective_function = QRPL
    area = 100, 100

    [learning]
    alpha = 0.3

Sections: ``sim`` (top-level SimConfig fields), ``learning``, ``trickle``,
``channel``, ``mac``, ``rpl``.  Every omitted key keeps its default; unknown
sections or keys are rejected.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from .errors import ConfigInvalid

OBJECTIVE_FUNCTIONS = ("OF0", "MRHOF", "QRPL")
SHADOWING_MODES = ("per_packet", "static_per_link")


@dataclass(frozen=True)
class LearningParams:
    alpha: float = 0.3
    bf_th: float = 0.5
    theta: float = 1.0


@dataclass(frozen=True)
class TrickleParams:
    i_min: float = 3.0  # seconds
    doublings: int = 8
    phi_0: int = 2
    phi_init: int = 2
    window_x: float = 0.100  # seconds


@dataclass(frozen=True)
class ChannelParams:
    tx_power_dbm: float = 0.0
    pathloss_ref_db: float = 40.0
    pathloss_exponent: float = 3.0
    shadowing_sigma_db: float = 14.0
    rx_sensitivity_dbm: float = -85.0
    shadowing_mode: str = "per_packet"
    interference_range_factor: float = 1.0


@dataclass(frozen=True)
class MacParams:
    retransmission_limit: int = 3
    backoff_min_slots: int = 1
    backoff_max_slots: int = 8
    cca_enabled: bool = True


@dataclass(frozen=True)
class RplParams:
    eta: int = 100
    etx_window: int = 32
    etx_unknown: float = 16.0
    etx_init: float = 2.0
    mrhof_hysteresis: float = 0.5
    eviction_factor: float = 4.0  # neighbors silent for factor * i_max are dropped


@dataclass(frozen=True)
class SimConfig:
    node_count: int = 30
    area: Tuple[float, float] = (100.0, 100.0)
    traffic_ppm: float = 90.0
    packet_bytes: int = 100
    buffer_size: int = 10
    objective_function: str = "QRPL"
    ewma_beta: float = 0.3
    rng_seed: int = 1
    runs: int = 10
    slot_duration: float = 0.010
    slots_per_slotframe: int = 500
    slotframes_total: int = 1000
    warmup_slotframes: int = 50
    topology_file: Optional[str] = None
    learning: LearningParams = field(default_factory=LearningParams)
    trickle: TrickleParams = field(default_factory=TrickleParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    mac: MacParams = field(default_factory=MacParams)
    rpl: RplParams = field(default_factory=RplParams)

    @property
    def total_slots(self) -> int:
        return self.slots_per_slotframe * self.slotframes_total

    @property
    def warmup_slots(self) -> int:
        return self.slots_per_slotframe * self.warmup_slotframes

    def seconds_to_slots(self, seconds: float) -> int:
        return max(1, int(round(seconds / self.slot_duration)))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["area"] = list(self.area)
        return d

    def validate(self) -> "SimConfig":
        problems = validation_problems(self)
        if problems:
            raise ConfigInvalid(problems)
        return self


# Parameters the source experiments leave unstated; echoed into every report.
ASSUMPTIONS = (
    "area: deployment area is not stated; default 100 m x 100 m with the root at the centre",
    "channel: path-loss exponent 3.0, 40 dB at 1 m, 0 dBm tx power, -85 dBm sensitivity are assumed",
    "channel: per-packet success = Phi(mean margin / sigma), shadowing redrawn per transmission",
    "queue: backlog factor EWMA weight 0.3, sampled after every enqueue/drop/dequeue",
    "learning: exploration temperature theta = 1.0",
    "learning: parent re-drawn after every Q-update triggered by a received DIO",
    "learning: selection weights 1 - softmax(Q/theta) renormalised over the candidate set",
    "trickle: i_max = i_min * 2^8, no DIO suppression, phi starts at phi_0",
    "trickle: a reset while already at i_min keeps the pending fire (RFC 6206)",
    "trickle: standard reset on change of the node's own hop count",
    "rpl: ETX over a sliding window of 32 attempts, 2.0 before any attempt, 16 with zero successes",
    "rpl: parent candidates must advertise a hop below the node's own (hop-equal fallback)",
    "metrics: first 50 slotframes are warm-up and excluded",
    "metrics: QLR = queue drops / (queue drops + packets offered to the MAC), per node, averaged",
    "metrics: children stddev over all non-root nodes (population)",
)


def _positive(problems, name, value):
    if not value > 0:
        problems[name] = f"must be > 0, got {value!r}"


def validation_problems(cfg: SimConfig) -> dict:
    p: dict = {}
    if not isinstance(cfg.node_count, int) or cfg.node_count < 2:
        p["node_count"] = f"must be an integer >= 2 (root + 1), got {cfg.node_count!r}"
    if len(cfg.area) != 2 or not all(a > 0 for a in cfg.area):
        p["area"] = f"must be two positive lengths, got {cfg.area!r}"
    for name in ("traffic_ppm", "packet_bytes", "buffer_size", "runs", "slot_duration",
                 "slots_per_slotframe", "slotframes_total", "ewma_beta"):
        _positive(p, name, getattr(cfg, name))
    if cfg.ewma_beta > 1:
        p["ewma_beta"] = f"must be in (0, 1], got {cfg.ewma_beta!r}"
    if cfg.warmup_slotframes < 0 or cfg.warmup_slotframes >= cfg.slotframes_total:
        p["warmup_slotframes"] = "must be >= 0 and below slotframes_total"
    if cfg.objective_function not in OBJECTIVE_FUNCTIONS:
        p["objective_function"] = f"must be one of {OBJECTIVE_FUNCTIONS}, got {cfg.objective_function!r}"

    ln = cfg.learning
    if not 0 < ln.alpha <= 1:
        p["learning.alpha"] = f"must be in (0, 1], got {ln.alpha!r}"
    if not 0 < ln.bf_th < 1:
        p["learning.bf_th"] = f"must be in (0, 1), got {ln.bf_th!r}"
    _positive(p, "learning.theta", ln.theta)

    tr = cfg.trickle
    for name in ("i_min", "phi_0", "phi_init", "window_x"):
        _positive(p, f"trickle.{name}", getattr(tr, name))
    if tr.doublings < 0:
        p["trickle.doublings"] = "must be >= 0"

    ch = cfg.channel
    if ch.shadowing_sigma_db < 0:
        p["channel.shadowing_sigma_db"] = "must be >= 0"
    _positive(p, "channel.pathloss_exponent", ch.pathloss_exponent)
    _positive(p, "channel.interference_range_factor", ch.interference_range_factor)
    if ch.shadowing_mode not in SHADOWING_MODES:
        p["channel.shadowing_mode"] = f"must be one of {SHADOWING_MODES}"

    mc = cfg.mac
    if mc.retransmission_limit < 0:
        p["mac.retransmission_limit"] = "must be >= 0"
    if mc.backoff_min_slots < 1 or mc.backoff_min_slots > mc.backoff_max_slots:
        p["mac.backoff_min_slots"] = "need 1 <= backoff_min_slots <= backoff_max_slots"

    rp = cfg.rpl
    if not isinstance(rp.eta, int) or rp.eta < 2:
        p["rpl.eta"] = "must be an integer >= 2"
    _positive(p, "rpl.etx_window", rp.etx_window)
    if rp.etx_unknown < 1 or rp.etx_init < 1:
        p["rpl.etx_unknown"] = "ETX values must be >= 1"
    if rp.mrhof_hysteresis < 0:
        p["rpl.mrhof_hysteresis"] = "must be >= 0"
    _positive(p, "rpl.eviction_factor", rp.eviction_factor)
    return p


# --- config file reading ---------------------------------------------------

_SECTIONS = {
    "sim": SimConfig,
    "learning": LearningParams,
    "trickle": TrickleParams,
    "channel": ChannelParams,
    "mac": MacParams,
    "rpl": RplParams,
}
_NESTED = ("learning", "trickle", "channel", "mac", "rpl")


def _convert(raw: str, default, where: str):
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            parts = text.replace("x", ",").split(",")
            return tuple(float(x) for x in parts if x.strip())
        if default is None:  # optional string
            return text or None
        return text
    except ValueError:
        raise ConfigInvalid({where: f"cannot parse {text!r} as {type(default).__name__}"}) from None


def _key_lines(text: str) -> dict:
    lines, section = {}, None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif "=" in s and not s.startswith(("#", ";")):
            lines[(section, s.split("=", 1)[0].strip())] = no
    return lines


def parse_config_text(text: str, source: str = "<string>") -> SimConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigInvalid({"syntax": str(exc)}) from None
    lines = _key_lines(text)

    def where(section, key):
        no = lines.get((section, key))
        return f"{section}.{key}" + (f" (line {no})" if no else "")

    sections = {}
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ConfigInvalid({name: "unknown section"})
        cls = _SECTIONS[name]
        defaults = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in parser.items(name):
            if key not in defaults or key in _NESTED:
                raise ConfigInvalid({where(name, key): f"unknown key {key!r}"})
            f = defaults[key]
            default = f.default if f.default is not dataclasses.MISSING else None
            values[key] = _convert(raw, default, where(name, key))
        sections[name] = values

    nested = {n: _SECTIONS[n](**sections.get(n, {})) for n in _NESTED}
    cfg = SimConfig(**sections.get("sim", {}), **nested)
    problems = validation_problems(cfg)
    if problems:
        # attach line numbers where the offending key was written
        located = {}
        for k, msg in problems.items():
            sec, _, key = k.rpartition(".")
            located[where(sec or "sim", key) if (sec or "sim", key) in lines else k] = msg
        raise ConfigInvalid(located)
    return cfg


def parse_config(path) -> SimConfig:
    """Read a config file; omitted keys take the evaluation defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigInvalid({"path": f"cannot read {path}: {exc}"}) from None
    return parse_config_text(text, source=str(path))


def with_overrides(cfg: SimConfig, **changes) -> SimConfig:
    """Return a copy with dotted-path fields replaced, e.g. ``**{"mac.cca_enabled": False}``."""
    top, nested = {}, {}
    for key, value in changes.items():
        if "." in key:
            sec, name = key.split(".", 1)
            nested.setdefault(sec, {})[name] = value
        else:
            top[key] = value
    for sec, vals in nested.items():
        top[sec] = dataclasses.replace(getattr(cfg, sec), **vals)
    return dataclasses.replace(cfg, **top)
