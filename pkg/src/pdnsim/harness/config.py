"""Scenario configuration: YAML files, defaults, ``--set`` overrides, validation."""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, get_type_hints

import yaml


class ConfigError(ValueError):
    """Validation failure; ``errors`` holds one message per offending field."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class StreamConfig:
    video_id: str = "https://victim.example/live/show.m3u8"
    duration_s: float = 120.0
    segment_duration_s: float = 10.0
    bytes_per_second: int = 30_000
    generation_seed: int = 1


@dataclass
class TrackerConfig:
    auth_mode: str = "static_key"
    whitelist: bool = False
    allowed_origins: list[str] = field(default_factory=lambda: ["victim.example"])
    policy: str = "unrestricted"
    max_candidates: int = 20
    k: int = 3
    liveness_timeout_ms: int = 10_000
    im_window_ms: int = 10_000
    token_ttl: int = 60
    token_usage_limit: int = 1


@dataclass
class LinkConfig:
    latency_ms: int = 20
    bandwidth_bps: int = 10_000_000


@dataclass
class PeerGroup:
    count: int = 1
    role: str = "honest"
    name: str = ""
    join_at_ms: int = 0
    join_spacing_ms: int = 2_000
    leave_at_ms: int | None = None
    network_type: str = "wifi"
    cellular_mode: str = "leech"
    mobile: str = "enable"
    deployment: int = 100
    defense: bool = False
    countries: dict[str, float] = field(default_factory=lambda: {"US": 1.0})
    isps: dict[str, float] = field(default_factory=lambda: {"isp0": 1.0})
    behind_nat: float = 0.8
    broken_reflection: float = 0.0
    prefetch: int = 3
    p2p_attempts: int = 4
    serve: bool = True
    preloaded: bool = False
    pollute: list[int] = field(default_factory=list)
    forge_manifest: bool = False
    sender_im: bool = False
    hash_rate: int = 100_000
    declared_origin: str = "victim.example"
    customer: str = "victim"


@dataclass
class RunConfig:
    duration_ms: int | None = None
    pollution_seed: int = 99
    sample_ms: int = 1_000


@dataclass
class ScenarioConfig:
    scenario: str
    seed: int = 0
    stream: StreamConfig = field(default_factory=StreamConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    peers: list[PeerGroup] = field(default_factory=list)
    run: RunConfig = field(default_factory=RunConfig)
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_ENUMS = {
    ("tracker", "auth_mode"): ("static_key", "token"),
    ("tracker", "policy"): ("unrestricted", "same_country", "same_isp", "relay_only"),
    ("peers", "role"): ("honest", "polluter", "harvester", "free_rider"),
    ("peers", "network_type"): ("wifi", "cellular"),
    ("peers", "cellular_mode"): ("leech", "full", "disable"),
    ("peers", "mobile"): ("enable", "disable"),
}


def _check_type(value, hint, path: str, errors: list[str]):
    origin = getattr(hint, "__origin__", None)
    args = getattr(hint, "__args__", ())
    if hint is Any:
        return value
    if origin is list:
        if not isinstance(value, list):
            errors.append(f"{path}: expected a list")
            return value
        return [_check_type(v, args[0], f"{path}[{i}]", errors) for i, v in enumerate(value)]
    if origin is dict:
        if not isinstance(value, dict):
            errors.append(f"{path}: expected a mapping")
            return value
        return {str(k): _check_type(v, args[1], f"{path}.{k}", errors) for k, v in value.items()}
    if type(None) in args:  # Optional[...]
        if value is None:
            return None
        inner = next(a for a in args if a is not type(None))
        return _check_type(value, inner, path, errors)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{path}: expected a number, got {value!r}")
        return float(value) if isinstance(value, (int, float)) and not isinstance(value, bool) else value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{path}: expected an integer, got {value!r}")
        return value
    if hint is bool:
        if not isinstance(value, bool):
            errors.append(f"{path}: expected true/false, got {value!r}")
        return value
    if hint is str:
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string, got {value!r}")
        return value
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path, errors)
    return value


def _build(cls, data, path: str, errors: list[str]):
    if not isinstance(data, dict):
        errors.append(f"{path or 'config'}: expected a mapping")
        return cls() if cls is not ScenarioConfig else None
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            errors.append(f"{path + '.' if path else ''}{key}: unknown field")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _check_type(data[f.name], hints[f.name], f"{path + '.' if path else ''}{f.name}", errors)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        errors.append(f"{path or 'config'}: {exc}")
        return None


def validate(cfg: ScenarioConfig) -> list[str]:
    errors = []
    s = cfg.stream
    if s.duration_s <= 0 or s.segment_duration_s <= 0:
        errors.append("stream: durations must be positive")
    if s.bytes_per_second <= 0:
        errors.append("stream.bytes_per_second: must be positive")
    t = cfg.tracker
    for (section, name), allowed in _ENUMS.items():
        if section == "tracker" and getattr(t, name) not in allowed:
            errors.append(f"tracker.{name}: must be one of {list(allowed)}")
    if t.k < 1:
        errors.append("tracker.k: must be >= 1")
    if t.max_candidates < 1:
        errors.append("tracker.max_candidates: must be >= 1")
    if t.token_ttl <= 0 or t.token_usage_limit < 1:
        errors.append("tracker: token_ttl > 0 and token_usage_limit >= 1 required")
    if cfg.link.latency_ms < 0 or cfg.link.bandwidth_bps <= 0:
        errors.append("link: latency_ms >= 0 and bandwidth_bps > 0 required")
    for i, g in enumerate(cfg.peers):
        p = f"peers[{i}]"
        for (section, name), allowed in _ENUMS.items():
            if section == "peers" and getattr(g, name) not in allowed:
                errors.append(f"{p}.{name}: must be one of {list(allowed)}")
        if g.count < 0:
            errors.append(f"{p}.count: must be >= 0")
        if not 0 <= g.deployment <= 100:
            errors.append(f"{p}.deployment: must be within 0-100")
        for name in ("behind_nat", "broken_reflection"):
            if not 0.0 <= getattr(g, name) <= 1.0:
                errors.append(f"{p}.{name}: must be a probability")
        for name in ("countries", "isps"):
            dist = getattr(g, name)
            if not dist or any(w < 0 for w in dist.values()) or sum(dist.values()) <= 0:
                errors.append(f"{p}.{name}: needs non-negative weights with a positive sum")
        if g.prefetch < 1 or g.p2p_attempts < 1 or g.hash_rate <= 0:
            errors.append(f"{p}: prefetch, p2p_attempts and hash_rate must be positive")
    if cfg.run.sample_ms <= 0:
        errors.append("run.sample_ms: must be positive")
    return errors


def from_dict(data: dict) -> ScenarioConfig:
    errors: list[str] = []
    if not isinstance(data, dict) or "scenario" not in data:
        raise ConfigError(["scenario: required"])
    cfg = _build(ScenarioConfig, data, "", errors)
    if cfg is not None and not errors:
        errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def load_file(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: invalid YAML: {exc}"]) from None
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return data


def apply_override(data: dict, assignment: str) -> None:
    """Apply ``a.b.0.c=value``; the value is parsed as a YAML scalar/flow node."""
    if "=" not in assignment:
        raise ConfigError([f"--set {assignment!r}: expected key=value"])
    key, raw = assignment.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    parts = key.strip().split(".")
    node: Any = data
    for i, part in enumerate(parts[:-1]):
        nxt = parts[i + 1]
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise ConfigError([f"--set {key}: bad list index {part!r}"]) from None
            continue
        if part not in node or node[part] is None:
            node[part] = [] if nxt.isdigit() else {}
        node = node[part]
    last = parts[-1]
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise ConfigError([f"--set {key}: bad list index {last!r}"]) from None
    else:
        node[last] = value


def merge(base: dict, top: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "params":
            out[k] = merge(out[k], v)
        elif k == "params" and isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **copy.deepcopy(v)}
        else:
            out[k] = copy.deepcopy(v)
    return out
