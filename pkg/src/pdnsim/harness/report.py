"""Metrics report: canonical JSON or flat CSV.

The canonical form (sorted keys, no whitespace variance) is byte-identical
across runs with the same config and seed. Wall-clock measurements are kept
out of it and written to a ``.wallclock.json`` sidecar instead.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1

# Serialized forms of the simulated messages, echoed into every report so a
# reader can audit what crossed the (simulated) wire.
PROTOCOL = {
    "tracker_rpc": {
        "register": "credential (StaticKey{key} | Token{compact}), declared_origin, stream_id, addr, geo, isp, video_id -> peer_id",
        "candidates": "peer_id -> [[peer_id, addr]] ascending peer_id",
        "heartbeat": "peer_id -> ()",
        "declare": "peer_id, video_id, index -> ()",
        "report_im": "peer_id, IM{video_id, segment_index, digest} -> SIM | null",
        "get_sim": "peer_id, video_id, index -> SIM{im, signature} | PENDING",
        "misbehavior": "reporter_id, offender_id, video_id, index -> bool",
    },
    "tracker_push": {"report_request": "[video_id, index]"},
    "peer_messages": {
        "bind_req": "{addr, sender, sender_pid}",
        "bind_resp": "{addr, sender, sender_pid}",
        "seg_req": "{req, video, index, sender, sender_pid}",
        "seg_refuse": "{req, index, sender, sender_pid}",
        "seg_grant": "{req, index, sender, sender_pid}",
        "seg_data": "{req, index, data, t_send, im?, sender, sender_pid}",
        "relay": "[dst, kind, body, size] forwarded by the relay node",
    },
    "origin_rpc": {
        "manifest": "video_id -> Manifest",
        "segment": "video_id, index, account -> bytes",
    },
}


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    config: dict = field(default_factory=dict)
    runs: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    wallclock: dict | None = None

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def as_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "scenario": self.scenario,
            "seed": self.seed,
            "config": self.config,
            "passed": self.passed,
            "checks": self.checks,
            "summary": self.summary,
            "runs": self.runs,
            "protocol": PROTOCOL,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=1, ensure_ascii=True) + "\n"


CSV_COLUMNS = [
    "run", "node", "role", "network", "country", "registered", "peer_id", "blacklisted", "auth_error",
    "down_cdn", "down_p2p", "up_p2p", "discarded_p2p", "policy_refusals", "sim_mismatches", "stalls", "played",
    "polluted_played", "verdict", "harvested", "bogons", "latency_samples", "latency_mean_ms",
]


def to_csv(report: MetricsReport) -> str:
    """One row per peer per run, then one ``TOTAL`` row per run."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    numeric = ("down_cdn", "down_p2p", "up_p2p", "discarded_p2p", "policy_refusals", "sim_mismatches", "stalls", "played",
               "harvested", "bogons", "latency_samples")
    for run in report.runs:
        totals = dict.fromkeys(numeric, 0)
        for row in run["peers"]:
            vals = []
            for col in CSV_COLUMNS:
                if col == "run":
                    vals.append(run["label"])
                elif col == "polluted_played":
                    vals.append(" ".join(map(str, row[col])))
                else:
                    v = row[col]
                    vals.append("" if v is None else v)
            w.writerow(vals)
            for col in numeric:
                totals[col] += row[col]
        w.writerow([run["label"] if c == "run" else "TOTAL" if c == "node" else totals.get(c, "")
                    for c in CSV_COLUMNS])
    return buf.getvalue()


def emit_report(report: MetricsReport, path: str | Path, fmt: str = "json") -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    if fmt == "json":
        path.write_text(report.canonical_json(), encoding="utf-8")
    elif fmt == "csv":
        path.write_text(to_csv(report), encoding="utf-8")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if report.wallclock is not None:
        side = path.with_name(path.name + ".wallclock.json")
        side.write_text(json.dumps(report.wallclock, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path
