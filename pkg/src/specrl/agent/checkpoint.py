"""Agent checkpoints: a JSON header followed by the parameter blob.

Layout::

    8 bytes  magic b"SPECRLCK"
    uint32   header length (little-endian)
    bytes    utf-8 JSON header (learner kind, update count, config, metadata)
    rest     tensor-nn array entries (parameters and normalizer statistics)
"""
from __future__ import annotations

import json
import struct

from ..nn.checkpoint import dumps_arrays, loads_arrays
from .td3 import SpectralAgent, agent_config_from_dict

MAGIC = b"SPECRLCK"


def dumps_agent(agent: SpectralAgent, meta: dict = None) -> bytes:
    header = {
        "kind": agent.cfg.kind,
        "n_updates": agent.n_updates,
        "obs_dim": agent.obs_dim,
        "act_dim": agent.act_dim,
        "action_bound": agent.action_bound,
        "rep_target_dim": agent.rep_target_dim,
        "agent": agent.config_dict(),
        "meta": meta or {},
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<I", len(raw)) + raw + dumps_arrays(agent.state_arrays())


def loads_agent(blob: bytes):
    """Rebuild the agent; returns ``(agent, header)``."""
    if blob[:8] != MAGIC:
        raise ValueError("not an agent checkpoint")
    (n,) = struct.unpack_from("<I", blob, 8)
    header = json.loads(blob[12 : 12 + n].decode("utf-8"))
    arrays = loads_arrays(blob[12 + n :])
    cfg = agent_config_from_dict(header["agent"])
    agent = SpectralAgent(cfg, header["obs_dim"], header["act_dim"], header["action_bound"],
                          rep_target_dim=header["rep_target_dim"])
    agent.load_state_arrays(arrays)
    agent.n_updates = header["n_updates"]
    return agent, header


def save_agent(path, agent: SpectralAgent, meta: dict = None) -> None:
    with open(path, "wb") as f:
        f.write(dumps_agent(agent, meta))


def load_agent(path):
    with open(path, "rb") as f:
        return loads_agent(f.read())
