"""Node configuration: one JSON file names the node, its prefixes, key
material, trust list and store directory.

Example::

    {
      "nodeId": "mpi",
      "prefixes": ["mpi"],
      "admin": "admin",
      "principals": ["dep1"],
      "storeDir": "data",
      "signingKeyFile": "node.key",
      "trustListFile": "trust.json",
      "termMapFile": null,
      "host": "127.0.0.1",
      "port": 8401
    }

Relative paths are resolved against the config file's directory. The
signing key file holds the 32-byte private seed as lowercase hex; the
trust list file is the serialized trust list (version + members).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import TermMap
from .federation import TrustList, generate_signing_key
from .node import ArchiveNode


@dataclass
class NodeConfig:
    node_id: str
    prefixes: list[str]
    admin: str = "admin"
    principals: list[str] = field(default_factory=list)
    store_dir: str | None = None
    signing_key_file: str | None = None
    trust_list_file: str | None = None
    term_map_file: str | None = None
    host: str = "127.0.0.1"
    port: int = 8401
    base_dir: Path = field(default_factory=Path)

    @classmethod
    def load(cls, path: str | Path) -> "NodeConfig":
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        return cls(
            node_id=data["nodeId"],
            prefixes=list(data["prefixes"]),
            admin=data.get("admin", "admin"),
            principals=list(data.get("principals", [])),
            store_dir=data.get("storeDir"),
            signing_key_file=data.get("signingKeyFile"),
            trust_list_file=data.get("trustListFile"),
            term_map_file=data.get("termMapFile"),
            host=data.get("host", "127.0.0.1"),
            port=int(data.get("port", 8401)),
            base_dir=path.parent,
        )

    def _resolve(self, name: str | None) -> Path | None:
        if name is None:
            return None
        path = Path(name)
        return path if path.is_absolute() else self.base_dir / path


def load_signing_key(path: Path):
    seed = bytes.fromhex(path.read_text(encoding="utf-8").strip())
    return generate_signing_key(seed)


def save_signing_key(path: Path, seed: bytes) -> None:
    path.write_text(seed.hex() + "\n", encoding="utf-8")


def load_trust_list(path: Path) -> TrustList:
    return TrustList.from_dict(json.loads(path.read_text(encoding="utf-8")))


def save_trust_list(path: Path, trust: TrustList) -> None:
    path.write_text(
        json.dumps(trust.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_term_map(path: Path) -> TermMap:
    pairs = json.loads(path.read_text(encoding="utf-8"))
    return TermMap([(a, b) for a, b in pairs])


def build_node(config: NodeConfig, clock=None) -> ArchiveNode:
    """Assemble a running node from its configuration."""
    key_path = config._resolve(config.signing_key_file)
    signing_key = load_signing_key(key_path) if key_path else None
    store_root = config._resolve(config.store_dir)
    node = ArchiveNode(
        config.node_id,
        config.prefixes,
        admin=config.admin,
        principals=config.principals,
        root=store_root,
        clock=clock,
        signing_key=signing_key,
        url=f"http://{config.host}:{config.port}",
    )
    trust_path = config._resolve(config.trust_list_file)
    if trust_path and trust_path.exists():
        for member in load_trust_list(trust_path).members():
            if member.node_id != node.node_id:
                node.enroll(member, actor=config.admin)
    term_path = config._resolve(config.term_map_file)
    if term_path and term_path.exists():
        node.set_term_map(load_term_map(term_path))
    return node
