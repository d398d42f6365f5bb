"""Persistent prefix-KV-cache store with longest-prefix matching.

No real model runs here, so blob bytes are synthesized as a keyed
deterministic stream: each token position contributes one fixed-size block
derived by hash expansion from (geometry name, token id, position).  That
preserves the one structural property cache-reuse correctness depends on —
the blob of a prefix is a byte-prefix of the blob of any extension — making
reuse testable without weights.

Layout on disk:
  <root>/manifest.json          entry table + geometry, swapped atomically
  <root>/blobs/<keyhash>.kv     16-byte magic/version header, geometry
                                descriptor, then the raw KV byte stream

Concurrent readers are safe; `precompute` is the single writer and only
publishes by replacing the manifest, so readers never observe a torn store.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

MAGIC = b"AGENTKVCACHE"  # 12 bytes; followed by a 4-byte version field
VERSION = 1

TAG_STATIC = "static"
TAG_CLUSTER_COMBINATION = "cluster_combination"
TAG_ARBITER_STATIC = "arbiter_static"
_TAGS = {TAG_STATIC, TAG_CLUSTER_COMBINATION, TAG_ARBITER_STATIC}


class StoreError(RuntimeError):
    pass


class IntegrityError(StoreError):
    """Blob missing, truncated, or failing its checksum."""


@dataclass(frozen=True)
class ModelGeometry:
    """Shape facts needed for KV byte accounting and latency modeling."""

    name: str
    layers: int
    kv_heads: int
    head_dim: int
    bytes_per_element: int
    params_bytes: int

    def __post_init__(self):
        for f in ("layers", "kv_heads", "head_dim", "params_bytes"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")
        if self.bytes_per_element not in (2, 4):
            raise ValueError("bytes_per_element must be 2 or 4")

    @property
    def kv_bytes_per_token(self) -> int:
        # keys and values, per layer, per kv head
        return self.layers * 2 * self.kv_heads * self.head_dim * self.bytes_per_element

    @property
    def params(self) -> int:
        """Parameter count, assuming weights share the cache element width."""
        return self.params_bytes // self.bytes_per_element

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "layers": self.layers,
            "kv_heads": self.kv_heads,
            "head_dim": self.head_dim,
            "bytes_per_element": self.bytes_per_element,
            "params_bytes": self.params_bytes,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelGeometry":
        return cls(**{k: doc[k] for k in ("name", "layers", "kv_heads", "head_dim", "bytes_per_element", "params_bytes")})


def kv_size(token_count: int, geometry: ModelGeometry) -> int:
    """Bytes of KV cache a `token_count`-token prefix occupies."""
    if token_count < 0:
        raise ValueError("token_count must be non-negative")
    return token_count * geometry.kv_bytes_per_token


def _key_hash(prefix) -> str:
    payload = ",".join(str(t) for t in prefix).encode()
    return hashlib.sha256(payload).hexdigest()


def _token_block(geometry: ModelGeometry, token: int, position: int) -> bytes:
    """Deterministic pseudo-KV bytes for one token position."""
    size = geometry.kv_bytes_per_token
    out = bytearray()
    counter = 0
    seed = f"{geometry.name}|{token}|{position}".encode()
    while len(out) < size:
        out.extend(hashlib.sha256(seed + b"|" + str(counter).encode()).digest())
        counter += 1
    return bytes(out[:size])


def prefix_blob(prefix, geometry: ModelGeometry) -> bytes:
    """The full synthetic KV stream for a token prefix.

    Pure function of (geometry, prefix); by construction the stream for a
    prefix is a byte-prefix of the stream for any extension of it.
    """
    return b"".join(_token_block(geometry, tok, pos) for pos, tok in enumerate(prefix))


def _blob_file_bytes(prefix, geometry: ModelGeometry) -> bytes:
    header = MAGIC + VERSION.to_bytes(4, "little")
    descriptor = json.dumps(geometry.to_dict(), sort_keys=True).encode()
    return header + len(descriptor).to_bytes(4, "little") + descriptor + prefix_blob(prefix, geometry)


def _split_blob_file(raw: bytes) -> bytes:
    if len(raw) < 20 or raw[:12] != MAGIC:
        raise IntegrityError("bad blob header")
    version = int.from_bytes(raw[12:16], "little")
    if version != VERSION:
        raise IntegrityError(f"unsupported blob version {version}")
    desc_len = int.from_bytes(raw[16:20], "little")
    return raw[20 + desc_len:]


@dataclass(frozen=True)
class CacheEntry:
    key: tuple[int, ...]
    token_count: int
    byte_size: int
    tag: str
    blob_name: str
    checksum: str

    @property
    def key_hash(self) -> str:
        return _key_hash(self.key)


class _TrieNode:
    __slots__ = ("children", "best")

    def __init__(self):
        self.children: dict[int, _TrieNode] = {}
        # Entry with the shortest (then lexicographically smallest) key whose
        # path passes through this node; serving it tail-truncated wastes the
        # least loaded data.
        self.best: CacheEntry | None = None


class KVStore:
    """A directory-backed store of precomputed prefix KV blobs."""

    def __init__(self, root):
        self.root = Path(root)
        self.geometry: ModelGeometry | None = None
        self.entries: dict[str, CacheEntry] = {}
        self._trie = _TrieNode()
        if self.manifest_path.exists():
            self._load_manifest()

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    @property
    def blob_dir(self) -> Path:
        return self.root / "blobs"

    @property
    def total_bytes(self) -> int:
        return sum(e.byte_size for e in self.entries.values())

    def _load_manifest(self):
        doc = json.loads(self.manifest_path.read_text())
        self.geometry = ModelGeometry.from_dict(doc["geometry"])
        for rec in doc["entries"]:
            entry = CacheEntry(
                key=tuple(rec["key"]),
                token_count=rec["token_count"],
                byte_size=rec["byte_size"],
                tag=rec["tag"],
                blob_name=rec["blob"],
                checksum=rec["checksum"],
            )
            self.entries[entry.key_hash] = entry
        self._rebuild_trie()

    def _rebuild_trie(self):
        self._trie = _TrieNode()
        for entry in self.entries.values():
            self._insert(entry)

    def _insert(self, entry: CacheEntry):
        def better(a: CacheEntry | None, b: CacheEntry) -> CacheEntry:
            if a is None:
                return b
            return min(a, b, key=lambda e: (e.token_count, e.key))

        node = self._trie
        node.best = better(node.best, entry)
        for tok in entry.key:
            node = node.children.setdefault(tok, _TrieNode())
            node.best = better(node.best, entry)

    def precompute(self, prefixes, geometry: ModelGeometry, tag: str = TAG_STATIC) -> list[CacheEntry]:
        """Persist one entry per distinct prefix; idempotent.

        Merges into the existing store (same-key entries are overwritten
        identically).  Blobs are written before the manifest is atomically
        replaced, so a failure mid-way leaves the published store unchanged.
        """
        prefixes = [tuple(p) for p in prefixes]
        if not prefixes:
            raise ValueError("precompute requires at least one prefix")
        if any(len(p) == 0 for p in prefixes):
            raise ValueError("prefixes must be non-empty token sequences")
        if tag not in _TAGS:
            raise ValueError(f"unknown tag '{tag}'")
        if self.geometry is not None and geometry != self.geometry:
            raise StoreError("store already holds blobs for a different geometry")

        self.blob_dir.mkdir(parents=True, exist_ok=True)
        new_entries = dict(self.entries)
        created = []
        for prefix in dict.fromkeys(prefixes):  # dedup, first occurrence wins
            khash = _key_hash(prefix)
            raw = _blob_file_bytes(prefix, geometry)
            blob_name = f"{khash}.kv"
            stream_size = kv_size(len(prefix), geometry)
            entry = CacheEntry(
                key=prefix,
                token_count=len(prefix),
                byte_size=stream_size,
                tag=tag,
                blob_name=blob_name,
                checksum=hashlib.sha256(raw).hexdigest(),
            )
            (self.blob_dir / blob_name).write_bytes(raw)
            new_entries[khash] = entry
            created.append(entry)

        self._write_manifest(geometry, new_entries)
        self.geometry = geometry
        self.entries = new_entries
        self._rebuild_trie()
        return created

    def _write_manifest(self, geometry: ModelGeometry, entries: dict[str, CacheEntry]):
        doc = {
            "version": VERSION,
            "geometry": geometry.to_dict(),
            "entries": [
                {
                    "key_hash": khash,
                    "key": list(e.key),
                    "token_count": e.token_count,
                    "byte_size": e.byte_size,
                    "tag": e.tag,
                    "blob": e.blob_name,
                    "checksum": e.checksum,
                }
                for khash, e in sorted(entries.items())
            ],
        }
        tmp = self.manifest_path.with_suffix(".json.tmp")
        self.root.mkdir(parents=True, exist_ok=True)
        tmp.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
        os.replace(tmp, self.manifest_path)

    def longest_cached_prefix(self, prompt) -> tuple[CacheEntry | None, int]:
        """Entry and token count of the best reusable prefix for `prompt`.

        An entry covers min(len(entry.key), first-mismatch position) leading
        tokens of the prompt: reuse halts at the first token mismatch, but an
        entry longer than the match still serves its matching head with the
        tail cut off.  Returns (None, 0) when nothing matches.
        """
        node = self._trie
        depth = 0
        best_node = None
        for tok in prompt:
            child = node.children.get(tok)
            if child is None:
                break
            node = child
            depth += 1
            best_node = node
        if best_node is None or best_node.best is None:
            return None, 0
        return best_node.best, depth

    def load_blob(self, entry: CacheEntry) -> bytes:
        """The persisted KV stream for `entry`, verified against its checksum."""
        path = self.blob_dir / entry.blob_name
        if not path.exists():
            raise IntegrityError(f"blob {entry.blob_name} missing")
        raw = path.read_bytes()
        if hashlib.sha256(raw).hexdigest() != entry.checksum:
            raise IntegrityError(f"blob {entry.blob_name} failed checksum")
        stream = _split_blob_file(raw)
        if len(stream) != entry.byte_size:
            raise IntegrityError(f"blob {entry.blob_name} has wrong payload size")
        return stream

    def account(self, entry: CacheEntry, ssd_bandwidth: float) -> tuple[int, float]:
        """(bytes, modeled SSD load seconds) for pulling `entry` into memory."""
        if entry.key_hash not in self.entries:
            raise StoreError("entry not present in manifest")
        if ssd_bandwidth <= 0:
            raise ValueError("ssd_bandwidth must be positive")
        return entry.byte_size, entry.byte_size / ssd_bandwidth
