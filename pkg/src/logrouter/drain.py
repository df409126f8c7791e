"""Online log-template mining with a fixed-depth parse tree.

Lines are masked (IPs, long hex runs, integers become placeholder tokens),
then routed through a tree keyed first by token count and then by leading
tokens. Leaf clusters merge when token similarity clears a threshold;
diverging positions become the "<*>" wildcard.

Template IDs are content-addressed: a lowercase-hex prefix of the MD5
digest of the template string. A frozen miner is read-only and can be
shared across any number of parallel annotators; unseen shapes then map
to the sentinel id "unmatched".
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import InvalidTemplateError, StateFrozenError
from .ingest import LogRecord

WILDCARD = "<*>"
UNMATCHED_ID = "unmatched"

DEFAULT_DEPTH = 4
DEFAULT_SIM_TH = 0.4
DEFAULT_MAX_CHILDREN = 100
DEFAULT_ID_PREFIX_LEN = 8

STATE_VERSION = 1


@dataclass(frozen=True)
class MaskRule:
    name: str
    regex: str
    replacement: str

    def compiled(self) -> re.Pattern:
        return re.compile(self.regex)


DEFAULT_MASKS: tuple[MaskRule, ...] = (
    MaskRule("ipv4", r"\b\d{1,3}(?:\.\d{1,3}){3}\b", "<IP>"),
    MaskRule("hex", r"\b[0-9a-fA-F]{8,}\b", "<HEX>"),
    MaskRule("num", r"\b\d+\b", "<NUM>"),
)


def mask(line: str, masks: Sequence[MaskRule] = DEFAULT_MASKS) -> str:
    """Apply mask rules in order, replacing matched spans with placeholders."""
    out = line
    for rule in masks:
        out = rule.compiled().sub(rule.replacement, out)
    return out


def template_id_of(template_string: str, prefix_len: int = DEFAULT_ID_PREFIX_LEN) -> str:
    """Deterministic content-addressed template ID (MD5 prefix, lowercase hex)."""
    if not template_string:
        raise InvalidTemplateError("template string must be non-empty")
    digest = hashlib.md5(template_string.encode("utf-8")).hexdigest()
    return digest[:prefix_len]


@dataclass
class Template:
    template_id: str
    template_string: str
    example_line: str
    match_count: int

    def to_dict(self) -> dict:
        return {
            "id": self.template_id,
            "template": self.template_string,
            "count": self.match_count,
            "example": self.example_line,
        }


@dataclass(frozen=True)
class AnnotatedRecord:
    record: LogRecord
    template_id: str
    masked_line: str


class _Cluster:
    __slots__ = ("tokens", "count", "example")

    def __init__(self, tokens: list[str], example: str):
        self.tokens = tokens
        self.count = 0
        self.example = example

    @property
    def template_string(self) -> str:
        return " ".join(self.tokens)


def _has_digits(token: str) -> bool:
    return any(ch.isdigit() for ch in token)


class DrainMiner:
    """Fixed-depth parse-tree miner. Single writer; frozen states are immutable."""

    def __init__(
        self,
        depth: int = DEFAULT_DEPTH,
        sim_th: float = DEFAULT_SIM_TH,
        max_children: int = DEFAULT_MAX_CHILDREN,
        id_prefix_len: int = DEFAULT_ID_PREFIX_LEN,
        masks: Sequence[MaskRule] = DEFAULT_MASKS,
    ):
        if depth < 3:
            raise ValueError("depth must be >= 3")
        if not 0 < sim_th <= 1:
            raise ValueError("sim_th must be in (0, 1]")
        self.depth = depth
        self.sim_th = sim_th
        self.max_children = max_children
        self.id_prefix_len = id_prefix_len
        self.masks = list(masks)
        self.frozen = False
        # Matches the reference parse tree: root and length level consume
        # two of the `depth` levels; descents stop once this is reached.
        self._max_node_depth = depth - 2
        # First level keyed by str(token count); internal nodes are
        # {"children": {...}}; leaves additionally carry {"clusters": [...]}.
        self.tree: dict = {}
        self.clusters: list[_Cluster] = []

    # --- tree walking ---------------------------------------------------

    def _leaf_for(self, tokens: list[str], create: bool) -> Optional[dict]:
        length_key = str(len(tokens))
        node = self.tree.get(length_key)
        if node is None:
            if not create:
                return None
            node = {"children": {}}
            self.tree[length_key] = node
        depth = 1
        for token in tokens:
            if depth >= self._max_node_depth or depth > len(tokens):
                break
            children = node["children"]
            nxt = children.get(token)
            if nxt is None:
                if not create:
                    nxt = children.get(WILDCARD)
                    if nxt is None:
                        return None
                elif _has_digits(token):
                    nxt = children.get(WILDCARD)
                    if nxt is None:
                        nxt = {"children": {}}
                        children[WILDCARD] = nxt
                elif WILDCARD in children:
                    if len(children) < self.max_children:
                        nxt = {"children": {}}
                        children[token] = nxt
                    else:
                        nxt = children[WILDCARD]
                else:
                    if len(children) + 1 < self.max_children:
                        nxt = {"children": {}}
                        children[token] = nxt
                    else:
                        nxt = {"children": {}}
                        children[WILDCARD] = nxt
            node = nxt
            depth += 1
        if create:
            node.setdefault("clusters", [])
            return node
        return node if node.get("clusters") else None

    @staticmethod
    def _similarity(template: list[str], tokens: list[str]) -> tuple[float, int]:
        same = 0
        wildcards = 0
        for t, s in zip(template, tokens):
            if t == WILDCARD:
                wildcards += 1
                continue
            if t == s:
                same += 1
        return same / len(template), wildcards

    def _best_cluster(self, leaf: dict, tokens: list[str]) -> Optional[int]:
        best_idx = None
        best_sim = -1.0
        best_wild = -1
        for idx in leaf.get("clusters", ()):
            cluster = self.clusters[idx]
            if len(cluster.tokens) != len(tokens):
                continue
            sim, wild = self._similarity(cluster.tokens, tokens)
            if sim > best_sim or (sim == best_sim and wild > best_wild):
                best_sim, best_wild, best_idx = sim, wild, idx
        if best_idx is not None and best_sim >= self.sim_th:
            return best_idx
        return None

    # --- public operations ----------------------------------------------

    def mask_line(self, line: str) -> str:
        return mask(line, self.masks)

    def train(self, records: Iterable[LogRecord]) -> "DrainMiner":
        """Route each record through the tree, merging/creating clusters."""
        if self.frozen:
            raise StateFrozenError("miner state is frozen; training is disabled")
        for record in records:
            masked = self.mask_line(record.line)
            tokens = masked.split()
            if not tokens:
                continue
            leaf = self._leaf_for(tokens, create=True)
            idx = self._best_cluster(leaf, tokens)
            if idx is None:
                cluster = _Cluster(list(tokens), record.line)
                self.clusters.append(cluster)
                leaf["clusters"].append(len(self.clusters) - 1)
                cluster.count = 1
            else:
                cluster = self.clusters[idx]
                merged = [
                    a if a == b else WILDCARD
                    for a, b in zip(cluster.tokens, tokens)
                ]
                cluster.tokens = merged
                cluster.count += 1
        return self

    def freeze(self) -> "DrainMiner":
        """Flip the read-only flag; idempotent."""
        self.frozen = True
        return self

    def lookup(self, line: str) -> Optional[int]:
        """Cluster index for one raw line, or None on miss. Never mutates."""
        tokens = self.mask_line(line).split()
        if not tokens:
            return None
        leaf = self._leaf_for(tokens, create=False)
        if leaf is None:
            return None
        return self._best_cluster(leaf, tokens)

    def annotate(self, records: Sequence[LogRecord]) -> list[AnnotatedRecord]:
        """Lookup-only annotation; misses map to the 'unmatched' sentinel."""
        ids = self._cluster_ids()
        out = []
        for record in records:
            masked = self.mask_line(record.line)
            idx = self.lookup(record.line)
            template_id = ids[idx] if idx is not None else UNMATCHED_ID
            out.append(AnnotatedRecord(record=record, template_id=template_id, masked_line=masked))
        return out

    # --- catalogue / IDs --------------------------------------------------

    def _cluster_ids(self) -> list[str]:
        """Content-addressed IDs per cluster; collisions escalate prefix length."""
        strings = [c.template_string for c in self.clusters]
        for s in strings:
            if not s or all(tok == WILDCARD for tok in s.split()):
                raise InvalidTemplateError(f"degenerate template: {s!r}")
        lengths = {s: self.id_prefix_len for s in strings}
        while True:
            seen: dict[str, str] = {}
            collision = False
            for s in set(strings):
                tid = template_id_of(s, lengths[s])
                if tid in seen and seen[tid] != s:
                    other = seen[tid]
                    lengths[s] += 2
                    lengths[other] += 2
                    collision = True
                    break
                seen[tid] = s
            if not collision:
                return [template_id_of(s, lengths[s]) for s in strings]

    def catalogue(self) -> list[Template]:
        """Current template catalogue, IDs recomputed from template strings."""
        ids = self._cluster_ids()
        return [
            Template(
                template_id=ids[i],
                template_string=c.template_string,
                example_line=c.example,
                match_count=c.count,
            )
            for i, c in enumerate(self.clusters)
        ]

    def catalogue_by_id(self) -> dict[str, Template]:
        return {t.template_id: t for t in self.catalogue()}

    # --- serialization ----------------------------------------------------

    def to_state_dict(self) -> dict:
        ids = self._cluster_ids() if self.clusters else []
        return {
            "version": STATE_VERSION,
            "params": {
                "depth": self.depth,
                "sim_th": self.sim_th,
                "max_children": self.max_children,
                "id_prefix_len": self.id_prefix_len,
            },
            "masks": [
                {"name": m.name, "regex": m.regex, "replacement": m.replacement}
                for m in self.masks
            ],
            "templates": [
                {
                    "id": ids[i],
                    "template": c.template_string,
                    "count": c.count,
                    "example": c.example,
                }
                for i, c in enumerate(self.clusters)
            ],
            "tree": copy.deepcopy(self.tree),
            "frozen": self.frozen,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_state_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_state_dict(cls, state: dict) -> "DrainMiner":
        if state.get("version") != STATE_VERSION:
            raise ValueError(f"unsupported miner state version: {state.get('version')!r}")
        params = state["params"]
        miner = cls(
            depth=params["depth"],
            sim_th=params["sim_th"],
            max_children=params["max_children"],
            id_prefix_len=params["id_prefix_len"],
            masks=[MaskRule(m["name"], m["regex"], m["replacement"]) for m in state["masks"]],
        )
        miner.tree = copy.deepcopy(state["tree"])
        for entry in state["templates"]:
            cluster = _Cluster(entry["template"].split(), entry["example"])
            cluster.count = entry["count"]
            miner.clusters.append(cluster)
        miner.frozen = bool(state.get("frozen", False))
        return miner

    @classmethod
    def loads(cls, text: str) -> "DrainMiner":
        return cls.from_state_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "DrainMiner":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.loads(fh.read())
