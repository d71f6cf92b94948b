"""Rooted domain tree built from slash-delimited node paths.

Node ids are assigned once, at build time, in (level, path) order with the
root at id 0.  Merging and flattening remove nodes but never renumber the
survivors, so an id always denotes the same domain across every derived
taxonomy.  That is what lets a flattened model answer queries about nodes it
does not have: walk up the parent links until a node it does have.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

ROOT_NAME = "Global"
ROOT_ID = 0


class TaxonomyError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: int
    name: str
    path: str
    parent_id: int | None
    level: int
    count: int  # sentences assigned directly to this node


def split_path(path: str) -> tuple[str, ...]:
    """Split a node path into segments.

    A leading ``Global/`` segment is accepted as an explicit root anchor and
    dropped; the bare string ``Global`` denotes the root itself.
    """
    if not isinstance(path, str) or not path.strip():
        raise TaxonomyError("empty node path")
    parts = tuple(p.strip() for p in path.strip().split("/"))
    if any(not p for p in parts):
        raise TaxonomyError(f"node path has an empty segment: {path!r}")
    if parts[0] == ROOT_NAME:
        parts = parts[1:]
    return parts


def normalize_path(path: str) -> str:
    parts = split_path(path)
    return "/".join(parts) if parts else ROOT_NAME


@dataclass
class Taxonomy:
    nodes: dict[int, Node]
    path_index: dict[str, int]
    _children: dict[int, list[int]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._children = {i: [] for i in self.nodes}
        for node in self.nodes.values():
            if node.parent_id is not None:
                self._children[node.parent_id].append(node.id)
        for kids in self._children.values():
            kids.sort()

    # -- structure -------------------------------------------------------
    @property
    def root_id(self) -> int:
        return ROOT_ID

    @property
    def depth(self) -> int:
        """Maximum level H present in the tree."""
        return max(n.level for n in self.nodes.values())

    @property
    def total_count(self) -> int:
        return sum(n.count for n in self.nodes.values())

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, node_id) -> bool:
        return node_id in self.nodes

    def node_ids(self) -> list[int]:
        """Ids ordered parents-before-children (level, then path)."""
        return sorted(self.nodes, key=lambda i: (self.nodes[i].level, self.nodes[i].path))

    def parent(self, node_id: int) -> int | None:
        return self.nodes[node_id].parent_id

    def children(self, node_id: int) -> list[int]:
        return list(self._children[node_id])

    def is_leaf(self, node_id: int) -> bool:
        return not self._children[node_id]

    def ancestors(self, node_id: int) -> list[int]:
        """Proper ancestors, nearest first."""
        out = []
        parent = self.nodes[node_id].parent_id
        while parent is not None:
            out.append(parent)
            parent = self.nodes[parent].parent_id
        return out

    def subtree_count(self, node_id: int) -> int:
        return self.nodes[node_id].count + sum(
            self.subtree_count(c) for c in self._children[node_id]
        )

    def path_of(self, node_id: int) -> str:
        return self.nodes[node_id].path

    def leaves(self) -> list[int]:
        return [i for i in self.node_ids() if self.is_leaf(i)]

    # -- lookup ----------------------------------------------------------
    def resolve(self, path: str) -> int:
        """Id a path maps to after merging (possibly an ancestor)."""
        try:
            key = normalize_path(path)
        except TaxonomyError as exc:
            raise TaxonomyError(f"cannot resolve node path {path!r}: {exc}") from None
        try:
            return self.path_index[key]
        except KeyError:
            raise TaxonomyError(f"unknown node path: {path!r}") from None

    # -- derived trees ---------------------------------------------------
    def flatten(self, depth: int) -> "Taxonomy":
        """Merge every node deeper than ``depth`` into its ancestor at ``depth``.

        depth=0 gives the single-table global model, depth=1 the grouped one.
        """
        if depth < 0 or depth > self.depth:
            raise TaxonomyError(f"flatten depth {depth} outside [0, {self.depth}]")
        target = {}
        for i, node in self.nodes.items():
            j = i
            while self.nodes[j].level > depth:
                j = self.nodes[j].parent_id
            target[i] = j
        counts = Counter()
        for i, node in self.nodes.items():
            counts[target[i]] += node.count
        nodes = {
            i: replace(n, count=counts[i]) for i, n in self.nodes.items() if target[i] == i
        }
        path_index = {p: target[i] for p, i in self.path_index.items()}
        return Taxonomy(nodes, path_index)

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "id": n.id,
                    "name": n.name,
                    "path": n.path,
                    "parent_id": n.parent_id,
                    "level": n.level,
                    "count": n.count,
                }
                for n in (self.nodes[i] for i in self.node_ids())
            ],
            "path_index": dict(sorted(self.path_index.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Taxonomy":
        nodes = {int(d["id"]): Node(**d) for d in data["nodes"]}
        return cls(nodes, {p: int(i) for p, i in data["path_index"].items()})


def build_taxonomy(
    paths_with_counts: Mapping[str, int], min_node_size: int = 0, extra_paths: Iterable[str] = ()
) -> Taxonomy:
    """Build the prefix tree of all paths and merge under-sized leaves upward.

    ``extra_paths`` declares nodes with no data of their own (from a taxonomy
    file).  Leaves holding fewer than ``min_node_size`` sentences are folded
    into their parent, deepest level first and smallest count first within a
    level, until every surviving leaf meets the threshold or only the root is
    left.  Interior nodes are never merged while they still have children.
    """
    if min_node_size < 0:
        raise TaxonomyError("min_node_size must be >= 0")
    own = Counter()
    for path, count in paths_with_counts.items():
        own[split_path(path)] += int(count)
    for path in extra_paths:
        own[split_path(path)] += 0

    prefixes = {()}
    for parts in own:
        for k in range(1, len(parts) + 1):
            prefixes.add(parts[:k])
    ordered = sorted(prefixes, key=lambda p: (len(p), "/".join(p)))
    id_of = {parts: i for i, parts in enumerate(ordered)}

    parent = {}
    count = {}
    for parts in ordered:
        i = id_of[parts]
        parent[i] = id_of[parts[:-1]] if parts else None
        count[i] = own.get(parts, 0)
    children = {i: set() for i in count}
    for i, p in parent.items():
        if p is not None:
            children[p].add(i)
    level = {id_of[parts]: len(parts) for parts in ordered}
    path_str = {id_of[parts]: "/".join(parts) if parts else ROOT_NAME for parts in ordered}
    target = {i: i for i in count}

    while True:
        deficient = [
            i
            for i in count
            if parent[i] is not None and not children[i] and count[i] < min_node_size
        ]
        if not deficient:
            break
        i = min(deficient, key=lambda j: (-level[j], count[j], path_str[j]))
        p = parent[i]
        count[p] += count.pop(i)
        children[p].discard(i)
        del children[i]
        for k, t in target.items():
            if t == i:
                target[k] = p

    nodes = {
        i: Node(
            id=i,
            name=path_str[i].rsplit("/", 1)[-1],
            path=path_str[i],
            parent_id=parent[i],
            level=level[i],
            count=count[i],
        )
        for i in count
    }
    path_index = {path_str[i]: target[i] for i in target}
    return Taxonomy(nodes, path_index)


def read_taxonomy_file(path) -> list[str]:
    """Newline-delimited node paths; blank lines and ``#`` comments skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line)
    return out
