"""Hierarchical context tree.

System-level features (tour, round, ...) sit near the root and user-cohort
features at the leaves. Nodes are identified by the tuple of feature values
on the path from the root, so the root is ``()``. Nodes are created lazily
the first time a context passes through them.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .core import DEFAULT_BUCKET_COUNT, Context, action_count
from .errors import InvalidArgumentError, UnknownContextError

NodeId = tuple[str, ...]
ROOT: NodeId = ()


class LevelRole(str, enum.Enum):
    SYSTEM = "system"
    USER = "user"


@dataclass(frozen=True)
class TreeSchema:
    """Ordered ``(level_name, role)`` pairs, system levels first."""

    levels: tuple[tuple[str, LevelRole], ...]

    def __post_init__(self) -> None:
        levels = tuple((str(name), LevelRole(role)) for name, role in self.levels)
        if not levels:
            raise InvalidArgumentError("schema needs at least one level")
        names = [name for name, _ in levels]
        if len(set(names)) != len(names):
            raise InvalidArgumentError(f"duplicate level names in schema: {names}")
        roles = [role for _, role in levels]
        first_user = roles.index(LevelRole.USER) if LevelRole.USER in roles else len(roles)
        if any(r is LevelRole.SYSTEM for r in roles[first_user:]):
            raise InvalidArgumentError("system-level features must precede user-level features")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def of(cls, *levels: tuple[str, str]) -> "TreeSchema":
        return cls(tuple(levels))

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.levels)

    def context(self, *values: str) -> Context:
        """Build a context for this schema from bare feature values."""
        if len(values) != self.depth:
            raise InvalidArgumentError(f"expected {self.depth} values, got {len(values)}")
        return Context(tuple(zip(self.names, values)))

    def check_context(self, context: Context) -> None:
        if context.level_names != self.names:
            raise InvalidArgumentError(
                f"context levels {context.level_names} do not match schema {self.names}"
            )


@dataclass
class _Node:
    path: NodeId
    counts: np.ndarray
    children: dict[str, NodeId] = field(default_factory=dict)


class ContextTree:
    """Prefix-closed tree of context paths with per-action sample counts.

    ``counts(node)[a]`` is the number of observations of action ``a`` (the
    baseline included) recorded anywhere below ``node``.
    """

    def __init__(self, schema: TreeSchema, bucket_count: int = DEFAULT_BUCKET_COUNT):
        self.schema = schema
        self.bucket_count = bucket_count
        self.n_actions = action_count(bucket_count)
        self._nodes: dict[NodeId, _Node] = {ROOT: self._new_node(ROOT)}

    def _new_node(self, path: NodeId) -> _Node:
        return _Node(path, np.zeros(self.n_actions, dtype=np.int64))

    @property
    def depth(self) -> int:
        return self.schema.depth

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node: NodeId) -> bool:
        return tuple(node) in self._nodes

    def is_leaf(self, node: NodeId) -> bool:
        return len(node) == self.depth

    def parent(self, node: NodeId) -> NodeId:
        if not node:
            raise InvalidArgumentError("the root has no parent")
        return node[:-1]

    def children(self, node: NodeId) -> list[NodeId]:
        return list(self._get(node).children.values())

    def counts(self, node: NodeId) -> np.ndarray:
        """Per-action sample counts below ``node`` (read-only view)."""
        view = self._get(node).counts.view()
        view.flags.writeable = False
        return view

    def leaves(self) -> list[NodeId]:
        return [n for n in self.iter_top_down() if self.is_leaf(n)]

    def _get(self, node: NodeId) -> _Node:
        try:
            return self._nodes[tuple(node)]
        except KeyError:
            raise UnknownContextError(f"unknown node {node!r}") from None

    def leaf_of(self, context: Context) -> NodeId:
        self.schema.check_context(context)
        return context.values

    def resolve_path(self, context: Context, materialize: bool = False) -> list[NodeId]:
        """Root-to-leaf node path for ``context`` (``depth + 1`` nodes)."""
        leaf = self.leaf_of(context)
        path = [leaf[:i] for i in range(len(leaf) + 1)]
        for i, node in enumerate(path[1:], start=1):
            if node in self._nodes:
                continue
            if not materialize:
                raise UnknownContextError(f"context {'/'.join(leaf)} not in tree (missing {node!r})")
            self._nodes[node] = self._new_node(node)
            self._nodes[path[i - 1]].children[node[-1]] = node
        return path

    def add_samples(self, path: Sequence[NodeId], action_index: int, n: int = 1) -> None:
        """Increment the count of ``action_index`` on every node of ``path``."""
        for node in path:
            self._nodes[node].counts[action_index] += n

    def iter_top_down(self) -> Iterator[NodeId]:
        """Breadth-first from the root: every node after its parent."""
        queue = deque([ROOT])
        while queue:
            node = queue.popleft()
            yield node
            queue.extend(self._nodes[node].children.values())

    def iter_bottom_up(self) -> Iterator[NodeId]:
        """Every node before its parent."""
        return reversed(list(self.iter_top_down()))


def build_tree(schema: TreeSchema, bucket_count: int = DEFAULT_BUCKET_COUNT) -> ContextTree:
    return ContextTree(schema, bucket_count)
