"""Neural tree data model and stochastic generation.

A tree is stored as a flat arena indexed by node id (root is always 0,
generated trees number their nodes in depth-first pre-order).  Trainable
parameters live in a single vector: the weight of the edge joining node
``j`` to its parent sits at ``params[j - 1]`` and every node carrying a bias
gets a slot after the ``n - 1`` edge weights.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


class NodeKind(enum.IntEnum):
    ROOT = 0
    INTERNAL = 1
    LEAF = 2


class Activation(enum.IntEnum):
    SIGMOID = 0
    RELU = 1
    ARGMAX = 2


@dataclass(frozen=True)
class Task:
    """Learning task: ``n_classes == 0`` means single-output regression."""

    kind: str
    n_classes: int = 0

    def __post_init__(self):
        if self.kind not in ("classification", "regression"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == "classification" and self.n_classes < 2:
            raise ValueError("classification needs at least 2 classes")
        if self.kind == "regression" and self.n_classes != 0:
            raise ValueError("regression task takes no class count")

    @classmethod
    def classification(cls, n_classes: int) -> Task:
        return cls("classification", n_classes)

    @classmethod
    def regression(cls) -> Task:
        return cls("regression", 0)

    @property
    def is_classification(self) -> bool:
        return self.kind == "classification"

    @property
    def n_outputs(self) -> int:
        return self.n_classes if self.is_classification else 1


@dataclass
class Node:
    """Readable view of one arena slot."""

    id: int
    kind: NodeKind
    activation: Activation | None = None
    bias: float | None = None
    feature_index: int | None = None
    children: list[tuple[int, float]] = field(default_factory=list)
    parent: int | None = None


class GenerationError(RuntimeError):
    def __init__(self, message: str, largest_size: int):
        super().__init__(message)
        self.largest_size = largest_size


class InvalidTreeError(ValueError):
    pass


@dataclass(frozen=True)
class TreeGenConfig:
    depth_cap: int = 5
    arity_cap: int = 5
    leaf_prob: float = 0.5
    min_size: int | None = None
    weight_init: tuple[float, float] = (0.0, 1.0)
    internal_activation: Activation = Activation.SIGMOID
    rng_seed: int = 0
    max_retries: int = 1000

    def __post_init__(self):
        if self.depth_cap < 2:
            raise ValueError("depth_cap must be >= 2")
        if self.arity_cap < 2:
            raise ValueError("arity_cap must be >= 2")
        if not 0.0 <= self.leaf_prob <= 1.0:
            raise ValueError("leaf_prob must lie in [0, 1]")
        lo, hi = self.weight_init
        if lo > hi:
            raise ValueError("weight_init lower bound exceeds upper bound")
        if Activation(self.internal_activation) == Activation.ARGMAX:
            raise ValueError("internal nodes cannot use argmax")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")


class ParameterCount(NamedTuple):
    edges: int
    biases: int
    total: int


def max_nodes(depth_cap: int, arity_cap: int, root_arity: int | None = None) -> int:
    """Size of the complete tree; a wider classification root scales the subtrees."""
    m, p = arity_cap, depth_cap
    full = (m ** (p + 1) - 1) // (m - 1)
    if root_arity is None or root_arity <= m:
        return full
    return 1 + root_arity * ((m**p - 1) // (m - 1))


class NeuralTree:
    """Rooted m-ary neural tree over ``input_dim`` features.

    Structure arrays are treated as immutable; ``params`` changes only through
    :meth:`with_params` (used by the training loop).
    """

    def __init__(
        self,
        kind: np.ndarray,
        activation: np.ndarray,
        parent: np.ndarray,
        feature: np.ndarray,
        child_ptr: np.ndarray,
        child_idx: np.ndarray,
        bias_slot: np.ndarray,
        params: np.ndarray,
        task: Task,
        input_dim: int,
        depth_cap: int,
        arity_cap: int,
        rng_seed: int = 0,
    ):
        self.kind = np.ascontiguousarray(kind, dtype=np.int8)
        self.activation = np.ascontiguousarray(activation, dtype=np.int8)
        self.parent = np.ascontiguousarray(parent, dtype=np.int64)
        self.feature = np.ascontiguousarray(feature, dtype=np.int64)
        self.child_ptr = np.ascontiguousarray(child_ptr, dtype=np.int64)
        self.child_idx = np.ascontiguousarray(child_idx, dtype=np.int64)
        self.bias_slot = np.ascontiguousarray(bias_slot, dtype=np.int64)
        self.params = np.ascontiguousarray(params, dtype=np.float64)
        self.task = task
        self.input_dim = int(input_dim)
        self.depth_cap = int(depth_cap)
        self.arity_cap = int(arity_cap)
        self.rng_seed = int(rng_seed)
        self.pre_order, self.depth = _traverse(self.child_ptr, self.child_idx, len(self.kind))
        self.post_order = _post_order(self.child_ptr, self.child_idx, len(self.kind))
        if task.is_classification and len(self.kind):
            self.out_nodes = self.children(0).copy()
        else:
            self.out_nodes = np.zeros(1, dtype=np.int64)
        self.out_pos = np.full(len(self.kind), -1, dtype=np.int64)
        if len(self.kind):
            self.out_pos[self.out_nodes] = np.arange(len(self.out_nodes))

    # -- construction -----------------------------------------------------

    @classmethod
    def from_nodes(
        cls,
        nodes: Sequence[Node],
        task: Task,
        input_dim: int,
        depth_cap: int,
        arity_cap: int,
        rng_seed: int = 0,
    ) -> NeuralTree:
        """Build the arena from node records with dense ids ``0..n-1``.

        Structural rules (arity, depth, feature range) are *not* enforced here
        so malformed trees can still be inspected by :func:`validate`.
        """
        n = len(nodes)
        by_id = sorted(nodes, key=lambda nd: nd.id)
        if [nd.id for nd in by_id] != list(range(n)):
            raise InvalidTreeError("node ids must be dense 0..n-1")
        kind = np.array([int(nd.kind) for nd in by_id], dtype=np.int8)
        act = np.array(
            [-1 if nd.activation is None else int(nd.activation) for nd in by_id], dtype=np.int8
        )
        feature = np.array(
            [-1 if nd.feature_index is None else int(nd.feature_index) for nd in by_id],
            dtype=np.int64,
        )
        parent = np.full(n, -1, dtype=np.int64)
        weight = np.zeros(n)
        child_ptr = np.zeros(n + 1, dtype=np.int64)
        child_idx = []
        for nd in by_id:
            for cid, w in nd.children:
                if not 0 <= cid < n:
                    raise InvalidTreeError(f"node {nd.id}: child id {cid} out of range")
                if parent[cid] != -1:
                    raise InvalidTreeError(f"node {cid} has more than one parent")
                parent[cid] = nd.id
                weight[cid] = w
                child_idx.append(cid)
            child_ptr[nd.id + 1] = len(child_idx)
        bias_slot = np.full(n, -1, dtype=np.int64)
        biases = []
        for nd in by_id:
            if nd.bias is not None:
                bias_slot[nd.id] = max(n - 1, 0) + len(biases)
                biases.append(nd.bias)
        params = np.concatenate([weight[1:], np.asarray(biases, dtype=np.float64)])
        return cls(
            kind, act, parent, feature, child_ptr, np.asarray(child_idx, dtype=np.int64),
            bias_slot, params, task, input_dim, depth_cap, arity_cap, rng_seed,
        )

    def with_params(self, params: np.ndarray) -> NeuralTree:
        params = np.array(params, dtype=np.float64)
        if params.shape != self.params.shape:
            raise ValueError(f"expected {self.params.shape[0]} parameters, got {params.shape}")
        clone = object.__new__(NeuralTree)
        clone.__dict__.update(self.__dict__)
        clone.params = params
        return clone

    # -- views ------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.kind)

    def __repr__(self) -> str:
        return (
            f"NeuralTree(task={self.task.kind}, nodes={len(self)}, "
            f"params={len(self.params)}, depth_cap={self.depth_cap}, arity_cap={self.arity_cap})"
        )

    def children(self, j: int) -> np.ndarray:
        return self.child_idx[self.child_ptr[j] : self.child_ptr[j + 1]]

    def edge_weight(self, j: int) -> float:
        if j == 0:
            raise ValueError("the root has no incoming edge")
        return float(self.params[j - 1])

    def bias(self, j: int) -> float | None:
        slot = self.bias_slot[j]
        return None if slot < 0 else float(self.params[slot])

    def node(self, j: int) -> Node:
        act = int(self.activation[j])
        feat = int(self.feature[j])
        par = int(self.parent[j])
        return Node(
            id=j,
            kind=NodeKind(int(self.kind[j])),
            activation=None if act < 0 else Activation(act),
            bias=self.bias(j),
            feature_index=None if feat < 0 else feat,
            children=[(int(c), self.edge_weight(int(c))) for c in self.children(j)],
            parent=None if par < 0 else par,
        )

    @property
    def nodes(self) -> list[Node]:
        return [self.node(j) for j in range(len(self))]

    @property
    def n_internal(self) -> int:
        return int(np.count_nonzero(self.kind != NodeKind.LEAF))

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.kind == NodeKind.LEAF))

    def kernel_args(self) -> tuple:
        """Arrays in the order the forward kernel expects them."""
        return (self.kind, self.activation, self.feature, self.child_ptr, self.child_idx,
                self.bias_slot, self.post_order)


def _traverse(child_ptr, child_idx, n):
    order = []
    depth = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return np.zeros(0, dtype=np.int64), depth
    stack = [(0, 0)]
    while stack:
        j, d = stack.pop()
        if depth[j] >= 0:
            continue  # cycle guard; validate() reports unreachable nodes
        depth[j] = d
        order.append(j)
        kids = child_idx[child_ptr[j] : child_ptr[j + 1]]
        stack.extend((int(c), d + 1) for c in kids[::-1])
    return np.asarray(order, dtype=np.int64), depth


def _post_order(child_ptr, child_idx, n):
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    out = []
    seen = np.zeros(n, dtype=bool)
    stack = [(0, False)]
    while stack:
        j, expanded = stack.pop()
        if expanded:
            out.append(j)
            continue
        if seen[j]:
            continue
        seen[j] = True
        stack.append((j, True))
        kids = child_idx[child_ptr[j] : child_ptr[j + 1]]
        stack.extend((int(c), False) for c in kids[::-1])
    return np.asarray(out, dtype=np.int64)


# -- generation --------------------------------------------------------------


def default_min_size(task: Task) -> int:
    return 2 * task.n_outputs


def generate_tree(config: TreeGenConfig, task: Task, input_dim: int) -> NeuralTree:
    """Grow a random tree, regenerating until it reaches the size floor.

    Every draw comes from one generator seeded with ``config.rng_seed``, so
    the result is a pure function of the arguments.
    """
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    min_size = default_min_size(task) if config.min_size is None else config.min_size
    rng = np.random.default_rng(config.rng_seed)
    largest = 0
    for _ in range(config.max_retries):
        nodes = _grow(rng, config, task, input_dim)
        if len(nodes) >= min_size:
            return NeuralTree.from_nodes(
                nodes, task, input_dim, config.depth_cap, config.arity_cap, config.rng_seed
            )
        largest = max(largest, len(nodes))
    raise GenerationError(
        f"no tree reached {min_size} nodes in {config.max_retries} attempts "
        f"(largest had {largest})",
        largest,
    )


def _grow(rng: np.random.Generator, cfg: TreeGenConfig, task: Task, d: int) -> list[Node]:
    lo, hi = cfg.weight_init
    act = Activation(cfg.internal_activation)
    nodes: list[Node] = []

    def new_node(kind, parent, activation=None, with_bias=False):
        nd = Node(id=len(nodes), kind=kind, activation=activation, parent=parent)
        if with_bias:
            nd.bias = float(rng.uniform(lo, hi))
        nodes.append(nd)
        return nd

    def attach(parent: Node, child: Node):
        parent.children.append((child.id, float(rng.uniform(lo, hi))))

    def grow_children(nd: Node, depth: int):
        # children of ``nd`` sit at depth + 1
        k = int(rng.integers(2, cfg.arity_cap + 1))
        for _ in range(k):
            child_depth = depth + 1
            if child_depth >= cfg.depth_cap or rng.random() < cfg.leaf_prob:
                leaf = new_node(NodeKind.LEAF, nd.id)
                leaf.feature_index = int(rng.integers(0, d))
                attach(nd, leaf)
            else:
                inner = new_node(NodeKind.INTERNAL, nd.id, act, with_bias=True)
                attach(nd, inner)
                grow_children(inner, child_depth)

    if task.is_classification:
        root = new_node(NodeKind.ROOT, None, Activation.ARGMAX)
        for _ in range(task.n_classes):
            cls_node = new_node(NodeKind.INTERNAL, root.id, act, with_bias=True)
            attach(root, cls_node)
            grow_children(cls_node, 1)
    else:
        root = new_node(NodeKind.ROOT, None, Activation.SIGMOID, with_bias=True)
        grow_children(root, 0)
    return nodes


# -- accounting --------------------------------------------------------------


def tree_size(tree: NeuralTree) -> int:
    if len(tree) == 0:
        raise InvalidTreeError("tree has no nodes")
    return len(tree)


def count_parameters(tree: NeuralTree) -> ParameterCount:
    n = tree_size(tree)
    biases = int(np.count_nonzero(tree.bias_slot >= 0))
    return ParameterCount(n - 1, biases, n - 1 + biases)


def storage_slots(tree: NeuralTree) -> int:
    """Footprint ``2|V| + |T|``: one bias and one weight per neural node, one input per leaf."""
    return 2 * tree.n_internal + tree.n_leaves


def validate(tree: NeuralTree) -> list[str]:
    """Return human-readable invariant violations; empty when the tree is sound."""
    n = len(tree)
    if n == 0:
        return ["tree has no nodes"]
    problems = []
    task = tree.task
    m = tree.arity_cap
    roots = [j for j in range(n) if tree.parent[j] < 0]
    if roots != [0]:
        problems.append(f"expected node 0 as the single parentless node, found {roots}")
    unreachable = np.flatnonzero(tree.depth < 0)
    if len(unreachable):
        problems.append(f"nodes {unreachable.tolist()} are unreachable from the root")
    for j in range(n):
        kind = int(tree.kind[j])
        act = int(tree.activation[j])
        n_kids = int(tree.child_ptr[j + 1] - tree.child_ptr[j])
        feat = int(tree.feature[j])
        has_bias = tree.bias_slot[j] >= 0
        if kind == NodeKind.ROOT and j != 0:
            problems.append(f"node {j}: root kind away from id 0")
        if kind == NodeKind.LEAF:
            if n_kids:
                problems.append(f"node {j}: leaf has {n_kids} children")
            if feat < 0:
                problems.append(f"node {j}: leaf without feature index")
            elif feat >= tree.input_dim:
                problems.append(f"node {j}: feature out of range ({feat} >= {tree.input_dim})")
            if act >= 0:
                problems.append(f"node {j}: leaf carries an activation")
            if has_bias:
                problems.append(f"node {j}: leaf carries a bias")
            continue
        if feat >= 0:
            problems.append(f"node {j}: non-leaf has a feature index")
        if act < 0:
            problems.append(f"node {j}: neural node without activation")
        is_argmax_root = j == 0 and task.is_classification
        if is_argmax_root:
            if act != Activation.ARGMAX:
                problems.append("node 0: classification root must be argmax")
            if has_bias:
                problems.append("node 0: argmax root carries a bias")
            if n_kids != task.n_classes:
                problems.append(f"node 0: root has {n_kids} children, expected {task.n_classes} classes")
            for c in tree.children(0):
                if tree.kind[c] == NodeKind.LEAF:
                    problems.append(f"node {int(c)}: class node must be internal")
        else:
            if act == Activation.ARGMAX:
                problems.append(f"node {j}: argmax outside the classification root")
            if j == 0 and act != Activation.SIGMOID:
                problems.append("node 0: regression root must be sigmoid")
            if not has_bias:
                problems.append(f"node {j}: neural node without bias")
            if n_kids < 2:
                problems.append(f"node {j}: arity < 2")
            elif n_kids > m:
                problems.append(f"node {j}: arity {n_kids} > {m}")
        if tree.depth[j] >= tree.depth_cap and kind != NodeKind.LEAF:
            problems.append(f"node {j}: neural node at depth {int(tree.depth[j])} >= cap {tree.depth_cap}")
    if len(unreachable) == 0 and tree.depth.max() > tree.depth_cap:
        problems.append(f"tree depth {int(tree.depth.max())} exceeds cap {tree.depth_cap}")
    root_arity = task.n_classes if task.is_classification else None
    bound = max_nodes(tree.depth_cap, m, root_arity)
    if n > bound:
        problems.append(f"{n} nodes exceed the bound {bound}")
    return problems
