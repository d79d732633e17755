"""Model files (JSON, floats as exact hex strings) and Graphviz DOT export."""

from __future__ import annotations

import json
from pathlib import Path

from .tree import Activation, NeuralTree, Node, NodeKind, Task

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _hex(x: float | None) -> str | None:
    return None if x is None else float(x).hex()


def _unhex(s, what: str) -> float | None:
    if s is None:
        return None
    try:
        return float.fromhex(s)
    except (TypeError, ValueError):
        raise ModelFormatError(f"{what}: bad hex float {s!r}") from None


def tree_to_dict(tree: NeuralTree) -> dict:
    nodes = []
    for nd in tree.nodes:
        nodes.append({
            "id": nd.id,
            "kind": nd.kind.name.lower(),
            "activation": None if nd.activation is None else nd.activation.name.lower(),
            "bias": _hex(nd.bias),
            "feature_index": nd.feature_index,
            "children": [{"id": c, "weight": _hex(w)} for c, w in nd.children],
        })
    return {
        "format_version": FORMAT_VERSION,
        "task": {"kind": tree.task.kind, "n_classes": tree.task.n_classes},
        "depth_cap": tree.depth_cap,
        "arity_cap": tree.arity_cap,
        "input_dim": tree.input_dim,
        "rng_seed": tree.rng_seed,
        "nodes": nodes,
    }


def tree_from_dict(doc: dict) -> NeuralTree:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    try:
        task = Task(doc["task"]["kind"], int(doc["task"]["n_classes"]))
        nodes = []
        for raw in doc["nodes"]:
            act = raw["activation"]
            nodes.append(Node(
                id=int(raw["id"]),
                kind=NodeKind[raw["kind"].upper()],
                activation=None if act is None else Activation[act.upper()],
                bias=_unhex(raw["bias"], f"node {raw['id']} bias"),
                feature_index=raw["feature_index"],
                children=[
                    (int(c["id"]), _unhex(c["weight"], f"edge {raw['id']}->{c['id']}"))
                    for c in raw["children"]
                ],
            ))
        return NeuralTree.from_nodes(
            nodes, task, int(doc["input_dim"]), int(doc["depth_cap"]), int(doc["arity_cap"]),
            int(doc["rng_seed"]),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc!r}") from None


def dumps(tree: NeuralTree) -> str:
    return json.dumps(tree_to_dict(tree), indent=1) + "\n"


def loads(text: str) -> NeuralTree:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not a JSON model file: {exc}") from None
    return tree_from_dict(doc)


def save_tree(tree: NeuralTree, path) -> None:
    Path(path).write_text(dumps(tree))


def load_tree(path) -> NeuralTree:
    return loads(Path(path).read_text())


_STYLE = {
    "root": 'shape=doublecircle, style=filled, fillcolor=black, fontcolor=white',
    "class": 'shape=circle, style=filled, fillcolor=red',
    "internal": 'shape=circle, style=filled, fillcolor=lightblue',
    "leaf": 'shape=box, style=filled, fillcolor=palegreen',
}


def to_dot(tree: NeuralTree, name: str = "neural_tree", weights: bool = False) -> str:
    """Graphviz digraph; root, class, internal and leaf nodes get distinct styles."""
    lines = [f"digraph {name} {{", "  node [fontname=Helvetica];"]
    for nd in tree.nodes:
        if nd.kind == NodeKind.LEAF:
            style, label = "leaf", f"x{nd.feature_index}"
        elif nd.kind == NodeKind.ROOT:
            style, label = "root", nd.activation.name.lower()
        elif tree.task.is_classification and nd.parent == 0:
            style, label = "class", f"c{int(tree.out_pos[nd.id])} {nd.activation.name.lower()}"
        else:
            style, label = "internal", nd.activation.name.lower()
        lines.append(f'  n{nd.id} [label="{label}", {_STYLE[style]}];')
    for nd in tree.nodes:
        for c, w in nd.children:
            attr = f' [label="{w:.3g}"]' if weights else ""
            lines.append(f"  n{nd.id} -> n{c}{attr};")
    lines.append("}")
    return "\n".join(lines) + "\n"
