"""SWC tree interchange: one node per line, "id type x y z radius parent".

Ids are 1-based and contiguous in file order; roots carry parent -1; 2D
forests are written with z = 0 and detected on read when every z is exactly
zero. Positions and radii are serialized with 4 decimals, so round trips are
exact at 1e-4. Reading canonicalizes the branch decomposition (paths split at
bifurcations); the underlying node tree is preserved exactly.
"""

from __future__ import annotations

import os

import numpy as np

from .geometry import Branch, BranchForest, CenterNode

__all__ = ["SwcError", "swc_write", "swc_read"]

_NODE_TYPE = 3  # generic neurite label, conventional for automated tracers


class SwcError(ValueError):
    pass


def _branch_write_order(forest: BranchForest):
    """Branch indices ordered so every parent branch precedes its children."""
    remaining = list(range(len(forest.branches)))
    emitted: set[int] = set()
    order = []
    while remaining:
        progressed = False
        still = []
        for bi in remaining:
            parent = forest.branches[bi].parent
            if parent is None or parent[0] in emitted:
                order.append(bi)
                emitted.add(bi)
                progressed = True
            else:
                still.append(bi)
        if not progressed:
            raise SwcError(f"unresolvable parent ordering among branches {still}")
        remaining = still
    return order


def swc_write(forest: BranchForest, path: str) -> None:
    """Write a forest as SWC; the write is atomic (temp file + rename)."""
    lines = ["# generated by curvitrace", "# id type x y z radius parent"]
    node_id = {}
    next_id = 1
    for bi in _branch_write_order(forest):
        branch = forest.branches[bi]
        for ni, node in enumerate(branch.nodes):
            if ni == 0:
                parent = node_id[branch.parent] if branch.parent is not None else -1
            else:
                parent = node_id[(bi, ni - 1)]
            node_id[(bi, ni)] = next_id
            p = node.position
            z = p[2] if p.size == 3 else 0.0
            lines.append(
                f"{next_id} {_NODE_TYPE} {p[0]:.4f} {p[1]:.4f} {z:.4f} {node.radius:.4f} {parent}"
            )
            next_id += 1
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _parse_lines(path: str):
    records = {}
    order = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.replace(",", " ").split()
            if len(fields) != 7:
                raise SwcError(f"{path}:{lineno}: expected 7 fields, got {len(fields)}")
            try:
                nid = int(fields[0])
                x, y, z, radius = (float(v) for v in fields[2:6])
                parent = int(fields[6])
            except ValueError as exc:
                raise SwcError(f"{path}:{lineno}: {exc}") from None
            if nid in records:
                raise SwcError(f"{path}:{lineno}: duplicate node id {nid}")
            records[nid] = (np.array([x, y, z]), radius, parent)
            order.append(nid)
    for nid, (_, _, parent) in records.items():
        if parent != -1 and parent not in records:
            raise SwcError(f"{path}: node {nid} references missing parent {parent}")
    # every parent chain must terminate at a root
    for nid in records:
        seen = set()
        cur = nid
        while cur != -1:
            if cur in seen:
                raise SwcError(f"{path}: parent cycle through node {cur}")
            seen.add(cur)
            cur = records[cur][2]
    return records, order


def swc_read(path: str, dim: int | None = None) -> BranchForest:
    """Read an SWC file into a forest of unbranched paths.

    dim=2 drops the z column (which must be all zero), dim=3 keeps it, and
    None auto-detects: files whose z values are all exactly 0 load as 2D.
    """
    records, order = _parse_lines(path)
    if not records:
        return BranchForest(branches=[])
    if dim is None:
        dim = 2 if all(rec[0][2] == 0.0 for rec in records.values()) else 3
    if dim == 2 and any(rec[0][2] != 0.0 for rec in records.values()):
        raise SwcError(f"{path}: nonzero z coordinates in a 2D read")

    children: dict[int, list[int]] = {nid: [] for nid in records}
    roots = []
    for nid in order:
        parent = records[nid][2]
        if parent == -1:
            roots.append(nid)
        else:
            children[parent].append(nid)
    for kids in children.values():
        kids.sort()

    def node_of(nid):
        pos, radius, _ = records[nid]
        return CenterNode(position=pos[:dim].copy(), radius=radius)

    branches: list[Branch] = []
    branch_index_of_node: dict[int, tuple[int, int]] = {}
    # (start node, attachment) stack; attachment is (branch, node) of the fork
    stack = [(rid, None) for rid in sorted(roots, reverse=True)]
    while stack:
        start, attach = stack.pop()
        chain = [start]
        while len(children[chain[-1]]) == 1:
            chain.append(children[chain[-1]][0])
        bi = len(branches)
        branches.append(Branch(nodes=[node_of(n) for n in chain], parent=attach))
        for ni, nid in enumerate(chain):
            branch_index_of_node[nid] = (bi, ni)
        tail = chain[-1]
        for kid in sorted(children[tail], reverse=True):
            stack.append((kid, (bi, len(chain) - 1)))
    return BranchForest(branches=branches)
