"""Directed binary network container, degree statistics and edge-list IO."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["DirectedNetwork", "read_edge_list", "write_edge_list"]


@dataclass(frozen=True)
class DirectedNetwork:
    """Square binary adjacency matrix with an undefined diagonal.

    The diagonal is stored as NaN, never 0, so any statistic that
    accidentally sums over self-ties surfaces as NaN instead of a silently
    wrong number.  Instances are immutable after construction and safe to
    share across threads; the adjacency array is write-protected.

    Parameters
    ----------
    adjacency : ndarray
        n x n array; off-diagonal entries must be 0 or 1.  The diagonal is
        overwritten with NaN regardless of input.
    node_ids : sequence of str
        Unique node labels, one per row/column of ``adjacency``.
    symmetric : bool
        Declares the network undirected; enforced at construction.
    """

    adjacency: np.ndarray
    node_ids: tuple[str, ...]
    symmetric: bool = False

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adj.shape}")
        n = adj.shape[0]
        if n < 2:
            raise ValueError("a network needs at least 2 nodes")
        ids = tuple(str(x) for x in self.node_ids)
        if len(ids) != n:
            raise ValueError(f"{len(ids)} node ids for {n} nodes")
        if len(set(ids)) != n:
            raise ValueError("node ids must be unique")
        for x in ids:
            if "\t" in x or "\n" in x:
                raise ValueError(f"node id {x!r} contains tab/newline")
        np.fill_diagonal(adj, np.nan)
        off = ~np.eye(n, dtype=bool)
        vals = adj[off]
        if not np.all((vals == 0.0) | (vals == 1.0)):
            raise ValueError("off-diagonal adjacency entries must be 0 or 1")
        if self.symmetric and not np.array_equal(adj[off], adj.T[off]):
            raise ValueError("symmetric flag set but adjacency is not symmetric")
        adj.flags.writeable = False
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "node_ids", ids)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def from_edges(cls, edges, node_ids=None, symmetric: bool = False) -> "DirectedNetwork":
        """Build a network from (source_id, target_id) pairs.

        When ``node_ids`` is omitted the node set is the ids appearing in
        ``edges``, in lexicographic order (so indices are reproducible).
        Self-loops are rejected.
        """
        edges = [(str(s), str(t)) for s, t in edges]
        if node_ids is None:
            ids = sorted({x for e in edges for x in e})
        else:
            ids = [str(x) for x in node_ids]
        pos = {x: k for k, x in enumerate(ids)}
        adj = np.zeros((len(ids), len(ids)))
        for s, t in edges:
            if s == t:
                raise ValueError(f"self-loop on node {s!r}")
            adj[pos[s], pos[t]] = 1.0
            if symmetric:
                adj[pos[t], pos[s]] = 1.0
        return cls(adj, tuple(ids), symmetric=symmetric)

    def index(self, node_id: str) -> int:
        """Index of ``node_id``; raises KeyError if unknown."""
        try:
            return self.node_ids.index(node_id)
        except ValueError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def _resolve(self, node) -> int:
        if isinstance(node, str):
            return self.index(node)
        i = int(node)
        if not 0 <= i < self.n:
            raise IndexError(f"node index {i} out of range for n={self.n}")
        return i

    def out_degree(self, node) -> int:
        """Number of distinct nodes j != i with an edge i -> j."""
        i = self._resolve(node)
        row = self.adjacency[i]
        return int(np.sum(row[np.arange(self.n) != i]))

    def in_degree(self, node) -> int:
        """Number of distinct nodes i != j with an edge i -> j."""
        j = self._resolve(node)
        col = self.adjacency[:, j]
        return int(np.sum(col[np.arange(self.n) != j]))

    def edge_count(self) -> int:
        off = ~np.eye(self.n, dtype=bool)
        return int(np.sum(self.adjacency[off]))

    def degree_table(self, top_k: int = 10) -> dict:
        """Top-k nodes by out- and in-degree, ties broken by node id."""
        outs = sorted(
            ((self.out_degree(i), self.node_ids[i]) for i in range(self.n)),
            key=lambda t: (-t[0], t[1]),
        )
        ins = sorted(
            ((self.in_degree(i), self.node_ids[i]) for i in range(self.n)),
            key=lambda t: (-t[0], t[1]),
        )
        return {
            "out": [(name, d) for d, name in outs[:top_k]],
            "in": [(name, d) for d, name in ins[:top_k]],
        }

    def symmetrize(self) -> "DirectedNetwork":
        """Undirected version: result[i][j] = max(self[i][j], self[j][i])."""
        adj = np.fmax(self.adjacency, self.adjacency.T)
        return DirectedNetwork(adj, self.node_ids, symmetric=True)

    def transpose(self) -> "DirectedNetwork":
        return DirectedNetwork(self.adjacency.T, self.node_ids, symmetric=self.symmetric)

    def binary_matrix(self) -> np.ndarray:
        """Writable float copy with the diagonal zeroed (for model code)."""
        adj = self.adjacency.copy()
        np.fill_diagonal(adj, 0.0)
        return adj


def write_edge_list(net: DirectedNetwork, edges_path, nodes_path) -> None:
    """Write a plain edge list (``source<TAB>target`` per line) and a node
    manifest.  The manifest's header comment carries the symmetric flag so
    the round-trip is lossless."""
    n = net.n
    lines = []
    for i in range(n):
        for j in range(n):
            if i != j and net.adjacency[i, j] == 1.0:
                lines.append(f"{net.node_ids[i]}\t{net.node_ids[j]}\n")
    with open(edges_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)
    with open(nodes_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# symmetric: {'true' if net.symmetric else 'false'}\n")
        for name in net.node_ids:
            fh.write(name + "\n")


def read_edge_list(edges_path, nodes_path) -> DirectedNetwork:
    """Inverse of :func:`write_edge_list`."""
    symmetric = False
    ids: list[str] = []
    with open(nodes_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                if "symmetric:" in line:
                    symmetric = line.split("symmetric:")[1].strip() == "true"
                continue
            if line:
                ids.append(line)
    edges = []
    with open(edges_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{edges_path}:{lineno}: expected 'source<TAB>target'")
            edges.append((parts[0], parts[1]))
    # edges already contain both directions for symmetric networks; build as
    # directed and set the flag afterwards so no mirroring is invented here
    pos = {x: k for k, x in enumerate(ids)}
    adj = np.zeros((len(ids), len(ids)))
    for s, t in edges:
        if s not in pos or t not in pos:
            raise ValueError(f"edge references unknown node {s!r} or {t!r}")
        adj[pos[s], pos[t]] = 1.0
    return DirectedNetwork(adj, tuple(ids), symmetric=symmetric)
