"""Directed communication graphs.

Nodes are labelled ``1..N`` at every public boundary (edge lists, files,
events). Internally the arrays are 0-based; ``out_idx``/``in_idx`` give the
0-based neighbor lists used by the numerical code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class GraphError(ValueError):
    """Invalid digraph specification."""


class NotStronglyConnected(GraphError):
    pass


@dataclass(frozen=True)
class Digraph:
    n_nodes: int
    edges: frozenset[tuple[int, int]]
    _out: tuple[tuple[int, ...], ...] = field(repr=False, compare=False, default=())
    _in: tuple[tuple[int, ...], ...] = field(repr=False, compare=False, default=())

    def out(self, i: int) -> tuple[int, ...]:
        """Out-neighbors of node ``i`` (1-based labels, sorted)."""
        return tuple(j + 1 for j in self._out[i - 1])

    def in_(self, j: int) -> tuple[int, ...]:
        """In-neighbors of node ``j`` (1-based labels, sorted)."""
        return tuple(i + 1 for i in self._in[j - 1])

    @property
    def out_idx(self) -> tuple[tuple[int, ...], ...]:
        return self._out

    @property
    def in_idx(self) -> tuple[tuple[int, ...], ...]:
        return self._in

    def adjacency(self) -> np.ndarray:
        """0/1 adjacency matrix with ``A[i-1, j-1] = 1`` for edge ``(i, j)``."""
        adj = np.zeros((self.n_nodes, self.n_nodes), dtype=np.int8)
        for i, j in self.edges:
            adj[i - 1, j - 1] = 1
        return adj

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def build_digraph(n_nodes: int, edges: Iterable[tuple[int, int]]) -> Digraph:
    if int(n_nodes) != n_nodes or n_nodes < 1:
        raise GraphError(f"n_nodes must be a positive integer, got {n_nodes!r}")
    n_nodes = int(n_nodes)
    clean = set()
    for e in edges:
        i, j = (int(v) for v in e)
        if not (1 <= i <= n_nodes and 1 <= j <= n_nodes):
            raise GraphError(f"edge ({i}, {j}) out of range 1..{n_nodes}")
        if i == j:
            raise GraphError(f"self-loop ({i}, {j}) not allowed")
        clean.add((i, j))
    out: list[list[int]] = [[] for _ in range(n_nodes)]
    inn: list[list[int]] = [[] for _ in range(n_nodes)]
    for i, j in sorted(clean):
        out[i - 1].append(j - 1)
        inn[j - 1].append(i - 1)
    return Digraph(
        n_nodes,
        frozenset(clean),
        tuple(tuple(o) for o in out),
        tuple(tuple(sorted(x)) for x in inn),
    )


def strongly_connected_components(n: int, out: list | tuple) -> list[list[int]]:
    """Tarjan's algorithm, iterative. ``out`` holds 0-based adjacency lists."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, k = work[-1]
            if k < len(out[v]):
                work[-1] = (v, k + 1)
                w = out[v][k]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


def is_strongly_connected(g: Digraph) -> bool:
    return len(strongly_connected_components(g.n_nodes, g.out_idx)) == 1


def require_strongly_connected(g: Digraph) -> None:
    if not is_strongly_connected(g):
        comps = strongly_connected_components(g.n_nodes, g.out_idx)
        labels = sorted(sorted(v + 1 for v in c) for c in comps)
        raise NotStronglyConnected(
            f"digraph is not strongly connected; components: {labels}"
        )


def random_strongly_connected(
    n_nodes: int, density: float, seed: int | np.random.Generator, max_attempts: int = 1000
) -> Digraph:
    """Sample each ordered pair as an edge with probability ``density`` and
    reject until the result is strongly connected."""
    if not 0.0 < density <= 1.0:
        raise GraphError(f"density must lie in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    if n_nodes == 1:
        return build_digraph(1, [])
    for _ in range(max_attempts):
        mask = rng.random((n_nodes, n_nodes)) < density
        np.fill_diagonal(mask, False)
        ii, jj = np.nonzero(mask)
        g = build_digraph(n_nodes, zip(ii + 1, jj + 1))
        if is_strongly_connected(g):
            return g
    raise GraphError(
        f"no strongly connected digraph after {max_attempts} attempts "
        f"(n_nodes={n_nodes}, density={density})"
    )


def read_graph(path: str | Path) -> Digraph:
    """Read ``N`` on the first data line, then one ``i j`` edge per line."""
    n_nodes = None
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if n_nodes is None:
                if len(parts) != 1:
                    raise ValueError
                n_nodes = int(parts[0])
            else:
                if len(parts) != 2:
                    raise ValueError
                edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise GraphError(f"{path}:{lineno}: cannot parse {raw!r}") from None
    if n_nodes is None:
        raise GraphError(f"{path}: missing node count")
    return build_digraph(n_nodes, edges)


def format_graph(g: Digraph) -> str:
    lines = [str(g.n_nodes)] + [f"{i} {j}" for i, j in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def write_graph(g: Digraph, path: str | Path, header: str | None = None) -> None:
    text = format_graph(g)
    if header:
        text = "".join(f"# {h}\n" for h in header.splitlines()) + text
    Path(path).write_text(text)
