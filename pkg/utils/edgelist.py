# utils/edgelist.py
"""
Edge-list text format: a header line "N <n>", then one "i j" pair per line
(0-indexed, whitespace separated). Blank lines and '#' comments are ignored.
"""
from pathlib import Path

from graphs import Graph


def parse_edgelist(text: str) -> Graph:
    n = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if len(parts) != 2 or parts[0] != "N":
                raise ValueError(f"line {lineno}: expected header 'N <n>', got {raw.strip()!r}")
            try:
                n = int(parts[1])
            except ValueError:
                raise ValueError(f"line {lineno}: node count {parts[1]!r} is not an integer") from None
            continue
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'i j', got {raw.strip()!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"line {lineno}: node indices must be integers, got {raw.strip()!r}") from None
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"line {lineno}: link ({i}, {j}) outside 0..{n - 1}")
        if i == j:
            raise ValueError(f"line {lineno}: self-loop on node {i}")
        edges.append((i, j))
    if n is None:
        raise ValueError("edge list has no 'N <n>' header")
    return Graph.from_edges(n, edges)


def format_edgelist(g: Graph) -> str:
    lines = [f"N {g.n}"] + [f"{i} {j}" for i, j in g.edges()]
    return "\n".join(lines) + "\n"


def read_edgelist(path) -> Graph:
    return parse_edgelist(Path(path).read_text(encoding="utf-8"))


def write_edgelist(g: Graph, path) -> Path:
    path = Path(path)
    path.write_text(format_edgelist(g), encoding="utf-8")
    return path
