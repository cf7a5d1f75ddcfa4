"""Sparse contiguity weights over a region lattice.

Weights live in CSR-style arrays (indptr/indices/weights) with neighbor
indices sorted within each row. Structures are always symmetric (i is a
neighbor of j iff j is a neighbor of i); weight values may differ per
direction after row standardization. Instances are immutable; transforms
return new objects.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import EdgeOutOfRange, MalformedInput, SelfEdge
from .lattice import RegionLattice

QUEEN = "queen"
ROOK = "rook"


@dataclass(frozen=True)
class SpatialWeights:
    """Immutable sparse connectivity matrix."""

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    standardized: bool
    s0: float

    def __post_init__(self) -> None:
        for arr in (self.indptr, self.indices, self.weights):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def cardinalities(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    def islands(self) -> list[int]:
        """Region indices with no neighbors, ascending."""
        return np.nonzero(self.cardinalities == 0)[0].tolist()

    @property
    def n_islands(self) -> int:
        return int(np.sum(self.cardinalities == 0))


def _csr_from_pairs(n: int, ii: np.ndarray, jj: np.ndarray, ww: np.ndarray) -> SpatialWeights:
    order = np.lexsort((jj, ii))
    ii, jj, ww = ii[order], jj[order], ww[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(ii, minlength=n), out=indptr[1:])
    return SpatialWeights(indptr, jj.astype(np.int64), ww.astype(np.float64),
                          standardized=False, s0=float(ww.sum()))


def from_edge_list(n: int, edges) -> SpatialWeights:
    """Binary symmetric weights from undirected (i, j) pairs.

    Duplicate edges collapse; self-edges and out-of-range indices are errors.
    """
    e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    e = e.reshape(-1, 2)
    if e.size:
        if np.any(e[:, 0] == e[:, 1]):
            bad = e[e[:, 0] == e[:, 1]][0]
            raise SelfEdge(f"self-edge ({bad[0]}, {bad[0]})")
        if e.min() < 0 or e.max() >= n:
            raise EdgeOutOfRange(f"edge index outside [0, {n})")
        both = np.concatenate([e, e[:, ::-1]])
        keys = np.unique(both[:, 0] * np.int64(n) + both[:, 1])
        ii, jj = keys // n, keys % n
    else:
        ii = jj = np.empty(0, dtype=np.int64)
    return _csr_from_pairs(n, ii, jj, np.ones(len(ii)))


def build_contiguity(
    lattice: RegionLattice, rule: str = QUEEN, snap_tol: float = 1e-7
) -> SpatialWeights:
    """Binary contiguity weights from shared boundary geometry.

    QUEEN joins regions sharing at least one vertex, ROOK regions sharing
    at least one full edge segment. Vertices are snapped to a grid of pitch
    ``snap_tol`` degrees before matching, which absorbs coordinate
    round-off in published boundary files.
    """
    rule = rule.lower()
    if rule not in (QUEEN, ROOK):
        raise MalformedInput(f"contiguity rule must be queen or rook, got {rule!r}")
    if snap_tol <= 0:
        raise MalformedInput("snap_tol must be positive")

    buckets: dict[tuple, set[int]] = {}
    inv = 1.0 / snap_tol
    for pos, polys in enumerate(lattice.geometries):
        for poly in polys:
            for ring in poly:
                snapped = np.round(ring * inv).astype(np.int64)
                if rule == QUEEN:
                    for v in range(len(snapped) - 1):
                        buckets.setdefault((snapped[v, 0], snapped[v, 1]), set()).add(pos)
                else:
                    for v in range(len(snapped) - 1):
                        a = (snapped[v, 0], snapped[v, 1])
                        b = (snapped[v + 1, 0], snapped[v + 1, 1])
                        if a == b:
                            continue
                        key = (a, b) if a <= b else (b, a)
                        buckets.setdefault(key, set()).add(pos)

    pairs: set[tuple[int, int]] = set()
    for members in buckets.values():
        if len(members) > 1:
            mm = sorted(members)
            for a in range(len(mm)):
                for b in range(a + 1, len(mm)):
                    pairs.add((mm[a], mm[b]))
    return from_edge_list(lattice.n, sorted(pairs))


def row_standardize(w: SpatialWeights) -> SpatialWeights:
    """Scale each non-island row to sum to one; islands stay empty.

    Already-standardized inputs are returned unchanged, which makes the
    transform exactly idempotent.
    """
    if w.standardized:
        return w
    card = w.cardinalities
    sums = np.zeros(w.n)
    nonempty = card > 0
    if w.weights.size:
        sums[nonempty] = np.add.reduceat(w.weights, w.indptr[:-1][nonempty])
    scale = np.repeat(np.divide(1.0, sums, out=np.zeros(w.n), where=nonempty), card)
    new_weights = w.weights * scale
    return SpatialWeights(
        w.indptr.copy(), w.indices.copy(), new_weights,
        standardized=True, s0=float(new_weights.sum()),
    )


def weights_to_csv(w: SpatialWeights) -> str:
    """Edge-list CSV with a `# n=<count> standardized=<bool>` header line."""
    out = io.StringIO()
    out.write(f"# n={w.n} standardized={'true' if w.standardized else 'false'}\n")
    out.write("i,j,w\n")
    for i in range(w.n):
        lo, hi = w.indptr[i], w.indptr[i + 1]
        for t in range(lo, hi):
            out.write(f"{i},{w.indices[t]},{format(w.weights[t], '.17g')}\n")
    return out.getvalue()


def weights_from_csv(data: bytes | str) -> SpatialWeights:
    """Inverse of :func:`weights_to_csv`."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.splitlines()
    if not lines or not lines[0].startswith("# n="):
        raise MalformedInput("weights CSV must start with '# n=<count> standardized=<bool>'")
    try:
        n_part, std_part = lines[0][2:].split()
        n = int(n_part.split("=")[1])
        standardized = {"true": True, "false": False}[std_part.split("=")[1]]
    except (ValueError, KeyError, IndexError):
        raise MalformedInput(f"bad weights header {lines[0]!r}") from None

    ii: list[int] = []
    jj: list[int] = []
    ww: list[float] = []
    for lno, line in enumerate(lines[1:], start=2):
        if not line or line == "i,j,w":
            continue
        try:
            a, b, v = line.split(",")
            i, j, value = int(a), int(b), float(v)
        except ValueError:
            raise MalformedInput(f"bad weights row at line {lno}: {line!r}") from None
        if i == j:
            raise SelfEdge(f"self-edge ({i}, {i}) at line {lno}")
        if not 0 <= i < n or not 0 <= j < n:
            raise EdgeOutOfRange(f"edge ({i}, {j}) outside [0, {n})")
        ii.append(i)
        jj.append(j)
        ww.append(value)

    w = _csr_from_pairs(n, np.asarray(ii, np.int64), np.asarray(jj, np.int64), np.asarray(ww))
    directed = set(zip(ii, jj))
    if any((j, i) not in directed for i, j in directed):
        raise MalformedInput("weights CSV is not structurally symmetric")
    if len(directed) != len(ii):
        raise MalformedInput("weights CSV repeats an (i, j) entry")
    return SpatialWeights(w.indptr, w.indices, w.weights, standardized=standardized, s0=w.s0)
