"""Sparse undirected graphs and propagation operators.

Graphs are stored in compressed-sparse-row form without values (unweighted,
symmetric, no self-loops).  Propagation operators carry nonnegative float64
values and a cached infinity norm.  Matrix powers are never materialized for
exponent >= 2: every use goes through repeated sparse mat-vec / mat-mat
products, which is exact for the infinity norm of a nonnegative matrix
(max component of P^k applied to the all-ones vector).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .rng import stream

# Above this size the polynomial filter is applied lazily instead of being
# materialized (fill-in grows quadratically at worst).
FILTER_MATERIALIZE_LIMIT = 5000


@dataclass(frozen=True)
class DegreeStats:
    """Degree summary of an undirected graph (isolated nodes count as 0)."""

    deg_min: int
    deg_max: int
    n: int
    edge_count: int

    def __post_init__(self):
        if self.deg_min > self.deg_max:
            raise ValueError("deg_min exceeds deg_max")
        if self.n > 0 and self.deg_max >= self.n:
            raise ValueError("deg_max must be < n")


@dataclass(frozen=True)
class SparseGraph:
    """Immutable unweighted undirected graph in CSR form.

    ``row_ptr`` has length n+1; ``col_idx`` holds sorted neighbor indices per
    row.  Every undirected edge appears twice (both directions), self-loops
    are never stored.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray

    def __post_init__(self):
        self.row_ptr.setflags(write=False)
        self.col_idx.setflags(write=False)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    @property
    def edge_count(self) -> int:
        return int(self.col_idx.shape[0]) // 2

    def neighbors(self, u: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[u]:self.row_ptr[u + 1]]

    def degree_stats(self) -> DegreeStats:
        deg = self.degrees
        if self.n == 0:
            return DegreeStats(0, 0, 0, 0)
        return DegreeStats(int(deg.min()), int(deg.max()), self.n, self.edge_count)

    def undirected_edges(self) -> np.ndarray:
        """(m, 2) array of edges with u < v, in CSR order."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        mask = rows < self.col_idx
        return np.column_stack([rows[mask], self.col_idx[mask]])

    def validate(self) -> None:
        """Raise ValueError if any structural invariant is broken."""
        rp, ci = self.row_ptr, self.col_idx
        if rp.shape != (self.n + 1,) or rp[0] != 0 or rp[-1] != ci.shape[0]:
            raise ValueError("row_ptr inconsistent")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr not non-decreasing")
        if ci.size and (ci.min() < 0 or ci.max() >= self.n):
            raise ValueError("column index out of range")
        for u in range(self.n):
            nbr = ci[rp[u]:rp[u + 1]]
            if np.any(np.diff(nbr) <= 0):
                raise ValueError(f"row {u} not strictly sorted / has duplicates")
            if np.any(nbr == u):
                raise ValueError(f"self-loop stored at node {u}")
        tr = _csr_bool(self).T.tocsr()
        tr.sort_indices()
        if not (np.array_equal(tr.indptr, rp) and np.array_equal(tr.indices, ci)):
            raise ValueError("adjacency not symmetric")


def _csr_bool(g: SparseGraph) -> sp.csr_matrix:
    data = np.ones(g.col_idx.shape[0], dtype=np.float64)
    return sp.csr_matrix((data, g.col_idx, g.row_ptr), shape=(g.n, g.n))


def _ltr_row_sums(row_ptr: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    """Row sums with fixed left-to-right accumulation (cumsum is sequential)."""
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        s, e = row_ptr[i], row_ptr[i + 1]
        if e > s:
            out[i] = np.cumsum(values[s:e])[-1]
    return out


@dataclass(frozen=True)
class PropagationMatrix:
    """Sparse nonnegative operator with a cached infinity norm.

    The cached ``inf_norm`` is the exact maximum row sum under the package's
    fixed left-to-right accumulation order.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    inf_norm: float = field(default=0.0)

    def __post_init__(self):
        for arr in (self.row_ptr, self.col_idx, self.values):
            arr.setflags(write=False)
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("propagation values must be finite and nonnegative")

    @classmethod
    def from_scipy(cls, mat: sp.spmatrix) -> "PropagationMatrix":
        m = sp.csr_matrix(mat, dtype=np.float64, copy=True)
        m.sum_duplicates()
        m.sort_indices()
        m.eliminate_zeros()
        n = m.shape[0]
        rs = _ltr_row_sums(m.indptr, m.data, n)
        inf = float(rs.max()) if n else 0.0
        return cls(n=n, row_ptr=m.indptr.astype(np.int64),
                   col_idx=m.indices.astype(np.int64),
                   values=m.data.astype(np.float64), inf_norm=inf)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr),
                             shape=(self.n, self.n))

    def row_sums(self) -> np.ndarray:
        return _ltr_row_sums(self.row_ptr, self.values, self.n)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(neighbor indices, values) of row i."""
        s, e = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[s:e], self.values[s:e]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_scipy() @ x

    def matmat(self, x: np.ndarray) -> np.ndarray:
        return self.to_scipy() @ x


def build_graph(edges, n: int, on_self_loop: str = "reject") -> SparseGraph:
    """Build a symmetric, deduplicated, sorted CSR graph from edge pairs.

    ``on_self_loop`` is either "reject" (raise) or "ignore" (drop silently).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if on_self_loop not in ("reject", "ignore"):
        raise ValueError("on_self_loop must be 'reject' or 'ignore'")
    edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if edges.size:
        if edges.min() < 0 or edges.max() >= n:
            raise ValueError("edge index out of range")
        loops = edges[:, 0] == edges[:, 1]
        if loops.any():
            if on_self_loop == "reject":
                bad = edges[loops][0]
                raise ValueError(f"self-loop ({bad[0]},{bad[0]}) rejected")
            edges = edges[~loops]
    if edges.size == 0:
        return SparseGraph(n=n, row_ptr=np.zeros(n + 1, dtype=np.int64),
                           col_idx=np.zeros(0, dtype=np.int64))
    both = np.vstack([edges, edges[:, ::-1]])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    keep = np.ones(both.shape[0], dtype=bool)
    keep[1:] = np.any(both[1:] != both[:-1], axis=1)
    both = both[keep]
    counts = np.bincount(both[:, 0], minlength=n)
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    return SparseGraph(n=n, row_ptr=row_ptr, col_idx=both[:, 1].copy())


def normalized_adjacency(g: SparseGraph) -> PropagationMatrix:
    """Degree-normalized adjacency with self-loops.

    Entry (i, j) of the result is (A + I)_ij / sqrt((d_i + 1)(d_j + 1));
    isolated nodes get a diagonal entry of exactly 1.
    """
    deg = g.degrees.astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(deg + 1.0)
    a = _csr_bool(g) + sp.identity(g.n, format="csr", dtype=np.float64)
    d = sp.diags(inv_sqrt)
    return PropagationMatrix.from_scipy(d @ a @ d)


def inf_norm_power(p: PropagationMatrix, k: int) -> float:
    """Infinity norm of P^k via k sparse mat-vec products on the ones vector.

    Exact for nonnegative P; the power matrix itself is never formed.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0 or p.n == 0:
        return 1.0
    v = np.ones(p.n, dtype=np.float64)
    m = p.to_scipy()
    for _ in range(k):
        v = m @ v
    return float(v.max())


def degree_bound(s: DegreeStats) -> float:
    """Closed-form bound sqrt((deg_max + 1) / (deg_min + 1)) on the norm."""
    return float(np.sqrt((s.deg_max + 1.0) / (s.deg_min + 1.0)))


def appnp_coefficients(gamma: float, big_k: int) -> np.ndarray:
    """Filter coefficients [gamma*(1-gamma)^k for k<K] + [(1-gamma)^K]."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    if big_k < 1:
        raise ValueError("K must be >= 1")
    coeff = np.array([gamma * (1.0 - gamma) ** k for k in range(big_k)]
                     + [(1.0 - gamma) ** big_k])
    return coeff


def appnp_filter(p: PropagationMatrix, gamma: float, big_k: int) -> PropagationMatrix:
    """Materialized teleport-style polynomial filter (n <= 5000 path).

    Built by Horner recursion B <- gamma*I + (1-gamma)*P B so only partial
    filters, never raw powers, are formed.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    if big_k < 1:
        raise ValueError("K must be >= 1")
    if p.n > FILTER_MATERIALIZE_LIMIT:
        raise ValueError("graph too large to materialize filter; use appnp_apply")
    m = p.to_scipy()
    eye = sp.identity(p.n, format="csr", dtype=np.float64)
    b = gamma * eye + (1.0 - gamma) * m
    for _ in range(big_k - 1):
        b = gamma * eye + (1.0 - gamma) * (m @ b)
    return PropagationMatrix.from_scipy(b)


def appnp_apply(p: PropagationMatrix, gamma: float, big_k: int,
                x: np.ndarray) -> np.ndarray:
    """Lazy application of the teleport filter: K mat-mat products, no fill-in."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    if big_k < 1:
        raise ValueError("K must be >= 1")
    m = p.to_scipy()
    y = x
    for _ in range(big_k):
        y = gamma * x + (1.0 - gamma) * (m @ y)
    return y


def gpr_powers(p: PropagationMatrix, x: np.ndarray, big_k: int) -> np.ndarray:
    """Stack [X, PX, P^2 X, ..., P^K X], each from one mat-mat on the previous."""
    if big_k < 0:
        raise ValueError("K must be >= 0")
    if x.shape[0] != p.n:
        raise ValueError(f"dimension mismatch: X has {x.shape[0]} rows, P is {p.n}")
    out = np.empty((big_k + 1,) + x.shape, dtype=np.float64)
    out[0] = x
    m = p.to_scipy()
    for k in range(1, big_k + 1):
        out[k] = m @ out[k - 1]
    return out


def drop_edge(g: SparseGraph, prob: float, seed: int) -> SparseGraph:
    """Remove each undirected edge independently with probability ``prob``."""
    if not 0.0 <= prob <= 1.0:
        raise ValueError("drop probability must be in [0, 1]")
    edges = g.undirected_edges()
    if edges.shape[0] == 0:
        return g
    rng = stream(seed, "drop_edge")
    keep = rng.random(edges.shape[0]) >= prob
    return build_graph(edges[keep], g.n)


def sbm_generate(sizes, p_in: float, p_out: float, seed: int,
                 ) -> tuple[SparseGraph, np.ndarray]:
    """Planted-partition graph with block labels.

    Each pair (i < j) gets an edge with probability p_in inside a block and
    p_out across blocks.  Deterministic given the seed; the uniform draws are
    made for every pair in row-major order, so the same seed yields nested
    edge sets as probabilities grow.
    """
    sizes = [int(s) for s in sizes]
    if len(sizes) == 0:
        raise ValueError("block size list must be nonempty")
    if any(s <= 0 for s in sizes):
        raise ValueError("block sizes must be positive")
    for p in (p_in, p_out):
        if not 0.0 <= p <= 1.0:
            raise ValueError("probabilities must be in [0, 1]")
    n = sum(sizes)
    labels = np.repeat(np.arange(len(sizes)), sizes).astype(np.int64)
    rng = stream(seed, "sbm")
    u = rng.random((n, n))
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    iu, ju = np.triu_indices(n, k=1)
    mask = u[iu, ju] < prob[iu, ju]
    edges = np.column_stack([iu[mask], ju[mask]])
    return build_graph(edges, n), labels
