"""Top-k maximum-inner-product indices: flat scan, IVF, and HNSW.

Indices are built once over a fixed vector set and queried with evolving
query vectors. The flat index is exact; IVF and HNSW trade recall for
sublinear candidate evaluations. HNSW operates on the norm-padded
MIPS-to-kNN transform so that Euclidean proximity matches inner-product
ranking.
"""
from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

__all__ = [
    "IndexConfig",
    "TopKResult",
    "FlatIndex",
    "IvfIndex",
    "HnswIndex",
    "build_index",
    "mips_to_knn",
    "measure_slack",
    "save_index",
    "load_index",
]


@dataclass(frozen=True)
class IndexConfig:
    flavor: str = "flat"
    nlist: int | None = None
    nprobe: int | None = None
    m_neighbors: int = 32
    ef_construction: int = 100
    ef_search: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.flavor not in ("flat", "ivf", "hnsw"):
            raise ValueError(f"unknown index flavor {self.flavor!r}")
        if self.m_neighbors < 2:
            raise ValueError("m_neighbors must be at least 2")

    def resolve(self, n: int) -> "IndexConfig":
        """Fill in size-dependent defaults and clamp to the dataset."""
        nlist = self.nlist
        if nlist is None:
            nlist = max(2 * int(np.ceil(np.sqrt(n))), 20)
        nlist = min(nlist, n)
        nprobe = self.nprobe
        if nprobe is None:
            nprobe = min(nlist // 4, 10)
        nprobe = max(1, min(nprobe, nlist))
        return replace(self, nlist=nlist, nprobe=nprobe)


@dataclass(frozen=True)
class TopKResult:
    indices: np.ndarray  # candidate ids, descending inner product
    scores: np.ndarray   # matching inner products
    exact: bool


def mips_to_knn(vectors: np.ndarray) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Norm-pad rows so inner-product ranking equals Euclidean ranking.

    Each row k_i maps to [k_i, sqrt(M - ||k_i||^2)] with M = max ||k_i||^2;
    queries map to [q, 0]. Inner products are preserved and every padded
    row has squared norm exactly M.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    sq = np.einsum("ij,ij->i", vectors, vectors)
    big = float(sq.max())
    pad = np.sqrt(np.maximum(big - sq, 0.0))
    padded = np.hstack([vectors, pad[:, None]])

    def transform(q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        return np.concatenate([q, [0.0]])

    return padded, transform


def _validate_vectors(vectors) -> np.ndarray:
    arr = np.ascontiguousarray(vectors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("vector set must be a nonempty 2-d array")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector entries must be finite")
    return arr


def _topk_from_scores(scores: np.ndarray, ids: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k of (score, id) with descending score, lowest id on ties."""
    if scores.size > 4096 and k < scores.size:
        part = np.argpartition(-scores, k - 1)[:k]
        scores, ids = scores[part], ids[part]
    order = np.lexsort((ids, -scores))[:k]
    return ids[order], scores[order]


class FlatIndex:
    """Exact top-k by full scan: O(nd) per query."""

    flavor = "flat"

    def __init__(self, vectors: np.ndarray, config: IndexConfig):
        self.vectors = _validate_vectors(vectors)
        self.config = config.resolve(self.vectors.shape[0])

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def query_topk(self, query: np.ndarray, k: int) -> TopKResult:
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.d,):
            raise ValueError("query dimension mismatch")
        if not 1 <= k <= self.n:
            raise ValueError("k out of range")
        scores = self.vectors @ query
        ids, top_scores = _topk_from_scores(scores, np.arange(self.n, dtype=np.int64), k)
        return TopKResult(indices=ids, scores=top_scores, exact=True)


def _kmeans(vectors: np.ndarray, nlist: int, rng: np.random.Generator, iters: int = 20):
    """Lloyd's algorithm with k-means++ seeding and empty-cluster repair."""
    n = vectors.shape[0]
    sq = np.einsum("ij,ij->i", vectors, vectors)

    # k-means++ seeding
    centroids = np.empty((nlist, vectors.shape[1]), dtype=np.float64)
    first = int(rng.integers(0, n))
    centroids[0] = vectors[first]
    dist = sq - 2 * (vectors @ centroids[0]) + centroids[0] @ centroids[0]
    dist = np.maximum(dist, 0.0)
    for j in range(1, nlist):
        total = dist.sum()
        if total <= 0:
            pick = int(rng.integers(0, n))
        else:
            pick = int(np.searchsorted(np.cumsum(dist), rng.random() * total))
            pick = min(pick, n - 1)
        centroids[j] = vectors[pick]
        cand = sq - 2 * (vectors @ centroids[j]) + centroids[j] @ centroids[j]
        dist = np.minimum(dist, np.maximum(cand, 0.0))

    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        csq = np.einsum("ij,ij->i", centroids, centroids)
        d2 = sq[:, None] - 2 * (vectors @ centroids.T) + csq[None, :]
        assign = np.argmin(d2, axis=1)
        counts = np.bincount(assign, minlength=nlist)
        for j in np.flatnonzero(counts == 0):
            # reassign the farthest point of the largest cluster
            big = int(np.argmax(np.bincount(assign, minlength=nlist)))
            members = np.flatnonzero(assign == big)
            far = members[np.argmax(d2[members, big])]
            assign[far] = j
        for j in range(nlist):
            members = np.flatnonzero(assign == j)
            if members.size:
                centroids[j] = vectors[members].mean(axis=0)
    return centroids, assign


class IvfIndex:
    """Inverted-file index: k-means cells, inner-product scan of probed cells."""

    flavor = "ivf"

    def __init__(self, vectors: np.ndarray, config: IndexConfig, *, _state=None):
        self.vectors = _validate_vectors(vectors)
        self.config = config.resolve(self.vectors.shape[0])
        if _state is not None:
            self.centroids, self.assignment = _state
        else:
            rng = np.random.default_rng(self.config.seed)
            self.centroids, self.assignment = _kmeans(self.vectors, self.config.nlist, rng)
        self.lists = [np.flatnonzero(self.assignment == j).astype(np.int64) for j in range(self.config.nlist)]

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def query_topk(self, query: np.ndarray, k: int) -> TopKResult:
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.d,):
            raise ValueError("query dimension mismatch")
        if not 1 <= k <= self.n:
            raise ValueError("k out of range")
        nprobe = self.config.nprobe
        cell_scores = self.centroids @ query
        probe, _ = _topk_from_scores(cell_scores, np.arange(self.config.nlist, dtype=np.int64), nprobe)
        cand = np.concatenate([self.lists[j] for j in probe])
        if cand.size < k:
            # probed cells too small: widen to the full set
            cand = np.arange(self.n, dtype=np.int64)
        scores = self.vectors[cand] @ query
        ids, top_scores = _topk_from_scores(scores, cand, k)
        exact = nprobe == self.config.nlist
        return TopKResult(indices=ids, scores=top_scores, exact=exact)


class HnswIndex:
    """Layered proximity graph over the norm-padded vectors.

    Build and search use the negated padded inner product as the distance
    surrogate: all padded rows share the same norm, so Euclidean order and
    inner-product order coincide.
    """

    flavor = "hnsw"

    def __init__(self, vectors: np.ndarray, config: IndexConfig, *, _state=None):
        self.vectors = _validate_vectors(vectors)
        self.config = config.resolve(self.vectors.shape[0])
        self.padded, self._transform = mips_to_knn(self.vectors)
        if _state is not None:
            self.levels, self.graphs, self.entry, self.unreached = _state
        else:
            self._build()

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def _dist(self, qp: np.ndarray, ids: np.ndarray) -> np.ndarray:
        # ordering-equivalent to Euclidean distance on padded vectors
        return -(self.padded[ids] @ qp)

    def _build(self):
        cfg = self.config
        n = self.n
        rng = np.random.default_rng(cfg.seed)
        ml = 1.0 / np.log(cfg.m_neighbors)
        u = rng.random(n)
        u[u <= 0.0] = 0.5
        self.levels = np.floor(-np.log(u) * ml).astype(np.int64)

        max_level = int(self.levels.max())
        # graphs[l][node] -> list of neighbor ids
        self.graphs: list[dict[int, list[int]]] = [dict() for _ in range(max_level + 1)]
        self.entry = 0
        entry_level = int(self.levels[0])
        for lvl in range(entry_level + 1):
            self.graphs[lvl][0] = []

        for node in range(1, n):
            qp = self.padded[node]
            node_level = int(self.levels[node])
            ep = [self.entry]
            for lvl in range(entry_level, node_level, -1):
                ep = [self._greedy_step(qp, ep[0], lvl)]
            for lvl in range(min(node_level, entry_level), -1, -1):
                found = self._search_layer(qp, ep, cfg.ef_construction, lvl)
                neighbors = [i for _, i in sorted(found)[: cfg.m_neighbors]]
                self.graphs[lvl][node] = list(neighbors)
                for nb in neighbors:
                    links = self.graphs[lvl][nb]
                    links.append(node)
                    cap = self._max_degree(lvl)
                    if len(links) > cap:
                        arr = np.asarray(links, dtype=np.int64)
                        d = self._dist(self.padded[nb], arr)
                        keep = arr[np.lexsort((arr, d))[:cap]]
                        self.graphs[lvl][nb] = keep.tolist()
                ep = [i for _, i in sorted(found)] or ep
            for lvl in range(entry_level + 1, node_level + 1):
                self.graphs[lvl][node] = []
            if node_level > entry_level:
                self.entry = node
                entry_level = node_level

        self.unreached = self._find_unreached()

    def _max_degree(self, level: int) -> int:
        return 2 * self.config.m_neighbors if level == 0 else self.config.m_neighbors

    def _greedy_step(self, qp: np.ndarray, start: int, level: int) -> int:
        cur = start
        cur_d = float(self._dist(qp, np.asarray([cur]))[0])
        graph = self.graphs[level]
        while True:
            nbrs = graph.get(cur, [])
            if not nbrs:
                return cur
            arr = np.asarray(nbrs, dtype=np.int64)
            d = self._dist(qp, arr)
            j = int(np.argmin(d))
            if d[j] < cur_d:
                cur, cur_d = int(arr[j]), float(d[j])
            else:
                return cur

    def _search_layer(self, qp: np.ndarray, entry_points: list[int], ef: int, level: int):
        """Beam search; returns a list of (dist, id) of size <= ef."""
        graph = self.graphs[level]
        visited = set(entry_points)
        ep = np.asarray(entry_points, dtype=np.int64)
        dists = self._dist(qp, ep)
        candidates = [(float(d), int(i)) for d, i in zip(dists, ep)]
        heapq.heapify(candidates)
        results = [(-d, i) for d, i in candidates]  # max-heap on dist
        heapq.heapify(results)
        while len(results) > ef:
            heapq.heappop(results)
        while candidates:
            d, cur = heapq.heappop(candidates)
            if d > -results[0][0] and len(results) >= ef:
                break
            nbrs = [i for i in graph.get(cur, []) if i not in visited]
            if not nbrs:
                continue
            visited.update(nbrs)
            arr = np.asarray(nbrs, dtype=np.int64)
            nd = self._dist(qp, arr)
            for dist, i in zip(nd, arr):
                dist, i = float(dist), int(i)
                if len(results) < ef:
                    heapq.heappush(results, (-dist, i))
                    heapq.heappush(candidates, (dist, i))
                elif dist < -results[0][0]:
                    heapq.heapreplace(results, (-dist, i))
                    heapq.heappush(candidates, (dist, i))
        return [(-md, i) for md, i in results]

    def _find_unreached(self) -> np.ndarray:
        # nodes missing from the base layer can never be returned by the
        # beam search; queries scan them explicitly as a fallback
        graph = self.graphs[0]
        seen = {self.entry}
        stack = [self.entry]
        while stack:
            cur = stack.pop()
            for nb in graph.get(cur, []):
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        missing = [i for i in range(self.n) if i not in seen]
        return np.asarray(missing, dtype=np.int64)

    def query_topk(self, query: np.ndarray, k: int) -> TopKResult:
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.d,):
            raise ValueError("query dimension mismatch")
        if not 1 <= k <= self.n:
            raise ValueError("k out of range")
        qp = self._transform(query)
        cur = self.entry
        for lvl in range(len(self.graphs) - 1, 0, -1):
            cur = self._greedy_step(qp, cur, lvl)
        ef = max(self.config.ef_search, k)
        found = self._search_layer(qp, [cur], ef, 0)
        cand = np.asarray(sorted({i for _, i in found} | set(self.unreached.tolist())), dtype=np.int64)
        scores = self.vectors[cand] @ query
        ids, top_scores = _topk_from_scores(scores, cand, min(k, cand.size))
        if ids.size < k:
            # beam returned fewer distinct nodes than k: widen to full scan
            full = self.vectors @ query
            ids, top_scores = _topk_from_scores(full, np.arange(self.n, dtype=np.int64), k)
        return TopKResult(indices=ids, scores=top_scores, exact=False)


MipsIndex = FlatIndex | IvfIndex | HnswIndex


def build_index(vectors: np.ndarray, config: IndexConfig) -> MipsIndex:
    """Build an immutable top-k inner-product index per the config flavor."""
    if config.flavor == "flat":
        return FlatIndex(vectors, config)
    if config.flavor == "ivf":
        return IvfIndex(vectors, config)
    return HnswIndex(vectors, config)


def measure_slack(index: MipsIndex, queries: np.ndarray, k: int) -> float:
    """Empirical top-k slack against a flat oracle scan.

    Returns the max over queries of (max excluded score - min included
    score), clipped at zero.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[0] == 0:
        raise ValueError("need at least one probe query")
    worst = 0.0
    for q in queries:
        got = index.query_topk(q, k)
        scores = index.vectors @ q
        inside = np.zeros(index.n, dtype=bool)
        inside[got.indices] = True
        if inside.all():
            continue
        gap = scores[~inside].max() - scores[inside].min()
        worst = max(worst, float(gap))
    return worst


# ---------------------------------------------------------------------------
# serialization: magic "FMWM", u16 version, flavor tag, little-endian payload

_MAGIC = b"FMWM"
_VERSION = 1
_FLAVOR_TAGS = {"flat": 0, "ivf": 1, "hnsw": 2}
_TAG_FLAVORS = {v: k for k, v in _FLAVOR_TAGS.items()}


def _write_array(fh, arr: np.ndarray, dtype: str):
    arr = np.ascontiguousarray(arr, dtype=dtype)
    fh.write(struct.pack("<B", len(arr.shape)))
    for s in arr.shape:
        fh.write(struct.pack("<Q", s))
    fh.write(arr.tobytes())


def _read_array(fh, dtype: str) -> np.ndarray:
    (ndim,) = struct.unpack("<B", fh.read(1))
    shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(fh.read(count * np.dtype(dtype).itemsize), dtype=dtype)
    return arr.reshape(shape).copy()


def _write_config(fh, cfg: IndexConfig):
    fh.write(struct.pack(
        "<qqqqqq",
        -1 if cfg.nlist is None else cfg.nlist,
        -1 if cfg.nprobe is None else cfg.nprobe,
        cfg.m_neighbors, cfg.ef_construction, cfg.ef_search, cfg.seed,
    ))


def _read_config(fh, flavor: str) -> IndexConfig:
    nlist, nprobe, m_neighbors, ef_c, ef_s, seed = struct.unpack("<qqqqqq", fh.read(48))
    return IndexConfig(
        flavor=flavor,
        nlist=None if nlist < 0 else nlist,
        nprobe=None if nprobe < 0 else nprobe,
        m_neighbors=m_neighbors,
        ef_construction=ef_c,
        ef_search=ef_s,
        seed=seed,
    )


def save_index(index: MipsIndex, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<H", _VERSION))
        fh.write(struct.pack("<B", _FLAVOR_TAGS[index.flavor]))
        _write_config(fh, index.config)
        _write_array(fh, index.vectors, "<f8")
        if index.flavor == "ivf":
            _write_array(fh, index.centroids, "<f8")
            _write_array(fh, index.assignment, "<i8")
        elif index.flavor == "hnsw":
            _write_array(fh, index.levels, "<i8")
            fh.write(struct.pack("<q", index.entry))
            _write_array(fh, index.unreached, "<i8")
            fh.write(struct.pack("<Q", len(index.graphs)))
            for graph in index.graphs:
                items = sorted(graph.items())
                fh.write(struct.pack("<Q", len(items)))
                for node, nbrs in items:
                    fh.write(struct.pack("<qQ", node, len(nbrs)))
                    fh.write(np.asarray(nbrs, dtype="<i8").tobytes())


def load_index(path) -> MipsIndex:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not an index file (bad magic)")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != _VERSION:
            raise ValueError(f"unsupported index format version {version}")
        (tag,) = struct.unpack("<B", fh.read(1))
        if tag not in _TAG_FLAVORS:
            raise ValueError(f"unknown index flavor tag {tag}")
        flavor = _TAG_FLAVORS[tag]
        config = _read_config(fh, flavor)
        vectors = _read_array(fh, "<f8")
        if flavor == "flat":
            return FlatIndex(vectors, config)
        if flavor == "ivf":
            centroids = _read_array(fh, "<f8")
            assignment = _read_array(fh, "<i8")
            return IvfIndex(vectors, config, _state=(centroids, assignment))
        levels = _read_array(fh, "<i8")
        (entry,) = struct.unpack("<q", fh.read(8))
        unreached = _read_array(fh, "<i8")
        (n_layers,) = struct.unpack("<Q", fh.read(8))
        graphs: list[dict[int, list[int]]] = []
        for _ in range(n_layers):
            (n_nodes,) = struct.unpack("<Q", fh.read(8))
            graph: dict[int, list[int]] = {}
            for _ in range(n_nodes):
                node, deg = struct.unpack("<qQ", fh.read(16))
                nbrs = np.frombuffer(fh.read(8 * deg), dtype="<i8")
                graph[node] = nbrs.tolist()
            graphs.append(graph)
        return HnswIndex(vectors, config, _state=(levels, graphs, entry, unreached))
