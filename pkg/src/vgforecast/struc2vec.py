"""Structural node embeddings via degree-ring similarity and biased walks.

Pipeline for one connected graph: ordered degree sequences at exact hop
distances, DTW distances between rings, a per-layer cumulative distance
recursion (layer k adds the ring-k DTW cost to the layer k-1 distance),
multilayer random walks whose within-layer step weight is exp(-distance),
and an exact-softmax skip-gram trained on the walk corpus.

The embedding matrix shares one deterministic initialisation across all
graphs of the same size for a given seed, so embedding coordinates stay
comparable across the many per-window graphs of a corpus.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .influence import node_weights
from .visibility import VisibilityGraph, vg_fast


class EmbeddingError(RuntimeError):
    """Raised when embedding training cannot proceed."""


# ---------------------------------------------------------------------------
# Degree rings and DTW
# ---------------------------------------------------------------------------

def degree_ring(g: VisibilityGraph, v: int, k: int) -> np.ndarray:
    """Sorted degrees of the nodes at shortest-path distance exactly k from v."""
    if not 0 <= v < g.n:
        raise ValueError(f"node {v} out of range")
    if k < 0:
        raise ValueError("hop count must be nonnegative")
    from .influence import _bfs_distances

    dist = _bfs_distances(g, v, cutoff=k)
    deg = g.degree_array()
    ring = np.sort(deg[dist == k])
    return ring.astype(np.int64)


@njit(cache=True)
def _dtw_kernel(a, la, b, lb, dp):
    for i in range(la + 1):
        dp[i, 0] = np.inf
    for j in range(lb + 1):
        dp[0, j] = np.inf
    dp[0, 0] = 0.0
    for i in range(1, la + 1):
        ai = a[i - 1]
        for j in range(1, lb + 1):
            bj = b[j - 1]
            c = (ai / bj if ai >= bj else bj / ai) - 1.0
            m = dp[i - 1, j - 1]
            if dp[i - 1, j] < m:
                m = dp[i - 1, j]
            if dp[i, j - 1] < m:
                m = dp[i, j - 1]
            dp[i, j] = c + m
    return dp[la, lb]


def dtw_cost(a, b) -> float:
    """DTW distance between two ordered degree sequences.

    Element cost is max/min - 1 on the paired degrees (zero degrees are
    lifted to 1; they cannot occur in a connected graph).  One empty side
    makes the distance infinite; both empty is rejected.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 and b.size == 0:
        raise ValueError("dtw_cost requires at least one nonempty sequence")
    if a.size == 0 or b.size == 0:
        return math.inf
    a = np.maximum(a, 1.0)
    b = np.maximum(b, 1.0)
    dp = np.empty((a.size + 1, b.size + 1), dtype=np.float64)
    return float(_dtw_kernel(a, a.size, b, b.size, dp))


# ---------------------------------------------------------------------------
# Structural distance layers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructuralDistances:
    """Cumulative per-layer structural distances; inf marks undefined pairs."""

    k_max: int
    w: np.ndarray  # (k_max + 1, n, n) float64

    @property
    def n(self) -> int:
        return self.w.shape[1]


def _csr(g: VisibilityGraph) -> tuple[np.ndarray, np.ndarray]:
    indptr = np.zeros(g.n + 1, dtype=np.int64)
    for i in range(g.n):
        indptr[i + 1] = indptr[i] + len(g.neighbors(i))
    indices = np.empty(indptr[-1], dtype=np.int64)
    for i in range(g.n):
        indices[indptr[i]:indptr[i + 1]] = g.neighbors(i)
    return indptr, indices


@njit(cache=True)
def _all_pairs_bfs(n, indptr, indices):
    dist = np.full((n, n), -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for s in range(n):
        head = 0
        tail = 0
        dist[s, s] = 0
        queue[tail] = s
        tail += 1
        while head < tail:
            u = queue[head]
            head += 1
            du = dist[s, u]
            for p in range(indptr[u], indptr[u + 1]):
                v = indices[p]
                if dist[s, v] < 0:
                    dist[s, v] = du + 1
                    queue[tail] = v
                    tail += 1
    return dist


@njit(cache=True)
def _layer_matrices(deg, dist, k_max):
    n = deg.shape[0]
    rings = np.zeros((k_max + 1, n, n), dtype=np.float64)
    sizes = np.zeros((k_max + 1, n), dtype=np.int64)
    for v in range(n):
        for u in range(n):
            d = dist[v, u]
            if 0 <= d <= k_max:
                val = deg[u] if deg[u] >= 1.0 else 1.0
                rings[d, v, sizes[d, v]] = val
                sizes[d, v] += 1
    for k in range(k_max + 1):
        for v in range(n):
            rings[k, v, :sizes[k, v]] = np.sort(rings[k, v, :sizes[k, v]])
    w = np.full((k_max + 1, n, n), np.inf, dtype=np.float64)
    dp = np.empty((n + 1, n + 1), dtype=np.float64)
    for k in range(k_max + 1):
        for u in range(n):
            w[k, u, u] = 0.0  # identical rings even when empty
            for v in range(u + 1, n):
                prev = 0.0 if k == 0 else w[k - 1, u, v]
                if not np.isfinite(prev):
                    continue
                la = sizes[k, u]
                lb = sizes[k, v]
                if la == 0 or lb == 0:
                    continue
                cost = _dtw_kernel(rings[k, u], la, rings[k, v], lb, dp)
                w[k, u, v] = prev + cost
                w[k, v, u] = prev + cost
    return w


def structural_distances(g: VisibilityGraph, k_max_cap: int = 5) -> StructuralDistances:
    """Cumulative ring-DTW distances for layers 0..min(diameter, cap)."""
    indptr, indices = _csr(g)
    dist = _all_pairs_bfs(g.n, indptr, indices)
    if dist.min() < 0:
        raise ValueError("graph must be connected")
    diameter = int(dist.max())
    k_max = min(diameter, k_max_cap)
    deg = g.degree_array().astype(np.float64)
    w = _layer_matrices(deg, dist, k_max)
    return StructuralDistances(k_max=k_max, w=w)


# ---------------------------------------------------------------------------
# Multilayer walks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WalkParams:
    walks_per_node: int = 20
    walk_length: int = 10
    window: int = 5
    seed: int = 0
    q_stay: float = 0.3


@dataclass(frozen=True)
class WalkCorpus:
    walks: np.ndarray  # (n_walks, walk_length) int32
    params: WalkParams


@njit(cache=True)
def _sm64(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def _u01(z):
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _walk_kernel(cum, total, has_tgt, up_w, q_stay, wpn, wl, seed):
    n_layers, n, _ = cum.shape
    walks = np.empty((wpn * n, wl), dtype=np.int32)
    state = np.uint64(seed)
    idx = 0
    for _ in range(wpn):
        for start in range(n):
            u = start
            k = 0
            walks[idx, 0] = start
            pos = 1
            guard = 0
            max_guard = 1000 * wl
            while pos < wl and guard < max_guard:
                guard += 1
                state, z = _sm64(state)
                r = _u01(z)
                can_up = k + 1 < n_layers and has_tgt[k + 1, u]
                can_down = k > 0
                stay = r < q_stay or not (can_up or can_down)
                if not has_tgt[k, u]:
                    stay = False
                if stay:
                    state, z = _sm64(state)
                    r3 = _u01(z) * total[k, u]
                    v = 0
                    while v < n - 1 and not (r3 < cum[k, u, v]):
                        v += 1
                    walks[idx, pos] = v
                    pos += 1
                    u = v
                else:
                    if can_up and can_down:
                        state, z = _sm64(state)
                        pu = up_w[k, u] / (up_w[k, u] + 1.0)
                        k = k + 1 if _u01(z) < pu else k - 1
                    elif can_up:
                        k += 1
                    elif can_down:
                        k -= 1
            while pos < wl:
                walks[idx, pos] = u
                pos += 1
            idx += 1
    return walks


def multilayer_walks(distances: StructuralDistances, params: WalkParams) -> WalkCorpus:
    """Biased walks over the layered similarity graphs.

    Within layer k the step weight from u to v is exp(-w_k(u, v)).  Between
    steps the walker stays in its layer with probability q_stay, otherwise
    moves up with weight log(gamma + e) or down with weight 1, where gamma
    counts u's above-average similarities in the current layer.  Only
    within-layer steps emit nodes.
    """
    if params.walk_length < 2:
        raise ValueError("walk_length must be >= 2")
    if params.walks_per_node < 1:
        raise ValueError("walks_per_node must be >= 1")
    w = distances.w
    n_layers, n, _ = w.shape
    sim = np.where(np.isfinite(w), np.exp(-w), 0.0)
    for k in range(n_layers):
        np.fill_diagonal(sim[k], 0.0)
    total = sim.sum(axis=2)
    cum = np.cumsum(sim, axis=2)
    has_tgt = total > 0.0
    up_w = np.ones((n_layers, n), dtype=np.float64)
    for k in range(n_layers):
        defined = sim[k][sim[k] > 0.0]
        avg = defined.mean() if defined.size else 0.0
        gamma = (sim[k] > avg).sum(axis=1)
        up_w[k] = np.log(gamma + math.e)
    walks = _walk_kernel(
        cum, total, has_tgt.astype(np.uint8), up_w,
        float(params.q_stay), int(params.walks_per_node),
        int(params.walk_length), np.uint64(params.seed & (2**64 - 1)),
    )
    return WalkCorpus(walks=walks, params=params)


# ---------------------------------------------------------------------------
# Exact-softmax skip-gram
# ---------------------------------------------------------------------------

def context_pairs(corpus: WalkCorpus) -> np.ndarray:
    """(center, context) pairs from a symmetric window over each walk."""
    walks = corpus.walks
    win = corpus.params.window
    n_walks, wl = walks.shape
    pairs = []
    for w in range(n_walks):
        for c in range(wl):
            lo = max(0, c - win)
            hi = min(wl, c + win + 1)
            for p in range(lo, hi):
                if p != c:
                    pairs.append((walks[w, c], walks[w, p]))
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


@njit(cache=True)
def _sgd_kernel(phi, psi, pairs, epochs, lr0, lr_min):
    n_pairs = pairs.shape[0]
    n, dim = phi.shape
    losses = np.zeros(epochs, dtype=np.float64)
    total = epochs * n_pairs
    upd = 0
    s = np.empty(n, dtype=np.float64)
    p = np.empty(n, dtype=np.float64)
    q = np.empty(dim, dtype=np.float64)
    phiu = np.empty(dim, dtype=np.float64)
    for ep in range(epochs):
        acc = 0.0
        for ip in range(n_pairs):
            u = pairs[ip, 0]
            v = pairs[ip, 1]
            lr = lr0 * (1.0 - upd / total)
            if lr < lr_min:
                lr = lr_min
            upd += 1
            for e in range(dim):
                phiu[e] = phi[u, e]
            mx = -1.0e300
            for w in range(n):
                acc_s = 0.0
                for e in range(dim):
                    acc_s += psi[w, e] * phiu[e]
                s[w] = acc_s
                if acc_s > mx:
                    mx = acc_s
            z_norm = 0.0
            for w in range(n):
                p[w] = np.exp(s[w] - mx)
                z_norm += p[w]
            for w in range(n):
                p[w] /= z_norm
            acc += -(s[v] - mx - np.log(z_norm))
            for e in range(dim):
                qe = -psi[v, e]
                for w in range(n):
                    qe += p[w] * psi[w, e]
                q[e] = qe
            for w in range(n):
                coef = lr * (p[w] - (1.0 if w == v else 0.0))
                for e in range(dim):
                    psi[w, e] -= coef * phiu[e]
            for e in range(dim):
                phi[u, e] -= lr * q[e]
        losses[ep] = acc / n_pairs
    return losses


def skipgram_loss_and_grad(
    phi: np.ndarray, psi: np.ndarray, pairs: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean negative log likelihood of context given center, with gradients.

    ``phi`` holds the center (hidden-layer) vectors that become the node
    embeddings; ``psi`` holds the context/output vectors.  The likelihood
    is the exact softmax over the whole vocabulary.
    """
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    loss = 0.0
    gphi = np.zeros_like(phi)
    gpsi = np.zeros_like(psi)
    for u, v in pairs:
        s = psi @ phi[u]
        mx = s.max()
        ex = np.exp(s - mx)
        z_norm = ex.sum()
        p = ex / z_norm
        loss += -(s[v] - mx - np.log(z_norm))
        coef = p.copy()
        coef[v] -= 1.0
        gpsi += np.outer(coef, phi[u])
        gphi[u] += coef @ psi
    k = len(pairs)
    return loss / k, gphi / k, gpsi / k


def initial_embedding(n: int, dim: int, seed: int) -> np.ndarray:
    """Deterministic start shared by every graph of size n under one seed.

    Sharing the start across graphs keeps embedding coordinates comparable
    between the many small per-window graphs of a corpus.  The +-0.5 range
    suits the tiny vocabularies here; the usual 1/dim shrink targets
    word-scale vocabularies and starves downstream consumers of scale.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), n, dim]))
    return rng.uniform(-0.5, 0.5, size=(n, dim))


@dataclass(frozen=True)
class SkipGramResult:
    """Trained center (embedding) and context matrices with per-epoch losses."""

    embedding: np.ndarray  # (n, dim) -- the node embeddings
    context: np.ndarray    # (n, dim)
    losses: np.ndarray     # (epochs,)

    def predict_proba(self, u: int) -> np.ndarray:
        s = self.context @ self.embedding[u]
        ex = np.exp(s - s.max())
        return ex / ex.sum()


def train_skipgram(
    corpus: WalkCorpus,
    n: int,
    dim: int,
    epochs: int = 5,
    lr: float = 0.025,
    init: np.ndarray | None = None,
    seed: int = 0,
    lr_min: float = 1e-4,
) -> SkipGramResult:
    """Train embeddings on a walk corpus with full-vocabulary softmax SGD.

    Center vectors start from the shared deterministic initialisation (or
    ``init``); context vectors start at zero, the usual skip-gram choice.
    """
    if corpus.walks.size == 0:
        raise ValueError("walk corpus is empty")
    if dim < 2:
        raise ValueError("embedding dimension must be >= 2")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if corpus.walks.max() >= n:
        raise ValueError("walk corpus references nodes outside the vocabulary")
    phi = initial_embedding(n, dim, seed).copy() if init is None else np.array(init, dtype=np.float64)
    if phi.shape != (n, dim):
        raise ValueError(f"init shape {phi.shape} does not match ({n}, {dim})")
    psi = np.zeros((n, dim), dtype=np.float64)
    pairs = context_pairs(corpus)
    losses = _sgd_kernel(phi, psi, pairs, int(epochs), float(lr), float(lr_min))
    for ep, val in enumerate(losses):
        if not np.isfinite(val):
            raise EmbeddingError(f"skip-gram training diverged at epoch {ep + 1}")
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(psi))):
        raise EmbeddingError(f"skip-gram training diverged at epoch {len(losses)}")
    return SkipGramResult(embedding=phi, context=psi, losses=losses)


# ---------------------------------------------------------------------------
# Per-window embedding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmbedConfig:
    dim: int = 64
    k_max: int = 5
    walks_per_node: int = 20
    walk_length: int = 10
    window: int = 5
    epochs: int = 5
    lr: float = 0.025
    q_stay: float = 0.3
    ci_l: int = 2
    ci_normalize: bool = True
    seed: int = 0

    def cache_token(self) -> str:
        fields = (
            self.dim, self.k_max, self.walks_per_node, self.walk_length,
            self.window, self.epochs, self.lr, self.q_stay, self.ci_l,
            self.ci_normalize, self.seed,
        )
        return "|".join(repr(f) for f in fields)


@dataclass(frozen=True)
class WindowStructure:
    """Embeddings plus node weights for the six channels of one window."""

    embeddings: np.ndarray  # (6, T, dim)
    ci: np.ndarray          # (6, T) -- the form fed to temporal attention
    ci_raw: np.ndarray      # (6, T)


def window_content_hash(values: np.ndarray, cfg: EmbedConfig) -> str:
    """Content hash of a 6xT window under an embedding configuration."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(values, dtype=np.float64).tobytes())
    h.update(cfg.cache_token().encode())
    return h.hexdigest()


def _series_seed(cfg_seed: int, series: np.ndarray) -> int:
    h = hashlib.sha256()
    h.update(int(cfg_seed).to_bytes(8, "little", signed=True))
    h.update(np.ascontiguousarray(series, dtype=np.float64).tobytes())
    return int.from_bytes(h.digest()[:8], "little")


def embed_series(series: np.ndarray, cfg: EmbedConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Embed one positive series; returns (matrix, ci_attention, ci_raw)."""
    g = vg_fast(series)
    nw = node_weights(g, cfg.ci_l)
    ci_vec = nw.normalized if cfg.ci_normalize else nw.raw
    sd = structural_distances(g, cfg.k_max)
    params = WalkParams(
        walks_per_node=cfg.walks_per_node,
        walk_length=cfg.walk_length,
        window=cfg.window,
        seed=_series_seed(cfg.seed, series),
        q_stay=cfg.q_stay,
    )
    corpus = multilayer_walks(sd, params)
    result = train_skipgram(
        corpus, g.n, cfg.dim, epochs=cfg.epochs, lr=cfg.lr, seed=cfg.seed,
    )
    return result.embedding, ci_vec, nw.raw


def embed_window(values: np.ndarray, cfg: EmbedConfig) -> WindowStructure:
    """Embed all six channels of a 6xT window matrix."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != 6:
        raise ValueError(f"expected a 6xT window matrix, got shape {values.shape}")
    n_ch, T = values.shape
    emb = np.empty((n_ch, T, cfg.dim), dtype=np.float64)
    ci_att = np.empty((n_ch, T), dtype=np.float64)
    ci_raw = np.empty((n_ch, T), dtype=np.float64)
    for ch in range(n_ch):
        phi, att, raw = embed_series(values[ch], cfg)
        emb[ch] = phi
        ci_att[ch] = att
        ci_raw[ch] = raw
    return WindowStructure(embeddings=emb, ci=ci_att, ci_raw=ci_raw)
