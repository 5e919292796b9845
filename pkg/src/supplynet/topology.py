"""Degree statistics, power-law tail fits, k_nn, clustering and KL divergence."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import special

from .model import CommunicationNetwork, SupplyNetwork, ValidationError

KL_FLOOR = 1e-12


@dataclass(frozen=True)
class DegreeStats:
    pmf: dict[int, float]
    ccdf: dict[int, float]
    mean_degree: float


@dataclass(frozen=True)
class KLResult:
    value: float
    floored: bool

    def __float__(self):
        return self.value


def _undirected_pairs(net) -> tuple[np.ndarray, np.ndarray, int]:
    """Unique undirected (lo, hi) index pairs of either network type."""
    if isinstance(net, CommunicationNetwork):
        return np.asarray(net.u), np.asarray(net.v), net.n
    if isinstance(net, SupplyNetwork):
        lo = np.minimum(net.src, net.dst)
        hi = np.maximum(net.src, net.dst)
        pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if lo.size else np.empty((0, 2), np.int64)
        return pairs[:, 0], pairs[:, 1], net.n
    raise TypeError(f"unsupported network type {type(net).__name__}")


def degrees(net, mode: str = "total") -> np.ndarray:
    """Per-node degree; ``mode`` is total, in, out, or undirected."""
    if isinstance(net, CommunicationNetwork):
        if mode not in ("total", "undirected"):
            raise ValueError("communication networks are undirected")
        return net.degrees()
    if mode == "total":
        return net.in_degrees() + net.out_degrees()
    if mode == "in":
        return net.in_degrees()
    if mode == "out":
        return net.out_degrees()
    if mode == "undirected":
        u, v, n = _undirected_pairs(net)
        return np.bincount(u, minlength=n) + np.bincount(v, minlength=n)
    raise ValueError(f"unknown degree mode {mode!r}")


def pmf_from_degrees(k: np.ndarray, positive_only: bool = False) -> dict[int, float]:
    k = np.asarray(k, dtype=np.int64)
    if positive_only:
        k = k[k > 0]
    if k.size == 0:
        return {}
    vals, counts = np.unique(k, return_counts=True)
    return {int(a): c / k.size for a, c in zip(vals, counts)}


def degree_stats(net, mode: str = "total") -> DegreeStats:
    k = degrees(net, mode)
    if k.size == 0:
        raise ValidationError("degree statistics need a non-empty network")
    vals, counts = np.unique(k, return_counts=True)
    p = counts / k.size
    tail = 1.0 - np.cumsum(p)
    tail[tail < 0] = 0.0
    return DegreeStats(
        pmf={int(a): float(b) for a, b in zip(vals, p)},
        ccdf={int(a): float(b) for a, b in zip(vals, tail)},
        mean_degree=float(k.mean()),
    )


def sample_discrete_powerlaw(n: int, alpha: float, kmin: int, rng: np.random.Generator, kmax: int = 10**7) -> np.ndarray:
    """Exact draws from p(k) ∝ k^-alpha for kmin <= k, truncated at ``kmax``.

    Inverse-transform sampling on the Hurwitz-zeta survival function.
    """
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    u = rng.random(n)
    norm = special.zeta(alpha, kmin) - special.zeta(alpha, kmax + 1)

    def surv(k):
        return (special.zeta(alpha, k) - special.zeta(alpha, kmax + 1)) / norm

    # smallest k with surv(k + 1) < u, found by bisection on a shared bracket
    lo = np.full(n, kmin, dtype=np.int64)
    hi = np.full(n, kmax, dtype=np.int64)
    while np.any(lo < hi):
        mid = (lo + hi) // 2
        go_right = surv(mid + 1) >= u
        lo = np.where(go_right, mid + 1, lo)
        hi = np.where(go_right, hi, mid)
    return lo


def powerlaw_tail_fit(k, kmin: int, min_tail: int = 10) -> tuple[float, float]:
    """Discrete power-law exponent of the tail ``k >= kmin`` by approximate MLE.

    Returns ``(alpha, stderr)`` with ``alpha = 1 + n / sum(ln(k / (kmin - 1/2)))``
    and ``stderr = (alpha - 1) / sqrt(n)``.
    """
    if kmin < 1:
        raise ValidationError("kmin must be at least 1", field="kmin")
    k = np.asarray(k, dtype=float)
    tail = k[k >= kmin]
    if tail.size < min_tail:
        raise ValidationError(f"only {tail.size} observations >= kmin={kmin}, need {min_tail}", field="kmin")
    if np.all(tail == tail[0]):
        raise ValidationError("degenerate tail: all observations are equal", field="kmin")
    logs = np.log(tail / (kmin - 0.5))
    s = float(logs.sum())
    if s <= 0 or not math.isfinite(s):
        raise ValidationError("degenerate tail: log-sum is not positive", field="kmin")
    alpha = 1.0 + tail.size / s
    return alpha, (alpha - 1.0) / math.sqrt(tail.size)


def _adjacency(net) -> list[np.ndarray]:
    u, v, n = _undirected_pairs(net)
    a = np.concatenate([u, v])
    b = np.concatenate([v, u])
    order = np.lexsort((b, a))
    a, b = a[order], b[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(a, minlength=n), out=ptr[1:])
    return [b[ptr[i]:ptr[i + 1]] for i in range(n)]


def knn_per_node(net) -> np.ndarray:
    """Average neighbour degree of each node (NaN for isolated nodes)."""
    u, v, n = _undirected_pairs(net)
    k = (np.bincount(u, minlength=n) + np.bincount(v, minlength=n)).astype(float)
    s = np.bincount(u, weights=k[v], minlength=n) + np.bincount(v, weights=k[u], minlength=n)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(k > 0, s / k, np.nan)


def knn_curve(net) -> dict[int, float]:
    """Mean nearest-neighbour degree as a function of degree (undirected view)."""
    knn = knn_per_node(net)
    k = degrees(net, "undirected")
    out = {}
    for deg in np.unique(k[k > 0]):
        out[int(deg)] = float(np.mean(knn[k == deg]))
    return out


def triangles_per_node(net) -> np.ndarray:
    adj = _adjacency(net)
    sets = [set(a.tolist()) for a in adj]
    t = np.zeros(len(adj), dtype=np.int64)
    # triangle (i, j, l) is seen from i once via j and once via l
    for i, nb in enumerate(adj):
        s = sets[i]
        cnt = 0
        for j in nb:
            cnt += len(s & sets[j])
        t[i] = cnt // 2
    return t


def local_clustering(net) -> np.ndarray:
    """c_i = 2 t_i / (k_i (k_i - 1)); NaN where k_i < 2."""
    t = triangles_per_node(net).astype(float)
    k = degrees(net, "undirected").astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(k >= 2, 2.0 * t / (k * (k - 1.0)), np.nan)


def clustering_curve(net) -> tuple[dict[int, float], float]:
    """Mean local clustering per degree and overall, over nodes with k >= 2."""
    c = local_clustering(net)
    k = degrees(net, "undirected")
    ok = ~np.isnan(c)
    curve = {int(deg): float(np.mean(c[ok & (k == deg)])) for deg in np.unique(k[ok])}
    overall = float(np.mean(c[ok])) if np.any(ok) else 0.0
    return curve, overall


def kl_divergence(p: Mapping[int, float], q: Mapping[int, float], floor: float = KL_FLOOR, tol: float = 1e-9) -> KLResult:
    """KL(P || Q) in nats over the support of P; Q is floored at ``floor``."""
    for name, d in (("P", p), ("Q", q)):
        total = math.fsum(d.values())
        if abs(total - 1.0) > tol or any(x < 0 for x in d.values()):
            raise ValidationError(f"{name} is not a normalised distribution (sum={total})")
    value = 0.0
    floored = False
    terms = []
    for k, pk in p.items():
        if pk <= 0:
            continue
        qk = q.get(k, 0.0)
        if qk < floor:
            qk = floor
            floored = True
        terms.append(pk * math.log(pk / qk))
    value = math.fsum(terms)
    return KLResult(value, floored)


def network_summary(net, name: str = "") -> dict:
    """Row of the network-characteristics table: <k>, <c>, random p, <k_nn>."""
    k = degrees(net, "undirected")
    n = k.size
    mean_k = float(k.mean()) if n else 0.0
    _, mean_c = clustering_curve(net)
    knn = knn_per_node(net)
    return {
        "network": name,
        "n": int(n),
        "mean_degree": mean_k,
        "mean_clustering": mean_c,
        "random_p": mean_k / (n - 1) if n > 1 else 0.0,
        "mean_knn": float(np.nanmean(knn)) if np.any(~np.isnan(knn)) else 0.0,
    }
