"""Generalized Leontief production parameters and the cascade impact matrices.

Index convention: every impact matrix is stored with the *supplier* on the
row and the *buyer* on the column when it feeds the downstream shock
(``lambda_d[j, i]`` multiplies the loss of supplier j as seen by buyer i).
``lambda_u`` follows the printed ``[customer, supplier]`` layout, so for a
supplier ``i`` with positive out-strength its column sums to one.

Only arcs with positive weight enter the matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np
import scipy.sparse as sp

from ..model import LEONTIEF, SupplyNetwork


@dataclass(frozen=True)
class ProductionSpec:
    """Per-firm production parameters derived from the network.

    The input table has one row per (buyer, input sector) pair with positive
    inflow: ``input_buyer``, ``input_sector`` (sector code), ``input_flow``,
    ``input_essential`` and ``alpha_k`` (input-share parameter of that type).
    ``alpha`` is the overall input share and ``beta`` the production level
    attainable on essential inputs alone (both per firm).

    Firms without customers have no output to normalise by; their alphas are
    0, i.e. shares impose no constraint, and ``beta`` equals the (zero)
    out-strength. Firms without inputs have ``beta = out-strength``.
    """

    sectors: tuple[str, ...]
    input_buyer: np.ndarray
    input_sector: np.ndarray
    input_flow: np.ndarray
    input_essential: np.ndarray
    alpha_k: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    arc_essential: np.ndarray

    def _rows(self, i: int) -> np.ndarray:
        lo, hi = np.searchsorted(self.input_buyer, [i, i + 1])
        return np.arange(lo, hi)

    def essential_inputs(self, i: int) -> frozenset[str]:
        r = self._rows(i)
        return frozenset(self.sectors[k] for k in self.input_sector[r][self.input_essential[r]])

    def nonessential_inputs(self, i: int) -> frozenset[str]:
        r = self._rows(i)
        return frozenset(self.sectors[k] for k in self.input_sector[r][~self.input_essential[r]])

    def input_shares(self, i: int) -> dict[str, float]:
        r = self._rows(i)
        return {self.sectors[k]: float(a) for k, a in zip(self.input_sector[r], self.alpha_k[r])}


def derive_production_spec(
    net: SupplyNetwork,
    essential_overrides: Mapping[tuple[str, str], bool] | None = None,
) -> ProductionSpec:
    """Split every firm's inputs into essential and non-essential types.

    Leontief firms treat all input sectors as essential, linear firms none.
    ``essential_overrides`` maps ``(firm sector, input sector)`` to a forced
    essentiality flag.
    """
    codes, sec = net.sector_codes()
    nsec = len(codes)
    pos = net.weight > 0
    src, dst, w = net.src[pos], net.dst[pos], net.weight[pos]

    key = dst * nsec + sec[src]
    uniq, inv = np.unique(key, return_inverse=True)
    flow = np.bincount(inv, weights=w, minlength=uniq.size)
    buyer = uniq // nsec
    in_sec = uniq % nsec

    leontief = np.array([r == LEONTIEF for r in net.regimes], dtype=bool)
    essential = leontief[buyer].copy()
    if essential_overrides:
        for r in range(uniq.size):
            flag = essential_overrides.get((net.sectors[buyer[r]], codes[in_sec[r]]))
            if flag is not None:
                essential[r] = bool(flag)

    s_out = net.out_strength()
    total_in = np.bincount(buyer, weights=flow, minlength=net.n)
    es_in = np.bincount(buyer, weights=flow * essential, minlength=net.n)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha_k = np.where(s_out[buyer] > 0, flow / s_out[buyer], 0.0)
        alpha = np.where(s_out > 0, total_in / s_out, 0.0)
        beta = np.where(total_in > 0, s_out * es_in / total_in, s_out)

    arc_ess = np.zeros(net.m, dtype=bool)
    arc_ess[np.flatnonzero(pos)] = essential[inv]
    return ProductionSpec(
        sectors=tuple(codes), input_buyer=buyer, input_sector=in_sec, input_flow=flow,
        input_essential=essential, alpha_k=alpha_k, alpha=alpha, beta=beta, arc_essential=arc_ess,
    )


class KernelArrays(NamedTuple):
    """Flat arrays consumed by both cascade kernels.

    Arc arrays are in supplier-major order; ``arc_group`` is -1 for arcs that
    carry no weight. Groups are one per (buyer, essential input sector) and
    one per buyer for the pooled non-essential inputs, numbered buyer-major.
    """

    n: int
    out_ptr: np.ndarray
    arc_src: np.ndarray
    arc_dst: np.ndarray
    arc_group: np.ndarray
    arc_lam: np.ndarray
    in_ptr: np.ndarray
    in_src: np.ndarray
    in_lam: np.ndarray
    group_ptr: np.ndarray
    group_buyer: np.ndarray
    sector: np.ndarray
    s_out: np.ndarray
    sector_out: np.ndarray
    share: np.ndarray


@dataclass(frozen=True)
class ImpactMatrices:
    lambda_d1: sp.csr_matrix
    lambda_d2: sp.csr_matrix
    lambda_d: sp.csr_matrix
    lambda_u: sp.csr_matrix
    s_out: np.ndarray
    kernel: KernelArrays


def _i64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def build_impact_matrices(net: SupplyNetwork, spec: ProductionSpec) -> ImpactMatrices:
    n = net.n
    _, sec = net.sector_codes()
    nsec = int(sec.max()) + 1 if n else 0
    src, dst, w = net.src, net.dst, net.weight
    pos = w > 0

    s_out = net.out_strength()
    s_in = net.in_strength()
    # inflow of the supplier's sector at the buyer
    key = dst * max(nsec, 1) + sec[src]
    uniq, inv = np.unique(key, return_inverse=True)
    sec_in = np.bincount(inv, weights=w, minlength=uniq.size)[inv]

    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.where(pos & (sec_in > 0), w / sec_in, 0.0)
        d2 = np.where(pos & (s_in[dst] > 0), w / s_in[dst], 0.0)
        u = np.where(pos & (s_out[src] > 0), w / s_out[src], 0.0)
    ess = spec.arc_essential
    lam = np.where(ess, d1, d2)

    # group ids: (buyer, sector) for essential arcs, (buyer, nsec) for pooled non-essential
    gkey = np.where(ess, dst * (nsec + 1) + sec[src], dst * (nsec + 1) + nsec)
    gkey = np.where(pos, gkey, -1)
    valid = gkey >= 0
    guniq, ginv = np.unique(gkey[valid], return_inverse=True)
    arc_group = np.full(net.m, -1, dtype=np.int64)
    arc_group[valid] = ginv
    group_buyer = guniq // (nsec + 1)
    group_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(group_buyer, minlength=n), out=group_ptr[1:])

    order = net.in_order
    sizes = net.sizes
    total = sizes.sum()
    kernel = KernelArrays(
        n=n,
        out_ptr=_i64(net.out_ptr),
        arc_src=_i64(src),
        arc_dst=_i64(dst),
        arc_group=_i64(arc_group),
        arc_lam=_f64(lam),
        in_ptr=_i64(net.in_ptr),
        in_src=_i64(src[order]),
        in_lam=_f64(u[order]),
        group_ptr=_i64(group_ptr),
        group_buyer=_i64(group_buyer),
        sector=_i64(sec),
        s_out=_f64(s_out),
        sector_out=_f64(np.bincount(sec, weights=s_out, minlength=nsec)),
        share=_f64(sizes / total if total > 0 else np.zeros(n)),
    )

    def mat(vals, rows, cols):
        keep = vals != 0
        return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))

    return ImpactMatrices(
        lambda_d1=mat(d1, src, dst),
        lambda_d2=mat(d2, src, dst),
        lambda_d=mat(lam, src, dst),
        lambda_u=mat(u, dst, src),
        s_out=s_out,
        kernel=kernel,
    )
