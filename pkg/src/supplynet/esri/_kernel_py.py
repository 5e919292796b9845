"""Vectorised numpy cascade kernel, used when the compiled one is unavailable.

Every iteration sweeps all arcs. Same interface as the compiled module.
"""
from __future__ import annotations

import numpy as np

from .production import KernelArrays


class _Sweep:
    def __init__(self, ka: KernelArrays):
        self.ka = ka
        valid = ka.arc_group >= 0
        self.g_src = ka.arc_src[valid]
        self.g_id = ka.arc_group[valid]
        self.g_lam = ka.arc_lam[valid]
        self.ngroups = int(ka.group_buyer.size)
        has = np.diff(ka.group_ptr) > 0
        self.g_buyers = np.flatnonzero(has)
        self.g_starts = ka.group_ptr[:-1][has]
        pos = ka.in_lam > 0
        self.u_sup = ka.in_src[pos]
        # in-arc order is buyer-major; recover each in-arc's customer
        cust = np.repeat(np.arange(ka.n), np.diff(ka.in_ptr))
        self.u_cust = cust[pos]
        self.u_lam = ka.in_lam[pos]
        self.nsec = int(ka.sector_out.size)

    def step(self, hd, hu, psi):
        ka = self.ka
        denom = np.bincount(ka.sector, weights=ka.s_out * hd, minlength=self.nsec)[ka.sector]
        with np.errstate(divide="ignore", invalid="ignore"):
            sigma = np.where(denom > 0, np.minimum(ka.s_out / denom, 1.0), 1.0)
        loss = sigma * (1.0 - hd)
        gl = np.bincount(self.g_id, weights=self.g_lam * loss[self.g_src], minlength=self.ngroups)
        hd_new = psi.copy()
        if self.g_buyers.size:
            worst = np.minimum.reduceat(1.0 - gl, self.g_starts)
            hd_new[self.g_buyers] = np.minimum(hd_new[self.g_buyers], worst)
        np.maximum(hd_new, 0.0, out=hd_new)

        acc = np.bincount(self.u_sup, weights=self.u_lam * (1.0 - hu[self.u_cust]), minlength=ka.n)
        hu_new = np.minimum(psi, 1.0 - acc)
        np.maximum(hu_new, 0.0, out=hu_new)
        return hd_new, hu_new

    def run(self, psi, eps, max_iter, history=None):
        hd = psi.copy()
        hu = psi.copy()
        for t in range(max_iter):
            hd_new, hu_new = self.step(hd, hu, psi)
            if history is not None:
                history.append((hd_new.copy(), hu_new.copy()))
            delta = 0.0
            if hd.size:
                delta = max(float(np.max(hd - hd_new)), float(np.max(hu - hu_new)), 0.0)
            hd, hu = hd_new, hu_new
            if delta <= eps:
                return hd, hu, t + 1, True
        return hd, hu, max_iter, False


def cascade(ka: KernelArrays, psi, eps: float, max_iter: int, history=None):
    """Run one cascade from shock vector ``psi``.

    Returns ``(h_down, h_up, iterations, converged)``.
    """
    psi = np.ascontiguousarray(psi, dtype=float)
    return _Sweep(ka).run(psi, eps, max_iter, history)


def esri_batch(ka: KernelArrays, targets, eps: float, max_iter: int):
    """ESRI of each firm in ``targets``; iterations are negative on non-convergence."""
    sweep = _Sweep(ka)
    targets = np.asarray(targets, dtype=np.int64)
    esri = np.empty(targets.size)
    iters = np.empty(targets.size, dtype=np.int64)
    psi = np.ones(ka.n)
    for k, i in enumerate(targets):
        psi[i] = 0.0
        hd, hu, t, ok = sweep.run(psi, eps, max_iter)
        psi[i] = 1.0
        esri[k] = float(np.dot(ka.share, 1.0 - np.minimum(hd, hu)))
        iters[k] = t if ok else -t
    return esri, iters
