# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled cascade kernel.

Only firms that are damaged, or buy from / sell to damaged firms, are touched
per iteration, so a cascade costs time proportional to the region it reaches.
Iterations are synchronous: all updates of step t read the state of step t.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, calloc, free

ctypedef cnp.int64_t i64

cdef struct Net:
    i64 n
    i64 nsec
    const i64* out_ptr
    const i64* arc_dst
    const i64* arc_group
    const double* arc_lam
    const i64* in_ptr
    const i64* in_src
    const double* in_lam
    const i64* group_ptr
    const i64* sector
    const double* s_out
    const double* sector_out

cdef struct Work:
    double* hd
    double* hu
    double* gl
    double* acc
    double* sec_loss
    double* newval
    i64* damd
    i64 nd
    i64* damu
    i64 nu
    i64* cand
    char* ind
    char* inu
    char* iscand


cdef int _alloc(Work* w, i64 n, i64 ngroups, i64 nsec) noexcept nogil:
    cdef i64 i
    w.hd = <double*> malloc(max(n, 1) * sizeof(double))
    w.hu = <double*> malloc(max(n, 1) * sizeof(double))
    w.gl = <double*> calloc(max(ngroups, 1), sizeof(double))
    w.acc = <double*> calloc(max(n, 1), sizeof(double))
    w.sec_loss = <double*> calloc(max(nsec, 1), sizeof(double))
    w.newval = <double*> malloc(max(n, 1) * sizeof(double))
    w.damd = <i64*> malloc(max(n, 1) * sizeof(i64))
    w.damu = <i64*> malloc(max(n, 1) * sizeof(i64))
    w.cand = <i64*> malloc(max(n, 1) * sizeof(i64))
    w.ind = <char*> calloc(max(n, 1), sizeof(char))
    w.inu = <char*> calloc(max(n, 1), sizeof(char))
    w.iscand = <char*> calloc(max(n, 1), sizeof(char))
    w.nd = 0
    w.nu = 0
    if (w.hd == NULL or w.hu == NULL or w.gl == NULL or w.acc == NULL or w.sec_loss == NULL
            or w.newval == NULL or w.damd == NULL or w.damu == NULL or w.cand == NULL
            or w.ind == NULL or w.inu == NULL or w.iscand == NULL):
        return -1
    for i in range(n):
        w.hd[i] = 1.0
        w.hu[i] = 1.0
    return 0


cdef void _free(Work* w) noexcept nogil:
    free(w.hd); free(w.hu); free(w.gl); free(w.acc); free(w.sec_loss); free(w.newval)
    free(w.damd); free(w.damu); free(w.cand); free(w.ind); free(w.inu); free(w.iscand)


cdef double _down_step(const Net* g, Work* w, const double* psi) noexcept nogil:
    cdef i64 a, c, i, j, k, q, nc = 0, nd0 = w.nd
    cdef double loss, sig, den, v, x, maxd = 0.0
    for q in range(nd0):
        j = w.damd[q]
        w.sec_loss[g.sector[j]] += g.s_out[j] * (1.0 - w.hd[j])
    for q in range(nd0):
        j = w.damd[q]
        loss = 1.0 - w.hd[j]
        if loss > 0.0 and g.out_ptr[j + 1] > g.out_ptr[j]:
            k = g.sector[j]
            den = g.sector_out[k] - w.sec_loss[k]
            if den <= 0.0 or g.s_out[j] >= den:
                sig = 1.0
            else:
                sig = g.s_out[j] / den
            loss = loss * sig
            for a in range(g.out_ptr[j], g.out_ptr[j + 1]):
                if g.arc_group[a] < 0:
                    continue
                w.gl[g.arc_group[a]] += g.arc_lam[a] * loss
                i = g.arc_dst[a]
                if not w.iscand[i]:
                    w.iscand[i] = 1
                    w.cand[nc] = i
                    nc += 1
    for q in range(nd0):
        j = w.damd[q]
        w.sec_loss[g.sector[j]] = 0.0
        if not w.iscand[j]:
            w.iscand[j] = 1
            w.cand[nc] = j
            nc += 1
    for c in range(nc):
        i = w.cand[c]
        v = psi[i]
        for k in range(g.group_ptr[i], g.group_ptr[i + 1]):
            x = 1.0 - w.gl[k]
            w.gl[k] = 0.0
            if x < v:
                v = x
        if v < 0.0:
            v = 0.0
        w.newval[c] = v
        if w.hd[i] - v > maxd:
            maxd = w.hd[i] - v
    for c in range(nc):
        i = w.cand[c]
        w.iscand[i] = 0
        w.hd[i] = w.newval[c]
        if w.newval[c] < 1.0 and not w.ind[i]:
            w.ind[i] = 1
            w.damd[w.nd] = i
            w.nd += 1
    return maxd


cdef double _up_step(const Net* g, Work* w, const double* psi) noexcept nogil:
    cdef i64 a, c, i, j, q, nc = 0, nu0 = w.nu
    cdef double loss, v, maxd = 0.0
    for q in range(nu0):
        j = w.damu[q]
        loss = 1.0 - w.hu[j]
        if loss > 0.0:
            for a in range(g.in_ptr[j], g.in_ptr[j + 1]):
                if g.in_lam[a] <= 0.0:
                    continue
                i = g.in_src[a]
                w.acc[i] += g.in_lam[a] * loss
                if not w.iscand[i]:
                    w.iscand[i] = 1
                    w.cand[nc] = i
                    nc += 1
        if not w.iscand[j]:
            w.iscand[j] = 1
            w.cand[nc] = j
            nc += 1
    for c in range(nc):
        i = w.cand[c]
        v = 1.0 - w.acc[i]
        w.acc[i] = 0.0
        if psi[i] < v:
            v = psi[i]
        if v < 0.0:
            v = 0.0
        w.newval[c] = v
        if w.hu[i] - v > maxd:
            maxd = w.hu[i] - v
    for c in range(nc):
        i = w.cand[c]
        w.iscand[i] = 0
        w.hu[i] = w.newval[c]
        if w.newval[c] < 1.0 and not w.inu[i]:
            w.inu[i] = 1
            w.damu[w.nu] = i
            w.nu += 1
    return maxd


cdef i64 _iterate(const Net* g, Work* w, const double* psi, double eps, i64 max_iter) noexcept nogil:
    """Run to convergence from the current state; returns T, or -max_iter."""
    cdef i64 t
    cdef double dd, du
    for t in range(max_iter):
        dd = _down_step(g, w, psi)
        du = _up_step(g, w, psi)
        if dd <= eps and du <= eps:
            return t + 1
    return -max_iter


cdef void _seed(Work* w, const double* psi, i64 n) noexcept nogil:
    cdef i64 i
    for i in range(n):
        if psi[i] < 1.0:
            w.hd[i] = psi[i]
            w.hu[i] = psi[i]
            w.ind[i] = 1
            w.inu[i] = 1
            w.damd[w.nd] = i
            w.nd += 1
            w.damu[w.nu] = i
            w.nu += 1


cdef void _reset(Work* w) noexcept nogil:
    cdef i64 q, j
    for q in range(w.nd):
        j = w.damd[q]
        w.hd[j] = 1.0
        w.ind[j] = 0
    for q in range(w.nu):
        j = w.damu[q]
        w.hu[j] = 1.0
        w.inu[j] = 0
    w.nd = 0
    w.nu = 0


cdef Net _net(ka):
    cdef const i64[::1] out_ptr = ka.out_ptr
    cdef const i64[::1] arc_dst = ka.arc_dst
    cdef const i64[::1] arc_group = ka.arc_group
    cdef const double[::1] arc_lam = ka.arc_lam
    cdef const i64[::1] in_ptr = ka.in_ptr
    cdef const i64[::1] in_src = ka.in_src
    cdef const double[::1] in_lam = ka.in_lam
    cdef const i64[::1] group_ptr = ka.group_ptr
    cdef const i64[::1] sector = ka.sector
    cdef const double[::1] s_out = ka.s_out
    cdef const double[::1] sector_out = ka.sector_out
    cdef Net g
    # pointers stay valid while ``ka`` keeps its arrays alive
    g.n = ka.n
    g.nsec = sector_out.shape[0]
    g.out_ptr = &out_ptr[0]
    g.arc_dst = &arc_dst[0] if arc_dst.shape[0] else NULL
    g.arc_group = &arc_group[0] if arc_group.shape[0] else NULL
    g.arc_lam = &arc_lam[0] if arc_lam.shape[0] else NULL
    g.in_ptr = &in_ptr[0]
    g.in_src = &in_src[0] if in_src.shape[0] else NULL
    g.in_lam = &in_lam[0] if in_lam.shape[0] else NULL
    g.group_ptr = &group_ptr[0]
    g.sector = &sector[0] if sector.shape[0] else NULL
    g.s_out = &s_out[0] if s_out.shape[0] else NULL
    g.sector_out = &sector_out[0] if sector_out.shape[0] else NULL
    return g


def cascade(ka, psi, double eps, i64 max_iter, history=None):
    """Run one cascade from shock vector ``psi``.

    Returns ``(h_down, h_up, iterations, converged)``. ``history`` is not
    supported by this kernel and must be None.
    """
    if history is not None:
        raise ValueError("the compiled kernel does not record history")
    cdef Net g = _net(ka)
    cdef double[::1] p = np.ascontiguousarray(psi, dtype=np.float64)
    cdef Work w
    cdef i64 t, n = ka.n
    if n == 0:
        return np.ones(0), np.ones(0), 1, True
    if _alloc(&w, n, ka.group_buyer.shape[0], g.nsec) != 0:
        _free(&w)
        raise MemoryError()
    try:
        with nogil:
            _seed(&w, &p[0], n)
            t = _iterate(&g, &w, &p[0], eps, max_iter)
        hd = np.array(<double[:n]> w.hd)
        hu = np.array(<double[:n]> w.hu)
    finally:
        _free(&w)
    return hd, hu, abs(t), t > 0


def esri_batch(ka, targets, double eps, i64 max_iter):
    """ESRI of each firm in ``targets``; iterations are negative on non-convergence.

    Releases the GIL for the whole batch.
    """
    cdef Net g = _net(ka)
    cdef const double[::1] share = ka.share
    cdef i64[::1] tg = np.ascontiguousarray(targets, dtype=np.int64)
    cdef i64 m = tg.shape[0], n = ka.n
    out = np.zeros(m, dtype=np.float64)
    its = np.zeros(m, dtype=np.int64)
    cdef double[::1] o = out
    cdef i64[::1] it = its
    cdef Work w
    cdef double* psi
    cdef i64 k, q, i, j, t
    cdef double acc, h
    if m == 0:
        return out, its
    if _alloc(&w, n, ka.group_buyer.shape[0], g.nsec) != 0:
        _free(&w)
        raise MemoryError()
    psi = <double*> malloc(n * sizeof(double))
    if psi == NULL:
        _free(&w)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                psi[i] = 1.0
            for k in range(m):
                i = tg[k]
                psi[i] = 0.0
                w.hd[i] = 0.0
                w.hu[i] = 0.0
                w.ind[i] = 1
                w.inu[i] = 1
                w.damd[0] = i
                w.damu[0] = i
                w.nd = 1
                w.nu = 1
                t = _iterate(&g, &w, psi, eps, max_iter)
                psi[i] = 1.0
                acc = 0.0
                for q in range(w.nd):
                    j = w.damd[q]
                    h = w.hd[j] if w.hd[j] < w.hu[j] else w.hu[j]
                    acc += share[j] * (1.0 - h)
                for q in range(w.nu):
                    j = w.damu[q]
                    if w.ind[j]:
                        continue
                    acc += share[j] * (1.0 - w.hu[j])
                o[k] = acc
                it[k] = t
                _reset(&w)
    finally:
        free(psi)
        _free(&w)
    return out, its
