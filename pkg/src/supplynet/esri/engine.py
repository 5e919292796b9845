"""ESRI computation: single cascades, all-firm profiles and ensemble statistics."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..model import SupplyNetwork, ValidationError
from . import _kernel_py
from .production import ImpactMatrices, ProductionSpec, build_impact_matrices, derive_production_spec

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-2
DEFAULT_MAX_ITER = 1000


def _load_kernel():
    if os.environ.get("SUPPLYNET_PURE_PYTHON") == "1":
        return _kernel_py, "python"
    try:
        from . import _cascade
    except ImportError:
        return _kernel_py, "python"
    return _cascade, "compiled"


_KERNEL, BACKEND = _load_kernel()


def get_kernel(name: str | None = None):
    """Kernel module by name ("compiled" or "python"); default is the active one."""
    if name is None:
        return _KERNEL
    if name == "python":
        return _kernel_py
    if name == "compiled":
        from . import _cascade
        return _cascade
    raise ValueError(f"unknown kernel {name!r}")


class NonConvergenceError(RuntimeError):
    def __init__(self, message, h_down=None, h_up=None, iterations=None):
        super().__init__(message)
        self.h_down = h_down
        self.h_up = h_up
        self.iterations = iterations


@dataclass
class CascadeResult:
    h: np.ndarray
    iterations: int
    h_down: np.ndarray
    h_up: np.ndarray
    history: list | None = None

    def __iter__(self):
        # unpacks as (h, T)
        return iter((self.h, self.iterations))


@dataclass
class EsriProfile:
    ids: tuple[str, ...]
    values: np.ndarray
    iterations: np.ndarray
    failed: tuple[str, ...] = ()

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.ids, map(float, self.values)))

    def sorted(self) -> "EsriProfile":
        order = np.lexsort((np.arange(len(self.ids)), -self.values))
        return EsriProfile(tuple(self.ids[i] for i in order), self.values[order], self.iterations[order], self.failed)


@dataclass
class EnsembleStats:
    ids: tuple[str, ...]
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    max: np.ndarray
    samples: np.ndarray | None = field(default=None, repr=False)
    pilot_mean: np.ndarray | None = field(default=None, repr=False)
    failed: tuple[tuple[int, str], ...] = ()

    def sorted(self) -> "EnsembleStats":
        order = np.lexsort((np.arange(len(self.ids)), -self.median))
        pick = lambda a: None if a is None else a[order]
        return EnsembleStats(
            tuple(self.ids[i] for i in order), self.median[order], self.q25[order], self.q75[order],
            self.max[order], None if self.samples is None else self.samples[:, order], pick(self.pilot_mean),
            self.failed,
        )


def prepare(net: SupplyNetwork, essential_overrides=None) -> tuple[ProductionSpec, ImpactMatrices]:
    spec = derive_production_spec(net, essential_overrides)
    return spec, build_impact_matrices(net, spec)


def _check_params(eps, max_iter):
    if not eps > 0:
        raise ValidationError(f"epsilon must be positive, got {eps}", field="epsilon")
    if max_iter < 1:
        raise ValidationError("max_iter must be at least 1", field="max_iter")


def run_cascade(
    net: SupplyNetwork,
    spec: ProductionSpec,
    mats: ImpactMatrices,
    psi,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    record_history: bool = False,
    kernel: str | None = None,
) -> CascadeResult:
    """Propagate shock ``psi`` down- and upstream until it settles.

    Returns the converged relative output ``h = min(h_down, h_up)`` and the
    convergence time. ``record_history`` keeps every intermediate state and
    forces the numpy kernel.
    """
    _check_params(eps, max_iter)
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (net.n,) or np.any(psi < 0) or np.any(psi > 1):
        raise ValidationError("psi must be a vector in [0, 1] with one entry per firm", field="psi")
    history = [] if record_history else None
    k = _kernel_py if record_history else get_kernel(kernel)
    hd, hu, t, ok = k.cascade(mats.kernel, psi, float(eps), int(max_iter), history)
    if not ok:
        raise NonConvergenceError(f"no convergence within {max_iter} iterations", hd, hu, t)
    return CascadeResult(np.minimum(hd, hu), int(t), hd, hu, history)


def _default_workers() -> int:
    return os.cpu_count() or 1


def esri_for(
    net: SupplyNetwork,
    targets: Sequence[int] | np.ndarray,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    workers: int | None = None,
    mats: ImpactMatrices | None = None,
    kernel: str | None = None,
    essential_overrides=None,
) -> tuple[np.ndarray, np.ndarray]:
    """ESRI and iteration counts for node indices ``targets``.

    Iteration counts are negative for cascades that hit ``max_iter``.
    Work is split into contiguous chunks; results do not depend on ``workers``.
    """
    _check_params(eps, max_iter)
    if mats is None:
        _, mats = prepare(net, essential_overrides)
    k = get_kernel(kernel)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    workers = max(1, workers or _default_workers())
    if workers == 1 or targets.size < 2 * workers:
        return k.esri_batch(mats.kernel, targets, float(eps), int(max_iter))
    chunks = np.array_split(targets, workers * 4)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda c: k.esri_batch(mats.kernel, c, float(eps), int(max_iter)), chunks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def esri_all(
    net: SupplyNetwork,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    workers: int | None = None,
    kernel: str | None = None,
    essential_overrides=None,
) -> EsriProfile:
    """ESRI of every firm, each from its own single-firm default.

    Firms whose cascade does not converge keep their last-state value and are
    listed in ``failed``.
    """
    values, iters = esri_for(
        net, np.arange(net.n), eps, max_iter, workers, kernel=kernel, essential_overrides=essential_overrides,
    )
    failed = tuple(net.ids[i] for i in np.flatnonzero(iters < 0))
    if failed:
        logger.warning("%d firm cascades did not converge within %d iterations", len(failed), max_iter)
    return EsriProfile(net.ids, values, np.abs(iters), failed)


def ensemble_esri(
    networks: Sequence[SupplyNetwork],
    top_k: int = 1000,
    pilot: int = 5,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    workers: int | None = None,
    kernel: str | None = None,
) -> EnsembleStats:
    """Two-stage ESRI over an ensemble of reconstructions.

    Stage one averages full profiles over the first ``pilot`` networks; stage
    two evaluates the ``top_k`` firms by pilot mean on every network. Quartiles
    use linear interpolation between order statistics. ``failed`` lists
    ``(member, firm)`` cascades that hit ``max_iter``.
    """
    if not networks:
        raise ValidationError("empty ensemble")
    ids = networks[0].ids
    for net in networks[1:]:
        if net.ids != ids:
            raise ValidationError("all ensemble members must share the same node set")
    n = len(ids)
    pilot = max(1, min(pilot, len(networks)))
    top_k = max(1, min(top_k, n))
    mats = [prepare(net)[1] for net in networks]

    failed: set[tuple[int, str]] = set()

    def note(r, idx, iters):
        failed.update((r, ids[i]) for i in idx[iters < 0])

    pilot_vals = np.empty((pilot, n))
    for r in range(pilot):
        pilot_vals[r], its = esri_for(networks[r], np.arange(n), eps, max_iter, workers, mats[r], kernel)
        note(r, np.arange(n), its)
    pilot_mean = pilot_vals.mean(axis=0)
    top = np.lexsort((np.arange(n), -pilot_mean))[:top_k]

    samples = np.empty((len(networks), top.size))
    for r, net in enumerate(networks):
        if r < pilot:
            samples[r] = pilot_vals[r, top]
        else:
            samples[r], its = esri_for(net, top, eps, max_iter, workers, mats[r], kernel)
            note(r, top, its)
    q25, med, q75 = np.percentile(samples, [25, 50, 75], axis=0)
    return EnsembleStats(
        ids=tuple(ids[i] for i in top), median=med, q25=q25, q75=q75, max=samples.max(axis=0),
        samples=samples, pilot_mean=pilot_mean[top], failed=tuple(sorted(failed)),
    )
