"""Central finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, backward, no_grad

# An optional second opinion: (tensor name, flat index, step) -> derivative.
Refiner = Callable[[str, int, float], float]


def _as_named(params) -> dict[str, Tensor]:
    if isinstance(params, Mapping):
        return dict(params)
    if isinstance(params, Tensor):
        return {"p0": params}
    return {f"p{i}": p for i, p in enumerate(params)}


def rel_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def sample_coords(size: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    if size <= samples:
        return np.arange(size)
    return np.sort(rng.choice(size, size=samples, replace=False))


def central_difference(f: Callable[[], Tensor], flat: np.ndarray, i: int, h: float) -> float:
    orig = flat[i]
    with no_grad():
        flat[i] = orig + h
        up = f().data
        flat[i] = orig - h
        down = f().data
    flat[i] = orig
    return float((up - down) / (2 * h))


def norm_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||, 1e-8)`` over a set of coordinates."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def finite_diff_report(f: Callable[[], Tensor], params, h: float = 1e-3,
                       samples: int = 64, seed: int = 0, tol: float | None = None,
                       refine: Refiner | None = None, reduce: str = "coord",
                       analytic: Mapping[str, np.ndarray] | None = None) -> dict[str, float]:
    """Relative gradient error per parameter tensor.

    ``f`` is re-evaluated with each sampled coordinate nudged by ``+h`` and
    ``-h``; the central difference is compared with the gradient produced by
    :func:`backward`. Tensors with at most ``samples`` entries are checked
    exhaustively.

    ``reduce="coord"`` reports the worst coordinate, each measured as
    ``|a - n| / max(|a|, |n|, 1e-8)``. ``reduce="tensor"`` reports the
    norm-wise error of the sampled gradient vector (:func:`norm_error`).

    When ``refine`` is given, estimates that miss ``tol`` get a second
    opinion from ``refine`` (typically the same stencil with a smaller step
    or at higher precision) and the estimate closer to the analytic value is
    kept. In tensor mode coordinates are refined worst-first, stopping as
    soon as the tensor passes.

    ``analytic`` supplies gradients computed elsewhere (for instance by a
    float32 copy of the model); ``backward`` is then not called.
    """
    if reduce not in ("coord", "tensor"):
        raise ValueError(f"reduce must be 'coord' or 'tensor', got {reduce!r}")
    named = _as_named(params)
    for p in named.values():
        p.requires_grad = True
        p.grad = None
        if not p.data.flags.c_contiguous:
            p.data = np.ascontiguousarray(p.data)
    if analytic is None:
        backward(f())
        analytic = {k: p.grad for k, p in named.items()}
    rng = np.random.default_rng(seed)
    report = {}
    for name, p in named.items():
        flat = p.data.reshape(-1)
        idx = sample_coords(flat.size, samples, rng)
        g = analytic.get(name)
        a = np.zeros(idx.size) if g is None else g.reshape(-1)[idx].astype(np.float64)
        n = np.array([central_difference(f, flat, i, h) for i in idx])

        def second_opinion(j: int) -> None:
            r = refine(name, int(idx[j]), h)
            if abs(a[j] - r) < abs(a[j] - n[j]):
                n[j] = r

        if reduce == "coord":
            errs = [rel_error(x, y) for x, y in zip(a, n)]
            if refine is not None and tol is not None:
                for j, e in enumerate(errs):
                    if e >= tol:
                        second_opinion(j)
                        errs[j] = rel_error(a[j], n[j])
            report[name] = max(errs, default=0.0)
        else:
            err = norm_error(a, n)
            if refine is not None and tol is not None and err >= tol:
                for j in np.argsort(-np.abs(a - n), kind="stable"):
                    second_opinion(j)
                    err = norm_error(a, n)
                    if err < tol:
                        break
            report[name] = err
    return report


def finite_diff_check(f: Callable[[], Tensor], params, h: float = 1e-3,
                      samples: int = 64, seed: int = 0) -> float:
    """Largest relative error over all sampled coordinates of ``params``."""
    return max(finite_diff_report(f, params, h, samples, seed).values())


def network_gradcheck(seed: int = 0, size: int = 16, h: float = 1e-5, samples: int = 64,
                      tol: float = 1e-5, config=None, dtype=np.float64) -> dict[str, float]:
    """Check every parameter tensor of the fusion network against its total loss.

    Analytic gradients are computed in float64 on a random ``size x size``
    pair with seeded parameters and compared, tensor by tensor and norm-wise,
    with float64 central differences. If a tensor misses ``tol``, its worst
    coordinates are re-measured first with a step 100x smaller (a ReLU or
    max kink can sit within ``h`` of the point), then in extended precision
    (``np.longdouble``) with progressively smaller steps, which no longer
    drown in roundoff.

    With ``dtype=np.float32`` the analytic gradients come from a float32
    copy of the model, checked against the same float64 differences.

    Batch norm runs in inference mode: in training mode the conv bias that
    feeds it has an identically zero gradient, for which a relative error is
    meaningless.
    """
    from .losses import total_loss
    from .network import NetworkConfig, concat_inputs, forward, init_params

    cfg = config or NetworkConfig()
    rng = np.random.default_rng(seed)
    ir, vi = rng.random((size, size)), rng.random((size, size))
    p64 = init_params(cfg, seed, np.float64)
    x64 = concat_inputs(ir, vi, np.float64)
    pext = p64.astype(np.longdouble)
    xext = concat_inputs(ir, vi, np.longdouble)
    src_vi, src_ir = vi[None, None], ir[None, None]

    def objective(params, x):
        return lambda: total_loss(forward(x, params, training=False), src_vi, src_ir).total

    f64, f_ext = objective(p64, x64), objective(pext, xext)
    tiers = [(f64, p64, 1e-2), (f_ext, pext, 1.0), (f_ext, pext, 1e-2), (f_ext, pext, 1e-3)]

    analytic = None
    if np.dtype(dtype) != np.float64:
        p_lo = p64.astype(dtype).requires_grad_(True)
        x_lo = concat_inputs(ir, vi, dtype)
        backward(total_loss(forward(x_lo, p_lo, training=False), src_vi, src_ir).total)
        analytic = {k: t.grad for k, t in p_lo.tensors.items()}

    def refine(name: str, i: int, step: float) -> float:
        g = p64.tensors[name].grad if analytic is None else analytic[name]
        a = float(g.reshape(-1)[i])
        best, best_err = 0.0, np.inf
        for fn, params, scale in tiers:
            flat = params.tensors[name].data.reshape(-1)
            n = central_difference(fn, flat, i, step * scale)
            err = rel_error(a, n)
            if err < best_err:
                best, best_err = n, err
            if err < tol:
                break
        return best

    return finite_diff_report(f64, p64.named(), h=h, samples=samples, seed=seed,
                              tol=tol, refine=refine, reduce="tensor", analytic=analytic)
