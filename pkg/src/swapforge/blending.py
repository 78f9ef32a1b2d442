"""Advanced face blending: squeezed-and-intersected blend masks plus
gradient-domain (Poisson) compositing of the generated face into the driver
frame.

The Poisson solve matches source gradients inside the mask with Dirichlet
boundary values from the target (classic seamless cloning, source gradients
only).  The SPD system is solved per channel with Jacobi-preconditioned
conjugate gradients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .imaging import ensure_image, ensure_mask, erode_mask, intersect_masks, laplacian


class SolverFailure(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class SolverParams:
    tol: float = 1e-6          # relative residual ||b - Ax|| / ||b||
    max_iter: int | None = None  # default 10 * number of unknowns
    method: str = "conjugate_gradient"

    def __post_init__(self) -> None:
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.method != "conjugate_gradient":
            raise ValueError(f"unknown solver method {self.method!r}")


@dataclass
class BlendJob:
    source: np.ndarray          # generated face, aligned space
    target: np.ndarray          # driver frame region, aligned space
    driver_mask: np.ndarray
    generated_mask: np.ndarray
    squeeze_px: int = 15

    def __post_init__(self) -> None:
        self.source = ensure_image(self.source)
        self.target = ensure_image(self.target)
        self.driver_mask = ensure_mask(self.driver_mask, binary=True)
        self.generated_mask = ensure_mask(self.generated_mask, binary=True)
        shapes = {self.source.shape[:2], self.target.shape[:2],
                  self.driver_mask.shape, self.generated_mask.shape}
        if len(shapes) != 1:
            raise ValueError(f"blend job buffers disagree on size: {shapes}")
        if self.squeeze_px < 0:
            raise ValueError("squeeze_px must be >= 0")


def build_blend_mask(job: BlendJob) -> np.ndarray:
    """erode(driver, squeeze) AND erode(generated, squeeze).

    With squeeze 0 this reduces to the plain mask intersection (and, when the
    generated mask is all-ones, to the conventional driver-mask blend).
    An empty result is legal; callers treat it as "skip frame".
    """
    squeezed_driver = erode_mask(job.driver_mask, job.squeeze_px)
    squeezed_generated = erode_mask(job.generated_mask, job.squeeze_px)
    return intersect_masks(squeezed_driver, squeezed_generated)


def _clear_border(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[0, :] = 0.0
    out[-1, :] = 0.0
    out[:, 0] = 0.0
    out[:, -1] = 0.0
    return out


def _poisson_system(mask: np.ndarray) -> tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
    """SPD system for the masked 5-point Laplacian.

    Returns (A, index_map, unknown_positions): A is NxN over the masked
    pixels; index_map holds each pixel's unknown index or -1.
    """
    h, w = mask.shape
    inside = mask > 0.5
    idx = np.full((h, w), -1, dtype=np.int64)
    ys, xs = np.nonzero(inside)
    n = len(ys)
    idx[ys, xs] = np.arange(n)

    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 4.0)]
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ny, nx = ys + dy, xs + dx
        ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        neighbor = np.full(n, -1, dtype=np.int64)
        neighbor[ok] = idx[ny[ok], nx[ok]]
        has = neighbor >= 0
        rows.append(np.arange(n)[has])
        cols.append(neighbor[has])
        vals.append(np.full(int(has.sum()), -1.0))
    a = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    return a, idx, np.stack([ys, xs], axis=1)


def jacobi_pcg(
    a: sparse.csr_matrix,
    b: np.ndarray,
    x0: np.ndarray,
    tol: float,
    max_iter: int,
    on_iterate=None,
) -> tuple[np.ndarray, list[float]]:
    """Jacobi-preconditioned conjugate gradients on an SPD system.

    Stops when ||b - Ax|| <= tol * ||b||; returns the iterate and the history
    of preconditioned residual norms sqrt(r' M^-1 r).  `on_iterate`, if given,
    receives a copy of each iterate (for convergence diagnostics).
    """
    diag = a.diagonal()
    inv_diag = 1.0 / diag
    x = x0.copy()
    r = b - a @ x
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        norm_b = 1.0
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    history = [float(np.sqrt(max(rz, 0.0)))]
    if on_iterate is not None:
        on_iterate(x.copy())
    if np.linalg.norm(r) <= tol * norm_b:
        return x, history
    for _ in range(max_iter):
        ap = a @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        if on_iterate is not None:
            on_iterate(x.copy())
        r -= alpha * ap
        if np.linalg.norm(r) <= tol * norm_b:
            history.append(float(np.sqrt(max(float(r @ (inv_diag * r)), 0.0))))
            return x, history
        z = inv_diag * r
        rz_new = float(r @ z)
        history.append(float(np.sqrt(max(rz_new, 0.0))))
        p = z + (rz_new / rz) * p
        rz = rz_new
    final = float(np.linalg.norm(b - a @ x) / norm_b)
    raise SolverFailure(
        f"conjugate gradient did not reach tol={tol} within {max_iter} iterations "
        f"(relative residual {final:.3e})", residual=final)


def poisson_blend(
    source: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray,
    params: SolverParams = SolverParams(),
    clamp: bool = True,
) -> np.ndarray:
    """Seamless cloning: inside the mask the result's Laplacian equals the
    source's, with boundary values pinned to the target; outside, the target
    is returned untouched.

    The mask is forced off the 1-px image border so every unknown has a
    Dirichlet ring.  An empty mask returns the target unchanged.
    """
    source = ensure_image(source)
    target = ensure_image(target)
    mask = ensure_mask(mask, binary=True)
    if source.shape != target.shape or mask.shape != source.shape[:2]:
        raise ValueError(
            f"poisson_blend buffers disagree: source {source.shape}, "
            f"target {target.shape}, mask {mask.shape}")

    mask = _clear_border(mask)
    if mask.sum() == 0:
        return target.copy()

    a, idx, pos = _poisson_system(mask)
    n = a.shape[0]
    max_iter = params.max_iter if params.max_iter is not None else 10 * n
    h, w = mask.shape
    ys, xs = pos[:, 0], pos[:, 1]

    # neighbour bookkeeping for the Dirichlet boundary contributions
    boundary_terms = []
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ny, nx = ys + dy, xs + dx
        in_bounds = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        outside = in_bounds & (idx[np.clip(ny, 0, h - 1), np.clip(nx, 0, w - 1)] < 0)
        boundary_terms.append((outside, ny, nx))

    out = target.copy()
    for c in range(source.shape[2]):
        lap_src = laplacian(source[..., c])
        b = lap_src[ys, xs]
        for outside, ny, nx in boundary_terms:
            b[outside] += target[ny[outside], nx[outside], c]
        x0 = target[ys, xs, c]
        x, _ = jacobi_pcg(a, b, x0, tol=params.tol, max_iter=max_iter)
        out[ys, xs, c] = x
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out


def boundary_energy(img: np.ndarray, mask: np.ndarray) -> float:
    """Mean squared intensity jump across mask-boundary 4-neighbour pairs.

    Quantifies how visible the blending seam is; pairs straddle the mask edge
    (one pixel inside, one outside), channels average.
    """
    img = ensure_image(img)
    mask = ensure_mask(mask, binary=True)
    if mask.shape != img.shape[:2]:
        raise ValueError("mask size does not match image")
    inside = mask > 0.5
    total = 0.0
    count = 0
    for axis in (0, 1):
        lo_in = np.take(inside, range(0, inside.shape[axis] - 1), axis=axis)
        hi_in = np.take(inside, range(1, inside.shape[axis]), axis=axis)
        straddle = lo_in != hi_in
        lo_px = np.take(img, range(0, img.shape[axis] - 1), axis=axis)[straddle]
        hi_px = np.take(img, range(1, img.shape[axis]), axis=axis)[straddle]
        total += float(((lo_px - hi_px) ** 2).mean(axis=-1).sum()) if len(lo_px) else 0.0
        count += int(straddle.sum())
    if count == 0:
        return 0.0
    return total / count
