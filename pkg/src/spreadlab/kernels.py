"""Discretized ball mollifiers and periodic convolution helpers.

The radius-r kernel is the normalized indicator of the ball: a cell belongs
to the ball if its center does, and the weights are renormalized so the
kernel sums to exactly one. Atom stamping centers the ball at the true atom
position (no snapping to the lattice), so mollified support stays within r
of the support of the input.
"""

from __future__ import annotations

import math

import numpy as np

from .core import AtomicMeasure, Domain, GridMeasure


def _pitches(domain: Domain, shape) -> np.ndarray:
    L = domain.side_float()
    return np.array([L / n for n in shape], dtype=np.float64)


def ball_offset_kernel(domain: Domain, shape, radius: float) -> np.ndarray:
    """Normalized ball indicator as a grid array anchored at index 0.

    Entry at (i0, i1, ...) is the kernel weight for the lattice offset with
    per-axis displacement i*pitch wrapped to the symmetric range. Weights sum
    to 1. Requires radius < side/2 on the torus (no self-overlap).
    """
    radius = float(radius)
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    L = domain.side_float()
    if domain.is_torus and radius >= L / 2:
        raise ValueError(f"radius {radius} >= side/2 = {L / 2}; ball wraps onto itself")
    shape = tuple(int(n) for n in shape)
    h = _pitches(domain, shape)
    axes = []
    for n, hi in zip(shape, h):
        idx = np.arange(n, dtype=np.float64)
        disp = idx * hi
        disp = np.minimum(disp, L - disp)  # symmetric wrap
        axes.append(disp ** 2)
    grids = np.meshgrid(*axes, indexing="ij")
    dist_sq = sum(grids)
    mask = dist_sq <= radius * radius + 1e-30
    count = int(mask.sum())
    kernel = np.zeros(shape, dtype=np.float64)
    kernel[mask] = 1.0 / count
    return kernel


def convolve_mass(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Circular convolution with a mass kernel (kernel sums to one keeps the
    total of `values` fixed up to roundoff)."""
    if values.shape != kernel.shape:
        raise ValueError("shape mismatch")
    fv = np.fft.rfftn(values)
    fk = np.fft.rfftn(kernel)
    return np.fft.irfftn(fv * fk, s=values.shape)


def kernel_power(kernel: np.ndarray, power: int) -> np.ndarray:
    """Convolution power of a kernel on the periodic lattice."""
    if power < 1:
        raise ValueError("power must be >= 1")
    fk = np.fft.rfftn(kernel)
    return np.fft.irfftn(fk ** power, s=kernel.shape)


def stamp_atoms(domain: Domain, shape, positions: np.ndarray,
                masses: np.ndarray, radius: float) -> np.ndarray:
    """Spread each atom's mass uniformly over the cells whose centers lie
    within `radius` of the atom. An atom with no cell in range falls back to
    its nearest cell so mass is always conserved exactly.

    Returns the grid of cell masses.
    """
    shape = tuple(int(n) for n in shape)
    d = domain.dimension
    L = domain.side_float()
    h = _pitches(domain, shape)
    out = np.zeros(shape, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, d)
    masses = np.asarray(masses, dtype=np.float64).ravel()
    r = float(radius)
    # per-axis index windows wide enough to cover the ball
    half = [int(math.ceil(r / hi)) + 1 for hi in h]
    for pos, w in zip(positions, masses):
        base = [int(math.floor(x / hi - 0.5)) for x, hi in zip(pos, h)]
        axes_idx = []
        axes_d2 = []
        for ax in range(d):
            idx = np.arange(base[ax] - half[ax], base[ax] + half[ax] + 1)
            centers = (idx + 0.5) * h[ax]
            delta = np.abs(centers - pos[ax])
            if domain.is_torus:
                delta = np.mod(delta, L)
                delta = np.minimum(delta, L - delta)
                idx = np.mod(idx, shape[ax])
            else:
                keep = (idx >= 0) & (idx < shape[ax])
                idx, delta = idx[keep], delta[keep]
            axes_idx.append(idx)
            axes_d2.append(delta ** 2)
        mesh_d2 = np.meshgrid(*axes_d2, indexing="ij")
        dist_sq = sum(mesh_d2)
        mask = dist_sq <= r * r + 1e-30
        count = int(mask.sum())
        if count == 0:
            nearest = tuple(int(round(x / hi - 0.5)) % n if domain.is_torus
                            else min(max(int(round(x / hi - 0.5)), 0), n - 1)
                            for x, hi, n in zip(pos, h, shape))
            out[nearest] += w
            continue
        mesh_idx = np.meshgrid(*axes_idx, indexing="ij")
        flat = np.ravel_multi_index(tuple(m[mask] for m in mesh_idx), shape)
        np.add.at(out.ravel(), flat, w / count)
    return out


def mollify(nu, radius, *, shape=None, power: int = 1) -> GridMeasure:
    """Convolve a measure with the normalized ball indicator of the given
    radius (power = 1) or with its convolution power (power = 3 gives the
    triple-ball kernel whose support radius is 3 * radius).

    Atomic input needs `shape`; grid input reuses its own lattice. Total mass
    is preserved up to FFT roundoff; for atomic input with power = 1 it is
    preserved exactly up to float accumulation of w/count shares.
    """
    radius = float(radius)
    if not radius > 0:
        raise ValueError("radius must be positive")
    if power < 1:
        raise ValueError("power must be >= 1")
    if isinstance(nu, AtomicMeasure):
        domain = nu.domain
        if domain.is_torus and radius >= domain.side_float() / 2:
            raise ValueError("radius >= side/2; ball wraps onto itself")
        if shape is None:
            raise ValueError("mollifying an atomic measure needs a grid shape")
        shape = tuple(int(n) for n in ([shape] * domain.dimension
                                       if np.isscalar(shape) else shape))
        masses = np.array([float(m) for m in nu.masses])
        values = stamp_atoms(domain, shape, nu.float_coords, masses, radius)
        if power > 1:
            kern = ball_offset_kernel(domain, shape, radius)
            values = convolve_mass(values, kernel_power(kern, power - 1))
        return GridMeasure(domain, values)
    if isinstance(nu, GridMeasure):
        if shape is not None and tuple(shape) != nu.shape:
            raise ValueError("grid input keeps its own shape")
        kern = ball_offset_kernel(nu.domain, nu.shape, radius)
        return GridMeasure(nu.domain, convolve_mass(nu.values, kernel_power(kern, power)))
    raise TypeError(f"cannot mollify {type(nu).__name__}")


def grid_support_radius(g: GridMeasure, nu: AtomicMeasure,
                        threshold: float = 0.0) -> float:
    """Largest distance from a cell holding mass above `threshold` to the
    support of `nu` (center-to-atom distances)."""
    centers = g.centers_flat()
    busy = np.abs(g.values.ravel()) > threshold
    if not busy.any():
        return 0.0
    pts = centers[busy]
    best = np.full(pts.shape[0], np.inf)
    for atom in nu.float_coords:
        delta = g.domain.delta_array(pts, atom[None, :])
        best = np.minimum(best, np.sum(delta ** 2, axis=1))
    return float(np.sqrt(best.max()))
