"""Seeded instance generators.

All randomness flows through numpy's default_rng on the given seed, and all
coordinates are exact rationals (small denominators), so generated instances
replay bit-identically and downstream distance comparisons stay exact.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .core import AtomicMeasure, Domain, Scalar, is_exact

# resolution of random rational draws: coordinates land on a 1/Q subgrid
_Q = 64


def _require(cond: bool, field: str, message: str):
    if not cond:
        raise ValueError(f"invalid parameter '{field}': {message}")


def perturbed_lattice(domain: Domain, delta: Scalar, seed: int) -> AtomicMeasure:
    """Unit masses at the integer lattice points of the domain window, each
    shifted by an independent displacement of sup-norm at most delta.

    Displacements are drawn from the uniform grid {-Q..Q}/Q * delta, so the
    output is exact whenever delta is rational.
    """
    _require(is_exact(delta) or isinstance(delta, float), "delta", "must be a number")
    delta = Fraction(delta) if is_exact(delta) else Fraction(delta).limit_denominator(10 ** 6)
    _require(0 <= delta < Fraction(1, 2), "delta", "must lie in [0, 1/2)")
    side = Fraction(domain.side)
    _require(side.denominator == 1, "side", "must be an integer for a lattice window")
    n = int(side)
    d = domain.dimension
    rng = np.random.default_rng(seed)
    steps = rng.integers(-_Q, _Q + 1, size=(n ** d, d))
    positions = []
    idx = [0] * d
    row = 0
    while True:
        positions.append(tuple(Fraction(idx[a]) + delta * int(steps[row, a]) / _Q
                               for a in range(d)))
        row += 1
        axis = d - 1
        while axis >= 0:
            idx[axis] += 1
            if idx[axis] < n:
                break
            idx[axis] = 0
            axis -= 1
        if axis < 0:
            break
    return AtomicMeasure(domain, positions, [Fraction(1)] * len(positions))


def poisson_process(domain: Domain, intensity: Scalar, seed: int) -> AtomicMeasure:
    """Homogeneous Poisson sample: the atom count is Poisson(intensity * volume)
    and positions are uniform on the 1/Q coordinate subgrid."""
    _require(intensity > 0, "intensity", "must be positive")
    side = Fraction(domain.side)
    volume = side ** domain.dimension
    rng = np.random.default_rng(seed)
    count = int(rng.poisson(float(intensity) * float(volume)))
    count = max(count, 1)
    steps = rng.integers(0, int(side * _Q), size=(count, domain.dimension))
    positions = [tuple(Fraction(int(s), _Q) for s in row) for row in steps]
    return AtomicMeasure(domain, positions, [Fraction(1)] * count)


def cluster_process(domain: Domain, n_clusters: int, points_per_cluster: int,
                    spread: Scalar, seed: int) -> AtomicMeasure:
    """Parent centers uniform on the subgrid; each parent gets
    `points_per_cluster` children displaced by sup-norm at most `spread`."""
    _require(n_clusters >= 1, "n_clusters", "must be >= 1")
    _require(points_per_cluster >= 1, "points_per_cluster", "must be >= 1")
    spread = Fraction(spread) if is_exact(spread) else Fraction(spread).limit_denominator(10 ** 6)
    _require(spread >= 0, "spread", "must be nonnegative")
    side = Fraction(domain.side)
    rng = np.random.default_rng(seed)
    d = domain.dimension
    parents = rng.integers(0, int(side * _Q), size=(n_clusters, d))
    offsets = rng.integers(-_Q, _Q + 1, size=(n_clusters * points_per_cluster, d))
    positions = []
    row = 0
    for c in range(n_clusters):
        center = tuple(Fraction(int(x), _Q) for x in parents[c])
        for _ in range(points_per_cluster):
            positions.append(tuple(center[a] + spread * int(offsets[row, a]) / _Q
                                   for a in range(d)))
            row += 1
    return AtomicMeasure(domain, positions, [Fraction(1)] * len(positions))


def ball_uniform(domain: Domain, center, radius: Scalar = 1,
                 pitch: Scalar = Fraction(1, 8)) -> AtomicMeasure:
    """Uniform unit mass over the radius-r ball around `center`, discretized
    on the global cell-center lattice of the given pitch: one atom per cell
    whose center lies in the closed ball, all with equal mass summing to 1.
    """
    radius = Fraction(radius) if is_exact(radius) else radius
    pitch = Fraction(pitch)
    _require(radius > 0, "radius", "must be positive")
    _require(pitch > 0, "pitch", "must be positive")
    side = Fraction(domain.side)
    n = side / pitch
    _require(n.denominator == 1, "pitch", "must divide the domain side")
    center = tuple(Fraction(c) if is_exact(c) else c for c in center)
    d = domain.dimension
    r_sq = radius * radius
    half_cells = int(Fraction(radius) / pitch) + 1
    base = [int(Fraction(c) / pitch) for c in center]
    positions = []
    span = range(-half_cells - 1, half_cells + 2)
    idx = [0] * d
    offsets = [list(span)] * d
    counters = [0] * d
    while True:
        cand = tuple(base[a] + offsets[a][counters[a]] for a in range(d))
        point = tuple((2 * c + 1) * pitch / 2 for c in cand)
        dist_sq = domain.dist_sq(point, center)
        if dist_sq <= r_sq:
            positions.append(domain.wrap_point(point))
        axis = d - 1
        while axis >= 0:
            counters[axis] += 1
            if counters[axis] < len(offsets[axis]):
                break
            counters[axis] = 0
            axis -= 1
        if axis < 0:
            break
    if not positions:
        raise ValueError("pitch too coarse: no cell center inside the ball")
    mass = Fraction(1, len(positions))
    return AtomicMeasure(domain, positions, [mass] * len(positions))


def generate_instance(kind: str, params: dict, seed: int) -> AtomicMeasure:
    """Dispatch generator. `params` must include 'dim' and 'side' plus the
    kind-specific fields:

    - perturbed_lattice: delta
    - poisson_process:   intensity
    - cluster:           n_clusters, points_per_cluster, spread
    - ball_uniform:      center, radius, pitch (seed unused)
    """
    kinds = ("perturbed_lattice", "poisson_process", "cluster", "ball_uniform")
    if kind not in kinds:
        raise ValueError(f"invalid parameter 'kind': must be one of {kinds}")
    params = dict(params)
    dim = params.pop("dim")
    side = params.pop("side")
    kind_domain = params.pop("kind", "torus")
    domain = Domain(dim, Fraction(side) if is_exact(side) else side, kind_domain)
    if kind == "perturbed_lattice":
        return perturbed_lattice(domain, params.pop("delta"), seed)
    if kind == "poisson_process":
        return poisson_process(domain, params.pop("intensity"), seed)
    if kind == "cluster":
        return cluster_process(domain, int(params.pop("n_clusters")),
                               int(params.pop("points_per_cluster")),
                               params.pop("spread"), seed)
    return ball_uniform(domain, params.pop("center"),
                        params.pop("radius", 1), params.pop("pitch", Fraction(1, 8)))


def random_unit_atoms(domain: Domain, count: int, seed: int) -> AtomicMeasure:
    """`count` unit-mass atoms uniform on the 1/Q coordinate subgrid; exact."""
    side = Fraction(domain.side)
    rng = np.random.default_rng(seed)
    steps = rng.integers(0, int(side * _Q), size=(count, domain.dimension))
    positions = [tuple(Fraction(int(s), _Q) for s in row) for row in steps]
    return AtomicMeasure(domain, positions, [Fraction(1)] * count)
