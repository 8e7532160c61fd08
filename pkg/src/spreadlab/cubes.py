"""Axis-aligned lattice-cube unions with exact integer geometry.

These back the cube-counting route to discrepancy bounds: boundary areas of
edge-M cube unions, the covering/expanded pair built around a test set, the
reflection-counting inequality relating a union's boundary to the annulus
between the pair, and the pipeline turning a verified per-family bound on
cube-count defects into a discrepancy bound.

Everything geometric is computed in integers; measure evaluations against
atoms use exact rational membership tests (torus-aware).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .core import AtomicMeasure, Domain, Scalar, is_exact


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box given by opposite corners."""
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("corner dimensions differ")
        for a, b in zip(self.lo, self.hi):
            if not a <= b:
                raise ValueError("box corners must satisfy lo <= hi")


@dataclass(frozen=True)
class CubeUnion:
    """Finite union of cubes [a*edge, (a+1)*edge]^d with integer anchors."""

    dimension: int
    edge: int
    anchors: frozenset

    def __post_init__(self):
        if self.edge < 1:
            raise ValueError("edge must be a positive integer")
        for a in self.anchors:
            if len(a) != self.dimension:
                raise ValueError(f"anchor {a} has wrong dimension")

    @property
    def n_cubes(self) -> int:
        return len(self.anchors)

    def volume(self) -> int:
        return self.n_cubes * self.edge ** self.dimension

    def boundary_faces(self) -> int:
        """Number of exposed faces (faces not shared by two member cubes)."""
        count = 0
        for a in self.anchors:
            for axis in range(self.dimension):
                for sign in (-1, 1):
                    nbr = tuple(c + (sign if i == axis else 0)
                                for i, c in enumerate(a))
                    if nbr not in self.anchors:
                        count += 1
        return count

    def translate(self, vec: Sequence[int]) -> "CubeUnion":
        vec = tuple(int(v) for v in vec)
        return CubeUnion(self.dimension, self.edge,
                         frozenset(tuple(c + v for c, v in zip(a, vec))
                                   for a in self.anchors))

    def union(self, other: "CubeUnion") -> "CubeUnion":
        if other.edge != self.edge or other.dimension != self.dimension:
            raise ValueError("mismatched cube unions")
        return CubeUnion(self.dimension, self.edge, self.anchors | other.anchors)

    def unit_cells(self) -> frozenset:
        """Decomposition into unit cells (edge-1 anchors)."""
        if self.edge == 1:
            return self.anchors
        cells = set()
        offs = list(itertools.product(range(self.edge), repeat=self.dimension))
        for a in self.anchors:
            base = tuple(c * self.edge for c in a)
            for off in offs:
                cells.add(tuple(b + o for b, o in zip(base, off)))
        return frozenset(cells)


def boundary_area(u: CubeUnion) -> int:
    """Surface measure of the boundary: exposed faces times edge^(d-1)."""
    return u.boundary_faces() * u.edge ** (u.dimension - 1)


def _anchor_range(lo: Fraction, hi: Fraction, edge: int) -> range:
    """Anchors a such that the closed cube [a*edge, (a+1)*edge] meets the
    closed interval [lo, hi]."""
    first = math.ceil(Fraction(lo) / edge - 1)
    last = math.floor(Fraction(hi) / edge)
    return range(first, last + 1)


def _as_box(item, dimension: int) -> Box:
    if isinstance(item, Box):
        if len(item.lo) != dimension:
            raise ValueError("box has wrong dimension")
        return item
    point = tuple(item)
    if len(point) != dimension:
        raise ValueError(f"point {point} has wrong dimension")
    return Box(point, point)


def build_ab(items: Iterable, edge: int, dimension: int) -> tuple[CubeUnion, CubeUnion]:
    """Covering pair for a finite set of points and boxes: the union A of
    edge-M cubes meeting the set, and the union B of their concentric
    3M expansions (each expansion decomposes into 3^d edge-M cubes).
    A is always contained in B."""
    edge = int(edge)
    if edge < 1:
        raise ValueError("edge must be a positive integer")
    a_anchors: set = set()
    for item in items:
        box = _as_box(item, dimension)
        ranges = [_anchor_range(Fraction(lo), Fraction(hi), edge)
                  for lo, hi in zip(box.lo, box.hi)]
        for anchor in itertools.product(*ranges):
            a_anchors.add(anchor)
    offsets = list(itertools.product((-1, 0, 1), repeat=dimension))
    b_anchors = {tuple(c + o for c, o in zip(a, off))
                 for a in a_anchors for off in offsets}
    return (CubeUnion(dimension, edge, frozenset(a_anchors)),
            CubeUnion(dimension, edge, frozenset(b_anchors)))


@dataclass
class ClaimReport:
    """Exact integer comparison of both boundary areas against the annulus
    volume bound (2d / M) * volume(B minus A)."""
    dimension: int
    edge: int
    area_a: int
    area_b: int
    annulus_cubes: int
    rhs: int          # 2d * edge^(d-1) * annulus_cubes, common to both sides
    passes: bool


def claim_check(items: Iterable, edge: int, dimension: int) -> ClaimReport:
    a, b = build_ab(items, edge, dimension)
    diff = len(b.anchors - a.anchors)
    d = dimension
    area_a = boundary_area(a)
    area_b = boundary_area(b)
    # (2d/M) * m_d(B\A) = 2d * M^(d-1) * #annulus cubes, exactly
    rhs = 2 * d * edge ** (d - 1) * diff
    return ClaimReport(dimension=d, edge=edge, area_a=area_a, area_b=area_b,
                       annulus_cubes=diff, rhs=rhs,
                       passes=(area_a <= rhs and area_b <= rhs))


def random_cube_union(dimension: int, edge: int, seed: int,
                      max_boxes: int = 20, span: int = 12) -> CubeUnion:
    """Seeded random union of up to `max_boxes` integer boxes of cubes;
    produces both connected blobs and scattered components."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, max_boxes + 1))
    anchors: set = set()
    for _ in range(k):
        corner = rng.integers(-span, span + 1, size=dimension)
        sizes = rng.integers(1, 5, size=dimension)
        ranges = [range(int(c), int(c + s)) for c, s in zip(corner, sizes)]
        anchors.update(itertools.product(*ranges))
    return CubeUnion(dimension, edge, frozenset(anchors))


def random_test_points(dimension: int, seed: int, count: Optional[int] = None,
                       span: int = 10, denominator: int = 16) -> list[tuple]:
    """Seeded rational points for exercising build_ab / claim_check,
    including occasional exact face and corner hits."""
    rng = np.random.default_rng(seed)
    if count is None:
        count = int(rng.integers(1, 9))
    pts = []
    for _ in range(count):
        raw = rng.integers(-span * denominator, span * denominator + 1,
                           size=dimension)
        pts.append(tuple(Fraction(int(r), denominator) for r in raw))
    return pts


# ---------------------------------------------------------------------------
# measure evaluations on unit-cell unions (torus aware, exact)

def _atom_cells(position, side: Optional[int]) -> set:
    """Unit cells (closed) containing the point; interior points give one,
    points on faces give all incident cells. Anchors are wrapped when a
    torus period `side` is given."""
    axes = []
    for x in position:
        fx = Fraction(x) if is_exact(x) else Fraction(float(x))
        fl = math.floor(fx)
        cands = {fl}
        if fx == fl:  # on a face: the lower neighbor also contains it
            cands.add(fl - 1)
        axes.append(sorted(cands))
    cells = set()
    for combo in itertools.product(*axes):
        if side is None:
            cells.add(tuple(combo))
        else:
            cells.add(tuple(c % side for c in combo))
    return cells


def measure_on_cells(nu: AtomicMeasure, cells: frozenset) -> Fraction:
    """Exact nu-mass of a union of closed unit cells (anchors canonical in
    [0, side) on the torus)."""
    side = None
    if nu.domain.is_torus:
        side_f = Fraction(nu.domain.side)
        if side_f.denominator != 1:
            raise ValueError("torus cube counting needs an integer side")
        side = int(side_f)
    total = Fraction(0)
    for pos, mass in zip(nu.positions, nu.masses):
        if _atom_cells(pos, side) & cells:
            total += Fraction(mass)
    return total


def wrapped_cells(u: CubeUnion, domain: Domain) -> frozenset:
    """Unit cells of the union reduced mod the torus period."""
    side_f = Fraction(domain.side)
    if side_f.denominator != 1:
        raise ValueError("torus cube counting needs an integer side")
    side = int(side_f)
    return frozenset(tuple(c % side for c in cell) for cell in u.unit_cells())


def wrapped_boundary_faces(cells: frozenset, side: int, dimension: int) -> int:
    """Exposed unit-cell faces with torus-wrapped neighbor lookups."""
    count = 0
    for a in cells:
        for axis in range(dimension):
            for sign in (-1, 1):
                nbr = tuple((c + (sign if i == axis else 0)) % side
                            for i, c in enumerate(a))
                if nbr not in cells:
                    count += 1
    return count


@dataclass
class RhoEstimate:
    """Sampled lower estimate of the cube-count defect ratio, clamped to at
    least 1 (the hypothesis floor of the discrepancy bound)."""
    value: Fraction
    raw_max: Fraction
    worst_index: int
    ratios: tuple


def rho_upper_bound(nu: AtomicMeasure, family: Sequence[CubeUnion]) -> RhoEstimate:
    """max over the family of |nu(U) - volume(U)| / boundary_area(U) on
    unit-edge cube unions, clamped to >= 1.

    This samples the defect ratio, so it is a lower estimate of the true
    supremum over all unions; use a per-generator proven bound when feeding
    the discrepancy pipeline.
    """
    if not family:
        raise ValueError("empty family")
    dom = nu.domain
    ratios = []
    for u in family:
        if u.edge != 1:
            raise ValueError("rho estimation uses unit-edge cube unions")
        if dom.is_torus:
            cells = wrapped_cells(u, dom)
            side = int(Fraction(dom.side))
            faces = wrapped_boundary_faces(cells, side, dom.dimension)
        else:
            cells = u.unit_cells()
            faces = boundary_area(CubeUnion(dom.dimension, 1, cells))
        if faces == 0:
            raise ValueError("degenerate union with empty boundary")
        defect = abs(measure_on_cells(nu, cells) - len(cells))
        ratios.append(Fraction(defect, faces))
    raw = max(ratios)
    worst = ratios.index(raw)
    return RhoEstimate(value=max(raw, Fraction(1)), raw_max=raw,
                       worst_index=worst, ratios=tuple(ratios))


def perturbed_lattice_rho(dimension: int) -> Fraction:
    """Proven cube-count defect bound for lattice points displaced by less
    than 1/2 in sup norm: pairing each displaced point with the half-open
    unit block around its lattice site, only sites whose block meets the
    union's boundary can miscount, and each boundary face is within reach of
    at most 2^(d-1) sites. Clamped to the hypothesis floor of 1."""
    return max(Fraction(2 ** (dimension - 1)), Fraction(1))


# ---------------------------------------------------------------------------
# neighborhood bounds and the discrepancy pipeline

def _coord_interval_distance(domain: Domain, x, lo, hi):
    """Exact per-axis distance from coordinate x to the closed interval
    [lo, hi] under the domain metric."""
    if lo <= x <= hi:
        return Fraction(0)
    if domain.is_torus:
        L = Fraction(domain.side)
        down = (Fraction(x) - Fraction(hi)) % L
        up = (Fraction(lo) - Fraction(x)) % L
        return min(down, up)
    return Fraction(lo) - Fraction(x) if x < lo else Fraction(x) - Fraction(hi)


def dist_sq_to_box(domain: Domain, point, box: Box) -> Fraction:
    total = Fraction(0)
    for x, lo, hi in zip(point, box.lo, box.hi):
        g = _coord_interval_distance(domain, Fraction(x), Fraction(lo), Fraction(hi))
        total += g * g
    return total


def measure_of_neighborhood(nu: AtomicMeasure, items: Sequence, radius) -> Fraction:
    """Exact nu-mass of the closed radius-neighborhood of a finite union of
    points and boxes."""
    r = Fraction(radius) if is_exact(radius) else Fraction(float(radius))
    r_sq = r * r
    dom = nu.domain
    boxes = [_as_box(it, dom.dimension) for it in items]
    total = Fraction(0)
    for pos, mass in zip(nu.positions, nu.masses):
        p = tuple(Fraction(x) if is_exact(x) else Fraction(float(x)) for x in pos)
        for box in boxes:
            if dist_sq_to_box(dom, p, box) <= r_sq:
                total += Fraction(mass)
                break
    return total


def lebesgue_neighborhood_lower(domain: Domain, items: Sequence, radius,
                                cells_per_axis: int = 64) -> float:
    """Certified lower bound for the volume of the closed
    radius-neighborhood: grid cells whose center is within
    radius - (cell diagonal)/2 lie entirely inside it.

    Returns the full domain volume exactly when the radius covers the torus.
    """
    d = domain.dimension
    L = domain.side_float()
    r = float(radius)
    if domain.is_torus and r >= L * math.sqrt(d) / 2:
        return float(domain.volume())
    boxes = [_as_box(it, d) for it in items]
    n = int(cells_per_axis)
    h = L / n
    axes = [(np.arange(n) + 0.5) * h for _ in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    safe = r - h * math.sqrt(d) / 2 - 1e-9
    if safe < 0:
        return 0.0
    inside = np.zeros(pts.shape[0], dtype=bool)
    for box in boxes:
        lo = np.array([float(v) for v in box.lo])
        hi = np.array([float(v) for v in box.hi])
        if domain.is_torus:
            down = np.mod(pts - hi[None, :], L)
            up = np.mod(lo[None, :] - pts, L)
            wrapped = np.minimum(down, up)
            in_interval = (pts >= lo[None, :]) & (pts <= hi[None, :])
            gap = np.where(in_interval, 0.0, wrapped)
        else:
            below = np.maximum(lo[None, :] - pts, 0.0)
            above = np.maximum(pts - hi[None, :], 0.0)
            gap = np.maximum(below, above)
        dist_sq = np.sum(gap ** 2, axis=1)
        inside |= dist_sq <= safe * safe
    return float(inside.sum()) * h ** d


@dataclass
class PipelineRow:
    items: tuple
    nu_of_v: float
    volume_reach: float
    volume_of_v: float
    nu_reach: float
    forward_ok: bool
    backward_ok: bool


@dataclass
class PipelineReport:
    rho: float
    edge_m: int
    constant: float
    bound: float
    rows: tuple
    all_hold: bool


def bound_constant(dimension: int) -> float:
    """Neighborhood constant for the pipeline: every point of the expanded
    union lies within 3 * M * sqrt(d) of the test set, and
    M = floor(2 rho d) + 1 <= 3 rho d for rho >= 1, so reach C * rho with
    C = 9 d^{3/2} always contains it."""
    return 9.0 * dimension ** 1.5


def edge_for_rho(rho, dimension: int) -> int:
    """Cube edge M = floor(2 rho d) + 1, evaluated in exact arithmetic."""
    return int(math.floor(Fraction(rho) * 2 * dimension)) + 1


def cube_bound_pipeline(nu: AtomicMeasure, rho, *, samples: int = 30,
                        seed: int = 0) -> PipelineReport:
    """Discrepancy bound C(d) * rho from a cube-count defect bound rho >= 1,
    with a replay of the two neighborhood inequalities behind it on sampled
    test sets V:

        nu(V) <= volume(V reach)      and      volume(V) <= nu(V reach)

    at reach C(d) * rho. The volume on the right is certified from below, so
    a True row is a proven inequality, not an approximation.
    """
    rho_f = Fraction(rho) if is_exact(rho) else Fraction(float(rho))
    if rho_f < 1:
        raise ValueError(f"rho must be >= 1, got {rho}")
    d = nu.domain.dimension
    m_edge = edge_for_rho(rho_f, d)
    c_d = bound_constant(d)
    reach = c_d * float(rho_f)
    bound = reach
    rng = np.random.default_rng(seed)
    side = Fraction(nu.domain.side) if is_exact(nu.domain.side) else Fraction(float(nu.domain.side))
    grid = int(side * 64)
    rows = []
    for _ in range(samples):
        if rng.random() < 0.5 and nu.n_atoms > 0:
            k = int(rng.integers(1, min(nu.n_atoms, 6) + 1))
            idx = rng.choice(nu.n_atoms, size=k, replace=False)
            items = tuple(nu.positions[i] for i in idx)
            vol_v = 0.0
        else:
            lo = [Fraction(int(rng.integers(0, grid)), 64) for _ in range(d)]
            span = [Fraction(int(rng.integers(0, grid // 2 + 1)), 64) for _ in range(d)]
            hi = [min(a + s, side) for a, s in zip(lo, span)]
            box = Box(tuple(lo), tuple(hi))
            items = (box,)
            vol_v = float(np.prod([float(h - l) for l, h in zip(box.lo, box.hi)]))
        nu_v = float(measure_on_items(nu, items))
        vol_reach = lebesgue_neighborhood_lower(nu.domain, items, reach)
        nu_reach = float(measure_of_neighborhood(nu, items, reach))
        rows.append(PipelineRow(items=items, nu_of_v=nu_v,
                                volume_reach=vol_reach, volume_of_v=vol_v,
                                nu_reach=nu_reach,
                                forward_ok=nu_v <= vol_reach + 1e-12,
                                backward_ok=vol_v <= nu_reach + 1e-12))
    all_hold = all(r.forward_ok and r.backward_ok for r in rows)
    return PipelineReport(rho=float(rho_f), edge_m=m_edge, constant=c_d,
                          bound=bound, rows=tuple(rows), all_hold=all_hold)


def measure_on_items(nu: AtomicMeasure, items: Sequence) -> Fraction:
    """Exact nu-mass of a finite union of closed points and boxes."""
    dom = nu.domain
    boxes = [_as_box(it, dom.dimension) for it in items]
    total = Fraction(0)
    for pos, mass in zip(nu.positions, nu.masses):
        p = tuple(Fraction(x) if is_exact(x) else Fraction(float(x)) for x in pos)
        for box in boxes:
            if all(_coord_interval_distance(dom, c, Fraction(lo), Fraction(hi)) == 0
                   for c, lo, hi in zip(p, box.lo, box.hi)):
                total += Fraction(mass)
                break
    return total
