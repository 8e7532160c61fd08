"""Sup-displacement (bottleneck) transport between finite weighted point sets.

The optimum over couplings is always attained at one of the pairwise
source-target distances, so the solver binary-searches that candidate list
with an exact feasibility probe: a Hall-type max-flow on the bipartite graph
of admissible pairs, with capacities equal to the masses (scaled to
integers). A feasible probe returns an explicit coupling; an infeasible one
returns a violating subset extracted from the minimum cut, certifying that
no coupling exists at that radius.

Exact instances (rational coordinates and masses) are decided entirely in
integer arithmetic; the reported float value is cosmetic on top of an exact
squared radius.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Optional, Sequence, Union

import numpy as np

from .core import AtomicMeasure, Scalar, is_exact, lattice_measure
from .maxflow import max_flow

MASS_RTOL = 1e-9

_INT64_GUARD = 2 ** 62


@dataclass
class CandidateSet:
    """Sorted unique squared source-target distances.

    In exact mode, `values` holds integers equal to dist_sq * den_sq where
    den_sq is the square of the common coordinate denominator; in float mode
    den_sq is None and values are float64. `matrix` is the full (n1, n2)
    squared-distance table in the same units.
    """

    den_sq: Optional[int]
    values: np.ndarray
    matrix: np.ndarray

    @property
    def count(self) -> int:
        return len(self.values)

    def radius_sq(self, index: int) -> Scalar:
        v = self.values[index]
        if self.den_sq is None:
            return float(v)
        return Fraction(int(v), self.den_sq)

    def radius(self, index: int) -> float:
        return math.sqrt(float(self.radius_sq(index)))

    def threshold_for(self, radius: Scalar) -> Union[int, float]:
        """Probe threshold in matrix units for the closed ball |x-y| <= radius."""
        if self.den_sq is None:
            return float(radius) ** 2
        r = Fraction(radius) if is_exact(radius) else Fraction(radius)
        return math.floor(r * r * self.den_sq)

    def index_of_radius_sq(self, radius_sq) -> int:
        """Index of the smallest candidate >= radius_sq (for bracketing)."""
        if self.den_sq is None:
            return int(np.searchsorted(self.values, float(radius_sq)))
        scaled = Fraction(radius_sq) * self.den_sq
        target = math.ceil(scaled)
        return int(np.searchsorted(self.values, target))


def candidate_distances(m1: AtomicMeasure, m2: AtomicMeasure) -> CandidateSet:
    dom = m1.domain
    if dom != m2.domain:
        raise ValueError("measures live on different domains")
    if m1.is_exact and m2.is_exact:
        d1, c1 = m1.exact_scaled_coords()
        d2, c2 = m2.exact_scaled_coords()
        den = lcm(d1, d2)
        side_scaled = Fraction(dom.side) * den
        L = int(side_scaled)  # integral because den absorbs the side denominator
        bound = dom.dimension * (L * L if dom.is_torus else L * L)
        if bound < _INT64_GUARD:
            a = np.array([[x * (den // d1) for x in p] for p in c1], dtype=np.int64)
            b = np.array([[x * (den // d2) for x in p] for p in c2], dtype=np.int64)
            a = a.reshape(len(c1), dom.dimension)
            b = b.reshape(len(c2), dom.dimension)
            delta = np.abs(a[:, None, :] - b[None, :, :])
            if dom.is_torus:
                delta = np.minimum(delta, L - delta)
            matrix = np.sum(delta * delta, axis=2)
            values = np.unique(matrix)
            return CandidateSet(den * den, values, matrix)
        # arbitrary-precision fallback for extreme denominators
        s1 = [tuple(x * (den // d1) for x in p) for p in c1]
        s2 = [tuple(x * (den // d2) for x in p) for p in c2]
        Lint = L
        rows = []
        for p in s1:
            row = []
            for q in s2:
                total = 0
                for xa, xb in zip(p, q):
                    d = abs(xa - xb)
                    if dom.is_torus:
                        d = min(d, Lint - d)
                    total += d * d
                row.append(total)
            rows.append(row)
        matrix = np.array(rows, dtype=object)
        values = np.array(sorted({v for row in rows for v in row}), dtype=object)
        return CandidateSet(den * den, values, matrix)
    a = m1.float_coords
    b = m2.float_coords
    delta = np.abs(a[:, None, :] - b[None, :, :])
    if dom.is_torus:
        L = dom.side_float()
        delta = np.mod(delta, L)
        delta = np.minimum(delta, L - delta)
    matrix = np.sum(delta * delta, axis=2)
    values = np.unique(matrix)
    return CandidateSet(None, values, matrix)


@dataclass(frozen=True)
class Relation:
    """Admissible source-target pairs: either every pair within a radius
    (under the domain metric) or an explicit boolean matrix."""

    radius: Optional[Scalar] = None
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.radius is None) == (self.matrix is None):
            raise ValueError("give exactly one of radius or matrix")
        if self.radius is not None and not self.radius >= 0:
            raise ValueError("radius must be nonnegative")
        if self.matrix is not None:
            object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=bool))

    def adjacency(self, m1: AtomicMeasure, m2: AtomicMeasure,
                  candidates: Optional[CandidateSet] = None) -> np.ndarray:
        if self.matrix is not None:
            if self.matrix.shape != (m1.n_atoms, m2.n_atoms):
                raise ValueError("relation matrix shape mismatch")
            _check_matrix_symmetry(self.matrix, m1, m2)
            return self.matrix
        cand = candidates if candidates is not None else candidate_distances(m1, m2)
        thr = cand.threshold_for(self.radius)
        return cand.matrix <= thr


def _check_matrix_symmetry(matrix: np.ndarray, m1: AtomicMeasure, m2: AtomicMeasure):
    """Explicit relations must be symmetric wherever the two supports share
    points: if p appears in both measures, (p at i, q at j) admissible must
    match (q at i', p at j')."""
    pos1 = {p: i for i, p in enumerate(m1.positions)}
    pos2 = {p: j for j, p in enumerate(m2.positions)}
    for i, p in enumerate(m1.positions):
        for j, q in enumerate(m2.positions):
            i2 = pos1.get(q)
            j2 = pos2.get(p)
            if i2 is not None and j2 is not None:
                if bool(matrix[i, j]) != bool(matrix[i2, j2]):
                    raise ValueError("relation matrix is not symmetric on shared support")


class Coupling:
    """Sparse nonnegative weights on (source atom, target atom) pairs.

    Construction only checks positivity and index ranges; marginal agreement
    is measured (not enforced) by `verify_coupling`, so deliberately corrupted
    couplings can be built and flagged.
    """

    def __init__(self, source: AtomicMeasure, target: AtomicMeasure, entries):
        self.source = source
        self.target = target
        ent = []
        for (i, j, w) in entries:
            if not (0 <= i < source.n_atoms and 0 <= j < target.n_atoms):
                raise ValueError(f"entry ({i},{j}) out of range")
            if not w > 0:
                raise ValueError("weights must be positive")
            ent.append((int(i), int(j), w))
        self.entries = tuple(ent)

    def __len__(self):
        return len(self.entries)

    @property
    def is_exact(self) -> bool:
        return (self.source.is_exact and self.target.is_exact
                and all(is_exact(w) for (_, _, w) in self.entries))

    def support_radius_sq(self) -> Scalar:
        dom = self.source.domain
        best = None
        for (i, j, _) in self.entries:
            d = dom.dist_sq(self.source.positions[i], self.target.positions[j])
            if best is None or d > best:
                best = d
        return 0 if best is None else best

    def support_radius(self) -> float:
        return math.sqrt(float(self.support_radius_sq()))

    def marginal_sums(self):
        row = [Fraction(0)] * self.source.n_atoms
        col = [Fraction(0)] * self.target.n_atoms
        for (i, j, w) in self.entries:
            fw = w if isinstance(w, Fraction) else Fraction(w)
            row[i] += fw
            col[j] += fw
        return row, col

    def to_json(self, extra: Optional[dict] = None) -> dict:
        obj = {
            "source": self.source.to_json(),
            "target": self.target.to_json(),
            "entries": [[i, j, float(w)] for (i, j, w) in self.entries],
        }
        if extra:
            obj["metadata"] = extra
        return obj

    @staticmethod
    def from_json(obj: dict) -> "Coupling":
        src = AtomicMeasure.from_json(obj["source"])
        tgt = AtomicMeasure.from_json(obj["target"])
        return Coupling(src, tgt, [(int(i), int(j), w) for (i, j, w) in obj["entries"]])


@dataclass
class ViolatingSet:
    """Witness that no coupling exists at the recorded radius: the chosen
    atoms of one measure carry more mass than the other measure puts on their
    closed neighborhood.

    `side` is the dominated-condition side (1 means the subset lives in the
    first measure), `radius` is a float radius at which the condition fails
    and is suitable for replay through `check_di_condition`.
    """

    side: int
    atom_indices: tuple
    radius: float
    mass_subset: Scalar
    mass_neighborhood: Scalar
    radius_sq: Optional[Scalar] = None

    def holds_strictly(self) -> bool:
        return self.mass_subset > self.mass_neighborhood


@dataclass
class CouplingReport:
    marginal_error_source: Scalar
    marginal_error_target: Scalar
    support_radius: float
    support_radius_sq: Scalar


def verify_coupling(coupling: Coupling) -> CouplingReport:
    """Total-variation distance of each marginal from its target measure,
    plus the largest pair distance appearing in the support."""
    row, col = coupling.marginal_sums()
    src = coupling.source.mass_fractions()
    tgt = coupling.target.mass_fractions()
    err1 = sum((abs(r - m) for r, m in zip(row, src)), Fraction(0))
    err2 = sum((abs(c - m) for c, m in zip(col, tgt)), Fraction(0))
    if not coupling.is_exact:
        err1, err2 = float(err1), float(err2)
    sq = coupling.support_radius_sq()
    return CouplingReport(err1, err2, math.sqrt(float(sq)), sq)


def _balanced_mass_fractions(m1: AtomicMeasure, m2: AtomicMeasure):
    """Masses as exact Fractions with exactly equal totals.

    Exact instances must balance exactly. Float instances may disagree by up
    to 1e-9 relative; the second list is rescaled (exact rational factor) so
    the totals match, which perturbs each mass by at most that relative error.
    """
    if m1.n_atoms == 0 or m2.n_atoms == 0:
        raise ValueError("measures must be nonempty")
    f1 = m1.mass_fractions()
    f2 = m2.mass_fractions()
    t1, t2 = sum(f1), sum(f2)
    if t1 == t2:
        return f1, f2
    rel = abs(t1 - t2) / max(t1, t2)
    if m1.is_exact and m2.is_exact:
        raise ValueError(f"total masses differ exactly: {t1} vs {t2}")
    if rel > MASS_RTOL:
        raise ValueError(f"total masses differ by {float(rel):.3e} relative (> {MASS_RTOL})")
    factor = t1 / t2
    return f1, [m * factor for m in f2]


def _probe(m1: AtomicMeasure, m2: AtomicMeasure, adjacency: np.ndarray,
           f1, f2, backend: str = "auto"):
    """Feasibility of a coupling supported on `adjacency`.

    Returns (True, entries) with exact Fraction weights, or (False, subset)
    where subset indexes atoms of m1 whose mass exceeds the m2-mass of their
    admissible neighborhood.
    """
    adjacency = np.asarray(adjacency, dtype=bool)
    n1, n2 = m1.n_atoms, m2.n_atoms
    den = lcm(*[f.denominator for f in f1 + f2])
    caps1 = [int(f * den) for f in f1]
    caps2 = [int(f * den) for f in f2]
    total = sum(caps1)
    inf = total + 1
    s, t = 0, n1 + n2 + 1
    arcs = [(0, 1 + i, caps1[i]) for i in range(n1)]
    pair_start = len(arcs)
    pairs = np.argwhere(adjacency)
    for (i, j) in pairs:
        arcs.append((1 + int(i), 1 + n1 + int(j), inf))
    for j in range(n2):
        arcs.append((1 + n1 + j, t, caps2[j]))
    result = max_flow(n1 + n2 + 2, arcs, s, t, backend=backend)
    if result.value == total:
        entries = []
        for k, (i, j) in enumerate(pairs):
            fl = result.arc_flows[pair_start + k]
            if fl > 0:
                entries.append((int(i), int(j), Fraction(fl, den)))
        return True, entries
    subset = tuple(i for i in range(n1) if (1 + i) in result.source_side)
    return False, subset


def feasible_coupling(m1: AtomicMeasure, m2: AtomicMeasure, relation: Relation,
                      backend: str = "auto"):
    """Coupling supported inside the relation, or a ViolatingSet certifying
    that none exists. Exactly one of the two is returned."""
    cand = candidate_distances(m1, m2) if relation.radius is not None else None
    adjacency = relation.adjacency(m1, m2, cand)
    f1, f2 = _balanced_mass_fractions(m1, m2)
    ok, payload = _probe(m1, m2, adjacency, f1, f2, backend)
    if ok:
        weights = payload
        if not (m1.is_exact and m2.is_exact):
            weights = [(i, j, float(w)) for (i, j, w) in weights]
        return Coupling(m1, m2, weights)
    return _violating_set_from_subset(m1, m2, adjacency, payload, relation, f1, f2)


def _violating_set_from_subset(m1, m2, adjacency, subset, relation, f1, f2) -> ViolatingSet:
    adjacency = np.asarray(adjacency, dtype=bool)
    mass_c = sum((f1[i] for i in subset), Fraction(0))
    nbr_cols = np.zeros(m2.n_atoms, dtype=bool)
    for i in subset:
        nbr_cols |= adjacency[i]
    mass_n = sum((f2[j] for j in range(m2.n_atoms) if nbr_cols[j]), Fraction(0))
    if relation.radius is not None:
        radius = float(relation.radius)
        radius_sq = (Fraction(relation.radius) ** 2
                     if is_exact(relation.radius) else float(relation.radius) ** 2)
    else:
        radius, radius_sq = float("nan"), None
    exact = m1.is_exact and m2.is_exact
    vs = ViolatingSet(side=1, atom_indices=tuple(int(i) for i in subset),
                      radius=radius, radius_sq=radius_sq,
                      mass_subset=mass_c if exact else float(mass_c),
                      mass_neighborhood=mass_n if exact else float(mass_n))
    if not vs.holds_strictly():
        raise AssertionError("min-cut produced a non-violating subset")
    return vs


@dataclass
class TransportResult:
    value: float
    value_sq: Scalar
    witness: Coupling
    candidates_probed: int
    n_candidates: int
    certificate_below: Optional[ViolatingSet] = None


def _mass_fit_lower_index(cand: CandidateSet, f1, f2) -> int:
    """Cheap necessary condition: each atom's mass must fit inside its
    admissible neighborhood, giving a lower bracket for the search."""
    n1, n2 = cand.matrix.shape
    if cand.matrix.dtype == object or n1 * n2 < 4096:
        return 0
    w1 = np.array([float(f) for f in f1])
    w2 = np.array([float(f) for f in f2])
    lo = 0
    for (mat, wa, wb) in ((cand.matrix, w1, w2), (cand.matrix.T, w2, w1)):
        for i in range(mat.shape[0]):
            order = np.argsort(mat[i], kind="stable")
            cum = np.cumsum(wb[order])
            k = int(np.searchsorted(cum, wa[i] * (1 - 1e-12)))
            k = min(k, len(order) - 1)
            need = mat[i, order[k]]
            lo = max(lo, int(np.searchsorted(cand.values, need)))
    return lo


def _search_least_feasible(m1: AtomicMeasure, m2: AtomicMeasure,
                           cand: CandidateSet, backend: str = "auto",
                           want_certificate: bool = False):
    """Least candidate index whose closed-ball relation admits a coupling.

    Returns (index, coupling, certificate, probes) where certificate is a
    ViolatingSet at a replayable radius just below the optimum.
    """
    f1, f2 = _balanced_mass_fractions(m1, m2)
    outcomes: dict[int, bool] = {}
    best_entries: list = []
    best_entries_at = [None]

    def probe_index(k: int) -> bool:
        if k in outcomes:
            return outcomes[k]
        adjacency = np.asarray(cand.matrix <= cand.values[k], dtype=bool)
        ok, payload = _probe(m1, m2, adjacency, f1, f2, backend)
        outcomes[k] = ok
        if ok and (best_entries_at[0] is None or k < best_entries_at[0]):
            best_entries_at[0] = k
            best_entries.clear()
            best_entries.extend(payload)
        return ok

    hi = cand.count - 1
    if not probe_index(hi):
        raise AssertionError("balanced measures must couple at the diameter")
    # cheap analytic bracket, then exponential expansion to a feasible index
    lo = max(_mass_fit_lower_index(cand, f1, f2) - 1, 0)
    step = 1
    k = lo
    while not probe_index(k):
        lo = k + 1
        k = min(k + step, hi)
        step *= 2
    hi = k
    while lo < hi:
        mid = (lo + hi) // 2
        if probe_index(mid):
            hi = mid
        else:
            lo = mid + 1
    best = lo
    # the analytic bracket is float-assisted; confirm it from below
    while best > 0 and probe_index(best - 1):
        best -= 1
    infeasible = [k for k, ok in outcomes.items() if not ok]
    feasible = [k for k, ok in outcomes.items() if ok]
    if infeasible and min(feasible) <= max(infeasible):
        raise AssertionError("feasibility was not monotone along the search")
    if best_entries_at[0] != best:
        raise AssertionError("missing witness at the optimum")
    entries = list(best_entries)
    if not (m1.is_exact and m2.is_exact):
        entries = [(i, j, float(w)) for (i, j, w) in entries]
    witness = Coupling(m1, m2, entries)

    certificate = None
    if want_certificate:
        if best > 0:
            r_below = cand.radius(best - 1)
        elif float(cand.values[0]) > 0:
            r_below = math.nextafter(cand.radius(0), 0.0)
        else:
            r_below = None  # optimum 0: nothing lies below
        if r_below is not None:
            adjacency = np.asarray(cand.matrix <= cand.threshold_for(r_below),
                                   dtype=bool)
            ok, payload = _probe(m1, m2, adjacency, f1, f2, backend)
            if ok:
                raise AssertionError("feasible strictly below the optimum")
            certificate = _violating_set_from_subset(
                m1, m2, adjacency, payload, Relation(radius=r_below), f1, f2)
    return best, witness, certificate, len(outcomes)


def bottleneck_distance(m1: AtomicMeasure, m2: AtomicMeasure,
                        backend: str = "auto") -> TransportResult:
    """Least achievable sup of pair distances over couplings of m1 with m2.

    The value is exact: it is one of the pairwise distances, selected by
    integer feasibility probes. The witness coupling attains it.
    """
    cand = candidate_distances(m1, m2)
    best, witness, _, probed = _search_least_feasible(m1, m2, cand, backend)
    sq = cand.radius_sq(best)
    return TransportResult(value=math.sqrt(float(sq)), value_sq=sq,
                           witness=witness, candidates_probed=probed,
                           n_candidates=cand.count)


_PERM_CACHE: dict[int, np.ndarray] = {}


def _permutations_array(n: int) -> np.ndarray:
    if n not in _PERM_CACHE:
        _PERM_CACHE[n] = np.array(list(itertools.permutations(range(n))), dtype=np.int8)
    return _PERM_CACHE[n]


@dataclass
class BruteForceResult:
    value: float
    value_sq: Scalar


def brute_force_bottleneck(m1: AtomicMeasure, m2: AtomicMeasure) -> BruteForceResult:
    """Oracle: minimum over all bijections of the largest pair distance.

    Requires equal counts of unit-mass atoms, at most 9 per side.
    """
    n = m1.n_atoms
    if n != m2.n_atoms:
        raise ValueError("oracle needs equal atom counts")
    if n > 9:
        raise ValueError("oracle limited to 9 atoms (factorial blowup)")
    if any(m != 1 for m in m1.masses) or any(m != 1 for m in m2.masses):
        raise ValueError("oracle needs unit masses")
    cand = candidate_distances(m1, m2)
    # work on candidate ranks so the min-max stays exact in integer space
    if cand.matrix.dtype == object:
        rank_of = {v: k for k, v in enumerate(cand.values.tolist())}
        ranks = np.array([[rank_of[v] for v in row] for row in cand.matrix.tolist()],
                         dtype=np.int64)
    else:
        ranks = np.searchsorted(cand.values, cand.matrix).astype(np.int64)
    perms = _permutations_array(n)
    rows = np.arange(n)
    chosen = ranks[rows[None, :], perms]
    best_rank = int(chosen.max(axis=1).min())
    sq = cand.radius_sq(best_rank)
    return BruteForceResult(value=math.sqrt(float(sq)), value_sq=sq)


@dataclass
class MarriageResult:
    assignment: tuple  # lattice point index -> atom index
    sup_displacement: float
    sup_displacement_sq: Scalar
    lattice: AtomicMeasure


def marriage_bijection(x: AtomicMeasure, pitch: Scalar = 1,
                       backend: str = "auto") -> MarriageResult:
    """Bottleneck bijection between the lattice points (pitch * Z^d inside
    the domain window) and the unit-mass atoms of x; reports the largest
    displacement."""
    if any(m != 1 for m in x.masses):
        raise ValueError("marriage needs unit masses")
    lattice = lattice_measure(x.domain, pitch)
    if lattice.n_atoms != x.n_atoms:
        raise ValueError(f"count mismatch: {lattice.n_atoms} lattice points "
                         f"vs {x.n_atoms} atoms")
    result = bottleneck_distance(lattice, x, backend=backend)
    assignment = [-1] * lattice.n_atoms
    for (i, j, w) in result.witness.entries:
        if w != 1:
            raise AssertionError("unit-capacity flow must be integral")
        assignment[i] = j
    if any(a < 0 for a in assignment):
        raise AssertionError("flow witness is not a bijection")
    return MarriageResult(assignment=tuple(assignment),
                          sup_displacement=result.value,
                          sup_displacement_sq=result.value_sq,
                          lattice=lattice)
