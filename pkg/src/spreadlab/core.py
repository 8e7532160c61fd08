"""Weighted point measures, periodic grids, and trigonometric test functions.

Shared vocabulary for the transport, discrepancy, field, and cube modules.
A Domain fixes the metric (torus by default, axis-aligned box optionally);
AtomicMeasure carries weighted points with exact rational coordinates when
the inputs are rational; GridMeasure and GridField carry per-cell masses and
vector samples on a regular lattice.

Exactness convention: coordinates and masses given as int / Fraction stay
exact end to end (squared distances are compared as rationals, never through
a float sqrt). Anything given as float stays float.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import lcm
from typing import Iterable, Sequence, Union

import numpy as np

Scalar = Union[int, Fraction, float]

_EXACT_TYPES = (int, Fraction)


def is_exact(x) -> bool:
    """True for int / Fraction values (bool excluded)."""
    return isinstance(x, _EXACT_TYPES) and not isinstance(x, bool)


def parse_number(v) -> Scalar:
    """Decode a JSON-side number: int, float, or a 'p/q' rational string."""
    if isinstance(v, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(v, int):
        return v
    if isinstance(v, float):
        return v
    if isinstance(v, str):
        return Fraction(v)
    raise TypeError(f"cannot parse number from {type(v).__name__}")


def dump_number(x: Scalar):
    """Encode a scalar for JSON. Integers and floats map to JSON numbers;
    non-integer rationals map to 'p/q' strings so the round trip is exact."""
    if isinstance(x, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(x, int):
        return x
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, float):
        return x
    raise TypeError(f"cannot encode {type(x).__name__}")


@dataclass(frozen=True)
class Domain:
    """A d-dimensional torus of period `side`, or a box [0, side]^d.

    Torus displacement per axis is min(|delta|, side - |delta|); distances
    compose those per-axis displacements into the Euclidean norm.
    """

    dimension: int
    side: Scalar
    kind: str = "torus"

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if self.kind not in ("torus", "box"):
            raise ValueError(f"kind must be 'torus' or 'box', got {self.kind!r}")
        if not self.side > 0:
            raise ValueError(f"side must be positive, got {self.side}")

    @property
    def is_torus(self) -> bool:
        return self.kind == "torus"

    @property
    def is_exact(self) -> bool:
        return is_exact(self.side)

    def volume(self) -> Scalar:
        return self.side ** self.dimension

    def side_float(self) -> float:
        return float(self.side)

    def wrap_coord(self, x: Scalar) -> Scalar:
        """Canonical representative in [0, side) (torus only)."""
        return x % self.side

    def wrap_point(self, p: Sequence[Scalar]) -> tuple:
        if self.is_torus:
            return tuple(x % self.side for x in p)
        return tuple(p)

    def contains(self, p: Sequence[Scalar]) -> bool:
        if self.is_torus:
            return True
        return all(0 <= x <= self.side for x in p)

    def delta_coord(self, a: Scalar, b: Scalar) -> Scalar:
        """Unsigned per-axis displacement under the domain metric."""
        if self.is_torus:
            d = (a - b) % self.side
            other = self.side - d
            return d if d <= other else other
        return a - b if a >= b else b - a

    def dist_sq(self, p: Sequence[Scalar], q: Sequence[Scalar]) -> Scalar:
        """Squared distance; exact (Fraction) when all inputs are exact."""
        total = 0
        for a, b in zip(p, q):
            d = self.delta_coord(a, b)
            total = total + d * d
        return total

    def dist(self, p, q) -> float:
        return math.sqrt(float(self.dist_sq(p, q)))

    def diameter_sq(self) -> Scalar:
        """Largest possible squared distance between two points."""
        if self.is_torus:
            half = Fraction(self.side, 2) if is_exact(self.side) else self.side / 2
            return self.dimension * half * half
        return self.dimension * self.side * self.side

    def delta_array(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorised unsigned per-axis displacement for float arrays."""
        d = np.abs(a - b)
        if self.is_torus:
            L = self.side_float()
            d = np.mod(d, L)
            d = np.minimum(d, L - d)
        return d

    def to_json(self) -> dict:
        return {"kind": self.kind, "side": dump_number(self.side)}


def _coerce_position(p) -> tuple:
    return tuple(p)


class AtomicMeasure:
    """A finite nonnegative measure: weighted points in a Domain.

    Positions on a torus are wrapped to canonical coordinates at
    construction; box positions must lie inside the box. All masses must be
    strictly positive.
    """

    def __init__(self, domain: Domain, positions: Iterable[Sequence[Scalar]],
                 masses: Iterable[Scalar]):
        self.domain = domain
        pts = [_coerce_position(p) for p in positions]
        ms = list(masses)
        if len(pts) != len(ms):
            raise ValueError("positions and masses must have equal length")
        for p in pts:
            if len(p) != domain.dimension:
                raise ValueError(f"position {p} has wrong dimension")
            if not domain.contains(p):
                raise ValueError(f"position {p} outside box domain")
        for m in ms:
            if not m > 0:
                raise ValueError(f"masses must be positive, got {m}")
        self.positions: tuple = tuple(domain.wrap_point(p) for p in pts)
        self.masses: tuple = tuple(ms)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def n_atoms(self) -> int:
        return len(self.positions)

    def __eq__(self, other) -> bool:
        return (isinstance(other, AtomicMeasure)
                and self.domain == other.domain
                and self.positions == other.positions
                and self.masses == other.masses)

    def __repr__(self) -> str:
        return (f"AtomicMeasure({self.n_atoms} atoms, total={float(self.total_mass()):g}, "
                f"d={self.domain.dimension}, {self.domain.kind} L={float(self.domain.side):g})")

    @cached_property
    def _is_exact(self) -> bool:
        return (self.domain.is_exact
                and all(is_exact(m) for m in self.masses)
                and all(is_exact(x) for p in self.positions for x in p))

    @property
    def is_exact(self) -> bool:
        return self._is_exact

    def total_mass(self) -> Scalar:
        if self.is_exact:
            return sum(self.masses, Fraction(0))
        return math.fsum(float(m) for m in self.masses)

    @cached_property
    def float_coords(self) -> np.ndarray:
        """Positions as a (n, d) float64 array."""
        return np.array([[float(x) for x in p] for p in self.positions],
                        dtype=np.float64).reshape(self.n_atoms, self.domain.dimension)

    def exact_scaled_coords(self) -> tuple[int, list[tuple[int, ...]]]:
        """Common denominator D and integer coordinates D * position.

        Only valid for exact measures on an exact-side domain; the domain
        side must also be an integer multiple of 1/D so torus wrapping stays
        integral.
        """
        if not self.is_exact:
            raise ValueError("measure has float data; no exact coordinates")
        dens = [Fraction(x).denominator for p in self.positions for x in p]
        dens.append(Fraction(self.domain.side).denominator)
        D = lcm(*dens) if dens else 1
        coords = [tuple(int(Fraction(x) * D) for x in p) for p in self.positions]
        return D, coords

    def mass_fractions(self) -> list[Fraction]:
        """Masses as exact Fractions (floats convert exactly)."""
        return [m if isinstance(m, Fraction) else Fraction(m) for m in self.masses]

    def restrict(self, indices: Sequence[int]) -> "AtomicMeasure":
        return AtomicMeasure(self.domain,
                             [self.positions[i] for i in indices],
                             [self.masses[i] for i in indices])

    def to_json(self) -> dict:
        return {
            "dimension": self.domain.dimension,
            "domain": self.domain.to_json(),
            "atoms": [{"x": [dump_number(x) for x in p], "mass": dump_number(m)}
                      for p, m in zip(self.positions, self.masses)],
        }

    @staticmethod
    def from_json(obj: dict) -> "AtomicMeasure":
        dom = Domain(obj["dimension"], parse_number(obj["domain"]["side"]),
                     obj["domain"]["kind"])
        positions = [tuple(parse_number(x) for x in a["x"]) for a in obj["atoms"]]
        masses = [parse_number(a["mass"]) for a in obj["atoms"]]
        return AtomicMeasure(dom, positions, masses)


def scale_measure(nu: AtomicMeasure, t: Scalar) -> AtomicMeasure:
    """Apply the scaling action with parameter t > 0.

    An atom at x with mass w moves to x/t with the same mass, and the domain
    side rescales to side/t. Exact inputs with rational t stay exact, so
    scaling by t and then 1/t restores the measure bit for bit.
    """
    if not t > 0:
        raise ValueError(f"scale parameter must be positive, got {t}")
    if is_exact(t):
        t = Fraction(t)
    dom = Domain(nu.domain.dimension, nu.domain.side / t, nu.domain.kind)
    positions = [tuple(x / t for x in p) for p in nu.positions]
    return AtomicMeasure(dom, positions, nu.masses)


class GridMeasure:
    """Scalar samples on a regular lattice over the domain.

    `values[i0, i1, ...]` is attached to the cell with center
    ((i + 1/2) * side / n) per axis. For measure-like grids the values are
    cell masses (so `density()` divides by the cell volume); a few operations
    reuse the container for pointwise scalar samples (potentials) and say so
    in their docstrings. Signed values are allowed: differences of measures
    live in the same container.
    """

    def __init__(self, domain: Domain, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != domain.dimension:
            raise ValueError(f"values must be {domain.dimension}-dimensional")
        if any(n < 2 for n in values.shape):
            raise ValueError("need at least 2 cells per axis")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        self.domain = domain
        self.values = values

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def pitches(self) -> tuple[float, ...]:
        L = self.domain.side_float()
        return tuple(L / n for n in self.shape)

    def pitch(self) -> float:
        ps = self.pitches()
        if max(ps) - min(ps) > 1e-12 * max(ps):
            raise ValueError("grid is anisotropic; no single pitch")
        return ps[0]

    def cell_volume(self) -> float:
        return float(np.prod(self.pitches()))

    def total_mass(self) -> float:
        return float(self.values.sum())

    def density(self) -> np.ndarray:
        return self.values / self.cell_volume()

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        L = self.domain.side_float()
        return (np.arange(n) + 0.5) * (L / n)

    def center_mesh(self) -> list[np.ndarray]:
        axes = [self.axis_centers(i) for i in range(self.domain.dimension)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def centers_flat(self) -> np.ndarray:
        mesh = self.center_mesh()
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def exact_center(self, index: tuple[int, ...]) -> tuple:
        """Exact rational cell center (requires an exact domain side)."""
        L = Fraction(self.domain.side)
        return tuple((2 * i + 1) * L / (2 * n) for i, n in zip(index, self.shape))

    def copy_with(self, values: np.ndarray) -> "GridMeasure":
        return GridMeasure(self.domain, values)

    def to_json(self) -> dict:
        return {
            "dimension": self.domain.dimension,
            "domain": self.domain.to_json(),
            "grid": {"shape": list(self.shape),
                     "values": [float(v) for v in self.values.ravel()]},
        }

    @staticmethod
    def from_json(obj: dict) -> "GridMeasure":
        dom = Domain(obj["dimension"], parse_number(obj["domain"]["side"]),
                     obj["domain"]["kind"])
        g = obj["grid"]
        values = np.array(g["values"], dtype=np.float64).reshape(tuple(g["shape"]))
        return GridMeasure(dom, values)


class GridField:
    """Vector samples on a regular lattice: values[..., j] is component j
    of the field at the cell center."""

    def __init__(self, domain: Domain, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != domain.dimension + 1 or values.shape[-1] != domain.dimension:
            raise ValueError("values must have shape (*grid, dimension)")
        if any(n < 2 for n in values.shape[:-1]):
            raise ValueError("need at least 2 cells per axis")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        self.domain = domain
        self.values = values

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape[:-1]

    def pitch(self) -> float:
        L = self.domain.side_float()
        ps = [L / n for n in self.shape]
        if max(ps) - min(ps) > 1e-12 * max(ps):
            raise ValueError("grid is anisotropic; no single pitch")
        return ps[0]

    def cell_volume(self) -> float:
        L = self.domain.side_float()
        return float(np.prod([L / n for n in self.shape]))

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean norm of the field."""
        return np.sqrt(np.sum(self.values ** 2, axis=-1))

    def sup_norm(self) -> float:
        return float(self.magnitude().max())

    def copy_with(self, values: np.ndarray) -> "GridField":
        return GridField(self.domain, values)

    def to_json(self) -> dict:
        comps = [self.values[..., j].ravel().tolist()
                 for j in range(self.domain.dimension)]
        return {
            "dimension": self.domain.dimension,
            "domain": self.domain.to_json(),
            "shape": list(self.shape),
            "components": comps,
        }

    @staticmethod
    def from_json(obj: dict) -> "GridField":
        dom = Domain(obj["dimension"], parse_number(obj["domain"]["side"]),
                     obj["domain"]["kind"])
        shape = tuple(obj["shape"])
        comps = [np.array(c, dtype=np.float64).reshape(shape)
                 for c in obj["components"]]
        return GridField(dom, np.stack(comps, axis=-1))


def scale_field(v: GridField, t: Scalar) -> GridField:
    """Scaling action on fields: values divide by t, domain side by t.

    The samples sit at rescaled cell centers x/t, where the new field equals
    v(x)/t, so the transformation is exact for every t > 0; no resampling
    happens.
    """
    if not t > 0:
        raise ValueError(f"scale parameter must be positive, got {t}")
    if is_exact(t):
        t = Fraction(t)
    dom = Domain(v.domain.dimension, v.domain.side / t, v.domain.kind)
    return GridField(dom, v.values / float(t))


def scale_grid_measure(g: GridMeasure, t: Scalar) -> GridMeasure:
    """Scaling action on grid measures: cell masses divide by t^d (mass in a
    rescaled cell), domain side by t."""
    if not t > 0:
        raise ValueError(f"scale parameter must be positive, got {t}")
    if is_exact(t):
        t = Fraction(t)
    dom = Domain(g.domain.dimension, g.domain.side / t, g.domain.kind)
    return GridMeasure(dom, g.values / float(t) ** g.domain.dimension)


@dataclass(frozen=True)
class TestFunction:
    """Finite trigonometric polynomial on the torus.

    phi(x) = sum_j amp_j * cos(2 pi k_j . x / side + phase_j) with integer
    frequency vectors k_j; the gradient is available in closed form.
    """

    domain: Domain
    modes: tuple  # of (k: tuple[int,...], amplitude: float, phase: float)

    def __post_init__(self):
        for k, a, ph in self.modes:
            if len(k) != self.domain.dimension:
                raise ValueError(f"frequency {k} has wrong dimension")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        L = self.domain.side_float()
        out = np.zeros(points.shape[:-1], dtype=np.float64)
        for k, a, ph in self.modes:
            phase = (2.0 * np.pi / L) * (points @ np.asarray(k, dtype=np.float64)) + ph
            out += a * np.cos(phase)
        return out

    def gradient(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        L = self.domain.side_float()
        out = np.zeros(points.shape, dtype=np.float64)
        for k, a, ph in self.modes:
            kv = np.asarray(k, dtype=np.float64)
            phase = (2.0 * np.pi / L) * (points @ kv) + ph
            out += (-a * 2.0 * np.pi / L) * np.sin(phase)[..., None] * kv
        return out

    def grad_sup_bound(self) -> float:
        """Analytic upper bound for sup |grad phi|."""
        L = self.domain.side_float()
        return sum(abs(a) * 2.0 * np.pi / L * math.sqrt(sum(ki * ki for ki in k))
                   for k, a, ph in self.modes)

    def integral(self) -> float:
        """Exact integral over the domain (only k = 0 modes contribute)."""
        vol = float(self.domain.volume())
        return sum(a * math.cos(ph) for k, a, ph in self.modes
                   if all(ki == 0 for ki in k)) * vol


def default_battery(domain: Domain, count: int = 20, max_abs_freq: int = 4,
                    modes_per_function: int = 3, seed: int = 0) -> list[TestFunction]:
    """Seeded battery of random trigonometric test functions.

    Frequencies are nonzero integer vectors with sup-norm at most
    `max_abs_freq`; amplitudes in [0.2, 1], phases uniform. Zero frequency is
    excluded so every battery member integrates to zero against Lebesgue.
    """
    rng = np.random.default_rng(seed)
    d = domain.dimension
    fns = []
    for _ in range(count):
        modes = []
        for _ in range(modes_per_function):
            while True:
                k = tuple(int(x) for x in rng.integers(-max_abs_freq, max_abs_freq + 1, size=d))
                if any(ki != 0 for ki in k):
                    break
            amp = float(rng.uniform(0.2, 1.0))
            phase = float(rng.uniform(0.0, 2.0 * np.pi))
            modes.append((k, amp, phase))
        fns.append(TestFunction(domain, tuple(modes)))
    return fns


def pair_atoms(phi: TestFunction, nu: AtomicMeasure) -> float:
    """integral of phi against nu, evaluated exactly at the atoms."""
    vals = phi(nu.float_coords)
    masses = np.array([float(m) for m in nu.masses])
    return float(vals @ masses)


def pair_grid(phi: TestFunction, g: GridMeasure) -> float:
    """integral of phi against a grid measure via cell-center quadrature."""
    vals = phi(np.stack(g.center_mesh(), axis=-1))
    return float(np.sum(vals * g.values))


def lebesgue_grid(domain: Domain, shape: Sequence[int]) -> GridMeasure:
    """Lebesgue measure as a grid: every cell carries its own volume."""
    shape = tuple(int(n) for n in shape)
    L = domain.side_float()
    vol = float(np.prod([L / n for n in shape]))
    return GridMeasure(domain, np.full(shape, vol))


def lebesgue_atoms(domain: Domain, pitch: Scalar) -> AtomicMeasure:
    """Lebesgue measure atomized at cell centers with exact cell masses.

    `pitch` must divide the domain side exactly (rational arithmetic), so the
    atoms land on (i + 1/2) * pitch with mass pitch^d.
    """
    if not is_exact(pitch) or not is_exact(domain.side):
        raise ValueError("lebesgue_atoms needs exact pitch and domain side")
    pitch = Fraction(pitch)
    n = Fraction(domain.side) / pitch
    if n.denominator != 1:
        raise ValueError(f"pitch {pitch} does not divide side {domain.side}")
    n = int(n)
    d = domain.dimension
    mass = pitch ** d
    centers_1d = [(2 * i + 1) * pitch / 2 for i in range(n)]
    positions = []
    idx = [0] * d
    # odometer over the d-dimensional index grid
    while True:
        positions.append(tuple(centers_1d[i] for i in idx))
        axis = d - 1
        while axis >= 0:
            idx[axis] += 1
            if idx[axis] < n:
                break
            idx[axis] = 0
            axis -= 1
        if axis < 0:
            break
    return AtomicMeasure(domain, positions, [mass] * len(positions))


def lattice_measure(domain: Domain, pitch: Scalar = 1) -> AtomicMeasure:
    """Unit masses at the lattice points pitch * Z^d inside the domain."""
    if not is_exact(pitch) or not is_exact(domain.side):
        raise ValueError("lattice_measure needs exact pitch and domain side")
    pitch = Fraction(pitch)
    n = Fraction(domain.side) / pitch
    if n.denominator != 1:
        raise ValueError(f"pitch {pitch} does not divide side {domain.side}")
    n = int(n)
    d = domain.dimension
    coords_1d = [i * pitch for i in range(n)]
    positions = []
    idx = [0] * d
    while True:
        positions.append(tuple(coords_1d[i] for i in idx))
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


def atomize(g: GridMeasure, *, exact_centers: bool = True,
            drop_below: float = 0.0) -> AtomicMeasure:
    """Turn a nonnegative grid measure into atoms at the cell centers."""
    if np.any(g.values < 0):
        raise ValueError("cannot atomize a signed grid")
    positions = []
    masses = []
    it = np.ndindex(*g.shape)
    for index in it:
        m = float(g.values[index])
        if m > drop_below:
            if exact_centers and g.domain.is_exact:
                positions.append(g.exact_center(index))
            else:
                L = g.domain.side_float()
                positions.append(tuple((i + 0.5) * L / n
                                       for i, n in zip(index, g.shape)))
            masses.append(m)
    return AtomicMeasure(g.domain, positions, masses)


def save_json(obj, path) -> None:
    payload = obj.to_json() if hasattr(obj, "to_json") else obj
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_instance(path) -> AtomicMeasure:
    with open(path) as fh:
        return AtomicMeasure.from_json(json.load(fh))


def load_grid(path) -> GridMeasure:
    with open(path) as fh:
        return GridMeasure.from_json(json.load(fh))


def load_field(path) -> GridField:
    with open(path) as fh:
        return GridField.from_json(json.load(fh))
