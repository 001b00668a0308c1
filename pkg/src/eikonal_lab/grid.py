"""Grid geometry, speed fields and the benchmark problem catalog.

Gridpoints live on the unit cube with ``n + 1`` points per side and spacing
``h = 1 / n``.  Flat indices use the lexicographic layout
``i + (n+1) * j + (n+1)**2 * k`` so ``i`` is the fastest-varying axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

INF = np.inf

# Speed-model kind codes understood by the compiled kernels.
SPEED_CONSTANT = 0
SPEED_SINE = 1
SPEED_CHECKERBOARD = 2
SPEED_SHELLMAZE = 3


class ConfigurationError(ValueError):
    """Invalid problem or solver configuration."""


@dataclass(frozen=True)
class GridGeometry:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError(f"n must be >= 1, got {self.n}")

    @property
    def side(self) -> int:
        return self.n + 1

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def size(self) -> int:
        return self.side ** 3

    def coords(self, idx: int) -> tuple[float, float, float]:
        i, j, k = axis_indices(idx, self)
        h = self.h
        return i * h, j * h, k * h


def linear_index(i: int, j: int, k: int, geometry: GridGeometry) -> int:
    s = geometry.side
    if __debug__:
        n = geometry.n
        if not (0 <= i <= n and 0 <= j <= n and 0 <= k <= n):
            raise IndexError(f"({i}, {j}, {k}) outside grid with n={n}")
    return i + s * j + s * s * k


def axis_indices(idx: int, geometry: GridGeometry) -> tuple[int, int, int]:
    s = geometry.side
    if __debug__ and not 0 <= idx < geometry.size:
        raise IndexError(f"gridpoint {idx} outside grid of size {geometry.size}")
    k, rem = divmod(idx, s * s)
    j, i = divmod(rem, s)
    return i, j, k


def neighbor_indices(idx: int, geometry: GridGeometry) -> list[int | None]:
    """Axis neighbors in the order -x, +x, -y, +y, -z, +z.

    Entries are ``None`` where the neighbor would fall outside the cube.
    """
    i, j, k = axis_indices(idx, geometry)
    n, s = geometry.n, geometry.side
    return [
        idx - 1 if i > 0 else None,
        idx + 1 if i < n else None,
        idx - s if j > 0 else None,
        idx + s if j < n else None,
        idx - s * s if k > 0 else None,
        idx + s * s if k < n else None,
    ]


@njit(cache=True, nogil=True)
def speed_at(kind, params, x, y, z):
    if kind == SPEED_CONSTANT:
        return params[0]
    if kind == SPEED_SINE:
        a = params[0]
        w = params[1] * np.pi
        return 1.0 + a * np.sin(w * x) * np.sin(w * y) * np.sin(w * z)
    if kind == SPEED_CHECKERBOARD:
        K = params[0]
        top = K - 1.0
        cx = min(np.floor(K * x), top)
        cy = min(np.floor(K * y), top)
        cz = min(np.floor(K * z), top)
        if (cx + cy + cz) % 2.0 == 0.0:
            return params[1]
        return params[2]
    # shell maze on [-1, 1]^3
    t = params[0]
    w = params[1]
    X = 2.0 * x - 1.0
    Y = 2.0 * y - 1.0
    Z = 2.0 * z - 1.0
    rad = np.sqrt(X * X + Y * Y + Z * Z)
    in_hole_column = X * X + Y * Y < w
    for b in range(4):
        inner = 0.3 + 0.2 * b
        if inner < rad < inner + t:
            # openings alternate: z < 0 for the 1st and 3rd shells
            if in_hole_column and ((b % 2 == 0 and Z < 0.0) or (b % 2 == 1 and Z > 0.0)):
                return params[3]
            return params[2]
    return params[3]


@njit(cache=True)
def _speed_many(kind, params, pts):
    out = np.empty(pts.shape[0])
    for p in range(pts.shape[0]):
        out[p] = speed_at(kind, params, pts[p, 0], pts[p, 1], pts[p, 2])
    return out


@dataclass(frozen=True)
class SpeedModel:
    """Speed field ``F`` on the unit cube, evaluated on demand.

    ``kind`` and ``params`` are what the compiled kernels consume.
    """

    kind: int
    params: tuple[float, ...]
    name: str = ""

    @classmethod
    def constant(cls, c: float = 1.0) -> SpeedModel:
        if c <= 0:
            raise ConfigurationError("constant speed must be positive")
        return cls(SPEED_CONSTANT, (float(c),), "constant")

    @classmethod
    def sine_product(cls, amplitude: float, frequency: float) -> SpeedModel:
        if not 0 <= amplitude < 1:
            raise ConfigurationError("sine amplitude must lie in [0, 1) to keep F positive")
        return cls(SPEED_SINE, (float(amplitude), float(frequency)), "sine")

    @classmethod
    def checkerboard(cls, K: int = 11, fast: float = 2.0, slow: float = 1.0) -> SpeedModel:
        if K < 1 or fast <= 0 or slow <= 0:
            raise ConfigurationError("checkerboard needs K >= 1 and positive speeds")
        return cls(SPEED_CHECKERBOARD, (float(K), float(fast), float(slow)), "checkerboard")

    @classmethod
    def shell_maze(cls, thickness: float = 1 / 12, hole_width: float = 1 / 10,
                   slow: float = 0.001, fast: float = 1.0) -> SpeedModel:
        if slow <= 0 or fast <= 0:
            raise ConfigurationError("shell maze speeds must be positive")
        return cls(SPEED_SHELLMAZE, (float(thickness), float(hole_width), float(slow), float(fast)),
                   "shellmaze")

    @property
    def param_array(self) -> np.ndarray:
        return np.asarray(self.params, dtype=np.float64)

    def __call__(self, x, y, z):
        if np.ndim(x) == 0 and np.ndim(y) == 0 and np.ndim(z) == 0:
            return float(speed_at(self.kind, self.param_array, float(x), float(y), float(z)))
        pts = np.stack(np.broadcast_arrays(x, y, z), axis=-1).astype(np.float64)
        shape = pts.shape[:-1]
        return _speed_many(self.kind, self.param_array, pts.reshape(-1, 3)).reshape(shape)


@dataclass(frozen=True)
class Problem:
    geometry: GridGeometry
    speed: SpeedModel
    exit_points: tuple[tuple[int, float], ...]
    name: str = "custom"

    def __post_init__(self):
        if not self.exit_points:
            raise ConfigurationError("a problem needs at least one exit point")
        seen = set()
        M = self.geometry.size
        for idx, q in self.exit_points:
            if not 0 <= idx < M:
                raise ConfigurationError(f"exit index {idx} outside grid")
            if not (np.isfinite(q) and q >= 0):
                raise ConfigurationError(f"exit value {q} must be finite and >= 0")
            if idx in seen:
                raise ConfigurationError(f"duplicate exit index {idx}")
            seen.add(idx)

    @property
    def n(self) -> int:
        return self.geometry.n

    def exit_mask(self) -> np.ndarray:
        mask = np.zeros(self.geometry.size, dtype=np.uint8)
        for idx, _ in self.exit_points:
            mask[idx] = 1
        return mask

    def speed_at_index(self, idx: int) -> float:
        return self.speed(*self.geometry.coords(idx))


@dataclass
class SolverState:
    """Per-gridpoint values and active flags; the iterate of every solver."""

    values: np.ndarray
    active: np.ndarray
    is_exit: np.ndarray = field(repr=False)

    @classmethod
    def initial(cls, problem: Problem, activate_exit_neighbors: bool = False) -> SolverState:
        M = problem.geometry.size
        values = np.full(M, INF)
        active = np.zeros(M, dtype=np.uint8)
        is_exit = problem.exit_mask()
        for idx, q in problem.exit_points:
            values[idx] = q
        if activate_exit_neighbors:
            for idx, _ in problem.exit_points:
                for nb in neighbor_indices(idx, problem.geometry):
                    if nb is not None and not is_exit[nb]:
                        active[nb] = 1
        return cls(values, active, is_exit)

    def copy(self) -> SolverState:
        return SolverState(self.values.copy(), self.active.copy(), self.is_exit)

    def grid(self, geometry: GridGeometry) -> np.ndarray:
        """Values as a ``[k, j, i]`` shaped view."""
        s = geometry.side
        return self.values.reshape(s, s, s)


CATALOG = ("constant", "sine20", "sine2", "checkerboard", "shellmaze")


def center_exit_points(geometry: GridGeometry) -> tuple[tuple[int, float], ...]:
    n = geometry.n
    if n % 2 == 0:
        raise ConfigurationError(
            f"centered source needs an even number of points per side (odd n), got n={n}")
    lo, hi = (n - 1) // 2, (n + 1) // 2
    return tuple((linear_index(i, j, k, geometry), 0.0)
                 for k in (lo, hi) for j in (lo, hi) for i in (lo, hi))


def build_problem(name: str, n: int, **params) -> Problem:
    """Catalog problem with ``q = 0`` on the 8 gridpoints nearest the center."""
    if name == "constant":
        speed = SpeedModel.constant(params.get("c", 1.0))
    elif name == "sine20":
        speed = SpeedModel.sine_product(params.get("amplitude", 0.5), params.get("frequency", 20))
    elif name == "sine2":
        speed = SpeedModel.sine_product(params.get("amplitude", 0.99), params.get("frequency", 2))
    elif name == "checkerboard":
        speed = SpeedModel.checkerboard(int(params.get("K", 11)), params.get("fast", 2.0),
                                        params.get("slow", 1.0))
    elif name == "shellmaze":
        speed = SpeedModel.shell_maze(params.get("thickness", 1 / 12),
                                      params.get("hole_width", 1 / 10),
                                      params.get("slow", 0.001))
    else:
        raise ConfigurationError(f"unknown problem {name!r}; choose from {', '.join(CATALOG)}")
    geometry = GridGeometry(n)
    return Problem(geometry, speed, center_exit_points(geometry), name)
