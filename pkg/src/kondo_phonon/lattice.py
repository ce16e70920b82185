"""Finite hopping graphs and model parameters.

Sites are the integers ``0 .. n-1``; that order is also the fermionic mode
order used by every basis and operator downstream.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class AssumptionViolation(ValueError):
    """A structural hypothesis of the model is violated."""

    def __init__(self, assumption: str, message: str):
        super().__init__(f"{assumption} violated: {message}")
        self.assumption = assumption


@dataclass(frozen=True, eq=False)
class LatticeGraph:
    """Symmetric, nonnegative hopping matrix on a finite set of sites.

    Construction rejects negative amplitudes (assumption (A.1)). Use
    :meth:`unchecked` to build a sign-sabotaged graph for negative controls.
    """

    hopping: np.ndarray
    name: str = "custom"
    _allow_negative: bool = field(default=False, repr=False)

    def __post_init__(self):
        t = np.array(self.hopping, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] < 1:
            raise ValueError(f"hopping must be a square matrix, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("hopping entries must be finite")
        if not np.allclose(t, t.T, atol=0.0, rtol=0.0):
            raise ValueError("hopping matrix must be symmetric")
        if np.any(np.diag(t) != 0.0):
            raise ValueError("hopping matrix must have zero diagonal")
        if not self._allow_negative and np.any(t < 0):
            bad = [tuple(int(i) for i in e) for e in np.argwhere(t < 0) if e[0] < e[1]]
            raise AssumptionViolation("(A.1)", f"negative hopping on edges {bad}")
        t.setflags(write=False)
        object.__setattr__(self, "hopping", t)

    @classmethod
    def unchecked(cls, hopping, name: str = "custom") -> "LatticeGraph":
        return cls(hopping, name=name, _allow_negative=True)

    @property
    def site_count(self) -> int:
        return self.hopping.shape[0]

    @property
    def edge_set(self) -> frozenset:
        n = self.site_count
        return frozenset(
            frozenset((x, y)) for x in range(n) for y in range(x + 1, n) if self.hopping[x, y] != 0.0
        )

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted(tuple(sorted(e)) for e in self.edge_set)

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.hopping >= 0))

    def neighbors(self, x: int) -> list[int]:
        return [int(y) for y in np.flatnonzero(self.hopping[x])]

    def shortest_path(self, source: int, target: int) -> list[int]:
        """Site sequence ``[source, ..., target]`` of minimal length (BFS)."""
        prev = {source: None}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            if u == target:
                break
            for v in self.neighbors(u):
                if v not in prev:
                    prev[v] = u
                    queue.append(v)
        if target not in prev:
            raise AssumptionViolation("(A.2)", f"no path from site {source} to site {target}")
        path = [target]
        while path[-1] != source:
            path.append(prev[path[-1]])
        return path[::-1]

    def relabeled(self, perm: Sequence[int]) -> "LatticeGraph":
        """Graph with site ``x`` renamed to ``perm[x]``."""
        perm = np.asarray(perm)
        t = np.zeros_like(self.hopping)
        t[np.ix_(perm, perm)] = self.hopping
        return LatticeGraph(t, name=f"{self.name}-relabeled", _allow_negative=self._allow_negative)


def from_edges(
    n: int, edges: Iterable, t: float = 1.0, name: str = "custom", allow_negative: bool = False
) -> LatticeGraph:
    """Build a graph from ``(x, y)`` or ``(x, y, weight)`` edges."""
    mat = np.zeros((n, n))
    for e in edges:
        x, y = int(e[0]), int(e[1])
        w = float(e[2]) if len(e) > 2 else t
        if not (0 <= x < n and 0 <= y < n) or x == y:
            raise ValueError(f"invalid edge {tuple(e)} for {n} sites")
        mat[x, y] = mat[y, x] = w
    return LatticeGraph(mat, name=name, _allow_negative=allow_negative)


def chain(n: int, t: float = 1.0) -> LatticeGraph:
    return from_edges(n, [(x, x + 1) for x in range(n - 1)], t, name=f"chain({n})")


def cycle(n: int, t: float = 1.0) -> LatticeGraph:
    if n < 3:
        raise ValueError("a cycle needs at least 3 sites")
    return from_edges(n, [(x, (x + 1) % n) for x in range(n)], t, name=f"cycle({n})")


def grid(nx: int, ny: int, t: float = 1.0) -> LatticeGraph:
    """Open-boundary nearest-neighbour grid, site index ``i + nx*j``."""
    edges = []
    for j in range(ny):
        for i in range(nx):
            s = i + nx * j
            if i + 1 < nx:
                edges.append((s, s + 1))
            if j + 1 < ny:
                edges.append((s, s + nx))
    return from_edges(nx * ny, edges, t, name=f"grid({nx},{ny})")


_GENERATOR = re.compile(r"^\s*(chain|cycle|grid)\s*\(\s*([0-9,\s]+)\)\s*$")


def parse_generator(spec: str, t: float = 1.0) -> LatticeGraph:
    """Parse ``"chain(n)"``, ``"cycle(n)"`` or ``"grid(nx,ny)"``."""
    m = _GENERATOR.match(spec)
    if m is None:
        raise ValueError(f"unknown lattice generator {spec!r}")
    args = [int(a) for a in m.group(2).split(",") if a.strip()]
    kind = m.group(1)
    if kind == "grid":
        if len(args) != 2:
            raise ValueError("grid takes two arguments")
        return grid(*args, t=t)
    if len(args) != 1:
        raise ValueError(f"{kind} takes one argument")
    return chain(args[0], t) if kind == "chain" else cycle(args[0], t)


def _reachable(g: LatticeGraph, start: int, removed: Optional[int] = None) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in g.neighbors(u):
            if v != removed and v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def check_connected(g: LatticeGraph) -> bool:
    """Assumption (A.2): every pair of sites is joined by a path of edges."""
    return len(_reachable(g, 0)) == g.site_count


def is_biconnected(g: LatticeGraph) -> bool:
    """Connected, and no single-site removal disconnects the rest."""
    n = g.site_count
    if not check_connected(g):
        return False
    if n <= 2:
        return True
    for x in range(n):
        start = 0 if x != 0 else 1
        if len(_reachable(g, start, removed=x)) != n - 1:
            return False
    return True


def is_simple_loop(g: LatticeGraph) -> bool:
    n = g.site_count
    degrees = [len(g.neighbors(x)) for x in range(n)]
    return n >= 3 and all(d == 2 for d in degrees) and check_connected(g)


def check_biconnected_not_long_loop(g: LatticeGraph) -> bool:
    """Assumption (A.3): biconnected and not a cycle on more than four sites."""
    if not is_biconnected(g):
        return False
    return not (is_simple_loop(g) and g.site_count > 4)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Couplings: exchange ``J``, field ``h``, phonon energy ``omega`` and ``g[x, y]``."""

    J: float
    h: float = 0.0
    omega: float = 1.0
    coupling: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("J", "h", "omega"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.omega > 0:
            raise ValueError("omega must be strictly positive")
        if self.coupling is not None:
            g = np.array(self.coupling, dtype=float)
            if g.ndim != 2 or g.shape[0] != g.shape[1]:
                raise ValueError("coupling must be a square matrix")
            if not np.all(np.isfinite(g)):
                raise ValueError("coupling entries must be finite")
            g.setflags(write=False)
            object.__setattr__(self, "coupling", g)

    def g(self, n: int) -> np.ndarray:
        """Coupling matrix padded to ``n`` sites (zero when unset)."""
        if self.coupling is None:
            return np.zeros((n, n))
        if self.coupling.shape != (n, n):
            raise ValueError(f"coupling has shape {self.coupling.shape}, expected {(n, n)}")
        return self.coupling

    def replace(self, **changes) -> "ModelParams":
        data = dict(J=self.J, h=self.h, omega=self.omega, coupling=self.coupling)
        data.update(changes)
        return ModelParams(**data)


def uniform_onsite(n: int, g0: float) -> np.ndarray:
    """``g[x, y] = g0 * delta(x, y)``."""
    return g0 * np.eye(n)
