"""Grid populations: representation, network extraction, synthetic generation, file I/O.

A population is a ``rows x cols`` matrix of non-negative cell counts. Its
networks are the 4-connected components of non-empty cells; every empty cell
is a network of size one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import dists
from .dists import GammaParam
from .errors import DomainError, GenerationError, ParseError
from .rng import as_generator

MAX_PLACEMENT_RESTARTS = 1000
MAX_STRUCTURE_ATTEMPTS = 200_000

_ROOK = ndimage.generate_binary_structure(2, 1)
_QUEEN = np.ones((3, 3), dtype=bool)


@dataclass
class GridPopulation:
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.size == 0:
            raise DomainError("counts must be a non-empty 2-d matrix")
        if (self.counts < 0).any():
            raise DomainError("cell counts must be non-negative")
        if not (self.counts > 0).any():
            raise DomainError("population has no non-empty cell")

    @property
    def rows(self) -> int:
        return self.counts.shape[0]

    @property
    def cols(self) -> int:
        return self.counts.shape[1]

    @property
    def N(self) -> int:
        return self.counts.size

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def flat(self) -> np.ndarray:
        return self.counts.ravel()


@dataclass
class NetworkStructure:
    """Network decomposition of a population.

    ``cells[j]`` holds the flat (row-major) indices of network ``j``;
    ``memberships`` maps every non-empty cell to its network label.
    """

    N: int
    cells: list
    memberships: dict = field(repr=False)

    @property
    def R(self) -> int:
        return len(self.cells)

    @property
    def C(self) -> np.ndarray:
        return np.array([len(c) for c in self.cells], dtype=np.int64)

    @property
    def X(self) -> int:
        return int(self.C.sum())

    @property
    def Z(self) -> np.ndarray:
        """Sizes of all ``N - X + R`` networks: ``C`` followed by ``N - X`` ones."""
        return np.concatenate([self.C, np.ones(self.N - self.X, dtype=np.int64)])

    def check(self):
        C = self.C
        if self.R < 1 or (C < 1).any() or not (1 <= self.R <= self.X <= self.N):
            raise DomainError("network structure violates 1 <= R <= X <= N")
        if len(self.memberships) != self.X:
            raise DomainError("memberships do not cover exactly the non-empty cells")


@dataclass(frozen=True)
class PopulationSpec:
    """Parameters of the generating model.

    ``lam`` is either an explicit vector of network rates (the number of
    networks is then fixed to its length), a :class:`GammaParam` from which
    one rate per network is drawn, or a single number shared by all networks.
    """

    rows: int
    cols: int
    alpha: float
    beta: float
    lam: object = GammaParam(1.1, 0.13)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DomainError("grid dimensions must be positive")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise DomainError(f"{name} must lie in (0, 1), got {v}")
        if isinstance(self.lam, (int, float)) and not isinstance(self.lam, bool):
            if not self.lam > 0:
                raise DomainError("a constant rate must be positive")
            object.__setattr__(self, "lam", float(self.lam))
        elif not isinstance(self.lam, GammaParam):
            lam = tuple(float(x) for x in self.lam)
            if not lam or min(lam) <= 0:
                raise DomainError("explicit rates must be a non-empty vector of positive values")
            object.__setattr__(self, "lam", lam)

    @property
    def N(self) -> int:
        return self.rows * self.cols


def default_shape(N: int) -> tuple[int, int]:
    """Conventional grid shape for a given size (20x20 for 400, 10x20 for 200)."""
    known = {400: (20, 20), 200: (10, 20), 600: (20, 30)}
    if N in known:
        return known[N]
    r = int(math.isqrt(N))
    while N % r:
        r -= 1
    return r, N // r


def extract_networks(pop: GridPopulation) -> NetworkStructure:
    """Label networks as 4-connected components of non-empty cells.

    Labels follow row-major order of each network's first cell.
    """
    counts = pop.counts if isinstance(pop, GridPopulation) else np.asarray(pop)
    mask = counts > 0
    if not mask.any():
        raise DomainError("all-empty grid has no networks")
    labels, R = ndimage.label(mask, structure=_ROOK)
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_labels = flat[order]
    bounds = np.searchsorted(sorted_labels, np.arange(1, R + 2))
    cells = [order[bounds[j]:bounds[j + 1]].astype(np.int64) for j in range(R)]
    memberships = {int(c): j for j, cs in enumerate(cells) for c in cs}
    return NetworkStructure(N=counts.size, cells=cells, memberships=memberships)


def population_total(pop: GridPopulation) -> int:
    return pop.total


def _neighbors4(idx: int, rows: int, cols: int):
    r, c = divmod(idx, cols)
    if r > 0:
        yield idx - cols
    if r < rows - 1:
        yield idx + cols
    if c > 0:
        yield idx - 1
    if c < cols - 1:
        yield idx + 1


def _place_networks(sizes: Sequence[int], rows: int, cols: int, gen) -> list:
    """Place polyominoes of the given sizes, pairwise separated by empty cells.

    Networks are grown one at a time in random order; a network may not touch
    the 8-neighbourhood of any previously placed one, so rook components can
    never merge. Returns the cell lists in the order of ``sizes``.
    """
    R = len(sizes)
    for _ in range(MAX_PLACEMENT_RESTARTS):
        blocked = np.zeros((rows, cols), dtype=bool)
        placed = [None] * R
        ok = True
        for j in gen.permutation(R):
            size = int(sizes[j])
            free = np.flatnonzero(~blocked.ravel())
            if free.size == 0:
                ok = False
                break
            blocked_flat = blocked.ravel()
            seed = int(free[gen.integers(free.size)])
            cells = [seed]
            in_net = {seed}
            frontier = [n for n in _neighbors4(seed, rows, cols) if not blocked_flat[n]]
            frontier_set = set(frontier)
            while len(cells) < size:
                if not frontier:
                    ok = False
                    break
                k = int(gen.integers(len(frontier)))
                nxt = frontier[k]
                frontier[k] = frontier[-1]
                frontier.pop()
                frontier_set.discard(nxt)
                cells.append(nxt)
                in_net.add(nxt)
                for n in _neighbors4(nxt, rows, cols):
                    if n not in in_net and n not in frontier_set and not blocked_flat[n]:
                        frontier.append(n)
                        frontier_set.add(n)
            if not ok:
                break
            mask = np.zeros(rows * cols, dtype=bool)
            mask[cells] = True
            blocked |= ndimage.binary_dilation(mask.reshape(rows, cols), structure=_QUEEN)
            placed[j] = np.sort(np.array(cells, dtype=np.int64))
        if ok:
            return placed
    raise GenerationError(
        f"could not place {R} networks of sizes {sorted(int(s) for s in sizes)} with empty "
        f"buffers on a {rows}x{cols} grid after {MAX_PLACEMENT_RESTARTS} restarts "
        f"(non-empty cells too dense for separation)"
    )


def draw_structure(spec: PopulationSpec, rng):
    """Draw (X, R, C) from the truncated-binomial / shifted-multinomial hierarchy.

    When ``spec.lam`` is an explicit vector the draw is repeated until the
    number of networks equals its length.
    """
    gen = as_generator(rng)
    N = spec.N
    want_R = len(spec.lam) if isinstance(spec.lam, tuple) else None
    for _ in range(MAX_STRUCTURE_ATTEMPTS):
        X = dists.trunc_binomial_sample(N, spec.alpha, gen)
        R = dists.trunc_binomial_sample(X, spec.beta, gen)
        if want_R is None or R == want_R:
            C = dists.shifted_multinomial_sample(X, R, gen)
            return X, R, C
    raise GenerationError(f"no draw with R = {want_R} networks in {MAX_STRUCTURE_ATTEMPTS} attempts")


def generate_population(spec: PopulationSpec, rng):
    """Generate a population from the hierarchical model with a spatial realization.

    Returns ``(population, networks, rates)``. Network labels follow the
    ascending order of their rates, so ``rates`` is sorted.
    """
    gen = as_generator(rng)
    X, R, C = draw_structure(spec, gen)
    if isinstance(spec.lam, GammaParam):
        rates = np.sort(gen.gamma(spec.lam.shape, 1.0 / spec.lam.rate, size=R))
        rates = np.maximum(rates, 1e-300)
    elif isinstance(spec.lam, float):
        rates = np.full(R, spec.lam)
    else:
        rates = np.sort(np.array(spec.lam, dtype=float))
    cells = _place_networks(C, spec.rows, spec.cols, gen)
    counts = np.zeros(spec.N, dtype=np.int64)
    for j in range(R):
        counts[cells[j]] = dists.trunc_poisson_sample_n(float(rates[j]), len(cells[j]), gen)
    pop = GridPopulation(counts.reshape(spec.rows, spec.cols))
    memberships = {int(c): j for j, cs in enumerate(cells) for c in cs}
    net = NetworkStructure(N=spec.N, cells=cells, memberships=memberships)
    return pop, net, rates


# --------------------------------------------------------------------------
# population files: one "row,col,count" line per non-empty cell


def ingest_grid(path, rows: int, cols: int) -> GridPopulation:
    """Read a population file; cells absent from the file are empty."""
    path = Path(path)
    counts = np.zeros((rows, cols), dtype=np.int64)
    seen = set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise ParseError(f"expected 'row,col,count', got {raw.strip()!r}", path, lineno)
            try:
                r, c, y = (int(p) for p in parts)
            except ValueError:
                raise ParseError(f"non-integer field in {raw.strip()!r}", path, lineno) from None
            if not (0 <= r < rows and 0 <= c < cols):
                raise ParseError(f"cell ({r},{c}) outside a {rows}x{cols} grid", path, lineno)
            if y < 0:
                raise ParseError(f"negative count {y}", path, lineno)
            if (r, c) in seen:
                raise ParseError(f"duplicate cell ({r},{c})", path, lineno)
            seen.add((r, c))
            counts[r, c] = y
    if not (counts > 0).any():
        raise DomainError(f"{path}: population has no non-empty cell")
    return GridPopulation(counts)


def write_grid(pop: GridPopulation, path) -> None:
    lines = [f"# rows={pop.rows} cols={pop.cols}"]
    for r, c in zip(*np.nonzero(pop.counts)):
        lines.append(f"{r},{c},{pop.counts[r, c]}")
    Path(path).write_text("\n".join(lines) + "\n")
