"""Adaptive cluster sampling and the sequential size-biased selection probability.

The first stage draws cells by simple random sampling without replacement.
Every non-empty selected cell expands to its whole network plus the empty
cells bordering it (edge cells). Networks are recorded in order of first hit,
which turns the field sample into an ordered sequence of network draws with
probability proportional to size.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ParseError
from .grid import GridPopulation, NetworkStructure, _neighbors4
from .rng import as_generator

ENUMERATION_LIMIT = 12


@dataclass(frozen=True)
class SampledNetwork:
    """One network in the ordered sample.

    ``label`` is the population network label, or ``None`` for an empty
    initial cell (a size-one network with count zero).
    """

    label: Optional[int]
    size: int
    cells: tuple
    counts: tuple

    @property
    def empty(self) -> bool:
        return self.label is None


@dataclass
class AdaptiveSample:
    N: int
    initial_cells: list
    networks: list
    edge_cells: list = field(default_factory=list)
    rows: Optional[int] = None
    cols: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.networks:
            raise DomainError("a sample must contain at least one network")
        labels = [nw.label for nw in self.networks if nw.label is not None]
        if len(set(labels)) != len(labels):
            raise DomainError("sampled networks must be distinct")
        for nw in self.networks:
            if nw.size < 1 or len(nw.counts) != nw.size:
                raise DomainError("every sampled network must carry one count per cell")
            if nw.empty and (nw.size != 1 or nw.counts[0] != 0):
                raise DomainError("an empty network is a single cell with count zero")
            if not nw.empty and min(nw.counts) < 1:
                raise DomainError("cells of a non-empty network must have counts >= 1")
        if self.sum_sizes > self.N:
            raise DomainError("sampled networks cover more cells than the population")

    @property
    def m(self) -> int:
        return len(self.networks)

    @property
    def sizes(self) -> tuple:
        return tuple(nw.size for nw in self.networks)

    @property
    def nonempty(self) -> list:
        return [nw for nw in self.networks if not nw.empty]

    @property
    def X_s(self) -> int:
        return sum(nw.size for nw in self.nonempty)

    @property
    def R_s(self) -> int:
        return len(self.nonempty)

    @property
    def C_s(self) -> tuple:
        return tuple(nw.size for nw in self.nonempty)

    @property
    def Y_s(self) -> list:
        return [y for nw in self.nonempty for y in nw.counts]

    @property
    def T_s(self) -> int:
        return sum(self.Y_s)

    @property
    def sum_sizes(self) -> int:
        return sum(self.sizes)

    @property
    def free_cells(self) -> int:
        """Cells outside every sampled network; the unobserved non-empty cells live here."""
        return self.N - self.sum_sizes


def _ceil_count(fraction: float, N: int) -> int:
    # guard against 0.05 * 400 = 20.000000000000004
    return int(math.ceil(round(fraction * N, 9)))


def adaptive_sample(pop: GridPopulation, net: NetworkStructure, initial_fraction: float, rng, seed=None):
    """Draw an adaptive cluster sample.

    Parameters
    ----------
    pop, net : population and its network structure
    initial_fraction : fraction of cells in the first-stage SRSWOR, in (0, 1]
    rng : RandomSource or numpy Generator
    """
    if not (0.0 < initial_fraction <= 1.0):
        raise DomainError(f"initial fraction must lie in (0, 1], got {initial_fraction}")
    N = pop.N
    n0 = _ceil_count(initial_fraction, N)
    if n0 < 1:
        raise DomainError("initial sample would be empty")
    gen = as_generator(rng)
    initial = [int(c) for c in gen.choice(N, size=n0, replace=False)]
    flat = pop.flat()
    networks, seen, edges = [], set(), set()
    for c in initial:
        if flat[c] == 0:
            networks.append(SampledNetwork(None, 1, (c,), (0,)))
            continue
        j = net.memberships[c]
        if j in seen:
            continue
        seen.add(j)
        cells = tuple(int(x) for x in net.cells[j])
        networks.append(SampledNetwork(j, len(cells), cells, tuple(int(flat[x]) for x in cells)))
        for x in cells:
            for nb in _neighbors4(x, pop.rows, pop.cols):
                if flat[nb] == 0:
                    edges.add(nb)
    return AdaptiveSample(
        N=N, initial_cells=initial, networks=networks, edge_cells=sorted(edges),
        rows=pop.rows, cols=pop.cols, seed=seed,
    )


def selection_log_prob(sizes: Sequence[int], Z) -> float:
    """Log probability of an ordered sequence of network sizes.

    Networks are drawn one at a time with probability proportional to size,
    without replacement, from the multiset ``Z`` of all network sizes. Same-size
    networks are exchangeable, so the probability of drawing size ``z`` at step
    ``j`` is ``z * g / (sum(Z) - previously drawn sizes)`` where ``g`` counts the
    still-unselected networks of size ``z``. Returns ``-inf`` for infeasible
    sequences.
    """
    if len(sizes) < 1:
        raise DomainError("a sample holds at least one network")
    avail = Counter(int(z) for z in Z)
    remaining = float(sum(int(z) * n for z, n in avail.items()))
    lp = 0.0
    for z in sizes:
        z = int(z)
        g = avail.get(z, 0)
        if g <= 0:
            return -math.inf
        lp += math.log(z * g) - math.log(remaining)
        avail[z] = g - 1
        remaining -= z
    return lp


def enumerate_selection_probs(Z, m: int) -> dict:
    """Exact distribution of the ordered size sequence by enumerating network draws.

    Each network is treated as a distinct individual; sequences of individual
    draws are grouped by their size sequence. Memoized over the set of remaining
    networks, so ``|Z| <= 12`` stays cheap.
    """
    Z = [int(z) for z in Z]
    n = len(Z)
    if n > ENUMERATION_LIMIT:
        raise DomainError(f"enumeration limited to {ENUMERATION_LIMIT} networks, got {n}")
    if not (1 <= m <= n):
        raise DomainError(f"need 1 <= m <= {n}, got {m}")
    full = (1 << n) - 1
    memo = {}

    def suffixes(mask, left):
        key = (mask, left)
        if key in memo:
            return memo[key]
        if left == 0:
            out = {(): 1.0}
        else:
            total = sum(Z[i] for i in range(n) if mask >> i & 1)
            out = {}
            for i in range(n):
                if mask >> i & 1:
                    p = Z[i] / total
                    for seq, q in suffixes(mask & ~(1 << i), left - 1).items():
                        k = (Z[i],) + seq
                        out[k] = out.get(k, 0.0) + p * q
        memo[key] = out
        return out

    return suffixes(full, m)


# --------------------------------------------------------------------------
# sample files


def sample_to_dict(s: AdaptiveSample) -> dict:
    return {
        "N": s.N,
        "rows": s.rows,
        "cols": s.cols,
        "seed": s.seed,
        "initial_cells": list(s.initial_cells),
        "networks": [
            {"label": nw.label, "size": nw.size, "cells": list(nw.cells), "counts": list(nw.counts)}
            for nw in s.networks
        ],
        "edge_cells": list(s.edge_cells),
    }


def sample_from_dict(d: dict, path=None) -> AdaptiveSample:
    try:
        networks = [
            SampledNetwork(
                None if nw["label"] is None else int(nw["label"]),
                int(nw["size"]),
                tuple(int(c) for c in nw["cells"]),
                tuple(int(y) for y in nw["counts"]),
            )
            for nw in d["networks"]
        ]
        return AdaptiveSample(
            N=int(d["N"]),
            initial_cells=[int(c) for c in d["initial_cells"]],
            networks=networks,
            edge_cells=[int(c) for c in d.get("edge_cells", [])],
            rows=d.get("rows"),
            cols=d.get("cols"),
            seed=d.get("seed"),
        )
    except KeyError as exc:
        raise ParseError(f"sample is missing field {exc.args[0]!r}", path) from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"malformed sample: {exc}", path) from None


def write_sample(s: AdaptiveSample, path) -> None:
    Path(path).write_text(json.dumps(sample_to_dict(s), indent=1, sort_keys=True) + "\n")


def read_sample(path) -> AdaptiveSample:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    return sample_from_dict(d, path)


def sample_from_counts(N: int, networks: Sequence[Sequence[int]]) -> AdaptiveSample:
    """Build a sample directly from per-network count lists; ``[0]`` marks an empty cell.

    Cell indices are synthetic. Useful for toy universes and tests.
    """
    out, next_cell, label = [], 0, 0
    for counts in networks:
        counts = tuple(int(y) for y in counts)
        cells = tuple(range(next_cell, next_cell + len(counts)))
        next_cell += len(counts)
        if counts == (0,):
            out.append(SampledNetwork(None, 1, cells, counts))
        else:
            out.append(SampledNetwork(label, len(counts), cells, counts))
            label += 1
    return AdaptiveSample(N=N, initial_cells=[], networks=out)
