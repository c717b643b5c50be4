"""Linear-mixing interference model.

A scheduling problem over n links where each transmitter picks one vector
from a finite candidate set and the interference seen by each receiver is a
linear combination of the other links' choices.  Everything downstream
(solvers, baselines, the simulation harness) works against the types in
this module.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, EvaluationError

MAX_CANDIDATES = 4096
MAX_INTERFERENCE_DIM = 64


@dataclass(frozen=True)
class SchedulingSet:
    """Ordered finite set of candidate transmit vectors for one link.

    Candidate order is fixed; an index into the list is the canonical
    identity of a candidate everywhere in the library.
    """

    candidates: np.ndarray  # (n_candidates, n_x)

    def __post_init__(self):
        cand = np.atleast_2d(np.asarray(self.candidates, dtype=float))
        if cand.size == 0:
            raise ConfigurationError("candidate set must be non-empty")
        if cand.ndim != 2:
            raise ConfigurationError("candidates must be a (count, n_x) array")
        if not np.all(np.isfinite(cand)):
            raise ConfigurationError("candidates must be finite")
        if len(cand) > MAX_CANDIDATES:
            raise ConfigurationError(
                f"candidate set size {len(cand)} exceeds cap {MAX_CANDIDATES}"
            )
        cand.setflags(write=False)
        object.__setattr__(self, "candidates", cand)

    @property
    def n_x(self) -> int:
        return self.candidates.shape[1]

    def __len__(self) -> int:
        return self.candidates.shape[0]


class InterferenceSystem:
    """n links, per-pair mixing matrices and per-link utility evaluators.

    Mixing matrices are stored sparsely keyed by ordered pair (rx, tx);
    absence means an exact zero block.  Self-pairs are rejected: a link
    never interferes with itself.  Utility evaluators follow the protocol
    in :mod:`bpcoord.utility` (``value``/``value_batch``/``grad_z``/...).

    Immutable after construction; candidate interference contributions are
    precomputed so instances can be shared read-only across solvers.
    """

    def __init__(
        self,
        sets: Sequence[SchedulingSet],
        mixing: Mapping[tuple[int, int], np.ndarray],
        n_z: int,
        utilities: Sequence,
    ):
        if not sets:
            raise ConfigurationError("system needs at least one link")
        if n_z < 1 or n_z > MAX_INTERFERENCE_DIM:
            raise ConfigurationError(
                f"interference dimension {n_z} outside [1, {MAX_INTERFERENCE_DIM}]"
            )
        if len(utilities) != len(sets):
            raise ConfigurationError("one utility evaluator required per link")
        self.sets = tuple(sets)
        self.n = len(self.sets)
        self.n_z = int(n_z)
        self.utilities = tuple(utilities)

        clean = {}
        for (i, j), mat in mixing.items():
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ConfigurationError(f"mixing pair ({i}, {j}) out of range")
            if i == j:
                raise ConfigurationError("self-pair mixing must be absent (always zero)")
            a = np.asarray(mat, dtype=float)
            if a.shape != (self.n_z, self.sets[j].n_x):
                raise ConfigurationError(
                    f"mixing matrix ({i}, {j}) has shape {a.shape}, "
                    f"expected {(self.n_z, self.sets[j].n_x)}"
                )
            if not np.all(np.isfinite(a)):
                raise ConfigurationError(f"mixing matrix ({i}, {j}) must be finite")
            if np.any(a != 0.0):
                a.setflags(write=False)
                clean[(i, j)] = a
        self.mixing = clean

        # Per-pair candidate contributions A_ij @ x for every candidate x of
        # the transmitting link, used by all solvers and the enumerators.
        self._contrib = {
            (i, j): np.ascontiguousarray(self.sets[j].candidates @ a.T)
            for (i, j), a in self.mixing.items()
        }
        for arr in self._contrib.values():
            arr.setflags(write=False)

    def mixing_matrix(self, i: int, j: int) -> np.ndarray:
        """Mixing block from transmitter j to receiver i (zeros if absent)."""
        mat = self.mixing.get((i, j))
        if mat is None:
            return np.zeros((self.n_z, self.sets[j].n_x))
        return mat

    def contribution_table(self, i: int, j: int) -> np.ndarray:
        """Interference contributions at receiver i for every candidate of link j."""
        tab = self._contrib.get((i, j))
        if tab is None:
            return np.zeros((len(self.sets[j]), self.n_z))
        return tab

    def interferers(self, i: int) -> tuple[int, ...]:
        """Transmitters with a nonzero mixing block into receiver i."""
        return tuple(sorted(j for (r, j) in self.mixing if r == i))

    def utility_value(self, i: int, x_i: np.ndarray, z_i: np.ndarray) -> float:
        val = float(self.utilities[i].value(x_i, z_i))
        if not np.isfinite(val):
            raise EvaluationError(i)
        return val


@dataclass(frozen=True)
class SchedulingProfile:
    """One candidate index per link; the joint scheduling decision."""

    indices: tuple[int, ...]

    def vector(self, system: InterferenceSystem) -> np.ndarray:
        """Concatenation of the resolved per-link transmit vectors."""
        return np.concatenate(
            [system.sets[j].candidates[c] for j, c in enumerate(self.indices)]
        )


def validate_profile(system: InterferenceSystem, profile: SchedulingProfile) -> None:
    if len(profile.indices) != system.n:
        raise ConfigurationError("profile length does not match link count")
    for j, c in enumerate(profile.indices):
        if not 0 <= c < len(system.sets[j]):
            raise ConfigurationError(f"candidate index {c} out of range for link {j}")


def compute_interference(
    system: InterferenceSystem, profile: SchedulingProfile, i: int
) -> np.ndarray:
    """Aggregate interference at receiver i under the given profile.

    The serving link contributes nothing; only stored cross pairs enter.
    """
    validate_profile(system, profile)
    z = np.zeros(system.n_z)
    for (r, j), tab in system._contrib.items():
        if r == i:
            z += tab[profile.indices[j]]
    return z


def total_utility(system: InterferenceSystem, profile: SchedulingProfile) -> float:
    """Sum of per-link utilities at the profile's realized interference."""
    validate_profile(system, profile)
    total = 0.0
    for i in range(system.n):
        x_i = system.sets[i].candidates[profile.indices[i]]
        z_i = compute_interference(system, profile, i)
        total += system.utility_value(i, x_i, z_i)
    return total


@dataclass(frozen=True)
class FactorGraph:
    """Bipartite transmitter/receiver graph induced by the mixing structure.

    ``rx_neighbors[i]`` lists the transmitters heard by receiver i (always
    including i itself); ``tx_neighbors[j]`` the receivers influenced by
    transmitter j.  Edges are (receiver, transmitter) pairs.
    """

    rx_neighbors: tuple[tuple[int, ...], ...]
    tx_neighbors: tuple[tuple[int, ...], ...]
    edges: frozenset

    def diameter(self) -> int:
        """Longest shortest path over the bipartite node set (inf if disconnected)."""
        n = len(self.rx_neighbors)
        # Nodes 0..n-1 are receivers, n..2n-1 transmitters.
        adj = [[] for _ in range(2 * n)]
        for (i, j) in self.edges:
            adj[i].append(n + j)
            adj[n + j].append(i)
        best = 0
        for src in range(2 * n):
            dist = [-1] * (2 * n)
            dist[src] = 0
            queue = [src]
            while queue:
                nxt = []
                for v in queue:
                    for w in adj[v]:
                        if dist[w] < 0:
                            dist[w] = dist[v] + 1
                            nxt.append(w)
                queue = nxt
            if min(dist) < 0:
                return 2 * n  # disconnected; any bound larger than every path
            best = max(best, max(dist))
        return best


def build_factor_graph(system: InterferenceSystem) -> FactorGraph:
    """Neighbor sets with an edge wherever a mixing block is nonzero, plus self edges."""
    rx = [set([i]) for i in range(system.n)]
    tx = [set([j]) for j in range(system.n)]
    for (i, j) in system.mixing:
        rx[i].add(j)
        tx[j].add(i)
    edges = frozenset(
        {(i, j) for i in range(system.n) for j in rx[i]}
    )
    return FactorGraph(
        rx_neighbors=tuple(tuple(sorted(s)) for s in rx),
        tx_neighbors=tuple(tuple(sorted(s)) for s in tx),
        edges=edges,
    )
