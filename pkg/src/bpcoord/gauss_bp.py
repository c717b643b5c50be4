"""Gaussian-approximated belief propagation.

Receiver updates replace the exhaustive expectation over neighbor beliefs
with a Gaussian model of the aggregate interference: per-edge means and
sharpness-scaled covariances propagate through the mixing matrices, and
messages become log partition values of Gaussian-weighted utility
integrals evaluated by Gauss-Hermite quadrature in the eigenbasis of the
interference covariance.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ._numerics import hermite_grid, log_sum_exp
from .core import InterferenceSystem, SchedulingProfile, build_factor_graph
from .errors import ConfigurationError
from .exact_bp import BPConfig, effective_sharpness

SCALAR_BYTES = 8

_EIG_TOL = 1e-12


@dataclass
class EdgeMoments:
    """Means and sharpness-scaled covariances of the transmit beliefs.

    ``cov`` entries are sharpness * Var(x); dividing by the sharpness
    recovers the belief variance, which keeps the interference model
    self-consistent.  Keyed by (receiver, transmitter) edge; per-link
    aggregates come from the full product belief.
    """

    mean: dict = field(default_factory=dict)
    cov: dict = field(default_factory=dict)
    link_mean: dict = field(default_factory=dict)
    link_cov: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ReceiverInterference:
    """Gaussian model of the aggregate interference at one receiver."""

    mean: np.ndarray  # (n_z,)
    cov: np.ndarray  # (n_z, n_z), sharpness-scaled: Var(z) = cov / sharpness


def shift_table(table: np.ndarray) -> np.ndarray:
    """Log-likelihood tables are stored shifted so the max entry is zero."""
    finite = np.isfinite(table)
    if not finite.any():
        return np.zeros_like(table)
    return table - table[finite].max()


def moments_from_loglik(
    candidates: np.ndarray, table: np.ndarray, sharpness: float
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and scaled covariance of the belief exp(sharpness * table)."""
    shifted = shift_table(np.asarray(table, dtype=float))
    p = np.exp(sharpness * shifted, where=np.isfinite(shifted),
               out=np.zeros_like(shifted))
    p = p / p.sum()
    mean = p @ candidates
    centered = candidates - mean
    cov = sharpness * (centered.T @ (p[:, None] * centered))
    return mean, (cov + cov.T) / 2


def uniform_edge_moments(system: InterferenceSystem, sharpness: float) -> EdgeMoments:
    """Initial moments: every belief uniform over its candidate list."""
    graph = build_factor_graph(system)
    moments = EdgeMoments()
    for j in range(system.n):
        mean, cov = moments_from_loglik(
            system.sets[j].candidates, np.zeros(len(system.sets[j])), sharpness
        )
        moments.link_mean[j] = mean
        moments.link_cov[j] = cov
    for (i, j) in sorted(graph.edges):
        moments.mean[(i, j)] = moments.link_mean[j].copy()
        moments.cov[(i, j)] = moments.link_cov[j].copy()
    return moments


def interference_moments(
    system: InterferenceSystem, moments: EdgeMoments, i: int
) -> ReceiverInterference:
    """Mean and scaled covariance of the aggregate interference at RX i."""
    mean = np.zeros(system.n_z)
    cov = np.zeros((system.n_z, system.n_z))
    for j in system.interferers(i):
        a = system.mixing_matrix(i, j)
        mean += a @ moments.mean[(i, j)]
        cov += a @ moments.cov[(i, j)] @ a.T
    return ReceiverInterference(mean=mean, cov=(cov + cov.T) / 2)


def conditional_interference_moments(
    system: InterferenceSystem,
    moments: EdgeMoments,
    i: int,
    j: int,
    x_j: np.ndarray,
    aggregate: ReceiverInterference | None = None,
) -> ReceiverInterference:
    """Interference moments at RX i conditioned on link j's candidate.

    Incremental form: shift the mean by the deviation of x_j from its edge
    mean and remove link j's covariance contribution (rank-limited
    downdate).  The result is symmetric; small negative eigenvalues from
    floating point are clamped later inside the quadrature.
    """
    if aggregate is None:
        aggregate = interference_moments(system, moments, i)
    a = system.mixing_matrix(i, j)
    mean = aggregate.mean + a @ (np.asarray(x_j, dtype=float) - moments.mean[(i, j)])
    cov = aggregate.cov - a @ moments.cov[(i, j)] @ a.T
    return ReceiverInterference(mean=mean, cov=(cov + cov.T) / 2)


def gauss_hermite_nodes(
    cov_scaled: np.ndarray,
    sharpness: float,
    order: int = 9,
    dim_cap: int = 8,
    mc_samples: int = 4096,
    mc_seed: int = 0,
    diagnostics: Counter | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Integration nodes for a Gaussian with covariance cov_scaled/sharpness.

    Returns zero-mean offsets (count, n_z) and log weights summing to one
    in probability.  Directions with eigenvalue below 1e-12 of the trace
    are treated as point masses; above ``dim_cap`` active directions the
    tensor grid is replaced by seeded Monte Carlo sampling.
    """
    cov = np.asarray(cov_scaled, dtype=float) / sharpness
    n_z = cov.shape[0]
    eigvals, eigvecs = np.linalg.eigh((cov + cov.T) / 2)
    trace = max(float(np.trace(cov)), 0.0)
    tol = _EIG_TOL * max(trace, 1.0e-300)
    if diagnostics is not None and np.any(eigvals < -max(tol, 1e-300)):
        diagnostics["psd_clamps"] += 1
    active = eigvals > tol
    n_active = int(active.sum())
    if n_active == 0:
        return np.zeros((1, n_z)), np.zeros(1)
    lam = eigvals[active]
    basis = eigvecs[:, active]
    if n_active > dim_cap:
        if diagnostics is not None:
            diagnostics["mc_fallback"] += 1
            diagnostics["mc_samples"] = mc_samples
        rng = np.random.default_rng(
            np.random.SeedSequence((mc_seed, n_active, mc_samples))
        )
        draws = rng.standard_normal((mc_samples, n_active))
        offsets = draws * np.sqrt(lam) @ basis.T
        return offsets, np.full(mc_samples, -np.log(mc_samples))
    points, log_w = hermite_grid(order, n_active)
    offsets = (points * np.sqrt(2.0 * lam)) @ basis.T
    return offsets, log_w


def log_partition_self(
    utility,
    candidates: np.ndarray,
    interference: ReceiverInterference,
    sharpness: float,
    offsets: np.ndarray,
    log_w: np.ndarray,
) -> np.ndarray:
    """Serving-edge message: Gaussian-weighted log partition per candidate.

    For degenerate covariance the integral collapses to the utility at the
    mean interference.
    """
    z_nodes = interference.mean + offsets
    out = np.empty(len(candidates))
    for c, x in enumerate(candidates):
        vals = sharpness * utility.value_batch(x, z_nodes)
        out[c] = log_sum_exp(vals + log_w) / sharpness
    return out


def cross_message(
    utility,
    candidates_i: np.ndarray,
    serving_loglik: np.ndarray,
    rest_mean: np.ndarray,
    contributions: np.ndarray,
    sharpness: float,
    offsets: np.ndarray,
    log_w: np.ndarray,
) -> np.ndarray:
    """Message to an interfering transmitter: log partition per candidate
    of that link, marginalizing the serving candidate against its belief.

    ``rest_mean`` is the mean interference from everyone but the target
    link and ``contributions`` the target link's exact per-candidate
    terms; ``offsets``/``log_w`` come from the conditional covariance,
    which does not depend on the candidate.  When the utility declares a
    support floor (physical interference powers are nonnegative), the
    random residual is rectified at that floor before the target link's
    own contribution is added back, so the conditioned link's effect is
    never swallowed by the unphysical Gaussian tail.
    """
    rest = rest_mean + offsets  # (K, n_z)
    floor = getattr(utility, "z_floor", None)
    if floor is not None:
        rest = np.maximum(rest, floor)
    z_nodes = contributions[:, None, :] + rest[None, :, :]  # (m_j, K, n_z)
    m_j = contributions.shape[0]
    vals = np.empty((len(candidates_i), m_j, offsets.shape[0]))
    for c, x in enumerate(candidates_i):
        vals[c] = sharpness * utility.value_batch(x, z_nodes)
    weighted = vals + sharpness * serving_loglik[:, None, None] + log_w[None, None, :]
    return log_sum_exp(weighted, axis=(0, 2)) / sharpness


def log_partition_value(
    utility,
    candidates_i: np.ndarray,
    serving_loglik: np.ndarray,
    interference: ReceiverInterference,
    sharpness: float,
    quad_order: int = 9,
    dim_cap: int = 8,
    mc_samples: int = 4096,
    mc_seed: int = 0,
) -> float:
    """Scalar log partition of the joint (candidate, interference) model.

    This is the quantity whose derivatives in the interference mean define
    the sensitivities; exposed separately so finite-difference checks can
    target exactly what the engine computes.
    """
    offsets, log_w = gauss_hermite_nodes(
        interference.cov, sharpness, order=quad_order, dim_cap=dim_cap,
        mc_samples=mc_samples, mc_seed=mc_seed,
    )
    z_nodes = interference.mean + offsets
    vals = np.empty((len(candidates_i), offsets.shape[0]))
    for c, x in enumerate(candidates_i):
        vals[c] = sharpness * utility.value_batch(x, z_nodes)
    weighted = vals + sharpness * serving_loglik[:, None] + log_w[None, :]
    return float(log_sum_exp(weighted) / sharpness)


def moment_accumulation_flops(system: InterferenceSystem, i: int) -> int:
    """Work to fold every interferer's moments into receiver i's model.

    One mean product plus one two-sided covariance product per neighbor;
    counted so measured receiver cost reflects the linear-in-degree part
    even when no per-edge messages are computed.
    """
    total = 0
    for j in system.interferers(i):
        n_x = system.sets[j].n_x
        total += n_x * system.n_z + n_x * system.n_z * (n_x + system.n_z)
    return total


def leave_one_out_tables(incoming: dict, neighbors, exclude: int, size: int) -> np.ndarray:
    """Sum of incoming log-likelihood tables over all senders but one."""
    total = np.zeros(size)
    for ell in neighbors:
        if ell != exclude:
            total = total + incoming[ell]
    return total


def tx_update_gaussian(
    system: InterferenceSystem,
    incoming: dict,
    j: int,
    neighbors,
    sharpness: float,
    damping: float = 0.0,
    previous: dict | None = None,
):
    """Transmitter-side update: leave-one-out sums, the full-sum belief,
    and the moments of every outgoing edge belief.

    ``damping`` geometrically mixes each fresh table with the previous
    round's (``previous`` maps receiver -> table); zero is the pure sum.
    """
    size = len(system.sets[j])
    candidates = system.sets[j].candidates

    def damp(table, key):
        if damping > 0.0 and previous is not None and key in previous:
            table = (1.0 - damping) * table + damping * previous[key]
        return shift_table(table)

    total = damp(leave_one_out_tables(incoming, neighbors, exclude=-1, size=size),
                 "total")
    to_rx = {}
    edge_moments = {}
    for i in neighbors:
        table = damp(leave_one_out_tables(incoming, neighbors, i, size), i)
        to_rx[i] = table
        edge_moments[i] = moments_from_loglik(candidates, table, sharpness)
    link_moments = moments_from_loglik(candidates, total, sharpness)
    return to_rx, total, edge_moments, link_moments


@dataclass
class GaussBPResult:
    profile: SchedulingProfile
    objective: float
    rounds: int
    final_loglik: dict  # link -> shifted log-likelihood table
    history: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)


def run_gaussian_bp(
    system: InterferenceSystem, config: BPConfig, trace: bool = False
) -> GaussBPResult:
    """Alternating receiver/transmitter rounds with Gaussian interference,
    starting from uniform beliefs; decision is the per-link argmax of the
    final belief table."""
    from .core import total_utility

    graph = build_factor_graph(system)
    u = effective_sharpness(system, config)
    moments = uniform_edge_moments(system, u)
    serving = {i: np.zeros(len(system.sets[i])) for i in range(system.n)}
    diagnostics: Counter = Counter()
    rx_evals: dict = {}
    history: list = []
    totals: dict = {}
    to_rx_prev: dict = {}

    for t in range(config.rounds):
        round_evals: Counter = Counter()
        to_tx: dict = {}
        to_rx_next: dict = {}
        round_trace: dict = {"round": t, "receivers": {}} if trace else None
        for i in range(system.n):
            agg = interference_moments(system, moments, i)
            round_evals[i] += moment_accumulation_flops(system, i)
            offsets, log_w = gauss_hermite_nodes(
                agg.cov, u, order=config.quad_order, dim_cap=config.quad_dim_cap,
                mc_samples=config.mc_samples, mc_seed=config.mc_seed,
                diagnostics=diagnostics,
            )
            to_tx[(i, i)] = shift_table(
                log_partition_self(system.utilities[i], system.sets[i].candidates,
                                   agg, u, offsets, log_w)
            )
            round_evals[i] += len(system.sets[i]) * offsets.shape[0]
            for j in graph.rx_neighbors[i]:
                if j == i:
                    continue
                cond = conditional_interference_moments(
                    system, moments, i, j, np.zeros(system.sets[j].n_x), aggregate=agg
                )
                a = system.mixing_matrix(i, j)
                rest_mean = agg.mean - a @ moments.mean[(i, j)]
                c_offsets, c_log_w = gauss_hermite_nodes(
                    cond.cov, u, order=config.quad_order, dim_cap=config.quad_dim_cap,
                    mc_samples=config.mc_samples, mc_seed=config.mc_seed,
                    diagnostics=diagnostics,
                )
                to_tx[(i, j)] = shift_table(
                    cross_message(system.utilities[i], system.sets[i].candidates,
                                  serving[i], rest_mean,
                                  system.contribution_table(i, j), u,
                                  c_offsets, c_log_w)
                )
                round_evals[i] += (
                    len(system.sets[i]) * len(system.sets[j]) * c_offsets.shape[0]
                )
            if trace:
                round_trace["receivers"][i] = {
                    "interference_mean": agg.mean.tolist(),
                    "interference_cov_diag": np.diag(agg.cov).tolist(),
                }
        for j in range(system.n):
            neighbors = graph.tx_neighbors[j]
            incoming = {ell: to_tx[(ell, j)] for ell in neighbors}
            prev = {i: to_rx_prev[(i, j)] for i in neighbors if (i, j) in to_rx_prev}
            if j in totals:
                prev["total"] = totals[j]
            to_rx, total, edge_moms, link_moms = tx_update_gaussian(
                system, incoming, j, neighbors, u,
                damping=config.damping, previous=prev,
            )
            totals[j] = total
            serving[j] = to_rx[j]
            for i in neighbors:
                to_rx_next[(i, j)] = to_rx[i]
                moments.mean[(i, j)], moments.cov[(i, j)] = edge_moms[i]
            moments.link_mean[j], moments.link_cov[j] = link_moms
        to_rx_prev = to_rx_next
        rx_evals[t] = dict(round_evals)
        if trace:
            round_trace["beliefs"] = {j: totals[j].tolist() for j in range(system.n)}
            history.append(round_trace)

    decision = tuple(int(np.argmax(totals[j])) for j in range(system.n))
    profile = SchedulingProfile(decision)
    return GaussBPResult(
        profile=profile,
        objective=total_utility(system, profile),
        rounds=config.rounds,
        final_loglik=dict(totals),
        history=history,
        stats={
            "rx_ops_by_round": rx_evals,
            "diagnostics": dict(diagnostics),
            "effective_sharpness": u,
        },
    )
