"""Low-overhead belief propagation with first-order cross messages.

Cross edges are split into strong and weak by interfering-gain ratio.
Strong edges carry the full Gaussian-engine unicast messages; weak edges
are served by broadcast quantities only: transmitters broadcast belief
moments, receivers broadcast the sensitivity of their expected utility to
the interference level, and both sides reconstruct linearized messages
from those. One round is two half-rounds (all receivers, then all
transmitters); message payloads are logged per node for overhead
accounting.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ._numerics import log_sum_exp
from .core import InterferenceSystem, SchedulingProfile, build_factor_graph
from .errors import ConfigurationError
from .exact_bp import BPConfig, effective_sharpness
from .gauss_bp import (
    SCALAR_BYTES,
    moment_accumulation_flops,
    ReceiverInterference,
    conditional_interference_moments,
    cross_message,
    gauss_hermite_nodes,
    interference_moments,
    log_partition_self,
    shift_table,
    tx_update_gaussian,
    uniform_edge_moments,
)


@dataclass(frozen=True)
class EdgeClassification:
    """Strong/weak partition of the cross edges, fixed for a whole solve."""

    strong: frozenset  # (receiver, transmitter) cross edges
    threshold_db: float

    def is_strong(self, i: int, j: int) -> bool:
        return (i, j) in self.strong


def serving_gain_norm(system: InterferenceSystem, i: int) -> float:
    """Frobenius norm of link i's serving-gain structure, for classification."""
    util = system.utilities[i]
    model = getattr(util, "rate_model", None)
    if model is not None:
        return float(np.linalg.norm(model.gains))
    norm = getattr(util, "serving_norm", None)
    if norm is None:
        raise ConfigurationError(
            f"link {i} utility exposes no serving gain for edge classification"
        )
    return float(norm)


def classify_edges(
    system: InterferenceSystem,
    threshold_db: float,
    serving_norms=None,
) -> EdgeClassification:
    """Cross edge (i, j) is strong when the interfering gain is within
    ``threshold_db`` (power ratio) of link i's serving gain."""
    strong = set()
    if threshold_db == -np.inf:
        strong = set(system.mixing.keys())
    elif threshold_db != np.inf:
        factor = 10.0 ** (threshold_db / 10.0)
        for (i, j), a in system.mixing.items():
            ref = serving_norms[i] if serving_norms is not None else serving_gain_norm(system, i)
            if np.linalg.norm(a) >= factor * ref:
                strong.add((i, j))
    return EdgeClassification(strong=frozenset(strong), threshold_db=threshold_db)


@dataclass(frozen=True)
class Sensitivity:
    """Expected response of a receiver's utility to interference changes.

    ``grad`` and ``hess`` are the first and second derivatives of the
    (1/sharpness-scaled) log partition value in the interference mean; the
    second derivative carries the covariance correction of the tilted
    distribution so both match finite differences of the partition value.
    """

    grad: np.ndarray  # (n_z,)
    hess: np.ndarray  # (n_z, n_z)


def sensitivities(
    utility,
    candidates: np.ndarray,
    serving_loglik: np.ndarray,
    interference: ReceiverInterference,
    sharpness: float,
    quad_order: int = 9,
    dim_cap: int = 8,
    mc_samples: int = 4096,
    mc_seed: int = 0,
    eval_counter: list | None = None,
) -> Sensitivity:
    """Moments of the utility's z-derivatives under the joint belief over
    (serving candidate, interference) tilted by the exponentiated utility."""
    offsets, log_w = gauss_hermite_nodes(
        interference.cov, sharpness, order=quad_order, dim_cap=dim_cap,
        mc_samples=mc_samples, mc_seed=mc_seed,
    )
    z_nodes = interference.mean + offsets  # (K, n_z)
    n_cand, n_nodes = len(candidates), offsets.shape[0]
    logits = np.empty((n_cand, n_nodes))
    grads = np.empty((n_cand, n_nodes, z_nodes.shape[-1]))
    hesses = np.empty((n_cand, n_nodes, z_nodes.shape[-1], z_nodes.shape[-1]))
    for c, x in enumerate(candidates):
        logits[c] = (sharpness * utility.value_batch(x, z_nodes)
                     + sharpness * serving_loglik[c] + log_w)
        grads[c] = utility.grad_z_batch(x, z_nodes)
        hesses[c] = utility.hess_z_batch(x, z_nodes)
    if eval_counter is not None:
        eval_counter.append(n_cand * n_nodes)
    weights = np.exp(logits - log_sum_exp(logits))
    w_flat = weights.reshape(-1)
    g_flat = grads.reshape(-1, grads.shape[-1])
    h_flat = hesses.reshape(-1, *hesses.shape[-2:])
    mean_grad = w_flat @ g_flat
    mean_outer = np.einsum("k,ka,kb->ab", w_flat, g_flat, g_flat)
    mean_hess = np.einsum("k,kab->ab", w_flat, h_flat)
    hess = mean_hess + sharpness * (mean_outer - np.outer(mean_grad, mean_grad))
    return Sensitivity(grad=mean_grad, hess=(hess + hess.T) / 2)


def first_order_message(
    mixing: np.ndarray, sens: Sensitivity, tx_mean: np.ndarray
) -> np.ndarray:
    """Linear coefficient of the weak-edge message in the target candidate."""
    a = np.asarray(mixing, dtype=float)
    return a.T @ sens.grad - a.T @ sens.hess @ a @ np.asarray(tx_mean, dtype=float)


def linear_message_table(candidates: np.ndarray, coeff: np.ndarray) -> np.ndarray:
    """Weak-edge message table: inner product with the linear coefficient."""
    return shift_table(candidates @ coeff)


def recover_edge_mean(
    tx_mean: np.ndarray, tx_cov_scaled: np.ndarray, coeff: np.ndarray
) -> np.ndarray:
    """Leave-one-out edge mean recovered from the broadcast belief moments.

    First-order perturbation of the belief expectation under removal of a
    linear message; the sharpness factor cancels against the scaled
    covariance.
    """
    return np.asarray(tx_mean, dtype=float) - tx_cov_scaled @ np.asarray(coeff, dtype=float)


@dataclass(frozen=True)
class MessageEvent:
    """One transmitted payload, for overhead accounting and tracing."""

    round: int
    node: str  # "rx3" / "tx1"
    kind: str  # "broadcast" | "unicast"
    role: str  # soft-rts / soft-cqi / soft-cts / loglik-cross / loglik-serving / moments
    nbytes: int
    peer: str = ""


@dataclass
class BroadcastBundle:
    """Per-round broadcast payloads plus the full message event log."""

    round_index: int
    tx_means: dict = field(default_factory=dict)
    tx_covs: dict = field(default_factory=dict)
    rx_sensitivities: dict = field(default_factory=dict)
    events: list = field(default_factory=list)


@dataclass
class FirstOrderResult:
    profile: SchedulingProfile
    objective: float
    rounds: int
    final_loglik: dict
    classification: EdgeClassification
    bundles: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)


def overhead_rows(bundles) -> list[dict]:
    """Flatten bundle events into {round, node, kind, bytes} rows."""
    rows = []
    for bundle in bundles:
        per: Counter = Counter()
        for ev in bundle.events:
            per[(ev.node, ev.kind)] += ev.nbytes
        for (node, kind), nbytes in sorted(per.items()):
            rows.append({"round": bundle.round_index, "node": node,
                         "kind": kind, "bytes": nbytes})
    return rows


def run_first_order_bp(
    system: InterferenceSystem,
    config: BPConfig,
    threshold_db: float = 0.0,
    classification: EdgeClassification | None = None,
    trace: bool = False,
) -> FirstOrderResult:
    """Broadcast/unicast protocol rounds.

    Initialization broadcasts uniform-belief moments; each round runs all
    receiver updates (serving message unicast, strong-edge messages
    unicast, one sensitivity broadcast covering the weak edges), then all
    transmitter updates (leave-one-out sums with weak-edge messages
    reconstructed from the broadcast sensitivities, moment unicasts on
    strong edges, one belief-moment broadcast).  Weak-edge means are
    recovered receiver-side from the broadcast moments and the stored
    linear coefficients.
    """
    from .core import total_utility

    graph = build_factor_graph(system)
    if classification is None:
        classification = classify_edges(system, threshold_db)
    u = effective_sharpness(system, config)
    moments = uniform_edge_moments(system, u)
    serving = {i: np.zeros(len(system.sets[i])) for i in range(system.n)}
    diagnostics: Counter = Counter()
    rx_evals: dict = {}
    bundles: list[BroadcastBundle] = []
    totals: dict = {}
    to_rx_prev: dict = {}
    stored_coeff: dict = {}
    sens_payload = system.n_z + (system.n_z**2 if config.broadcast_hessian else 0)
    moment_payload = {
        j: system.sets[j].n_x + system.sets[j].n_x ** 2 for j in range(system.n)
    }

    init_bundle = BroadcastBundle(round_index=0)
    for j in range(system.n):
        init_bundle.tx_means[j] = moments.link_mean[j].copy()
        init_bundle.tx_covs[j] = moments.link_cov[j].copy()
        init_bundle.events.append(MessageEvent(
            round=0, node=f"tx{j}", kind="broadcast", role="soft-rts",
            nbytes=moment_payload[j] * SCALAR_BYTES,
        ))

    for t in range(config.rounds):
        bundle = init_bundle if t == 0 else BroadcastBundle(round_index=t)
        round_evals: Counter = Counter()
        to_tx: dict = {}
        to_rx_next: dict = {}
        broadcast_sens: dict = {}
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
            bundle.events.append(MessageEvent(
                round=t, node=f"rx{i}", kind="unicast", role="soft-cqi",
                nbytes=len(system.sets[i]) * SCALAR_BYTES, peer=f"tx{i}",
            ))
            weak_edges = [j for j in graph.rx_neighbors[i]
                          if j != i and not classification.is_strong(i, j)]
            for j in graph.rx_neighbors[i]:
                if j == i or not classification.is_strong(i, j):
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
                bundle.events.append(MessageEvent(
                    round=t, node=f"rx{i}", kind="unicast", role="loglik-cross",
                    nbytes=len(system.sets[j]) * SCALAR_BYTES, peer=f"tx{j}",
                ))
            if weak_edges:
                counter: list = []
                sens = sensitivities(
                    system.utilities[i], system.sets[i].candidates, serving[i],
                    agg, u, quad_order=config.quad_order,
                    dim_cap=config.quad_dim_cap, mc_samples=config.mc_samples,
                    mc_seed=config.mc_seed, eval_counter=counter,
                )
                round_evals[i] += sum(counter)
                broadcast_sens[i] = sens
                bundle.rx_sensitivities[i] = sens.grad.copy()
                bundle.events.append(MessageEvent(
                    round=t, node=f"rx{i}", kind="broadcast", role="soft-cts",
                    nbytes=sens_payload * SCALAR_BYTES,
                ))
                for j in weak_edges:
                    a = system.mixing_matrix(i, j)
                    stored_coeff[(i, j)] = first_order_message(
                        a, sens, moments.link_mean[j]
                    )
        for j in range(system.n):
            neighbors = graph.tx_neighbors[j]
            incoming = {}
            for ell in neighbors:
                if (ell, j) in to_tx:
                    incoming[ell] = to_tx[(ell, j)]
                else:
                    # Weak edge: reconstruct the linearized message from the
                    # broadcast sensitivity and the locally known channel.
                    sens = broadcast_sens[ell]
                    a = system.mixing_matrix(ell, j)
                    if config.broadcast_hessian:
                        coeff = first_order_message(a, sens, moments.link_mean[j])
                    else:
                        coeff = a.T @ sens.grad
                    incoming[ell] = linear_message_table(
                        system.sets[j].candidates, coeff
                    )
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
            bundle.events.append(MessageEvent(
                round=t, node=f"tx{j}", kind="unicast", role="loglik-serving",
                nbytes=len(system.sets[j]) * SCALAR_BYTES, peer=f"rx{j}",
            ))
            for i in neighbors:
                if i == j or classification.is_strong(i, j):
                    moments.mean[(i, j)], moments.cov[(i, j)] = edge_moms[i]
                    if i != j:
                        bundle.events.append(MessageEvent(
                            round=t, node=f"tx{j}", kind="unicast", role="moments",
                            nbytes=moment_payload[j] * SCALAR_BYTES, peer=f"rx{i}",
                        ))
            moments.link_mean[j], moments.link_cov[j] = link_moms
            bundle.tx_means[j] = link_moms[0].copy()
            bundle.tx_covs[j] = link_moms[1].copy()
            bundle.events.append(MessageEvent(
                round=t, node=f"tx{j}", kind="broadcast", role="soft-rts",
                nbytes=moment_payload[j] * SCALAR_BYTES,
            ))
            for i in neighbors:
                if i != j and not classification.is_strong(i, j):
                    moments.mean[(i, j)] = recover_edge_mean(
                        moments.link_mean[j], moments.link_cov[j],
                        stored_coeff[(i, j)],
                    )
                    moments.cov[(i, j)] = moments.link_cov[j].copy()
        to_rx_prev = to_rx_next
        rx_evals[t] = dict(round_evals)
        bundles.append(bundle)

    decision = tuple(int(np.argmax(totals[j])) for j in range(system.n))
    profile = SchedulingProfile(decision)
    return FirstOrderResult(
        profile=profile,
        objective=total_utility(system, profile),
        rounds=config.rounds,
        final_loglik=dict(totals),
        classification=classification,
        bundles=bundles,
        stats={
            "rx_ops_by_round": rx_evals,
            "diagnostics": dict(diagnostics),
            "effective_sharpness": u,
            "strong_edges": len(classification.strong),
        },
    )
