"""Seeded femtocell deployment generator.

A 3x3 grid of apartments with active links in 5 of the 9, restricted
association (each mobile connects to the base station in its own
apartment), distance path loss, per-wall penetration loss, lognormal
shadowing, and mode-specific small-scale structure: flat on-off power
control, independently faded subbands, or two-antenna linear-phase
beamforming.  Generation is a pure function of (seed, drop index,
parameters), with independent named substreams so fading draws never
perturb the geometry.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import InterferenceSystem, SchedulingSet
from .errors import ConfigurationError
from .utility import (
    RateModel,
    RateUtility,
    UtilitySpec,
    beamforming_lift,
    lifted_channel_row,
)

MODES = ("onoff", "subband", "beamforming")

# Substream tags; combined with (seed, drop_index) into SeedSequence entropy.
_STREAM_ACTIVE = 0
_STREAM_GEOMETRY = 1
_STREAM_SHADOWING = 2
_STREAM_FADING = 3


@dataclass(frozen=True)
class FemtoParams:
    """Deployment constants for the apartment-grid scenario."""

    grid_size: int = 3
    apartment_m: float = 10.0
    n_active: int = 5
    bandwidth_hz: float = 5e6
    tx_power_dbm: float = 0.0
    noise_figure_db: float = 4.0
    noise_density_dbm_hz: float = -174.0
    shadowing_std_db: float = 10.0
    wall_loss_db: float = 10.0
    subband_count: int = 4
    beam_angle_count: int = 10
    antenna_count: int = 2
    min_distance_m: float = 0.1
    subband_power: str = "per_band_cap"  # or "total_split", "full_per_band"

    @property
    def tx_power_w(self) -> float:
        return 10.0 ** ((self.tx_power_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class FemtoDrop:
    """One realized deployment: geometry, wall counts and shadowing."""

    seed: int
    drop_index: int
    active_cells: tuple[int, ...]
    bs_xy: np.ndarray  # (n, 2) base-station positions
    ue_xy: np.ndarray  # (n, 2) mobile positions
    distances: np.ndarray  # (n, n): UE i to BS j
    wall_counts: np.ndarray  # (n, n) integer wall crossings, UE i to BS j
    shadowing_db: np.ndarray  # (n, n)
    bearings: np.ndarray  # (n, n) angle of UE i as seen from BS j

    @property
    def n(self) -> int:
        return len(self.active_cells)


def _rng(seed: int, drop_index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, drop_index, stream)))


def path_loss_db(distance_m) -> np.ndarray:
    """Indoor femto path loss; distances are floored at 0.1 m."""
    r = np.maximum(np.asarray(distance_m, dtype=float), 0.1)
    out = 38.46 + 20.0 * np.log10(r) + 0.7 * r
    return out if out.ndim else float(out)


def wall_crossings(p: np.ndarray, q: np.ndarray, params: FemtoParams) -> int:
    """Interior apartment walls strictly crossed by the segment p-q."""
    count = 0
    for axis in range(2):
        for k in range(1, params.grid_size):
            line = k * params.apartment_m
            a = p[axis] - line
            b = q[axis] - line
            if a * b < 0:
                count += 1
    return count


def noise_power_w(bandwidth_hz: float, noise_figure_db: float = 4.0,
                  density_dbm_hz: float = -174.0) -> float:
    """Thermal noise power over a bandwidth, in watts."""
    dbm = density_dbm_hz + 10.0 * np.log10(bandwidth_hz) + noise_figure_db
    return 10.0 ** ((dbm - 30.0) / 10.0)


def generate_drop(seed: int, drop_index: int = 0,
                  params: FemtoParams = FemtoParams()) -> FemtoDrop:
    """Draw one deployment; identical arguments give identical drops."""
    cells = params.grid_size**2
    if params.n_active > cells:
        raise ConfigurationError("more active links than apartments")
    active = np.sort(_rng(seed, drop_index, _STREAM_ACTIVE).choice(
        cells, size=params.n_active, replace=False))
    geom = _rng(seed, drop_index, _STREAM_GEOMETRY)
    n = params.n_active
    bs = np.empty((n, 2))
    ue = np.empty((n, 2))
    for k, cell in enumerate(active):
        row, col = divmod(int(cell), params.grid_size)
        origin = np.array([col * params.apartment_m, row * params.apartment_m])
        bs[k] = origin + geom.uniform(0.0, params.apartment_m, size=2)
        ue[k] = origin + geom.uniform(0.0, params.apartment_m, size=2)
    shadowing = _rng(seed, drop_index, _STREAM_SHADOWING).normal(
        0.0, params.shadowing_std_db, size=(n, n))
    dist = np.empty((n, n))
    walls = np.empty((n, n), dtype=int)
    bearings = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            delta = ue[i] - bs[j]
            dist[i, j] = float(np.hypot(*delta))
            walls[i, j] = wall_crossings(ue[i], bs[j], params)
            bearings[i, j] = float(np.arctan2(delta[1], delta[0]))
    return FemtoDrop(
        seed=seed, drop_index=drop_index,
        active_cells=tuple(int(c) for c in active),
        bs_xy=bs, ue_xy=ue, distances=dist, wall_counts=walls,
        shadowing_db=shadowing, bearings=bearings,
    )


def link_gain_db(drop: FemtoDrop, i: int, j: int,
                 params: FemtoParams = FemtoParams()) -> float:
    """Large-scale power gain (dB) from BS j to UE i."""
    return float(
        -path_loss_db(max(drop.distances[i, j], params.min_distance_m))
        - drop.wall_counts[i, j] * params.wall_loss_db
        - drop.shadowing_db[i, j]
    )


def link_gain(drop: FemtoDrop, i: int, j: int,
              params: FemtoParams = FemtoParams()) -> float:
    """Large-scale power gain (linear) from BS j to UE i."""
    return 10.0 ** (link_gain_db(drop, i, j, params) / 10.0)


def large_scale_gains(drop: FemtoDrop, params: FemtoParams) -> np.ndarray:
    """(n, n) matrix of linear power gains, UE i row, BS j column."""
    n = drop.n
    return np.array([[link_gain(drop, i, j, params) for j in range(n)]
                     for i in range(n)])


def draw_flat_fading(seed: int, drop_index: int, slots: int, n: int) -> np.ndarray:
    """Unit-mean per-slot power fades, one per link per slot, (slots, n).

    Fades apply to the serving channels; cross-pair gains stay at their
    large-scale values, so a victim's interference floor is stable within
    a drop.
    """
    return _rng(seed, drop_index, _STREAM_FADING).standard_exponential(
        size=(slots, n))


def draw_subband_fading(seed: int, drop_index: int, n: int, bands: int) -> np.ndarray:
    """Unit-mean per-subband power fades for every ordered pair, (n, n, bands)."""
    return _rng(seed, drop_index, _STREAM_FADING).standard_exponential(
        size=(n, n, bands))


def subband_masks(bands: int) -> np.ndarray:
    """All nonzero on/off masks over the subbands, ordered by mask integer."""
    masks = []
    for value in range(1, 2**bands):
        masks.append([(value >> k) & 1 for k in range(bands)])
    return np.array(masks, dtype=float)


def steering_vector(theta: float, antennas: int = 2) -> np.ndarray:
    """Unit-power half-wavelength array steering vector.

    ``theta`` is measured from the array axis, so [0, pi] sweeps the full
    non-ambiguous steering range of a linear array.
    """
    phases = np.exp(1j * np.pi * np.arange(antennas) * np.cos(theta))
    return phases / np.sqrt(antennas)


def beam_angles(count: int) -> np.ndarray:
    return np.linspace(0.0, np.pi, count)


@dataclass(frozen=True)
class FemtoInstance:
    """A solver-ready system plus the scenario metadata baselines need."""

    system: InterferenceSystem
    mode: str
    reuse_indices: tuple[int, ...]
    serving_only_indices: tuple[int, ...]
    params: FemtoParams


def build_instance(
    drop: FemtoDrop,
    mode: str,
    params: FemtoParams = FemtoParams(),
    fading: np.ndarray | None = None,
    utility_spec: UtilitySpec = UtilitySpec(kind="proportional-fair"),
    weights: np.ndarray | None = None,
) -> FemtoInstance:
    """Assemble the interference system for one experiment mode.

    ``fading`` is a length-n vector of per-link power multipliers for
    on-off mode (serving channels only), a (n, n, bands) array for subband
    mode and unused for beamforming (the no-scattering channel is
    deterministic given the drop).  ``weights`` switches the utilities to
    weighted rates for the dynamic scheduler.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}")
    n = drop.n
    power = params.tx_power_w
    gains = large_scale_gains(drop, params)

    def make_utility(model, link):
        if weights is not None:
            return RateUtility(model, UtilitySpec(kind="weighted-rate"), link=link,
                               weight=float(weights[link]))
        return RateUtility(model, utility_spec, link=link)

    if mode == "onoff":
        if fading is not None:
            fades = np.asarray(fading, dtype=float)
            if fades.shape != (n,):
                raise ConfigurationError("on-off fading must be one value per link")
            gains = gains.copy()
            gains[np.arange(n), np.arange(n)] *= fades
        sets = [SchedulingSet(np.array([[0.0], [power]])) for _ in range(n)]
        mixing = {(i, j): np.array([[gains[i, j]]])
                  for i in range(n) for j in range(n) if i != j}
        utilities = [
            make_utility(RateModel(gains=np.array([gains[i, i]]),
                                   noise_w=noise_power_w(params.bandwidth_hz,
                                                         params.noise_figure_db,
                                                         params.noise_density_dbm_hz),
                                   bandwidth_hz=params.bandwidth_hz), i)
            for i in range(n)
        ]
        system = InterferenceSystem(sets, mixing, n_z=1, utilities=utilities)
        reuse = tuple([1] * n)
        return FemtoInstance(system, mode, reuse, reuse, params)

    if mode == "subband":
        bands = params.subband_count
        if fading is None:
            raise ConfigurationError("subband mode requires per-subband fading")
        per_band = gains[:, :, None] * np.asarray(fading, dtype=float)
        masks = subband_masks(bands)
        if params.subband_power == "per_band_cap":
            level = np.full(len(masks), power / bands)
        elif params.subband_power == "total_split":
            level = power / masks.sum(axis=1)
        elif params.subband_power == "full_per_band":
            level = np.full(len(masks), power)
        else:
            raise ConfigurationError(
                f"unknown subband power rule {params.subband_power!r}")
        candidates = masks * level[:, None]
        sets = [SchedulingSet(candidates) for _ in range(n)]
        mixing = {(i, j): np.diag(per_band[i, j])
                  for i in range(n) for j in range(n) if i != j}
        band_noise = noise_power_w(params.bandwidth_hz / bands,
                                   params.noise_figure_db,
                                   params.noise_density_dbm_hz)
        utilities = [
            make_utility(RateModel(gains=per_band[i, i],
                                   noise_w=band_noise,
                                   bandwidth_hz=params.bandwidth_hz / bands), i)
            for i in range(n)
        ]
        system = InterferenceSystem(sets, mixing, n_z=bands, utilities=utilities)
        reuse = tuple([len(masks) - 1] * n)  # the all-subbands mask
        return FemtoInstance(system, mode, reuse, reuse, params)

    # beamforming: lifted candidates, scalar interference power
    angles = beam_angles(params.beam_angle_count)
    lifted = np.stack([power * beamforming_lift(steering_vector(a, params.antenna_count))
                       for a in angles])
    sets = [SchedulingSet(lifted) for _ in range(n)]
    channels = {}
    for i in range(n):
        for j in range(n):
            amp = np.sqrt(gains[i, j])
            phase = np.exp(1j * np.pi * np.arange(params.antenna_count)
                           * np.cos(drop.bearings[i, j]))
            channels[(i, j)] = amp * phase
    mixing = {(i, j): lifted_channel_row(channels[(i, j)])[None, :]
              for i in range(n) for j in range(n) if i != j}
    utilities = [
        make_utility(RateModel(gains=lifted_channel_row(channels[(i, i)]),
                               noise_w=noise_power_w(params.bandwidth_hz,
                                                     params.noise_figure_db,
                                                     params.noise_density_dbm_hz),
                               bandwidth_hz=params.bandwidth_hz,
                               lifted=True), i)
        for i in range(n)
    ]
    system = InterferenceSystem(sets, mixing, n_z=1, utilities=utilities)
    serving_only = tuple(
        int(np.argmax(lifted @ lifted_channel_row(channels[(i, i)])))
        for i in range(n)
    )
    return FemtoInstance(system, "beamforming", serving_only, serving_only, params)


def drop_to_dict(drop: FemtoDrop) -> dict:
    """JSON-friendly dump of a drop for inspection and golden tests."""
    return {
        "seed": drop.seed,
        "drop_index": drop.drop_index,
        "active_cells": list(drop.active_cells),
        "bs_xy": drop.bs_xy.tolist(),
        "ue_xy": drop.ue_xy.tolist(),
        "distances": drop.distances.tolist(),
        "wall_counts": drop.wall_counts.tolist(),
        "shadowing_db": drop.shadowing_db.tolist(),
        "bearings": drop.bearings.tolist(),
    }


def params_for_mode(mode: str, wall_loss_db: float | None = None,
                    subband_count: int = 4,
                    subband_power: str = "per_band_cap") -> FemtoParams:
    """Mode defaults: 10 dB walls for on-off/subband, 0 dB for beamforming."""
    if wall_loss_db is None:
        wall_loss_db = 0.0 if mode == "beamforming" else 10.0
    return dataclasses.replace(FemtoParams(), wall_loss_db=wall_loss_db,
                               subband_count=subband_count,
                               subband_power=subband_power)
