"""Reference policies: reuse-1, exhaustive search, serving-link-only beams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InterferenceSystem, SchedulingProfile
from .errors import ConfigurationError, OracleInfeasibleError
from .femto import FemtoInstance


@dataclass(frozen=True)
class OracleBudget:
    """Limits for the exhaustive enumerator."""

    max_profiles: int = 1_000_000

    def __post_init__(self):
        if self.max_profiles < 1:
            raise ConfigurationError("budget must be positive")


def reuse_one(instance: FemtoInstance) -> SchedulingProfile:
    """Every link picks its designated max-power candidate."""
    return SchedulingProfile(instance.reuse_indices)


def serving_link_only_bf(instance: FemtoInstance) -> SchedulingProfile:
    """Each link beams for its own channel, ignoring interference."""
    if instance.mode != "beamforming":
        raise ConfigurationError("serving-link-only policy applies to beamforming mode")
    return SchedulingProfile(instance.serving_only_indices)


def exhaustive_optimum(
    system: InterferenceSystem, budget: OracleBudget = OracleBudget()
) -> SchedulingProfile:
    """Exact maximizer of the total utility over all candidate profiles.

    Vectorized over the full index grid; ties resolve to the
    lexicographically smallest profile (row-major enumeration order).
    """
    sizes = [len(s) for s in system.sets]
    count = int(np.prod(sizes))
    if count > budget.max_profiles:
        raise OracleInfeasibleError(
            f"{count} profiles exceed oracle budget {budget.max_profiles}"
        )
    n = system.n
    total = np.zeros(sizes)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        reduced_shape = [sizes[j] for j in others]
        z = np.zeros(reduced_shape + [system.n_z])
        for pos, j in enumerate(others):
            tab = system.contribution_table(i, j)  # (m_j, n_z)
            shape = [1] * len(others) + [system.n_z]
            shape[pos] = sizes[j]
            z = z + tab.reshape(shape)
        util = np.stack(
            [system.utilities[i].value_batch(x, z) for x in system.sets[i].candidates]
        )  # (m_i, *reduced_shape)
        # Put the candidate axis of link i back into grid position i.
        util = np.moveaxis(util, 0, i)
        total = total + util
    flat = int(np.argmax(total.ravel(order="C")))
    return SchedulingProfile(
        tuple(int(c) for c in np.unravel_index(flat, tuple(sizes)))
    )
