"""Rate models and utility evaluators.

Covers the three interference parameterizations (flat fading, subbands,
lifted beamforming), the static utility family (sum-rate, proportional
fair, beta-fair, weighted rate), and the dynamic scheduling state with
exponentially averaged rates and marginal-utility weights.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

LN2 = float(np.log(2.0))

# Floor applied to rates inside logs and marginal weights; keeps the
# proportional-fair weight finite while still prioritizing starved links.
RATE_FLOOR_BPS = 1e-3

UTILITY_KINDS = ("sum-rate", "proportional-fair", "beta-fair", "weighted-rate")


@dataclass(frozen=True)
class RateModel:
    """Shannon-rate map from (transmit candidate, interference) to bits/s.

    Two layouts share one type:

    * per-dimension (``lifted=False``): each interference dimension is a
      subband; ``gains[k]`` is the direct power gain on subband k and the
      signal power there is ``gains[k] * x[k]``.  Flat fading is the
      one-subband special case.
    * lifted (``lifted=True``): scalar interference; ``gains`` is the
      real-stacked serving-channel row so the signal power is
      ``gains @ x`` (used for beamforming candidates).

    Negative interference components (possible from lifted numerics) are
    clamped to zero before the SINR is formed.
    """

    gains: np.ndarray
    noise_w: float  # noise power per interference dimension, watts
    bandwidth_hz: float  # bandwidth per dimension
    lifted: bool = False
    cap_bps_hz: float | None = None

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        if self.noise_w <= 0:
            raise ConfigurationError("noise power must be positive")
        if not self.lifted and np.any(g < 0):
            raise ConfigurationError("per-subband gains must be nonnegative")
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)

    @property
    def n_z(self) -> int:
        return 1 if self.lifted else self.gains.shape[0]

    def _signal(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.lifted:
            return np.maximum(float(self.gains @ x), 0.0)
        return self.gains * x

    def rate(self, x: np.ndarray, z: np.ndarray) -> float:
        return float(self.rate_batch(x, np.asarray(z, dtype=float)))

    def rate_batch(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Rate for one candidate against a (..., n_z) batch of interference."""
        z = np.maximum(np.asarray(z, dtype=float), 0.0)
        sig = self._signal(x)
        if self.lifted:
            z = z[..., 0]
        se = np.log2(1.0 + sig / (z + self.noise_w))
        if self.cap_bps_hz is not None:
            se = np.minimum(se, self.cap_bps_hz)
        if self.lifted:
            return self.bandwidth_hz * se
        return self.bandwidth_hz * se.sum(axis=-1)

    def rate_grad_z(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.rate_grad_z_batch(x, np.asarray(z, dtype=float))

    def rate_grad_z_batch(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """d(rate)/dz per dimension; zero where z is clamped or the SE is capped."""
        z = np.asarray(z, dtype=float)
        live = z >= 0.0
        zc = np.maximum(z, 0.0)
        sig = self._signal(x)
        total = zc + self.noise_w + sig
        base = zc + self.noise_w
        grad = (self.bandwidth_hz / LN2) * (1.0 / total - 1.0 / base)
        if self.cap_bps_hz is not None:
            capped = np.log2(1.0 + sig / base) >= self.cap_bps_hz
            grad = np.where(capped, 0.0, grad)
        return np.where(live, grad, 0.0)

    def rate_hess_z(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.rate_hess_z_batch(x, np.asarray(z, dtype=float))

    def rate_hess_z_batch(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Diagonal Hessian of the rate in z, returned as (..., n_z, n_z)."""
        z = np.asarray(z, dtype=float)
        live = z >= 0.0
        zc = np.maximum(z, 0.0)
        sig = self._signal(x)
        total = zc + self.noise_w + sig
        base = zc + self.noise_w
        diag = (self.bandwidth_hz / LN2) * (1.0 / base**2 - 1.0 / total**2)
        if self.cap_bps_hz is not None:
            capped = np.log2(1.0 + sig / base) >= self.cap_bps_hz
            diag = np.where(capped, 0.0, diag)
        diag = np.where(live, diag, 0.0)
        out = np.zeros(diag.shape + (diag.shape[-1],))
        idx = np.arange(diag.shape[-1])
        out[..., idx, idx] = diag
        return out


@dataclass(frozen=True)
class UtilitySpec:
    """Utility of a rate: kind plus kind-specific parameters."""

    kind: str = "proportional-fair"
    beta: float = 1.0
    weights: np.ndarray | None = None  # per-link weights, weighted-rate only

    def __post_init__(self):
        if self.kind not in UTILITY_KINDS:
            raise ConfigurationError(f"unknown utility kind {self.kind!r}")
        if self.kind == "beta-fair" and self.beta <= 0:
            raise ConfigurationError("beta-fair requires beta > 0")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ConfigurationError("weights must be finite and nonnegative")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)


def static_utility(spec: UtilitySpec, rate, link: int = 0):
    """Utility value at a given rate (vectorized over rate)."""
    r = np.asarray(rate, dtype=float)
    floored = np.maximum(r, RATE_FLOOR_BPS)
    if spec.kind == "sum-rate":
        out = r
    elif spec.kind == "proportional-fair":
        out = np.log(floored)
    elif spec.kind == "beta-fair":
        out = -spec.beta * floored ** (-spec.beta)
    else:  # weighted-rate
        w = 1.0 if spec.weights is None else spec.weights[link]
        out = w * r
    return out if out.ndim else float(out)


def utility_marginal(spec: UtilitySpec, rate, link: int = 0):
    """dU/dR at a given rate (vectorized), floored for finiteness."""
    r = np.maximum(np.asarray(rate, dtype=float), RATE_FLOOR_BPS)
    if spec.kind == "sum-rate":
        out = np.ones_like(r)
    elif spec.kind == "proportional-fair":
        out = 1.0 / r
    elif spec.kind == "beta-fair":
        out = spec.beta**2 * r ** (-spec.beta - 1.0)
    else:
        w = 1.0 if spec.weights is None else spec.weights[link]
        out = np.full_like(r, w)
    return out if out.ndim else float(out)


def _utility_curvature(spec: UtilitySpec, rate, link: int = 0):
    """d2U/dR2 at a given rate, floored like the marginal."""
    r = np.maximum(np.asarray(rate, dtype=float), RATE_FLOOR_BPS)
    if spec.kind == "proportional-fair":
        out = -1.0 / r**2
    elif spec.kind == "beta-fair":
        out = -spec.beta**2 * (spec.beta + 1.0) * r ** (-spec.beta - 2.0)
    else:
        out = np.zeros_like(r)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DynamicState:
    """Per-link exponentially averaged rates for the dynamic scheduler.

    The filter state itself is exact; the rate floor is applied where the
    averages feed logs and marginal weights, so starved links keep finite
    but large priorities.
    """

    avg_rates: np.ndarray  # bits/s
    alpha: float
    slot: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError("filter constant must lie in (0, 1]")
        r = np.asarray(self.avg_rates, dtype=float)
        if np.any(r < 0):
            raise ConfigurationError("average rates must be nonnegative")
        r.setflags(write=False)
        object.__setattr__(self, "avg_rates", r)


def marginal_weight(spec: UtilitySpec, state: DynamicState, i: int) -> float:
    """Time-varying weight: the marginal utility at the link's average rate."""
    return float(utility_marginal(spec, state.avg_rates[i], link=i))


def update_average_rate(state: DynamicState, i: int, realized_rate: float) -> DynamicState:
    """One exponential filter step for link i; other links untouched."""
    if realized_rate < 0:
        raise ConfigurationError("realized rate must be nonnegative")
    rates = state.avg_rates.copy()
    rates[i] = (1.0 - state.alpha) * rates[i] + state.alpha * realized_rate
    return dataclasses.replace(state, avg_rates=rates)


def advance_slot(state: DynamicState, realized_rates: np.ndarray) -> DynamicState:
    """Filter every link with its realized rate and advance the slot index."""
    realized = np.asarray(realized_rates, dtype=float)
    rates = (1.0 - state.alpha) * state.avg_rates + state.alpha * realized
    return dataclasses.replace(state, avg_rates=rates, slot=state.slot + 1)


class LinkUtility:
    """Per-link utility evaluator protocol.

    Subclasses provide ``value``; batch and derivative methods default to
    loops and central finite differences (relative step 1e-5) so arbitrary
    evaluators can still drive the Gaussian and first-order engines.
    ``z_floor`` declares a lower bound on the physical interference support
    (None means unbounded); solvers use it to keep Gaussian surrogates
    from wandering below the support.
    """

    fd_step = 1e-5
    z_floor: float | None = None

    def value(self, x: np.ndarray, z: np.ndarray) -> float:
        raise NotImplementedError

    def value_batch(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        flat = z.reshape(-1, z.shape[-1])
        out = np.array([self.value(x, row) for row in flat])
        return out.reshape(z.shape[:-1])

    def grad_z(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        grad = np.zeros_like(z)
        for k in range(z.shape[0]):
            h = self.fd_step * max(1.0, abs(z[k]))
            zp, zm = z.copy(), z.copy()
            zp[k] += h
            zm[k] -= h
            grad[k] = (self.value(x, zp) - self.value(x, zm)) / (2 * h)
        return grad

    def hess_z(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        n = z.shape[0]
        hess = np.zeros((n, n))
        for k in range(n):
            h = self.fd_step * max(1.0, abs(z[k]))
            zp, zm = z.copy(), z.copy()
            zp[k] += h
            zm[k] -= h
            hess[k] = (self.grad_z(x, zp) - self.grad_z(x, zm)) / (2 * h)
        return (hess + hess.T) / 2

    def grad_z_batch(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        flat = z.reshape(-1, z.shape[-1])
        out = np.stack([self.grad_z(x, row) for row in flat])
        return out.reshape(z.shape)

    def hess_z_batch(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        flat = z.reshape(-1, z.shape[-1])
        out = np.stack([self.hess_z(x, row) for row in flat])
        return out.reshape(z.shape + (z.shape[-1],))


class RateUtility(LinkUtility):
    """Utility of the Shannon rate: U(R(x, z)) with analytic z-derivatives.

    ``weight`` scales the whole utility and is how the dynamic scheduler
    injects its per-slot marginal-utility weight ("weighted-rate" with
    weight w is w * R).
    """

    z_floor = 0.0  # interference powers are nonnegative

    def __init__(self, rate_model: RateModel, spec: UtilitySpec, link: int = 0,
                 weight: float = 1.0):
        self.rate_model = rate_model
        self.spec = spec
        self.link = link
        self.weight = float(weight)

    def value(self, x, z):
        return float(self.value_batch(x, np.asarray(z, dtype=float)))

    def value_batch(self, x, z):
        r = self.rate_model.rate_batch(x, z)
        return self.weight * static_utility(self.spec, r, link=self.link)

    def grad_z(self, x, z):
        return self.grad_z_batch(x, np.asarray(z, dtype=float))

    def grad_z_batch(self, x, z):
        r = self.rate_model.rate_batch(x, z)
        du = utility_marginal(self.spec, r, link=self.link)
        if self.spec.kind == "proportional-fair":
            du = np.where(r > RATE_FLOOR_BPS, du, 0.0)
        dr = self.rate_model.rate_grad_z_batch(x, z)
        return self.weight * np.asarray(du)[..., None] * dr

    def hess_z(self, x, z):
        return self.hess_z_batch(x, np.asarray(z, dtype=float))

    def hess_z_batch(self, x, z):
        r = self.rate_model.rate_batch(x, z)
        du = np.asarray(utility_marginal(self.spec, r, link=self.link))
        d2u = np.asarray(_utility_curvature(self.spec, r, link=self.link))
        if self.spec.kind == "proportional-fair":
            mask = r > RATE_FLOOR_BPS
            du = np.where(mask, du, 0.0)
            d2u = np.where(mask, d2u, 0.0)
        dr = self.rate_model.rate_grad_z_batch(x, z)
        d2r = self.rate_model.rate_hess_z_batch(x, z)
        outer = dr[..., :, None] * dr[..., None, :]
        return self.weight * (d2u[..., None, None] * outer + du[..., None, None] * d2r)


class CallableUtility(LinkUtility):
    """Adapter for a plain f(x, z) callable; derivatives by finite differences."""

    def __init__(self, fn, serving_norm: float = 1.0):
        self.fn = fn
        self.serving_norm = serving_norm

    def value(self, x, z):
        return float(self.fn(np.asarray(x, dtype=float), np.asarray(z, dtype=float)))


def beamforming_lift(b: np.ndarray) -> np.ndarray:
    """Real-stacked vectorization of the beam outer product b b^H.

    Pairs with :func:`lifted_channel_row` so that the inner product of the
    two real vectors equals |g^H b|^2 exactly.
    """
    b = np.asarray(b, dtype=complex)
    outer = np.outer(b, np.conj(b))
    return np.concatenate([outer.real.ravel(), outer.imag.ravel()])


def lifted_channel_row(g: np.ndarray) -> np.ndarray:
    """Mixing row for a complex channel g against lifted beam candidates."""
    g = np.asarray(g, dtype=complex)
    pair = np.outer(np.conj(g), g)
    return np.concatenate([pair.real.ravel(), -pair.imag.ravel()])
