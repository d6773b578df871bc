"""Price-process SDEs, Euler-Maruyama path simulation and discounting.

Drift and diffusion callbacks are vectorised over a batch of paths:
``drift(t, X) -> (paths, n)`` and ``diffusion(t, X) -> (paths, n, m)`` for
``X`` of shape ``(paths, n)``.

Random numbers come from counter-based Philox substreams, one per block of
``PATH_BLOCK`` paths, so path ``i`` is the same no matter how many paths are
requested or how the path range is partitioned across workers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Literal

import numpy as np

from .exceptions import DimensionError, GridError, NumericalBlowupError, OrderingError

Measure = Literal["physical", "risk-neutral"]
RateLike = Callable[[float], float] | float

PATH_BLOCK = 512
SIMPSON_PANELS = 128


class ClampWarning(RuntimeWarning):
    """Multiplicative state crossed below the floor and was clamped."""


# ---------------------------------------------------------------------------
# rates


@dataclass(frozen=True)
class ConstantRate:
    value: float
    breakpoints: tuple[float, ...] = ()

    def __call__(self, t):
        return np.full(np.shape(t), float(self.value)) if np.ndim(t) else float(self.value)


@dataclass(frozen=True)
class PiecewiseConstantRate:
    """``values[i]`` on ``[breakpoints[i-1], breakpoints[i])``; ``len(values) == len(breakpoints) + 1``."""

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more value than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    def __call__(self, t):
        idx = np.searchsorted(np.asarray(self.breakpoints), t, side="right")
        out = np.asarray(self.values, dtype=float)[idx]
        return out if np.ndim(t) else float(out)


def as_rate(rate: RateLike) -> Callable:
    if callable(rate):
        return rate
    return ConstantRate(float(rate))


def rate_values(rate: RateLike, ts: np.ndarray) -> np.ndarray:
    """Evaluate a rate function on an array, falling back to a scalar loop."""
    rate = as_rate(rate)
    ts = np.asarray(ts, dtype=float)
    try:
        out = np.asarray(rate(ts), dtype=float)
        if out.shape == ():
            out = np.full(ts.shape, float(out))
        if out.shape == ts.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(rate(float(t))) for t in ts.ravel()]).reshape(ts.shape)


def _simpson(rate, a: float, b: float, panels: int, one_sided: bool) -> float:
    if b == a:
        return 0.0
    n = 2 * max(1, panels)
    x = np.linspace(a, b, n + 1)
    if one_sided:
        # limits from inside the segment, so a jump at an edge is never sampled
        x[0] = np.nextafter(a, b)
        x[-1] = np.nextafter(b, a)
    y = rate_values(rate, x)
    h = (b - a) / n
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def integrated_rate(rate: RateLike, t: float, s: float, panels: int = SIMPSON_PANELS) -> float:
    """``int_t^s r(u) du`` by composite Simpson, with panel edges on the rate's breakpoints."""
    if s < t:
        raise OrderingError(f"upper bound {s} precedes lower bound {t}")
    if s == t:
        return 0.0
    rate = as_rate(rate)
    brk = tuple(getattr(rate, "breakpoints", ()))
    cuts = [b for b in brk if t < b < s]
    edges = [t, *cuts, s]
    total = s - t
    acc = []
    for a, b in zip(edges, edges[1:]):
        k = max(1, int(round(panels * (b - a) / total)))
        acc.append(_simpson(rate, a, b, k, one_sided=bool(brk)))
    return math.fsum(acc)


def discount_factor(rate: RateLike, t: float, s: float, panels: int = SIMPSON_PANELS) -> float:
    """``exp(-int_t^s r(u) du)``."""
    return math.exp(-integrated_rate(rate, t, s, panels))


def discount_curve(rate: RateLike, times: np.ndarray, panels_per_step: int = 4) -> np.ndarray:
    """Discount factors from ``times[0]`` to every grid time."""
    times = np.asarray(times, dtype=float)
    rate = as_rate(rate)
    if isinstance(rate, ConstantRate):
        return np.exp(-rate.value * (times - times[0]))
    steps = [integrated_rate(rate, a, b, panels_per_step) for a, b in zip(times[:-1], times[1:])]
    return np.exp(-np.concatenate([[0.0], np.cumsum(steps)]))


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class ModelSpec:
    n: int
    m: int
    drift: Callable[[float, np.ndarray], np.ndarray]
    diffusion: Callable[[float, np.ndarray], np.ndarray]
    rate: RateLike = 0.0
    multiplicative: bool = False
    floor: float = 1e-12
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise DimensionError("model dimensions must be positive")

    @property
    def rate_fn(self) -> Callable:
        return as_rate(self.rate)

    def check_shapes(self, t: float, x: np.ndarray) -> None:
        x = np.atleast_2d(x)
        mu = np.asarray(self.drift(t, x))
        sig = np.asarray(self.diffusion(t, x))
        if mu.shape != (x.shape[0], self.n):
            raise DimensionError(f"drift returned {mu.shape}, expected {(x.shape[0], self.n)}")
        if sig.shape != (x.shape[0], self.n, self.m):
            raise DimensionError(f"diffusion returned {sig.shape}, expected {(x.shape[0], self.n, self.m)}")


def geometric(mu, sigma, rate: RateLike = 0.0, corr=None) -> ModelSpec:
    """Correlated geometric Brownian motion; ``mu`` and ``sigma`` broadcast to ``n``."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    n = max(mu.size, sigma.size)
    mu = np.broadcast_to(mu, (n,)).copy()
    sigma = np.broadcast_to(sigma, (n,)).copy()
    chol = np.eye(n) if corr is None else np.linalg.cholesky(np.asarray(corr, dtype=float))

    def drift(t, x):
        return mu * x

    def diffusion(t, x):
        return (sigma * x)[:, :, None] * chol[None, :, :]

    return ModelSpec(n, n, drift, diffusion, rate, multiplicative=True, name="geometric",
                     params={"mu": mu.tolist(), "sigma": sigma.tolist()})


def arithmetic(mu, sigma, rate: RateLike = 0.0) -> ModelSpec:
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    n = max(mu.size, sigma.size)
    mu = np.broadcast_to(mu, (n,)).copy()
    sig = np.diag(np.broadcast_to(sigma, (n,)))

    def drift(t, x):
        return np.broadcast_to(mu, x.shape).copy()

    def diffusion(t, x):
        return np.broadcast_to(sig, (x.shape[0], n, n)).copy()

    return ModelSpec(n, n, drift, diffusion, rate, name="arithmetic",
                     params={"mu": mu.tolist(), "sigma": np.diag(sig).tolist()})


def mean_reverting(kappa, theta, sigma, rate: RateLike = 0.0, multiplicative: bool = False) -> ModelSpec:
    """Ornstein-Uhlenbeck; with ``multiplicative`` the noise scales with ``sqrt(x)`` (CIR-like)."""
    kappa, theta, sigma = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (kappa, theta, sigma))
    n = max(kappa.size, theta.size, sigma.size)
    kappa, theta, sigma = (np.broadcast_to(v, (n,)).copy() for v in (kappa, theta, sigma))

    def drift(t, x):
        return kappa * (theta - x)

    def diffusion(t, x):
        scale = np.sqrt(np.maximum(x, 0.0)) if multiplicative else np.ones_like(x)
        return (sigma * scale)[:, :, None] * np.eye(n)[None, :, :]

    return ModelSpec(n, n, drift, diffusion, rate, multiplicative=multiplicative, name="mean_reverting",
                     params={"kappa": kappa.tolist(), "theta": theta.tolist(), "sigma": sigma.tolist()})


def deterministic(mu=0.0, rate: RateLike = 0.0, n: int = 1) -> ModelSpec:
    """Zero-diffusion model with linear drift ``mu * x``."""
    mu = np.broadcast_to(np.atleast_1d(np.asarray(mu, dtype=float)), (n,)).copy()

    def drift(t, x):
        return mu * x

    def diffusion(t, x):
        return np.zeros((x.shape[0], n, 1))

    return ModelSpec(n, 1, drift, diffusion, rate, name="deterministic", params={"mu": mu.tolist()})


PRESETS = {
    "geometric": geometric,
    "arithmetic": arithmetic,
    "mean_reverting": mean_reverting,
    "deterministic": deterministic,
}


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class PathGrid:
    times: np.ndarray
    states: np.ndarray
    seed: int
    measure: str
    n_clamped: int = 0

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]


def _check_grid(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise GridError("time grid needs at least two points")
    if not np.all(np.diff(times) > 0):
        raise GridError("time grid must be strictly increasing")
    return times


class _BlockNormals:
    """Per-block Philox streams; draws ``(paths, m)`` normals per step."""

    def __init__(self, seed: int, start: int, count: int, m: int):
        self.first_block = start // PATH_BLOCK
        last_block = (start + count - 1) // PATH_BLOCK
        self.offset = start - self.first_block * PATH_BLOCK
        self.count = count
        self.m = m
        self.gens = [
            np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(b,))))
            for b in range(self.first_block, last_block + 1)
        ]

    def draw(self) -> np.ndarray:
        z = np.concatenate([g.standard_normal((PATH_BLOCK, self.m)) for g in self.gens])
        return z[self.offset:self.offset + self.count]


def iter_states(
    model: ModelSpec,
    measure: Measure,
    x0,
    times,
    n_paths: int,
    seed: int,
    path_start: int = 0,
) -> Iterator[tuple[int, np.ndarray, int]]:
    """Yield ``(step, states, clamped_so_far)`` along the grid without storing the tensor."""
    if measure not in ("physical", "risk-neutral"):
        raise ValueError(f"unknown measure {measure!r}")
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    times = _check_grid(times)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (model.n,):
        raise DimensionError(f"x0 has shape {x0.shape}, model dimension is {model.n}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    if model.multiplicative and np.any(x0 <= 0):
        raise ValueError("multiplicative models need a componentwise positive x0")
    model.check_shapes(float(times[0]), x0[None, :])

    rate = model.rate_fn
    r_grid = rate_values(rate, times)
    normals = _BlockNormals(seed, path_start, n_paths, model.m)
    x = np.broadcast_to(x0, (n_paths, model.n)).copy()
    clamped = 0
    yield 0, x, clamped
    for k in range(times.size - 1):
        t = float(times[k])
        dt = float(times[k + 1] - times[k])
        z = normals.draw()
        if measure == "risk-neutral":
            mu = r_grid[k] * x
        else:
            mu = np.asarray(model.drift(t, x))
        sig = np.asarray(model.diffusion(t, x))
        x = x + mu * dt + np.einsum("pnm,pm->pn", sig, z) * math.sqrt(dt)
        if model.multiplicative:
            low = x < model.floor
            if low.any():
                clamped += int(low.sum())
                x = np.where(low, model.floor, x)
        if not np.all(np.isfinite(x)):
            bad = int(np.argwhere(~np.isfinite(x))[0, 0])
            raise NumericalBlowupError(path_start + bad, k + 1)
        yield k + 1, x, clamped


def simulate_paths(
    model: ModelSpec,
    measure: Measure,
    x0,
    times,
    n_paths: int,
    seed: int,
    path_start: int = 0,
) -> PathGrid:
    times = _check_grid(times)
    states = np.empty((n_paths, times.size, model.n))
    clamped = 0
    for k, x, clamped in iter_states(model, measure, x0, times, n_paths, seed, path_start):
        states[:, k, :] = x
    if clamped:
        warnings.warn(f"{clamped} state components clamped at floor {model.floor}", ClampWarning, stacklevel=2)
    return PathGrid(times, states, int(seed), measure, clamped)


def model_from_config(spec: dict) -> ModelSpec:
    from .exceptions import PresetReferenceError

    preset = spec.get("preset", "geometric")
    if preset not in PRESETS:
        raise PresetReferenceError(f"unknown model preset {preset!r}", "model.preset")
    kwargs = {k: v for k, v in spec.items() if k != "preset"}
    if "rate" in kwargs and isinstance(kwargs["rate"], dict):
        r = kwargs["rate"]
        kwargs["rate"] = PiecewiseConstantRate(tuple(r["breakpoints"]), tuple(r["values"]))
    return PRESETS[preset](**kwargs)
