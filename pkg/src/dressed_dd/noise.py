"""Stochastic qubit-frequency fluctuations.

Every trajectory draws from its own generator seeded by
``(seed, trajectory_index)``, so a trajectory's noise never depends on how
many other trajectories were drawn, in what order, or on which worker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

__all__ = [
    "NoiseModel",
    "NoiseTrace",
    "sigma_from_t2star",
    "t2star_from_sigma",
    "amplitude_from_t2star",
    "trajectory_rng",
    "sample_quasistatic",
    "sample_one_over_f",
    "sample_trajectories",
]

NoiseKind = Literal["quasistatic_gaussian", "one_over_f", "none"]


@dataclass(frozen=True)
class NoiseModel:
    """Detuning noise ``K_j(t)`` applied independently to each site.

    ``sigma`` (rad/s) is the quasi-static standard deviation. For 1/f noise
    the one-sided PSD is ``amplitude**2 / f`` on ``[f_min, f_max]`` (Hz).
    """

    kind: NoiseKind = "none"
    sigma: float = 0.0
    amplitude: float = 0.0
    f_min: float = 1e2
    f_max: float = 1e6
    seed: int = 0
    tones_per_decade: int = 40

    def __post_init__(self):
        if self.kind not in ("quasistatic_gaussian", "one_over_f", "none"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0 or self.amplitude < 0:
            raise ValueError("noise strengths must be non-negative")
        if self.kind == "one_over_f" and not 0 < self.f_min < self.f_max:
            raise ValueError("need 0 < f_min < f_max for 1/f noise")


@dataclass(frozen=True)
class NoiseTrace:
    """Piecewise-constant detuning samples, ``values[b, site, step]`` held for ``dt``."""

    dt: float
    values: np.ndarray

    def at(self, t: float) -> np.ndarray:
        idx = min(max(int(t / self.dt), 0), self.values.shape[-1] - 1)
        return self.values[..., idx]


def sigma_from_t2star(t2star: float) -> float:
    """Quasi-static detuning spread giving a Ramsey envelope ``exp(-(t/T2*)^2)``."""
    if not t2star > 0:
        raise ValueError("t2star must be positive")
    return math.sqrt(2) / t2star


def t2star_from_sigma(sigma: float) -> float:
    return math.inf if sigma == 0 else math.sqrt(2) / sigma


def amplitude_from_t2star(t2star: float, f_min: float, f_max: float) -> float:
    """1/f amplitude whose band-integrated variance matches ``sigma_from_t2star``.

    Accurate when the evolution time is short compared to ``1/f_max``'s
    inverse band, i.e. when most of the noise power acts quasi-statically.
    """
    return sigma_from_t2star(t2star) / math.sqrt(math.log(f_max / f_min))


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def sample_quasistatic(model: NoiseModel, n: int, n_sites: int = 1, start: int = 0) -> np.ndarray:
    """Constant detunings for trajectories ``start .. start+n-1``.

    Returns shape ``(n,)`` for a single site, ``(n, n_sites)`` otherwise.
    """
    if model.kind != "quasistatic_gaussian":
        raise ValueError(f"sample_quasistatic needs a quasistatic_gaussian model, got {model.kind!r}")
    out = np.empty((n, n_sites))
    for i in range(n):
        out[i] = model.sigma * trajectory_rng(model.seed, start + i).standard_normal(n_sites)
    return out[:, 0] if n_sites == 1 else out


def _tones(model: NoiseModel, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    decades = math.log10(model.f_max / model.f_min)
    n = max(1, int(math.ceil(model.tones_per_decade * decades)))
    edges = np.logspace(math.log10(model.f_min), math.log10(model.f_max), n + 1)
    # one tone per log bin, log-uniform inside the bin
    u = rng.random(n)
    freqs = edges[:-1] * (edges[1:] / edges[:-1]) ** u
    amps = model.amplitude * np.sqrt(2 * np.log(edges[1:] / edges[:-1]))
    phases = rng.uniform(0, 2 * np.pi, n)
    return freqs, amps, phases


def sample_one_over_f(model: NoiseModel, dt: float, steps: int, index: int = 0, n_sites: int = 1) -> np.ndarray:
    """1/f detuning time series sampled at ``t = k dt``.

    Synthesized as a sum of random-phase sinusoids, one per log-spaced
    frequency bin. Returns ``(steps,)`` for one site, ``(n_sites, steps)``
    otherwise.
    """
    if model.kind != "one_over_f":
        raise ValueError(f"sample_one_over_f needs a one_over_f model, got {model.kind!r}")
    rng = trajectory_rng(model.seed, index)
    t = np.arange(steps) * dt
    out = np.zeros((n_sites, steps))
    if model.amplitude == 0:
        return out[0] if n_sites == 1 else out
    for s in range(n_sites):
        freqs, amps, phases = _tones(model, rng)
        out[s] = np.cos(2 * np.pi * np.outer(t, freqs) + phases) @ amps
    return out[0] if n_sites == 1 else out


def sample_trajectories(
    model: Optional[NoiseModel],
    n: int,
    n_sites: int,
    duration: float = 0.0,
    dt: float = 1e-9,
    start: int = 0,
):
    """Noise input for ``n`` trajectories in the form the evolution engine takes.

    ``None`` for no noise, an ``(n, n_sites)`` array for quasi-static noise,
    or a :class:`NoiseTrace` for 1/f noise.
    """
    if model is None or model.kind == "none":
        return None
    if model.kind == "quasistatic_gaussian":
        return sample_quasistatic(model, n, n_sites, start).reshape(n, n_sites)
    steps = max(1, int(math.ceil(duration / dt)) + 1)
    vals = np.stack(
        [sample_one_over_f(model, dt, steps, start + i, n_sites).reshape(n_sites, steps) for i in range(n)]
    )
    return NoiseTrace(dt, vals)
