"""Additive-noise Markov chains: AR and threshold AR models.

Simulation keeps the driving innovations next to the states since the
likelihood-ratio sums are written in terms of them.  The invariant density is
the fixed point of the transfer operator ``p -> int q(x - h(y)) p(y) dy``,
discretised with the trapezoid rule on a uniform grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .distributions import InnovationDensity, JumpLaw
from .errors import (
    ConvergenceError,
    InsufficientOccupancyError,
    InvalidParameterError,
    UnidentifiableModelError,
)

DRIFT_KINDS = ("zero", "linear", "clipped")


@dataclass(frozen=True)
class Drift:
    """Drift function ``h``.

    ``zero`` is ``h = 0``, ``linear`` is ``h(x) = rho x`` with ``|rho| < 1``
    and ``clipped`` is ``h(x) = clip(rho x, -clip, clip)``.
    """

    kind: str = "linear"
    rho: float = 0.0
    clip: float = 1.0

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise InvalidParameterError(f"unknown drift kind {self.kind!r}")
        if self.kind == "linear" and not abs(self.rho) < 1:
            raise InvalidParameterError("linear drift needs |rho| < 1")
        if self.kind == "clipped" and not self.clip > 0:
            raise InvalidParameterError("clipped drift needs clip > 0")

    @classmethod
    def zero(cls):
        return cls("zero", 0.0)

    @classmethod
    def linear(cls, rho):
        return cls("linear", float(rho))

    @classmethod
    def clipped(cls, rho, clip):
        return cls("clipped", float(rho), float(clip))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "linear":
            return self.rho * x
        return np.clip(self.rho * x, -self.clip, self.clip)

    def certificate(self) -> tuple[float, float]:
        """Constants ``(r, C)`` with ``|h(x)| <= r |x|`` whenever ``|x| >= C``."""
        if self.kind == "linear" and self.rho != 0.0:
            return abs(self.rho), 0.0
        if self.kind == "clipped":
            return 0.5, 2.0 * self.clip
        return 0.5, 0.0


@dataclass(frozen=True)
class ARModel:
    """``X_j = h(X_{j-1}) + eps_j`` together with the mark transform ``f``."""

    drift: Drift = field(default_factory=lambda: Drift.linear(0.5))
    innovation: InnovationDensity = field(default_factory=InnovationDensity)
    mark: JumpLaw | None = None

    def __post_init__(self):
        if self.mark is None:
            object.__setattr__(self, "mark", JumpLaw.constant(self.innovation, 1.0))

    def h(self, x):
        return self.drift(x)

    def certificate(self):
        return self.drift.certificate()


@dataclass(frozen=True)
class TARModel:
    """Two-regime threshold AR model on the parameter interval ``(lower, upper)``.

    The upper regime ``g_plus`` applies when the previous state is ``>= theta``.
    Construction rejects ``delta(theta) == 0`` unless ``check_identifiable`` is
    false, which is only useful for degenerate test cases.
    """

    g_plus: Drift
    g_minus: Drift
    theta: float
    lower: float
    upper: float
    innovation: InnovationDensity = field(default_factory=InnovationDensity)
    check_identifiable: bool = True

    def __post_init__(self):
        if not self.lower < self.theta < self.upper:
            raise InvalidParameterError(
                f"threshold {self.theta} outside the parameter interval ({self.lower}, {self.upper})"
            )
        if self.check_identifiable and float(self.delta(self.theta)) == 0.0:
            raise UnidentifiableModelError(
                f"regime jump delta(theta) vanishes at theta={self.theta}; threshold is unidentifiable"
            )

    def h(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.theta, self.g_plus(x), self.g_minus(x))

    def delta(self, x):
        return self.g_plus(x) - self.g_minus(x)

    def conditional_mean(self, x, theta):
        x = np.asarray(x, dtype=float)
        return np.where(x >= theta, self.g_plus(x), self.g_minus(x))

    def certificate(self):
        rp, cp = self.g_plus.certificate()
        rm, cm = self.g_minus.certificate()
        return max(rp, rm), max(cp, cm)

    def with_threshold(self, theta):
        return replace(self, theta=theta)


def default_burn_in(model) -> int:
    r, _ = model.certificate()
    return 10 * math.ceil(1.0 / (1.0 - r)) + 100


@dataclass
class ChainPath:
    """States ``X_0..X_n`` and the innovations ``eps_1..eps_n`` that drove them."""

    states: np.ndarray
    innovations: np.ndarray

    @property
    def n(self) -> int:
        return len(self.innovations)


def simulate_paths(model, n: int, rng, reps: int | None = None, burn_in: int | None = None, start: float = 0.0):
    """Simulate a batch of paths.

    Parameters
    ----------
    rng : Generator or sequence of Generator
        Either one generator for the whole batch (then ``reps`` is required) or
        one generator per replication.

    Returns
    -------
    states : ndarray, shape (reps, n + 1)
    innovations : ndarray, shape (reps, n)
    """
    if n < 1:
        raise InvalidParameterError("path length must be at least 1")
    burn = default_burn_in(model) if burn_in is None else int(burn_in)
    steps = burn + n
    q = model.innovation
    if isinstance(rng, np.random.Generator):
        if reps is None:
            raise InvalidParameterError("reps is required with a single generator")
        eps = q.sample(rng, (reps, steps))
    else:
        eps = np.stack([q.sample(g, steps) for g in rng]) if len(rng) else np.empty((0, steps))
    m = eps.shape[0]
    states = np.empty((m, n + 1))
    x = np.full(m, float(start))
    for k in range(burn):
        x = model.h(x) + eps[:, k]
    states[:, 0] = x
    for k in range(n):
        x = model.h(x) + eps[:, burn + k]
        states[:, k + 1] = x
    return states, eps[:, burn:]


def simulate_chain(model, n: int, burn_in: int | None = None, rng=None, start: float = 0.0) -> ChainPath:
    rng = np.random.default_rng() if rng is None else rng
    states, eps = simulate_paths(model, n, [rng], burn_in=burn_in, start=start)
    return ChainPath(states[0], eps[0])


@dataclass
class InvariantDensity:
    grid: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    iterations: int
    residual: float
    drift: object
    innovation: InnovationDensity

    @property
    def mass(self) -> float:
        return float(self.weights @ self.values)

    def __call__(self, x):
        """Evaluate off-grid through one application of the transfer operator."""
        x = np.asarray(x, dtype=float)
        hy = self.drift(self.grid)
        flat = x.ravel()
        out = np.array([self.innovation.pdf(v - hy) @ (self.weights * self.values) for v in flat])
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def interval_mass(self, lo: float, hi: float) -> float:
        """``int_lo^hi p`` via the kernel representation, exact in the innovation CDF."""
        hy = self.drift(self.grid)
        probs = self.innovation.interval_prob(lo - hy, hi - hy)
        return float(probs @ (self.weights * self.values))


def _trapezoid_weights(grid):
    dx = grid[1] - grid[0]
    w = np.full(len(grid), dx)
    w[0] = w[-1] = dx / 2
    return w


def solve_invariant_density(
    model,
    x_max: float | None = None,
    grid_size: int = 4001,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> InvariantDensity:
    """Fixed-point iteration of the transfer operator starting from ``q``.

    ``model`` is anything with ``h`` (vectorised drift), ``innovation`` and
    ``certificate()``; both :class:`ARModel` and :class:`TARModel` qualify.
    The residual reported is ``max_i |p_i - (K p)_i / m|`` where ``m``
    renormalises ``K p`` to unit mass.
    """
    q = model.innovation
    if x_max is None:
        r, c = model.certificate()
        x_max = max(10.0 * q.scale / (1.0 - r), 2.0 * c)
    if grid_size % 2 == 0:
        grid_size += 1  # keep the origin on the grid
    grid = np.linspace(-x_max, x_max, grid_size)
    w = _trapezoid_weights(grid)
    hy = model.h(grid)
    kernel = np.empty((grid_size, grid_size))
    for lo in range(0, grid_size, 512):
        hi = min(lo + 512, grid_size)
        kernel[lo:hi] = q.pdf(grid[lo:hi, None] - hy[None, :]) * w[None, :]

    p = q.pdf(grid)
    p = p / (w @ p)
    residual = math.inf
    for it in range(1, max_iter + 1):
        kp = kernel @ p
        if not np.all(kp > 0):
            raise ConvergenceError("transfer-operator iterate lost positivity", residual, it)
        # the truncated kernel leaks a little mass, so compare after renormalising
        kp /= w @ kp
        residual = float(np.max(np.abs(kp - p)))
        p = kp
        if residual <= tol:
            break
    else:
        raise ConvergenceError(
            f"invariant density did not converge in {max_iter} sweeps (residual {residual:.3g})",
            residual,
            max_iter,
        )
    return InvariantDensity(grid, p, w, it, residual, model.h, q)


@dataclass
class MixingTable:
    """Heuristic mixing diagnostic: not an estimator of the true coefficient."""

    lags: np.ndarray
    alpha: np.ndarray
    stderr: np.ndarray
    R_hat: float
    rho_hat: float

    def rows(self):
        return [
            {"lag": int(k), "alpha_hat": float(a), "stderr": float(s)}
            for k, a, s in zip(self.lags, self.alpha, self.stderr)
        ]


def _dyadic_intervals(half_width, levels):
    out = []
    for level in range(1, levels + 1):
        edges = np.linspace(-half_width, half_width, 2**level + 1)
        out.extend(zip(edges[:-1], edges[1:]))
    return out


def mixing_diagnostic(model, lags: Sequence[int], M: int, rng, min_hits: int = 50, levels: int = 3) -> MixingTable:
    """Estimate ``max_{g, A} |E[g(X_{i+k}) | X_i in A] - E g(X)|`` per lag ``k``.

    Test functions are indicators of dyadic intervals of ``[-4s, 4s]`` and the
    conditioning cells split the line at ``-s, 0, s``, where ``s`` is the
    innovation scale.  A log-linear fit ``alpha(k) ~ R rho^(k-2)`` is reported.
    """
    lags = np.asarray(sorted(set(int(k) for k in lags)))
    if len(lags) == 0 or lags[0] < 1:
        raise InvalidParameterError("lags must be positive integers")
    if M < 1000:
        raise InvalidParameterError("mixing diagnostic needs M >= 1000")
    s = model.innovation.scale
    states, _ = simulate_paths(model, int(lags[-1]), rng, reps=M)
    x0 = states[:, 0]
    cells = [(-np.inf, -s), (-s, 0.0), (0.0, s), (s, np.inf)]
    members = [(x0 >= lo) & (x0 < hi) for lo, hi in cells]
    for (lo, hi), mem in zip(cells, members):
        if mem.sum() < min_hits:
            raise InsufficientOccupancyError(f"cell [{lo}, {hi}) got {int(mem.sum())} < {min_hits} hits")
    tests = _dyadic_intervals(4.0 * s, levels)

    alpha = np.empty(len(lags))
    se = np.empty(len(lags))
    for i, k in enumerate(lags):
        xk = states[:, k]
        best, best_se = -1.0, 0.0
        for lo, hi in tests:
            g = (xk >= lo) & (xk < hi)
            pbar = g.mean()
            for mem in members:
                na = mem.sum()
                diff = abs(g[mem].mean() - pbar)
                if diff > best:
                    best = diff
                    best_se = math.sqrt(max(pbar * (1 - pbar), 1e-300) * max(1.0 / na - 1.0 / M, 0.0))
        alpha[i] = best
        se[i] = best_se

    ok = alpha > 0
    if ok.sum() >= 2:
        slope, intercept = np.polyfit(lags[ok] - 2.0, np.log(alpha[ok]), 1)
        R_hat, rho_hat = float(np.exp(intercept)), float(np.exp(slope))
    else:
        R_hat, rho_hat = float(alpha[0] if len(alpha) else np.nan), float("nan")
    return MixingTable(lags, alpha, se, R_hat, rho_hat)
