"""Triangular-array rows ``Y_{n,j} = f(eps_j) 1{X_{j-1} in B_n}`` and the
Monte Carlo audit of the moment and characteristic-function assumptions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import JumpLaw
from .errors import InsufficientHitsError, InvalidParameterError
from .markov import ARModel, ChainPath, simulate_paths, solve_invariant_density


@dataclass(frozen=True)
class Window:
    """Interval ``[lo, hi]``, or ``[lo, hi)`` when ``closed_right`` is false."""

    lo: float
    hi: float
    closed_right: bool = True

    @classmethod
    def unit(cls, n: int) -> "Window":
        """The window ``B_n = [0, 1/n]``."""
        return cls(0.0, 1.0 / n)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        upper = x <= self.hi if self.closed_right else x < self.hi
        return (x >= self.lo) & upper


@dataclass
class TriangularArrayRow:
    n: int
    values: np.ndarray
    count: int
    total: float
    window: Window


def build_row(path: ChainPath, f: JumpLaw, window: Window) -> TriangularArrayRow:
    hit = window.contains(path.states[:-1])
    values = np.where(hit, f(path.innovations), 0.0)
    return TriangularArrayRow(path.n, values, int(hit.sum()), float(values.sum()), window)


def row_sums(states: np.ndarray, innovations: np.ndarray, f: JumpLaw, window: Window):
    """Row sums ``S_n`` and window-entry counts for a batch of paths."""
    hit = window.contains(states[:, :-1])
    values = np.where(hit, f(innovations), 0.0)
    return values.sum(axis=1), hit.sum(axis=1)


def simulate_row_sums(rngs, model: ARModel, n: int, f: JumpLaw | None = None, window: Window | None = None):
    """One ``S_n`` per generator in ``rngs``; usable as a replication block."""
    f = model.mark if f is None else f
    window = Window.unit(n) if window is None else window
    states, eps = simulate_paths(model, n, rngs)
    sums, _ = row_sums(states, eps, f, window)
    return sums


@dataclass
class AuditEntry:
    name: str
    value: float
    stderr: float
    bound: float

    @property
    def violated(self) -> bool:
        return bool(self.value > self.bound + 3.0 * self.stderr)


@dataclass
class AssumptionAudit:
    """Scaled Monte Carlo moments of one row against the bounds that the
    invariant-density argument gives for the additive AR chain."""

    n: int
    M: int
    hits: int
    ell: int
    mu: float
    c_prime: float
    c1_bound: float
    entries: list[AuditEntry] = field(default_factory=list)
    c2_exact: float = 0.0

    @property
    def implied_c1(self) -> float:
        vals = [0.0]
        for e in self.entries:
            if e.name.startswith("pair"):
                vals.append(math.sqrt(max(e.value, 0.0)))
            elif not e.name.startswith("cf"):
                vals.append(e.value)
        return max(vals)

    @property
    def implied_c2(self) -> float:
        return next((e.value for e in self.entries if e.name == "cf_derivative_defect"), 0.0)

    @property
    def violations(self) -> list[str]:
        return [e.name for e in self.entries if e.violated]

    @property
    def violation(self) -> bool:
        return bool(self.violations)

    def to_dict(self):
        return {
            "n": self.n,
            "M": self.M,
            "hits": self.hits,
            "ell": self.ell,
            "mu": self.mu,
            "c_prime": self.c_prime,
            "c1_bound": self.c1_bound,
            "implied_c1": self.implied_c1,
            "implied_c2": self.implied_c2,
            "c2_exact": self.c2_exact,
            "entries": [
                {"name": e.name, "value": e.value, "stderr": e.stderr, "bound": e.bound, "violated": e.violated}
                for e in self.entries
            ],
            "violations": self.violations,
        }


def c_prime_sup(model: ARModel, f: JumpLaw, n: int, points: int = 65) -> float:
    """``sup_{z, x in [0, 1/n]} |f(z - h(x))|`` on a ``points x points`` grid."""
    z = np.linspace(0.0, 1.0 / n, points)
    hx = model.h(z)
    return float(np.max(np.abs(f(z[:, None] - hx[None, :]))))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _window_integral(func, lo, hi):
    """``int_lo^hi func(y) dy`` by 16-point Gauss-Legendre, vectorised over intervals."""
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    y = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return half * (func(y) @ _GL_WEIGHTS)


def audit_assumptions(
    model: ARModel,
    n: int,
    M: int | None = None,
    t_grid=None,
    rng=None,
    ell: int = 2,
    pair_lags=(1, 2, 5),
    c_prime: float | None = None,
    invariant=None,
    chunk: int = 50_000,
) -> AssumptionAudit:
    """Audit assumptions (1) and (4) for the row ``f(eps_j) 1{X_{j-1} in [0, 1/n]}``.

    Each replication is an independent stationary stretch
    ``X_{i-1}, eps_i, X_i, ...``.  Pair moments are Rao-Blackwellised: the
    last transition into ``B_n`` is integrated against the innovation law
    instead of being sampled, so only visits of ``X_{i-1}`` to ``B_n`` need to
    be observed.  ``ell`` is recorded as declared; it cannot be inferred.
    """
    f = model.mark
    q = model.innovation
    if M is None:
        M = int(math.ceil(100 * n / q.sup_norm))
    if t_grid is None:
        t_grid = np.linspace(-10.0, 10.0, 41)
    rng = np.random.default_rng() if rng is None else rng
    pair_lags = sorted(set(int(k) for k in pair_lags))
    if not pair_lags or pair_lags[0] < 1:
        raise InvalidParameterError("pair lags must be positive")
    window = Window.unit(n)
    width = 1.0 / n

    qsup = q.sup_norm
    ef = f.mean_abs()
    pnz = f.prob_nonzero()
    cp = c_prime_sup(model, f, n) if c_prime is None else float(c_prime)
    c1 = max(qsup**2, 1.0) * max(ef, cp, 1.0)

    def transition_prob(x):
        hx = model.h(x)
        return q.interval_prob(-hx, width - hx)

    kmax = pair_lags[-1]
    one_nz, one_abs, hit_all = [], [], []
    fwd = {k: [] for k in pair_lags}
    rev = {k: [] for k in pair_lags}
    for lo in range(0, M, chunk):
        m = min(chunk, M - lo)
        states, eps = simulate_paths(model, kmax, rng, reps=m)
        x_prev = states[:, 0]
        hit = window.contains(x_prev)
        fe = f(eps[:, 0])
        hit_all.append(hit)
        one_nz.append(hit & (fe != 0))
        one_abs.append(np.where(hit, np.abs(fe), 0.0))
        idx = np.flatnonzero(hit)
        for k in pair_lags:
            v_f = np.zeros(m)
            v_r = np.zeros(m)
            if idx.size:
                if k == 1:
                    hx = model.h(x_prev[idx])
                    v_f[idx] = pnz * _window_integral(lambda y: np.abs(f(y)) * q.pdf(y), -hx, width - hx)
                    v_r[idx] = ef * pnz * transition_prob(x_prev[idx])
                else:
                    g = transition_prob(states[idx, k - 1])
                    v_f[idx] = pnz * np.abs(fe[idx]) * g
                    v_r[idx] = ef * (fe[idx] != 0) * g
            fwd[k].append(v_f)
            rev[k].append(v_r)

    hit = np.concatenate(hit_all)
    hits = int(hit.sum())
    if hits == 0:
        raise InsufficientHitsError(f"no visit to B_n = [0, 1/{n}] in {M} stationary draws")

    def entry(name, samples, scale, bound):
        samples = scale * np.asarray(samples, dtype=float)
        se = float(samples.std(ddof=1) / math.sqrt(len(samples))) if len(samples) > 1 else 0.0
        return AuditEntry(name, float(samples.mean()), se, float(bound))

    entries = [
        entry("prob_nonzero", np.concatenate(one_nz), n, qsup),
        entry("abs_mean", np.concatenate(one_abs), n, ef * qsup),
    ]
    for k in pair_lags:
        fb = qsup**2 * cp if k == 1 else ef * qsup**2
        entries.append(entry(f"pair_abs_then_nonzero_lag{k}", np.concatenate(fwd[k]), n * n, fb))
        entries.append(entry(f"pair_nonzero_then_abs_lag{k}", np.concatenate(rev[k]), n * n, ef * qsup**2))

    inv = solve_invariant_density(model) if invariant is None else invariant
    mu = float(inv(0.0))
    dphi = float(np.max(np.abs(f.cf_derivative(np.asarray(t_grid, dtype=float)))))
    p_hat = hit.mean()
    p_se = hit.std(ddof=1) / math.sqrt(M) if M > 1 else 0.0
    entries.append(
        AuditEntry("cf_derivative_defect", n * n * abs(p_hat - mu / n) * dphi, n * n * p_se * dphi, q.lipschitz)
    )
    c2_exact = n * n * abs(inv.interval_mass(0.0, width) - mu / n) * dphi
    return AssumptionAudit(n, M, hits, ell, mu, cp, c1, entries, c2_exact)
