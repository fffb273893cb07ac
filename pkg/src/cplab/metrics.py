"""Lévy distance, empirical characteristic functions, smoothing bounds and
the n-sweep rate study.

A CDF provider is any object with vectorised ``cdf`` (right-continuous),
``cdf_left`` (left limits) and ``breakpoints`` (the finite set of jump
locations).  :class:`EmpiricalLaw` and
:class:`cplab.distributions.PoissonCDF` are the two used here.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .distributions import CompoundPoissonLaw, JumpLaw
from .errors import InvalidParameterError
from .markov import solve_invariant_density
from .streams import map_replications, stream
from .triangular import simulate_row_sums

ZOL_T_MIN = 1e-3
REPORT_COLUMNS = ("n", "M", "levy_hat", "levy_err", "envelope_ratio", "zol_bound", "seconds")


class EmpiricalLaw:
    """Step CDF ``F(x) = #{i : v_i <= x} / M`` of a sample."""

    def __init__(self, values):
        self.values = np.sort(np.asarray(values, dtype=float).ravel())
        if self.values.size == 0:
            raise InvalidParameterError("empirical law needs at least one value")
        self.size = self.values.size
        self._support, self._counts = np.unique(self.values, return_counts=True)

    def cdf(self, x):
        return np.searchsorted(self.values, x, side="right") / self.size

    def cdf_left(self, x):
        return np.searchsorted(self.values, x, side="left") / self.size

    def breakpoints(self):
        return self._support

    def cf(self, t):
        t = np.asarray(t, dtype=float)
        phase = np.exp(1j * np.multiply.outer(t, self._support))
        return phase @ self._counts / self.size


def _levy_feasible(F, G, h):
    bF = F.breakpoints()
    bG = G.breakpoints()
    # G(x - h) - h <= F(x): check at F's jumps and at G's jumps moved right by h.
    if np.any(G.cdf(bF - h) - h > F.cdf(bF)):
        return False
    if np.any(G.cdf(bG) - h > F.cdf(bG + h)):
        return False
    if np.any(G.cdf_left(bF - h) - h > F.cdf_left(bF)):
        return False
    if np.any(G.cdf_left(bG) - h > F.cdf_left(bG + h)):
        return False
    # F(x) <= G(x + h) + h: check at F's jumps and at G's jumps moved left by h.
    if np.any(F.cdf(bF) > G.cdf(bF + h) + h):
        return False
    if np.any(F.cdf(bG - h) > G.cdf(bG) + h):
        return False
    if np.any(F.cdf_left(bF) > G.cdf_left(bF + h) + h):
        return False
    if np.any(F.cdf_left(bG - h) > G.cdf_left(bG) + h):
        return False
    return True


def levy_distance(F, G, tol: float = 1e-6) -> float:
    """Smallest ``h`` with ``G(x-h) - h <= F(x) <= G(x+h) + h`` for all ``x``.

    Bisection on ``[0, 1]``; the result is within ``tol`` above the infimum.
    """
    if _levy_feasible(F, G, 0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _levy_feasible(F, G, mid):
            hi = mid
        else:
            lo = mid
    return hi


def kolmogorov_distance(F, G) -> float:
    pts = np.union1d(F.breakpoints(), G.breakpoints())
    right = np.abs(F.cdf(pts) - G.cdf(pts))
    left = np.abs(F.cdf_left(pts) - G.cdf_left(pts))
    return float(max(right.max(initial=0.0), left.max(initial=0.0)))


def empirical_cf(law: EmpiricalLaw, t_grid):
    """Empirical characteristic function and its per-point standard error ``1/sqrt(M)``."""
    if law.size < 100:
        raise InvalidParameterError("empirical characteristic function needs M >= 100")
    return law.cf(t_grid), 1.0 / math.sqrt(law.size)


def zolotarev_grid(T: float, points: int = 2001, t_min: float = ZOL_T_MIN):
    return np.linspace(t_min, T, points)


def zolotarev_bound(cf_diff, T: float, t_grid, t_min: float = ZOL_T_MIN) -> float:
    """``(1/pi) int_0^T |psi_n - psi| / t dt + 2e log(T) / T``.

    The integrand on ``(0, t_min]`` is frozen at its value at the first grid
    point ``>= t_min``; trapezoid rule above that.
    """
    if not T > 1.3:
        raise InvalidParameterError(f"smoothing bound needs T > 1.3, got {T}")
    t = np.asarray(t_grid, dtype=float)
    d = np.abs(np.asarray(cf_diff))
    keep = (t >= t_min * (1 - 1e-12)) & (t <= T * (1 + 1e-12))
    t, d = t[keep], d[keep]
    if t.size == 0 or t[-1] < T * (1 - 1e-9):
        raise InvalidParameterError("t grid must cover [t_min, T]")
    g = d / t
    integral = t[0] * g[0] + np.trapezoid(g, t)
    return float(integral / math.pi + 2.0 * math.e * math.log(T) / T)


def _check_rate_params(C1, C2, C3, mu, r, b, n, ell, coefficient):
    if not 0.0 < r < 1.0:
        raise InvalidParameterError("r must lie in (0, 1)")
    if b < 1.0 / math.log(1.0 / r):
        raise InvalidParameterError(f"b = {b} is below 1/log(1/r) = {1.0 / math.log(1.0 / r):.6g}")
    if n < 3:
        raise InvalidParameterError("n must be at least 3")
    if b * math.log(n) < ell:
        raise InvalidParameterError("b log n must be at least ell")
    if min(C1, C2, C3, mu) < 0:
        raise InvalidParameterError("constants must be nonnegative")
    if coefficient not in (2, 8):
        raise InvalidParameterError("coefficient must be 2 or 8")


def rate_bound_at(C1, C2, C3, mu, r, b, n, T, ell=1, coefficient=8) -> float:
    """Smoothing-inequality bound on the Lévy distance at cutoff ``T``."""
    _check_rate_params(C1, C2, C3, mu, r, b, n, ell, coefficient)
    if not T > 1.3:
        raise InvalidParameterError("T must exceed 1.3")
    logn = math.log(n)
    remainder = C2 / n + 3.0 * C1 * C3 * r ** (b * logn) + coefficient * C1**2 * b * logn / n
    return math.exp(2.0 * mu) / math.pi * remainder * T + 2.0 * math.e * math.log(T) / T


def theoretical_rate_bound(C1, C2, C3, mu, r, b, n, ell=1, coefficient=8) -> float:
    """The closed-form bound with ``alpha(k) = C3 r^k`` and ``T = sqrt(n)``."""
    return rate_bound_at(C1, C2, C3, mu, r, b, n, math.sqrt(n), ell, coefficient)


def best_cutoff(C1, C2, C3, mu, r, b, n, ell=1, coefficient=8, points=400):
    """Grid search of the cutoff ``T`` (diagnostic only); returns ``(T, bound)``."""
    Ts = np.geomspace(1.31, max(10.0 * math.sqrt(n), 2.0), points)
    vals = [rate_bound_at(C1, C2, C3, mu, r, b, n, T, ell, coefficient) for T in Ts]
    i = int(np.argmin(vals))
    return float(Ts[i]), float(vals[i])


@dataclass
class RateStudyReport:
    rows: list[dict] = field(default_factory=list)
    intensity: float = float("nan")
    reference: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_grid(self):
        return [r["n"] for r in self.rows]

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, header: str | None = None, timing: bool = True) -> str:
        cols = REPORT_COLUMNS if timing else REPORT_COLUMNS[:-1]
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in cols])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"rows": self.rows, "intensity": self.intensity, "reference": self.reference, "meta": self.meta}


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def limit_cdf(law: CompoundPoissonLaw, seed: int, reference_size: int = 1_000_000):
    exact = law.exact_cdf()
    if exact is not None:
        return exact, "exact"
    return EmpiricalLaw(law.sample(stream(seed, "reference"), reference_size)), f"sampled:{reference_size}"


def rate_study(
    model,
    f: JumpLaw | None,
    n_grid,
    M: int,
    seed: int = 0,
    workers: int | None = None,
    n_boot: int = 200,
    reference_size: int = 1_000_000,
    t_points: int = 2001,
    invariant=None,
    levy_tol: float = 1e-6,
) -> RateStudyReport:
    """Lévy distance between ``Law(S_n)`` and its compound Poisson limit along ``n_grid``.

    The intensity is ``p(0)`` from the invariant-density solver.  Each ``n``
    uses ``M`` independent stationary rows; the error bar is a bootstrap
    standard deviation and the smoothing bound uses ``T = sqrt(n)``.
    """
    f = model.mark if f is None else f
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise InvalidParameterError("n_grid must be strictly increasing")
    if n_grid and M < 1000:
        raise InvalidParameterError("rate study needs M >= 1000")
    report = RateStudyReport()
    if not n_grid:
        return report
    inv = solve_invariant_density(model) if invariant is None else invariant
    mu = float(inv(0.0))
    law = CompoundPoissonLaw(mu, f)
    G, ref_tag = limit_cdf(law, seed, reference_size)
    report.intensity = mu
    report.reference = ref_tag

    for n in n_grid:
        start = time.perf_counter()
        sums = np.asarray(map_replications(simulate_row_sums, M, seed, ("rate", n), (model, n, f), workers))
        F = EmpiricalLaw(sums)
        levy = levy_distance(F, G, levy_tol)
        boot_rng = stream(seed, "bootstrap", n)
        boots = [levy_distance(EmpiricalLaw(boot_rng.choice(sums, M)), G, levy_tol) for _ in range(n_boot)]
        levy_err = float(np.std(boots, ddof=1)) if n_boot > 1 else float("nan")
        T = math.sqrt(n)
        t = zolotarev_grid(T, t_points)
        diff = np.abs(F.cf(t) - law.cf(t))
        zol = zolotarev_bound(diff, T, t)
        report.rows.append(
            {
                "n": n,
                "M": M,
                "levy_hat": levy,
                "levy_err": levy_err,
                "envelope_ratio": levy * math.sqrt(n) / math.log(n),
                "zol_bound": zol,
                "seconds": time.perf_counter() - start,
            }
        )
    return report
