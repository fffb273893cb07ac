"""Threshold estimation in two-regime AR models.

The likelihood of a TAR sample depends on the threshold only through which
regime each previous state falls in, so it is a step function of ``theta``
with jumps at the sample values.  Posterior integrals are therefore computed
exactly, interval by interval.  The rescaled likelihood ratio ``Z_n(u)`` and
its compound Poisson limit ``Z(u)`` are represented by their jump locations
and log-marks.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .distributions import InnovationDensity, JumpLaw
from .errors import DegeneratePosteriorError, InvalidParameterError, OutOfParameterSpaceError
from .markov import ChainPath, TARModel, simulate_paths, solve_invariant_density
from .metrics import EmpiricalLaw, levy_distance
from .streams import map_replications


def log_likelihood(x, model: TARModel, theta: float) -> float:
    """Log-likelihood of ``X_0..X_n`` at threshold ``theta`` (conditional on ``X_0``)."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise InvalidParameterError("sample must contain at least two states")
    resid = x[1:] - model.conditional_mean(x[:-1], theta)
    return float(np.sum(model.innovation.logpdf(resid)))


def _check_inside(model, theta):
    if not model.lower < theta < model.upper:
        raise OutOfParameterSpaceError(f"threshold {theta} outside ({model.lower}, {model.upper})")


def log_Zn(path: ChainPath, model: TARModel, theta0: float, u: float) -> float:
    """``log L_n(theta0 + u/n) - log L_n(theta0)`` written as a windowed sum.

    ``path`` must have been generated at threshold ``theta0``.  For ``u > 0``
    the states in ``[theta0, theta0 + u/n)`` switch to the lower regime and
    contribute ``log q(eps + delta) - log q(eps)``; for ``u < 0`` those in
    ``[theta0 + u/n, theta0)`` switch up with shift ``-delta``.
    """
    n = path.n
    theta = theta0 + u / n
    _check_inside(model, theta)
    if u == 0:
        return 0.0
    prev = path.states[:-1]
    if u > 0:
        sel = (prev >= theta0) & (prev < theta)
        sign = 1.0
    else:
        sel = (prev >= theta) & (prev < theta0)
        sign = -1.0
    if not sel.any():
        return 0.0
    eps = path.innovations[sel]
    q = model.innovation
    shift = sign * model.delta(prev[sel])
    return float(np.sum(q.logpdf(eps + shift) - q.logpdf(eps)))


@dataclass
class LikelihoodRatioProcess:
    """Piecewise-constant ``log Z(u)`` on ``[-u_max, u_max]``.

    ``pos_times`` / ``neg_times`` are the (positive) distances from the origin
    of the jumps on each side; a jump at distance ``t`` is felt for ``u > t``
    on the right and for ``u <= -t`` on the left.
    """

    kind: str
    pos_times: np.ndarray
    pos_marks: np.ndarray
    neg_times: np.ndarray
    neg_marks: np.ndarray
    u_max: float
    u_min: float | None = None

    def __post_init__(self):
        if self.u_min is None:
            self.u_min = -self.u_max
        for side in ("pos", "neg"):
            t = np.asarray(getattr(self, f"{side}_times"), dtype=float)
            m = np.asarray(getattr(self, f"{side}_marks"), dtype=float)
            order = np.argsort(t, kind="stable")
            setattr(self, f"{side}_times", t[order])
            setattr(self, f"{side}_marks", m[order])

    def log_value(self, u):
        u = np.asarray(u, dtype=float)
        flat = u.ravel()
        out = np.empty_like(flat)
        cpos = np.concatenate([[0.0], np.cumsum(self.pos_marks)])
        cneg = np.concatenate([[0.0], np.cumsum(self.neg_marks)])
        right = flat >= 0
        out[right] = cpos[np.searchsorted(self.pos_times, flat[right], side="left")]
        out[~right] = cneg[np.searchsorted(self.neg_times, -flat[~right], side="right")]
        return out.reshape(u.shape) if u.ndim else float(out[0])

    def intervals(self):
        """Edges ``e_0 < ... < e_K`` and the constant log-level on each ``(e_k, e_{k+1})``."""
        lo, hi = self.u_min, self.u_max
        pts = np.concatenate([[lo, 0.0, hi], self.pos_times, -self.neg_times])
        edges = np.unique(pts[(pts >= lo) & (pts <= hi)])
        mids = 0.5 * (edges[:-1] + edges[1:])
        return edges, self.log_value(mids)

    @property
    def jump_locations(self):
        return np.sort(np.concatenate([-self.neg_times, self.pos_times]))


def likelihood_ratio_process(path: ChainPath, model: TARModel, theta0: float, u_max: float) -> LikelihoodRatioProcess:
    """``log Z_n`` of a path generated at ``theta0``, truncated to ``|u| <= u_max`` and to ``Theta``."""
    n = path.n
    lo = max(-u_max, n * (model.lower - theta0))
    hi = min(u_max, n * (model.upper - theta0))
    prev = path.states[:-1]
    loc = n * (prev - theta0)
    q = model.innovation
    d = model.delta(prev)
    eps = path.innovations
    pos = (loc >= 0) & (loc < hi)
    neg = (loc < 0) & (loc >= lo)
    pos_marks = q.logpdf(eps[pos] + d[pos]) - q.logpdf(eps[pos])
    neg_marks = q.logpdf(eps[neg] - d[neg]) - q.logpdf(eps[neg])
    return LikelihoodRatioProcess("finite-n", loc[pos], pos_marks, -loc[neg], neg_marks, hi, lo)


def _arrivals_with_marks(rng, intensity, horizon, innovation, shift, chunk=64):
    # Inter-arrival times and innovations are drawn chunk by chunk so that the
    # process on [0, U] does not depend on the horizon beyond U.
    times, eps = [], []
    last = 0.0
    while last <= horizon:
        gaps = rng.exponential(1.0 / intensity, chunk)
        e = innovation.sample(rng, chunk)
        t = last + np.cumsum(gaps)
        times.append(t)
        eps.append(e)
        last = t[-1]
    t = np.concatenate(times)
    e = np.concatenate(eps)
    keep = t <= horizon
    t, e = t[keep], e[keep]
    return t, innovation.logpdf(e + shift) - innovation.logpdf(e)


def sample_limit_process(delta0: float, innovation: InnovationDensity, intensity: float, u_max: float, rng):
    """Two independent compound Poisson branches with marks
    ``log q(eps + delta0)/q(eps)`` (right) and ``log q(eps - delta0)/q(eps)`` (left)."""
    if not intensity > 0:
        raise InvalidParameterError("intensity must be positive")
    if not u_max > 0:
        raise InvalidParameterError("u_max must be positive")
    pos_rng, neg_rng = rng.spawn(2)
    pt, pm = _arrivals_with_marks(pos_rng, intensity, u_max, innovation, delta0)
    nt, nm = _arrivals_with_marks(neg_rng, intensity, u_max, innovation, -delta0)
    return LikelihoodRatioProcess("limit", pt, pm, nt, nm, float(u_max))


def ratio_of_integrals(process: LikelihoodRatioProcess) -> float:
    """``int u Z(u) du / int Z(u) du`` over the truncation window, exactly."""
    edges, levels = process.intervals()
    w = np.exp(levels - levels.max())
    num = np.sum(w * (edges[1:] ** 2 - edges[:-1] ** 2)) / 2.0
    den = np.sum(w * np.diff(edges))
    return float(num / den)


def limit_estimator_draw(process: LikelihoodRatioProcess) -> float:
    if process.kind != "limit":
        raise InvalidParameterError("limit_estimator_draw expects a limit process")
    return ratio_of_integrals(process)


class UniformPrior:
    def __init__(self, lower, upper):
        if not lower < upper:
            raise InvalidParameterError("prior support must be a nonempty interval")
        self.lower, self.upper = float(lower), float(upper)

    def pdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        inside = (theta > self.lower) & (theta < self.upper)
        return np.where(inside, 1.0 / (self.upper - self.lower), 0.0)

    def mass(self, lo, hi):
        return (np.asarray(hi) - np.asarray(lo)) / (self.upper - self.lower)

    def first_moment(self, lo, hi):
        lo, hi = np.asarray(lo), np.asarray(hi)
        return (hi * hi - lo * lo) / (2.0 * (self.upper - self.lower))

    def mean(self):
        return 0.5 * (self.lower + self.upper)

    def to_dict(self):
        return {"kind": "uniform", "lower": self.lower, "upper": self.upper}


class TruncatedGaussianPrior:
    def __init__(self, loc, scale, lower, upper):
        if not lower < upper or not scale > 0:
            raise InvalidParameterError("invalid truncated Gaussian prior")
        self.loc, self.scale = float(loc), float(scale)
        self.lower, self.upper = float(lower), float(upper)
        self._z = special.ndtr(self._std(upper)) - special.ndtr(self._std(lower))

    def _std(self, x):
        return (np.asarray(x, dtype=float) - self.loc) / self.scale

    def pdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        inside = (theta > self.lower) & (theta < self.upper)
        dens = np.exp(-0.5 * self._std(theta) ** 2) / (self.scale * math.sqrt(2 * math.pi) * self._z)
        return np.where(inside, dens, 0.0)

    def mass(self, lo, hi):
        a, b = self._std(lo), self._std(hi)
        # difference of upper tails is more accurate to the right of the mode
        direct = special.ndtr(b) - special.ndtr(a)
        tails = special.ndtr(-a) - special.ndtr(-b)
        return np.where(a > 0, tails, direct) / self._z

    def first_moment(self, lo, hi):
        a, b = self._std(lo), self._std(hi)
        dens = (np.exp(-0.5 * a * a) - np.exp(-0.5 * b * b)) / math.sqrt(2 * math.pi)
        return self.loc * self.mass(lo, hi) + self.scale * dens / self._z

    def mean(self):
        return float(self.first_moment(self.lower, self.upper))

    def to_dict(self):
        return {"kind": "truncated_gaussian", "loc": self.loc, "scale": self.scale, "lower": self.lower, "upper": self.upper}


@dataclass
class BayesEstimate:
    theta: float
    log_normalizer: float
    method: str
    breakpoints: int


def likelihood_steps(x, model: TARModel, lower: float, upper: float):
    """Edges of the constancy intervals of ``theta -> log L_n`` on ``(lower, upper)``
    and the log-likelihood on each."""
    x = np.asarray(x, dtype=float)
    prev, nxt = x[:-1], x[1:]
    q = model.innovation
    lp = q.logpdf(nxt - model.g_plus(prev))
    lm = q.logpdf(nxt - model.g_minus(prev))
    below = prev <= lower
    above = prev >= upper
    inside = ~below & ~above
    base = lm[below].sum() + lp[above].sum()
    order = np.argsort(prev[inside], kind="stable")
    pts = prev[inside][order]
    switch = (lm[inside] - lp[inside])[order]
    levels = base + lp[inside].sum() + np.concatenate([[0.0], np.cumsum(switch)])
    edges = np.concatenate([[lower], pts, [upper]])
    return edges, levels


def posterior_mean(edges, log_levels, prior) -> tuple[float, float]:
    """Posterior mean and log-normaliser for a step log-likelihood."""
    mass = prior.mass(edges[:-1], edges[1:])
    moment = prior.first_moment(edges[:-1], edges[1:])
    live = mass > 0
    if not live.any():
        raise DegeneratePosteriorError("prior gives no mass to any likelihood interval")
    top = np.max(log_levels[live])
    if not math.isfinite(top):
        raise DegeneratePosteriorError("likelihood vanishes on the whole parameter interval")
    w = np.where(live, np.exp(log_levels - top), 0.0)
    den = float(np.sum(w * mass))
    if not (den > 0 and math.isfinite(den)):
        raise DegeneratePosteriorError("posterior normalisation underflowed")
    return float(np.sum(w * moment) / den), top + math.log(den)


def bayes_estimate(x, model: TARModel, prior) -> BayesEstimate:
    """Posterior mean of the threshold, integrated exactly over the likelihood steps."""
    edges, levels = likelihood_steps(x, model, prior.lower, prior.upper)
    theta, lognorm = posterior_mean(edges, levels, prior)
    return BayesEstimate(theta, lognorm, "exact-piecewise", len(edges) - 2)


def bayes_estimate_grid(x, model: TARModel, prior, nodes: int = 100_000, chunk: int = 2000) -> BayesEstimate:
    """Midpoint-rule posterior mean with the likelihood evaluated node by node."""
    x = np.asarray(x, dtype=float)
    step = (prior.upper - prior.lower) / nodes
    theta = prior.lower + (np.arange(nodes) + 0.5) * step
    prev, nxt = x[:-1], x[1:]
    q = model.innovation
    gp, gm = model.g_plus(prev), model.g_minus(prev)
    logl = np.empty(nodes)
    for lo in range(0, nodes, chunk):
        th = theta[lo : lo + chunk, None]
        mean = np.where(prev[None, :] >= th, gp[None, :], gm[None, :])
        logl[lo : lo + chunk] = q.logpdf(nxt[None, :] - mean).sum(axis=1)
    top = logl.max()
    w = np.exp(logl - top) * prior.pdf(theta) * step
    den = w.sum()
    if not den > 0:
        raise DegeneratePosteriorError("grid posterior normalisation underflowed")
    return BayesEstimate(float(w @ theta / den), top + math.log(den), "grid", nodes)


def kl_rates(delta0: float, innovation: InnovationDensity) -> tuple[float, float]:
    """Mean decay rates ``-E mark`` of the right and left limit branches."""
    right = -JumpLaw.log_ratio(innovation, delta0).mean()
    left = -JumpLaw.log_ratio(innovation, -delta0).mean()
    return right, left


def default_u_max(intensity: float, delta0: float, innovation: InnovationDensity) -> float:
    return 30.0 / (intensity * min(kl_rates(delta0, innovation)))


def _estimator_block(rngs, model: TARModel, n: int, prior):
    states, _ = simulate_paths(model, n, rngs)
    return [n * (bayes_estimate(row, model, prior).theta - model.theta) for row in states]


def _limit_block(rngs, delta0, innovation, intensity, u_max):
    return [limit_estimator_draw(sample_limit_process(delta0, innovation, intensity, u_max, g)) for g in rngs]


def limit_draws(M, seed, delta0, innovation, intensity, u_max, workers=None):
    return np.asarray(
        map_replications(_limit_block, M, seed, ("threshold-limit",), (delta0, innovation, intensity, u_max), workers)
    )


@dataclass
class AsymptoticsReport:
    levy_distance: float
    n: int
    M: int
    u_max: float
    intensity: float
    seed: int
    delta0: float
    estimator: np.ndarray = field(repr=False)
    limit: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        return {
            "levy_distance": self.levy_distance,
            "n": self.n,
            "M": self.M,
            "U_max": self.u_max,
            "intensity": self.intensity,
            "seed": self.seed,
            "delta0": self.delta0,
        }

    def cdf_csv(self, header: str | None = None) -> str:
        F, G = EmpiricalLaw(self.estimator), EmpiricalLaw(self.limit)
        pts = np.union1d(F.breakpoints(), G.breakpoints())
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["value", "cdf_estimator", "cdf_limit"])
        for v, a, b in zip(pts, F.cdf(pts), G.cdf(pts)):
            w.writerow([repr(float(v)), repr(float(a)), repr(float(b))])
        return buf.getvalue()


def estimator_asymptotics_study(
    model: TARModel,
    n: int,
    M: int,
    prior,
    seed: int = 0,
    workers: int | None = None,
    u_max: float | None = None,
    invariant=None,
) -> AsymptoticsReport:
    """Compare ``n (theta_n - theta0)`` over ``M`` paths with ``M`` draws of the limit ratio.

    The intensity ``p(theta0)`` is the invariant density of the TAR chain at
    its true threshold.
    """
    theta0 = model.theta
    inv = solve_invariant_density(model) if invariant is None else invariant
    intensity = float(inv(theta0))
    delta0 = float(model.delta(theta0))
    if u_max is None:
        u_max = default_u_max(intensity, delta0, model.innovation)
    est = np.asarray(map_replications(_estimator_block, M, seed, ("threshold-est", n), (model, n, prior), workers))
    lim = limit_draws(M, seed, delta0, model.innovation, intensity, u_max, workers)
    dist = levy_distance(EmpiricalLaw(est), EmpiricalLaw(lim))
    return AsymptoticsReport(dist, n, M, float(u_max), intensity, seed, delta0, est, lim)
