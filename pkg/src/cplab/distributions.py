"""Innovation densities, jump laws and the compound Poisson law.

The three innovation families are all positive, bounded and Lipschitz with a
finite first absolute moment, and each has a closed-form characteristic
function.  A jump is a mark ``f(eps)`` of an innovation draw; its
characteristic function is analytic for constant and affine marks and is
computed by adaptive quadrature for the log-ratio mark.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import InvalidParameterError, QuadratureError

FAMILIES = ("gaussian", "laplace", "logistic")

QUAD_TOL = 1e-10
# Per-tail mass beyond the truncation point used by all quadratures.
TAIL_MASS = 1e-13

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class InnovationDensity:
    """Density ``q`` of the i.i.d. driving noise.

    Parameters
    ----------
    family : {"gaussian", "laplace", "logistic"}
    scale : float
        Standard deviation for the Gaussian, the ``b`` in ``exp(-|x|/b)/(2b)``
        for the Laplace and the ``s`` of the logistic law.
    """

    family: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameterError(f"unknown innovation family {self.family!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidParameterError("innovation scale must be positive and finite")
        object.__setattr__(self, "scale", float(self.scale))

    def logpdf(self, x):
        z = np.asarray(x, dtype=float) / self.scale
        if self.family == "gaussian":
            out = -0.5 * z * z - _LOG_SQRT_2PI
        elif self.family == "laplace":
            out = -np.abs(z) - math.log(2.0)
        else:
            a = np.abs(z)
            out = -a - 2.0 * np.log1p(np.exp(-a))
        return out - math.log(self.scale)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        z = np.asarray(x, dtype=float) / self.scale
        if self.family == "gaussian":
            return special.ndtr(z)
        if self.family == "laplace":
            return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))
        return special.expit(z)

    def interval_prob(self, lo, hi):
        """``P(lo <= eps <= hi)``, using upper tails where they are more accurate."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        upper = self.cdf(-lo) - self.cdf(-hi)  # symmetric law
        lower = self.cdf(hi) - self.cdf(lo)
        return np.where(lo > 0, upper, lower)

    def ppf_upper(self, tail):
        """Point beyond which the upper tail carries mass ``tail``."""
        if self.family == "gaussian":
            return -self.scale * special.ndtri(tail)
        if self.family == "laplace":
            return -self.scale * math.log(2.0 * tail)
        return self.scale * math.log((1.0 - tail) / tail)

    def sample(self, rng: np.random.Generator, size=None):
        if self.family == "gaussian":
            return rng.normal(0.0, self.scale, size)
        if self.family == "laplace":
            return rng.laplace(0.0, self.scale, size)
        return rng.logistic(0.0, self.scale, size)

    def cf(self, t):
        """Characteristic function ``E exp(i t eps)`` (real, the laws are symmetric)."""
        s = np.asarray(t, dtype=float) * self.scale
        if self.family == "gaussian":
            return np.exp(-0.5 * s * s)
        if self.family == "laplace":
            return 1.0 / (1.0 + s * s)
        x = math.pi * np.abs(s)
        with np.errstate(invalid="ignore", over="ignore"):
            val = np.where(x > 700, 0.0, x / np.sinh(np.where(x == 0, 1.0, np.minimum(x, 700))))
        return np.where(x == 0, 1.0, val)

    def cf_derivative(self, t):
        t = np.asarray(t, dtype=float)
        s = t * self.scale
        if self.family == "gaussian":
            return -self.scale**2 * t * np.exp(-0.5 * s * s)
        if self.family == "laplace":
            return -2.0 * self.scale**2 * t / (1.0 + s * s) ** 2
        x = math.pi * s
        ax = np.abs(x)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            xs = np.where(ax < 1e-4, 1.0, np.minimum(ax, 350.0)) * np.sign(x)
            big = (np.sinh(xs) - xs * np.cosh(xs)) / np.sinh(xs) ** 2
        d = np.where(ax < 1e-4, -x / 3.0, big)
        return d * math.pi * self.scale

    @property
    def sup_norm(self) -> float:
        """``sup_x q(x)``, attained at the origin."""
        return float(self.pdf(0.0))

    @property
    def lipschitz(self) -> float:
        """Smallest Lipschitz constant of ``q``, i.e. ``sup |q'|``."""
        s2 = self.scale**2
        if self.family == "gaussian":
            return math.exp(-0.5) / (s2 * math.sqrt(2.0 * math.pi))
        if self.family == "laplace":
            return 1.0 / (2.0 * s2)
        return 1.0 / (6.0 * math.sqrt(3.0) * s2)

    @property
    def abs_moment(self) -> float:
        """``E|eps|``."""
        if self.family == "gaussian":
            return self.scale * math.sqrt(2.0 / math.pi)
        if self.family == "laplace":
            return self.scale
        return 2.0 * math.log(2.0) * self.scale

    @property
    def truncation(self) -> float:
        """Half-width of the window holding all but ``2*TAIL_MASS`` of the mass."""
        return max(12.0 * self.scale, float(self.ppf_upper(TAIL_MASS)))

    def expect(self, func, tol: float = QUAD_TOL) -> float:
        """``E func(eps)`` for a real ``func`` by panelled adaptive quadrature."""
        return _quad_real(lambda x: func(x) * self.pdf(x), self.truncation, 16, tol)


def _quad_real(integrand, half_width, panels, tol):
    edges = np.linspace(-half_width, half_width, panels + 1)
    total = 0.0
    per_panel = tol / panels
    for lo, hi in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(integrand, lo, hi, epsabs=per_panel, epsrel=0.0, limit=200)
        if not err <= per_panel * 10:
            raise QuadratureError(
                f"adaptive quadrature did not reach {tol:g} on [{lo:g}, {hi:g}] (error estimate {err:g})"
            )
        total += val
    return total


JUMP_KINDS = ("constant", "affine", "log_ratio")


@dataclass(frozen=True)
class JumpLaw:
    """Law of ``f(eps)`` for a mark transform ``f`` of an innovation draw.

    Use the constructors :meth:`constant`, :meth:`affine` and
    :meth:`log_ratio` rather than the raw fields.
    """

    innovation: InnovationDensity
    kind: str = "constant"
    a: float = 0.0
    b: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in JUMP_KINDS:
            raise InvalidParameterError(f"unknown jump kind {self.kind!r}")
        for name in ("a", "b", "shift"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvalidParameterError(f"jump parameter {name} must be finite")
            object.__setattr__(self, name, v)

    @classmethod
    def constant(cls, innovation, value=1.0):
        return cls(innovation, "constant", a=0.0, b=value)

    @classmethod
    def affine(cls, innovation, a, b=0.0):
        return cls(innovation, "affine", a=a, b=b)

    @classmethod
    def log_ratio(cls, innovation, shift):
        """Mark ``log q(eps + shift) - log q(eps)``."""
        return cls(innovation, "log_ratio", shift=shift)

    def __call__(self, eps):
        eps = np.asarray(eps, dtype=float)
        if self.kind == "constant":
            return np.full_like(eps, self.b)
        if self.kind == "affine":
            return self.a * eps + self.b
        q = self.innovation
        return q.logpdf(eps + self.shift) - q.logpdf(eps)

    def sample(self, rng, size=None):
        return self(self.innovation.sample(rng, size))

    @property
    def is_constant(self) -> bool:
        return (
            self.kind == "constant"
            or (self.kind == "affine" and self.a == 0.0)
            or (self.kind == "log_ratio" and self.shift == 0.0)
        )

    @property
    def constant_value(self) -> float | None:
        if self.kind == "log_ratio":
            return 0.0 if self.shift == 0.0 else None
        return self.b if self.is_constant else None

    def prob_nonzero(self) -> float:
        """``P(f(eps) != 0)``; non-constant marks vanish only on a null set."""
        if self.is_constant:
            return 0.0 if self.constant_value == 0.0 else 1.0
        return 1.0

    def mean(self) -> float:
        if self.is_constant:
            return float(self.constant_value)
        if self.kind == "affine":
            return self.b
        return self.innovation.expect(self.__call__)

    def mean_abs(self) -> float:
        """``E|f(eps)|``."""
        if self.is_constant:
            return abs(float(self.constant_value))
        return self.innovation.expect(lambda x: np.abs(self(x)))

    def cf(self, t):
        """``phi(t) = E exp(i t f(eps))``, vectorised over ``t``."""
        t = np.asarray(t, dtype=float)
        if self.is_constant:
            return np.exp(1j * t * self.constant_value)
        if self.kind == "affine":
            return np.exp(1j * t * self.b) * self.innovation.cf(self.a * t)
        return _vectorise(_log_ratio_cf, self, t)

    def cf_derivative(self, t):
        """``d phi / dt = E i f(eps) exp(i t f(eps))``."""
        t = np.asarray(t, dtype=float)
        if self.is_constant:
            c = self.constant_value
            return 1j * c * np.exp(1j * t * c)
        if self.kind == "affine":
            q = self.innovation
            phase = np.exp(1j * t * self.b)
            return phase * (1j * self.b * q.cf(self.a * t) + self.a * q.cf_derivative(self.a * t))
        return _vectorise(_log_ratio_cf_derivative, self, t)


def _vectorise(func, jump, t):
    flat = np.array([func(jump, float(v)) for v in t.ravel()], dtype=complex)
    return flat.reshape(t.shape) if t.ndim else flat[0]


def _panels(jump, t):
    # One panel per half-oscillation of exp(i t f(x)), at least 16.
    L = jump.innovation.truncation
    xs = np.linspace(-L, L, 4001)
    variation = abs(t) * np.sum(np.abs(np.diff(jump(xs))))
    return L, max(16, int(math.ceil(variation / math.pi)))


@lru_cache(maxsize=4096)
def _log_ratio_cf(jump, t):
    if t == 0.0:
        return 1.0 + 0.0j
    q = jump.innovation
    L, k = _panels(jump, t)
    re = _quad_real(lambda x: np.cos(t * jump(x)) * q.pdf(x), L, k, QUAD_TOL)
    im = _quad_real(lambda x: np.sin(t * jump(x)) * q.pdf(x), L, k, QUAD_TOL)
    return complex(re, im)


@lru_cache(maxsize=4096)
def _log_ratio_cf_derivative(jump, t):
    q = jump.innovation
    L, k = _panels(jump, t)
    # i f e^{itf} = i f cos(tf) - f sin(tf)
    re = _quad_real(lambda x: -jump(x) * np.sin(t * jump(x)) * q.pdf(x), L, k, QUAD_TOL)
    im = _quad_real(lambda x: jump(x) * np.cos(t * jump(x)) * q.pdf(x), L, k, QUAD_TOL)
    return complex(re, im)


@dataclass(frozen=True)
class CompoundPoissonLaw:
    """Law of ``sum_{k <= N} f(eps_k)`` with ``N ~ Poisson(intensity)``."""

    intensity: float
    jump: JumpLaw

    def __post_init__(self):
        if not (self.intensity > 0 and math.isfinite(self.intensity)):
            raise InvalidParameterError("compound Poisson intensity must be positive and finite")
        object.__setattr__(self, "intensity", float(self.intensity))

    def cf(self, t):
        """``psi(t) = exp(mu (phi(t) - 1))``."""
        return np.exp(self.intensity * (self.jump.cf(t) - 1.0))

    @property
    def zero_atom_lower_bound(self) -> float:
        return math.exp(-self.intensity)

    def sample(self, rng: np.random.Generator, size=None):
        """Exact draws; a draw with no jumps is exactly ``0.0``."""
        scalar = size is None
        m = 1 if scalar else int(np.prod(size))
        counts = rng.poisson(self.intensity, m)
        marks = self.jump.sample(rng, int(counts.sum()))
        owner = np.repeat(np.arange(m), counts)
        out = np.bincount(owner, weights=marks, minlength=m).astype(float)
        if scalar:
            return float(out[0])
        return out.reshape(size)

    def exact_cdf(self):
        """Closed-form CDF provider when jumps are a positive constant, else ``None``."""
        c = self.jump.constant_value
        if c is not None and c > 0:
            return PoissonCDF(self.intensity, c)
        return None


def sample_compound_poisson(law: CompoundPoissonLaw, rng: np.random.Generator) -> float:
    return law.sample(rng)


def cp_char_fn(law: CompoundPoissonLaw, t):
    return law.cf(t)


def poisson_pmf_table(mu: float, kmax: int) -> np.ndarray:
    """``P(N = k)`` for ``k = 0..kmax`` via ``p_{k+1} = p_k mu / (k+1)``."""
    if not mu > 0:
        raise InvalidParameterError("Poisson mean must be positive")
    p = np.empty(kmax + 1)
    p[0] = math.exp(-mu)
    for k in range(kmax):
        p[k + 1] = p[k] * mu / (k + 1)
    return p


def poisson_cdf(mu: float, x: float) -> float:
    """``P(N <= x)`` for ``N ~ Poisson(mu)``; zero for ``x < 0``."""
    if not mu > 0:
        raise InvalidParameterError("Poisson mean must be positive")
    if x < 0:
        return 0.0
    term = math.exp(-mu)
    total = term
    for k in range(int(math.floor(x))):
        term *= mu / (k + 1)
        total += term
        if term < 1e-300 and k > mu:
            break
    return min(total, 1.0)


class PoissonCDF:
    """CDF of ``c * N`` with ``N ~ Poisson(mu)``: steps at ``0, c, 2c, ...``."""

    def __init__(self, mu: float, step: float = 1.0):
        self.mu = float(mu)
        self.step = float(step)
        kmax = int(mu + 40.0 * math.sqrt(mu) + 40)
        self._cum = np.minimum(np.cumsum(poisson_pmf_table(self.mu, kmax)), 1.0)
        self._cum[-1] = 1.0 if 1.0 - self._cum[-1] < 1e-15 else self._cum[-1]

    def cdf(self, x):
        k = np.floor(np.asarray(x, dtype=float) / self.step + 1e-12)
        idx = np.clip(k, 0, len(self._cum) - 1).astype(int)
        return np.where(k < 0, 0.0, self._cum[idx])

    def cdf_left(self, x):
        x = np.asarray(x, dtype=float)
        k = np.ceil(x / self.step - 1e-12) - 1
        idx = np.clip(k, 0, len(self._cum) - 1).astype(int)
        return np.where(k < 0, 0.0, self._cum[idx])

    def breakpoints(self):
        return self.step * np.arange(len(self._cum))
