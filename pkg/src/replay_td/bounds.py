"""Closed-form right-hand sides of the noise, convergence and concentration bounds.

All logarithms are natural. Every evaluator is a pure function of
:class:`BoundInputs`; the iterate-bound evaluators return their component terms so
each can be checked on its own.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable

from .exceptions import HypothesisViolated, NonStationaryStart


def _zero_tv(k):
    return 0.0


@dataclass(frozen=True)
class BoundInputs:
    n_states: int
    n_actions: int
    r_max: float
    gamma: float
    mu_min: float
    alpha: float
    buffer_n: int
    batch_l: int
    horizon_t: int
    t1_mix: int
    t2_mix: int
    v0_err_sq: float = 0.0
    tv_at: Callable[[int], float] = field(default=_zero_tv, compare=False)
    stationary_start: bool = True

    @property
    def t_max(self) -> int:
        return max(self.t1_mix, self.t2_mix)

    @property
    def contraction(self) -> float:
        return 1.0 - self.alpha * (1.0 - self.gamma) * self.mu_min

    def with_(self, **kw) -> "BoundInputs":
        return replace(self, **kw)


def _require_hypotheses(b: BoundInputs):
    if b.buffer_n <= b.t_max:
        raise HypothesisViolated(f"N={b.buffer_n} must exceed max(t1, t2)={b.t_max}")


def first_moment_bound(b: BoundInputs, k: int = 0) -> float:
    """Upper bound on ``E ||w(M_k, V_k)||_2``."""
    s, a = b.n_states, b.n_actions
    scale = 4.0 * math.sqrt(s) * b.r_max / (1.0 - b.gamma)
    return scale * (2.0 * math.sqrt(2.0 * math.log(2 * s) / b.batch_l)
                    + 3.0 * s**2 * a * math.sqrt(b.t_max / b.buffer_n)
                    + 16.0 * s * b.tv_at(k))


def second_moment_bound(b: BoundInputs, k: int = 0) -> float:
    """Upper bound on ``E ||w(M_k, V_k)||_2^2``."""
    s, a = b.n_states, b.n_actions
    scale = 4.0 * s * b.r_max**2 / (1.0 - b.gamma) ** 2
    return scale * (4.0 * s / b.batch_l
                    + 4.0 * s**4 * a**2 * b.t_max / b.buffer_n
                    + 8.0 * s * b.tv_at(k))


@dataclass(frozen=True)
class AvgIterateBound:
    transient: float
    e1: float
    e2: float
    e3: float
    e4: float

    @property
    def total(self) -> float:
        return self.transient + self.e1 + self.e2 + self.e3 + self.e4

    def terms(self) -> dict:
        return {"transient": self.transient, "e1": self.e1, "e2": self.e2, "e3": self.e3, "e4": self.e4}


def avg_iterate_bound(b: BoundInputs, variant: str = "main") -> AvgIterateBound:
    """Bound on ``(1/T) sum_{k<T} E ||V_k - V^pi||^2``.

    ``variant="alt_log"`` swaps the concentration factor
    ``sqrt(8 log(2|S|)/L)`` for ``sqrt(log(8|S|)/L)``, an alternative
    constant kept for sensitivity reporting only.
    """
    _require_hypotheses(b)
    s, a, t = b.n_states, b.n_actions, b.horizon_t
    if t <= 0:
        raise HypothesisViolated("horizon T must be positive")
    denom = (1.0 - b.gamma) ** 3 * b.mu_min
    c1 = 32.0 * s**2 * b.r_max**2 / denom
    c2 = 4.0 * s**2 * b.r_max**2 / denom
    if variant == "main":
        conc = math.sqrt(8.0 * math.log(2 * s) / b.batch_l)
    elif variant == "alt_log":
        conc = math.sqrt(math.log(8 * s) / b.batch_l)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return AvgIterateBound(
        transient=(1.0 / t) * (2.0 * s / (b.alpha * (1.0 - b.gamma))) * b.v0_err_sq,
        e1=c1 * conc,
        e2=c1 * (2.0 * s**1.5 * a * math.sqrt(b.t_max / b.buffer_n) + 64.0 * b.t1_mix / t),
        e3=b.alpha * c2 * (4.0 * s / b.batch_l),
        e4=b.alpha * c2 * (4.0 * s**4 * a**2 * b.t_max / b.buffer_n + 32.0 * b.t1_mix / t),
    )


def avg_iterate_bound_rms(b: BoundInputs, variant: str = "main") -> AvgIterateBound:
    """Square-rooted terms bounding ``E ||(1/T) sum_{k<T} V_k - V^pi||_2``.

    Each returned term is the square root of the matching mean-square term;
    the transient uses ``||V_0 - V^pi||_2`` (deterministic ``V_0``).
    """
    sq = avg_iterate_bound(b, variant)
    return AvgIterateBound(*(math.sqrt(x) for x in (sq.transient, sq.e1, sq.e2, sq.e3, sq.e4)))


@dataclass(frozen=True)
class FinalIterateBound:
    transient: float
    e1f: float
    e2f: float
    e3f: float
    e4f: float

    @property
    def noise_floor(self) -> float:
        return self.e1f + self.e2f + self.e3f + self.e4f

    @property
    def total(self) -> float:
        return self.transient + self.noise_floor

    def terms(self) -> dict:
        return {"transient": self.transient, "e1f": self.e1f, "e2f": self.e2f, "e3f": self.e3f, "e4f": self.e4f}


def _require_stationary(b: BoundInputs):
    if not b.stationary_start:
        raise NonStationaryStart("final-iterate bounds need S_{-N} drawn from the stationary distribution")


def final_iterate_bound(b: BoundInputs, k: int) -> FinalIterateBound:
    """Bound on ``E ||V_k - V^pi||_2^2`` for a stationary start."""
    _require_stationary(b)
    s, a = b.n_states, b.n_actions
    denom = (1.0 - b.gamma) ** 3 * b.mu_min
    r2 = b.r_max**2
    c = 2.0 * s**1.5 * r2 / denom
    return FinalIterateBound(
        transient=b.v0_err_sq * s * b.contraction ** (2 * k + 2),
        e1f=c * math.sqrt(8.0 * math.log(2 * s) / b.batch_l),
        e2f=4.0 * s**3 * a * r2 / denom * math.sqrt(b.t_max / b.buffer_n),
        e3f=b.alpha * c * 4.0 * s / b.batch_l,
        e4f=b.alpha * 4.0 * s**5.5 * a**2 * r2 / denom * b.t_max / b.buffer_n,
    )


def final_iterate_bound_rms(b: BoundInputs, k: int) -> float:
    """Bound on ``E ||V_k - V^pi||_2`` for a stationary start."""
    _require_stationary(b)
    s, a = b.n_states, b.n_actions
    lead = math.sqrt(2.0) * s**0.75 * b.r_max / ((1.0 - b.gamma) ** 1.5 * math.sqrt(b.mu_min))
    transient = math.sqrt(s) * math.sqrt(b.v0_err_sq) * b.contraction ** (k + 1)
    bias = lead * 2.0 * math.sqrt(math.sqrt(8.0 * math.log(2 * s) / b.batch_l)
                                  + 2.0 * s**1.5 * a * math.sqrt(b.t_max / b.buffer_n))
    var = math.sqrt(b.alpha) * lead * math.sqrt(4.0 * s / b.batch_l + 2.0 * s**4 * a**2 * b.t_max / b.buffer_n)
    return transient + bias + var


def bernstein_mean_bound(sigma: float, x_max: float, d1: int, d2: int, n: int) -> float:
    """Matrix Bernstein bound on ``E ||(1/n) sum X_k - E X||_2``."""
    lg = math.log(d1 + d2)
    return math.sqrt(2.0 * sigma * lg / n) + 2.0 * x_max * lg / (3.0 * n)


def bernstein_second_moment_bound(sigma: float, x_max: float, d1: int, d2: int, n: int) -> float:
    """Bound on ``E ||(1/n) sum X_k - E X||_2^2``."""
    d = d1 + d2
    return 2.0 * sigma * d / n + 8.0 * x_max**2 * d / (9.0 * n**2)


@dataclass(frozen=True)
class DistributionBounds:
    """Right-hand sides for buffer-vs-stationary operator errors at step ``k``."""

    d_first: float
    dp_first: float
    dr_first: float
    d_second: float
    dp_second: float
    dr_second: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def distribution_bounds(b: BoundInputs, k: int = 0) -> DistributionBounds:
    s, a, n, r = b.n_states, b.n_actions, b.buffer_n, b.r_max
    tv = b.tv_at(k)
    t1, t2 = b.t1_mix, b.t2_mix
    return DistributionBounds(
        d_first=math.sqrt(s) * math.sqrt(t1 / n) + 4.0 * tv,
        dp_first=s * math.sqrt(t2 / n) + 4.0 * math.sqrt(s) * tv,
        dr_first=s**2.5 * a * r * math.sqrt(t2 / n) + 2.0 * math.sqrt(s) * r * tv,
        d_second=s * t1 / n + 8.0 * tv,
        dp_second=s**2 * t2 / n + 2.0 * s * tv,
        dr_second=s**5 * a**2 * r**2 * t2 / n + 2.0 * s * r**2 * tv,
    )


def var_emp_bounds(n_states: int, t_mix: int, n: int):
    """``(|S| t/n, |S| sqrt(t/n))``: squared-error and TV bounds for an empirical occupancy."""
    return n_states * t_mix / n, n_states * math.sqrt(t_mix / n)
