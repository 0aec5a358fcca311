"""Rate-function upper bound and empirical rate-function estimation.

The bound combines a service-starvation exponent with arrival-burst exponents:
``I_U(b) = min{(b+1) I_X, min_c I_AG(b-c) + c I_X}`` where ``I_X = log 1/(1-q)``
and ``I_AG(x)`` is the infimum over window lengths t of the decay rate of
"arrivals over t slots exceed n(t+x)".  For i.i.d. 0-L arrivals the per-window
rate has the closed form ``t * D((t+x)/(Lt) || alpha)`` on the feasible band;
the event is impossible (rate +inf) once ``t+x >= Lt`` because per-slot arrivals
are bounded, which is what makes the bound collapse to ``(b+1) I_X`` for L = 1.
Markov-modulated arrivals go through a numeric Chernoff bound instead (transfer
-matrix log-MGF plus a Legendre transform).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .model import ArrivalSpec, IidBernoulli0L, TwoStateMarkov


class AnalysisError(ValueError):
    pass


class EstimationError(AnalysisError):
    """Too few usable points to estimate a rate function."""


def i_x(q: float) -> float:
    """Decay rate of one queue being disconnected from all n servers for a slot."""
    if not (0.0 < q < 1.0):
        raise AnalysisError(f"q must be in (0, 1), got {q}")
    return -math.log1p(-q)


def kl_bernoulli(x: float, y: float) -> float:
    """D(x || y) for Bernoulli distributions, with the 0 log 0 = 0 convention."""
    if not (0.0 <= x <= 1.0):
        raise AnalysisError(f"x must be in [0, 1], got {x}")
    if not (0.0 < y < 1.0):
        raise AnalysisError(f"y must be in (0, 1), got {y}")
    out = 0.0
    if x > 0.0:
        out += x * math.log(x / y)
    if x < 1.0:
        out += (1.0 - x) * math.log((1.0 - x) / (1.0 - y))
    return out


@dataclass(frozen=True)
class IagResult:
    value: float
    t_star: int | None
    interior: bool          # minimizer strictly inside [1, t_max] (or exact)


def _iag_rate_iid(alpha: float, L: int, x: float, t: int) -> float:
    a = (t + x) / (L * t)
    if a >= 1.0:
        return math.inf      # bounded support: cannot strictly exceed L per queue-slot
    if a <= alpha:
        return 0.0
    return t * kl_bernoulli(a, alpha)


def _two_state_log_mgf(transition, amounts, theta: float, t: int) -> float:
    """log E[exp(theta * S_t)] for a stationary 2-state chain emitting
    ``amounts[state]`` per slot; scaled to avoid overflow."""
    p = np.asarray(transition, dtype=np.float64)
    a = np.asarray(amounts, dtype=np.float64)
    a_max = a.max()
    pi0 = p[1, 0] / (p[0, 1] + p[1, 0])
    pi = np.array([pi0, 1.0 - pi0])
    d = np.exp(theta * (a - a_max))
    v = pi * d
    log_scale = theta * a_max
    for _ in range(t - 1):
        v = (v @ p) * d
        log_scale += theta * a_max
        s = v.sum()
        v /= s
        log_scale += math.log(s)
    return log_scale + math.log(v.sum())


def _iag_rate_markov(spec: TwoStateMarkov, x: float, t: int) -> float:
    a_max = spec.burst
    if t + x >= t * a_max:
        return math.inf
    if t + x <= t * spec.mean_rate:
        return 0.0

    def neg_gain(theta: float) -> float:
        return -(theta * (t + x) - _two_state_log_mgf(spec.transition, (spec.burst, 0),
                                                      theta, t))

    hi = 1.0
    while -neg_gain(hi) >= -neg_gain(hi / 2.0) and hi < 1e5:
        hi *= 2.0
    res = minimize_scalar(neg_gain, bounds=(0.0, hi), method="bounded",
                          options={"xatol": 1e-10})
    return max(0.0, -float(res.fun))


def i_ag(arrival: ArrivalSpec, x: float, t_max: int = 200) -> IagResult:
    """inf over t in [1, t_max] of the t-window arrival-burst decay rate."""
    if t_max < 1:
        raise AnalysisError(f"t_max must be >= 1, got {t_max}")
    if x < 0:
        raise AnalysisError(f"x must be >= 0, got {x}")
    best = math.inf
    t_star: int | None = None
    for t in range(1, t_max + 1):
        if isinstance(arrival, IidBernoulli0L):
            r = _iag_rate_iid(arrival.alpha, arrival.L, x, t)
        else:
            r = _iag_rate_markov(arrival, x, t)
        if r < best:
            best = r
            t_star = t
        if best == 0.0:
            break
    interior = math.isinf(best) or best == 0.0 or (t_star is not None and t_star < t_max)
    return IagResult(value=best, t_star=t_star, interior=interior)


@dataclass(frozen=True)
class BoundInputs:
    q: float
    b: int
    arrival: ArrivalSpec
    t_max: int = 200

    def validate(self) -> None:
        if not (0.0 < self.q < 1.0):
            raise AnalysisError(f"q must be in (0, 1), got {self.q}")
        if self.b < 0 or int(self.b) != self.b:
            raise AnalysisError(f"b must be a nonnegative integer, got {self.b}")
        self.arrival.validate()


@dataclass(frozen=True)
class BranchValue:
    kind: str            # "service" (E1) or "arrival+service" (E2^c)
    c: int | None
    value: float
    iag: IagResult | None = None


@dataclass(frozen=True)
class IuResult:
    value: float
    argmin: BranchValue
    branches: tuple[BranchValue, ...]


def i_u(inputs: BoundInputs) -> IuResult:
    """Rate-function upper bound over all scheduling policies, with the argmin
    branch (pure service starvation vs burst-then-starvation at lag c)."""
    inputs.validate()
    ix = i_x(inputs.q)
    b = int(inputs.b)
    branches = [BranchValue("service", None, (b + 1) * ix)]
    for c in range(0, b + 1):
        res = i_ag(inputs.arrival, float(b - c), inputs.t_max)
        branches.append(BranchValue("arrival+service", c, res.value + c * ix, res))
    best = min(branches, key=lambda br: br.value)
    return IuResult(value=best.value, argmin=best, branches=tuple(branches))


# ---------------------------------------------------------------------------
# Empirical rate-function estimation
# ---------------------------------------------------------------------------

MIN_VIOLATIONS = 5


@dataclass(frozen=True)
class FitPoint:
    n: int
    violations: int
    samples: int
    y: float             # -log(violations / samples)


@dataclass(frozen=True)
class DroppedPoint:
    n: int
    violations: int
    samples: int
    reason: str


@dataclass(frozen=True)
class RateFunctionEstimate:
    b: int
    slope: float                     # Ihat(b)
    stderr: float
    intercept: float
    points: tuple[FitPoint, ...]
    dropped: tuple[DroppedPoint, ...]


def estimate_rate_function(points, b: int, label: str = "") -> RateFunctionEstimate:
    """Unweighted least squares of -log Phat against n.

    Points with fewer than MIN_VIOLATIONS violations are excluded (relative
    error control; zero counts would yield infinite logs) and reported in
    ``dropped``.  Raises EstimationError with the offending label when fewer
    than two usable points (or a single distinct n) remain.
    """
    used: list[FitPoint] = []
    dropped: list[DroppedPoint] = []
    for (n, violations, samples) in points:
        n, violations, samples = int(n), int(violations), int(samples)
        if samples <= 0:
            dropped.append(DroppedPoint(n, violations, samples, "no samples"))
        elif violations < MIN_VIOLATIONS:
            reason = "zero violations" if violations == 0 else \
                f"fewer than {MIN_VIOLATIONS} violations (Phat < {MIN_VIOLATIONS}/{samples})"
            dropped.append(DroppedPoint(n, violations, samples, reason))
        else:
            used.append(FitPoint(n, violations, samples,
                                 -math.log(violations / samples)))
    tag = f" for {label}" if label else ""
    if len(used) < 2:
        raise EstimationError(
            f"rate-function estimation impossible{tag} at b={b}: "
            f"{len(used)} usable point(s) after the count >= {MIN_VIOLATIONS} filter")
    xs = np.array([p.n for p in used], dtype=np.float64)
    ys = np.array([p.y for p in used], dtype=np.float64)
    sxx = float(((xs - xs.mean()) ** 2).sum())
    if sxx == 0.0:
        raise EstimationError(
            f"rate-function estimation impossible{tag} at b={b}: "
            "all usable points share one n")
    slope = float(((xs - xs.mean()) * (ys - ys.mean())).sum() / sxx)
    intercept = float(ys.mean() - slope * xs.mean())
    m = len(used)
    if m > 2:
        ssr = float(((ys - (intercept + slope * xs)) ** 2).sum())
        stderr = math.sqrt(ssr / (m - 2) / sxx)
    else:
        stderr = math.inf   # two points fit exactly; no residual dof
    return RateFunctionEstimate(b=b, slope=slope, stderr=stderr, intercept=intercept,
                                points=tuple(used), dropped=tuple(dropped))
