"""
Time-varying dispatch problem model.

A time slice minimizes the sum of separable node objectives subject to
per-node box bounds and a per-resource balance equation::

    min  sum_i f_i(p_i)
    s.t. lower_i <= p_i <= upper_i,   sum_i p_i = supply

Producer costs and consumer utilities are both stored in minimized form,
so a consumer objective holds the coefficients of ``-U_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

PRODUCER_COST = "producer-cost"
CONSUMER_UTILITY = "consumer-utility"
OBJECTIVE_KINDS = (PRODUCER_COST, CONSUMER_UTILITY)


class DimensionError(ValueError):
    """Raised when a vector does not match the resource dimension."""


class InfeasibleInstanceError(ValueError):
    """Raised when a time slice violates the strict-interior condition."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _readonly(a, ndim=None):
    a = np.array(a, dtype=float)
    if ndim is not None and a.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@runtime_checkable
class Objective(Protocol):
    """Strongly convex node objective with Lipschitz gradient.

    Only `QuadraticObjective` ships; other objectives can be plugged into
    evaluation and curvature code by implementing this interface.
    """

    kind: str

    @property
    def dim(self) -> int: ...

    @property
    def strong_convexity(self) -> float: ...

    @property
    def lipschitz(self) -> float: ...

    def value(self, p: np.ndarray) -> float: ...

    def gradient(self, p: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class QuadraticObjective:
    r"""
    Separable quadratic objective.

    .. math:: f(p) = \sum_j a_j (p_j - d_j)^2 + b_j

    Parameters
    ----------
    curvature : array_like
        Positive coefficients :math:`a_j`.
    target : array_like
        Targets :math:`d_j` (power).
    offset : array_like, optional
        Constant offsets :math:`b_j`, zero by default.
    kind : str, optional
        ``"producer-cost"`` or ``"consumer-utility"``. Metadata only: the
        coefficients always describe the minimized form.
    """

    curvature: np.ndarray
    target: np.ndarray
    offset: np.ndarray = None
    kind: str = PRODUCER_COST

    def __post_init__(self):
        a = _readonly(np.atleast_1d(self.curvature), 1)
        d = _readonly(np.atleast_1d(self.target), 1)
        b = np.zeros_like(a) if self.offset is None else np.atleast_1d(self.offset)
        b = _readonly(b, 1)
        if not (a.shape == d.shape == b.shape):
            raise DimensionError(
                f"coefficient shapes differ: a{a.shape}, d{d.shape}, b{b.shape}")
        if not np.all(a > 0):
            raise ValueError("curvature coefficients must be strictly positive")
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        object.__setattr__(self, "curvature", a)
        object.__setattr__(self, "target", d)
        object.__setattr__(self, "offset", b)

    @property
    def dim(self):
        return self.curvature.shape[0]

    @property
    def strong_convexity(self):
        return 2.0 * float(self.curvature.min())

    @property
    def lipschitz(self):
        return 2.0 * float(self.curvature.max())

    def _check(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dim,):
            raise DimensionError(
                f"expected a vector of length {self.dim}, got shape {p.shape}")
        return p

    def value(self, p):
        p = self._check(p)
        return float(np.sum(self.curvature * (p - self.target) ** 2 + self.offset))

    def utility(self, p):
        """Utility ``U = -f``; meaningful for consumer objectives."""
        return -self.value(p)

    def gradient(self, p):
        p = self._check(p)
        return 2.0 * self.curvature * (p - self.target)

    def prox_linear(self, linear, rho, center):
        """Unconstrained ``argmin f(p) + linear.p + rho/2 |p - center|^2``."""
        two_a = 2.0 * self.curvature
        return (two_a * self.target - linear + rho * center) / (two_a + rho)

    def response(self, price):
        """Unconstrained ``argmin f(p) + price.p``."""
        return self.target - price / (2.0 * self.curvature)


def eval_objective(obj, p):
    """Evaluate a node objective in minimized form."""
    return obj.value(p)


def eval_gradient(obj, p):
    """Gradient of a node objective in minimized form."""
    return obj.gradient(p)


@dataclass(frozen=True)
class Violation:
    kind: str  # "box-order" | "lower-sum" | "upper-sum"
    node: int | None
    coordinate: int
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "ok"
        return "; ".join(v.detail for v in self.violations)


def feasibility_report(lower, upper, supply):
    """
    Check box ordering and strict interior feasibility.

    Every coordinate must satisfy ``lower <= upper`` per node and
    ``sum(lower) < supply < sum(upper)`` per resource, with no tolerance.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    supply = np.atleast_1d(np.asarray(supply, dtype=float))
    out = []
    bad = np.argwhere(~(lower <= upper))
    for i, j in bad:
        out.append(Violation(
            "box-order", int(i), int(j),
            f"node {i} coord {j}: lower {lower[i, j]!r} > upper {upper[i, j]!r}"))
    lo_sum, hi_sum = lower.sum(axis=0), upper.sum(axis=0)
    for j in range(supply.shape[0]):
        if not lo_sum[j] < supply[j]:
            out.append(Violation(
                "lower-sum", None, j,
                f"coord {j}: sum of lower bounds {lo_sum[j]!r} "
                f"is not < supply {supply[j]!r}"))
        if not supply[j] < hi_sum[j]:
            out.append(Violation(
                "upper-sum", None, j,
                f"coord {j}: supply {supply[j]!r} is not < "
                f"sum of upper bounds {hi_sum[j]!r}"))
    return ValidationReport(tuple(out))


def validate_instance(instance):
    return feasibility_report(instance.lower, instance.upper, instance.supply)


@dataclass(frozen=True)
class DispatchInstance:
    """
    One time slice of the dispatch problem.

    Nodes ``0..n_producers-1`` are producers and the rest are consumers;
    the split is carried as metadata only. Construction fails with
    `InfeasibleInstanceError` unless the strict interior condition holds.
    """

    k: int
    objectives: tuple
    lower: np.ndarray
    upper: np.ndarray
    supply: np.ndarray
    n_producers: int = None

    def __post_init__(self):
        objectives = tuple(self.objectives)
        if not objectives:
            raise ValueError("an instance needs at least one node")
        lower = _readonly(self.lower, 2)
        upper = _readonly(self.upper, 2)
        supply = _readonly(np.atleast_1d(self.supply), 1)
        n, r = len(objectives), supply.shape[0]
        if lower.shape != (n, r) or upper.shape != (n, r):
            raise DimensionError(
                f"bounds must have shape ({n}, {r}); got {lower.shape}, {upper.shape}")
        for i, obj in enumerate(objectives):
            if obj.dim != r:
                raise DimensionError(f"objective {i} has dimension {obj.dim}, expected {r}")
        m = n if self.n_producers is None else int(self.n_producers)
        if not 0 <= m <= n:
            raise ValueError(f"n_producers must lie in [0, {n}], got {m}")
        object.__setattr__(self, "objectives", objectives)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "supply", supply)
        object.__setattr__(self, "n_producers", m)
        report = validate_instance(self)
        if not report.ok:
            raise InfeasibleInstanceError(f"instance k={self.k}: {report}", report)

    @property
    def n_nodes(self):
        return len(self.objectives)

    @property
    def n_resources(self):
        return self.supply.shape[0]

    def with_k(self, k):
        return DispatchInstance(k, self.objectives, self.lower, self.upper,
                                self.supply, self.n_producers)

    def total_objective(self, p):
        p = np.asarray(p, dtype=float)
        return sum(obj.value(p[i]) for i, obj in enumerate(self.objectives))

    def gradients(self, p):
        p = np.asarray(p, dtype=float)
        return np.stack([obj.gradient(p[i]) for i, obj in enumerate(self.objectives)])

    def box_midpoints(self):
        return 0.5 * (self.lower + self.upper)


def curvature_bounds(instance):
    """Return ``(sigma, L)``: the smallest modulus and largest Lipschitz constant."""
    sigma = min(obj.strong_convexity for obj in instance.objectives)
    lip = max(obj.lipschitz for obj in instance.objectives)
    return sigma, lip


@dataclass(frozen=True)
class Scenario:
    """Sequence of time slices sharing N, M and R."""

    instances: tuple
    source: str = "synthetic"
    seed: int | None = None
    step_minutes: float = 5.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        instances = tuple(self.instances)
        if not instances:
            raise ValueError("a scenario needs at least one instance")
        shape = (instances[0].n_nodes, instances[0].n_producers, instances[0].n_resources)
        for t, inst in enumerate(instances):
            if (inst.n_nodes, inst.n_producers, inst.n_resources) != shape:
                raise ValueError(f"instance {t} has (N, M, R) differing from {shape}")
            if inst.k != t:
                raise ValueError(f"instance at position {t} has k={inst.k}")
        object.__setattr__(self, "instances", instances)

    def __len__(self):
        return len(self.instances)

    def __getitem__(self, k):
        return self.instances[k]

    def __iter__(self):
        return iter(self.instances)

    @property
    def n_nodes(self):
        return self.instances[0].n_nodes

    @property
    def n_resources(self):
        return self.instances[0].n_resources

    @property
    def n_producers(self):
        return self.instances[0].n_producers


def quadratic_instance(k, curvature, target, lower, upper, supply,
                       n_producers=None, kinds: Sequence[str] | None = None):
    """Build an instance from ``(N, R)`` arrays of quadratic coefficients."""
    curvature = np.asarray(curvature, dtype=float)
    target = np.asarray(target, dtype=float)
    if curvature.ndim == 1:
        curvature = curvature[:, None]
    if target.ndim == 1:
        target = target[:, None]
    curvature = np.broadcast_to(curvature, target.shape)
    n = target.shape[0]
    m = n if n_producers is None else n_producers
    if kinds is None:
        kinds = [PRODUCER_COST if i < m else CONSUMER_UTILITY for i in range(n)]
    objs = tuple(QuadraticObjective(curvature[i], target[i], kind=kinds[i])
                 for i in range(n))
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.ndim == 1:
        lower = lower[:, None]
    if upper.ndim == 1:
        upper = upper[:, None]
    return DispatchInstance(k, objs, lower, upper, supply, m)
