"""Uniform temporal grid, the one-sided second-difference operator, and the
discrete identities it satisfies.

The second difference uses modified one-sided rows at both endpoints,
2(u^1 - u^0)/tau^2 and 2(u^{N-1} - u^N)/tau^2, which absorb the temporal
Neumann data through an explicit right-hand-side correction of size 2/tau.
With trapezoid weights w = (1/2, 1, ..., 1, 1/2) the operator satisfies the
exact summation-by-parts identity

    sum_i w_i (D_tt a^i, b^i)  =  - sum_{i>=1} (D_t a^i, D_t b^i),

which is what the tests here pin down.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch
from .metric import MeshGeometry, QuadratureRule

Array = np.ndarray


@dataclass(frozen=True)
class TimeGrid:
    """N uniform intervals on [0, 1] with trapezoid node weights."""

    n_intervals: int
    tau: float = field(init=False)
    nodes: Array = field(init=False)
    weights: Array = field(init=False)

    def __post_init__(self):
        if self.n_intervals < 1:
            raise ValueError("need at least one time interval")
        n = self.n_intervals
        object.__setattr__(self, "tau", 1.0 / n)
        object.__setattr__(self, "nodes", np.arange(n + 1) / n)
        w = np.ones(n + 1)
        w[0] = w[-1] = 0.5
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def n_nodes(self) -> int:
        return self.n_intervals + 1


def time_operator(grid: TimeGrid) -> Array:
    """Dense (N+1)x(N+1) matrix A = -D_tt (one-sided boundary rows)."""
    n = grid.n_intervals
    tau2 = grid.tau ** 2
    a = np.zeros((n + 1, n + 1))
    for i in range(1, n):
        a[i, i - 1] = -1.0 / tau2
        a[i, i] = 2.0 / tau2
        a[i, i + 1] = -1.0 / tau2
    a[0, 0] = 2.0 / tau2
    a[0, 1] = -2.0 / tau2
    a[n, n] = 2.0 / tau2
    a[n, n - 1] = -2.0 / tau2
    return a


def dtt_apply(grid: TimeGrid, seq) -> Array:
    """Apply D_tt along axis 0 of ``seq`` (length N+1 sequences)."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.shape[0] != grid.n_nodes:
        raise LengthMismatch(
            f"sequence length {seq.shape[0]} != N+1 = {grid.n_nodes}")
    tau2 = grid.tau ** 2
    out = np.empty_like(seq)
    out[1:-1] = (seq[2:] - 2.0 * seq[1:-1] + seq[:-2]) / tau2
    out[0] = 2.0 * (seq[1] - seq[0]) / tau2
    out[-1] = 2.0 * (seq[-2] - seq[-1]) / tau2
    return out


def dt_apply(grid: TimeGrid, seq) -> Array:
    """Backward differences (seq[i] - seq[i-1]) / tau for i = 1..N."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.shape[0] != grid.n_nodes:
        raise LengthMismatch(
            f"sequence length {seq.shape[0]} != N+1 = {grid.n_nodes}")
    return (seq[1:] - seq[:-1]) / grid.tau


def boundary_correction(grid: TimeGrid, mu0, mu1, i: int):
    """Right-hand-side correction b^i encoding the temporal Neumann data.

    The one-sided second difference satisfies
    D_tt u(t_0) = (2/tau) mu0 + dtt u(t_0) + O(tau), so the row i = 0 of
    -D_tt u - Lap u = f + b^0 is consistent exactly when
    b^0 = -(2/tau) mu0; the mirrored row gives b^N = +(2/tau) mu1.
    Interior corrections vanish.  ``mu0``/``mu1`` are fields (callables on
    points); returns a field or None for the zero correction.
    """
    if not 0 <= i <= grid.n_intervals:
        raise IndexError(f"time index {i} outside 0..{grid.n_intervals}")
    if i == 0:
        return lambda x: (-2.0 / grid.tau) * np.asarray(mu0(x))
    if i == grid.n_intervals:
        return lambda x: (2.0 / grid.tau) * np.asarray(mu1(x))
    return None


def summation_by_parts_check(grid: TimeGrid, alpha, beta, gram=None) -> float:
    """Residual of the summation-by-parts identity for given sequences.

    ``alpha`` and ``beta`` have shape (N+1,) or (N+1, k); ``gram`` is an
    SPD k x k matrix (or sparse operator) defining the spatial inner
    product, identity when omitted.  Returns
    | sum_i w_i (D_tt a^i, b^i) + sum_{i>=1} (D_t a^i, D_t b^i) |,
    which is zero up to roundoff.
    """
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64).T).T
    beta = np.atleast_2d(np.asarray(beta, dtype=np.float64).T).T
    if alpha.shape != beta.shape or alpha.shape[0] != grid.n_nodes:
        raise LengthMismatch("alpha/beta shapes inconsistent with the grid")

    def inner(x, y):
        gy = y if gram is None else gram @ y
        return float(x @ gy)

    dtt_a = dtt_apply(grid, alpha)
    lhs = sum(grid.weights[i] * inner(dtt_a[i], beta[i])
              for i in range(grid.n_nodes))
    dt_a = dt_apply(grid, alpha)
    dt_b = dt_apply(grid, beta)
    rhs = sum(inner(dt_a[i], dt_b[i]) for i in range(grid.n_intervals))
    return abs(lhs + rhs)


def compatibility_residual(grid: TimeGrid, mesh, surf, f, mu0, mu1,
                           rule: QuadratureRule | None = None,
                           geometry: MeshGeometry | None = None) -> float:
    """| int_T int f(t, pi(x)) dsigma dt - int (mu0 - mu1)(pi(x)) dsigma |.

    Trapezoid rule in time over the grid nodes, metric quadrature in space.
    Vanishing residual is the solvability condition of the pure-Neumann
    problem; for manufactured data it decays at the discretization order.
    """
    geo = geometry if geometry is not None else MeshGeometry(mesh, surf, rule)
    pts = geo.projected.reshape(-1, 3)
    w = geo.weights.reshape(-1)
    time_integral = sum(
        grid.weights[i] * grid.tau * float(np.sum(np.asarray(f(t, pts)) * w))
        for i, t in enumerate(grid.nodes))
    boundary = float(np.sum((np.asarray(mu0(pts)) - np.asarray(mu1(pts))) * w))
    return abs(time_integral - boundary)
