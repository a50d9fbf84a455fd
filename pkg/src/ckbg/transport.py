"""Exact and entropic 2-Wasserstein machinery on small discrete supports.

Distances and plans are exact: the Kantorovich problem is a linear program and
the supports here never exceed a few hundred atoms, so we hand it to a
simplex-class solver and get machine-precision marginals. Barycenters are the
one place that needs regularization; those use iterative Bregman projections
in the log domain with the entropic weight annealed from 1e-1 down to the
requested epsilon, which keeps the result sharp on unit-spaced grids.

Signed inputs (convolution kernels have both lobes) are decomposed into
normalized positive and negative parts with their masses kept alongside;
``signed_w2`` compares parts of like sign and penalizes mass mismatch.

All solvers are pure functions and safe to call concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.special import logsumexp

__all__ = [
    "GridMeasure",
    "SignedGridMeasure",
    "TransportPlan",
    "solve_ot_plan",
    "w2_squared",
    "w2_squared_batch",
    "signed_w2",
    "signed_w2_batch",
    "barycenter",
    "euclidean_mean",
    "count_local_maxima",
    "demo_unimodal_family",
]

_MASS_TOL = 1e-9


def _as_support(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] not in (1, 2):
        raise ValueError(f"support must be (n,) or (n, 1 or 2), got shape {pts.shape}")
    return np.ascontiguousarray(pts)


@dataclass(frozen=True)
class GridMeasure:
    """Discrete probability measure: distinct support points with nonnegative
    masses summing to 1 (within 1e-9)."""

    support: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        pts = _as_support(self.support)
        m = np.asarray(self.mass, dtype=np.float64)
        if m.ndim != 1 or len(m) != len(pts):
            raise ValueError("mass vector length must match support size")
        if len(pts) == 0:
            raise ValueError("empty support")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(m)):
            raise ValueError("support/mass must be finite")
        if m.min() < -_MASS_TOL:
            raise ValueError(f"negative mass {m.min()}")
        if abs(m.sum() - 1.0) > _MASS_TOL:
            raise ValueError(f"masses sum to {m.sum()}, expected 1 within {_MASS_TOL}")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("support points must be distinct")
        m = np.clip(m, 0.0, None)
        object.__setattr__(self, "support", pts)
        object.__setattr__(self, "mass", np.ascontiguousarray(m))

    @property
    def size(self) -> int:
        return len(self.mass)

    @classmethod
    def from_weights(cls, support, weights) -> "GridMeasure":
        """Normalize nonnegative weights into a measure."""
        w = np.asarray(weights, dtype=np.float64)
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must have positive total mass")
        return cls(support, w / total)


@dataclass(frozen=True)
class SignedGridMeasure:
    """A signed measure split into normalized lobes plus their total masses.
    A missing lobe is represented by ``None`` and must carry zero mass."""

    positive_part: GridMeasure | None
    negative_part: GridMeasure | None
    pos_mass: float
    neg_mass: float

    def __post_init__(self):
        if self.pos_mass < 0 or self.neg_mass < 0:
            raise ValueError("lobe masses must be nonnegative")
        if self.positive_part is None and self.pos_mass != 0:
            raise ValueError("missing positive part must have zero mass")
        if self.negative_part is None and self.neg_mass != 0:
            raise ValueError("missing negative part must have zero mass")
        if self.positive_part is None and self.negative_part is None:
            raise ValueError("both parts empty")


@dataclass(frozen=True)
class TransportPlan:
    """Optimal coupling between two measures and its squared-distance cost."""

    coupling: np.ndarray
    cost: float


@lru_cache(maxsize=128)
def _marginal_matrix(n_a: int, n_b: int) -> sparse.csr_matrix:
    """Equality-constraint matrix mapping vec(pi) to (row sums, column sums)."""
    rows_r = np.repeat(np.arange(n_a), n_b)
    rows_c = n_a + np.tile(np.arange(n_b), n_a)
    cols = np.arange(n_a * n_b)
    data = np.ones(2 * n_a * n_b)
    return sparse.csr_matrix(
        (data, (np.concatenate([rows_r, rows_c]), np.concatenate([cols, cols]))),
        shape=(n_a + n_b, n_a * n_b),
    )


def _cost_matrix(a: GridMeasure, b: GridMeasure) -> np.ndarray:
    if a.support.shape[1] != b.support.shape[1]:
        raise ValueError("measures live in different dimensions")
    diff = a.support[:, None, :] - b.support[None, :, :]
    return np.einsum("abd,abd->ab", diff, diff)


def solve_ot_plan(a: GridMeasure, b: GridMeasure) -> TransportPlan:
    """Exact optimal transport under squared-Euclidean ground cost."""
    cost = _cost_matrix(a, b)
    n_a, n_b = cost.shape
    if n_a == 1:
        return TransportPlan(b.mass[None, :].copy(), float(cost[0] @ b.mass))
    if n_b == 1:
        return TransportPlan(a.mass[:, None].copy(), float(a.mass @ cost[:, 0]))
    res = linprog(
        cost.ravel(),
        A_eq=_marginal_matrix(n_a, n_b),
        b_eq=np.concatenate([a.mass, b.mass]),
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = np.clip(res.x.reshape(n_a, n_b), 0.0, None)
    return TransportPlan(plan, float((plan * cost).sum()))


def w2_squared(a: GridMeasure, b: GridMeasure) -> float:
    """Squared 2-Wasserstein distance (exact)."""
    return solve_ot_plan(a, b).cost


_BATCH_CHUNK = 512


def w2_squared_batch(pairs: list[tuple[GridMeasure, GridMeasure]]) -> np.ndarray:
    """Exact W2^2 for many measure pairs at once.

    All pairs are stacked into one block-diagonal linear program per chunk,
    which amortizes solver setup (roughly 10x faster than a Python loop for
    kernel-sized supports). Results are identical to per-pair solves.
    """
    out = np.zeros(len(pairs))
    todo: list[tuple[int, np.ndarray, np.ndarray, np.ndarray]] = []
    for idx, (a, b) in enumerate(pairs):
        cost = _cost_matrix(a, b)
        if cost.shape[0] == 1:
            out[idx] = float(cost[0] @ b.mass)
        elif cost.shape[1] == 1:
            out[idx] = float(a.mass @ cost[:, 0])
        else:
            todo.append((idx, cost, a.mass, b.mass))
    for lo in range(0, len(todo), _BATCH_CHUNK):
        chunk = todo[lo : lo + _BATCH_CHUNK]
        costs, rows, cols, rhs, spans = [], [], [], [], []
        var_off = row_off = 0
        for idx, cost, ma, mb in chunk:
            n_a, n_b = cost.shape
            costs.append(cost.ravel())
            rr = np.repeat(np.arange(n_a), n_b) + row_off
            rc = n_a + np.tile(np.arange(n_b), n_a) + row_off
            cc = np.arange(n_a * n_b) + var_off
            rows.append(np.concatenate([rr, rc]))
            cols.append(np.concatenate([cc, cc]))
            rhs.append(ma)
            rhs.append(mb)
            spans.append((idx, var_off, var_off + n_a * n_b))
            var_off += n_a * n_b
            row_off += n_a + n_b
        a_eq = sparse.csr_matrix(
            (np.ones(sum(len(r) for r in rows)), (np.concatenate(rows), np.concatenate(cols))),
            shape=(row_off, var_off),
        )
        c_all = np.concatenate(costs)
        res = linprog(c_all, A_eq=a_eq, b_eq=np.concatenate(rhs), bounds=(0, None), method="highs")
        if not res.success:
            raise RuntimeError(f"batched transport LP failed: {res.message}")
        for idx, v0, v1 in spans:
            out[idx] = float(res.x[v0:v1] @ c_all[v0:v1])
    return out


def signed_w2_batch(
    pairs: list[tuple[SignedGridMeasure, SignedGridMeasure]], lambda_mass: float = 1.0
) -> np.ndarray:
    """Batched ``signed_w2`` (same values, one LP per chunk and sign)."""
    out = np.zeros(len(pairs))
    pos_jobs: list[tuple[GridMeasure, GridMeasure]] = []
    pos_idx: list[int] = []
    neg_jobs: list[tuple[GridMeasure, GridMeasure]] = []
    neg_idx: list[int] = []
    for i, (a, b) in enumerate(pairs):
        out[i] = lambda_mass * ((a.pos_mass - b.pos_mass) ** 2 + (a.neg_mass - b.neg_mass) ** 2)
        if a.positive_part is not None and b.positive_part is not None:
            pos_jobs.append((a.positive_part, b.positive_part))
            pos_idx.append(i)
        if a.negative_part is not None and b.negative_part is not None:
            neg_jobs.append((a.negative_part, b.negative_part))
            neg_idx.append(i)
    if pos_jobs:
        costs = w2_squared_batch(pos_jobs)
        for j, i in enumerate(pos_idx):
            a, b = pairs[i]
            out[i] += 0.5 * (a.pos_mass + b.pos_mass) * costs[j]
    if neg_jobs:
        costs = w2_squared_batch(neg_jobs)
        for j, i in enumerate(neg_idx):
            a, b = pairs[i]
            out[i] += 0.5 * (a.neg_mass + b.neg_mass) * costs[j]
    return out


def signed_w2(a: SignedGridMeasure, b: SignedGridMeasure, lambda_mass: float = 1.0) -> float:
    """Distance between signed measures: like-sign lobes are compared with W2^2
    weighted by the mean lobe mass, plus ``lambda_mass`` times the squared
    difference of the lobe masses. Symmetric; zero when a = b."""
    total = lambda_mass * ((a.pos_mass - b.pos_mass) ** 2 + (a.neg_mass - b.neg_mass) ** 2)
    if a.positive_part is not None and b.positive_part is not None:
        total += 0.5 * (a.pos_mass + b.pos_mass) * w2_squared(a.positive_part, b.positive_part)
    if a.negative_part is not None and b.negative_part is not None:
        total += 0.5 * (a.neg_mass + b.neg_mass) * w2_squared(a.negative_part, b.negative_part)
    return float(total)


def _anneal_schedule(epsilon: float) -> list[float]:
    ladder = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
    stages = [e for e in ladder if e > epsilon * (1 + 1e-12)]
    stages.append(epsilon)
    return stages


def barycenter(
    measures: list[GridMeasure],
    weights,
    support,
    epsilon: float = 1e-3,
    max_iter: int = 2000,
    tol: float = 1e-6,
) -> GridMeasure:
    """Entropic Wasserstein barycenter on a fixed support.

    Minimizes sum_i weights[i] * W2^2(measures[i], out) over measures carried
    by ``support``, via log-domain iterative Bregman projections. The entropic
    weight is annealed down to ``epsilon`` (dual potentials warm-start each
    stage). Non-convergence within ``max_iter`` total iterations raises a
    warning and returns the last iterate.
    """
    if not measures:
        raise ValueError("no input measures")
    lam = np.asarray(weights, dtype=np.float64)
    if lam.ndim != 1 or len(lam) != len(measures):
        raise ValueError("weights length must match measure count")
    if abs(lam.sum() - 1.0) > _MASS_TOL:
        raise ValueError(f"weights sum to {lam.sum()}, expected 1 within {_MASS_TOL}")
    if lam.min() < 0:
        raise ValueError("weights must be nonnegative")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    grid = _as_support(support)
    n = len(grid)

    # squared-distance cost from each input's support to the shared grid
    costs = []
    log_mu = []
    for mu in measures:
        if mu.support.shape[1] != grid.shape[1]:
            raise ValueError("measure and barycenter support dimensions differ")
        diff = mu.support[:, None, :] - grid[None, :, :]
        costs.append(np.einsum("abd,abd->ab", diff, diff))
        with np.errstate(divide="ignore"):
            log_mu.append(np.log(mu.mass))

    # dual potentials in cost units, reused across annealing stages
    f = [np.zeros(len(m.mass)) for m in measures]
    g = [np.zeros(n) for _ in measures]
    log_p = np.full(n, -np.log(n))
    iters_left = max_iter
    converged = False

    for eps in _anneal_schedule(epsilon):
        converged = False
        while iters_left > 0:
            iters_left -= 1
            log_kta = []
            for i, c in enumerate(costs):
                # row projection onto marginal mu_i
                f[i] = eps * (log_mu[i] - logsumexp((g[i][None, :] - c) / eps, axis=1))
                log_kta.append(logsumexp((f[i][:, None] - c) / eps, axis=0))
            new_log_p = np.zeros(n)
            for i in range(len(measures)):
                new_log_p += lam[i] * (g[i] / eps + log_kta[i])
            for i in range(len(measures)):
                g[i] = eps * (new_log_p - log_kta[i])
            delta = np.abs(np.exp(new_log_p) - np.exp(log_p)).sum()
            log_p = new_log_p
            if delta < tol:
                converged = True
                break
        if not converged:
            break

    if not converged:
        warnings.warn(
            f"barycenter did not converge within {max_iter} iterations "
            f"(epsilon={epsilon}); returning last iterate",
            RuntimeWarning,
        )
    p = np.exp(log_p)
    total = p.sum()
    if not np.isfinite(total) or total <= 0:
        raise RuntimeError("barycenter iterate degenerated to zero mass")
    return GridMeasure(grid, p / total)


def euclidean_mean(measures: list[GridMeasure], weights) -> GridMeasure:
    """Pointwise weighted average of mass vectors on a shared support."""
    if not measures:
        raise ValueError("no input measures")
    lam = np.asarray(weights, dtype=np.float64)
    if len(lam) != len(measures) or abs(lam.sum() - 1.0) > _MASS_TOL:
        raise ValueError("weights must match measure count and sum to 1")
    ref = measures[0].support
    mass = np.zeros(len(ref))
    for mu, w in zip(measures, lam):
        if mu.support.shape != ref.shape or not np.array_equal(mu.support, ref):
            raise ValueError("euclidean_mean requires a shared support")
        mass += w * mu.mass
    return GridMeasure(ref, mass / mass.sum())


def count_local_maxima(mass: np.ndarray, threshold: float = 1e-3) -> int:
    """Strict interior local maxima of a 1-D mass vector above a threshold;
    plateau runs count once. Endpoints count when they exceed their neighbor."""
    m = np.asarray(mass, dtype=np.float64)
    n = len(m)
    count = 0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and m[j + 1] == m[i]:
            j += 1
        left_ok = i == 0 or m[i - 1] < m[i]
        right_ok = j == n - 1 or m[j + 1] < m[i]
        if left_ok and right_ok and m[i] > threshold:
            count += 1
        i = j + 1
    return count


def demo_unimodal_family(
    n_measures: int = 6,
    n_points: int = 256,
    seed: int = 0,
    sigma: float = 6.0,
    spread: float = 0.75,
) -> list[GridMeasure]:
    """Well-separated shifted copies of one unimodal bump on an integer-index
    lattice, for the mean-vs-barycenter comparison demo."""
    if n_measures < 1:
        raise ValueError("need at least one measure")
    rng = np.random.default_rng(seed)
    xs = np.arange(n_points, dtype=np.float64)
    lo, hi = n_points * (0.5 - spread / 2), n_points * (0.5 + spread / 2)
    centers = np.linspace(lo, hi, n_measures) + rng.uniform(-2.0, 2.0, size=n_measures)
    out = []
    for c in centers:
        bump = np.exp(-0.5 * ((xs - c) / sigma) ** 2)
        out.append(GridMeasure.from_weights(xs, bump))
    return out
