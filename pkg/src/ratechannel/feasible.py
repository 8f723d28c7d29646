"""Linear feasibility systems over the probability simplex.

Builders for the classical and quantum-classical reconstruction-distribution
sets, the SVD pseudoinverse, and the active-set projection of an approximately
feasible point onto the exact feasible set with its analytic l1 bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InfeasibleError, ValidationError
from .prob import Channel, Pmf
from .quantum import (
    CqChannel,
    DensityOperator,
    SubsystemLayout,
    canonical_purification,
    partial_trace,
)

_RANK_TOL = 1e-10
_FEAS_TOL = 1e-9

__all__ = [
    "LinearFeasibility",
    "ProjectionResult",
    "classical_feasibility",
    "quantum_feasibility",
    "pseudoinverse",
    "project_to_feasible",
]


def _is_ones_row(row: np.ndarray, rhs: float) -> bool:
    return bool(np.all(row == 1.0) and rhs == 1.0)


@dataclass(frozen=True)
class LinearFeasibility:
    """Equality system A x = b intersected with the simplex {x >= 0}.

    The normalization row (all ones, right-hand side 1) is part of the system
    and must appear exactly once.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValidationError(f"A must be a non-empty matrix, got shape {a.shape}")
        if b.shape != (a.shape[0],):
            raise ValidationError("b length must match the number of rows of A")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValidationError("system entries must be finite")
        ones = sum(1 for i in range(a.shape[0]) if _is_ones_row(a[i], b[i]))
        if ones != 1:
            raise ValidationError(f"normalization row must appear exactly once, found {ones}")
        a = a.copy()
        b = b.copy()
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_rows(self) -> int:
        return int(self.a.shape[0])

    @property
    def n_vars(self) -> int:
        return int(self.a.shape[1])


def _with_ones_row(rows: list[np.ndarray], rhs: list[float], n_vars: int) -> LinearFeasibility:
    a = np.vstack(rows + [np.ones(n_vars)]) if rows else np.ones((1, n_vars))
    b = np.asarray(rhs + [1.0])
    return LinearFeasibility(a, b)


def classical_feasibility(p_x: Pmf, w: Channel) -> LinearFeasibility:
    """System over P_Y whose mixtures through the backward channel hit ``p_x``.

    ``w`` maps reconstruction symbols y (rows) to source distributions over x
    (columns): one equality row per source symbol, sum_y P_Y(y) W(x|y) = P_X(x),
    plus the normalization row.
    """
    if w.n_outputs != p_x.size:
        raise ValidationError(
            f"channel outputs ({w.n_outputs}) must match the source alphabet ({p_x.size})"
        )
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    for x in range(p_x.size):
        row = w.rows[:, x].copy()
        if _is_ones_row(row, float(p_x.probs[x])):
            continue  # identical to the normalization row; keep that one only
        rows.append(row)
        rhs.append(float(p_x.probs[x]))
    return _with_ones_row(rows, rhs, w.n_inputs)


def _independent_rows(a: np.ndarray, b: np.ndarray, tol: float = _RANK_TOL):
    """Greedy selection of rows of [A|b] that grow the rank (Gram-Schmidt)."""
    kept: list[int] = []
    basis: list[np.ndarray] = []
    for i in range(a.shape[0]):
        v = np.concatenate([a[i], [b[i]]])
        r = v.copy()
        for u in basis:
            r = r - np.dot(r, u) * u
        norm = np.linalg.norm(r)
        if norm > tol * max(1.0, np.linalg.norm(v)):
            kept.append(i)
            basis.append(r / norm)
    return kept


def quantum_feasibility(
    rho_ab: DensityOperator,
    layout_ab: SubsystemLayout,
    w: CqChannel,
    a_label: str = "A",
    b_label: str = "B",
) -> LinearFeasibility:
    """System over P_X whose channel mixture reproduces the purified target.

    The target is the reduction of the canonical purification of ``rho_ab``
    onto (reference, side-information); each independent real or imaginary
    matrix entry of the equality contributes one row, redundant rows are
    removed by rank filtering, and the normalization row is appended.
    """
    d_a = layout_ab.dim_of(a_label)
    d_b = layout_ab.dim_of(b_label)
    if layout_ab.total_dim != rho_ab.dim:
        raise ValidationError("layout does not match the density operator dimension")
    psi = canonical_purification(rho_ab)
    pur_layout = SubsystemLayout((("Rpur", rho_ab.dim), (a_label, d_a), (b_label, d_b)))
    target = partial_trace(psi.projector(), pur_layout, {"Rpur", b_label})
    d = target.dim
    if w.dim != d:
        raise ValidationError(
            f"channel state dimension {w.dim} does not match the purified target {d}"
        )

    k = w.size
    stacked = np.stack([s.matrix for s in w.states])  # (k, d, d)
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    for i in range(d):
        for j in range(i, d):
            rows.append(stacked[:, i, j].real.copy())
            rhs.append(float(target.matrix[i, j].real))
            if j > i:
                rows.append(stacked[:, i, j].imag.copy())
                rhs.append(float(target.matrix[i, j].imag))
    a = np.asarray(rows)
    b = np.asarray(rhs)
    # seed the filter with the normalization row so dependent rows drop first
    seeded_a = np.vstack([np.ones(k), a])
    seeded_b = np.concatenate([[1.0], b])
    kept = _independent_rows(seeded_a, seeded_b)
    kept = [i - 1 for i in kept if i > 0]
    return _with_ones_row([a[i] for i in kept], [float(b[i]) for i in kept], k)


def pseudoinverse(m: np.ndarray, cutoff: float = 1e-11) -> np.ndarray:
    """Moore-Penrose inverse via SVD; singular values below cutoff*s_max vanish."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValidationError("pseudoinverse expects a matrix")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((m.shape[1], m.shape[0]))
    inv = np.where(s > cutoff * s[0], 1.0 / np.where(s > 0, s, 1.0), 0.0)
    return (vt.T * inv) @ u.T


def _smallest_positive_singular_value(m: np.ndarray, cutoff: float = 1e-11) -> float:
    s = np.linalg.svd(m, compute_uv=False)
    s = s[s > cutoff * (s[0] if s.size else 1.0)]
    if s.size == 0:
        raise ValidationError("matrix has no nonzero singular values")
    return float(s[-1])


@dataclass(frozen=True)
class ProjectionResult:
    """Outcome of the simplex-constrained projection.

    ``bound`` is the analytic l1 bound delta*sqrt(beta)/sigma_min of the final
    (possibly column-restricted) system actually used; ``bound_initial`` is the
    same quantity for the unrestricted system.
    """

    x: np.ndarray
    l1_distance: float
    bound: float
    bound_initial: float
    active_set: tuple[int, ...]
    iterations: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.x, dtype=float).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "x", arr)


def project_to_feasible(
    sys: LinearFeasibility,
    x0,
    feas_tol: float = _FEAS_TOL,
) -> ProjectionResult:
    """Project ``x0`` (a simplex point) onto {x >= 0, Ax = b}.

    Computes the minimum-2-norm correction w = x0 - pinv(A)(A x0 - b); while w
    has negative coordinates they join the active set, those coordinates are
    pinned to zero, and the correction is recomputed on the free coordinates
    (the active set only grows, so at most beta rounds).  Raises
    InfeasibleError when b is not in the column space of A.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    beta = sys.n_vars
    if x0.shape != (beta,):
        raise ValidationError(f"x0 must have length {beta}")
    if np.any(x0 < -1e-12):
        raise ValidationError("x0 must be entrywise non-negative")
    if abs(x0.sum() - 1.0) > 1e-9:
        raise ValidationError(f"x0 must sum to 1, got {x0.sum()!r}")

    # drop linearly dependent (consistent) rows before projecting
    kept = _independent_rows(sys.a, sys.b)
    a_full = sys.a[kept]
    b_full = sys.b[kept]

    lsq = np.linalg.lstsq(a_full, b_full, rcond=None)[0]
    residual = float(np.linalg.norm(a_full @ lsq - b_full))
    if residual > feas_tol:
        raise InfeasibleError(
            f"right-hand side is not in the column space of A (residual {residual:.3e})"
        )

    delta = float(np.abs(sys.a @ x0 - sys.b).sum())
    sigma_initial = _smallest_positive_singular_value(a_full)
    bound_initial = delta * np.sqrt(beta) / sigma_initial

    active: set[int] = set()
    x = None
    iterations = 0
    sigma_final = sigma_initial
    for _ in range(beta + 1):
        iterations += 1
        free = np.asarray([i for i in range(beta) if i not in active], dtype=int)
        if free.size == 0:
            raise InfeasibleError("active set grew to all coordinates; no feasible point found")
        a_free = a_full[:, free]
        w = x0[free] - pseudoinverse(a_free) @ (a_free @ x0[free] - b_full)
        x = np.zeros(beta)
        x[free] = w
        if np.all(w >= -1e-12):
            x[free] = np.maximum(w, 0.0)
            sigma_final = _smallest_positive_singular_value(a_free)
            break
        negative = free[w < -1e-12]
        active.update(int(i) for i in negative)
    else:
        raise ConvergenceError(f"active-set projection did not settle within {beta} rounds")

    err = float(np.max(np.abs(sys.a @ x - sys.b)))
    if err > feas_tol:
        raise InfeasibleError(
            f"projection is not feasible after restriction (max violation {err:.3e}); "
            "the system admits no non-negative solution near x0"
        )
    l1 = float(np.abs(x - x0).sum())
    return ProjectionResult(
        x=x,
        l1_distance=l1,
        bound=float(delta * np.sqrt(beta) / sigma_final),
        bound_initial=float(bound_initial),
        active_set=tuple(sorted(active)),
        iterations=iterations,
    )
