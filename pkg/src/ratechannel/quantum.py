"""Small-dimension complex linear algebra and quantum information quantities.

Density operators, subsystem bookkeeping, partial trace, the canonical
purification, von Neumann entropy, classical-quantum state assembly, and
quantum conditional mutual information.

The Hermitian eigensolver is a self-contained cyclic Jacobi iteration with a
1e-12 off-diagonal convergence target and a documented dimension cap of 64;
every instance this package produces is single-letter, so dimensions stay
tiny.  Eigenvector phases follow a fixed convention (first component of
magnitude above 1e-12 made real positive) so outputs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConvergenceError, ValidationError
from .prob import Pmf, _entropy_of

_HERM_TOL = 1e-10
_TRACE_TOL = 1e-10
_EIG_NEG_TOL = 1e-10
_JACOBI_TOL = 1e-12
_DIM_CAP = 64

__all__ = [
    "DensityOperator",
    "SubsystemLayout",
    "CqChannel",
    "PureState",
    "hermitian_eig",
    "partial_trace",
    "canonical_purification",
    "von_neumann_entropy",
    "cq_state",
    "average_state",
    "quantum_cmi",
    "trace_norm",
]


# ---------------------------------------------------------------------------
# eigensolver
# ---------------------------------------------------------------------------


def hermitian_eig(matrix: np.ndarray, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a complex Hermitian matrix by cyclic Jacobi rotations.

    Returns ``(values, vectors)`` with eigenvalues sorted descending and the
    eigenvectors as columns under the fixed phase convention.  Off-diagonal
    mass is driven below 1e-12 relative to the matrix scale; exceeding the
    sweep budget raises ConvergenceError.
    """
    a = np.array(matrix, dtype=complex)
    d = a.shape[0]
    if a.ndim != 2 or a.shape[1] != d:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    if d > _DIM_CAP:
        raise ValidationError(f"dimension {d} exceeds the supported cap of {_DIM_CAP}")
    if np.max(np.abs(a - a.conj().T)) > _HERM_TOL * max(1.0, np.max(np.abs(a))):
        raise ValidationError("matrix is not Hermitian within tolerance")
    a = 0.5 * (a + a.conj().T)
    v = np.eye(d, dtype=complex)
    scale = max(1.0, float(np.linalg.norm(a)))
    target = _JACOBI_TOL * scale

    for _ in range(max_sweeps):
        od = np.abs(a)
        np.fill_diagonal(od, 0.0)
        off = float(np.linalg.norm(od))
        if off <= target:
            break
        thresh = off / max(d, 1)
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= max(target / max(d, 1), 1e-300) or mag < 1e-3 * thresh:
                    continue
                phase = apq / mag
                app = a[p, p].real
                aqq = a[q, q].real
                tau = (app - aqq) / (2.0 * mag)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # columns, then rows (A <- U^H A U), then the vector accumulator
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p + np.conj(phase) * s * col_q
                a[:, q] = -phase * s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p + phase * s * row_q
                a[q, :] = -np.conj(phase) * s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p + np.conj(phase) * s * vec_q
                v[:, q] = -phase * s * vec_p + c * vec_q
    else:
        raise ConvergenceError(
            f"Jacobi eigensolver did not reach off-diagonal {target} in {max_sweeps} sweeps"
        )

    vals = np.real(np.diag(a))
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = v[:, order]
    for j in range(d):
        col = vecs[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size:
            ref = col[nz[0]]
            vecs[:, j] = col * (np.conj(ref) / abs(ref))
    return vals, vecs


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered (label, dimension) pairs of tensor factors."""

    factors: tuple

    def __post_init__(self) -> None:
        factors = tuple((str(lbl), int(dim)) for lbl, dim in self.factors)
        if not factors:
            raise ValidationError("layout needs at least one factor")
        if any(dim < 1 for _, dim in factors):
            raise ValidationError("factor dimensions must be >= 1")
        labels = [lbl for lbl, _ in factors]
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate factor labels in {labels}")
        object.__setattr__(self, "factors", factors)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lbl for lbl, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.factors)

    @property
    def total_dim(self) -> int:
        out = 1
        for _, dim in self.factors:
            out *= dim
        return out

    def dim_of(self, label: str) -> int:
        for lbl, dim in self.factors:
            if lbl == label:
                return dim
        raise ValidationError(f"no factor labeled {label!r} in {self.labels}")

    def prepend(self, label: str, dim: int) -> "SubsystemLayout":
        return SubsystemLayout(((label, dim),) + self.factors)


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian, positive semi-definite, unit-trace complex matrix."""

    matrix: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"density operator must be square, got {m.shape}")
        if m.shape[0] > _DIM_CAP:
            raise ValidationError(f"dimension {m.shape[0]} exceeds the supported cap")
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.conj().T)) > _HERM_TOL * scale:
            raise ValidationError("density operator is not Hermitian within 1e-10")
        m = 0.5 * (m + m.conj().T)
        tr = complex(np.trace(m))
        if abs(tr - 1.0) > _TRACE_TOL:
            raise ValidationError(f"trace is {tr}, not 1 within 1e-10")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        vals, _ = self.eig()
        if vals[-1] < -_EIG_NEG_TOL:
            raise ValidationError(f"negative eigenvalue {vals[-1]} below -1e-10")

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached eigendecomposition (descending eigenvalues)."""
        if "eig" not in self._cache:
            self._cache["eig"] = hermitian_eig(self.matrix)
        return self._cache["eig"]


@dataclass(frozen=True)
class PureState:
    """Unit-norm complex amplitude vector."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.amplitudes, dtype=complex).ravel()
        norm = float(np.linalg.norm(a))
        if abs(norm - 1.0) > _HERM_TOL:
            raise ValidationError(f"amplitudes have norm {norm}, not 1 within 1e-10")
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)

    @property
    def dim(self) -> int:
        return int(self.amplitudes.size)

    def projector(self) -> DensityOperator:
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class CqChannel:
    """Map from a finite alphabet into density operators on a common layout."""

    states: tuple
    alphabet: tuple = ()
    layout: SubsystemLayout | None = None

    def __post_init__(self) -> None:
        states = tuple(self.states)
        if not states:
            raise ValidationError("CQ channel needs at least one state")
        if not all(isinstance(s, DensityOperator) for s in states):
            raise ValidationError("CQ channel states must be DensityOperator instances")
        dim = states[0].dim
        if any(s.dim != dim for s in states):
            raise ValidationError("CQ channel states must share one dimension")
        alphabet = tuple(self.alphabet) if self.alphabet else tuple(range(len(states)))
        if len(alphabet) != len(states):
            raise ValidationError("alphabet size does not match the number of states")
        layout = self.layout
        if layout is not None and layout.total_dim != dim:
            raise ValidationError("layout dimension does not match the states")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "alphabet", alphabet)

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return self.states[0].dim


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def _partial_trace_matrix(
    matrix: np.ndarray, dims: Sequence[int], keep_idx: Sequence[int]
) -> np.ndarray:
    dims = tuple(int(d) for d in dims)
    k = len(dims)
    tensor = matrix.reshape(dims + dims)
    keep_idx = tuple(keep_idx)
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * k > len(letters):
        raise ValidationError("too many tensor factors for the partial trace")
    row = list(letters[:k])
    col = list(letters[k : 2 * k])
    for i in range(k):
        if i not in keep_idx:
            col[i] = row[i]
    out = "".join(row[i] for i in keep_idx) + "".join(col[i] for i in keep_idx)
    return np.einsum("".join(row) + "".join(col) + "->" + out, tensor).reshape(
        int(np.prod([dims[i] for i in keep_idx] or [1])), -1
    )


def partial_trace(
    op: DensityOperator, layout: SubsystemLayout, keep: Iterable[str]
) -> DensityOperator:
    """Reduce ``op`` to the factors named in ``keep`` (original factor order)."""
    if layout.total_dim != op.dim:
        raise ValidationError(
            f"layout dimension {layout.total_dim} does not match operator dimension {op.dim}"
        )
    keep = set(keep)
    unknown = keep - set(layout.labels)
    if unknown:
        raise ValidationError(f"unknown factor labels {sorted(unknown)}; have {layout.labels}")
    if not keep:
        raise ValidationError("must keep at least one factor")
    keep_idx = [i for i, lbl in enumerate(layout.labels) if lbl in keep]
    reduced = _partial_trace_matrix(op.matrix, layout.dims, keep_idx)
    return DensityOperator(reduced)


def canonical_purification(rho: DensityOperator) -> PureState:
    """Purification sum_i sqrt(l_i) |i>_R |v_i> on the layout (R, original).

    Eigenvalues are sorted descending and eigenvector phases follow the fixed
    convention, so the output is reproducible; the partial trace over R
    reproduces ``rho``.
    """
    vals, vecs = rho.eig()
    vals = np.where((vals < 0.0) & (vals >= -_EIG_NEG_TOL), 0.0, vals)
    d = rho.dim
    amps = np.zeros(d * d, dtype=complex)
    for i in range(d):
        if vals[i] <= 0.0:
            continue
        amps[i * d : (i + 1) * d] = np.sqrt(vals[i]) * vecs[:, i]
    return PureState(amps)


def von_neumann_entropy(rho: DensityOperator) -> float:
    """Entropy -sum l_i log2 l_i of the eigenvalues, zeros skipped, in bits."""
    vals, _ = rho.eig()
    vals = np.where((vals < 0.0) & (vals >= -_EIG_NEG_TOL), 0.0, vals)
    if vals[-1] < 0.0:
        raise ValidationError(f"negative eigenvalue {vals[-1]} beyond numerical tolerance")
    h = _entropy_of(vals)
    return 0.0 if h == 0.0 else h


def average_state(p: Pmf, w: CqChannel) -> DensityOperator:
    """Ensemble average sum_x p(x) W_x."""
    if p.size != w.size:
        raise ValidationError(f"pmf size {p.size} does not match channel alphabet {w.size}")
    acc = np.zeros((w.dim, w.dim), dtype=complex)
    for px, state in zip(p.probs, w.states):
        acc += px * state.matrix
    return DensityOperator(acc)


def cq_state(p: Pmf, w: CqChannel) -> DensityOperator:
    """Block-diagonal classical-quantum state on the layout (X, channel output)."""
    if p.size != w.size:
        raise ValidationError(f"pmf size {p.size} does not match channel alphabet {w.size}")
    k, d = w.size, w.dim
    out = np.zeros((k * d, k * d), dtype=complex)
    for x in range(k):
        if p.probs[x] == 0.0:
            continue
        out[x * d : (x + 1) * d, x * d : (x + 1) * d] = p.probs[x] * w.states[x].matrix
    return DensityOperator(out)


def cq_layout(p: Pmf, layout: SubsystemLayout, label: str = "X") -> SubsystemLayout:
    """Layout of ``cq_state``: a classical factor prepended to the channel layout."""
    return layout.prepend(label, p.size)


def quantum_cmi(
    p: Pmf,
    w: CqChannel,
    layout: SubsystemLayout,
    r_label: str = "R",
    b_label: str = "B",
) -> float:
    """Conditional mutual information I(X;R|B) of the CQ state in bits.

    Evaluates S(XB) + S(RB) - S(B) - S(XRB) on the block-diagonal state and
    cross-checks it against the ensemble form
    sum_x p(x)[S(W_x^B) - S(W_x^RB)] + S(Wbar^RB) - S(Wbar^B) to 1e-9.
    """
    if layout.total_dim != w.dim:
        raise ValidationError("layout does not match the channel states")
    for lbl in (r_label, b_label):
        layout.dim_of(lbl)

    sigma = cq_state(p, w)
    full = cq_layout(p, layout)
    s_xrb = von_neumann_entropy(sigma)
    s_xb = von_neumann_entropy(partial_trace(sigma, full, {"X", b_label}))
    s_rb = von_neumann_entropy(partial_trace(sigma, full, {r_label, b_label}))
    s_b = von_neumann_entropy(partial_trace(sigma, full, {b_label}))
    global_form = s_xb + s_rb - s_b - s_xrb

    avg = average_state(p, w)
    ens = von_neumann_entropy(avg) - von_neumann_entropy(partial_trace(avg, layout, {b_label}))
    for px, state in zip(p.probs, w.states):
        if px == 0.0:
            continue
        ens += px * (
            von_neumann_entropy(partial_trace(state, layout, {b_label}))
            - von_neumann_entropy(state)
        )

    if abs(global_form - ens) > 1e-9:
        raise ConvergenceError(
            f"conditional-mutual-information cross-check failed: {global_form} vs {ens}"
        )
    return float(global_form)


def trace_norm(m: np.ndarray) -> float:
    """Sum of singular values of a Hermitian matrix (= sum of |eigenvalues|)."""
    vals, _ = hermitian_eig(np.asarray(m, dtype=complex))
    return float(np.abs(vals).sum())
