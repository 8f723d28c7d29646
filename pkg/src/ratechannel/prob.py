"""Finite-alphabet probability primitives.

Distributions, row-stochastic channels, multi-axis joints, the entropic
functionals built on them, and robust (letter-frequency) typicality with the
pruned product distribution used by the protocol simulator.

Conventions:
- all information quantities are in bits (log base 2), with 0*log(0) = 0;
- probability vectors must already be normalized (sum within 1e-12); use
  ``Pmf.normalized`` when you explicitly want renormalization;
- sequences are 1-D integer arrays of indices into the alphabet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InfeasibleError, ValidationError

_SUM_TOL = 1e-12

__all__ = [
    "Pmf",
    "Channel",
    "JointPmf",
    "TypicalityParams",
    "Posterior",
    "PrunedProduct",
    "entropy",
    "mutual_information",
    "conditional_mutual_information",
    "total_variation",
    "bayes_posterior",
    "is_typical",
    "is_jointly_typical",
    "pruned_product",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _as_prob_array(values, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    if np.any(arr < 0.0):
        raise ValidationError(f"{name} contains negative entries (min={arr.min()})")
    return arr


@dataclass(frozen=True)
class Pmf:
    """Probability vector over a finite alphabet.

    ``alphabet`` holds the symbol labels; ``probs`` the probabilities in the
    same order.  Entries must be non-negative and sum to 1 within 1e-12 --
    construction refuses to renormalize.
    """

    probs: np.ndarray
    alphabet: tuple = ()

    def __post_init__(self) -> None:
        arr = _as_prob_array(self.probs, "probs", ndim=1)
        total = float(arr.sum())
        if abs(total - 1.0) > _SUM_TOL:
            raise ValidationError(
                f"probabilities sum to {total!r}, not 1 (tolerance {_SUM_TOL}); "
                "use Pmf.normalized to renormalize explicitly"
            )
        alphabet = tuple(self.alphabet) if self.alphabet else tuple(range(arr.size))
        if len(alphabet) != arr.size:
            raise ValidationError(
                f"alphabet has {len(alphabet)} symbols for {arr.size} probabilities"
            )
        object.__setattr__(self, "probs", _freeze(arr))
        object.__setattr__(self, "alphabet", alphabet)

    @classmethod
    def normalized(cls, weights, alphabet: tuple = ()) -> "Pmf":
        """Build a Pmf from non-negative weights, normalizing explicitly."""
        arr = _as_prob_array(weights, "weights", ndim=1)
        total = float(arr.sum())
        if total <= 0.0:
            raise ValidationError("weights sum to zero; cannot normalize")
        return cls(arr / total, alphabet)

    @classmethod
    def uniform(cls, size: int, alphabet: tuple = ()) -> "Pmf":
        return cls(np.full(size, 1.0 / size), alphabet)

    @property
    def size(self) -> int:
        return int(self.probs.size)

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True)
class Channel:
    """Row-stochastic matrix: one Pmf per input symbol.

    For channels with a composite input (e.g. pairs (y, z)) the rows are
    indexed by the flattened input in row-major order; the axis order is
    documented wherever such a channel is consumed.
    """

    rows: np.ndarray
    input_labels: tuple = ()
    output_labels: tuple = ()

    def __post_init__(self) -> None:
        arr = _as_prob_array(self.rows, "rows", ndim=2)
        sums = arr.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > _SUM_TOL)[0]
        if bad.size:
            raise ValidationError(
                f"channel rows {bad.tolist()} are not normalized (sums {sums[bad].tolist()})"
            )
        inputs = tuple(self.input_labels) if self.input_labels else tuple(range(arr.shape[0]))
        outputs = tuple(self.output_labels) if self.output_labels else tuple(range(arr.shape[1]))
        if len(inputs) != arr.shape[0] or len(outputs) != arr.shape[1]:
            raise ValidationError("channel label counts do not match the matrix shape")
        object.__setattr__(self, "rows", _freeze(arr))
        object.__setattr__(self, "input_labels", inputs)
        object.__setattr__(self, "output_labels", outputs)

    @property
    def n_inputs(self) -> int:
        return int(self.rows.shape[0])

    @property
    def n_outputs(self) -> int:
        return int(self.rows.shape[1])

    def row(self, i: int) -> Pmf:
        return Pmf(self.rows[i], self.output_labels)


@dataclass(frozen=True)
class JointPmf:
    """Joint distribution over named axes, stored as a dense table."""

    table: np.ndarray
    names: tuple = ()
    alphabets: tuple = ()

    def __post_init__(self) -> None:
        arr = np.asarray(self.table, dtype=float)
        if arr.ndim < 1:
            raise ValidationError("joint table must have at least one axis")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise ValidationError("joint table entries must be finite and non-negative")
        total = float(arr.sum())
        if abs(total - 1.0) > _SUM_TOL:
            raise ValidationError(f"joint table sums to {total!r}, not 1")
        names = tuple(self.names) if self.names else tuple(f"ax{i}" for i in range(arr.ndim))
        if len(names) != arr.ndim:
            raise ValidationError("axis name count does not match table rank")
        alphabets = (
            tuple(tuple(a) for a in self.alphabets)
            if self.alphabets
            else tuple(tuple(range(s)) for s in arr.shape)
        )
        if tuple(len(a) for a in alphabets) != arr.shape:
            raise ValidationError("alphabet sizes do not match table shape")
        object.__setattr__(self, "table", _freeze(arr))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "alphabets", alphabets)

    @property
    def axes_sizes(self) -> tuple[int, ...]:
        return tuple(self.table.shape)

    def marginal(self, axes: Sequence[int]) -> "JointPmf":
        """Marginal joint over the listed axes (in the listed order)."""
        axes = tuple(axes)
        drop = tuple(i for i in range(self.table.ndim) if i not in axes)
        tab = self.table.sum(axis=drop) if drop else self.table
        # summing keeps surviving axes in original order; permute to the request
        kept_sorted = tuple(sorted(axes))
        perm = tuple(kept_sorted.index(a) for a in axes)
        tab = np.transpose(tab, perm)
        return JointPmf(
            tab,
            tuple(self.names[a] for a in axes),
            tuple(self.alphabets[a] for a in axes),
        )

    def marginal_pmf(self, axis: int) -> Pmf:
        return Pmf(self.marginal((axis,)).table, self.alphabets[axis])


@dataclass(frozen=True)
class TypicalityParams:
    """Block length and slack for robust (letter-frequency) typicality."""

    n: int
    delta: float

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValidationError(f"block length must be a positive integer, got {self.n!r}")
        if not (float(self.delta) > 0.0):
            raise ValidationError(f"typicality slack must be > 0, got {self.delta!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "delta", float(self.delta))


# ---------------------------------------------------------------------------
# entropic functionals
# ---------------------------------------------------------------------------


def _xlog2x(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    mask = p > 0.0
    out[mask] = p[mask] * np.log2(p[mask])
    return out


def _entropy_of(table: np.ndarray) -> float:
    return float(-_xlog2x(np.asarray(table, dtype=float).ravel()).sum())


def entropy(p: Pmf) -> float:
    """Shannon entropy H(p) in bits."""
    h = _entropy_of(p.probs)
    return 0.0 if h == 0.0 else h


def mutual_information(j: JointPmf) -> float:
    """I(X;Y) = H(X) + H(Y) - H(X,Y) for a 2-axis joint, clamped at 0."""
    if j.table.ndim != 2:
        raise ValidationError("mutual_information expects a 2-axis joint")
    mi = (
        _entropy_of(j.table.sum(axis=1))
        + _entropy_of(j.table.sum(axis=0))
        - _entropy_of(j.table)
    )
    if mi < 0.0:
        if mi < -_SUM_TOL:
            raise ValidationError(f"mutual information {mi} below -1e-12; invalid joint")
        mi = 0.0
    return float(mi)


def conditional_mutual_information(j: JointPmf) -> float:
    """I(A;B|C) = H(A,C) + H(B,C) - H(C) - H(A,B,C) for a 3-axis joint."""
    if j.table.ndim != 3:
        raise ValidationError("conditional_mutual_information expects a 3-axis joint")
    t = j.table
    cmi = (
        _entropy_of(t.sum(axis=1))  # H(A,C)
        + _entropy_of(t.sum(axis=0))  # H(B,C)
        - _entropy_of(t.sum(axis=(0, 1)))  # H(C)
        - _entropy_of(t)  # H(A,B,C)
    )
    if -_SUM_TOL <= cmi < 0.0:
        cmi = 0.0
    return float(cmi)


def total_variation(p: JointPmf | Pmf, q: JointPmf | Pmf) -> float:
    """Total variation distance (1/2) sum |p - q| between same-shape joints."""
    tp = p.table if isinstance(p, JointPmf) else p.probs
    tq = q.table if isinstance(q, JointPmf) else q.probs
    if tp.shape != tq.shape:
        raise ValidationError(f"axis mismatch: {tp.shape} vs {tq.shape}")
    return float(0.5 * np.abs(tp - tq).sum())


@dataclass(frozen=True)
class Posterior:
    """Conditional distribution with zero-mass conditioning rows flagged.

    ``channel`` rows are indexed by the composite of the conditioning axes in
    row-major order.  Rows whose conditioning cell has zero mass are undefined:
    they are filled with the uniform placeholder and flagged False in
    ``defined`` -- consumers decide how to treat them.
    """

    channel: Channel
    defined: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        mask = np.asarray(self.defined, dtype=bool)
        if mask.shape != (self.channel.n_inputs,):
            raise ValidationError("defined mask length must match the number of rows")
        object.__setattr__(self, "defined", _freeze(mask))


def bayes_posterior(j: JointPmf, target_axis: int, given_axes: Sequence[int]) -> Posterior:
    """Conditional of ``target_axis`` given ``given_axes`` under the joint.

    Rows are indexed by the given-axes composite (row-major, in the order
    listed); any remaining axes are marginalized out first.
    """
    given = tuple(given_axes)
    if target_axis in given:
        raise ValidationError("target axis cannot also be a conditioning axis")
    sub = j.marginal(given + (target_axis,))
    k_t = sub.table.shape[-1]
    flat = sub.table.reshape(-1, k_t)
    mass = flat.sum(axis=1)
    defined = mass > 0.0
    rows = np.full_like(flat, 1.0 / k_t)
    rows[defined] = flat[defined] / mass[defined, None]
    # guard against float drift on heavily skewed rows
    rows = rows / rows.sum(axis=1, keepdims=True)
    return Posterior(Channel(rows, output_labels=j.alphabets[target_axis]), defined)


# ---------------------------------------------------------------------------
# robust typicality
# ---------------------------------------------------------------------------


def _check_sequence(seq, n: int, k: int, name: str) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.int64)
    if arr.ndim != 1 or arr.size != n:
        raise ValidationError(f"{name} must be a length-{n} index sequence")
    if arr.size and (arr.min() < 0 or arr.max() >= k):
        raise ValidationError(f"{name} contains indices outside [0, {k})")
    return arr


def _freqs_within(counts: np.ndarray, n: int, probs: np.ndarray, delta: float) -> bool:
    return bool(np.all(np.abs(counts / n - probs) <= delta * probs))


def is_typical(seq, p: Pmf, params: TypicalityParams) -> bool:
    """Letter-frequency typicality: |freq(a)/n - P(a)| <= delta * P(a) for all a.

    Zero-probability letters are handled by the same bound (their frequency
    must be exactly zero).
    """
    arr = _check_sequence(seq, params.n, p.size, "seq")
    counts = np.bincount(arr, minlength=p.size).astype(float)
    return _freqs_within(counts, params.n, p.probs, params.delta)


def is_jointly_typical(seq_pair, j: JointPmf, params: TypicalityParams) -> bool:
    """Robust typicality of a pair of aligned sequences against a 2-axis joint."""
    if j.table.ndim != 2:
        raise ValidationError("is_jointly_typical expects a 2-axis joint")
    ka, kb = j.table.shape
    a = _check_sequence(seq_pair[0], params.n, ka, "seq_pair[0]")
    b = _check_sequence(seq_pair[1], params.n, kb, "seq_pair[1]")
    counts = np.bincount(a * kb + b, minlength=ka * kb).astype(float)
    return _freqs_within(counts, params.n, j.table.ravel(), params.delta)


# ---------------------------------------------------------------------------
# pruned product distribution over typical sequences
# ---------------------------------------------------------------------------


def _compositions(n: int, k: int):
    """Yield all count vectors of length k summing to n (lexicographic)."""
    if k == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


_MAX_TYPES = 5_000_000


@dataclass(frozen=True)
class PrunedProduct:
    """Product distribution conditioned on the typical set.

    Mass P^n(x^n)/(1 - eps) on delta-typical sequences and 0 elsewhere, where
    eps is the product-measure mass of the atypical set (computed exactly by
    enumerating empirical types).  Provides a pointwise evaluator and a
    rejection sampler that agree by construction.
    """

    pmf: Pmf
    params: TypicalityParams
    epsilon: float = field(init=False)

    def __post_init__(self) -> None:
        n, k = self.params.n, self.pmf.size
        if math.comb(n + k - 1, k - 1) > _MAX_TYPES:
            raise ValidationError(
                f"type enumeration for n={n}, |alphabet|={k} exceeds the supported size"
            )
        probs = self.pmf.probs
        log_p = np.where(probs > 0.0, np.log(np.where(probs > 0.0, probs, 1.0)), -np.inf)
        typical_mass = 0.0
        any_typical = False
        for counts in _compositions(n, k):
            c = np.asarray(counts, dtype=float)
            if np.any((c > 0) & (probs == 0.0)):
                continue
            if not _freqs_within(c, n, probs, self.params.delta):
                continue
            any_typical = True
            log_coef = math.lgamma(n + 1) - sum(math.lgamma(ci + 1) for ci in counts)
            log_mass = log_coef + float(np.sum(np.where(c > 0, c * log_p, 0.0)))
            typical_mass += math.exp(log_mass)
        if not any_typical:
            raise InfeasibleError(
                f"typical set is empty for n={n}, delta={self.params.delta}"
            )
        object.__setattr__(self, "epsilon", float(min(max(1.0 - typical_mass, 0.0), 1.0)))

    def prob(self, seq) -> float:
        """Probability of one length-n sequence under the pruned distribution."""
        arr = _check_sequence(seq, self.params.n, self.pmf.size, "seq")
        counts = np.bincount(arr, minlength=self.pmf.size).astype(float)
        if not _freqs_within(counts, self.params.n, self.pmf.probs, self.params.delta):
            return 0.0
        base = float(np.prod(self.pmf.probs[arr]))
        return base / (1.0 - self.epsilon)

    def sample(self, rng: np.random.Generator, max_tries: int = 100_000) -> np.ndarray:
        """Draw one typical sequence by rejection from the product measure."""
        n, k = self.params.n, self.pmf.size
        for _ in range(max_tries):
            seq = rng.choice(k, size=n, p=self.pmf.probs)
            counts = np.bincount(seq, minlength=k).astype(float)
            if _freqs_within(counts, n, self.pmf.probs, self.params.delta):
                return seq.astype(np.int64)
        raise InfeasibleError(
            f"rejection sampler failed to hit the typical set in {max_tries} tries "
            f"(n={n}, delta={self.params.delta}); its product mass is negligible"
        )


def pruned_product(p: Pmf, params: TypicalityParams) -> PrunedProduct:
    """Construct the pruned product distribution for ``p`` at block length n."""
    return PrunedProduct(p, params)
