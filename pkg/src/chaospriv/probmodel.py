"""Finite discrete distributions over real-vector alphabets and information measures.

Every distribution stores its probabilities densely.  Alphabets are ordered
collections of distinct real vectors; the index of a point is stable and is
what all matrices are indexed by.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._validation import (
    check_log_base,
    check_points,
    check_probability_matrix,
    check_probability_vector,
    log_factor,
    readonly,
)

__all__ = [
    "Alphabet",
    "Pmf",
    "JointPmf",
    "ConditionalPmf",
    "sumset_alphabet",
    "marginal",
    "mutual_information",
    "entropy",
    "plugin_mutual_information",
]


def _key(row):
    return tuple(float(v) for v in row)


@dataclass(frozen=True, eq=False)
class Alphabet:
    """Ordered set of distinct points in R^d."""

    points: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = readonly(check_points(self.points))
        keys = [_key(r) for r in pts]
        index = {k: i for i, k in enumerate(keys)}
        if len(index) != len(keys):
            raise ValueError("alphabet points must be pairwise distinct")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_index", index)

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return (isinstance(other, Alphabet) and self.points.shape == other.points.shape
                and bool(np.array_equal(self.points, other.points)))

    def __hash__(self):
        return hash(tuple(self._index))

    def index_of(self, point, default=None):
        """Position of ``point`` (exact match) or ``default`` when absent."""
        pt = np.atleast_1d(np.asarray(point, dtype=float))
        if pt.shape != (self.dim,):
            return default
        return self._index.get(_key(pt), default)

    def __contains__(self, point):
        return self.index_of(point) is not None

    def to_list(self):
        return [[float(v) for v in row] for row in self.points]

    @classmethod
    def from_list(cls, data):
        return cls(np.asarray(data, dtype=float))

    @classmethod
    def range(cls, start, stop):
        """Scalar integer alphabet ``{start, ..., stop}``."""
        return cls(np.arange(start, stop + 1, dtype=float)[:, None])


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability mass function on an alphabet."""

    alphabet: Alphabet
    probs: np.ndarray
    normalize: bool = field(default=False, repr=False)

    def __post_init__(self):
        p = check_probability_vector(self.probs, normalize=self.normalize)
        if p.size != self.alphabet.size:
            raise ValueError(f"{p.size} probabilities for an alphabet of size {self.alphabet.size}")
        object.__setattr__(self, "probs", readonly(p))

    def __len__(self):
        return self.alphabet.size

    def prob(self, point):
        i = self.alphabet.index_of(point)
        return 0.0 if i is None else float(self.probs[i])

    def to_dict(self):
        return {"alphabet": self.alphabet.to_list(), "probs": [float(v) for v in self.probs]}

    @classmethod
    def from_dict(cls, data, normalize=False):
        return cls(Alphabet.from_list(data["alphabet"]), data["probs"], normalize=normalize)


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Joint pmf of a (row, column) pair of discrete random vectors."""

    row_alphabet: Alphabet
    col_alphabet: Alphabet
    probs: np.ndarray
    normalize: bool = field(default=False, repr=False)

    def __post_init__(self):
        P = check_probability_matrix(self.probs, normalize=self.normalize)
        if P.shape != (self.row_alphabet.size, self.col_alphabet.size):
            raise ValueError(f"joint shape {P.shape} does not match alphabets "
                             f"({self.row_alphabet.size}, {self.col_alphabet.size})")
        object.__setattr__(self, "probs", readonly(P))

    @property
    def T(self):
        return JointPmf(self.col_alphabet, self.row_alphabet, self.probs.T)

    def conditional(self):
        """Row-conditional ``p(col | row)``; zero-mass rows are dropped from the given alphabet."""
        px = self.probs.sum(axis=1)
        keep = px > 0
        return ConditionalPmf(Alphabet(self.row_alphabet.points[keep]), self.col_alphabet,
                              self.probs[keep] / px[keep, None])

    @classmethod
    def from_conditional(cls, p_row, cond):
        if p_row.alphabet != cond.given_alphabet:
            raise ValueError("marginal and conditional are over different alphabets")
        return cls(p_row.alphabet, cond.out_alphabet, p_row.probs[:, None] * cond.probs,
                   normalize=True)

    @classmethod
    def from_counts(cls, row_alphabet, col_alphabet, counts):
        counts = np.asarray(counts, dtype=float)
        return cls(row_alphabet, col_alphabet, counts / counts.sum())

    def to_dict(self):
        return {
            "row_alphabet": self.row_alphabet.to_list(),
            "col_alphabet": self.col_alphabet.to_list(),
            "probs": [[float(v) for v in row] for row in self.probs],
        }

    @classmethod
    def from_dict(cls, data, normalize=False):
        return cls(Alphabet.from_list(data["row_alphabet"]), Alphabet.from_list(data["col_alphabet"]),
                   data["probs"], normalize=normalize)


@dataclass(frozen=True, eq=False)
class ConditionalPmf:
    """Transition probabilities; row ``i`` is the pmf of the output given ``given_alphabet[i]``."""

    given_alphabet: Alphabet
    out_alphabet: Alphabet
    probs: np.ndarray
    normalize: bool = field(default=False, repr=False)

    def __post_init__(self):
        P = check_probability_matrix(self.probs, rows_sum_to_one=True, normalize=self.normalize)
        if P.shape != (self.given_alphabet.size, self.out_alphabet.size):
            raise ValueError(f"conditional shape {P.shape} does not match alphabets "
                             f"({self.given_alphabet.size}, {self.out_alphabet.size})")
        object.__setattr__(self, "probs", readonly(P))

    def row(self, given):
        i = self.given_alphabet.index_of(given)
        if i is None:
            raise KeyError(f"{given!r} not in conditioning alphabet")
        return Pmf(self.out_alphabet, self.probs[i])

    def to_dict(self):
        return {
            "given_alphabet": self.given_alphabet.to_list(),
            "out_alphabet": self.out_alphabet.to_list(),
            "probs": [[float(v) for v in row] for row in self.probs],
        }

    @classmethod
    def from_dict(cls, data, normalize=False):
        return cls(Alphabet.from_list(data["given_alphabet"]), Alphabet.from_list(data["out_alphabet"]),
                   data["probs"], normalize=normalize)


def sumset_alphabet(a, b):
    """Sorted, deduplicated ``{x + y : x in a, y in b}``.

    Sums are formed exactly on the binary value of each coordinate, so
    deduplication never depends on rounding.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    fa = [tuple(Fraction(v) for v in row) for row in a.points]
    fb = [tuple(Fraction(v) for v in row) for row in b.points]
    sums = {tuple(x + y for x, y in zip(p, q)) for p in fa for q in fb}
    ordered = sorted(sums)
    return Alphabet(np.array([[float(v) for v in s] for s in ordered], dtype=float))


def marginal(j, axis):
    """Marginal of the row variable (``axis=0``) or column variable (``axis=1``)."""
    if axis == 0:
        return Pmf(j.row_alphabet, j.probs.sum(axis=1), normalize=True)
    if axis == 1:
        return Pmf(j.col_alphabet, j.probs.sum(axis=0), normalize=True)
    raise ValueError(f"axis must be 0 (rows) or 1 (columns), got {axis!r}")


def _mi_from_matrix(P):
    px = P.sum(axis=1)
    py = P.sum(axis=0)
    mask = P > 0
    if np.any(mask & ~np.outer(px > 0, py > 0)):
        raise AssertionError("joint mass on a cell whose marginal product is zero")
    r, c = np.nonzero(mask)
    # log-space so tiny marginals cannot underflow their product
    return float(np.sum(P[mask] * (np.log(P[mask]) - np.log(px[r]) - np.log(py[c]))))


def mutual_information(j, base=2):
    """Mutual information of a joint pmf, in bits (``base=2``) or nats (``base='e'``)."""
    value = _mi_from_matrix(np.asarray(j.probs)) / log_factor(base)
    return max(value, 0.0)


def entropy(p, base=2):
    probs = np.asarray(p.probs)
    nz = probs[probs > 0]
    return max(float(-np.sum(nz * np.log(nz))) / log_factor(base), 0.0)


def plugin_mutual_information(a, b, base=2):
    """Plug-in estimate of I[A;B] from paired integer-coded samples."""
    a = np.asarray(a, dtype=np.int64).ravel()
    b = np.asarray(b, dtype=np.int64).ravel()
    if a.shape != b.shape or a.size == 0:
        raise ValueError("need two non-empty sample arrays of equal length")
    if a.min() < 0 or b.min() < 0:
        raise ValueError("sample codes must be non-negative integers")
    counts = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(counts, (a, b), 1.0)
    check_log_base(base)
    return max(_mi_from_matrix(counts / a.size) / log_factor(base), 0.0)
