"""Partitions, label functions and the natural partition cost.

Labels are 1-based everywhere. A :class:`Partition` stores its canonical
encoding: the label vector relabeled in first-occurrence order, i.e. a
restricted growth string shifted to start at 1. Two partitions are equal iff
their encodings are equal, and ordering partitions by encoding is the
lexicographic restricted-growth order used for every tie-break downstream.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

#: Unrestricted enumeration refuses to go past this many points.
MAX_ENUMERATION_N = 15

#: Largest label count handled by brute force over label permutations.
PERMUTATION_LIMIT = 5


def _canonical(labels: Iterable[int]) -> tuple[int, ...]:
    seen: dict[int, int] = {}
    out = []
    for lab in labels:
        lab = int(lab)
        if lab not in seen:
            seen[lab] = len(seen) + 1
        out.append(seen[lab])
    return tuple(out)


@dataclass(frozen=True, order=True)
class Partition:
    """A partition of the point indices ``0..n-1``.

    Parameters
    ----------
    labels : tuple of int
        Canonical 1-based label vector. Use :meth:`from_labels` or
        :meth:`from_blocks` to build one from arbitrary input.
    """

    labels: tuple[int, ...]

    def __post_init__(self):
        if self.labels != _canonical(self.labels):
            raise ValueError("labels are not in canonical first-occurrence form; "
                             "use Partition.from_labels")

    @classmethod
    def from_labels(cls, labels: Iterable[int]) -> "Partition":
        return cls(_canonical(labels))

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], n: int | None = None) -> "Partition":
        """Build from 0-based index blocks; empty blocks are dropped."""
        blocks = [sorted(int(i) for i in b) for b in blocks]
        blocks = [b for b in blocks if b]
        flat = [i for b in blocks for i in b]
        if n is None:
            n = len(flat)
        if sorted(flat) != list(range(n)):
            raise ValueError("blocks must be disjoint and cover 0..n-1")
        labels = [0] * n
        for k, b in enumerate(blocks, start=1):
            for i in b:
                labels[i] = k
        return cls.from_labels(labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def n_blocks(self) -> int:
        return max(self.labels, default=0)

    @property
    def blocks(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n_blocks)]
        for i, lab in enumerate(self.labels):
            out[lab - 1].append(i)
        return tuple(tuple(b) for b in out)

    @property
    def sizes(self) -> tuple[int, ...]:
        counts = [0] * self.n_blocks
        for lab in self.labels:
            counts[lab - 1] += 1
        return tuple(counts)

    def line(self) -> str:
        """Line format: space-separated 1-based canonical labels."""
        return " ".join(str(v) for v in self.labels)

    def __str__(self) -> str:
        return self.line()


def as_label_function(labels: Sequence[int], l: int | None = None) -> np.ndarray:
    """Validate a label function and return it as an int array."""
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("a label function is a non-empty 1-d sequence")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("labels must be integers")
        arr = arr.astype(np.int64)
    if arr.min() < 1 or (l is not None and arr.max() > l):
        raise ValueError(f"labels must lie in 1..{l if l is not None else 'l'}")
    return arr.astype(np.int64)


def label_mismatch(a: Sequence[int], b: Sequence[int]) -> float:
    """Fraction of points on which two label functions disagree."""
    a = as_label_function(a)
    b = as_label_function(b)
    if a.shape != b.shape:
        raise ValueError(f"label functions differ in length ({a.size} vs {b.size})")
    return float(np.count_nonzero(a != b)) / a.size


def induced_partition(labels: Sequence[int]) -> Partition:
    """The partition whose blocks are the preimages of the used labels."""
    return Partition.from_labels(as_label_function(labels))


# ---------------------------------------------------------------------------
# enumeration

def _rgs(n: int, l: int) -> Iterator[tuple[int, ...]]:
    # lexicographic restricted growth strings with at most l blocks
    if n == 0:
        yield ()
        return
    a = [1] * n
    # m[i] = max(a[:i+1])
    def rec(i: int, m: int):
        if i == n:
            yield tuple(a)
            return
        for v in range(1, min(m + 1, l) + 1):
            a[i] = v
            yield from rec(i + 1, max(m, v))
    yield from rec(1, 1)


def _rgs_sized(sizes: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
    # restricted growth strings whose block-size multiset equals `sizes`
    target = sorted((s for s in sizes if s > 0), reverse=True)
    n = sum(target)
    k = len(target)
    a = [0] * n
    counts: list[int] = []

    def feasible() -> bool:
        c = sorted(counts, reverse=True)
        return all(ci <= ti for ci, ti in zip(c, target))

    def rec(i: int):
        if i == n:
            if sorted(counts, reverse=True) == target:
                yield tuple(a)
            return
        nb = len(counts)
        for v in range(1, min(nb + 1, k) + 1):
            opened = v == nb + 1
            if opened:
                counts.append(0)
            counts[v - 1] += 1
            a[i] = v
            if feasible():
                yield from rec(i + 1)
            counts[v - 1] -= 1
            if opened:
                counts.pop()

    if n == 0:
        yield ()
        return
    yield from rec(0)


def enumerate_partitions(n: int, l: int, sizes: Sequence[int] | None = None) -> list[Partition]:
    """All partitions of ``n`` points with at most ``l`` blocks.

    With ``sizes`` given, only partitions whose block-size multiset equals the
    nonzero entries of ``sizes`` are returned. Output is in lexicographic
    restricted-growth order.
    """
    if n < 0 or l < 1:
        raise ValueError("need n >= 0 and l >= 1")
    if sizes is not None:
        sizes = tuple(int(s) for s in sizes)
        if any(s < 0 for s in sizes) or sum(sizes) != n:
            raise ValueError(f"sizes {sizes} must be nonnegative and sum to n={n}")
        if sum(1 for s in sizes if s > 0) > l:
            raise ValueError("more nonempty blocks than labels")
        if n > 2 * MAX_ENUMERATION_N:
            raise ValueError(f"refusing to enumerate sized partitions of n={n} points")
        return [Partition(t) for t in _rgs_sized(sizes)]
    if n > MAX_ENUMERATION_N:
        raise ValueError(f"refusing to enumerate partitions of n={n} > {MAX_ENUMERATION_N} points")
    return [Partition(t) for t in _rgs(n, l)]


# ---------------------------------------------------------------------------
# natural cost

@lru_cache(maxsize=None)
def _permutations(l: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(l))), dtype=np.intp)


def _onehot(parts: Sequence[Partition], l: int) -> np.ndarray:
    codes = np.array([p.labels for p in parts], dtype=np.intp) - 1
    if codes.size and codes.max() >= l:
        worst = max(p.n_blocks for p in parts)
        raise ValueError(f"a partition has {worst} blocks but only l={l} labels are available")
    out = np.zeros(codes.shape + (l,))
    np.put_along_axis(out, codes[..., None], 1.0, axis=-1)
    return out


def _max_overlap(overlap: np.ndarray, method: str) -> np.ndarray:
    # overlap[..., i, j] = |P_i ∩ Q_j|; returns max over bijections of the matched total
    l = overlap.shape[-1]
    if method == "auto":
        method = "permutation" if l <= PERMUTATION_LIMIT else "assignment"
    if method == "permutation":
        perms = _permutations(l)
        rows = np.arange(l)
        totals = overlap[..., rows, perms].sum(axis=-1)
        return totals.max(axis=-1)
    if method == "assignment":
        flat = overlap.reshape(-1, l, l)
        best = np.empty(flat.shape[0])
        for k, mat in enumerate(flat):
            r, c = linear_sum_assignment(mat, maximize=True)
            best[k] = mat[r, c].sum()
        return best.reshape(overlap.shape[:-2])
    raise ValueError(f"unknown method {method!r}")


def cost_matrix(cands: Sequence[Partition], refs: Sequence[Partition], l: int,
                method: str = "auto") -> np.ndarray:
    """Natural costs ``c(P_i, Q_j)`` for every candidate/reference pair.

    Block counts are padded with empty blocks up to ``l``. ``method`` selects
    the matching solver: ``"permutation"`` (brute force over ``l!`` label
    permutations), ``"assignment"`` (Hungarian solver) or ``"auto"``.
    """
    cands = list(cands)
    refs = list(refs)
    if not cands or not refs:
        return np.zeros((len(cands), len(refs)))
    n = cands[0].n
    if any(p.n != n for p in itertools.chain(cands, refs)):
        raise ValueError("all partitions must cover the same number of points")
    P = _onehot(cands, l)
    Q = _onehot(refs, l)
    out = np.empty((len(cands), len(refs)))
    # bound memory of the (rows, refs, l, l) overlap tensor
    step = max(1, int(4e6 // max(1, len(refs) * l * l)))
    for s in range(0, len(cands), step):
        overlap = np.einsum("anl,bnm->ablm", P[s:s + step], Q)
        out[s:s + step] = (n - _max_overlap(overlap, method)) / n
    return out


def natural_cost(p: Partition, q: Partition, l: int, method: str = "auto") -> float:
    """Minimum fraction of points relabeled to turn ``p`` into ``q``."""
    if p.n != q.n:
        raise ValueError(f"partitions cover different point counts ({p.n} vs {q.n})")
    return float(cost_matrix([p], [q], l, method)[0, 0])
