"""Multi-indices over N^d and the graded monomial basis.

Every coefficient matrix in the package is indexed by an :class:`IndexBasis`:
all exponent vectors of total degree at most ``n``, grouped by degree and
ordered lexicographically (largest first) inside each degree, so that for
``d = 2`` the basis starts ``(0,0), (1,0), (0,1), (2,0), (1,1), (0,2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

MultiIndex = tuple[int, ...]


def degree(lam: Sequence[int]) -> int:
    return sum(lam)


def unit(d: int, *coords: int) -> MultiIndex:
    """Sum of unit multi-indices, e.g. ``unit(3, 0, 2)`` is ``(1, 0, 1)``."""
    out = [0] * d
    for j in coords:
        out[j] += 1
    return tuple(out)


def add(lam: Sequence[int], mu: Sequence[int]) -> MultiIndex:
    return tuple(a + b for a, b in zip(lam, mu, strict=True))


def sub(lam: Sequence[int], mu: Sequence[int]) -> MultiIndex | None:
    """``lam - mu`` or ``None`` when ``mu`` is not below ``lam``."""
    out = tuple(a - b for a, b in zip(lam, mu, strict=True))
    if any(x < 0 for x in out):
        return None
    return out


def leq(mu: Sequence[int], lam: Sequence[int]) -> bool:
    """Componentwise partial order ``mu <= lam``."""
    return all(a <= b for a, b in zip(mu, lam, strict=True))


def multi_binomial(lam: Sequence[int], mu: Sequence[int]) -> int:
    """Product of scalar binomials ``prod_j C(lam_j, mu_j)``; zero unless ``mu <= lam``."""
    if len(lam) != len(mu):
        raise ValueError(f"length mismatch: {len(lam)} vs {len(mu)}")
    out = 1
    for a, b in zip(lam, mu):
        if b < 0 or b > a:
            return 0
        out *= math.comb(a, b)
    return out


def multinomial(total: int, parts: Sequence[int]) -> int:
    """``total! / prod(parts!)`` with ``sum(parts) == total``."""
    if sum(parts) != total or any(p < 0 for p in parts):
        return 0
    out = math.factorial(total)
    for p in parts:
        out //= math.factorial(p)
    return out


def _grade(d: int, k: int) -> Iterator[MultiIndex]:
    # Lexicographically descending compositions of k into d parts.
    if d == 1:
        yield (k,)
        return
    for first in range(k, -1, -1):
        for rest in _grade(d - 1, k - first):
            yield (first,) + rest


def basis_size(d: int, n: int, include_zero: bool = True) -> int:
    size = math.comb(d + n, d)
    return size if include_zero else size - 1


@dataclass(frozen=True)
class IndexBasis:
    """Graded-lex ordered list of all multi-indices of dimension ``d`` and degree ``<= n``."""

    d: int
    n: int
    include_zero: bool = True
    indices: tuple[MultiIndex, ...] = field(init=False, repr=False)
    _rank: dict[MultiIndex, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        start = 0 if self.include_zero else 1
        indices = tuple(lam for k in range(start, self.n + 1) for lam in _grade(self.d, k))
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "_rank", {lam: i for i, lam in enumerate(indices)})

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.indices)

    def __getitem__(self, i: int) -> MultiIndex:
        return self.indices[i]

    def __contains__(self, lam: object) -> bool:
        return tuple(lam) in self._rank  # type: ignore[arg-type]

    def rank(self, lam: Sequence[int]) -> int:
        key = tuple(int(x) for x in lam)
        if len(key) != self.d:
            raise ValueError(f"expected a multi-index of length {self.d}, got {len(key)}")
        try:
            return self._rank[key]
        except KeyError:
            raise IndexError(f"{key} is outside the basis (d={self.d}, n={self.n}, "
                             f"include_zero={self.include_zero})") from None

    def unrank(self, i: int) -> MultiIndex:
        if not 0 <= i < len(self.indices):
            raise IndexError(f"rank {i} out of range for basis of size {len(self.indices)}")
        return self.indices[i]

    def grade_slice(self, k: int) -> slice:
        """Positions of the degree-``k`` block."""
        lo = 0 if k == 0 else basis_size(self.d, k - 1, self.include_zero)
        hi = basis_size(self.d, k, self.include_zero)
        return slice(lo, hi)

    def units(self) -> list[int]:
        """Positions of the unit multi-indices ``1_1, ..., 1_d``."""
        return [self.rank(unit(self.d, j)) for j in range(self.d)]

    def pairs(self) -> list[list[int]]:
        """``pairs()[i][j]`` is the position of ``1_i + 1_j``; requires ``n >= 2``."""
        return [[self.rank(unit(self.d, i, j)) for j in range(self.d)] for i in range(self.d)]

    def without_zero(self) -> IndexBasis:
        return IndexBasis(self.d, self.n, include_zero=False)


def enumerate_basis(d: int, n: int, include_zero: bool = True) -> IndexBasis:
    return IndexBasis(d, n, include_zero)
