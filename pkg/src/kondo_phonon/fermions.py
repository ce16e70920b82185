"""Occupation-number words and the generic fermionic sign rule.

A Fock state is an integer whose bit ``m`` is the occupation of mode ``m``.
Applying ``a_m`` or ``a_m^*`` picks up ``(-1)`` to the number of occupied
modes below ``m``. Every matrix element in the package is produced by this
rule; no term carries a hand-derived sign.

Mode layouts:

* Kondo: conduction up by site, conduction down by site, f up by site,
  f down by site (``4n`` modes).
* Nagaoka-Thouless: d up by site, d down by site (``2n`` modes).
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

UP = +1
DOWN = -1
SPINS = (UP, DOWN)

# (mode, dagger); a string lists factors left to right as written in the product
Op = tuple[int, bool]


def apply_op(word: int, mode: int, dagger: bool) -> Optional[tuple[int, int]]:
    bit = 1 << mode
    occupied = bool(word & bit)
    if occupied == dagger:
        return None
    sign = -1 if bin(word & (bit - 1)).count("1") & 1 else 1
    return word ^ bit, sign


def apply_string(word: int, ops: Sequence[Op]) -> Optional[tuple[int, int]]:
    """Apply ``ops[0] ops[1] ... ops[-1]`` to ``word`` (rightmost acts first)."""
    sign = 1
    for mode, dagger in reversed(ops):
        res = apply_op(word, mode, dagger)
        if res is None:
            return None
        word, s = res
        sign *= s
    return word, sign


def create_state(creators: Iterable[int]) -> tuple[int, int]:
    """``a*_{m0} a*_{m1} ... |vac>`` as ``(word, sign)``."""
    res = apply_string(0, [(m, True) for m in creators])
    if res is None:
        raise ValueError("repeated creation operator")
    return res


class KondoModes:
    """Mode indices for conduction (``c``) and localized (``f``) electrons."""

    def __init__(self, n: int):
        self.n = n
        self.count = 4 * n

    def c(self, x: int, spin: int) -> int:
        return x if spin == UP else self.n + x

    def f(self, x: int, spin: int) -> int:
        return (2 if spin == UP else 3) * self.n + x


class NTModes:
    """Mode indices for the Gutzwiller-projected ``d`` electrons."""

    def __init__(self, n: int):
        self.n = n
        self.count = 2 * n

    def d(self, x: int, spin: int) -> int:
        return x if spin == UP else self.n + x


def spin_bits_to_tuple(bits: int, n: int) -> tuple[int, ...]:
    """Bit ``y`` set means spin up at site ``y``."""
    return tuple(UP if (bits >> y) & 1 else DOWN for y in range(n))


def tuple_to_spin_bits(spins: Sequence[int]) -> int:
    return sum(1 << y for y, s in enumerate(spins) if s == UP)
