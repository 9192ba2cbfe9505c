"""
Shared sample objects with hand-checked values.

The three-plane family at n=3 has duals span{001}, span{100}, span{010}
(bit strings list x_1 first). Its union covers every point except 111, so
mu puts 1/2 on 111, 1/8 on 000, 1/12 on each weight-1 point and 1/24 on
each weight-2 point. It is a (1, 1)-dual design with epsilon* = 1/96.
"""

from fractions import Fraction

from larclab.core.designs import SubspaceFamily
from larclab.core.f2core import Subspace, dual_space

THREE_PLANE_DUALS = [["001"], ["100"], ["010"]]

THREE_PLANE_MU = {
    "000": Fraction(1, 8),
    "100": Fraction(1, 12),
    "010": Fraction(1, 12),
    "001": Fraction(1, 12),
    "110": Fraction(1, 24),
    "101": Fraction(1, 24),
    "011": Fraction(1, 24),
    "111": Fraction(1, 2),
}

THREE_PLANE_EPS_STAR = Fraction(1, 96)


def three_plane_family() -> SubspaceFamily:
    members = tuple(dual_space(Subspace.from_strings(lines)) for lines in THREE_PLANE_DUALS)
    return SubspaceFamily(3, members, {"name": "three-plane"})


def bits(text: str) -> int:
    """Packed int of a bit string with x_1 first."""
    return sum(1 << i for i, ch in enumerate(text) if ch == "1")


# A pairwise-trivial family at n=4: two planes meeting only at 0.
PAIRWISE_TRIVIAL_4 = [["1000", "0100"], ["0010", "0001"]]


def pairwise_trivial_family() -> SubspaceFamily:
    return SubspaceFamily.from_strings(PAIRWISE_TRIVIAL_4, 4)
