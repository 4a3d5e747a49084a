"""Knowledge-balance registers for one link.

The imagined ontic state of a link is four bits::

    bit 3  A-proposal    bit 2  A-digest
    bit 1  B-proposal    bit 0  B-digest

Endpoint A's accessible half is {A-proposal, B-digest}: what it proposed
and what B last reflected to it. B's half is the mirror image. The two
halves are disjoint and together cover the ontic register, so neither
endpoint can ever know more than two bits.

Knowledge is tagged with the round (tensor-clock ``d``) it was learned
in. A position counts as *fresh* once learned in the current round;
advancing the round makes every position stale again.
"""

from __future__ import annotations

from dataclasses import dataclass

A_PROPOSAL, A_DIGEST, B_PROPOSAL, B_DIGEST = 3, 2, 1, 0
FULL = 0b1111

SIDE_MASK = {"A": (1 << A_PROPOSAL) | (1 << B_DIGEST), "B": (1 << B_PROPOSAL) | (1 << A_DIGEST)}
PROPOSAL_POS = {"A": A_PROPOSAL, "B": B_PROPOSAL}
DIGEST_POS = {"A": A_DIGEST, "B": B_DIGEST}


class KbpFault(Exception):
    pass


class DuplicateReflection(KbpFault):
    pass


class StaleRound(KbpFault):
    pass


def _positions(mask: int) -> list[int]:
    return [p for p in (3, 2, 1, 0) if mask >> p & 1]


def _compress(bits: int, mask: int) -> int:
    out = 0
    for p in _positions(mask):
        out = (out << 1) | (bits >> p & 1)
    return out


@dataclass(frozen=True)
class OntRegister:
    bits: int = 0

    def __post_init__(self):
        if not 0 <= self.bits <= FULL:
            raise ValueError(f"ontic register is 4 bits, got {self.bits!r}")

    def bit(self, pos: int) -> int:
        return self.bits >> pos & 1

    def with_bit(self, pos: int, value: int) -> "OntRegister":
        return OntRegister((self.bits & ~(1 << pos)) | ((value & 1) << pos))


@dataclass(frozen=True)
class EpiRegister:
    endpoint: str
    known_mask: int
    bits: int = 0  # values at the known positions, in ontic bit layout
    round: int = 0
    fresh_mask: int = 0

    @property
    def known_bits(self) -> int:
        """The two known bits packed high-position first."""
        return _compress(self.bits, self.known_mask)

    def bit(self, pos: int) -> int:
        return self.bits >> pos & 1


@dataclass(frozen=True)
class EpiFragment:
    """Bits carried by a reflection or commit-ack for one round."""

    mask: int
    bits: int
    round: int


def epi_init(endpoint: str) -> EpiRegister:
    return EpiRegister(endpoint, SIDE_MASK[endpoint])


def epi_view(ont: OntRegister, endpoint: str) -> EpiRegister:
    """Omniscient projection of the ontic register onto one endpoint's half.

    For the auditor only; endpoint logic never sees an OntRegister.
    """
    mask = SIDE_MASK[endpoint]
    return EpiRegister(endpoint, mask, ont.bits & mask)


def knowledge_balance_check(epi: EpiRegister) -> bool:
    return bin(epi.known_mask & FULL).count("1") == 2 and not epi.known_mask & ~FULL


def _advance(epi: EpiRegister, rnd: int) -> EpiRegister:
    if rnd < epi.round:
        raise StaleRound(f"round {rnd} is older than register round {epi.round}")
    if rnd > epi.round:
        return EpiRegister(epi.endpoint, epi.known_mask, epi.bits, rnd, 0)
    return epi


def retire(epi: EpiRegister) -> EpiRegister:
    """Forget what was learned in an attempt that did not complete.

    An aborted attempt does not advance the round, so its bits would
    otherwise still count as fresh for the next attempt.
    """
    return EpiRegister(epi.endpoint, epi.known_mask, epi.bits, epi.round, 0)


def set_own_proposal(epi: EpiRegister, value: int, rnd: int) -> EpiRegister:
    epi = _advance(epi, rnd)
    pos = PROPOSAL_POS[epi.endpoint]
    bits = (epi.bits & ~(1 << pos)) | ((value & 1) << pos)
    return EpiRegister(epi.endpoint, epi.known_mask, bits, rnd, epi.fresh_mask | (1 << pos))


def merge_reflection(local: EpiRegister, reflected: EpiFragment) -> EpiRegister:
    """Fold a peer's reflected bits into this endpoint's half.

    The fragment must land on positions this endpoint has not yet learned
    in the fragment's round; it replaces the stale value held there, so
    the register still knows exactly two positions afterwards.
    """
    local = _advance(local, reflected.round)
    if reflected.mask & local.fresh_mask:
        raise DuplicateReflection(
            f"{local.endpoint}: positions {reflected.mask:04b} already known in round {reflected.round}"
        )
    if reflected.mask & ~local.known_mask:
        raise KbpFault(f"{local.endpoint}: fragment {reflected.mask:04b} outside own half")
    bits = (local.bits & ~reflected.mask) | (reflected.bits & reflected.mask)
    return EpiRegister(local.endpoint, local.known_mask, bits, reflected.round,
                       local.fresh_mask | reflected.mask)


def digest_fragment(endpoint: str, digest_bit: int, rnd: int) -> EpiFragment:
    """Fragment carrying ``endpoint``'s digest bit to its peer."""
    pos = DIGEST_POS[endpoint]
    return EpiFragment(1 << pos, (digest_bit & 1) << pos, rnd)


def _self_consistent(epi: EpiRegister) -> bool:
    a, b = _positions(epi.known_mask)
    return epi.fresh_mask == epi.known_mask and epi.bit(a) == epi.bit(b)


def commit_eligible(epi_a: EpiRegister, epi_b: EpiRegister) -> bool:
    """Complementary halves, both learned this round, each internally consistent."""
    if epi_a.round != epi_b.round:
        raise StaleRound(f"round mismatch: {epi_a.round} vs {epi_b.round}")
    if epi_a.known_mask & epi_b.known_mask:
        raise KbpFault("overlapping epistemic masks")
    if (epi_a.known_mask | epi_b.known_mask) != FULL:
        return False
    return _self_consistent(epi_a) and _self_consistent(epi_b)


def agrees_with_ont(epi: EpiRegister, ont: OntRegister) -> bool:
    """Fresh positions of ``epi`` match the ontic register."""
    m = epi.fresh_mask
    return (epi.bits & m) == (ont.bits & m)
