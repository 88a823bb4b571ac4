"""Verdict vocabulary shared by the four detectors and the decision board."""

from __future__ import annotations

from enum import Enum
from typing import NamedTuple


class Verdict(Enum):
    NOISY = "noisy"
    CLEAN = "clean"


class Consensus(Enum):
    NOISY = "noisy"
    CLEAN = "clean"
    UNCERTAIN = "uncertain"


DETECTOR_IDS = ("NF1", "NF2", "NF3", "NF4")


class VoteSet(NamedTuple):
    key: tuple[int, int]
    votes: dict[str, Verdict]
    consensus: Consensus
