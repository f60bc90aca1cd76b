"""Torque-loss fault taxonomy for the 12-joint quadruped.

Conventions (fixed project-wide):
  leg order   : LF, RF, LR, RR                  (indices 0..3)
  joint order : hip abduction, thigh, knee      (indices 0..2 within a leg)
  mask index  : leg * 3 + joint                 (12-bit mask, 1 = torque lost)

A *fault class* is one of 11 cases: the normal case, one per single faulty
leg (4), and one per unordered pair of faulty legs (6).  Within a faulty leg
the concrete joint pattern is one of six scenarios: each single joint, or
each pair of joints.  A class therefore covers 6 (single-leg) or 36
(dual-leg) concrete masks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

NUM_LEGS = 4
JOINTS_PER_LEG = 3
NUM_JOINTS = NUM_LEGS * JOINTS_PER_LEG
NUM_FAULT_CLASSES = 11

LEG_NAMES = ("LF", "RF", "LR", "RR")
JOINT_NAMES = ("hip", "thigh", "knee")

# Six per-leg joint scenarios: the three single joints, then the three pairs.
LEG_SCENARIOS = (
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 1, 0),
    (1, 0, 1),
    (0, 1, 1),
)

# Class index -> tuple of faulty legs.  Index 0 is the normal case, 1..4 the
# single-leg cases in leg order, 5..10 the leg pairs in lexicographic order.
CLASS_LEGS = ((),) + tuple((i,) for i in range(NUM_LEGS)) + tuple(
    itertools.combinations(range(NUM_LEGS), 2)
)


def _label_from_legs(legs) -> tuple:
    return tuple(1 if i in legs else 0 for i in range(NUM_LEGS))


_LABEL_TO_CLASS = {_label_from_legs(legs): i for i, legs in enumerate(CLASS_LEGS)}


@dataclass(frozen=True)
class FaultCase:
    """A concrete torque-loss pattern over the 12 joints."""

    joint_fault_mask: tuple

    def __post_init__(self):
        mask = tuple(int(b) for b in self.joint_fault_mask)
        if len(mask) != NUM_JOINTS or any(b not in (0, 1) for b in mask):
            raise ValueError(f"mask must be 12 bits of 0/1, got {self.joint_fault_mask!r}")
        per_leg = [sum(mask[3 * leg : 3 * leg + 3]) for leg in range(NUM_LEGS)]
        if sum(1 for c in per_leg if c > 0) > 2:
            raise ValueError("at most 2 legs may contain faulty joints")
        if any(c > 2 for c in per_leg):
            raise ValueError("at most 2 faulty joints per leg")
        object.__setattr__(self, "joint_fault_mask", mask)

    @property
    def leg_label(self) -> tuple:
        """4-bit label: 1 for every leg containing at least one faulty joint."""
        m = self.joint_fault_mask
        return tuple(1 if any(m[3 * leg : 3 * leg + 3]) else 0 for leg in range(NUM_LEGS))

    @property
    def teacher_index(self) -> int:
        return _LABEL_TO_CLASS[self.leg_label]

    @property
    def is_normal(self) -> bool:
        return not any(self.joint_fault_mask)

    def mask_array(self, dtype=bool) -> np.ndarray:
        return np.asarray(self.joint_fault_mask, dtype=dtype)

    @classmethod
    def normal(cls) -> "FaultCase":
        return cls((0,) * NUM_JOINTS)

    @classmethod
    def from_legs(cls, leg_scenarios: dict) -> "FaultCase":
        """Build a case from {leg index: per-leg scenario triple}."""
        mask = [0] * NUM_JOINTS
        for leg, scen in leg_scenarios.items():
            for j, bit in enumerate(scen):
                mask[3 * leg + j] = int(bit)
        return cls(tuple(mask))


@dataclass(frozen=True)
class FaultClass:
    """One of the 11 fault cases; samples concrete masks from its scenarios."""

    index: int
    faulty_legs: tuple = field(default=())

    @property
    def leg_label(self) -> tuple:
        return _label_from_legs(self.faulty_legs)

    @property
    def name(self) -> str:
        if not self.faulty_legs:
            return "normal"
        return "+".join(LEG_NAMES[i] for i in self.faulty_legs)

    def sample(self, rng: np.random.Generator) -> FaultCase:
        """Draw a concrete mask: per faulty leg, one of the six scenarios."""
        scen = {leg: LEG_SCENARIOS[rng.integers(len(LEG_SCENARIOS))] for leg in self.faulty_legs}
        return FaultCase.from_legs(scen)

    def representative(self) -> FaultCase:
        """Canonical concrete mask: thigh+knee loss on every faulty leg."""
        return FaultCase.from_legs({leg: (0, 1, 1) for leg in self.faulty_legs})

    def concrete_cases(self) -> list:
        """Every concrete mask of this class (1, 6, or 36 cases)."""
        if not self.faulty_legs:
            return [FaultCase.normal()]
        combos = itertools.product(LEG_SCENARIOS, repeat=len(self.faulty_legs))
        return [FaultCase.from_legs(dict(zip(self.faulty_legs, c))) for c in combos]


def enumerate_fault_cases() -> list:
    """The 11 fault classes: normal, 4 single-leg, 6 dual-leg."""
    return [FaultClass(i, legs) for i, legs in enumerate(CLASS_LEGS)]


def class_from_label(label) -> int:
    """Class index for a 4-bit leg label; raises for >2 set bits."""
    key = tuple(int(b) for b in label)
    try:
        return _LABEL_TO_CLASS[key]
    except KeyError:
        raise ValueError(f"no fault class for leg label {key}") from None


def labels_matrix() -> np.ndarray:
    """(11, 4) array of class leg labels, row i = class i."""
    return np.array([_label_from_legs(legs) for legs in CLASS_LEGS], dtype=np.float32)
