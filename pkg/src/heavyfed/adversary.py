"""Byzantine device behaviour: subset selection and message corruption.

The adversary is omniscient: it observes every would-be honest wire message
before choosing what the Byzantine devices send.  It never touches local
datasets, only uploads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig

ATTACK_KINDS = ("none", "sign_flip", "large_value", "gaussian_noise", "mean_shift")

_DEFAULT_STRENGTH = {
    "none": 0.0,
    "sign_flip": 5.0,       # flip-and-scale factor on the good mean
    "large_value": 100.0,   # magnitude of the all-ones upload
    "gaussian_noise": 1.0,  # noise standard deviation
    "mean_shift": 1.0,      # shift in units of the good coordinate-wise std
}


def default_strength(kind: str) -> float:
    if kind not in ATTACK_KINDS:
        raise InvalidConfig(f"unknown attack kind {kind!r}")
    return _DEFAULT_STRENGTH[kind]


@dataclass(frozen=True)
class AttackSpec:
    """Attack family, its strength parameter, and the Byzantine population."""

    kind: str = "none"
    strength: float = 0.0
    alpha: float = 0.0
    dynamic: bool = False

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise InvalidConfig(f"unknown attack kind {self.kind!r}")
        if not 0.0 <= self.alpha < 0.5:
            raise InvalidConfig(f"byzantine fraction alpha must lie in [0, 0.5), got {self.alpha}")
        if not math.isfinite(self.strength) or self.strength < 0.0:
            raise InvalidConfig(f"attack strength must be finite and >= 0, got {self.strength}")


def byzantine_count(alpha: float, m: int) -> int:
    """floor(alpha * m), tolerant of fp noise in the product."""
    if not 0.0 <= alpha < 0.5:
        raise InvalidConfig(f"alpha must lie in [0, 0.5), got {alpha}")
    return int(math.floor(round(alpha * m, 12)))


def select_byzantine(m: int, alpha: float, dynamic: bool, round_index: int, seed) -> frozenset:
    """Byzantine device subset for one round.

    Static sets are identical every round for a given seed; dynamic sets are
    re-drawn per round, still deterministically.
    """
    count = byzantine_count(alpha, m)
    if count == 0:
        return frozenset()
    key = (1 + round_index,) if dynamic else (0,)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))
    return frozenset(int(i) for i in rng.choice(m, size=count, replace=False))


def corrupt(attack: AttackSpec, honest_uploads, byz_set, rng) -> list:
    """Replace the uploads of ``byz_set``; everything else passes through.

    ``honest_uploads`` must hold the would-be honest message of every device
    (the adversary sees them all).  Statistics of the good uploads are taken
    over devices outside ``byz_set`` only.
    """
    uploads = [np.asarray(u, dtype=float) for u in honest_uploads]
    if attack.kind == "none" or not byz_set:
        return uploads
    good = np.asarray([u for i, u in enumerate(uploads) if i not in byz_set])
    if good.shape[0] == 0:
        raise InvalidConfig("corrupt needs at least one good device")
    good_mean = good.mean(axis=0)
    out = list(uploads)
    for i in sorted(byz_set):
        if attack.kind == "sign_flip":
            out[i] = -attack.strength * good_mean
        elif attack.kind == "large_value":
            out[i] = np.full(good_mean.shape, attack.strength)
        elif attack.kind == "gaussian_noise":
            out[i] = uploads[i] + rng.normal(0.0, attack.strength, size=good_mean.shape)
        else:  # mean_shift: hide just outside the good cluster
            out[i] = good_mean + attack.strength * good.std(axis=0)
    return out
