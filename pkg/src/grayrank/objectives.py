"""Training objectives over matching scores.

Each loss returns a LossValue holding its value and the partial
derivative with respect to every score it was given, grouped by tier:
d_r for the ground truth, d_e for retrieval responses, d_g for
generation responses and d_rand for random ones. A hinge whose argument
is exactly zero is inactive and contributes no gradient.

Tier arguments other than the ground truth accept one score or a
sequence; with several members the tier's hinges are averaged. An empty
middle tier makes its loss zero.
"""


from dataclasses import dataclass
from dataclasses import field
import math
import numpy as np


BCE_EPSILON = 1e-7


def _empty():
    return np.zeros(0)


@dataclass
class LossValue:
    value: float
    d_r: float = 0.0
    d_e: np.ndarray = field(default_factory=_empty)
    d_g: np.ndarray = field(default_factory=_empty)
    d_rand: np.ndarray = field(default_factory=_empty)

    def __add__(self, other):
        return LossValue(self.value + other.value,
                         self.d_r + other.d_r,
                         _add(self.d_e, other.d_e),
                         _add(self.d_g, other.d_g),
                         _add(self.d_rand, other.d_rand))


def _add(a, b):
    if not a.size:
        return b.copy()
    if not b.size:
        return a.copy()
    return a + b


def _scores(x):
    return np.atleast_1d(np.asarray(x, dtype=np.float64))


def hinge(margin, s_hi, s_lo):
    """Returns max(0, margin - s_hi + s_lo) with its two partials.

    The partials are returned as d_r (for s_hi) and d_rand[0] (for s_lo).
    """
    arg = margin - s_hi + s_lo
    if arg > 0:
        return LossValue(arg, -1.0, d_rand=np.array([1.0]))
    return LossValue(0.0, 0.0, d_rand=np.array([0.0]))


def loss_ran(margin, s_r, s_rand):
    """Ground truth above random, averaged over the random scores."""
    s_rand = _scores(s_rand)
    if not s_rand.size:
        return LossValue(0.0)
    args = margin - s_r + s_rand
    active = args > 0
    n = s_rand.size
    return LossValue(float(np.where(active, args, 0.0).sum() / n),
                     -float(active.sum()) / n,
                     d_rand=active / n)


def _chain(margin, s_r, s_mid, s_rand):
    """Averages hinge(r, m) + hinge(m, rand) over the middle tier.

    Returns (value, d_r, d_mid, d_rand) with d_rand summed over members.
    """
    s_mid = _scores(s_mid)
    n = s_mid.size
    if not n:
        return 0.0, 0.0, _empty(), 0.0
    upper = margin - s_r + s_mid
    lower = margin - s_mid + s_rand
    up_active = upper > 0
    low_active = lower > 0
    value = (np.where(up_active, upper, 0.0).sum()
             + np.where(low_active, lower, 0.0).sum()) / n
    d_r = -float(up_active.sum()) / n
    d_mid = (up_active.astype(np.float64) - low_active) / n
    d_rand = float(low_active.sum()) / n
    return float(value), d_r, d_mid, d_rand


def loss_ret(margin, s_r, s_e, s_rand):
    """Ground truth above retrieval above random."""
    value, d_r, d_e, d_rand = _chain(margin, s_r, s_e, s_rand)
    return LossValue(value, d_r, d_e=d_e, d_rand=np.array([d_rand]))


def loss_gen(margin, s_r, s_g, s_rand):
    """Ground truth above generation above random."""
    value, d_r, d_g, d_rand = _chain(margin, s_r, s_g, s_rand)
    return LossValue(value, d_r, d_g=d_g, d_rand=np.array([d_rand]))


def loss_uni(margin, s_r, s_e, s_g, s_rand):
    """loss_ran + loss_ret + loss_gen; missing tiers contribute zero."""
    return (loss_ran(margin, s_r, s_rand) + loss_ret(margin, s_r, s_e, s_rand)
            + loss_gen(margin, s_r, s_g, s_rand))


def loss_bce(s_pos, s_negs):
    """Negated binary log-likelihood, averaged over the negatives.

    Scores are clamped to [1e-7, 1 - 1e-7]; a clamped score has zero
    partial.
    """
    s_negs = _scores(s_negs)
    pos = min(max(s_pos, BCE_EPSILON), 1 - BCE_EPSILON)
    negs = np.clip(s_negs, BCE_EPSILON, 1 - BCE_EPSILON)
    n = s_negs.size
    value = -math.log(pos)
    d_pos = -1.0 / pos if pos == s_pos else 0.0
    d_negs = np.zeros(n)
    if n:
        value -= float(np.log1p(-negs).sum()) / n
        d_negs = np.where(negs == s_negs, 1.0 / (1.0 - negs), 0.0) / n
    return LossValue(value, d_pos, d_rand=d_negs)
