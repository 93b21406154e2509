"""Multi-task training objective.

Stage 1 is supervised per mapping block with a signal-distortion index in dB
(error energy over reference energy); the per-block terms are summed over
both streams. Stage 2 minimizes negative SI-SNR of the enhanced waveform
against the clean reference. Total = gamma * stage1_sum + stage2.

All functions accept torch tensors (differentiable) of shape (..., N) and
reduce over the last axis, averaging any leading batch axes.
"""

from dataclasses import dataclass

import torch

from .errors import DegenerateInputError, InvalidInputError, TrainingFaultError

# relative energy floor; small enough to leave -20 dB anchors intact at 1e-9
SDI_FLOOR_REL = 1e-12
SI_SNR_FLOOR_REL = 1e-10
SI_SNR_CAP_DB = 60.0
DEFAULT_GAMMA = 0.01


@dataclass
class LossReport:
    """Per-step loss breakdown; l_total = gamma * l_sm + l_re exactly."""

    l_sm_per_block: list  # N entries of [left_db, right_db]
    l_sm: float
    l_re: float
    l_total: float
    gamma: float = DEFAULT_GAMMA

    def to_dict(self) -> dict:
        return {
            "l_sm_per_block": self.l_sm_per_block,
            "l_sm": self.l_sm,
            "l_re": self.l_re,
            "l_total": self.l_total,
            "gamma": self.gamma,
        }


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(x, dtype=torch.float64)


def sdi_loss(y_ref, y_hat, floor_rel: float = SDI_FLOOR_REL) -> torch.Tensor:
    """Signal-distortion index 10*log10(E[(ref-hat)^2] / E[ref^2]) in dB.

    An additive power floor of floor_rel * E[ref^2] on both numerator and
    denominator keeps the perfect-reconstruction case finite.
    """
    y_ref, y_hat = _as_tensor(y_ref), _as_tensor(y_hat)
    if y_ref.shape != y_hat.shape:
        raise InvalidInputError("reference/estimate lengths differ")
    ref_pow = (y_ref**2).mean(dim=-1)
    if torch.any(ref_pow == 0):
        raise DegenerateInputError("zero-energy reference in signal-distortion index")
    err_pow = ((y_ref - y_hat) ** 2).mean(dim=-1)
    floor = floor_rel * ref_pow
    return (10.0 * torch.log10((err_pow + floor) / (ref_pow + floor))).mean()


def sm_loss(y_refs_l, y_refs_r, y_hats_l, y_hats_r, floor_rel: float = SDI_FLOOR_REL):
    """Sum of left+right signal-distortion indices over all mapping blocks.

    Returns (total, per_block) with per_block a list of (left, right) tensors.
    """
    if not (len(y_refs_l) == len(y_refs_r) == len(y_hats_l) == len(y_hats_r)):
        raise InvalidInputError("per-block loss lists differ in length")
    per_block = []
    total = None
    for ref_l, ref_r, hat_l, hat_r in zip(y_refs_l, y_refs_r, y_hats_l, y_hats_r):
        left = sdi_loss(ref_l, hat_l, floor_rel)
        right = sdi_loss(ref_r, hat_r, floor_rel)
        per_block.append((left, right))
        total = left + right if total is None else total + left + right
    return total, per_block


def si_snr(s_ref, s_hat, floor_rel: float = SI_SNR_FLOOR_REL,
           cap_db: float = SI_SNR_CAP_DB) -> torch.Tensor:
    """Scale-invariant SNR in dB (higher is better), capped at cap_db.

    Both signals are mean-removed; the estimate is projected onto the
    reference and the residual is treated as error.
    """
    s_ref, s_hat = _as_tensor(s_ref), _as_tensor(s_hat)
    if s_ref.shape != s_hat.shape:
        raise InvalidInputError("reference/estimate lengths differ")
    s = s_ref - s_ref.mean(dim=-1, keepdim=True)
    est = s_hat - s_hat.mean(dim=-1, keepdim=True)
    ref_pow = (s**2).sum(dim=-1, keepdim=True)
    if torch.any(ref_pow == 0):
        raise DegenerateInputError("zero-energy reference in SI-SNR")
    target = (est * s).sum(dim=-1, keepdim=True) / ref_pow * s
    err = est - target
    t_pow = (target**2).sum(dim=-1)
    e_pow = (err**2).sum(dim=-1)
    snr = 10.0 * torch.log10(t_pow / (e_pow + floor_rel * t_pow.detach().clamp_min(1e-30)))
    return snr.clamp_max(cap_db).mean()


def total_loss(y_refs_l, y_refs_r, y_hats_l, y_hats_r, s_ref, s_pre,
               gamma: float = DEFAULT_GAMMA):
    """Combined objective. Returns (scalar tensor, LossReport)."""
    l_sm, per_block = sm_loss(y_refs_l, y_refs_r, y_hats_l, y_hats_r)
    l_re = -si_snr(s_ref, s_pre)
    for i, (left, right) in enumerate(per_block):
        if not (torch.isfinite(left) and torch.isfinite(right)):
            raise TrainingFaultError(f"non-finite mapping loss at block {i}")
    if not torch.isfinite(l_re):
        raise TrainingFaultError("non-finite reconstruction loss")
    l_tot = gamma * l_sm + l_re
    report = LossReport(
        l_sm_per_block=[[float(lft.detach()), float(rgt.detach())] for lft, rgt in per_block],
        l_sm=float(l_sm.detach()),
        l_re=float(l_re.detach()),
        l_total=float(l_tot.detach()),
        gamma=gamma,
    )
    return l_tot, report
