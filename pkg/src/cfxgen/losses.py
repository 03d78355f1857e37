"""Loss terms and composite objective for counterfactual translation training.

Five components feed the objective: two adversarial terms (one per
translation direction, least-squares by default with an optional log form),
an L1 cycle-reconstruction term, an L1 identity term, and the counterfactual
term that penalizes the squared distance between the frozen classifier's
softmax output on a translated image and the opposite-class target vector.
Setting the identity and counterfactual weights to zero recovers the plain
cycle-consistent objective.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .classifier import ProbPair

LEAST_SQUARES = "least_squares"
LOG_FORM = "log"


class LossShapeError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    lambda_cycle: float = 10.0
    mu_identity: float = 1.0
    gamma_counter: float = 1.0
    target_y: ProbPair = ProbPair(0.0, 1.0)  # counter-loss target for G outputs
    target_x: ProbPair = ProbPair(1.0, 0.0)  # counter-loss target for F outputs

    def __post_init__(self) -> None:
        for name in ("lambda_cycle", "mu_identity", "gamma_counter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def _check_batch(batch: torch.Tensor, name: str) -> None:
    if batch.ndim != 4 or batch.shape[0] == 0:
        raise LossShapeError(f"{name} must be a nonempty (N, C, H, W) batch, got {tuple(batch.shape)}")


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape[1:] != b.shape[1:]:
        raise LossShapeError(f"{what}: image shapes differ ({tuple(a.shape)} vs {tuple(b.shape)})")


def _target_tensor(target: ProbPair, like: torch.Tensor) -> torch.Tensor:
    return torch.tensor(target.as_tuple(), dtype=like.dtype, device=like.device)


# score-level math, shared by the standalone ops and the composite objective


def _adv_d_term(real_scores: torch.Tensor, fake_scores: torch.Tensor, form: str) -> torch.Tensor:
    if form == LEAST_SQUARES:
        return (real_scores - 1.0).pow(2).mean() + fake_scores.pow(2).mean()
    if form == LOG_FORM:
        return F.binary_cross_entropy_with_logits(
            real_scores, torch.ones_like(real_scores)
        ) + F.binary_cross_entropy_with_logits(fake_scores, torch.zeros_like(fake_scores))
    raise ValueError(f"unknown adversarial form {form!r}")


def _adv_g_term(fake_scores: torch.Tensor, form: str) -> torch.Tensor:
    if form == LEAST_SQUARES:
        return (fake_scores - 1.0).pow(2).mean()
    if form == LOG_FORM:
        # non-saturating generator form; stays nonnegative
        return F.binary_cross_entropy_with_logits(fake_scores, torch.ones_like(fake_scores))
    raise ValueError(f"unknown adversarial form {form!r}")


def _mae(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return (a - b).abs().mean()


def _sq_dist_to_target(probs: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    # mean over the batch of the squared L2 distance per sample
    return (probs - target).pow(2).sum(dim=1).mean()


# ---------------------------------------------------------------------------
# Standalone loss operations


def adversarial_loss(
    d: nn.Module,
    real_batch: torch.Tensor,
    fake_batch: torch.Tensor,
    form: str = LEAST_SQUARES,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Returns (d_loss, g_loss) over per-patch scores.

    Least-squares form: d_loss = mean (D(real)-1)^2 + mean D(fake)^2 and
    g_loss = mean (D(fake)-1)^2. Detach ``fake_batch`` when the result drives
    a discriminator update only.
    """
    _check_batch(real_batch, "real_batch")
    _check_batch(fake_batch, "fake_batch")
    _check_same_shape(real_batch, fake_batch, "adversarial_loss")
    real_scores = d(real_batch)
    fake_scores = d(fake_batch)
    return _adv_d_term(real_scores, fake_scores, form), _adv_g_term(fake_scores, form)


def cycle_loss(
    g: nn.Module, f: nn.Module, x_batch: torch.Tensor, y_batch: torch.Tensor
) -> torch.Tensor:
    """Mean |F(G(x)) - x| plus mean |G(F(y)) - y|; zero iff both cycles reconstruct."""
    _check_batch(x_batch, "x_batch")
    _check_batch(y_batch, "y_batch")
    return _mae(f(g(x_batch)), x_batch) + _mae(g(f(y_batch)), y_batch)


def identity_loss(
    g: nn.Module, f: nn.Module, x_batch: torch.Tensor, y_batch: torch.Tensor
) -> torch.Tensor:
    """Mean |G(y) - y| plus mean |F(x) - x|: generators must fix their target domain."""
    _check_batch(x_batch, "x_batch")
    _check_batch(y_batch, "y_batch")
    return _mae(g(y_batch), y_batch) + _mae(f(x_batch), x_batch)


def counter_loss(
    g: nn.Module,
    f: nn.Module,
    classifier_net: nn.Module,
    x_batch: torch.Tensor,
    y_batch: torch.Tensor,
    weights: LossWeights,
) -> torch.Tensor:
    """Squared distance between classifier softmax on translations and the flip targets.

    Gradients flow through G and F (and through the classifier's input), but
    the classifier's parameters must be frozen by the caller.
    """
    _check_batch(x_batch, "x_batch")
    _check_batch(y_batch, "y_batch")
    probs_gx = classifier_net(g(x_batch))
    probs_fy = classifier_net(f(y_batch))
    return _sq_dist_to_target(probs_gx, _target_tensor(weights.target_y, probs_gx)) + _sq_dist_to_target(
        probs_fy, _target_tensor(weights.target_x, probs_fy)
    )


# ---------------------------------------------------------------------------
# Composite objective


@dataclass
class ObjectiveBreakdown:
    components: dict[str, torch.Tensor] = field(default_factory=dict)
    generator_total: torch.Tensor | None = None
    discriminator_total: torch.Tensor | None = None

    def scalar_components(self) -> dict[str, float]:
        return {k: float(v.detach()) for k, v in self.components.items()}


def total_objective(
    bundle,
    classifier_net: nn.Module,
    x_batch: torch.Tensor,
    y_batch: torch.Tensor,
    weights: LossWeights,
    form: str = LEAST_SQUARES,
) -> ObjectiveBreakdown:
    """Evaluate every component once and compose the two optimization totals.

    ``bundle`` provides the four networks as attributes g, f, d_x, d_y (a
    GanBundle or any equivalent holder). The generator total owns the g-side
    adversarial terms plus the weighted cycle, identity and counterfactual
    terms; the discriminator total owns the d-side adversarial terms. With
    gamma = mu = 0 this reduces to the plain cycle-consistent objective.
    """
    _check_batch(x_batch, "x_batch")
    _check_batch(y_batch, "y_batch")
    g, f, d_x, d_y = bundle.g, bundle.f, bundle.d_x, bundle.d_y

    fake_y = g(x_batch)
    fake_x = f(y_batch)

    adv_dy = _adv_d_term(d_y(y_batch), d_y(fake_y.detach()), form)
    adv_dx = _adv_d_term(d_x(x_batch), d_x(fake_x.detach()), form)
    adv_g = _adv_g_term(d_y(fake_y), form)
    adv_f = _adv_g_term(d_x(fake_x), form)

    cycle = _mae(f(fake_y), x_batch) + _mae(g(fake_x), y_batch)
    identity = _mae(g(y_batch), y_batch) + _mae(f(x_batch), x_batch)

    probs_gx = classifier_net(fake_y)
    probs_fy = classifier_net(fake_x)
    counter = _sq_dist_to_target(probs_gx, _target_tensor(weights.target_y, probs_gx)) + _sq_dist_to_target(
        probs_fy, _target_tensor(weights.target_x, probs_fy)
    )

    breakdown = ObjectiveBreakdown(
        components=dict(
            adv_g=adv_g,
            adv_f=adv_f,
            adv_dx=adv_dx,
            adv_dy=adv_dy,
            cycle=cycle,
            identity=identity,
            counter=counter,
        )
    )
    breakdown.generator_total = (
        adv_g
        + adv_f
        + weights.lambda_cycle * cycle
        + weights.mu_identity * identity
        + weights.gamma_counter * counter
    )
    breakdown.discriminator_total = adv_dx + adv_dy
    return breakdown
