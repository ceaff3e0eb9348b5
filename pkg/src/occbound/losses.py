"""Pixel-classification losses with analytic first derivatives.

All binary-classification losses share the convention: ``p`` is the
predicted boundary probability, ``b`` the {0, 1} ground-truth label, and
``alpha`` the batch fraction of non-boundary pixels (so positives get the
large weight under extreme imbalance). Probabilities are clamped to
``[eps, 1 - eps]`` before any ``log`` or negative power, because the
derivative of the attention modulator diverges at p -> 1 for gamma < 1
and the log diverges at p -> 0.

Losses implemented:

* ``cce``       class-balanced cross entropy
                ``-alpha*log(p)`` / ``-(1-alpha)*log(1-p)``
* ``focal``     ``-a*(1-p)^g*log(p)`` / ``-(1-a)*p^g*log(1-p)``
* ``attention`` cross entropy scaled by ``beta^((1-p)^gamma)`` on the
                positive branch and ``beta^(p^gamma)`` on the negative
                branch; equals ``cce`` exactly when ``beta == 1``
* ``smooth_l1`` quadratic ``0.5*(sigma*x)^2`` for ``|x| < 1/sigma^2``,
                ``|x| - 0.5/sigma^2`` beyond (C1 at the branch point)
* ``angle_fold`` signed orientation residual that additionally penalizes
                predictions outside (-pi, pi]

Every function returns ``(value, d value / d input)``; derivatives are
taken with respect to the clamped probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .angles import ANGLE_SLACK
from .errors import ParameterError, ValidationError
from .maps import GroundTruth, validate_binary_map, validate_map

DEFAULT_EPS = 1e-6
DEFAULT_BETA = 4.0
DEFAULT_GAMMA = 0.5
DEFAULT_SIGMA = 3.0
DEFAULT_LAMBDA = 0.5
DEFAULT_FOCAL_ALPHA = 0.25
DEFAULT_FOCAL_GAMMA = 2.0


@dataclass(frozen=True)
class AttentionParams:
    """Modulation base ``beta > 0`` and exponent ``gamma >= 0``."""

    beta: float = DEFAULT_BETA
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError(f"beta must be > 0, got {self.beta}")
        if not self.gamma >= 0:
            raise ParameterError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class FocalParams:
    alpha_fl: float = DEFAULT_FOCAL_ALPHA
    gamma_fl: float = DEFAULT_FOCAL_GAMMA

    def __post_init__(self):
        if not 0.0 < self.alpha_fl < 1.0:
            raise ParameterError(f"alpha_fl must lie in (0, 1), got {self.alpha_fl}")
        if not self.gamma_fl >= 0:
            raise ParameterError(f"gamma_fl must be >= 0, got {self.gamma_fl}")


@dataclass(frozen=True)
class MultiTaskParams:
    """Joint boundary + orientation objective parameters."""

    attention: AttentionParams = field(default_factory=AttentionParams)
    sigma: float = DEFAULT_SIGMA
    lam: float = DEFAULT_LAMBDA
    clamp_eps: float = DEFAULT_EPS

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be > 0, got {self.sigma}")
        if not self.lam >= 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if not 0.0 < self.clamp_eps < 0.01:
            raise ParameterError(
                f"clamp_eps must lie in (0, 0.01), got {self.clamp_eps}")


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")


def _check_prob(p):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ParameterError("p must lie in [0, 1]")
    return p


def _as_input_shape(p_in, *values):
    if np.ndim(p_in) == 0:
        return tuple(float(v) for v in values)
    return values


def compute_alpha(gts):
    """Non-boundary pixel fraction over a whole batch of boundary maps."""
    if not gts:
        raise ParameterError("compute_alpha requires a nonempty batch")
    zeros = 0
    total = 0
    for g in gts:
        g = validate_binary_map(g)
        zeros += int(np.count_nonzero(g == 0.0))
        total += g.size
    return zeros / total


def cce(p, b, alpha, eps=DEFAULT_EPS):
    """Class-balanced cross entropy; returns (loss, dloss/dp)."""
    _check_alpha(alpha)
    pa = _check_prob(p)
    b = np.asarray(b, dtype=np.float64)
    pc = np.clip(pa, eps, 1.0 - eps)
    loss_pos = -alpha * np.log(pc)
    loss_neg = -(1.0 - alpha) * np.log(1.0 - pc)
    grad_pos = -alpha / pc
    grad_neg = (1.0 - alpha) / (1.0 - pc)
    loss = np.where(b == 1.0, loss_pos, loss_neg)
    grad = np.where(b == 1.0, grad_pos, grad_neg)
    return _as_input_shape(p, loss, grad)


def focal(p, b, params: FocalParams, eps=DEFAULT_EPS):
    """Focal loss with the symmetric negative branch; (loss, dloss/dp)."""
    a, g = params.alpha_fl, params.gamma_fl
    pa = _check_prob(p)
    b = np.asarray(b, dtype=np.float64)
    pc = np.clip(pa, eps, 1.0 - eps)
    q = 1.0 - pc
    loss_pos = -a * q**g * np.log(pc)
    loss_neg = -(1.0 - a) * pc**g * np.log(q)
    # d/dp[-a (1-p)^g log p] = a g (1-p)^(g-1) log p - a (1-p)^g / p
    grad_pos = a * g * q ** (g - 1.0) * np.log(pc) - a * q**g / pc
    grad_neg = -(1.0 - a) * g * pc ** (g - 1.0) * np.log(q) + (1.0 - a) * pc**g / q
    loss = np.where(b == 1.0, loss_pos, loss_neg)
    grad = np.where(b == 1.0, grad_pos, grad_neg)
    return _as_input_shape(p, loss, grad)


def attention(p, b, alpha, params: AttentionParams, eps=DEFAULT_EPS):
    """Attention loss: cross entropy scaled by an exponential modulator.

    Positive branch ``-alpha * beta^((1-p)^gamma) * log(p)``, negative
    branch ``-(1-alpha) * beta^(p^gamma) * log(1-p)``. Returns
    ``(loss, dloss/dp)``.
    """
    _check_alpha(alpha)
    beta, gamma = params.beta, params.gamma
    pa = _check_prob(p)
    b = np.asarray(b, dtype=np.float64)
    pc = np.clip(pa, eps, 1.0 - eps)
    q = 1.0 - pc
    log_beta = np.log(beta)

    mod_pos = beta ** (q**gamma)
    mod_neg = beta ** (pc**gamma)
    loss_pos = -alpha * mod_pos * np.log(pc)
    loss_neg = -(1.0 - alpha) * mod_neg * np.log(q)
    # d mod_pos/dp = -mod_pos * log(beta) * gamma * (1-p)^(gamma-1)
    dmod_pos = -mod_pos * log_beta * gamma * q ** (gamma - 1.0)
    dmod_neg = mod_neg * log_beta * gamma * pc ** (gamma - 1.0)
    grad_pos = -alpha * (dmod_pos * np.log(pc) + mod_pos / pc)
    grad_neg = -(1.0 - alpha) * (dmod_neg * np.log(q) - mod_neg / q)
    loss = np.where(b == 1.0, loss_pos, loss_neg)
    grad = np.where(b == 1.0, grad_pos, grad_neg)
    return _as_input_shape(p, loss, grad)


def smooth_l1(x, sigma):
    """Piecewise smooth-L1; quadratic for |x| < 1/sigma^2. (loss, dloss/dx).

    The quadratic/linear switch at ``1/sigma^2`` (not 1) keeps the
    function continuous with derivative 1 on both sides of the branch
    point for every sigma.
    """
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    xa = np.asarray(x, dtype=np.float64)
    cut = 1.0 / (sigma * sigma)
    quad = np.abs(xa) < cut
    loss = np.where(quad, 0.5 * (sigma * xa) ** 2, np.abs(xa) - 0.5 * cut)
    grad = np.where(quad, sigma * sigma * xa, np.sign(xa))
    return _as_input_shape(x, loss, grad)


def angle_fold(theta, theta_gt):
    """Signed orientation residual, exactly the printed branch rule.

    Returns ``theta + theta_gt`` when (theta > pi and theta_gt > 0) or
    (theta < -pi and theta_gt < 0), else ``theta - theta_gt``, so
    out-of-range predictions are penalized harder. The residual does not
    wrap across the +-pi seam: theta=3.0 vs theta_gt=-3.0 yields 6.0
    although the angles nearly coincide. d residual / d theta = 1 in
    every branch.
    """
    ta = np.asarray(theta, dtype=np.float64)
    tg = np.asarray(theta_gt, dtype=np.float64)
    hi = np.pi + ANGLE_SLACK
    if np.any(tg <= -hi) or np.any(tg > hi):
        raise ParameterError("theta_gt must lie in (-pi, pi]")
    add = ((ta > np.pi) & (tg > 0)) | ((ta < -np.pi) & (tg < 0))
    out = np.where(add, ta + tg, ta - tg)
    return float(out) if np.ndim(theta) == 0 and np.ndim(theta_gt) == 0 else out


def orientation_loss(pred_o, gt: GroundTruth, sigma):
    """Smooth-L1 of folded orientation residuals on boundary pixels only.

    Returns the summed loss and a gradient map that is zero wherever the
    ground-truth boundary is zero.
    """
    pred_o = validate_map(pred_o, "pred orientation")
    if pred_o.shape != gt.boundary.shape:
        raise ValidationError(
            f"pred orientation shape {pred_o.shape} differs from gt {gt.boundary.shape}")
    mask = np.asarray(gt.boundary) == 1.0
    grad = np.zeros(pred_o.shape, dtype=np.float64)
    if not mask.any():
        return 0.0, grad
    x = angle_fold(np.asarray(pred_o, dtype=np.float64)[mask],
                   np.asarray(gt.orientation, dtype=np.float64)[mask])
    loss_px, grad_px = smooth_l1(x, sigma)
    grad[mask] = grad_px
    return float(np.sum(loss_px)), grad


def boundary_loss(p, b, alpha, kind="attention",
                  attention_params: AttentionParams | None = None,
                  focal_params: FocalParams | None = None,
                  eps=DEFAULT_EPS):
    """Dispatch between the three boundary-classification losses."""
    if kind == "cce":
        return cce(p, b, alpha, eps)
    if kind == "focal":
        return focal(p, b, focal_params or FocalParams(), eps)
    if kind == "attention":
        return attention(p, b, alpha, attention_params or AttentionParams(), eps)
    raise ParameterError(f"unknown loss kind {kind!r}")


def multitask_loss(preds, gts, params: MultiTaskParams,
                   kind="attention", focal_params: FocalParams | None = None):
    """Batch objective: mean over images of boundary loss + lam * orientation loss.

    ``preds`` is a list of (probability map, orientation map) pairs paired
    with ``gts``. The class balance ``alpha`` is computed once over the
    whole batch. Returns ``(loss, grad_b, grad_o)`` where the gradient
    lists hold d loss / d p and d loss / d theta per image (the 1/N and
    lam factors included).
    """
    if not preds or len(preds) != len(gts):
        raise ValidationError(
            f"batch lists must be nonempty and aligned, got {len(preds)} vs {len(gts)}")
    for (prob, orient), gt in zip(preds, gts):
        if np.asarray(prob).shape != np.asarray(gt.boundary).shape \
                or np.asarray(orient).shape != np.asarray(gt.boundary).shape:
            raise ValidationError("prediction/ground-truth dimensions differ")
    n = len(preds)
    alpha = compute_alpha([gt.boundary for gt in gts])
    total = 0.0
    grads_b = []
    grads_o = []
    for (prob, orient), gt in zip(preds, gts):
        lb, gb = boundary_loss(np.asarray(prob, dtype=np.float64),
                               np.asarray(gt.boundary, dtype=np.float64),
                               alpha, kind, params.attention, focal_params,
                               params.clamp_eps)
        lo, go = orientation_loss(orient, gt, params.sigma)
        total += float(np.sum(lb)) + params.lam * lo
        grads_b.append(gb / n)
        grads_o.append(go * (params.lam / n))
    return total / n, grads_b, grads_o


def _rel_err(analytic, numeric, floor=1e-12):
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    return np.where(scale > floor, err / np.maximum(scale, floor), 0.0)


def finite_difference_errors(kind, params, alpha, p_grid, eps=DEFAULT_EPS, h=1e-6):
    """Max relative error of dloss/dp vs central differences over a grid.

    Both label branches are checked at every grid probability.
    """
    p_grid = np.asarray(p_grid, dtype=np.float64)
    worst = 0.0
    for b in (0.0, 1.0):
        bb = np.full_like(p_grid, b)
        _, analytic = boundary_loss(p_grid, bb, alpha, kind, params, params, eps)
        up, _ = boundary_loss(p_grid + h, bb, alpha, kind, params, params, eps)
        dn, _ = boundary_loss(p_grid - h, bb, alpha, kind, params, params, eps)
        numeric = (up - dn) / (2.0 * h)
        worst = max(worst, float(np.max(_rel_err(analytic, numeric))))
    return worst


def smooth_l1_fd_error(x_grid, sigma, h=1e-6, exclude=1e-4):
    """Max relative derivative error of smooth_l1 vs central differences.

    Points within `exclude` of the quadratic/linear branch switch are
    skipped (central differences straddle the kink there).
    """
    x_grid = np.asarray(x_grid, dtype=np.float64)
    cut = 1.0 / (sigma * sigma)
    x_grid = x_grid[np.abs(np.abs(x_grid) - cut) > exclude]
    x_grid = x_grid[np.abs(x_grid) > exclude]  # derivative 0 at the origin
    _, analytic = smooth_l1(x_grid, sigma)
    up, _ = smooth_l1(x_grid + h, sigma)
    dn, _ = smooth_l1(x_grid - h, sigma)
    numeric = (up - dn) / (2.0 * h)
    return float(np.max(_rel_err(analytic, numeric)))


def loss_curve_table(loss_kind, params, alpha, n_points, eps=DEFAULT_EPS):
    """Tabulate both loss branches on a uniform p grid over [eps, 1-eps].

    Returns an (n_points, 3) array with columns (p, loss_pos, loss_neg),
    ready for CSV export.
    """
    if n_points < 2:
        raise ParameterError(f"n_points must be >= 2, got {n_points}")
    grid = np.linspace(eps, 1.0 - eps, n_points)
    if loss_kind == "cce":
        pos, _ = cce(grid, np.ones_like(grid), alpha, eps)
        neg, _ = cce(grid, np.zeros_like(grid), alpha, eps)
    elif loss_kind == "focal":
        pos, _ = focal(grid, np.ones_like(grid), params, eps)
        neg, _ = focal(grid, np.zeros_like(grid), params, eps)
    elif loss_kind == "attention":
        pos, _ = attention(grid, np.ones_like(grid), alpha, params, eps)
        neg, _ = attention(grid, np.zeros_like(grid), alpha, params, eps)
    else:
        raise ParameterError(f"unknown loss kind {loss_kind!r}")
    return np.column_stack([grid, pos, neg])
