# src/splat/css.py
"""
Canonical-space supervision: L1 + lambda * (1 - SSIM) summed over the
canonical views, and a first-order fitting loop over all Gaussian
parameters driven by the rasterizer's analytic gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit, logit

from ..gaussians.primitives import GaussianSet
from ..utils.config import CssSettings, RenderSettings
from ..utils.errors import DivergenceError, ShapeMismatchError
from ..utils.helpers import named_rng
from ..utils.logger import get_logger
from .rasterizer import RenderGrad, RenderTarget, render, render_and_grad
from .ssim import ssim, ssim_grad
from .views import CanonicalViewSet

logger = get_logger(__name__)

Views = Union[CanonicalViewSet, Sequence[RenderTarget]]

_LOGIT_CLAMP = 20.0
_ADAM_BETAS = (0.9, 0.999)
_ADAM_EPS = 1e-8
_MIN_LR = 1e-10


@dataclass(frozen=True, eq=False)
class CssLossReport:
    total: float
    l1: list[float]
    ssim: list[float]
    lambda_ssim: float
    grad: Optional[RenderGrad] = None

    def to_dict(self) -> dict:
        return {"total": self.total, "l1": self.l1, "ssim": self.ssim, "lambda_ssim": self.lambda_ssim}


@dataclass(frozen=True, eq=False)
class CssFitResult:
    gaussians: GaussianSet
    trace: list[float]
    accepted_steps: int
    rejected_steps: int
    final_learning_rate: float

    @property
    def initial_loss(self) -> float:
        return self.trace[0]

    @property
    def final_loss(self) -> float:
        return self.trace[-1]


def _targets(views: Views, settings: RenderSettings) -> list[RenderTarget]:
    if isinstance(views, CanonicalViewSet):
        return views.targets(settings.background)
    return list(views)


def css_loss(
    g: GaussianSet,
    gt_images: Sequence[np.ndarray],
    views: Views,
    lambda_ssim: float = 0.2,
    settings: Optional[RenderSettings] = None,
    threads: int = 1,
    with_grad: bool = False,
) -> CssLossReport:
    """sum_n ( mean |I_n - render_n| + lambda_ssim * (1 - SSIM(I_n, render_n)) )."""
    settings = settings or RenderSettings()
    targets = _targets(views, settings)
    if len(gt_images) != len(targets):
        raise ShapeMismatchError(f"{len(gt_images)} ground-truth images for {len(targets)} views")

    l1_terms: list[float] = []
    ssim_terms: list[float] = []
    total_grad = RenderGrad.zeros(len(g)) if with_grad else None

    for gt, target in zip(gt_images, targets):
        gt = np.asarray(gt, dtype=np.float64)
        if gt.shape != target.shape:
            raise ShapeMismatchError(f"ground-truth image {gt.shape} vs view {target.shape}")

        if not with_grad:
            image = render(g, target, settings, threads)
            l1_terms.append(float(np.mean(np.abs(image - gt))))
            ssim_terms.append(ssim(gt, image))
            continue

        def loss_fn(image: np.ndarray) -> tuple[float, np.ndarray]:
            diff = image - gt
            l1 = float(np.mean(np.abs(diff)))
            s, d_ssim = ssim_grad(gt, image)
            l1_terms.append(l1)
            ssim_terms.append(s)
            return l1 + lambda_ssim * (1.0 - s), np.sign(diff) / diff.size - lambda_ssim * d_ssim

        _, _, grad = render_and_grad(g, target, loss_fn, settings, threads)
        total_grad = total_grad + grad

    total = float(sum(l1 + lambda_ssim * (1.0 - s) for l1, s in zip(l1_terms, ssim_terms)))
    return CssLossReport(total=total, l1=l1_terms, ssim=ssim_terms, lambda_ssim=lambda_ssim, grad=total_grad)


@dataclass
class _Params:
    means: np.ndarray
    log_scales: np.ndarray
    quats: np.ndarray
    logits: np.ndarray
    colors: np.ndarray

    names = ("means", "log_scales", "quats", "logits", "colors")

    @classmethod
    def from_set(cls, g: GaussianSet) -> "_Params":
        opacity = np.clip(g.opacities, expit(-_LOGIT_CLAMP), expit(_LOGIT_CLAMP))
        return cls(g.means.copy(), g.log_scales.copy(), g.unit_quats(), logit(opacity), g.colors.copy())

    def to_set(self, frame: str) -> GaussianSet:
        return GaussianSet(
            means=self.means,
            log_scales=self.log_scales,
            quats=self.quats,
            opacities=expit(self.logits),
            colors=self.colors,
            frame=frame,
        )

    def grads(self, grad: RenderGrad) -> dict[str, np.ndarray]:
        o = expit(self.logits)
        return {
            "means": grad.means,
            "log_scales": grad.log_scales,
            "quats": grad.quats,
            "logits": grad.opacities * o * (1.0 - o),
            "colors": grad.colors,
        }

    def stepped(self, updates: dict[str, np.ndarray]) -> "_Params":
        new = _Params(**{name: getattr(self, name) - updates[name] for name in self.names})
        new.quats = new.quats / np.linalg.norm(new.quats, axis=1, keepdims=True)
        new.logits = np.clip(new.logits, -_LOGIT_CLAMP, _LOGIT_CLAMP)
        new.colors = np.clip(new.colors, 0.0, 1.0)
        return new


@dataclass
class _Optimizer:
    kind: str
    lr: float
    momentum: float
    state: dict = field(default_factory=dict)
    t: int = 0

    def reset(self) -> None:
        self.state.clear()
        self.t = 0

    def updates(self, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.t += 1
        out = {}
        for name, grad in grads.items():
            if self.kind == "adam":
                b1, b2 = _ADAM_BETAS
                m, v = self.state.get(name, (np.zeros_like(grad), np.zeros_like(grad)))
                m = b1 * m + (1 - b1) * grad
                v = b2 * v + (1 - b2) * grad * grad
                self.state[name] = (m, v)
                m_hat = m / (1 - b1**self.t)
                v_hat = v / (1 - b2**self.t)
                out[name] = self.lr * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
            else:
                velocity = self.momentum * self.state.get(name, np.zeros_like(grad)) + grad
                self.state[name] = velocity
                out[name] = self.lr * velocity
        return out


def css_fit(
    g_init: GaussianSet,
    gt_images: Sequence[np.ndarray],
    views: Views,
    css: Optional[CssSettings] = None,
    settings: Optional[RenderSettings] = None,
    threads: int = 1,
    steps: Optional[int] = None,
) -> CssFitResult:
    """
    Minimize css_loss over means, log-scales, rotations, opacities and
    colors. A step that raises the loss is undone and the learning rate
    halved, so the recorded trace never increases. A non-finite loss
    aborts with DivergenceError carrying the trace so far.
    """
    css = css or CssSettings()
    settings = settings or RenderSettings()
    steps = css.steps if steps is None else steps
    frame = g_init.frame

    def evaluate(params: _Params) -> tuple[float, RenderGrad]:
        report = css_loss(
            params.to_set(frame), gt_images, views, css.lambda_ssim, settings, threads, with_grad=True
        )
        return report.total, report.grad

    params = _Params.from_set(g_init)
    loss, grad = evaluate(params)
    trace = [loss]
    if not math.isfinite(loss):
        raise DivergenceError("css_fit: initial loss is not finite", trace)

    optimizer = _Optimizer(css.optimizer, css.learning_rate, css.momentum)
    accepted = rejected = 0
    logger.info("[CSS-FIT] %d gaussians, %d views, %d steps, initial loss %.6f", len(g_init), len(gt_images), steps, loss)

    for step in range(steps):
        candidate = params.stepped(optimizer.updates(params.grads(grad)))
        cand_loss, cand_grad = evaluate(candidate)
        if not math.isfinite(cand_loss):
            raise DivergenceError(f"css_fit: loss became {cand_loss} at step {step}", trace + [cand_loss])

        if cand_loss > loss:
            optimizer.reset()
            optimizer.lr *= 0.5
            rejected += 1
            logger.debug("[CSS-FIT] step %d rejected (%.6f > %.6f), lr -> %.3g", step, cand_loss, loss, optimizer.lr)
            if optimizer.lr < _MIN_LR:
                break
            continue

        params, loss, grad = candidate, cand_loss, cand_grad
        trace.append(loss)
        accepted += 1
        if step % 50 == 0:
            logger.debug("[CSS-FIT] step %d loss %.6f", step, loss)

    logger.info(
        "[CSS-FIT] done: loss %.6f -> %.6f (%d accepted, %d rejected)", trace[0], trace[-1], accepted, rejected
    )
    return CssFitResult(
        gaussians=params.to_set(frame),
        trace=trace,
        accepted_steps=accepted,
        rejected_steps=rejected,
        final_learning_rate=optimizer.lr,
    )


def random_init(n: int, seed: int, log_scale: float = math.log(0.05), opacity: float = 0.5) -> GaussianSet:
    """`n` isotropic grey Gaussians scattered uniformly in the canonical cube."""
    rng = named_rng(seed, "css-init")
    quats = np.zeros((n, 4))
    quats[:, 0] = 1.0
    return GaussianSet(
        means=rng.random((n, 3)),
        log_scales=np.full((n, 3), log_scale),
        quats=quats,
        opacities=np.full(n, opacity),
        colors=np.full((n, 3), 0.5),
        frame="canonical",
    )
