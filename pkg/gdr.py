"""Global disparity refinement.

Minimizes ``lambda * sum |D_t(x + u) - D_s(x)|^2 + sum huber(|grad u|, eps)``
where ``D`` is an illumination-invariant 8-component descriptor. The data
term is linearized around the current disparity at every warp, and each
convex surrogate is solved with first-order primal-dual iterations inside a
coarse-to-fine pyramid.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, fields

import numpy as np

from errors import ConfigError, InvalidInputError
from imgcore import (
    as_gray,
    build_pyramid,
    downsample_disparity,
    require_channels,
    require_same_size,
    upsample_disparity,
    warp_horizontal,
)

logger = logging.getLogger(__name__)

# Neighbours x1..x8 of the 3x3 patch as (dy, dx): right, then counter-clockwise
NEIGHBOR_OFFSETS = (
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
)
DEFAULT_STEP = 1.0 / math.sqrt(8.0)
STEP_TOLERANCE = 1e-9


@dataclass
class GdrParams:
    """Tunables of the global stage; ``lam`` is the data-term weight lambda."""

    lam: float = 0.5
    eps_huber: float = 0.1
    m: int = 50
    n: int = 4
    inner_iters: int = 10
    tau: float = DEFAULT_STEP
    sigma: float = DEFAULT_STEP
    eps_desc: float = 1e-6

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.eps_huber <= 0:
            raise ConfigError(f"eps_huber must be positive, got {self.eps_huber}")
        for name in ("m", "n", "inner_iters"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
            setattr(self, name, int(getattr(self, name)))
        check_step_sizes(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GdrParams":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known and v is not None})

    def to_dict(self) -> dict:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["lambda"] = data.pop("lam")
        return data


def check_step_sizes(p: GdrParams) -> None:
    """Primal-dual convergence needs ``tau * sigma * 8 <= 1``."""
    if p.tau <= 0 or p.sigma <= 0:
        raise ConfigError("tau and sigma must be positive")
    if p.tau * p.sigma * 8.0 > 1.0 + STEP_TOLERANCE:
        raise ConfigError(
            f"step sizes tau={p.tau} sigma={p.sigma} violate tau*sigma*8 <= 1"
        )


def descriptor_field(img: np.ndarray, eps_desc: float = 1e-6) -> np.ndarray:
    """Normalized absolute differences to the 8 neighbours, shape ``(H, W, 8)``.

    Patches whose difference vector has norm ``<= eps_desc`` get the zero vector.
    """
    require_channels(img, 1)
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if h < 3 or w < 3:
        raise InvalidInputError(f"descriptor needs at least a 3x3 image, got {img.shape}")

    padded = np.pad(img, 1, mode="symmetric")
    diffs = np.empty((h, w, len(NEIGHBOR_OFFSETS)))
    for i, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
        diffs[:, :, i] = np.abs(img - padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w])

    norm = np.sqrt(np.sum(diffs**2, axis=2, keepdims=True))
    flat = norm <= eps_desc
    safe = np.where(flat, 1.0, norm)
    return np.where(flat, 0.0, diffs / safe)


def huber(r, eps: float):
    """Huber penalty: ``r^2 / (2 eps)`` inside ``[-eps, eps]``, ``|r| - eps / 2`` outside."""
    r = np.abs(np.asarray(r, dtype=np.float64))
    out = np.where(r <= eps, r**2 / (2.0 * eps), r - eps / 2.0)
    return out[()] if out.ndim == 0 else out


def huber_grad(r, eps: float):
    """Derivative of ``huber`` with respect to ``r``."""
    r = np.asarray(r, dtype=np.float64)
    out = np.where(np.abs(r) <= eps, r / eps, np.sign(r))
    return out[()] if out.ndim == 0 else out


def forward_gradient(u: np.ndarray) -> np.ndarray:
    """Forward differences with zero Neumann boundary, shape ``(2, H, W)`` (x, y)."""
    grad = np.zeros((2,) + u.shape)
    grad[0, :, :-1] = u[:, 1:] - u[:, :-1]
    grad[1, :-1, :] = u[1:, :] - u[:-1, :]
    return grad


def divergence(p: np.ndarray) -> np.ndarray:
    """Negative adjoint of ``forward_gradient``."""
    px, py = p
    out = np.zeros(px.shape)
    out[:, :-1] += px[:, :-1]
    out[:, 1:] -= px[:, :-1]
    out[:-1, :] += py[:-1, :]
    out[1:, :] -= py[:-1, :]
    return out


def regularizer_energy(u: np.ndarray, eps: float) -> float:
    grad = forward_gradient(np.asarray(u, dtype=np.float64))
    return float(np.sum(huber(np.sqrt(np.sum(grad**2, axis=0)), eps)))


def energy(left_desc: np.ndarray, right: np.ndarray, disp: np.ndarray, p: GdrParams) -> float:
    """Full objective of ``disp``: weighted descriptor residual plus Huber regularizer.

    Pixels whose match leaves the right image contribute no data energy.
    """
    require_channels(right, 1, "right image")
    require_same_size(left_desc, right, "descriptor field and right image")
    require_same_size(right, disp, "right image and disparity")
    warped, valid = warp_horizontal(right, disp)
    target = descriptor_field(warped, p.eps_desc)
    residual = np.sum((target - left_desc) ** 2, axis=2) * valid
    return float(p.lam * residual.sum()) + regularizer_energy(disp, p.eps_huber)


@dataclass
class LinearizedDataTerm:
    """Per-pixel quadratic ``a (u - u0)^2 + 2 b (u - u0)`` approximating the data term."""

    a: np.ndarray
    b: np.ndarray
    u0: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.u0.shape


def linearize_data_term(
    src_desc: np.ndarray, tgt_gray: np.ndarray, u0: np.ndarray, p: GdrParams
) -> LinearizedDataTerm:
    """First-order expansion of the descriptor residual around ``u0``."""
    require_same_size(src_desc, tgt_gray, "descriptor field and target image")
    require_same_size(tgt_gray, u0, "target image and disparity")
    u0 = np.asarray(u0, dtype=np.float64)
    warped, valid = warp_horizontal(tgt_gray, u0)
    return descriptor_data_term(descriptor_field(warped, p.eps_desc), src_desc, valid, u0, p)


def descriptor_data_term(
    target: np.ndarray, src_desc: np.ndarray, valid: np.ndarray, u0: np.ndarray, p: GdrParams
) -> LinearizedDataTerm:
    """Quadratic coefficients from an already warped target descriptor field."""
    require_same_size(target, src_desc, "target and source descriptors")
    slope = np.gradient(target, axis=1)
    residual = target - src_desc

    a = p.lam * np.sum(slope**2, axis=2)
    b = p.lam * np.sum(residual * slope, axis=2)
    both_flat = ~np.any(target, axis=2) & ~np.any(src_desc, axis=2)
    dead = (valid == 0) | both_flat
    a[dead] = 0.0
    b[dead] = 0.0
    return LinearizedDataTerm(a=a, b=b, u0=np.array(u0, dtype=np.float64))


def surrogate_objective(u: np.ndarray, dt: LinearizedDataTerm, p: GdrParams) -> float:
    """Objective the primal-dual iterations minimize for one linearization."""
    du = u - dt.u0
    data = float(np.sum(dt.a * du**2 + 2.0 * dt.b * du))
    return data + regularizer_energy(u, p.eps_huber)


def _primal_dual_iterations(
    dt: LinearizedDataTerm,
    u: np.ndarray,
    dual: np.ndarray,
    p: GdrParams,
    iterations: int,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    tau, sigma = p.tau, p.sigma
    shrink = 1.0 + sigma * p.eps_huber
    pull = 2.0 * tau * (dt.a * dt.u0 - dt.b)
    denom = 1.0 + 2.0 * tau * dt.a
    u = u.copy()
    u_bar = u.copy()
    for it in range(iterations):
        dual = (dual + sigma * forward_gradient(u_bar)) / shrink
        dual /= np.maximum(1.0, np.sqrt(np.sum(dual**2, axis=0)))
        u_new = (u + tau * divergence(dual) + pull) / denom
        u_bar = 2.0 * u_new - u
        u = u_new
        if callback is not None:
            callback(it, u)
    return u, dual


def primal_dual_solve(
    dt: LinearizedDataTerm,
    u_init: np.ndarray,
    p: GdrParams,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Run ``p.inner_iters`` primal-dual iterations on one linearized problem."""
    check_step_sizes(p)
    u_init = np.asarray(u_init, dtype=np.float64)
    require_same_size(u_init, dt.u0, "disparity and data term")
    dual = np.zeros((2,) + u_init.shape)
    u, _ = _primal_dual_iterations(dt, u_init, dual, p, p.inner_iters, callback)
    return u


def refine_global(
    color_left: np.ndarray,
    color_right: np.ndarray,
    u_init: np.ndarray | None,
    p: GdrParams | None = None,
) -> np.ndarray:
    """Coarse-to-fine refinement of ``u_init`` (zeros when None).

    Returns whichever of the solver output and the initialization has the
    lower objective at full resolution.
    """
    p = p or GdrParams()
    check_step_sizes(p)
    left = as_gray(color_left)
    right = as_gray(color_right)
    require_same_size(left, right, "left and right images")
    if u_init is None:
        u_init = np.zeros(left.shape)
    u_init = np.asarray(u_init, dtype=np.float64)
    require_same_size(left, u_init, "images and initial disparity")
    if not np.all(np.isfinite(u_init)):
        raise InvalidInputError("initial disparity contains NaN or Inf")

    pyr_left = build_pyramid(left, p.n)
    pyr_right = build_pyramid(right, len(pyr_left))
    levels = len(pyr_left)

    u = u_init
    for _ in range(levels - 1):
        u = downsample_disparity(u)

    finest_desc = None
    for level in range(levels - 1, -1, -1):
        src_desc = descriptor_field(pyr_left[level], p.eps_desc)
        dual = np.zeros((2,) + u.shape)
        for _ in range(p.m):
            dt = linearize_data_term(src_desc, pyr_right[level], u, p)
            u, dual = _primal_dual_iterations(dt, u, dual, p, p.inner_iters)
        logger.debug(f"GDR level {level} {u.shape}: mean disparity {u.mean():.4f}")
        if level > 0:
            u = upsample_disparity(u, pyr_left.shapes[level - 1])
        else:
            finest_desc = src_desc

    if not np.all(np.isfinite(u)):
        logger.warning("GDR produced non-finite values; keeping the initialization")
        return u_init.copy()

    e_out = energy(finest_desc, right, u, p)
    e_init = energy(finest_desc, right, u_init, p)
    logger.info(f"GDR energy: init {e_init:.6f} -> refined {e_out:.6f}")
    if e_out > e_init:
        logger.info("GDR result did not lower the objective; keeping the initialization")
        return u_init.copy()
    return u
