"""Exact pretraining objectives and their full-batch minimization.

Four population losses are evaluated in closed form on finite spaces: the
spectral contrastive loss, its two-encoder CLIP variant, a regularized
Barlow Twins loss, and a VICReg variant.  Each admits an exact quadratic or
quartic expansion in the encoder table, so losses and gradients are computed
without sampling, and minimization is plain full-batch gradient descent with
step halving.  Every loss also has an independent evaluation route by direct
summation over the joint distributions, used to cross-check the expansions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DivergenceError, ValidationError
from .processes import AugmentationProcess
from .spectral import SpectralDecomposition, joint_distribution, pair_distribution

KINDS = ("scl", "sclip", "rbt", "vicreg")


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which loss to minimize, at which encoder dimension, with which weights."""

    kind: str
    d: int
    alpha_w: float | None = None
    beta_w: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown objective kind {self.kind!r}")
        if self.d < 1:
            raise ValidationError(f"d must be >= 1, got {self.d}")
        if self.kind == "rbt":
            if self.alpha_w is None or self.beta_w is None:
                raise ValidationError("rbt needs alpha_w and beta_w")
            if self.alpha_w < 0 or self.beta_w < 0:
                raise ValidationError("rbt weights must be nonnegative")
        if self.kind == "vicreg":
            if self.beta_w is None:
                raise ValidationError("vicreg needs beta_w")
            if self.beta_w < 0:
                raise ValidationError("vicreg beta_w must be nonnegative")


@dataclass(frozen=True)
class OptimizerConfig:
    """Fixed-step gradient descent with halving on loss increase."""

    learning_rate: float = 0.2
    max_iters: int = 20000
    grad_tol: float = 1e-8
    seed: int = 0
    init_scale: float = 0.5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.max_iters < 0:
            raise ValidationError("max_iters must be >= 0")


@dataclass(frozen=True, eq=False)
class MinimizeResult:
    phi_hat: np.ndarray
    xi_hat: np.ndarray | None
    losses: np.ndarray
    iterations: int
    grad_norm: float
    converged: bool

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1])


def _coefficients(phi_hat: np.ndarray, dec: SpectralDecomposition) -> np.ndarray:
    """Weighted coefficients of the rows against the retained eigenbasis."""
    p_a = dec.process.p_a.mass
    return (phi_hat * p_a[None, :]) @ dec.phi


def loss_scl(phi_hat: np.ndarray, dec: SpectralDecomposition) -> float:
    """Spectral contrastive loss via its exact quadratic expansion.

    Equals ``-2 Tr(C D C^T) + ||G||_F^2`` where ``C`` holds the spectral
    coefficients of the rows, ``D`` the eigenvalues, and ``G`` the
    augmentation-side Gram; components outside the retained spectrum enter
    only through ``G``.
    """
    C = _coefficients(phi_hat, dec)
    G = (phi_hat * dec.process.p_a.mass[None, :]) @ phi_hat.T
    return float(-2.0 * np.sum((C * C) @ dec.lambdas[:, None])
                 + np.sum(G * G))


def loss_scl_direct(phi_hat: np.ndarray, process: AugmentationProcess) -> float:
    """Independent route: direct summation over the pair distributions."""
    pair = pair_distribution(process)
    positive = float(np.trace(phi_hat @ pair @ phi_hat.T))
    inner = phi_hat.T @ phi_hat  # |A| x |A| table of <phi(a), phi(a')>
    p_a = process.p_a.mass
    negative = float(np.sum((inner * inner) * np.outer(p_a, p_a)))
    return -2.0 * positive + negative


def loss_sclip(phi_hat: np.ndarray, xi_hat: np.ndarray,
               dec: SpectralDecomposition) -> float:
    """Two-encoder contrastive loss via the exact expansion.

    ``phi_hat`` lives on the augmentation space, ``xi_hat`` on the data
    space; the positive term couples them through the square roots of the
    eigenvalues, the negative term through the product of the two Grams.
    """
    if phi_hat.shape[0] != xi_hat.shape[0]:
        raise ValidationError(
            f"encoder dimensions differ: {phi_hat.shape[0]} vs {xi_hat.shape[0]}"
        )
    process = dec.process
    C = _coefficients(phi_hat, dec)
    S = (xi_hat * process.p_x.mass[None, :]) @ dec.psi
    positive = float(np.sum((C * S) @ np.sqrt(dec.lambdas)[:, None]))
    G = (phi_hat * process.p_a.mass[None, :]) @ phi_hat.T
    H = (xi_hat * process.p_x.mass[None, :]) @ xi_hat.T
    return float(-2.0 * positive + np.sum(G * H))


def loss_sclip_direct(phi_hat: np.ndarray, xi_hat: np.ndarray,
                      process: AugmentationProcess) -> float:
    """Independent route: direct summation over the joint distribution."""
    J = joint_distribution(process)
    positive = float(np.trace(phi_hat @ J @ xi_hat.T))
    inner = phi_hat.T @ xi_hat  # |A| x |X|
    weights = np.outer(process.p_a.mass, process.p_x.mass)
    return -2.0 * positive + float(np.sum(inner * inner * weights))


def loss_rbt(phi_hat: np.ndarray, dec: SpectralDecomposition,
             alpha_w: float, beta_w: float) -> float:
    """Regularized Barlow Twins loss, exact over the pair distribution."""
    if alpha_w < 0 or beta_w < 0:
        raise ValidationError("weights must be nonnegative")
    process = dec.process
    M = phi_hat @ pair_distribution(process) @ phi_hat.T
    diag = np.diag(M)
    off = M - np.diag(diag)
    trace_g = float(np.sum(phi_hat * phi_hat @ process.p_a.mass))
    return float(np.sum((diag - 1.0) ** 2) + alpha_w * np.sum(off * off)
                 + beta_w * trace_g)


def loss_vicreg(phi_hat: np.ndarray, dec: SpectralDecomposition,
                beta_w: float) -> float:
    """VICReg variant: identity-covariance penalty plus positive-pair energy."""
    if beta_w < 0:
        raise ValidationError("beta_w must be nonnegative")
    process = dec.process
    G = (phi_hat * process.p_a.mass[None, :]) @ phi_hat.T
    M = phi_hat @ pair_distribution(process) @ phi_hat.T
    eye = np.eye(phi_hat.shape[0])
    return float(np.sum((G - eye) ** 2)
                 + beta_w * (2.0 * np.trace(G) - 2.0 * np.trace(M)))


@dataclass(frozen=True, eq=False)
class _Workspace:
    """Precomputed distribution matrices shared by loss and gradient."""

    p_a: np.ndarray
    p_x: np.ndarray
    pair: np.ndarray
    joint: np.ndarray | None


def _workspace(process: AugmentationProcess, need_joint: bool) -> _Workspace:
    return _Workspace(
        p_a=process.p_a.mass,
        p_x=process.p_x.mass,
        pair=pair_distribution(process),
        joint=joint_distribution(process) if need_joint else None,
    )


def _scl_value_grad(phi, ws: _Workspace):
    G = (phi * ws.p_a[None, :]) @ phi.T
    PhiPair = phi @ ws.pair
    value = -2.0 * float(np.sum(PhiPair * phi)) + float(np.sum(G * G))
    grad = -4.0 * PhiPair + 4.0 * (G @ phi) * ws.p_a[None, :]
    return value, grad


def _sclip_value_grad(params, ws: _Workspace):
    phi, xi = params
    G = (phi * ws.p_a[None, :]) @ phi.T
    H = (xi * ws.p_x[None, :]) @ xi.T
    PhiJ = phi @ ws.joint  # d x |X|
    value = -2.0 * float(np.sum(PhiJ * xi)) + float(np.sum(G * H))
    grad_phi = -2.0 * (xi @ ws.joint.T) + 2.0 * (H @ phi) * ws.p_a[None, :]
    grad_xi = -2.0 * PhiJ + 2.0 * (G @ xi) * ws.p_x[None, :]
    return value, (grad_phi, grad_xi)


def _rbt_value_grad(phi, ws: _Workspace, alpha_w, beta_w):
    M = phi @ ws.pair @ phi.T
    diag = np.diag(M)
    off = M - np.diag(diag)
    trace_g = float(np.sum(phi * phi @ ws.p_a))
    value = (float(np.sum((diag - 1.0) ** 2)) + alpha_w * float(np.sum(off * off))
             + beta_w * trace_g)
    coeff = 2.0 * np.diag(diag - 1.0) + 2.0 * alpha_w * off
    grad = 2.0 * (coeff @ (phi @ ws.pair)) + 2.0 * beta_w * phi * ws.p_a[None, :]
    return value, grad


def _vicreg_value_grad(phi, ws: _Workspace, beta_w):
    G = (phi * ws.p_a[None, :]) @ phi.T
    M = phi @ ws.pair @ phi.T
    eye = np.eye(phi.shape[0])
    value = float(np.sum((G - eye) ** 2)) + beta_w * (
        2.0 * float(np.trace(G)) - 2.0 * float(np.trace(M)))
    grad = (4.0 * ((G - eye) @ phi) * ws.p_a[None, :]
            + 4.0 * beta_w * (phi * ws.p_a[None, :] - phi @ ws.pair))
    return value, grad


def _value_grad_fn(spec: ObjectiveSpec, ws: _Workspace):
    if spec.kind == "scl":
        return lambda p: _scl_value_grad(p, ws)
    if spec.kind == "sclip":
        return lambda p: _sclip_value_grad(p, ws)
    if spec.kind == "rbt":
        return lambda p: _rbt_value_grad(p, ws, spec.alpha_w, spec.beta_w)
    return lambda p: _vicreg_value_grad(p, ws, spec.beta_w)


def minimize(spec: ObjectiveSpec, process: AugmentationProcess,
             decomposition: SpectralDecomposition,
             opt: OptimizerConfig,
             init: np.ndarray | tuple[np.ndarray, np.ndarray] | None = None
             ) -> MinimizeResult:
    """Full-batch gradient descent on the exact population loss.

    The encoder is parameterized directly as a ``d x |A|`` table (plus a
    ``d x |X|`` table for the two-encoder loss); entries start i.i.d.
    uniform in ``(-init_scale, init_scale)`` unless ``init`` is given.
    Steps halve whenever the candidate loss increases, so the recorded
    trace is monotone; iteration stops at ``grad_tol`` or ``max_iters``.
    """
    rng = np.random.default_rng(opt.seed)
    pair_mode = spec.kind == "sclip"
    ws = _workspace(process, need_joint=pair_mode)
    if init is None:
        phi = rng.uniform(-opt.init_scale, opt.init_scale,
                          size=(spec.d, process.n_a))
        params = (phi, rng.uniform(-opt.init_scale, opt.init_scale,
                                   size=(spec.d, process.n_x))) if pair_mode else phi
    else:
        params = (np.array(init[0], dtype=float), np.array(init[1], dtype=float)) \
            if pair_mode else np.array(init, dtype=float)
    fn = _value_grad_fn(spec, ws)

    def step(p, g, lr):
        if pair_mode:
            return (p[0] - lr * g[0], p[1] - lr * g[1])
        return p - lr * g

    def gnorm(g):
        if pair_mode:
            return float(np.sqrt(np.sum(g[0] ** 2) + np.sum(g[1] ** 2)))
        return float(np.linalg.norm(g))

    value, grad = fn(params)
    if not np.isfinite(value):
        raise DivergenceError("non-finite loss at iteration 0")
    losses = [value]
    lr = opt.learning_rate
    iterations = 0
    converged = False
    for it in range(opt.max_iters):
        gn = gnorm(grad)
        if gn <= opt.grad_tol:
            converged = True
            break
        while True:
            candidate = step(params, grad, lr)
            cand_value, cand_grad = fn(candidate)
            if not np.isfinite(cand_value):
                raise DivergenceError(f"non-finite loss at iteration {it}")
            if cand_value <= value:
                break
            lr *= 0.5
            if lr < 1e-18:
                break
        if cand_value > value:
            break  # step size exhausted
        params, value, grad = candidate, cand_value, cand_grad
        losses.append(value)
        iterations = it + 1
    else:
        converged = gnorm(grad) <= opt.grad_tol
    if pair_mode:
        phi_hat, xi_hat = params
    else:
        phi_hat, xi_hat = params, None
    return MinimizeResult(
        phi_hat=phi_hat, xi_hat=xi_hat, losses=np.array(losses),
        iterations=iterations, grad_norm=gnorm(grad),
        converged=converged or gnorm(grad) <= opt.grad_tol,
    )


def subspace_angle(phi_hat, decomposition: SpectralDecomposition,
                   d: int) -> float:
    """Largest principal angle to the top-``d`` eigenspace, in radians.

    Angles are taken under the augmentation-side weighted inner product;
    accepts an :class:`~augrkhs.encoders.Encoder` or a raw table.
    """
    table = getattr(phi_hat, "phi_hat", phi_hat)
    table = np.atleast_2d(np.asarray(table, dtype=float))
    if not (1 <= d <= decomposition.rank):
        raise ValidationError(f"d must lie in [1, rank], got {d}")
    sqrt_pa = np.sqrt(decomposition.process.p_a.mass)
    W = (table * sqrt_pa[None, :]).T
    U, s, _ = np.linalg.svd(W, full_matrices=False)
    if s[-1] <= 1e-12 * s[0]:
        raise ValidationError("encoder table is rank deficient")
    Q2 = decomposition.phi[:, :d] * sqrt_pa[:, None]
    cosines = np.linalg.svd(U.T @ Q2, compute_uv=False)
    smallest = min(1.0, max(0.0, float(cosines.min())))
    if smallest < 0.5**0.5:
        return float(np.arccos(smallest))
    # small angles: the sine route keeps full precision where arccos cannot
    residual = U - Q2 @ (Q2.T @ U)
    sines = np.linalg.svd(residual, compute_uv=False)
    largest = min(1.0, float(sines.max()))
    return float(np.arcsin(largest))


def rbt_penalty_path(process: AugmentationProcess,
                     decomposition: SpectralDecomposition,
                     d: int, alpha_w: float,
                     betas=(1e-1, 1e-2, 1e-3, 1e-4),
                     opt: OptimizerConfig | None = None
                     ) -> tuple[list[MinimizeResult], float]:
    """Constrained Barlow Twins limit via a decreasing penalty schedule.

    Minimizes the regularized loss for each ``beta`` in turn, warm-starting
    from the previous solution; as the penalty vanishes the augmentation-side
    energy ``Tr(G)`` of the solution approaches the sum of inverse
    eigenvalues over the top ``d``.  Returns the stage results and the final
    ``Tr(G)``.
    """
    if opt is None:
        opt = OptimizerConfig()
    results = []
    init = None
    for beta in betas:
        spec = ObjectiveSpec(kind="rbt", d=d, alpha_w=alpha_w, beta_w=beta)
        res = minimize(spec, process, decomposition, opt, init=init)
        results.append(res)
        init = res.phi_hat
    final = results[-1].phi_hat
    trace_g = float(np.sum(final * final @ process.p_a.mass))
    return results, trace_g
