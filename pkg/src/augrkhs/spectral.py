"""Dual kernels, conditional-expectation operators, and their exact spectra.

The two kernels are density ratios: ``K_A`` compares the distribution of two
augmentations of a shared original against independent augmentations, and
``K_X`` is its data-space counterpart obtained by swapping roles and applying
Bayes.  Both are realized as plain matrices here, weighted by the relevant
marginals, and the spectral decomposition is computed through one SVD of the
symmetrized joint table, which yields the eigenvalues together with both
eigenfunction families and their duality at once.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import ValidationError
from .processes import AugmentationProcess

DEFAULT_RANK_TOL = 1e-10
_TIE_TOL = 1e-10
_ORTHONORMALITY_TOL = 1e-8
_DUALITY_TOL = 1e-8
_DUALITY_FLOOR = 1e-6  # duality is only certified above this eigenvalue


def kernel_x(process: AugmentationProcess) -> np.ndarray:
    """Data-space kernel ``K_X(x1,x2) = sum_a p(a|x1) p(a|x2) / p_a(a)``.

    Symmetric and positive semidefinite under the ``p_x`` weighting.
    """
    C = process.conditional
    inv_pa = 1.0 / process.p_a.mass
    if sp.issparse(C):
        return (C.multiply(inv_pa) @ C.T).toarray()
    return (C * inv_pa) @ C.T


def kernel_a(process: AugmentationProcess) -> np.ndarray:
    """Positive-pair kernel ``K_A(a1,a2) = P+(a1,a2) / (p_a(a1) p_a(a2))``.

    ``P+(a1,a2) = sum_x p(a1|x) p(a2|x) p_x(x)`` is the distribution of two
    augmentations drawn from a shared original.
    """
    pair = pair_distribution(process)
    p_a = process.p_a.mass
    return pair / p_a[:, None] / p_a[None, :]


def pair_distribution(process: AugmentationProcess) -> np.ndarray:
    """Joint law ``P+`` of two augmentations of one original, ``|A| x |A|``."""
    C = process.conditional
    p_x = process.p_x.mass
    if sp.issparse(C):
        return (C.multiply(p_x[:, None]).T @ C).toarray()
    return (C * p_x[:, None]).T @ C


def joint_distribution(process: AugmentationProcess) -> np.ndarray:
    """Joint law ``p(a, x) = p(a|x) p_x(x)`` as an ``|A| x |X|`` array."""
    return (process.conditional_dense() * process.p_x.mass[:, None]).T


def apply_gamma(process: AugmentationProcess, f: np.ndarray) -> np.ndarray:
    """Conditional expectation of a data-space function given the augmentation.

    ``(Gamma f)(a) = sum_x f(x) p(x|a)``.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[0] != process.n_x:
        raise ValidationError(
            f"function has length {f.shape[0]}, data space has {process.n_x}"
        )
    weighted = f * process.p_x.mass if f.ndim == 1 else f * process.p_x.mass[:, None]
    out = np.asarray(process.conditional.T @ weighted)
    if out.ndim == 1:
        return out / process.p_a.mass
    return out / process.p_a.mass[:, None]


def apply_gamma_star(process: AugmentationProcess, g: np.ndarray) -> np.ndarray:
    """Conditional expectation of an augmentation-space function given the data.

    ``(Gamma* g)(x) = sum_a g(a) p(a|x)``; the adjoint of :func:`apply_gamma`
    with respect to the weighted inner products.
    """
    g = np.asarray(g, dtype=float)
    if g.shape[0] != process.n_a:
        raise ValidationError(
            f"function has length {g.shape[0]}, augmentation space has {process.n_a}"
        )
    return np.asarray(process.conditional @ g)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Weighted spectral system of the augmentation operator pair.

    ``lambdas`` descend from 1; column ``i`` of ``psi`` / ``phi`` holds the
    ``i``-th eigenfunction on the data / augmentation space.  Columns are
    orthonormal under the respective marginal-weighted inner products and
    tied to each other by duality.
    """

    lambdas: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    rank: int
    rank_tol: float
    process: AugmentationProcess

    def eigenvalue(self, index: int) -> float:
        """``lambda_index`` with 1-based indexing; zero beyond the rank."""
        if index < 1:
            raise ValidationError(f"eigenvalue index must be >= 1, got {index}")
        return float(self.lambdas[index - 1]) if index <= self.rank else 0.0

    def h_norm_sq(self, coefficients: np.ndarray) -> float:
        """Squared norm ``sum u_i^2 / lambda_i`` of ``sum u_i psi_i``."""
        u = np.asarray(coefficients, dtype=float)
        return float(np.sum(u * u / self.lambdas))


def _rotate_constant_first(lambdas, columns_x, columns_a, sqrt_wx):
    """Rotate the top degenerate block so the first column is the constant.

    The constant function always belongs to the leading eigenspace; a bare
    SVD returns an arbitrary basis for it when the top eigenvalue is
    degenerate, so the block is deterministically rotated by a Householder
    map sending the first basis vector onto the constant's coordinates.
    Only the top block is rotated; rotating near-degenerate blocks at tiny
    eigenvalues would destroy duality.
    """
    block = np.nonzero(np.abs(lambdas - lambdas[0]) <= _TIE_TOL)[0]
    m = block.size
    # coordinates of the constant in the block basis of V (where it is sqrt_wx)
    c = columns_x[:, block].T @ sqrt_wx
    norm = np.linalg.norm(c)
    if norm < 1.0 - 1e-6:
        raise ValidationError(
            "constant function missing from the top eigenspace; "
            "the process tables are inconsistent"
        )
    c = c / norm
    e1 = np.zeros(m)
    e1[0] = 1.0
    v = c - e1
    vn = np.linalg.norm(v)
    if vn > 1e-14:
        v = v / vn
        H = np.eye(m) - 2.0 * np.outer(v, v)
    else:
        H = np.eye(m)
    columns_x[:, block] = columns_x[:, block] @ H
    columns_a[:, block] = columns_a[:, block] @ H


def _fix_signs_and_ties(lambdas, psi, phi):
    """Deterministic output orientation.

    Every ``psi`` column is scaled so its largest-magnitude entry is
    positive, with the paired ``phi`` column flipped along with it; within a
    degenerate eigenvalue block, columns are permuted into lexicographic
    order of the sign-fixed ``psi`` values.
    """
    r = lambdas.size
    for i in range(r):
        col = psi[:, i]
        lead = int(np.argmax(np.abs(col)))
        if col[lead] < 0:
            psi[:, i] = -col
            phi[:, i] = -phi[:, i]
    start = 0
    while start < r:
        stop = start + 1
        while stop < r and abs(lambdas[stop] - lambdas[start]) <= _TIE_TOL:
            stop += 1
        if stop - start > 1 and start > 0:  # top block is anchored by the constant
            block = range(start, stop)
            order = sorted(block, key=lambda j: tuple(psi[:, j]))
            psi[:, start:stop] = psi[:, order]
            phi[:, start:stop] = phi[:, order]
            lambdas[start:stop] = lambdas[order]
        elif stop - start > 1:
            block = range(start + 1, stop)
            order = [start] + sorted(block, key=lambda j: tuple(psi[:, j]))
            psi[:, start:stop] = psi[:, order]
            phi[:, start:stop] = phi[:, order]
            lambdas[start:stop] = lambdas[order]
        start = stop


def _validate_decomposition(dec: SpectralDecomposition) -> None:
    lam = dec.lambdas
    if lam.size and (lam.min() < -1e-10 or lam.max() > 1.0 + 1e-10):
        raise ValidationError(f"eigenvalues outside [0, 1]: {lam.min()}..{lam.max()}")
    if abs(dec.eigenvalue(1) - 1.0) > 1e-10:
        raise ValidationError(f"leading eigenvalue is {dec.eigenvalue(1)!r}, not 1")
    psi1 = dec.psi[:, 0]
    if np.max(np.abs(psi1 - psi1[0])) > 1e-8 or abs(psi1[0] - 1.0) > 1e-8:
        raise ValidationError("leading data eigenfunction is not the constant 1")
    p_x = dec.process.p_x.mass
    p_a = dec.process.p_a.mass
    gram_x = (dec.psi * p_x[:, None]).T @ dec.psi
    gram_a = (dec.phi * p_a[:, None]).T @ dec.phi
    eye = np.eye(dec.rank)
    if np.max(np.abs(gram_x - eye)) > _ORTHONORMALITY_TOL:
        raise ValidationError("psi columns are not orthonormal under p_x")
    if np.max(np.abs(gram_a - eye)) > _ORTHONORMALITY_TOL:
        raise ValidationError("phi columns are not orthonormal under p_a")
    certified = dec.lambdas > _DUALITY_FLOOR
    if certified.any():
        back = apply_gamma_star(dec.process, dec.phi[:, certified])
        back /= np.sqrt(dec.lambdas[certified])[None, :]
        resid = back - dec.psi[:, certified]
        worst = np.sqrt(np.max(np.sum(resid * resid * p_x[:, None], axis=0)))
        if worst > _DUALITY_TOL:
            raise ValidationError(f"duality residual {worst!r} exceeds {_DUALITY_TOL}")


def decompose(process: AugmentationProcess,
              rank_tol: float = DEFAULT_RANK_TOL) -> SpectralDecomposition:
    """Exact weighted spectral decomposition of the operator pair.

    The SVD of the symmetrized joint table
    ``B(a,x) = p(a,x) / sqrt(p_a(a) p_x(x))`` gives singular values whose
    squares are the shared eigenvalues, with
    ``phi_i = U_i / sqrt(p_a)`` and ``psi_i = V_i / sqrt(p_x)``.  Eigenvalues
    at or below ``rank_tol`` are dropped.

    Returns
    -------
    SpectralDecomposition
        Validated: eigenvalues in [0, 1], leading pair ``(1, constant)``,
        orthonormal columns, duality residual below 1e-8.
    """
    p_x = process.p_x.mass
    p_a = process.p_a.mass
    sqrt_wx = np.sqrt(p_x)
    C = process.conditional
    if sp.issparse(C):
        B = C.multiply(sqrt_wx[:, None]).multiply(1.0 / np.sqrt(p_a)).T.toarray()
    else:
        B = (C * sqrt_wx[:, None] / np.sqrt(p_a)).T
    U, s, Vt = np.linalg.svd(B, full_matrices=False)
    lambdas = s * s
    rank = int(np.count_nonzero(lambdas > rank_tol))
    if rank == 0:
        raise ValidationError("empty spectrum; the leading eigenvalue should be 1")
    lambdas = lambdas[:rank].copy()
    V = Vt[:rank].T.copy()
    Uk = U[:, :rank].copy()
    _rotate_constant_first(lambdas, V, Uk, sqrt_wx)
    psi = V / sqrt_wx[:, None]
    phi = Uk / np.sqrt(p_a)[:, None]
    _fix_signs_and_ties(lambdas, psi, phi)
    psi.setflags(write=False)
    phi.setflags(write=False)
    lambdas.setflags(write=False)
    dec = SpectralDecomposition(
        lambdas=lambdas, psi=psi, phi=phi, rank=rank,
        rank_tol=rank_tol, process=process,
    )
    _validate_decomposition(dec)
    return dec


def verify_integral_identity(process: AugmentationProcess,
                             decomposition: SpectralDecomposition | None = None,
                             test_vectors: np.ndarray | None = None) -> float:
    """Max-norm residual between the operator and kernel routes.

    Applies ``Gamma* Gamma`` to each test vector via the conditional tables
    and, independently, integrates against ``K_X`` under the ``p_x`` weight;
    when a decomposition is supplied its spectral reconstruction of the
    kernel is checked as well.  Returns the largest entrywise residual,
    which the contract bounds by 1e-10.
    """
    if test_vectors is None:
        test_vectors = np.eye(process.n_x)
    F = np.asarray(test_vectors, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    op_route = apply_gamma_star(process, apply_gamma(process, F))
    KX = kernel_x(process)
    kernel_route = KX @ (F * process.p_x.mass[:, None])
    residual = float(np.max(np.abs(op_route - kernel_route)))
    if decomposition is not None:
        spectral_kernel = (decomposition.psi * decomposition.lambdas) @ decomposition.psi.T
        spectral_route = spectral_kernel @ (F * process.p_x.mass[:, None])
        residual = max(residual, float(np.max(np.abs(spectral_route - kernel_route))))
    return residual


def export_decomposition(decomposition: SpectralDecomposition,
                         out_dir, stem: str = "decomposition") -> dict[str, str]:
    """Write lambda/psi/phi CSV files, eigenfunctions as columns, 17 digits."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    lam_path = os.path.join(out_dir, f"{stem}_lambdas.csv")
    with open(lam_path, "w", encoding="utf-8") as fh:
        fh.write("lambda\n")
        for v in decomposition.lambdas:
            fh.write(f"{v:.17g}\n")
    paths["lambdas"] = lam_path
    for name, M in (("psi", decomposition.psi), ("phi", decomposition.phi)):
        path = os.path.join(out_dir, f"{stem}_{name}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(f"{name}_{i + 1}" for i in range(M.shape[1])) + "\n")
            for row in M:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        paths[name] = path
    return paths
