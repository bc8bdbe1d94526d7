"""Non-local terms: sine-transform screened-Poisson solves, direct quadrature
and zero-padded FFT convolution.

The sine basis ``sin(n pi x' / L)``, ``x' = x + L/2``, sampled at cell centres
is exactly the DST-II basis, so ``scipy.fft.dst(type=2, norm="ortho")`` and its
inverse (a DST-III) form an orthonormal transform pair on cell values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .domain import Grid, ScalarField
from .kernels import SINGULAR_TOL

__all__ = [
    "SineSpectrum",
    "dst_forward",
    "dst_backward",
    "screened_poisson_symbol",
    "solve_screened_poisson",
    "apply_inverse_operator",
    "convolve_direct",
    "sample_displacement_kernel",
    "convolve_fft",
    "fft_convolve_array",
]


@dataclass(frozen=True, eq=False)
class SineSpectrum:
    """Orthonormal sine coefficients; entry ``[n-1]`` (or ``[n-1, m-1]``) is mode n."""

    grid: Grid
    coefficients: np.ndarray


def _axes(grid: Grid, values: np.ndarray) -> tuple[int, ...]:
    return tuple(range(values.ndim - grid.dim, values.ndim))


def dst_forward(f: ScalarField) -> SineSpectrum:
    coeffs = sfft.dstn(f.values, type=2, norm="ortho", axes=_axes(f.grid, f.values))
    return SineSpectrum(f.grid, coeffs)


def dst_backward(c: SineSpectrum) -> ScalarField:
    values = sfft.idstn(c.coefficients, type=2, norm="ortho", axes=_axes(c.grid, c.coefficients))
    return ScalarField(c.grid, values)


def _quadrature_symbol_1d(n, Ns, dx, k, lam):
    # sum over all aliases of 2k/(mu + lambda^2), in closed form
    theta = np.pi * n / Ns
    a = lam * dx
    # k dx^2 sinh(a)/a, written to stay finite as lambda -> 0
    shc = np.sinh(a) / a if a > 1e-8 else 1.0
    return k * dx * dx * shc / (np.cosh(a) - np.cos(theta))


def screened_poisson_symbol(grid: Grid, k: float, lam: float, symbol: str | None = None) -> np.ndarray:
    """Multiplier applied to sine coefficients by the inverse operator.

    ``"continuous"`` is ``2k / (mu_n + lambda^2)`` truncated at Ns modes.
    ``"quadrature"`` (1D only) folds in every aliased mode above Ns, which
    makes the solve identical to midpoint quadrature of the closed-form
    Green's function.  The default is ``"quadrature"`` in 1D and
    ``"continuous"`` in 2D, where the kernel is singular and midpoint
    quadrature is undefined on the diagonal.
    """
    if symbol is None:
        symbol = "quadrature" if grid.dim == 1 else "continuous"
    Ns, L, dx = grid.cells_per_axis, grid.length, grid.dx
    n = np.arange(1, Ns + 1)
    if symbol == "continuous":
        mu = (n * np.pi / L) ** 2
        if grid.dim == 1:
            return 2.0 * k / (mu + lam**2)
        return 2.0 * k / (mu[:, None] + mu[None, :] + lam**2)
    if symbol == "quadrature":
        if grid.dim != 1:
            raise ValueError("quadrature symbol is only defined in 1D (2D kernel is singular)")
        return _quadrature_symbol_1d(n, Ns, dx, k, lam)
    raise ValueError(f"unknown symbol {symbol!r}")


def apply_inverse_operator(grid: Grid, values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    """Array-level solve; leading axes of ``values`` are batched."""
    axes = _axes(grid, values)
    coeffs = sfft.dstn(values, type=2, norm="ortho", axes=axes)
    return sfft.idstn(coeffs * multiplier, type=2, norm="ortho", axes=axes)


def solve_screened_poisson(
    q: ScalarField, k: float, lam: float, symbol: str | None = None
) -> ScalarField:
    """Solve -(1/2k)(laplacian - lambda^2) phi = q with phi = 0 on the walls."""
    if not k > 0:
        raise ValueError(f"k must be positive, got {k}")
    mult = screened_poisson_symbol(q.grid, k, lam, symbol)
    return ScalarField(q.grid, apply_inverse_operator(q.grid, q.values, mult))


def _kernel_matrix_1d(kernel, grid: Grid, rows: slice) -> np.ndarray:
    x = grid.centers
    if callable(kernel) and not hasattr(kernel, "evaluate"):
        return kernel(x[rows, None], x[None, :])
    return kernel.evaluate(x[rows, None], x[None, :])


def convolve_direct(kernel, q: ScalarField, chunk: int = 512) -> ScalarField:
    """Midpoint-rule transform ``sum_j psi(x_i, x_j) q_j dx^d``.

    ``kernel`` is a kernel spec or a callable ``f(x, s)`` taking broadcast
    coordinate arrays (1D) or ``(..., 2)`` point arrays (2D).  For kernels
    that are singular on the diagonal the self-cell term is skipped.
    Rows are processed in chunks so memory stays O(chunk * n_cells).
    """
    grid = q.grid
    vol = grid.cell_volume
    if grid.dim == 1:
        qv = q.values
        out = np.empty_like(qv)
        for start in range(0, grid.cells_per_axis, chunk):
            rows = slice(start, min(start + chunk, grid.cells_per_axis))
            out[rows] = _kernel_matrix_1d(kernel, grid, rows) @ qv
        return ScalarField(grid, out * vol)

    pts = grid.points()
    qv = q.values.ravel()
    n = len(pts)
    out = np.empty(n)
    radial = getattr(kernel, "radial", None) if getattr(kernel, "translation_invariant", False) else None
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        P = pts[start:stop, None, :]
        if radial is not None:
            r = np.sqrt(((P - pts[None, :, :]) ** 2).sum(-1))
            W = radial(r)
        else:
            xb, sb = np.broadcast_arrays(P, pts[None, :, :])
            diag = np.sqrt(((xb - sb) ** 2).sum(-1)) <= SINGULAR_TOL
            W = np.zeros(diag.shape)
            off = ~diag
            f = kernel if not hasattr(kernel, "evaluate") else kernel.evaluate
            W[off] = f(xb[off], sb[off])
        out[start:stop] = W @ qv
    return ScalarField(grid, (out * vol).reshape(grid.shape))


def sample_displacement_kernel(kernel, grid: Grid) -> np.ndarray:
    """Kernel on displacements ``j dx``, ``j = -(Ns-1) .. Ns-1`` along each axis."""
    if not getattr(kernel, "translation_invariant", False):
        raise ValueError(f"{type(kernel).__name__} is not translation invariant")
    Ns = grid.cells_per_axis
    d = np.arange(-(Ns - 1), Ns) * grid.dx
    if grid.dim == 1:
        return kernel.radial(np.abs(d))
    DX, DY = np.meshgrid(d, d, indexing="ij")
    return kernel.radial(np.hypot(DX, DY))


def fft_convolve_array(kernel_samples: np.ndarray, values: np.ndarray, dim: int) -> np.ndarray:
    """Linear convolution of cell arrays with a displacement-sampled kernel.

    Leading axes of ``values`` are batched.  Padding goes to the next fast
    FFT length at or above ``2 Ns - 1`` so no wrap-around occurs; the result
    is cropped back to the original cells (no ``dx^d`` factor applied).
    """
    Ns = values.shape[-1]
    if kernel_samples.shape != (2 * Ns - 1,) * dim:
        raise ValueError(
            f"kernel samples shape {kernel_samples.shape} does not match "
            f"{(2 * Ns - 1,) * dim} for {Ns} cells"
        )
    axes = tuple(range(values.ndim - dim, values.ndim))
    nfft = [sfft.next_fast_len(2 * Ns - 1, real=True)] * dim
    kh = sfft.rfftn(kernel_samples, s=nfft, axes=tuple(range(dim)))
    qh = sfft.rfftn(values, s=nfft, axes=axes)
    full = sfft.irfftn(qh * kh, s=nfft, axes=axes)
    # output index i corresponds to full index i + Ns - 1
    crop = (Ellipsis,) + (slice(Ns - 1, 2 * Ns - 1),) * dim
    return full[crop]


def convolve_fft(kernel_samples, q: ScalarField) -> ScalarField:
    """Zero-padded FFT version of :func:`convolve_direct` for translation-invariant kernels."""
    grid = q.grid
    samples = np.asarray(kernel_samples, dtype=float)
    out = fft_convolve_array(samples, q.values, grid.dim)
    return ScalarField(grid, out * grid.cell_volume)
