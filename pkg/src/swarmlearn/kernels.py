"""Pairwise interaction functions.

Every kernel is a small frozen dataclass.  ``evaluate(x, s)`` broadcasts over
numpy arrays; in 2D/3D the last axis of ``x`` and ``s`` holds coordinates.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import ClassVar

import numpy as np
from scipy import special

__all__ = [
    "KernelSpec",
    "ScreenedPoisson1D",
    "FreeSpaceExp",
    "CuckerSmale",
    "ScreenedPoisson2DSeries",
    "RadialBessel",
    "SingularityError",
    "greens_1d_eval",
    "free_space_eval",
    "cs_kernel_eval",
    "greens_2d_series_eval",
    "radial_bessel_eval",
    "radial_profile",
    "kernel_from_dict",
    "kernel_to_dict",
]

SINGULAR_TOL = 1e-12


class SingularityError(ValueError):
    """Raised when a singular kernel is evaluated on its singular set."""


def _positive(**params):
    for name, value in params.items():
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class ScreenedPoisson1D:
    """Closed-form Dirichlet Green's function of -(1/2k)(d^2/dx^2 - lambda^2)."""

    k: float
    lam: float
    L: float
    tag: ClassVar[str] = "screened_poisson_1d"
    dim: ClassVar[int] = 1
    translation_invariant: ClassVar[bool] = False

    def __post_init__(self):
        _positive(k=self.k, lam=self.lam, L=self.L)

    def evaluate(self, x, s):
        return greens_1d_eval(self, x, s)


@dataclass(frozen=True)
class FreeSpaceExp:
    """Infinite-domain counterpart (k/lambda) exp(-lambda |x - s|)."""

    k: float
    lam: float
    tag: ClassVar[str] = "free_space_exp"
    dim: ClassVar[int] = 1
    translation_invariant: ClassVar[bool] = True

    def __post_init__(self):
        _positive(k=self.k, lam=self.lam)

    def evaluate(self, x, s):
        return free_space_eval(self, x, s)

    def radial(self, r):
        return (self.k / self.lam) * np.exp(-self.lam * np.asarray(r, dtype=float))


@dataclass(frozen=True)
class CuckerSmale:
    """K / (1 + r^2)^gamma, usable in any dimension."""

    K: float
    gamma: float
    tag: ClassVar[str] = "cucker_smale"
    dim: ClassVar[int | None] = None
    translation_invariant: ClassVar[bool] = True

    def __post_init__(self):
        _positive(K=self.K, gamma=self.gamma)

    def evaluate(self, x, s):
        """1D positions; use ``radial`` with precomputed distances in 2D."""
        return cs_kernel_eval(self, np.abs(np.asarray(x, dtype=float) - np.asarray(s, dtype=float)))

    def radial(self, r):
        return cs_kernel_eval(self, r)


@dataclass(frozen=True)
class ScreenedPoisson2DSeries:
    """Truncated sine-series Green's function on the square [-L/2, L/2]^2."""

    k: float
    lam: float
    L: float
    truncation: int = 256
    tag: ClassVar[str] = "screened_poisson_2d"
    dim: ClassVar[int] = 2
    translation_invariant: ClassVar[bool] = False

    def __post_init__(self):
        _positive(k=self.k, lam=self.lam, L=self.L)
        if int(self.truncation) != self.truncation or self.truncation < 1:
            raise ValueError(f"truncation must be a positive integer, got {self.truncation}")

    def evaluate(self, x, s):
        return greens_2d_series_eval(self, x, s)


@dataclass(frozen=True)
class RadialBessel:
    """Singular kernel on the ball of radius L/2 in d = 2 or 3."""

    k: float
    lam: float
    d: int
    L: float
    image: bool = True
    tag: ClassVar[str] = "radial_bessel"
    translation_invariant: ClassVar[bool] = False

    def __post_init__(self):
        _positive(k=self.k, lam=self.lam, L=self.L)
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")

    @property
    def dim(self) -> int:
        return self.d

    def evaluate(self, x, s):
        return radial_bessel_eval(self, x, s)


KernelSpec = ScreenedPoisson1D | FreeSpaceExp | CuckerSmale | ScreenedPoisson2DSeries | RadialBessel

_REGISTRY = {
    cls.tag: cls
    for cls in (ScreenedPoisson1D, FreeSpaceExp, CuckerSmale, ScreenedPoisson2DSeries, RadialBessel)
}


def greens_1d_eval(spec: ScreenedPoisson1D, x, s):
    """Evaluate the bounded-domain 1D kernel.

    ``K sigma_p(s) sigma_m(x)`` for ``s <= x`` and ``K sigma_m(s) sigma_p(x)``
    otherwise, with ``K = -(k/lambda) / (e^{lambda L} - e^{-lambda L})``.
    The product form is rewritten with ``min``/``max`` so it broadcasts.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    half = 0.5 * spec.L
    tol = 1e-12 * max(1.0, half)
    for name, arr in (("x", x), ("s", s)):
        bad = np.abs(arr) > half + tol
        if np.any(bad):
            offending = np.atleast_1d(arr)[np.atleast_1d(bad)]
            raise ValueError(f"{name}={offending[0]!r} lies outside [-{half}, {half}]")
    lam = spec.lam
    K = -(spec.k / lam) / (2.0 * np.sinh(lam * spec.L))
    lo = np.minimum(x, s)
    hi = np.maximum(x, s)
    value = K * 2.0 * np.sinh(lam * (lo + half)) * 2.0 * np.sinh(lam * (hi - half))
    # roundoff at the walls can leave -0.0 or -1e-17
    value = np.maximum(value, 0.0)
    return value[()] if value.ndim == 0 else value


def free_space_eval(spec: FreeSpaceExp, x, s):
    return spec.radial(np.abs(np.asarray(x, dtype=float) - np.asarray(s, dtype=float)))


def cs_kernel_eval(spec: CuckerSmale, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be nonnegative")
    value = spec.K / (1.0 + r * r) ** spec.gamma
    return value[()] if value.ndim == 0 else value


def greens_2d_series_eval(spec: ScreenedPoisson2DSeries, x, s):
    """Double sine series of the 2D Dirichlet kernel, truncated per axis.

    Coefficients are ``8k / (L^2 (mu_nm + lambda^2))`` so that the series
    inverts the same operator as the spectral solver.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if x.shape[-1] != 2 or s.shape[-1] != 2:
        raise ValueError("2D kernel expects points with a trailing axis of length 2")
    x, s = np.broadcast_arrays(x, s)
    if np.any(np.linalg.norm(x - s, axis=-1) <= SINGULAR_TOL):
        raise SingularityError("2D kernel is singular at x = s")
    L = spec.L
    n = np.arange(1, spec.truncation + 1)
    wn = n * np.pi / L
    coeff = 8.0 * spec.k / (L * L) / (wn[:, None] ** 2 + wn[None, :] ** 2 + spec.lam**2)
    xs = x.reshape(-1, 2) + 0.5 * L
    ss = s.reshape(-1, 2) + 0.5 * L
    out = np.empty(len(xs))
    for i in range(len(xs)):
        a = np.sin(wn * xs[i, 0]) * np.sin(wn * ss[i, 0])
        b = np.sin(wn * xs[i, 1]) * np.sin(wn * ss[i, 1])
        out[i] = a @ coeff @ b
    out = out.reshape(x.shape[:-1])
    return out[()] if out.ndim == 0 else out


def radial_profile(spec: RadialBessel, r):
    """Free-space part as a function of distance; K_{1/2} in closed form for d=3."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= SINGULAR_TOL):
        raise SingularityError("radial kernel is singular at r = 0")
    k, lam = spec.k, spec.lam
    if spec.d == 2:
        value = (k / (2.0 * np.pi)) * special.k0(lam * r)
    else:
        z = lam * r
        k_half = np.sqrt(np.pi / (2.0 * z)) * np.exp(-z)
        value = (k / (2.0 * np.pi)) ** 1.5 * np.sqrt(lam / r) * k_half
    return value[()] if value.ndim == 0 else value


def radial_bessel_eval(spec: RadialBessel, x, s):
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    r = np.linalg.norm(x - s, axis=-1)
    value = radial_profile(spec, r)
    if spec.image:
        xn = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(xn <= SINGULAR_TOL):
            raise SingularityError("image point undefined for x = 0")
        mirrored = s - (spec.L**2 / 4.0) * x / xn**2
        r_img = (2.0 / spec.L) * xn[..., 0] * np.linalg.norm(mirrored, axis=-1)
        value = value - radial_profile(spec, r_img)
    return value


def kernel_to_dict(spec) -> dict:
    d = {"type": spec.tag}
    for key, value in asdict(spec).items():
        d["lambda" if key == "lam" else key] = value
    return d


def kernel_from_dict(data: dict):
    data = dict(data)
    try:
        cls = _REGISTRY[data.pop("type")]
    except KeyError as exc:
        raise ValueError(f"unknown or missing kernel type in {data!r}") from exc
    if "lambda" in data:
        data["lam"] = data.pop("lambda")
    return cls(**data)
