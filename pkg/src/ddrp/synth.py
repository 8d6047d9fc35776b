"""Synthetic sample matrices with controlled second moments.

Three row distributions, all zero-mean Gaussian with a constructed
covariance:

* ``diag``     -- diagonal covariance driven by i.i.d. Laplace draws,
* ``uniform``  -- eigenvalues driven by i.i.d. U[0, 1] draws, eigenvectors
                  a Haar-random rotation,
* ``unifskew`` -- the elementwise average of an independent ``diag`` and
                  ``uniform`` matrix of the same shape.

``scale_mode`` says how a draw ``v`` becomes a variance: ``"std"`` (the
default) treats it as a standard deviation (variance ``v**2``),
``"variance"`` uses ``|v|`` directly.

Sub-seeds are derived as ``SeedSequence((seed, tag))`` so that the
constituents of ``unifskew`` (tags 1 and 2) and the rotation inside
``uniform`` (tag 3) can be regenerated independently.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

TAG_DIAG = 1
TAG_UNIFORM = 2
TAG_ROTATION = 3


class SyntheticKind(str, enum.Enum):
    DIAG = "diag"
    UNIFORM = "uniform"
    UNIFSKEW = "unifskew"


PAIRS = {
    "diag-diag": (SyntheticKind.DIAG, SyntheticKind.DIAG),
    "uniform-diag": (SyntheticKind.UNIFORM, SyntheticKind.DIAG),
    "uniform-unifskew": (SyntheticKind.UNIFORM, SyntheticKind.UNIFSKEW),
    "uniform-uniform": (SyntheticKind.UNIFORM, SyntheticKind.UNIFORM),
}


@dataclass(frozen=True)
class SyntheticSpec:
    kind: SyntheticKind
    d: int
    n: int
    seed: int = 0
    laplace_scale: float = 1.0
    scale_mode: str = "std"

    def __post_init__(self):
        object.__setattr__(self, "kind", SyntheticKind(self.kind))
        if self.d < 1 or self.n < 1:
            raise ConfigurationError("synthetic d and n must be >= 1")
        if self.scale_mode not in ("std", "variance"):
            raise ConfigurationError(f"unknown scale_mode {self.scale_mode!r}")
        if self.laplace_scale <= 0:
            raise ConfigurationError("laplace_scale must be positive")

    def replace(self, **kw):
        fields = dict(kind=self.kind, d=self.d, n=self.n, seed=self.seed,
                      laplace_scale=self.laplace_scale, scale_mode=self.scale_mode)
        fields.update(kw)
        return SyntheticSpec(**fields)


def derive_seed(seed, tag):
    return int(np.random.SeedSequence((int(seed) & (2**64 - 1), tag)).generate_state(1, np.uint64)[0])


def random_rotation(d, seed):
    """Haar-distributed orthogonal matrix (QR of a Gaussian, sign-corrected)."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs


def _to_variance(draws, mode):
    return draws ** 2 if mode == "std" else np.abs(draws)


def covariance(spec):
    """Population second-moment matrix used by :func:`generate`."""
    if spec.kind is SyntheticKind.UNIFSKEW:
        # average of independent zero-mean matrices: (S_diag + S_uniform) / 4
        a = covariance(spec.replace(kind=SyntheticKind.DIAG, seed=derive_seed(spec.seed, TAG_DIAG)))
        b = covariance(spec.replace(kind=SyntheticKind.UNIFORM,
                                    seed=derive_seed(spec.seed, TAG_UNIFORM)))
        return (a + b) / 4.0
    variances, rotation = _draw_structure(spec)
    if rotation is None:
        return np.diag(variances)
    return (rotation * variances) @ rotation.T


def _draw_structure(spec):
    rng = np.random.default_rng(spec.seed)
    if spec.kind is SyntheticKind.DIAG:
        draws = rng.laplace(0.0, spec.laplace_scale, size=spec.d)
        return _to_variance(draws, spec.scale_mode), None
    draws = rng.uniform(0.0, 1.0, size=spec.d)
    rotation = random_rotation(spec.d, derive_seed(spec.seed, TAG_ROTATION))
    return _to_variance(draws, spec.scale_mode), rotation


def generate(spec):
    """n x d matrix of i.i.d. rows for ``spec`` (deterministic in the seed)."""
    if spec.kind is SyntheticKind.UNIFSKEW:
        a = generate(spec.replace(kind=SyntheticKind.DIAG, seed=derive_seed(spec.seed, TAG_DIAG)))
        b = generate(spec.replace(kind=SyntheticKind.UNIFORM,
                                  seed=derive_seed(spec.seed, TAG_UNIFORM)))
        return (a + b) / 2.0
    variances, rotation = _draw_structure(spec)
    rows_rng = np.random.default_rng(derive_seed(spec.seed, 0))
    g = rows_rng.standard_normal((spec.n, spec.d)) * np.sqrt(variances)
    return g if rotation is None else g @ rotation.T


def generate_pair(pair, d, n, seed=0, **kw):
    """``(X, W)`` for a named pair such as ``"diag-diag"``; W uses ``seed + 1``."""
    try:
        kx, kw_ = PAIRS[pair]
    except KeyError:
        raise ConfigurationError(
            f"unknown pair {pair!r}; choose from {', '.join(PAIRS)}") from None
    x = generate(SyntheticSpec(kx, d, n, seed, **kw))
    w = generate(SyntheticSpec(kw_, d, n, seed + 1, **kw))
    return x, w


def factor_regression(n, d, rank=3, noise_log10=(-2.0, 2.0), label_noise=0.1, seed=0):
    """Heteroscedastic regression task.

    Rows are ``f @ C + e`` with ``rank`` standard-normal latent factors ``f``,
    isotropic Gaussian loadings ``C`` and per-feature noise ``e`` whose
    variances are log-spaced over ``noise_log10`` (shuffled). Targets are
    ``f @ beta + label_noise * N(0, 1)``. High-variance features are mostly
    noise, which is the regime where down-weighting them before projecting
    helps.
    """
    rng = np.random.default_rng(seed)
    noise_var = np.logspace(noise_log10[0], noise_log10[1], d)
    rng.shuffle(noise_var)
    factors = rng.standard_normal((n, rank))
    loadings = rng.standard_normal((rank, d))
    x = factors @ loadings + rng.standard_normal((n, d)) * np.sqrt(noise_var)
    beta = rng.standard_normal(rank)
    y = factors @ beta + label_noise * rng.standard_normal(n)
    return x, y


def separable_classification(n, d, rank=3, margin=1.0, noise_log10=(-2.0, 0.0), seed=0):
    """Two-class version of :func:`factor_regression`.

    Labels are ``sign(f . beta)`` and every latent point is pushed ``margin``
    away from the separating plane, so the classes are separable in the
    factor space; observed features add heteroscedastic noise.
    """
    rng = np.random.default_rng(seed)
    noise_var = np.logspace(noise_log10[0], noise_log10[1], d)
    rng.shuffle(noise_var)
    beta = rng.standard_normal(rank)
    beta /= np.linalg.norm(beta)
    factors = rng.standard_normal((n, rank))
    side = factors @ beta
    y = np.where(side >= 0, 1.0, -1.0)
    factors += np.outer(y * margin, beta)
    loadings = rng.standard_normal((rank, d))
    x = factors @ loadings + rng.standard_normal((n, d)) * np.sqrt(noise_var)
    return x, y
