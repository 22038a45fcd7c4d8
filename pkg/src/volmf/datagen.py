"""Seeded synthetic instances and small literal fixtures.

Every random draw comes from :func:`volmf.core.rng_stream` with its own
purpose tag, so changing one part of an instance (say the mask) never shifts
the stream of another (say the factors).
"""

from dataclasses import dataclass, asdict

import numpy as np

from .core import rng_stream
from .errors import InputError, MaskResampleExhausted, UnknownFixture

__all__ = [
    "SyntheticSpec",
    "CompletionInstance",
    "gen_completion_instance",
    "gen_separable_instance",
    "gen_dirichlet_instance",
    "fixture",
    "FIXTURES",
    "polytope_matrix",
]

MAX_MASK_ATTEMPTS = 100


@dataclass
class SyntheticSpec:
    m: int = 200
    n: int = 200
    r: int = 5
    h_zero_fraction: float = 0.8
    missing_fraction: float = 0.8
    noise_level: float = 0.0
    normalize_mean_to_one: bool = True
    seed: int = 0

    def __post_init__(self):
        if min(self.m, self.n, self.r) < 1:
            raise InputError("m, n and r must be positive")
        for name in ("h_zero_fraction", "missing_fraction"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise InputError(f"{name} must lie in [0, 1)")
        if self.noise_level < 0:
            raise InputError("noise_level must be nonnegative")

    def to_dict(self):
        return asdict(self)


@dataclass
class CompletionInstance:
    X: np.ndarray
    X_clean: np.ndarray
    mask: np.ndarray
    W: np.ndarray
    H: np.ndarray

    def __iter__(self):
        return iter((self.X, self.X_clean, self.mask, self.W, self.H))


def _rmse(A, B):
    D = A - B
    return float(np.sqrt(np.mean(D * D)))


def _add_noise(X, level, rng):
    """Uniform noise rescaled so that the post-clipping RMSE equals ``level``."""
    E = rng.uniform(-1.0, 1.0, size=X.shape)
    s = level / _rmse(E, 0.0)
    Xn = np.maximum(X + s * E, 0.0)
    # clipping lowers the RMSE a little; a few secant-free rescalings fix it
    for _ in range(50):
        err = _rmse(Xn, X)
        if abs(err - level) <= 1e-6 * level:
            break
        s *= level / err
        Xn = np.maximum(X + s * E, 0.0)
    return Xn


def _draw_mask(m, n, fraction, seed):
    hidden = int(round(fraction * m * n))
    for attempt in range(MAX_MASK_ATTEMPTS):
        rng = rng_stream(seed, "completion-mask", attempt)
        flat = np.ones(m * n)
        flat[rng.permutation(m * n)[:hidden]] = 0.0
        mask = flat.reshape(m, n)
        if mask.any(axis=1).all() and mask.any(axis=0).all():
            return mask
    raise MaskResampleExhausted(
        f"no mask with every row and column observed after {MAX_MASK_ATTEMPTS} draws"
    )


def gen_completion_instance(spec: SyntheticSpec) -> CompletionInstance:
    """Low-rank nonnegative completion instance.

    ``W`` and ``H`` are uniform on [0, 1]; a ``h_zero_fraction`` share of the
    entries of ``H`` is set to zero; ``X = WH`` is divided by its mean (the
    divisor is folded into the returned ``W``); noise and the mask follow.
    """
    m, n, r = spec.m, spec.n, spec.r
    W = rng_stream(spec.seed, "completion-W").random((m, r))
    H = rng_stream(spec.seed, "completion-H").random((r, n))
    zeros = int(round(spec.h_zero_fraction * r * n))
    if zeros:
        idx = rng_stream(spec.seed, "completion-H-zeros").permutation(r * n)[:zeros]
        H.reshape(-1)[idx] = 0.0
    X = W @ H
    if spec.normalize_mean_to_one:
        mean = X.mean()
        if mean > 0:
            W = W / mean
            X = W @ H
    if spec.noise_level > 0:
        Xn = _add_noise(X, spec.noise_level, rng_stream(spec.seed, "completion-noise"))
    else:
        Xn = X.copy()
    mask = _draw_mask(m, n, spec.missing_fraction, spec.seed)
    return CompletionInstance(Xn, X, mask, W, H)


def gen_separable_instance(m, n, r, noise=0.0, seed=0):
    """Separable data ``X = W [I_r, H'] Pi + N``.

    Columns of ``H'`` are uniform on the unit simplex; every column of ``N``
    has norm at most ``noise``.

    Returns
    -------
    X : ndarray, shape (m, n)
    true_indices : list of int
        ``true_indices[k]`` is the column of ``X`` equal to ``W[:, k]`` (before noise).
    W, H : ndarray
    """
    if n < r or m < r:
        raise InputError("need m >= r and n >= r")
    W = rng_stream(seed, "separable-W").random((m, r))
    Hp = rng_stream(seed, "separable-H").dirichlet(np.ones(r), size=n - r).T
    H0 = np.hstack([np.eye(r), Hp])
    perm = rng_stream(seed, "separable-perm").permutation(n)
    H = np.empty_like(H0)
    H[:, perm] = H0
    true_indices = [int(perm[k]) for k in range(r)]
    X = W @ H
    if noise > 0:
        rng = rng_stream(seed, "separable-noise")
        N = rng.standard_normal((m, n))
        N *= noise * rng.random(n) / np.linalg.norm(N, axis=0)
        X = X + N
    return X, true_indices, W, H


def gen_dirichlet_instance(m=50, n=500, r=5, concentration=0.2, seed=0):
    """``X = W H`` with ``W`` uniform on [0, 1] and Dirichlet columns of ``H``."""
    W = rng_stream(seed, "dirichlet-W").random((m, r))
    H = rng_stream(seed, "dirichlet-H").dirichlet(np.full(r, concentration), size=n).T
    return W @ H, W, H


def polytope_matrix(w):
    """The 3 x 6 matrix whose two scalings generate the 6 x 6 example."""
    return np.array([
        [w, 1, 1, w, 0, 0],
        [1, w, 0, 0, w, 1],
        [0, 0, w, 1, 1, w],
    ], dtype=np.float64)


def _example1_w():
    return 3.0 * polytope_matrix(2.0 / 3.0).T


def _example1_h():
    return 3.0 * polytope_matrix(1.0 / 3.0)


FIXTURES = {
    "example1_X": lambda: np.array([
        [11, 9, 6, 2, 3, 9],
        [9, 11, 9, 3, 2, 6],
        [3, 9, 11, 9, 6, 2],
        [2, 6, 9, 11, 9, 3],
        [6, 2, 3, 9, 11, 9],
        [9, 3, 2, 6, 9, 11],
    ], dtype=np.float64),
    "example1_W": _example1_w,
    "example1_H": _example1_h,
    "tightness_W": lambda: np.array([
        [0, 0.5, 1],
        [0.2, 1, 0.2],
        [1, 0.5, 0],
        [0.8, 0, 0.8],
    ]),
    "tightness_H": lambda: np.array([
        [0.75, 0.5, 0, 0.25],
        [0, 0.5, 0.5, 0],
        [0.25, 0, 0.5, 0.75],
    ]),
    "tightness_X": lambda: np.array([
        [0.25, 0.25, 0.75, 0.75],
        [0.2, 0.6, 0.6, 0.2],
        [0.75, 0.75, 0.25, 0.25],
        [0.8, 0.4, 0.4, 0.8],
    ]),
    "pmf_H_boundary": lambda: np.array([
        [1, 2, 2, 1, 0, 0],
        [2, 1, 0, 0, 1, 2],
        [0, 0, 1, 2, 2, 1],
    ]) / 3.0,
}


def fixture(name):
    """Return a fresh copy of a literal fixture matrix."""
    try:
        return FIXTURES[name]()
    except KeyError:
        raise UnknownFixture(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None
