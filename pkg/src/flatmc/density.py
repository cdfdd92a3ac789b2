"""Target densities: the evaluation interface and the concrete families.

Every target exposes ``dim`` and ``eval(x) -> (U(x), grad U(x))`` where ``U``
is an unnormalized negative log-density. Mixture and network targets also
provide batched evaluation over an ``(n, d)`` array of points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import InputError, NumericalError


@runtime_checkable
class TargetDensity(Protocol):
    dim: int

    def eval(self, x: np.ndarray) -> tuple[float, np.ndarray]: ...


class Target:
    """Mixin giving ``u`` and ``grad_u`` on top of ``eval``."""

    dim: int

    def eval(self, x):  # pragma: no cover - interface
        raise NotImplementedError

    def u(self, x) -> float:
        return self.eval(x)[0]

    def grad_u(self, x) -> np.ndarray:
        return self.eval(x)[1]

    def u_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.eval(x)[0] for x in X])


def _point(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != dim:
        raise InputError(f"point has shape {x.shape}, expected ({dim},)")
    return x


class Quadratic(Target):
    """U(x) = (m/2)|x - center|^2."""

    def __init__(self, m: float, dim: int, center=None):
        self.m = float(m)
        self.dim = int(dim)
        self.center = np.zeros(dim) if center is None else np.asarray(center, float)

    def eval(self, x):
        x = _point(x, self.dim)
        r = x - self.center
        return 0.5 * self.m * float(r @ r), self.m * r

    def u_batch(self, X):
        R = np.atleast_2d(X) - self.center
        return 0.5 * self.m * np.einsum("ij,ij->i", R, R)


class GaussianMixture(Target):
    """U(x) = -ln sum_i a_i exp(-(x - x_i)^T S_i (x - x_i) / 2).

    Components carry no normalizing constants, so U >= -ln(sum a_i) = 0.

    Parameters
    ----------
    weights : (K,) nonnegative, summing to one
    means : (K, d)
    precisions : (K,) isotropic precisions s_i, or (K, d, d) SPD matrices
    """

    def __init__(self, weights, means, precisions):
        w = np.asarray(weights, dtype=float).ravel()
        mu = np.atleast_2d(np.asarray(means, dtype=float))
        if mu.shape[0] != w.shape[0]:
            raise InputError("weights and means disagree on the number of components")
        if np.any(w < 0) or not np.any(w > 0):
            raise InputError("weights must be nonnegative with at least one positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InputError(f"weights sum to {w.sum()!r}, not 1")
        K, d = mu.shape
        P = np.asarray(precisions, dtype=float)
        if P.ndim <= 1:
            P = np.broadcast_to(P, (K,)).astype(float).copy()
            if np.any(P <= 0):
                raise InputError("isotropic precisions must be positive")
            self.isotropic = True
            self.s = P
            self.m_i = P.copy()
            self.L_i = P.copy()
        else:
            if P.shape != (K, d, d):
                raise InputError(f"precision matrices must have shape {(K, d, d)}")
            if not np.allclose(P, np.transpose(P, (0, 2, 1)), rtol=0, atol=1e-12):
                raise InputError("precision matrices must be symmetric")
            eig = np.linalg.eigvalsh(P)
            if np.any(eig[:, 0] <= 0):
                raise InputError("precision matrices must be positive definite")
            self.isotropic = False
            self.s = None
            self.m_i = eig[:, 0].copy()
            self.L_i = eig[:, -1].copy()
        self.weights = w
        self.means = mu
        self.precisions = P
        self.dim = d
        self.n_components = K
        with np.errstate(divide="ignore"):
            self.log_w = np.log(w)
        self.R = float(np.max(np.linalg.norm(mu, axis=1)))

    # -- evaluation -------------------------------------------------------
    def _exponents(self, X):
        """Per-component exponents ln a_i - q_i(x) and displacement terms."""
        D = X[:, None, :] - self.means[None, :, :]  # (n, K, d)
        if self.isotropic:
            SD = D * self.s[None, :, None]
        else:
            SD = np.einsum("kij,nkj->nki", self.precisions, D)
        q = 0.5 * np.einsum("nkd,nkd->nk", D, SD)
        return self.log_w[None, :] - q, SD

    def eval_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise InputError(f"points have dimension {X.shape[1]}, expected {self.dim}")
        e, SD = self._exponents(X)
        emax = e.max(axis=1, keepdims=True)
        p = np.exp(e - emax)
        tot = p.sum(axis=1, keepdims=True)
        U = -(emax[:, 0] + np.log(tot[:, 0]))
        resp = p / tot
        G = np.einsum("nk,nkd->nd", resp, SD)
        return U, G

    def u_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        e, _ = self._exponents(X)
        emax = e.max(axis=1)
        return -(emax + np.log(np.exp(e - emax[:, None]).sum(axis=1)))

    def responsibilities(self, X):
        e, _ = self._exponents(np.atleast_2d(np.asarray(X, dtype=float)))
        e = e - e.max(axis=1, keepdims=True)
        p = np.exp(e)
        return p / p.sum(axis=1, keepdims=True)

    def eval(self, x):
        x = _point(x, self.dim)
        U, G = self.eval_batch(x[None, :])
        return float(U[0]), G[0]

    # -- exact expectations ----------------------------------------------
    def component_mass(self) -> np.ndarray:
        """Probability of each component under mu (normalizers included)."""
        if self.isotropic:
            logdet = self.dim * np.log(self.s)
        else:
            logdet = np.linalg.slogdet(self.precisions)[1]
        lm = self.log_w - 0.5 * logdet
        lm = lm - lm.max()
        p = np.exp(lm)
        return p / p.sum()

    def expect_gaussian_bump(self, center, width: float) -> float:
        """Exact mu-expectation of exp(-|x - center|^2 / (2 width^2))."""
        c = np.asarray(center, dtype=float)
        w2 = float(width) ** 2
        pk = self.component_mass()
        total = 0.0
        for k in range(self.n_components):
            if pk[k] == 0:
                continue
            cov = (np.eye(self.dim) / self.s[k] if self.isotropic
                   else np.linalg.inv(self.precisions[k]))
            A = cov + w2 * np.eye(self.dim)
            r = self.means[k] - c
            sign, logdetA = np.linalg.slogdet(A)
            val = np.exp(0.5 * self.dim * np.log(w2) - 0.5 * logdetA
                         - 0.5 * r @ np.linalg.solve(A, r))
            total += pk[k] * val
        return float(total)

    # -- config -----------------------------------------------------------
    @classmethod
    def from_config(cls, cfg: dict) -> "GaussianMixture":
        try:
            return cls(cfg["weights"], cfg["means"], cfg["precisions"])
        except KeyError as exc:
            raise InputError(f"mixture config is missing key {exc}") from None

    def to_config(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "precisions": self.precisions.tolist()}


def mixture_eval(gm: GaussianMixture, x) -> tuple[float, np.ndarray]:
    """Value and gradient of the mixture negative log-density at ``x``."""
    return gm.eval(x)


def sample_mixture_iid(gm: GaussianMixture, n: int, seed) -> np.ndarray:
    """Exact i.i.d. draws from the normalized mixture, shape ``(n, d)``."""
    if n < 1:
        raise InputError("n must be at least 1")
    rng = np.random.default_rng(seed)
    comp = rng.choice(gm.n_components, size=n, p=gm.component_mass())
    Z = rng.standard_normal((n, gm.dim))
    if gm.isotropic:
        return gm.means[comp] + Z / np.sqrt(gm.s[comp])[:, None]
    out = np.empty((n, gm.dim))
    for k in range(gm.n_components):
        idx = comp == k
        if not np.any(idx):
            continue
        C = np.linalg.cholesky(gm.precisions[k])
        # x = mean + C^{-T} z has covariance (C C^T)^{-1}
        out[idx] = gm.means[k] + np.linalg.solve(C.T, Z[idx].T).T
    return out


# ---------------------------------------------------------------------------
# Bayesian neural network posterior
# ---------------------------------------------------------------------------

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a, h: 1.0 - h * h, 1.0),
    "sigmoid": (lambda a: 0.5 * (1.0 + np.tanh(0.5 * a)), lambda a, h: h * (1.0 - h), 1.0),
}


@dataclass(frozen=True, eq=False)
class BnnPosterior(Target):
    """Regularized negative log-posterior of a feedforward softmax classifier.

    Sampling variables are all weights (the x-block, length d1) followed by
    the free biases (the y-block, length d2). With ``free_biases=False`` the
    biases are fixed to ``bias_values`` and d2 = 0.

    Labels are zero-based class indices in ``[0, I)``.
    """

    widths: tuple[int, ...]
    features: np.ndarray
    labels: np.ndarray
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta: float | None = None
    activation: str = "tanh"
    free_biases: bool = True
    bias_values: tuple[float, ...] | None = None
    _shapes: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 2 or min(widths) < 1:
            raise InputError("widths must list at least input and output layer sizes")
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels, dtype=int).ravel()
        if X.shape != (y.shape[0], widths[0]):
            raise InputError("features must have shape (K, p) with one label per row")
        if np.any(y < 0) or np.any(y >= widths[-1]):
            raise InputError("labels must lie in [0, I)")
        if self.activation not in _ACTIVATIONS:
            raise InputError(f"unknown activation {self.activation!r}")
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise InputError("regularization weights must be positive")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if self.beta is None:
            object.__setattr__(self, "beta", 1.0 / y.shape[0])
        if self.beta <= 0:
            raise InputError("likelihood weight must be positive")
        n_bias = sum(widths[1:])
        if not self.free_biases:
            bv = (0.0,) * n_bias if self.bias_values is None else tuple(map(float, self.bias_values))
            if len(bv) != n_bias:
                raise InputError(f"bias_values needs {n_bias} entries")
            object.__setattr__(self, "bias_values", bv)
        shapes = [(widths[l], widths[l - 1]) for l in range(1, len(widths))]
        object.__setattr__(self, "_shapes", shapes)

    # -- structure ----------------------------------------------------------
    @property
    def n_classes(self) -> int:
        return self.widths[-1]

    @property
    def n_data(self) -> int:
        return self.labels.shape[0]

    @property
    def d1(self) -> int:
        return sum(a * b for a, b in self._shapes)

    @property
    def d2(self) -> int:
        return sum(self.widths[1:]) if self.free_biases else 0

    @property
    def dim(self) -> int:
        return self.d1 + self.d2

    @property
    def sigma_max(self) -> float:
        return _ACTIVATIONS[self.activation][2]

    @property
    def m_star(self) -> int:
        """Direct connections into each output unit (penultimate width)."""
        return self.widths[-2]

    @property
    def c_hat_bias(self) -> float:
        if self.free_biases:
            return 0.0
        return max(self.bias_values) - min(self.bias_values)

    def unpack(self, v):
        v = np.asarray(v, dtype=float)
        Ws, bs, k = [], [], 0
        for shp in self._shapes:
            n = shp[0] * shp[1]
            Ws.append(v[k:k + n].reshape(shp))
            k += n
        src = v[k:] if self.free_biases else np.asarray(self.bias_values)
        j = 0
        for l in range(1, len(self.widths)):
            bs.append(src[j:j + self.widths[l]])
            j += self.widths[l]
        return Ws, bs

    # -- evaluation -------------------------------------------------------
    def eval(self, v):
        v = _point(v, self.dim)
        Ws, bs = self.unpack(v)
        act, dact, _ = _ACTIVATIONS[self.activation]
        hs, pre = [self.features], []
        with np.errstate(over="raise", invalid="raise"):
            try:
                for l, (W, b) in enumerate(zip(Ws, bs)):
                    a = hs[-1] @ W.T + b
                    pre.append(a)
                    if l < len(Ws) - 1:
                        hs.append(act(a))
                logits = pre[-1]
                lmax = logits.max(axis=1, keepdims=True)
                lse = lmax[:, 0] + np.log(np.exp(logits - lmax).sum(axis=1))
            except FloatingPointError as exc:
                raise NumericalError(f"network evaluation overflowed: {exc}") from None
        K = self.n_data
        rows = np.arange(K)
        nll = float(np.sum(lse - logits[rows, self.labels]))
        xw = v[:self.d1]
        yb = v[self.d1:]
        U = self.alpha1 * float(xw @ xw) + self.alpha2 * float(yb @ yb) + self.beta * nll
        if not np.isfinite(U):
            raise NumericalError("non-finite posterior value; rescale the data")

        # reverse pass
        soft = np.exp(logits - lse[:, None])
        delta = soft
        delta[rows, self.labels] -= 1.0
        delta *= self.beta
        gW, gb = [None] * len(Ws), [None] * len(Ws)
        for l in range(len(Ws) - 1, -1, -1):
            gW[l] = delta.T @ hs[l]
            gb[l] = delta.sum(axis=0)
            if l > 0:
                dh = delta @ Ws[l]
                delta = dh * dact(pre[l - 1], hs[l])
        grad = np.concatenate([g.ravel() for g in gW] + ([np.concatenate(gb)] if self.free_biases else []))
        grad[:self.d1] += 2.0 * self.alpha1 * xw
        if self.free_biases:
            grad[self.d1:] += 2.0 * self.alpha2 * yb
        return U, grad

    @classmethod
    def from_config(cls, cfg: dict) -> "BnnPosterior":
        try:
            layers = cfg["layers"]
            ds = cfg["dataset"]
        except KeyError as exc:
            raise InputError(f"bnn config is missing key {exc}") from None
        if "features" in ds:
            X, y = np.asarray(ds["features"], float), np.asarray(ds["labels"], int)
        else:
            X, y = synthetic_dataset(layers[0], layers[-1], int(ds.get("size", 10)),
                                     ds.get("seed", 0))
        return cls(tuple(layers), X, y, alpha1=float(cfg.get("alpha1", 1.0)),
                   alpha2=float(cfg.get("alpha2", cfg.get("alpha1", 1.0))),
                   beta=cfg.get("beta"), activation=cfg.get("activation", "tanh"),
                   free_biases=bool(cfg.get("free_biases", True)),
                   bias_values=cfg.get("bias_values"))


def synthetic_dataset(p: int, n_classes: int, size: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Random standard-normal features with uniformly random labels."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((size, p)), rng.integers(0, n_classes, size=size)


def bnn_eval(net: BnnPosterior, v) -> tuple[float, np.ndarray]:
    """Value and gradient of the network negative log-posterior."""
    return net.eval(v)


def target_from_config(cfg: dict):
    """Build a mixture or network target from a config mapping."""
    kind = cfg.get("kind", "mixture")
    if kind == "mixture":
        return GaussianMixture.from_config(cfg)
    if kind == "bnn":
        return BnnPosterior.from_config(cfg)
    raise InputError(f"unknown target kind {kind!r}")


def finite_difference_grad(fun, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central differences with a step scaled to each coordinate's size."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


__all__: Sequence[str] = [
    "TargetDensity", "Target", "Quadratic", "GaussianMixture", "BnnPosterior",
    "mixture_eval", "bnn_eval", "sample_mixture_iid", "synthetic_dataset",
    "target_from_config", "finite_difference_grad",
]
