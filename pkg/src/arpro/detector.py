"""Linearly decomposable anomaly detectors.

A detector assigns each input a vector of per-feature scores ``alpha`` and a
scalar regularizer ``beta``; the total anomaly score is their sum. Region
scores restrict the sum of ``alpha`` to a binary selection, feature-wise
thresholds binarize ``alpha`` into an anomaly mask, and region-score gradients
come off the differentiation tape.

Two detectors ship: squared reconstruction error of an autoencoder, and
independent per-feature Gaussian negative log-likelihood. Both use a constant
``beta`` of zero; the decomposition API still carries ``beta`` so region
arithmetic holds for the general form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ckpt
from .tensor import AdamW, Array, Mlp, Tensor, stream

DECOMP_RTOL = 1e-9
DEFAULT_SIGMA_FLOOR = 1e-3


@dataclass(frozen=True)
class DecomposableScore:
    """Per-feature scores, regularizer, and their total."""

    alpha: Array
    beta: float
    total: float

    def __post_init__(self):
        gap = abs(self.total - (float(self.alpha.sum()) + self.beta))
        if gap > DECOMP_RTOL * (1.0 + abs(self.total)):
            raise ValueError(f"score does not decompose: residual {gap}")

    @classmethod
    def build(cls, alpha: Array, beta: float) -> "DecomposableScore":
        alpha = np.asarray(alpha, dtype=np.float64)
        return cls(alpha=alpha, beta=float(beta), total=float(alpha.sum() + beta))


def as_mask(z, n: int) -> Array:
    """Validate a {0,1} vector of length n and return it as float64."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (n,):
        raise ValueError(f"mask shape {z.shape} does not match dimension {n}")
    if not np.all((z == 0.0) | (z == 1.0)):
        raise ValueError("mask must be binary (entries in {0, 1})")
    return z


def _check_input(x, n: int) -> Array:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise ValueError(f"input dimension mismatch: expected ({n},), got {x.shape}")
    return x


def _check_batch(data, n: int | None = None) -> Array:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0 or arr.size == 0:
        raise ValueError("training data is empty")
    if arr.ndim != 2:
        raise ValueError(f"training data must be a 2-D batch, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("training data contains non-finite values")
    if n is not None and arr.shape[1] != n:
        raise ValueError(f"training data has dimension {arr.shape[1]}, expected {n}")
    return arr


class _DetectorBase:
    """Shared decomposable-score operations; subclasses provide alpha."""

    n: int

    def alpha(self, x: Array) -> Array:
        raise NotImplementedError

    def alpha_batch(self, data: Array) -> Array:
        data = _check_batch(data, self.n)
        return np.stack([self.alpha(row) for row in data])

    def alpha_graph(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def beta_value(self, x: Array) -> float:
        return 0.0

    def score(self, x) -> DecomposableScore:
        x = _check_input(x, self.n)
        return DecomposableScore.build(self.alpha(x), self.beta_value(x))

    def region_score(self, x, z) -> float:
        x = _check_input(x, self.n)
        z = as_mask(z, self.n)
        return float(self.beta_value(x) + (self.alpha(x) * z).sum())

    def grad_region_score(self, x, z) -> Array:
        """Gradient of the region score with respect to the input, via the tape."""
        x = _check_input(x, self.n)
        z = as_mask(z, self.n)
        leaf = Tensor(x, requires_grad=True)
        s = (self.alpha_graph(leaf) * Tensor(z)).sum()
        s.backward()
        return leaf.gradient()


class GaussDetector(_DetectorBase):
    """Independent per-feature Gaussian negative log-likelihood scores."""

    kind = "gauss"

    def __init__(self, mu, sigma, sigma_floor: float = DEFAULT_SIGMA_FLOOR):
        if sigma_floor <= 0.0:
            raise ValueError("sigma floor must be positive")
        mu = np.asarray(mu, dtype=np.float64)
        sigma = np.asarray(sigma, dtype=np.float64)
        if mu.ndim != 1 or mu.shape != sigma.shape:
            raise ValueError(f"mu/sigma shapes do not agree: {mu.shape} vs {sigma.shape}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("mu/sigma contain non-finite values")
        self.mu = mu
        self.sigma = np.maximum(sigma, sigma_floor)
        self.sigma_floor = float(sigma_floor)
        self.n = mu.shape[0]
        self._inv_two_var = 1.0 / (2.0 * self.sigma**2)
        self._log_term = 0.5 * np.log(2.0 * math.pi * self.sigma**2)

    def alpha(self, x: Array) -> Array:
        x = _check_input(x, self.n)
        return self._log_term + (x - self.mu) ** 2 * self._inv_two_var

    def alpha_batch(self, data: Array) -> Array:
        data = _check_batch(data, self.n)
        return self._log_term + (data - self.mu) ** 2 * self._inv_two_var

    def alpha_graph(self, x: Tensor) -> Tensor:
        diff = x - Tensor(self.mu)
        return diff.square() * Tensor(self._inv_two_var) + Tensor(self._log_term)

    def save(self, path) -> None:
        ckpt.write(
            path,
            {
                "schema": ckpt.SCHEMA,
                "kind": self.kind,
                "n": self.n,
                "sigma_floor": self.sigma_floor,
                "data": ckpt.encode_arrays([self.mu, self.sigma]),
            },
        )

    @classmethod
    def load(cls, path) -> "GaussDetector":
        payload = ckpt.read(path, expected_kind=cls.kind)
        n = int(payload["n"])
        flat = ckpt.decode_array(payload["data"], 2 * n)
        return cls(flat[:n], flat[n:], sigma_floor=float(payload.get("sigma_floor", DEFAULT_SIGMA_FLOOR)))


class ReconDetector(_DetectorBase):
    """Squared per-feature reconstruction error of an autoencoder."""

    kind = "recon"

    def __init__(self, net: Mlp):
        if net.out_dim != net.in_dim:
            raise ValueError(
                f"autoencoder output dimension {net.out_dim} must equal input {net.in_dim}"
            )
        if net.time_embed is not None:
            raise ValueError("autoencoder must not be step-conditioned")
        self.net = net
        self.n = net.in_dim

    def alpha(self, x: Array) -> Array:
        x = _check_input(x, self.n)
        xhat = self.net.forward_np(x)
        return (xhat - x) ** 2

    def alpha_batch(self, data: Array) -> Array:
        data = _check_batch(data, self.n)
        return (self.net.forward_np(data) - data) ** 2

    def alpha_graph(self, x: Tensor) -> Tensor:
        return (self.net(x) - x).square()

    def save(self, path) -> None:
        ckpt.write(path, ckpt.mlp_payload(self.net, kind=self.kind))

    @classmethod
    def load(cls, path) -> "ReconDetector":
        payload = ckpt.read(path, expected_kind=cls.kind)
        return cls(ckpt.mlp_from_payload(payload))


def load_detector(path):
    payload = ckpt.read(path)
    kind = payload.get("kind")
    if kind == GaussDetector.kind:
        return GaussDetector.load(path)
    if kind == ReconDetector.kind:
        return ReconDetector.load(path)
    raise ValueError(f"unknown detector kind {kind!r}")


# -- fitting -------------------------------------------------------------------


def fit_gauss(train, sigma_floor: float = DEFAULT_SIGMA_FLOOR) -> GaussDetector:
    """Per-feature sample mean and population std, std clamped to the floor."""
    data = _check_batch(train)
    mu = data.mean(axis=0)
    sigma = data.std(axis=0)
    return GaussDetector(mu, sigma, sigma_floor=sigma_floor)


@dataclass(frozen=True)
class ReconTrainConfig:
    hidden: tuple[int, ...] = (64, 16, 64)
    steps: int = 1500
    batch: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.0


def fit_recon(train, cfg: ReconTrainConfig | None = None, seed: int = 0) -> ReconDetector:
    """Train an autoencoder on normal data by squared reconstruction error."""
    cfg = cfg or ReconTrainConfig()
    data = _check_batch(train)
    n = data.shape[1]
    net = Mlp(n, list(cfg.hidden), n, seed=seed, stream_name="recon-init")
    opt = AdamW(net.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    picker = stream(seed, "recon-batch")
    m = data.shape[0]
    for _ in range(cfg.steps):
        idx = picker.integers(0, m, size=min(cfg.batch, m))
        xb = data[idx]
        loss = (net(xb) - Tensor(xb)).square().mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
    return ReconDetector(net)


# -- thresholds and binarization -------------------------------------------------


def calibrate_thresholds(detector: _DetectorBase, train, q: float = 0.9) -> Array:
    """Per-feature thresholds at the q-quantile of training alpha scores.

    Uses linear-interpolation (type-7) quantiles.
    """
    if not (0.0 < q < 1.0):
        raise ValueError(f"quantile must lie in (0, 1), got {q}")
    alphas = detector.alpha_batch(_check_batch(train, detector.n))
    return np.quantile(alphas, q, axis=0)


def binarize(score: DecomposableScore | Array, tau) -> Array:
    """Anomaly mask: coordinate i is flagged iff alpha_i >= tau_i (inclusive)."""
    alpha = score.alpha if isinstance(score, DecomposableScore) else np.asarray(score, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    if alpha.shape != tau.shape:
        raise ValueError(f"alpha/threshold length mismatch: {alpha.shape} vs {tau.shape}")
    return (alpha >= tau).astype(np.float64)
