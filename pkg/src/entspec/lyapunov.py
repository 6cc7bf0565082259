"""Lyapunov spectra of i.i.d. products in SL(d, R) by QR re-orthonormalisation.

Replicas are advanced together as a stacked array, but each draws its
matrices from its own ``RngStream(seed, replica)`` so results do not depend
on how many replicas run alongside it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ConfigError, EntspecError
from .words import RngStream

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


def expm_batch(x: np.ndarray, order: int = 14) -> np.ndarray:
    """Matrix exponential of a stack of small matrices by scaling and squaring.

    A degree-14 Taylor polynomial after scaling the 1-norm below 1/2 is
    accurate to roundoff; unlike ``scipy.linalg.expm`` the whole stack is
    handled with a few batched matmuls.
    """
    norm = float(np.abs(x).sum(axis=-2).max()) if x.size else 0.0
    s = max(0, math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    y = x / 2.0**s
    eye = np.eye(x.shape[-1])
    r = eye + y / order
    for k in range(order - 1, 0, -1):
        r = eye + (y @ r) / k
    for _ in range(s):
        r = r @ r
    return r


def _normalize_det(m: np.ndarray) -> np.ndarray:
    det = np.linalg.det(m)
    if np.any(np.abs(det) < 1e-300):
        raise ConfigError("singular matrix in distribution")
    d = m.shape[-1]
    return m / (np.abs(det)[..., None, None] ** (1.0 / d))


@dataclass
class MatrixDistribution:
    """Finite atoms with probabilities, or the family ``exp-gaussian(sigma)``."""

    d: int
    atoms: np.ndarray | None = None
    probs: np.ndarray | None = None
    family: str | None = None
    sigma: float = 0.0

    def __post_init__(self):
        if self.atoms is not None:
            self.atoms = _normalize_det(np.asarray(self.atoms, dtype=float).reshape(-1, self.d, self.d))
            self.probs = np.asarray(self.probs, dtype=float)
            if len(self.probs) != len(self.atoms) or np.any(self.probs <= 0):
                raise ConfigError("need one positive probability per atom")
            if abs(self.probs.sum() - 1) > 1e-12:
                raise ConfigError(f"atom probabilities sum to {self.probs.sum()}")
            self._cdf = np.cumsum(self.probs)
            self._cdf[-1] = 1.0
        elif self.family == "exp-gaussian":
            if self.sigma < 0:
                raise ConfigError("sigma must be non-negative")
        else:
            raise ConfigError(f"unknown matrix family {self.family!r}")

    @classmethod
    def point_mass(cls, m) -> "MatrixDistribution":
        m = np.asarray(m, dtype=float)
        return cls(m.shape[0], atoms=m[None], probs=[1.0])

    @classmethod
    def exp_gaussian(cls, sigma: float, d: int) -> "MatrixDistribution":
        return cls(d, family="exp-gaussian", sigma=sigma)

    @classmethod
    def sanov(cls) -> "MatrixDistribution":
        A = np.array([[1.0, 2.0], [0.0, 1.0]])
        B = np.array([[1.0, 0.0], [2.0, 1.0]])
        return cls(2, atoms=[A, np.linalg.inv(A), B, np.linalg.inv(B)], probs=[0.25] * 4)

    def conjugated(self, c: np.ndarray) -> "MatrixDistribution":
        if self.atoms is None:
            raise ConfigError("conjugation is only defined for atomic distributions")
        ci = np.linalg.inv(c)
        return MatrixDistribution(self.d, atoms=c @ self.atoms @ ci, probs=self.probs)

    def inverted(self) -> "MatrixDistribution":
        if self.atoms is None:
            raise ConfigError("inversion is only defined for atomic distributions")
        return MatrixDistribution(self.d, atoms=np.linalg.inv(self.atoms), probs=self.probs)

    def sample(self, rng: RngStream, size: int) -> np.ndarray:
        if self.atoms is not None:
            idx = np.searchsorted(self._cdf, rng.gen.random(size), side="right")
            return self.atoms[idx]
        x = rng.gen.normal(0.0, self.sigma, size=(size, self.d, self.d))
        x -= (np.trace(x, axis1=1, axis2=2) / self.d)[:, None, None] * np.eye(self.d)
        return _normalize_det(expm_batch(x))

    def describe(self) -> str:
        if self.family:
            return f"{self.family}({self.sigma}) d={self.d}"
        return f"{len(self.atoms)} atoms d={self.d}"


def load_matrix_distribution(path_or_spec: str) -> MatrixDistribution:
    """Read a TOML file, or parse ``exp-gaussian:SIGMA:D``.

    TOML layout::

        d = 2
        [[atom]]
        matrix = [2.0, 0.0, 0.0, 0.5]   # row-major
        prob = 1.0

    or ``family = "exp-gaussian"`` with ``sigma`` and ``d``.
    """
    if path_or_spec.startswith("exp-gaussian:"):
        try:
            _, sigma, d = path_or_spec.split(":")
            return MatrixDistribution.exp_gaussian(float(sigma), int(d))
        except ValueError:
            raise ConfigError(f"cannot parse {path_or_spec!r}; expected exp-gaussian:SIGMA:D")
    if path_or_spec == "sanov":
        return MatrixDistribution.sanov()
    path = Path(path_or_spec)
    if not path.exists():
        raise ConfigError(f"matrix distribution file {path} not found")
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")
    return matrix_distribution_from_dict(doc)


def matrix_distribution_from_dict(doc: dict) -> MatrixDistribution:
    if "d" not in doc:
        raise ConfigError("matrix distribution needs d")
    d = int(doc["d"])
    if doc.get("family"):
        return MatrixDistribution(d, family=doc["family"], sigma=float(doc.get("sigma", 0.0)))
    atoms = doc.get("atom") or doc.get("atoms")
    if not atoms:
        raise ConfigError("matrix distribution needs [[atom]] entries or a family")
    mats, probs = [], []
    for a in atoms:
        m = np.asarray(a["matrix"], dtype=float)
        if m.size != d * d:
            raise ConfigError(f"atom has {m.size} entries, expected {d * d}")
        mats.append(m.reshape(d, d))
        probs.append(float(a.get("prob", 1.0 / len(atoms))))
    return MatrixDistribution(d, atoms=mats, probs=probs)


@dataclass
class LyapunovSpectrum:
    d: int
    exponents: np.ndarray
    ci_halfwidths: np.ndarray
    steps_used: int
    replicas: int
    per_replica: np.ndarray = field(repr=False, default=None)

    def combined_ci(self) -> float:
        return float(np.sqrt(np.sum(self.ci_halfwidths**2)))

    def rows(self) -> list[tuple[int, float, float]]:
        return [(i + 1, float(x), float(c)) for i, (x, c) in enumerate(zip(self.exponents, self.ci_halfwidths))]


def lyapunov_qr(dist: MatrixDistribution, steps: int, qr_period: int = 1, replicas: int = 8,
                rng: RngStream | None = None, burn_in: float = 0.1, chunk: int = 2048) -> LyapunovSpectrum:
    """Average of log|R_ii| over periodic QR factorisations of the running product."""
    if steps < qr_period or qr_period < 1 or replicas < 1:
        raise ConfigError("need steps >= qr_period >= 1 and replicas >= 1")
    rng = rng or RngStream(0)
    d = dist.d
    streams = [rng.child(r) for r in range(replicas)]
    Q = np.broadcast_to(np.eye(d), (replicas, d, d)).copy()
    acc = np.zeros((replicas, d))
    skip = int(burn_in * steps)
    counted = 0
    done = 0
    since_qr = 0
    while done < steps:
        m = min(chunk, steps - done)
        mats = np.stack([dist.sample(s, m) for s in streams], axis=1)  # (m, replicas, d, d)
        for t in range(m):
            Q = mats[t] @ Q
            since_qr += 1
            if since_qr == qr_period or done + t + 1 == steps:
                Q, R = np.linalg.qr(Q)
                diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
                if not np.all(np.isfinite(diag)) or np.any(diag == 0):
                    raise EntspecError(f"non-finite QR diagonal at step {done + t + 1}; reduce qr_period")
                if done + t + 1 > skip:
                    acc += np.log(diag)
                    counted += since_qr
                since_qr = 0
        done += m
    per = -np.sort(-acc / counted, axis=1)
    mean = per.mean(axis=0)
    if replicas > 1:
        sd = per.std(axis=0, ddof=1)
        ci = stats.t.ppf(0.975, replicas - 1) * sd / math.sqrt(replicas)
    else:
        ci = np.full(d, np.inf)
    return LyapunovSpectrum(d, mean, ci, counted, replicas, per)


def check_sl_constraint(spec: LyapunovSpectrum) -> bool:
    """Exponents of a determinant-one walk must sum to zero within 3x the combined CI."""
    return bool(abs(float(np.sum(spec.exponents))) <= 3 * spec.combined_ci())
