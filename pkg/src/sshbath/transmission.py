"""Coupled-mode / input-output transmission through a resonator chain.

For a probe detuning ``delta`` the intracavity amplitudes solve the complex
tridiagonal system

    [j(d_i - delta) - gamma/2 - (kappa/2 at both ends)] c_i
        + j J_{i-1} c_{i-1} + j J_i c_{i+1} = -j sqrt(kappa) [i == 1]

and the transmitted power is ``kappa |c_N|^2``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .lattice import BathSpec, DisorderDraw, DimensionError, hoppings

logger = logging.getLogger(__name__)

PIVOT_RTOL = 1e-14


class SingularSystemError(ArithmeticError):
    """The coupled-mode system is numerically singular."""


@dataclass(frozen=True)
class TransmissionSpec:
    kappa: float
    gamma: float
    delta_grid: np.ndarray

    def __post_init__(self):
        grid = np.array(self.delta_grid, dtype=float).ravel()
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa!r}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma!r}")
        if grid.size == 0:
            raise ValueError("delta_grid is empty")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("delta_grid must be strictly ascending")
        grid.setflags(write=False)
        object.__setattr__(self, "delta_grid", grid)

    @classmethod
    def default(cls, bath: BathSpec, n_points: int = 2001) -> "TransmissionSpec":
        scale = bath.j1 + bath.j2
        return cls(kappa=scale / 5, gamma=scale / 500,
                   delta_grid=np.linspace(-1.5 * scale, 1.5 * scale, n_points))

    @classmethod
    def from_dict(cls, d: dict, bath: Optional[BathSpec] = None) -> "TransmissionSpec":
        """Build from JSON; the grid is either ``delta_grid`` or
        ``delta_min``/``delta_max``/``n_points``. Missing rates fall back to
        the bath-scaled defaults."""
        base = cls.default(bath) if bath is not None else None
        kappa = d.get("kappa", base.kappa if base else None)
        gamma = d.get("gamma", base.gamma if base else None)
        if kappa is None or gamma is None:
            raise KeyError("kappa and gamma are required without a bath spec")
        if "delta_grid" in d:
            grid = d["delta_grid"]
        elif "delta_min" in d or "n_points" in d:
            span = 1.5 * (bath.j1 + bath.j2) if bath is not None else None
            grid = np.linspace(float(d.get("delta_min", -span if span else 0.0)),
                               float(d.get("delta_max", span if span else 0.0)),
                               int(d.get("n_points", 2001)))
        elif base is not None:
            grid = base.delta_grid
        else:
            raise KeyError("delta_grid")
        return cls(float(kappa), float(gamma), grid)

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "gamma": self.gamma,
                "delta_grid": self.delta_grid.tolist()}


@dataclass(frozen=True)
class TransmissionCurve:
    delta_grid: np.ndarray
    s21_sq: np.ndarray

    def __post_init__(self):
        if len(self.delta_grid) != len(self.s21_sq):
            raise DimensionError("grid and values differ in length")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("delta_ghz,s21_sq\n")
        for d, s in zip(self.delta_grid, self.s21_sq):
            buf.write(f"{float(d)!r},{float(s)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TransmissionCurve":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["delta_ghz", "s21_sq"]:
            raise ValueError("expected header 'delta_ghz,s21_sq'")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)
        return cls(data[:, 0], data[:, 1])

    def to_json(self) -> str:
        return json.dumps({"delta_ghz": [float(x) for x in self.delta_grid],
                           "s21_sq": [float(x) for x in self.s21_sq]})

    @classmethod
    def from_json(cls, text: str) -> "TransmissionCurve":
        d = json.loads(text)
        return cls(np.array(d["delta_ghz"], dtype=float), np.array(d["s21_sq"], dtype=float))


@dataclass(frozen=True)
class ComplexTridiagonalSystem:
    """Banded system; ``lower[i]`` couples row i+1 to column i."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        n = self.diag.shape[-1]
        if self.lower.shape[-1] != n - 1 or self.upper.shape[-1] != n - 1 or self.rhs.shape[-1] != n:
            raise DimensionError("inconsistent band lengths")

    @property
    def dimension(self) -> int:
        return self.diag.shape[-1]

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)


def _diagonal(bath: BathSpec, draw: DisorderDraw, tspec: TransmissionSpec, delta):
    n = bath.n_sites
    if len(draw) != n:
        raise DimensionError(f"disorder draw has length {len(draw)}, bath has {n} sites")
    delta = np.asarray(delta, dtype=float)
    d = 1j * (draw.deltas - delta[..., None]) - tspec.gamma / 2
    d[..., 0] -= tspec.kappa / 2
    d[..., -1] -= tspec.kappa / 2
    return d


def build_system(bath: BathSpec, draw: DisorderDraw, tspec: TransmissionSpec,
                 delta: float) -> ComplexTridiagonalSystem:
    if bath.n_sites < 2:
        raise ValueError("input and output couplers need at least 2 sites")
    off = 1j * hoppings(bath)
    rhs = np.zeros(bath.n_sites, dtype=complex)
    rhs[0] = -1j * np.sqrt(tspec.kappa)
    return ComplexTridiagonalSystem(off.copy(), _diagonal(bath, draw, tspec, delta), off.copy(), rhs)


def _thomas(lower, diag, upper, rhs):
    """Batched Thomas elimination over leading axes of ``diag``/``rhs``.

    Returns the solution and the smallest pivot magnitude per batch element.
    """
    n = diag.shape[-1]
    cp = np.empty(np.broadcast_shapes(diag.shape[:-1] + (max(n - 1, 0),), upper.shape), dtype=complex)
    dp = np.empty(np.broadcast_shapes(diag.shape, rhs.shape), dtype=complex)
    piv = diag[..., 0]
    min_piv = np.abs(piv)
    with np.errstate(divide="ignore", invalid="ignore"):
        if n > 1:
            cp[..., 0] = upper[..., 0] / piv
        dp[..., 0] = rhs[..., 0] / piv
        for i in range(1, n):
            piv = diag[..., i] - lower[..., i - 1] * cp[..., i - 1]
            min_piv = np.minimum(min_piv, np.abs(piv))
            if i < n - 1:
                cp[..., i] = upper[..., i] / piv
            dp[..., i] = (rhs[..., i] - lower[..., i - 1] * dp[..., i - 1]) / piv
        x = dp
        for i in range(n - 2, -1, -1):
            x[..., i] = dp[..., i] - cp[..., i] * x[..., i + 1]
    return x, min_piv


def _dense_solve(A, b):
    scale = np.abs(A).max()
    lu, perm = scipy.linalg.lu_factor(A, check_finite=False)
    if np.abs(np.diag(lu)).min() <= PIVOT_RTOL * max(scale, np.finfo(float).tiny):
        raise SingularSystemError("coupled-mode system is numerically singular")
    return scipy.linalg.lu_solve((lu, perm), b, check_finite=False)


def _solve_batched(lower, diag, upper, rhs):
    x, min_piv = _thomas(lower, diag, upper, rhs)
    scale = np.maximum(np.abs(diag).max(axis=-1), np.abs(upper).max(initial=0.0))
    bad = ~(min_piv > PIVOT_RTOL * scale) | ~np.all(np.isfinite(x), axis=-1)
    if np.any(bad):
        for idx in zip(*np.nonzero(np.atleast_1d(bad))):
            d = diag[idx] if diag.ndim > 1 else diag
            A = np.diag(d) + np.diag(lower, -1) + np.diag(upper, 1)
            b = rhs[idx] if rhs.ndim > 1 else rhs
            sol = _dense_solve(A, b)
            if x.ndim > 1:
                x[idx] = sol
            else:
                x[:] = sol
    return x


def solve_tridiagonal(sys: ComplexTridiagonalSystem) -> np.ndarray:
    """Solve by Thomas elimination, falling back to pivoted LU on tiny pivots."""
    if sys.dimension < 1:
        raise ValueError("empty system")
    lower = np.asarray(sys.lower, dtype=complex)
    upper = np.asarray(sys.upper, dtype=complex)
    diag = np.asarray(sys.diag, dtype=complex)
    rhs = np.asarray(sys.rhs, dtype=complex)
    return _solve_batched(lower, diag, upper, rhs)


def s21_squared(bath: BathSpec, draw: DisorderDraw, tspec: TransmissionSpec, delta: float) -> float:
    c = solve_tridiagonal(build_system(bath, draw, tspec, delta))
    return float(tspec.kappa * abs(c[-1]) ** 2)


def sweep_curve(bath: BathSpec, draw: Optional[DisorderDraw], tspec: TransmissionSpec,
                grid: Optional[np.ndarray] = None) -> TransmissionCurve:
    """|S21|^2 over the whole detuning grid, solved as one batch."""
    if draw is None:
        draw = DisorderDraw.zeros(bath.n_sites)
    grid = tspec.delta_grid if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty detuning grid")
    off = 1j * hoppings(bath)
    diag = _diagonal(bath, draw, tspec, grid)
    rhs = np.zeros(bath.n_sites, dtype=complex)
    rhs[0] = -1j * np.sqrt(tspec.kappa)
    rhs = np.broadcast_to(rhs, diag.shape)
    c = _solve_batched(off, diag, off, rhs)
    s = tspec.kappa * np.abs(c[..., -1]) ** 2
    if s.max() > 1 + 1e-6:
        logger.warning("max |S21|^2 = %.8g exceeds 1", s.max())
    return TransmissionCurve(grid.copy(), s)
