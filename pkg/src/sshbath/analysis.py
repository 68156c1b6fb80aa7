"""Reduce transmission spectra to modes, disorder statistics and bath parameters."""
from __future__ import annotations

import csv
import io
import json
import os
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.signal import find_peaks
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .eigensolve import PhaseError, eigh
from .lattice import BathSpec, DisorderModel, build_bath, eta
from .transmission import TransmissionCurve, TransmissionSpec, sweep_curve

UNIT_SCALE = {"GHz": 1.0, "THz": 1e3}


class InsufficientDataError(ValueError):
    pass


class FitError(RuntimeError):
    """Parameter fit failed; ``best`` holds the best point found, if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


# -- peaks -------------------------------------------------------------------

def extract_peaks(curve: TransmissionCurve, min_prominence: float = 0.05) -> np.ndarray:
    """Mode frequencies from local maxima of a transmission curve.

    Peaks need a prominence of at least ``min_prominence`` times the curve
    maximum; positions are refined by a 3-point parabola.
    """
    x = np.asarray(curve.delta_grid, dtype=float)
    y = np.asarray(curve.s21_sq, dtype=float)
    if y.size < 3:
        raise ValueError("need at least 3 samples to locate peaks")
    top = y.max()
    if not top > 0:
        return np.empty(0)
    idx, _ = find_peaks(y, prominence=min_prominence * top)
    out = []
    for i in idx:
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        shift = float(np.clip(shift, -0.5, 0.5))
        # non-uniform grids: interpolate toward the neighbour on the shifted side
        step = (x[i + 1] - x[i]) if shift >= 0 else (x[i] - x[i - 1])
        out.append(x[i] + shift * step)
    return np.sort(np.array(out))


def _unimodal_feasible(lo: np.ndarray, hi: np.ndarray) -> bool:
    # cummax of the lower band is the tightest non-decreasing path from the left
    n = lo.size
    cl = np.maximum.accumulate(lo)
    okl = np.logical_and.accumulate(cl <= hi)
    cr = np.maximum.accumulate(lo[::-1])[::-1]
    okr = np.logical_and.accumulate((cr <= hi)[::-1])[::-1]
    for m in range(n):
        if m > 0 and not okl[m - 1]:
            break
        if m < n - 1 and not okr[m + 1]:
            continue
        need = max(cl[m - 1] if m > 0 else -np.inf, cr[m + 1] if m < n - 1 else -np.inf, lo[m])
        if need <= hi[m]:
            return True
    return False


def is_unimodal(values, stderr=None, z: float = 3.0) -> bool:
    """True if some single-peaked curve fits inside ``values +/- z*stderr``.

    With ``stderr=None`` this is an exact test on the curve itself.
    """
    y = np.asarray(values, dtype=float)
    e = np.zeros_like(y) if stderr is None else z * np.asarray(stderr, dtype=float)
    return _unimodal_feasible(y - e, y + e)


def resolved_gap(curve: TransmissionCurve, stderr=None, z: float = 3.0,
                 min_prominence: float = 0.05, center: float = 0.0):
    """Innermost peaks on either side of ``center`` if the dip between them is resolved.

    The dip counts as resolved when the upper confidence limit of the
    minimum between the peaks lies below the lower limit of both peaks.
    Returns ``(left_peak, right_peak)`` or ``None``.
    """
    x = np.asarray(curve.delta_grid, dtype=float)
    y = np.asarray(curve.s21_sq, dtype=float)
    e = np.zeros_like(y) if stderr is None else z * np.asarray(stderr, dtype=float)
    peaks = extract_peaks(curve, min_prominence)
    left = peaks[peaks < center]
    right = peaks[peaks > center]
    if left.size == 0 or right.size == 0:
        return None
    pl, pr = left[-1], right[0]
    il, ir = np.searchsorted(x, pl), np.searchsorted(x, pr)
    il = il if abs(x[min(il, x.size - 1)] - pl) < abs(x[il - 1] - pl) else il - 1
    ir = ir if abs(x[min(ir, x.size - 1)] - pr) < abs(x[ir - 1] - pr) else ir - 1
    between = slice(il, ir + 1)
    j = il + int(np.argmin(y[between]))
    if y[j] + e[j] < min(y[il] - e[il], y[ir] - e[ir]):
        return float(pl), float(pr)
    return None


# -- disorder statistics -----------------------------------------------------

@dataclass(frozen=True)
class DeviceMeasurement:
    """Resolved mode frequencies (GHz) of one fabricated device."""

    device_id: str
    n_sites: int
    phase_label: str
    mode_frequencies: np.ndarray
    design: str = ""

    def __post_init__(self):
        modes = np.array(self.mode_frequencies, dtype=float).ravel()
        if np.any(np.diff(modes) <= 0):
            raise ValueError(f"{self.device_id}: mode frequencies must be strictly ascending")
        if self.phase_label not in ("trivial", "topological"):
            raise ValueError(f"{self.device_id}: unknown phase {self.phase_label!r}")
        if modes.size > self.n_sites:
            raise ValueError(f"{self.device_id}: more modes than sites")
        object.__setattr__(self, "mode_frequencies", modes)
        if not self.design:
            object.__setattr__(self, "design", f"{self.n_sites}-{self.phase_label}")

    @property
    def mean_frequency(self) -> float:
        return float(np.mean(self.mode_frequencies))


def read_device_csv(text: str) -> DeviceMeasurement:
    """Parse one device file.

    Line 1 holds ``device_id,n_sites,phase,unit`` and optionally a design
    key; a literal header row naming those columns may precede it. Each
    later line holds one mode frequency in the declared unit.
    """
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError("empty device file")
    if rows[0][0].strip() == "device_id":
        rows = rows[1:]
    head = [c.strip() for c in rows[0]]
    if len(head) < 4:
        raise ValueError(f"device header needs device_id,n_sites,phase,unit; got {rows[0]}")
    device_id, n_sites, phase, unit = head[:4]
    if unit not in UNIT_SCALE:
        raise ValueError(f"unknown unit {unit!r}, expected GHz or THz")
    design = head[4] if len(head) > 4 else ""
    modes = [float(r[0]) * UNIT_SCALE[unit] for r in rows[1:]]
    return DeviceMeasurement(device_id, int(n_sites), phase, np.array(modes), design)


def write_device_csv(dev: DeviceMeasurement) -> str:
    lines = [f"{dev.device_id},{dev.n_sites},{dev.phase_label},GHz,{dev.design}"]
    lines += [repr(float(f)) for f in dev.mode_frequencies]
    return "\n".join(lines) + "\n"


def load_devices(path) -> list[DeviceMeasurement]:
    """Load every ``*.csv`` device file in a directory (sorted by name)."""
    devices = []
    for name in sorted(os.listdir(path)):
        if name.endswith(".csv"):
            with open(os.path.join(path, name)) as fh:
                devices.append(read_device_csv(fh.read()))
    return devices


def global_sigma(devices: Sequence[DeviceMeasurement]) -> float:
    """Population standard deviation of per-device mean mode frequency."""
    if len(devices) < 2:
        raise InsufficientDataError("global disorder needs at least 2 devices")
    means = np.array(sorted(d.mean_frequency for d in devices))
    return float(np.std(means))


def group_by_design(devices: Iterable[DeviceMeasurement]) -> dict[str, list[DeviceMeasurement]]:
    groups = defaultdict(list)
    for d in devices:
        groups[d.design].append(d)
    return dict(groups)


def aligned_deviations(group: Sequence[DeviceMeasurement]) -> np.ndarray:
    """Per-mode deviations after removing each device's global shift.

    Shape ``(instances, modes)``.
    """
    if len(group) < 2:
        raise InsufficientDataError("local disorder needs at least 2 instances per design")
    counts = {d.mode_frequencies.size for d in group}
    if len(counts) != 1:
        raise ValueError("instances of one design must resolve the same number of modes")
    W = np.stack([d.mode_frequencies for d in group])
    shifts = W.mean(axis=1) - W.mean()
    aligned = W - shifts[:, None]
    return aligned - aligned.mean(axis=0)


def local_sigma(groups) -> float:
    """RMS of aligned mode deviations pooled over design groups.

    ``groups`` is a mapping design -> devices, or a sequence of device lists.
    Frequencies are linear, so no extra 1/(2 pi) is applied.
    """
    seq = list(groups.values()) if isinstance(groups, Mapping) else list(groups)
    if not seq:
        raise InsufficientDataError("no design groups")
    dev = np.concatenate([aligned_deviations(g).ravel() for g in seq])
    return float(np.sqrt(np.mean(dev**2)))


@dataclass(frozen=True)
class DisorderReport:
    j1: float
    j2: float
    sigma_global: float
    sigma_local: float
    eta_global: float
    eta_local: float
    n_global_devices: int
    n_local_devices: int
    n_local_modes: int

    def to_dict(self) -> dict:
        return {
            "rows": [
                {"sigma_type": "Global", "j1_ghz": self.j1, "j2_ghz": self.j2,
                 "sigma_ghz": self.sigma_global, "eta": self.eta_global,
                 "n_measured": self.n_global_devices},
                {"sigma_type": "Local", "j1_ghz": self.j1, "j2_ghz": self.j2,
                 "sigma_ghz": self.sigma_local, "eta": self.eta_local,
                 "n_measured": self.n_local_devices},
            ],
            "n_local_modes": self.n_local_modes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def disorder_report(devices: Sequence[DeviceMeasurement], j1: float, j2: float) -> DisorderReport:
    """Global and local disorder reported as a pair of global and local rows.

    Designs with a single instance contribute only to the global statistic.
    """
    sg = global_sigma(devices)
    groups = [g for g in group_by_design(devices).values() if len(g) >= 2]
    if not groups:
        raise InsufficientDataError("no design has 2 or more instances")
    sl = local_sigma(groups)
    bath = BathSpec(2, 0.0, j1, j2)
    return DisorderReport(
        j1, j2, sg, sl,
        eta(DisorderModel(sg), bath), eta(DisorderModel(sl), bath),
        len(devices), sum(len(g) for g in groups),
        sum(d.mode_frequencies.size for g in groups for d in g),
    )


def synthesize_devices(designs: Mapping[str, tuple[BathSpec, int]], sigma_global: float,
                       sigma_local: float, seed: int = 0) -> list[DeviceMeasurement]:
    """Synthetic measured devices with known global and local disorder.

    Each instance of a design gets the clean eigenfrequencies, one common
    Gaussian offset (``sigma_global``) and independent per-mode Gaussian
    scatter (``sigma_local``).
    """
    rng = np.random.default_rng(seed)
    out = []
    for design, (bath, count) in designs.items():
        clean = eigh(build_bath(bath)).eigenvalues
        for k in range(count):
            modes = clean + rng.normal(0.0, sigma_global) + rng.normal(0.0, sigma_local, clean.size)
            out.append(DeviceMeasurement(f"{design}-{k:02d}", bath.n_sites, bath.phase,
                                         np.sort(modes), design))
    return out


# -- band gap ----------------------------------------------------------------

def band_gap_from_modes(modes, spec: Optional[BathSpec] = None) -> float:
    """Gap between the two modes adjacent to the spectrum midpoint."""
    m = np.sort(np.asarray(modes, dtype=float))
    if spec is not None and spec.phase == "topological":
        raise PhaseError("topological spectra carry mid-gap edge modes; "
                         "exclude the 2 modes nearest the center first")
    if m.size < 4 or m.size % 2:
        raise ValueError(f"need an even number (>= 4) of modes, got {m.size}; "
                         "exclude the 2 mid-gap modes of a topological spectrum first")
    h = m.size // 2
    return float(m[h] - m[h - 1])


# -- fitting -----------------------------------------------------------------

class SSHTransmissionRegressor(RegressorMixin, BaseEstimator):
    """Fit SSH bath and coupling parameters to a measured |S21|^2 spectrum.

    ``X`` is the detuning grid (GHz) and ``y`` the transmitted power. Rates
    are optimized in log space with Nelder-Mead on max-normalized curves.
    When the spectrum shows exactly ``n_sites`` peaks, hoppings and center
    are first matched to the peak positions.

    Parameters
    ----------
    n_sites : int
    j1, j2, kappa, gamma : float
        Initial guesses (GHz).
    omega0 : float, default=0.0
        Initial guess for the offset of the bath center on the grid.
    fit_gamma : bool, default=True
        If False, ``gamma`` is held at its initial value.
    objective : {"auto", "curve", "peaks"}
        ``peaks`` matches only mode positions and leaves kappa/gamma fixed.
    max_iter : int, default=8000
    min_prominence : float, default=0.05
    """

    def __init__(self, n_sites=8, j1=1.0, j2=1.0, kappa=0.4, gamma=0.004, omega0=0.0,
                 fit_gamma=True, objective="auto", max_iter=8000, min_prominence=0.05):
        self.n_sites = n_sites
        self.j1 = j1
        self.j2 = j2
        self.kappa = kappa
        self.gamma = gamma
        self.omega0 = omega0
        self.fit_gamma = fit_gamma
        self.objective = objective
        self.max_iter = max_iter
        self.min_prominence = min_prominence

    def _model(self, grid, j1, j2, kappa, gamma, omega0):
        bath = BathSpec(self.n_sites, 0.0, j1, j2)
        tspec = TransmissionSpec(kappa, gamma, grid)
        return sweep_curve(bath, None, tspec, grid - omega0).s21_sq

    def _peak_fit(self, peaks, j1, j2, omega0):
        def loss(theta):
            bath = BathSpec(self.n_sites, theta[2], np.exp(theta[0]), np.exp(theta[1]))
            ev = eigh(build_bath(bath)).eigenvalues
            return float(np.sum((ev - peaks) ** 2))

        res = minimize(loss, [np.log(j1), np.log(j2), omega0], method="Nelder-Mead",
                       options={"maxiter": self.max_iter, "xatol": 1e-10, "fatol": 1e-14})
        return np.exp(res.x[0]), np.exp(res.x[1]), res.x[2]

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=3)
        grid = X[:, 0]
        order = np.argsort(grid)
        grid, y = grid[order], y[order]
        if not np.max(np.abs(y)) > 0:
            raise FitError("transmission is identically zero; nothing to fit")
        target = y / y.max()
        j1, j2, kappa, gamma, omega0 = self.j1, self.j2, self.kappa, self.gamma, self.omega0

        peaks = extract_peaks(TransmissionCurve(grid, y), self.min_prominence)
        self.n_peaks_ = peaks.size
        if self.objective in ("auto", "peaks") and peaks.size == self.n_sites:
            j1, j2, omega0 = self._peak_fit(peaks, j1, j2, omega0)
        elif self.objective == "peaks":
            raise FitError(f"found {peaks.size} peaks, expected {self.n_sites}")

        if self.objective == "peaks":
            best = np.array([j1, j2, kappa, gamma, omega0])
            self.residual_ = float(np.sum((self._model(grid, *best) / self._model(grid, *best).max()
                                           - target) ** 2))
        else:
            free_gamma = self.fit_gamma

            def unpack(theta):
                g = np.exp(theta[3]) if free_gamma else gamma
                return np.exp(theta[0]), np.exp(theta[1]), np.exp(theta[2]), g, theta[-1]

            def loss(theta):
                m = self._model(grid, *unpack(theta))
                return float(np.sum((m / m.max() - target) ** 2))

            theta = [np.log(j1), np.log(j2), np.log(kappa)]
            if free_gamma:
                if not gamma > 0:
                    raise FitError("gamma must start positive to be fitted in log space")
                theta.append(np.log(gamma))
            theta.append(omega0)
            theta = np.array(theta)
            converged = False
            prev = np.inf
            # restart the simplex from the incumbent until the loss stops moving
            for _ in range(6):
                res = minimize(loss, theta, method="Nelder-Mead",
                               options={"maxiter": self.max_iter, "xatol": 1e-9, "fatol": 1e-15,
                                        "adaptive": True})
                theta = res.x
                converged = res.success
                if prev - res.fun <= 1e-12 * max(prev, 1e-30) and res.success:
                    break
                prev = res.fun
            best = np.array(unpack(theta))
            self.residual_ = float(res.fun)
            if not converged:
                raise FitError("Nelder-Mead hit the iteration cap", best=dict(
                    zip(("j1", "j2", "kappa", "gamma", "omega0"), best.tolist())))

        self.j1_, self.j2_, self.kappa_, self.gamma_, self.omega0_ = (float(v) for v in best)
        self.scale_ = float(y.max())
        return self

    def predict(self, X):
        check_is_fitted(self, "j1_")
        X = check_array(X)
        m = self._model(X[:, 0], self.j1_, self.j2_, self.kappa_, self.gamma_, self.omega0_)
        return m / m.max() * self.scale_

    @property
    def params_(self) -> dict:
        check_is_fitted(self, "j1_")
        return {"j1": self.j1_, "j2": self.j2_, "kappa": self.kappa_,
                "gamma": self.gamma_, "omega0": self.omega0_, "residual": self.residual_}


def fit_bath_parameters(curve: TransmissionCurve, bath: BathSpec, tspec: TransmissionSpec,
                        fit_gamma: bool = True, **kwargs) -> dict:
    """Fit (j1, j2, kappa, gamma, omega0) starting from ``bath``/``tspec``.

    Returns the fitted values plus the final normalized residual.
    """
    est = SSHTransmissionRegressor(n_sites=bath.n_sites, j1=bath.j1, j2=bath.j2,
                                   kappa=tspec.kappa, gamma=tspec.gamma, omega0=bath.omega0,
                                   fit_gamma=fit_gamma, **kwargs)
    est.fit(np.asarray(curve.delta_grid)[:, None], np.asarray(curve.s21_sq))
    return est.params_


def reference_fixture_designs(omega0: float = 193400.0) -> dict[str, tuple[BathSpec, int]]:
    """Device designs of the bundled synthetic fixture: 18 repeated 16-site
    trivial arrays plus 7 one-off arrays, 25 devices in total."""
    designs = {"ssh16-trivial": (BathSpec(16, omega0, 163.0, 122.0), 18)}
    for n, phase in [(4, "trivial"), (4, "topological"), (6, "trivial"), (6, "topological"),
                     (8, "trivial"), (8, "topological"), (10, "trivial")]:
        j1, j2 = (163.0, 122.0) if phase == "trivial" else (122.0, 163.0)
        designs[f"ssh{n}-{phase}"] = (BathSpec(n, omega0, j1, j2), 1)
    return designs


REFERENCE_SIGMA_GLOBAL = 70.68
REFERENCE_SIGMA_LOCAL = 8.02
REFERENCE_FIXTURE_SEED = 0
