"""Disorder-averaged bound-state profiles and transmission spectra."""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .eigensolve import bound_state, edge_states, eigh, localized_edge_states
from .lattice import (BathSpec, DisorderModel, EmitterSpec, build_bath, couple_emitter,
                      sample_disorder, sigma_for_eta, sublattice_labels)
from .transmission import SingularSystemError, TransmissionSpec, sweep_curve

MAX_RETRIES = 3
CHUNK = 256


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    bath: BathSpec
    eta_values: Sequence[float]
    realizations: int = 100
    seed: int = 0
    emitter: Optional[EmitterSpec] = None
    tspec: Optional[TransmissionSpec] = None

    def __post_init__(self):
        etas = np.array(self.eta_values, dtype=float).ravel()
        if etas.size == 0 or np.any(etas < 0) or np.any(np.diff(etas) < 0):
            raise ConfigError("eta_values must be a non-empty ascending list of values >= 0")
        if int(self.realizations) != self.realizations or self.realizations < 1:
            raise ConfigError(f"realizations must be a positive integer, got {self.realizations!r}")
        if self.emitter is not None and self.tspec is not None:
            raise ConfigError("a sweep is either bound-state (emitter) or transmission (tspec), not both")
        if self.emitter is not None and self.emitter.site > self.bath.n_sites:
            raise ConfigError(f"emitter site {self.emitter.site} outside the bath")
        object.__setattr__(self, "eta_values", tuple(float(e) for e in etas))
        object.__setattr__(self, "realizations", int(self.realizations))

    @property
    def mode(self) -> str:
        if self.tspec is not None:
            return "transmission"
        return "bound_state" if self.emitter is not None else "edge_state"

    def disorder_model(self, eta_value: float) -> DisorderModel:
        return DisorderModel(sigma_for_eta(eta_value, self.bath), self.seed)

    def to_dict(self) -> dict:
        out = {"bath": self.bath.to_dict(), "eta_values": list(self.eta_values),
               "realizations": self.realizations, "seed": self.seed}
        if self.emitter is not None:
            out["emitter"] = self.emitter.to_dict()
        if self.tspec is not None:
            out["transmission"] = self.tspec.to_dict()
        return out


@dataclass(frozen=True)
class AveragedProfile:
    """Mean |amplitude| per site, renormalized so the maximum is 1.

    ``scale`` is the maximum before renormalization, which allows a common
    colour scale across several eta values.
    """

    eta: float
    mean_abs_amplitude: np.ndarray
    sublattice: tuple
    scale: float

    def to_csv(self) -> str:
        lines = ["site,sublattice,mean_abs_amplitude"]
        for i, (lab, a) in enumerate(zip(self.sublattice, self.mean_abs_amplitude)):
            lines.append(f"{i + 1},{lab},{float(a)!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AveragedCurve:
    """Realization-averaged |S21|^2 normalized to max 1.

    ``stderr`` is the standard error of the mean on the same normalized scale
    (zero for a single realization).
    """

    eta: float
    delta_grid: np.ndarray
    mean_s21_sq: np.ndarray
    scale: float
    stderr: np.ndarray | None = None

    def to_csv(self) -> str:
        lines = ["delta_ghz,mean_s21_sq,stderr"]
        err = self.stderr if self.stderr is not None else np.zeros_like(self.mean_s21_sq)
        for d, s, e in zip(self.delta_grid, self.mean_s21_sq, err):
            lines.append(f"{float(d)!r},{float(s)!r},{float(e)!r}")
        return "\n".join(lines) + "\n"


def _ordered_sum(fn, indices, threads: Optional[int]) -> np.ndarray:
    """Sum ``fn(i)`` over ``indices`` in a fixed order, chunk by chunk.

    Chunk boundaries do not depend on ``threads``, so the floating-point
    result is identical for any degree of parallelism.
    """
    total = None
    workers = threads or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for start in range(0, len(indices), CHUNK):
            chunk = indices[start:start + CHUNK]
            if workers == 1:
                parts = [fn(i) for i in chunk]
            else:
                parts = list(pool.map(fn, chunk))
            s = np.sum(np.stack(parts), axis=0)
            total = s if total is None else total + s
    return total


def _profile_state(cfg: SweepConfig, model: DisorderModel, index: int) -> np.ndarray:
    bath = cfg.bath
    H = build_bath(bath, sample_disorder(model, bath.n_sites, index))
    if cfg.emitter is not None:
        state = bound_state(eigh(couple_emitter(H, bath, cfg.emitter)), bath, cfg.emitter)
    else:
        left, _ = localized_edge_states(*edge_states(eigh(H), bath))
        state = left
    return np.abs(state.amplitudes)


def run_bound_state_sweep(cfg: SweepConfig, threads: Optional[int] = None) -> list[AveragedProfile]:
    """Average |amplitude| of the bound (or left edge) state per eta value."""
    if cfg.mode == "transmission":
        raise ConfigError("run_bound_state_sweep needs an emitter or no transmission spec")
    if cfg.mode == "edge_state" and not cfg.bath.j1 < cfg.bath.j2:
        raise ConfigError("edge-state sweep requires a topological bath (j1 < j2)")
    R = cfg.realizations
    labels = tuple(sublattice_labels(cfg.bath.n_sites))
    out = []
    for pos, e in enumerate(cfg.eta_values):
        model = cfg.disorder_model(e)
        indices = list(range(pos * R, (pos + 1) * R))
        if model.sigma == 0:
            mean = _profile_state(cfg, model, indices[0])
        else:
            mean = _ordered_sum(lambda i: _profile_state(cfg, model, i), indices, threads) / R
        scale = float(mean.max())
        out.append(AveragedProfile(e, mean / scale, labels, scale))
    return out


def _curve(cfg: SweepConfig, model: DisorderModel, index: int) -> np.ndarray:
    for attempt in range(MAX_RETRIES + 1):
        draw = sample_disorder(model, cfg.bath.n_sites, index, substream=attempt)
        try:
            return sweep_curve(cfg.bath, draw, cfg.tspec).s21_sq
        except SingularSystemError:
            if model.sigma == 0 or attempt == MAX_RETRIES:
                raise
    raise AssertionError("unreachable")


def _curve_moments(cfg, model, index):
    s = _curve(cfg, model, index)
    return np.stack([s, s * s])


def run_transmission_sweep(cfg: SweepConfig, threads: Optional[int] = None) -> list[AveragedCurve]:
    """Average |S21|^2 over realizations, normalized per eta to max 1."""
    if cfg.tspec is None:
        raise ConfigError("transmission sweep requires a transmission spec")
    R = cfg.realizations
    out = []
    for pos, e in enumerate(cfg.eta_values):
        model = cfg.disorder_model(e)
        indices = list(range(pos * R, (pos + 1) * R))
        if model.sigma == 0:
            mean = _curve(cfg, model, indices[0])
            stderr = np.zeros_like(mean)
        else:
            s1, s2 = _ordered_sum(lambda i: _curve_moments(cfg, model, i), indices, threads) / R
            mean = s1
            var = np.maximum(s2 - s1 * s1, 0.0) * R / max(R - 1, 1)
            stderr = np.sqrt(var / R)
        scale = float(mean.max())
        out.append(AveragedCurve(e, cfg.tspec.delta_grid.copy(), mean / scale, scale, stderr / scale))
    return out


def participation_ratio(profile) -> float:
    """``(sum a)^2 / (N sum a^2)`` of a mean-amplitude profile, in (0, 1]."""
    a = np.asarray(getattr(profile, "mean_abs_amplitude", profile), dtype=float)
    sq = np.sum(a**2)
    if sq == 0:
        raise ValueError("participation ratio of an all-zero profile")
    return float(np.sum(a) ** 2 / (a.size * sq))


def eta_filename(e: float) -> str:
    return f"eta_{float(e)!r}.csv"


def write_sweep(out_dir, cfg: SweepConfig, results, wall_time: float | None = None) -> list[str]:
    """Write one CSV per eta plus ``manifest.json``; returns the file names."""
    os.makedirs(out_dir, exist_ok=True)
    names = []
    for r in results:
        name = eta_filename(r.eta)
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            fh.write(r.to_csv())
        names.append(name)
    manifest = {
        "mode": cfg.mode,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "realizations": cfg.realizations,
        "files": names,
        "scales": {repr(r.eta): r.scale for r in results},
        "global_max": max(r.scale for r in results),
        "wall_time_s": wall_time,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return names + ["manifest.json"]
