"""Eigendecomposition, edge states and emitter-induced bound states."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .lattice import BathSpec, EmitterSpec, SymmetricMatrix, sublattice_labels

AMPLITUDE_FLOOR = 1e-12
BOUNDARY_CELLS = 2


class PhaseError(ValueError):
    """Operation requires the other SSH phase."""


class FitError(RuntimeError):
    """Decay fit could not be performed."""


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def to_dict(self) -> dict:
        return {"eigenvalues": self.eigenvalues.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class StatePick:
    """A selected eigenstate restricted to the photonic sites.

    ``kind`` is one of ``edge_even``, ``edge_odd``, ``edge_left``,
    ``edge_right`` or ``bound``.
    """

    eigenvalue: float
    amplitudes: np.ndarray
    kind: str
    emitter_weight: float = 0.0

    @property
    def n_sites(self) -> int:
        return len(self.amplitudes)

    def sublattice_weights(self) -> tuple[float, float]:
        w = np.abs(self.amplitudes) ** 2
        return float(w[0::2].sum()), float(w[1::2].sum())

    def to_dict(self) -> dict:
        labels = sublattice_labels(self.n_sites)
        return {
            "kind": self.kind,
            "eigenvalue": float(self.eigenvalue),
            "emitter_weight": float(self.emitter_weight),
            "amplitudes": [
                {"site": i + 1, "sublattice": lab, "amplitude": float(a)}
                for i, (lab, a) in enumerate(zip(labels, self.amplitudes))
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def eigh(H: SymmetricMatrix) -> Spectrum:
    """Full eigendecomposition with a deterministic sign convention.

    Eigenvalues ascend. Each eigenvector's first component above ``1e-10``
    in magnitude is made positive, which fixes the otherwise arbitrary sign.
    """
    A = H.entries if isinstance(H, SymmetricMatrix) else np.asarray(H, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    w, V = np.linalg.eigh(A)
    V = np.array(V)
    for i in range(V.shape[1]):
        col = V[:, i]
        nz = np.flatnonzero(np.abs(col) > 1e-10)
        if nz.size and col[nz[0]] < 0:
            V[:, i] = -col
    return Spectrum(w, V)


def in_gap_count(spectrum: Spectrum, spec: BathSpec) -> int:
    half = abs(spec.j1 - spec.j2)
    ev = spectrum.eigenvalues
    return int(np.count_nonzero((ev > spec.omega0 - half) & (ev < spec.omega0 + half)))


def edge_states(spectrum: Spectrum, spec: BathSpec) -> tuple[StatePick, StatePick]:
    """The hybridized even/odd edge-state pair of a topological chain.

    Returns ``(even, odd)`` where parity refers to site-order reversal.
    """
    if not spec.j1 < spec.j2:
        raise PhaseError("edge states exist only in the topological phase (j1 < j2)")
    if spec.n_sites % 2:
        raise PhaseError("edge-state pair requires an even number of sites")
    n = spec.n_sites
    idx = np.argsort(np.abs(spectrum.eigenvalues - spec.omega0), kind="stable")[:2]
    picks = []
    for i in idx:
        v = spectrum.eigenvectors[:n, i]
        parity = float(v @ v[::-1])
        picks.append((parity, spectrum.eigenvalues[i], v))
    picks.sort(key=lambda p: -p[0])
    (_, e_even, v_even), (_, e_odd, v_odd) = picks
    return (StatePick(float(e_even), v_even.copy(), "edge_even"),
            StatePick(float(e_odd), v_odd.copy(), "edge_odd"))


def localized_edge_states(even: StatePick, odd: StatePick) -> tuple[StatePick, StatePick]:
    """Recombine a hybridized pair into (left, right) localized states."""
    n = even.n_sites
    plus = (even.amplitudes + odd.amplitudes) / np.sqrt(2)
    minus = (even.amplitudes - odd.amplitudes) / np.sqrt(2)
    half = n // 2
    if np.sum(plus[:half] ** 2) >= np.sum(minus[:half] ** 2):
        left, right = plus, minus
    else:
        left, right = minus, plus
    energy = 0.5 * (even.eigenvalue + odd.eigenvalue)
    return StatePick(energy, left, "edge_left"), StatePick(energy, right, "edge_right")


def bound_state(spectrum: Spectrum, spec: BathSpec, em: EmitterSpec) -> StatePick:
    """Eigenstate with the largest emitter component.

    Ties (within 1e-12) go to the eigenvalue closest to the emitter frequency.
    Photonic amplitudes are renormalized to unit norm.
    """
    n = spec.n_sites
    V = spectrum.eigenvectors
    if V.shape[0] != n + 1:
        raise ValueError("spectrum does not come from an emitter-augmented matrix")
    overlap = np.abs(V[n, :])
    target = spec.omega0 + em.detuning
    best = overlap.max()
    candidates = np.flatnonzero(overlap >= best - 1e-12)
    i = candidates[np.argmin(np.abs(spectrum.eigenvalues[candidates] - target))]
    v = V[:, i]
    photonic = v[:n]
    norm = np.linalg.norm(photonic)
    return StatePick(float(spectrum.eigenvalues[i]), photonic / norm, "bound",
                     emitter_weight=float(v[n] ** 2))


def localization_length_theory(j1: float, j2: float) -> float:
    """Edge-state decay length in unit cells, ``1 / ln(j2 / j1)``."""
    if not 0 < j1 < j2:
        raise ValueError(f"requires 0 < j1 < j2, got j1={j1!r}, j2={j2!r}")
    return 1.0 / np.log(j2 / j1)


def fit_localization_length(state: StatePick, spec: BathSpec | None = None) -> float:
    """Fit an exponential envelope to the majority sub-lattice of ``state``.

    Amplitudes below ``AMPLITUDE_FLOOR`` and the ``BOUNDARY_CELLS`` cells
    nearest each end are excluded. Returns the decay length in unit cells
    (positive for both left- and right-localized states).
    """
    amps = np.abs(np.asarray(state.amplitudes, dtype=float))
    w_a, w_b = np.sum(amps[0::2] ** 2), np.sum(amps[1::2] ** 2)
    sub = amps[0::2] if w_a >= w_b else amps[1::2]
    cells = np.arange(sub.size)
    keep = (cells >= BOUNDARY_CELLS) & (cells < sub.size - BOUNDARY_CELLS) & (sub > AMPLITUDE_FLOOR)
    if np.count_nonzero(keep) < 4:
        raise FitError("fewer than 4 cells above the amplitude floor")
    slope = np.polyfit(cells[keep], np.log(sub[keep]), 1)[0]
    if abs(slope) < 1e-9:
        raise FitError("envelope does not decay; localization length diverges")
    return float(1.0 / abs(slope))
