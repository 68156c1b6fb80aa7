"""SSH bath Hamiltonians in the single-excitation sector.

All rates are stored as *linear* frequencies in GHz (the quantity usually
quoted as ``X/2pi``). Every formula in this package is homogeneous in
frequency, so no factors of 2*pi appear anywhere internally.

Sites are 1-based in the public API: odd sites form sub-lattice A, even
sites sub-lattice B. The matrices themselves are ordinary 0-based numpy
arrays, so site ``s`` lives at row ``s - 1``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np


class DimensionError(ValueError):
    """Array length does not match the lattice size."""


@dataclass(frozen=True)
class BathSpec:
    """Clean SSH bath: ``n_sites`` resonators at ``omega0`` with hoppings j1/j2."""

    n_sites: int
    omega0: float
    j1: float
    j2: float

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise ValueError(f"n_sites must be an integer >= 2, got {self.n_sites!r}")
        if not self.j1 > 0 or not self.j2 > 0:
            raise ValueError(f"hoppings must be positive, got j1={self.j1!r}, j2={self.j2!r}")
        if not np.isfinite(self.omega0):
            raise ValueError("omega0 must be finite")
        object.__setattr__(self, "n_sites", int(self.n_sites))

    @property
    def phase(self) -> str:
        if self.j1 > self.j2:
            return "trivial"
        if self.j1 < self.j2:
            return "topological"
        return "critical"

    def sublattice(self) -> list[str]:
        return sublattice_labels(self.n_sites)

    @classmethod
    def from_dict(cls, d: dict) -> "BathSpec":
        return cls(n_sites=d["n_sites"], omega0=float(d["omega0"]),
                   j1=float(d["j1"]), j2=float(d["j2"]))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DisorderModel:
    """Gaussian diagonal disorder with standard deviation ``sigma`` (GHz)."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def from_dict(cls, d: dict) -> "DisorderModel":
        return cls(sigma=float(d["sigma"]), seed=int(d.get("seed", 0)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DisorderDraw:
    """One realization of per-site detunings (GHz)."""

    deltas: np.ndarray

    def __post_init__(self):
        deltas = np.array(self.deltas, dtype=float).ravel()
        if not np.all(np.isfinite(deltas)):
            raise ValueError("disorder detunings must be finite")
        deltas.setflags(write=False)
        object.__setattr__(self, "deltas", deltas)

    def __len__(self):
        return len(self.deltas)

    @classmethod
    def zeros(cls, n_sites: int) -> "DisorderDraw":
        return cls(np.zeros(n_sites))


@dataclass(frozen=True)
class EmitterSpec:
    """Two-level emitter coupled with rate ``g`` to bath site ``site`` (1-based).

    ``detuning`` is the emitter transition frequency minus ``omega0``.
    """

    site: int
    g: float
    detuning: float = 0.0

    def __post_init__(self):
        if int(self.site) != self.site or self.site < 1:
            raise IndexError(f"emitter site must be a 1-based index, got {self.site!r}")
        if not self.g > 0:
            raise ValueError(f"emitter coupling g must be positive, got {self.g!r}")
        object.__setattr__(self, "site", int(self.site))

    @classmethod
    def from_dict(cls, d: dict) -> "EmitterSpec":
        return cls(site=int(d["site"]), g=float(d["g"]),
                   detuning=float(d.get("detuning", 0.0)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SymmetricMatrix:
    """Real symmetric single-excitation Hamiltonian with a structure tag."""

    entries: np.ndarray
    structure: str = "tridiagonal"

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {entries.shape}")
        if not np.array_equal(entries, entries.T):
            raise ValueError("matrix is not exactly symmetric")
        if self.structure not in ("tridiagonal", "tridiagonal-plus-one-spur"):
            raise ValueError(f"unknown structure tag {self.structure!r}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]


def sublattice_labels(n_sites: int) -> list[str]:
    return ["A" if s % 2 == 1 else "B" for s in range(1, n_sites + 1)]


def hoppings(spec: BathSpec) -> np.ndarray:
    """Bond strengths (j1, j2, j1, ...) between consecutive sites."""
    hop = np.full(spec.n_sites - 1, spec.j2, dtype=float)
    hop[::2] = spec.j1
    return hop


def build_bath(spec: BathSpec, draw: Optional[DisorderDraw] = None) -> SymmetricMatrix:
    """Bath Hamiltonian with optional diagonal disorder."""
    n = spec.n_sites
    diag = np.full(n, spec.omega0, dtype=float)
    if draw is not None:
        if len(draw) != n:
            raise DimensionError(f"disorder draw has length {len(draw)}, bath has {n} sites")
        diag = diag + draw.deltas
    hop = hoppings(spec)
    H = np.diag(diag) + np.diag(hop, 1) + np.diag(hop, -1)
    return SymmetricMatrix(H, "tridiagonal")


def couple_emitter(H: SymmetricMatrix, spec: BathSpec, em: EmitterSpec) -> SymmetricMatrix:
    """Append an emitter row/column coupled to one bath site.

    The emitter occupies the last index (``n_sites + 1`` in 1-based terms).
    """
    n = spec.n_sites
    if H.dimension != n:
        raise DimensionError(f"bath matrix has dimension {H.dimension}, spec has {n} sites")
    if not 1 <= em.site <= n:
        raise IndexError(f"emitter site {em.site} outside 1..{n}")
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = H.entries
    out[n, n] = spec.omega0 + em.detuning
    out[n, em.site - 1] = out[em.site - 1, n] = em.g
    return SymmetricMatrix(out, "tridiagonal-plus-one-spur")


def dispersion(spec: BathSpec, k):
    """Lower and upper band frequencies at wavenumber(s) ``k``."""
    k = np.asarray(k, dtype=float)
    eps = np.sqrt(spec.j1**2 + spec.j2**2 + 2 * spec.j1 * spec.j2 * np.cos(k))
    return spec.omega0 - eps, spec.omega0 + eps


def band_gap(spec: BathSpec) -> float:
    return 2.0 * abs(spec.j1 - spec.j2)


def bloch_hamiltonian(spec: BathSpec, k: float) -> np.ndarray:
    off = spec.j1 + spec.j2 * np.exp(-1j * k)
    return np.array([[spec.omega0, off], [np.conj(off), spec.omega0]], dtype=complex)


def sample_disorder(model: DisorderModel, n_sites: int, realization_index: int,
                    substream: int = 0) -> DisorderDraw:
    """Draw ``n_sites`` i.i.d. Normal(0, sigma^2) detunings.

    The stream is keyed by ``(model.seed, realization_index, substream)`` only,
    so any realization can be regenerated independently of evaluation order.
    """
    if model.sigma == 0:
        return DisorderDraw.zeros(n_sites)
    ss = np.random.SeedSequence(model.seed, spawn_key=(int(realization_index), int(substream)))
    rng = np.random.Generator(np.random.Philox(ss))
    return DisorderDraw(model.sigma * rng.standard_normal(n_sites))


def eta(model: DisorderModel, spec: BathSpec) -> float:
    """Dimensionless disorder strength ``2 sigma / (j1 + j2)``."""
    return 2.0 * model.sigma / (spec.j1 + spec.j2)


def sigma_for_eta(eta_value: float, spec: BathSpec) -> float:
    return eta_value * (spec.j1 + spec.j2) / 2.0


@dataclass
class BathConfig:
    """JSON configuration document bundling bath, disorder and emitter."""

    bath: BathSpec
    disorder: Optional[DisorderModel] = None
    emitter: Optional[EmitterSpec] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"bath": self.bath.to_dict()}
        if self.disorder is not None:
            out["disorder"] = self.disorder.to_dict()
        if self.emitter is not None:
            out["emitter"] = self.emitter.to_dict()
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "BathConfig":
        rest = {k: v for k, v in d.items() if k not in ("bath", "disorder", "emitter")}
        return cls(
            bath=BathSpec.from_dict(d["bath"]),
            disorder=DisorderModel.from_dict(d["disorder"]) if d.get("disorder") else None,
            emitter=EmitterSpec.from_dict(d["emitter"]) if d.get("emitter") else None,
            extra=rest,
        )

    @classmethod
    def from_json(cls, text: str) -> "BathConfig":
        return cls.from_dict(json.loads(text))
