"""Parameter records, slope fields and the random-stream contract.

Everything here is an immutable value record.  Lattice units are the bare
ones of the lattice KPZ equation with unit lattice spacing; the ring is
``[0, N)`` with periodic indexing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    """Raised for inputs outside the domain of an operation."""


class BlowUpError(RuntimeError):
    """The slope field left the finite regime during integration."""

    def __init__(self, message: str, time: float = float("nan")):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class ModelParameters:
    """Bare couplings of the lattice KPZ equation on a ring of ``ring_size`` sites."""

    lambda0: float
    nu0: float
    d0: float
    rho: float = 0.0
    ring_size: int = 256

    def __post_init__(self):
        for name in ("lambda0", "nu0", "d0", "rho"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")
        if not self.nu0 > 0:
            raise ParameterError(f"nu0 must be positive, got {self.nu0}")
        if not self.d0 > 0:
            raise ParameterError(f"d0 must be positive, got {self.d0}")
        if int(self.ring_size) != self.ring_size or self.ring_size < 3:
            raise ParameterError(f"ring_size must be an integer >= 3, got {self.ring_size}")

    @property
    def alpha(self) -> float:
        return self.nu0 / self.d0

    @property
    def lam(self) -> float:
        """Dimensionless coupling of the Fock-space hamiltonian."""
        return coupling_lambda(self)

    def chi(self) -> float:
        return susceptibility(self)

    def replace(self, **changes) -> "ModelParameters":
        values = dict(lambda0=self.lambda0, nu0=self.nu0, d0=self.d0,
                      rho=self.rho, ring_size=self.ring_size)
        values.update(changes)
        return ModelParameters(**values)

    def to_dict(self) -> dict:
        return dict(lambda0=self.lambda0, nu0=self.nu0, d0=self.d0, rho=self.rho,
                    ring_size=self.ring_size, alpha=self.alpha, lam=self.lam,
                    chi=self.chi())


def _check_domain(p: ModelParameters) -> None:
    # ModelParameters validates on construction; this guards duck-typed records.
    if not (p.nu0 > 0 and p.d0 > 0):
        raise ParameterError("nu0 and d0 must be positive")


def coupling_lambda(p: ModelParameters) -> float:
    """lambda = lambda0 * alpha**(-1/2) / (nu0 * 3 * 2**(3/2))."""
    _check_domain(p)
    return p.lambda0 / (3.0 * 2.0 ** 1.5 * math.sqrt(p.alpha) * p.nu0)


def susceptibility(p: ModelParameters) -> float:
    """Static susceptibility chi = 1/(2 alpha) of the Gaussian stationary measure."""
    _check_domain(p)
    return 1.0 / (2.0 * p.alpha)


def mean_current_theory(p: ModelParameters) -> float:
    """Stationary average current j(rho) = (lambda0/6) (1/alpha + 3 rho^2)."""
    _check_domain(p)
    return p.lambda0 / 6.0 * (1.0 / p.alpha + 3.0 * p.rho ** 2)


@dataclass(frozen=True)
class SlopeField:
    """Periodic slope configuration ``u_j``, j = 0..N-1."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim != 1 or arr.size < 3:
            raise ParameterError("a slope field is a 1-d array with at least 3 sites")
        if not np.all(np.isfinite(arr)):
            raise BlowUpError("slope field contains non-finite entries")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def ring_size(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, SlopeField):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class SeedSpec:
    """One independent random stream per (master_seed, stream_index).

    Streams come from Philox (counter based) keyed through ``SeedSequence``, so
    the noise a replica sees does not depend on how replicas are scheduled.
    ``purpose`` separates sub-streams of one replica (initial state, noise,
    resampling attempts).
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2 ** 64):
            raise ParameterError("master_seed must be a 64-bit unsigned integer")
        if int(self.stream_index) < 0:
            raise ParameterError("stream_index must be non-negative")

    def generator(self, purpose: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed),
                                    spawn_key=(int(self.stream_index), int(purpose)))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream_index: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, stream_index)
