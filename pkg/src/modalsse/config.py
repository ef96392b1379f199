"""Run configuration: strict JSON schema and conversion to model objects.

Complex numbers are written as ``[re, im]`` pairs, complex matrices as lists
of rows of such pairs. Unknown keys are rejected everywhere.

Example::

    {
      "model": {
        "system": {
          "h_int": [[[0, 0], [0, 0]], [[0, 0], [0, 0]]],
          "lowering": [[[0, 0], [0, 0]], [[1, 0], [0, 0]]],
          "initial_state": [[0.7071067811865476, 0], [0.7071067811865476, 0]]
        },
        "bath": {"modes": [{"detuning": 1.0, "coupling": 0.4},
                           {"detuning": -1.0, "coupling": 0.4}]}
      },
      "backend": {"kind": "dense_fock", "n_max": 3},
      "unraveling": "position",
      "integrator": {"dt": 0.001, "t_final": 3.0},
      "ensemble": {"n_traj": 2000, "master_seed": 7, "checkpoints": [1.0, 2.0, 3.0]}
    }
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .linalg import BasisDescriptor
from .model import BathSpec, ModeSpec, SystemSpec, UniverseModel
from .propagator import IntegratorConfig

ComplexPair = tuple[float, float]
ComplexVector = list[ComplexPair]
ComplexMatrix = list[list[ComplexPair]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


def to_complex(value):
    """``[re, im]`` pairs (any nesting) to a complex array."""
    arr = np.asarray(value, dtype=np.float64)
    return arr[..., 0] + 1j * arr[..., 1]


def from_complex(arr):
    """Complex array to nested ``[re, im]`` lists."""
    arr = np.asarray(arr, dtype=np.complex128)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


class SystemConfig(_Strict):
    h_int: ComplexMatrix
    lowering: ComplexMatrix
    initial_state: ComplexVector

    def to_spec(self):
        return SystemSpec(to_complex(self.h_int), to_complex(self.lowering),
                          to_complex(self.initial_state))


class ModeConfig(_Strict):
    detuning: float
    coupling: float = Field(ge=0.0)


class BandConfig(_Strict):
    """Equally spaced modes on ``[omega_min, omega_max]`` with the flat coupling
    ``g = sqrt(gamma * spacing / (2 pi))`` of a Markovian reservoir."""

    n_modes: int = Field(ge=2)
    omega_min: float
    omega_max: float
    gamma: float = Field(gt=0.0)

    def to_modes(self):
        w = np.linspace(self.omega_min, self.omega_max, self.n_modes)
        g = math.sqrt(self.gamma * (w[1] - w[0]) / (2 * math.pi))
        return tuple(ModeSpec(float(x), g) for x in w)


class BathConfig(_Strict):
    modes: Optional[list[ModeConfig]] = None
    band: Optional[BandConfig] = None
    initial: Literal["vacuum"] = "vacuum"

    @model_validator(mode="after")
    def _one_source(self):
        if (self.modes is None) == (self.band is None):
            raise ValueError("give exactly one of 'modes' or 'band'")
        return self

    def to_spec(self):
        if self.band is not None:
            return BathSpec(self.band.to_modes())
        return BathSpec(tuple(ModeSpec(m.detuning, m.coupling) for m in self.modes))


class ModelConfig(_Strict):
    system: SystemConfig
    bath: BathConfig


class DenseFockBackend(_Strict):
    kind: Literal["dense_fock"]
    n_max: int = Field(ge=1)


class SingleExcitationBackend(_Strict):
    kind: Literal["single_excitation"]


Backend = Annotated[Union[DenseFockBackend, SingleExcitationBackend], Field(discriminator="kind")]


class IntegratorSection(_Strict):
    dt: float = Field(gt=0.0)
    t_final: float = Field(gt=0.0)
    checkpoint_stride: int = Field(default=1, ge=1)

    def to_config(self):
        return IntegratorConfig(self.dt, self.t_final, self.checkpoint_stride)


class EnsembleSection(_Strict):
    n_traj: int = Field(ge=1)
    master_seed: int = Field(ge=0, lt=2**64)
    workers: int = Field(default=1, ge=1)
    checkpoints: list[float]


class OutputSection(_Strict):
    trajectory: Optional[str] = None
    ensemble: Optional[str] = None


class RunConfig(_Strict):
    model: ModelConfig
    backend: Backend
    unraveling: Literal["position", "quadrature", "coherent"]
    integrator: IntegratorSection
    ensemble: Optional[EnsembleSection] = None
    observables: dict[str, ComplexMatrix] = Field(default_factory=dict)
    allow_zero_mode: bool = False
    outputs: OutputSection = Field(default_factory=OutputSection)

    def universe_model(self):
        system = self.model.system.to_spec()
        bath = self.model.bath.to_spec()
        if self.backend.kind == "dense_fock":
            basis = BasisDescriptor.dense_fock(system.dim, len(bath), self.backend.n_max)
        else:
            basis = BasisDescriptor.single_excitation(system.dim, len(bath))
        return UniverseModel(system, bath, basis)

    def observable_ops(self):
        return {k: to_complex(v) for k, v in self.observables.items()}


class BellConfig(_Strict):
    """Discrete model for the jump process: a static Hamiltonian, an initial
    state and a projector list (default: computational basis)."""

    hamiltonian: ComplexMatrix
    initial_state: ComplexVector
    projectors: Optional[list[ComplexMatrix]] = None
    integrator: IntegratorSection
    n_runs: int = Field(ge=1)
    seed: int = Field(ge=0, lt=2**64)
    checkpoints: list[float]
    output: Optional[str] = None


def dump(cfg):
    """Canonical JSON text of a config (round-trips through :func:`parse`)."""
    return cfg.model_dump_json(indent=2, exclude_none=True)


def parse(text, kind=RunConfig):
    return kind.model_validate_json(text)


def load(path, kind=RunConfig):
    return parse(Path(path).read_text(), kind)


def format_errors(err: ValidationError):
    """One ``path.to.field: message`` line per schema violation."""
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return lines


def canonical_json(tree):
    """Deterministic JSON text for result trees (shortest round-trip floats)."""
    return json.dumps(tree, indent=1, sort_keys=False, allow_nan=True) + "\n"
