"""Central tolerance record.

Every numerical threshold used by checks in the library lives here so that a
single override file (pointed to by ``FLOQGEN_TOL_FILE``) can retune them.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

TOL_FILE_ENV = "FLOQGEN_TOL_FILE"


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-10
    trace: float = 1e-10
    positivity: float = 1e-8
    positivity_effective: float = 1e-6
    trajectory_trace: float = 1e-8
    trajectory_hermitian: float = 1e-9
    kernel_degeneracy: float = 1e-8
    kernel_residual: float = 1e-9
    expm_residual: float = 1e-12
    fd_max_step: float = 1e-3
    fd_period_fraction: float = 0.01
    convergence: float = 1e-6
    composition: float = 1e-8
    fock_tail: float = 1e-8

    def with_overrides(self, **kw: float) -> "Tolerances":
        unknown = set(kw) - {f.name for f in fields(self)}
        if unknown:
            raise KeyError(f"unknown tolerance(s): {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in kw.items()})

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


DEFAULT_TOLERANCES = Tolerances()


def load_tolerances(path: str | os.PathLike | None = None) -> Tolerances:
    """Defaults, updated from ``path`` or from the file named by ``FLOQGEN_TOL_FILE``.

    The file is a flat JSON object of tolerance names to numbers. The short
    alias ``tol_p`` is accepted for ``positivity``.
    """
    if path is None:
        path = os.environ.get(TOL_FILE_ENV)
    if not path:
        return DEFAULT_TOLERANCES
    data = json.loads(Path(path).read_text())
    if "tol_p" in data:
        data["positivity"] = data.pop("tol_p")
    return DEFAULT_TOLERANCES.with_overrides(**data)
