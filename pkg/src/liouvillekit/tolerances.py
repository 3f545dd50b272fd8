"""Numeric tolerances shared by every module (one place, CLI-overridable)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    commute: float = 1e-8
    firstint: float = 1e-8
    ret: float = 1e-7  # lattice return, ``return`` in configs
    quasi: float = 1e-6
    rtol: float = 1e-10
    atol: float = 1e-12
    frame_rtol: float = 1e-12
    frame_atol: float = 1e-13
    jacobi: float = 1e-10
    primitive: float = 1e-9
    path: float = 1e-6
    equivalence: float = 1e-6  # Mineur vs leafwise, after constant removal
    action: float = 1e-4
    isotropy: float = 1e-7
    normal_form: float = 1e-5
    rank: float = 1e-8
    hypothesis: float = 1e-8
    avg: float = 1e-6
    conformal: float = 1e-6
    conformal_generator: float = 1e-5

    def to_dict(self) -> dict[str, float]:
        d = asdict(self)
        d["return"] = d.pop("ret")
        return dict(sorted(d.items()))

    def override(self, updates: dict[str, float]) -> "Tolerances":
        names = {f.name for f in fields(self)}
        clean = {}
        for key, val in updates.items():
            k = "ret" if key == "return" else key
            if k not in names:
                raise KeyError(f"unknown tolerance '{key}'")
            clean[k] = float(val)
        return replace(self, **clean)


DEFAULT_TOLERANCES = Tolerances()
