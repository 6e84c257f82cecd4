"""Numerical tolerances and defaults shared by every stage of the pipeline.

Every knob lives in :class:`Tolerances` so that a run is fully described by a
model definition plus one of these records.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Tolerances:
    # delay-model
    eval_tol: float = 1e-10
    quad_nodes: int = 8
    positivity_samples: int = 1000
    beta_max: float = 1e6
    h3_samples: int = 20
    h3_tol: float = 1e-6
    h3_horizon_factor: float = 200.0

    # spectrum
    newton_tol: float = 1e-12
    winding_tol: float = 0.25
    boundary_zero_tol: float = 1e-10
    boundary_nudge: float = 0.02
    boundary_retries: int = 3
    winding_max_points: int = 1 << 15
    strip_left_frac: float = 0.1
    strip_right_frac: float = 1.0
    simple_radius_frac: float = 0.05
    scan_points: int = 2000
    eps_max: float = 1.0

    # heteroclinic
    seed_amp_frac: float = 1e-4
    tol_K: float = 1e-8
    converge_window_taus: float = 5.0
    het_steps_per_tau: int = 40
    t_max_factor: float = 200.0
    blowup: float = 1e8
    linear_level: float = 0.01

    # wave profile
    profile_h: float = 0.01
    tail_level: float = 1e-6
    right_tol: float = 1e-8
    tol_fix: float = 1e-9
    k_max: int = 500
    burn_in: int = 100
    nonconv_patience: int = 5
    extend_retries: int = 2
    fit_rel_tol: float = 0.02
    angle_tol_deg: float = 2.0
    mu_gap_frac: float = 0.05

    # pde-validate
    pde_dx: float = 0.05
    pde_cfl: float = 0.4
    pde_t_end: float = 5.0
    pde_speed_tol: float = 0.05
    pde_l2_tol: float = 1e-2
    pde_shift_range: float = 1.0

    extra: dict = field(default_factory=dict, compare=False)

    def replace(self, **changes) -> "Tolerances":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict | None) -> "Tolerances":
        if not data:
            return cls()
        names = {f.name for f in dataclasses.fields(cls)} - {"extra"}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
        for key, value in data.items():
            if isinstance(value, (int, float)) and not isinstance(value, bool) and value <= 0:
                raise ValueError(f"tolerance {key!r} must be positive, got {value}")
        ints = {f.name for f in dataclasses.fields(cls) if f.type in (int, "int")}
        data = {k: (int(v) if k in ints else v) for k, v in data.items()}
        return cls(**data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("extra")
        return out


DEFAULT = Tolerances()
