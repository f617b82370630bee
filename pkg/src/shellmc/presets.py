"""Named experiments and the checks attached to them."""
from __future__ import annotations

from dataclasses import dataclass, field

from .config import ProblemConfig
from .oracles import exact_flux_absorbing, exact_flux_streaming, exact_tmax

# moving-target geometry: R0(t) = 0.37625 - 0.027625 t, from 0.37625 down to 0.1
ALPHA = 0.37625
BETA = -0.027625

# published means used only for the soft normalization warning
PUBLISHED_FLUX = {0.9: 0.0381, 0.1: 0.0191}
SOFT_BAND = 0.15


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    config: ProblemConfig
    description: str
    companion: str | None = None      # analog preset to run alongside a biased one
    min_variance_ratio: float | None = None
    oracle: str | None = None          # "streaming" | "absorbing" | "profile"
    notes: tuple = field(default_factory=tuple)


def _stationary(kappa_s, importance):
    return ProblemConfig(alpha=0.1, r1=1.0, kappa_s=kappa_s, kappa_t=1.0, n=10_000, importance=importance)


def _moving(**kw):
    base = dict(mode="unsteady", alpha=ALPHA, beta=BETA, r1=1.0, t_final=10.0, dt=1e-2)
    base.update(kw)
    return ProblemConfig(**base)


def _t_max():
    return exact_tmax(ALPHA, BETA, 1.0, 10.0).value


def _build():
    t_max = _t_max()
    items = [
        ExperimentPreset("table1", _stationary(0.9, False), "stationary, kappa_s=0.9, analog"),
        ExperimentPreset("table2", _stationary(0.9, True), "stationary, kappa_s=0.9, importance sampled",
                         companion="table1", min_variance_ratio=20.0),
        ExperimentPreset("table3", _stationary(0.1, False), "stationary, kappa_s=0.1, analog"),
        ExperimentPreset("table4", _stationary(0.1, True), "stationary, kappa_s=0.1, importance sampled",
                         companion="table3", min_variance_ratio=20.0),
        ExperimentPreset("table5", _moving(kappa_s=0.9, kappa_t=1.0, n=20), "moving target, analog"),
        ExperimentPreset("table6", _moving(kappa_s=0.9, kappa_t=1.0, n=20, n_mu=100, importance=True),
                         "moving target, importance sampled (table rebuilt every step)",
                         companion="table5", min_variance_ratio=10.0),
        ExperimentPreset("verify_streaming", _moving(kappa_s=0.0, kappa_t=0.0, n=200, source_stop=t_max),
                         "moving target, no interaction, exact flux known", oracle="streaming"),
        ExperimentPreset("verify_absorbing", _moving(kappa_s=0.0, kappa_t=1.0, n=200, source_stop=t_max),
                         "moving target, pure absorber, exact flux known", oracle="absorbing"),
        ExperimentPreset("shell_profile",
                         ProblemConfig(alpha=0.0, r1=1.0, kappa_s=0.0, kappa_t=1.0, n=100_000, n_r=30,
                                       source="shell", r_source=0.45, profile=True),
                         "isotropic shell source at r=0.45, scalar flux profile", oracle="profile"),
    ]
    return {p.name: p for p in items}


PRESETS = _build()


def get_preset(name):
    return PRESETS[name]


def oracle_flux(kind, cfg: ProblemConfig):
    if kind == "streaming":
        return exact_flux_streaming(cfg.alpha, cfg.beta, cfg.r1, cfg.t_final)
    if kind == "absorbing":
        return exact_flux_absorbing(cfg.alpha, cfg.beta, cfg.r1, cfg.kappa_t, cfg.t_final, kappa_s=cfg.kappa_s)
    raise KeyError(kind)
