"""Canonical fiber parameters and named experiment presets."""

from __future__ import annotations

from dataclasses import dataclass, field

from .fiber import FiberSpec, ModeParams, PulseSpec
from .network import NetworkSpec
from .pinn import TrainConfig

T0 = 0.6007  # ps, 1/e half-width of a 1 ps FWHM pulse
T_MAX = 100.0  # ps
WAVELENGTH = 1030.0  # nm

BETA2 = (0.01916410, 0.01916082, 0.01915536)  # ps^2/m
DELTA_BETA1 = (0.0, 0.00295601, 0.00791849)  # ps/m
DELTA_BETA0 = (0.0, -5662.25183, -11328.0841)  # 1/m
GAMMA_S = 0.0011  # 1/(W m)
GAMMA_C = 2.0 * GAMMA_S  # degenerate XPM factor


def canonical_modes(n_modes: int = 3, nonlinear: bool = True, xpm: bool = True):
    if not 1 <= n_modes <= 3:
        raise ValueError("canonical set has three modes")
    gs = GAMMA_S if nonlinear else 0.0
    gc = GAMMA_C if nonlinear and xpm else 0.0
    return tuple(
        ModeParams(
            mode_index=p + 1,
            delta_beta0=DELTA_BETA0[p],
            delta_beta1=DELTA_BETA1[p],
            beta2=BETA2[p],
            gamma_s=gs,
            gamma_c=(gc,) * (n_modes - 1),
        )
        for p in range(n_modes)
    )


def canonical_fiber(length: float, n_modes: int = 3, nonlinear: bool = True,
                    xpm: bool = True) -> FiberSpec:
    return FiberSpec(length, canonical_modes(n_modes, nonlinear, xpm), WAVELENGTH)


def canonical_pulse(energy: float, n_modes: int = 3, time_window: float = T_MAX) -> PulseSpec:
    return PulseSpec.uniform(energy, T0, time_window, n_modes)


@dataclass(frozen=True)
class CasePreset:
    name: str
    energy: float  # nJ
    length: float  # m
    n_modes: int = 3
    nonlinear: bool = False
    xpm: bool = False
    time_window: float = T_MAX
    description: str = ""
    network: NetworkSpec = field(default_factory=NetworkSpec)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def modulation(self) -> str:
        if not self.nonlinear:
            return "none"
        return "SPM+XPM" if self.xpm else "SPM"

    def fiber(self) -> FiberSpec:
        return canonical_fiber(self.length, self.n_modes, self.nonlinear, self.xpm)

    def pulse(self) -> PulseSpec:
        return canonical_pulse(self.energy, self.n_modes, self.time_window)


DESK_NETWORK = NetworkSpec(n_blocks=3, width=64, n_outputs=2)
DESK_TRAIN = TrainConfig(n_interior=20_000, n_boundary=2000, batch_size=512,
                         max_iterations=10_000, seed=1234)

PRESETS: dict[str, CasePreset] = {
    "case1": CasePreset("case1", 10.0, 100.0, description="three-mode linear"),
    "case2": CasePreset("case2", 10.0, 300.0, description="three-mode linear"),
    "case3": CasePreset("case3", 10.0, 5.0, nonlinear=True,
                        description="three-mode, SPM only"),
    "case4": CasePreset("case4", 10.0, 5.0, nonlinear=True, xpm=True,
                        description="three-mode, SPM and XPM"),
    "case5": CasePreset("case5", 0.1, 100.0, nonlinear=True, xpm=True,
                        description="three-mode, SPM and XPM"),
    "case6": CasePreset("case6", 0.1, 300.0, nonlinear=True, xpm=True,
                        description="three-mode, SPM and XPM, denser sampling",
                        train=TrainConfig(n_interior=880_000)),
    "desk-single": CasePreset(
        "desk-single", 10.0, 19.0, n_modes=1, time_window=8.0,
        description="single-mode linear, desk scale",
        network=DESK_NETWORK, train=DESK_TRAIN,
    ),
    "desk-three": CasePreset(
        "desk-three", 10.0, 19.0, n_modes=3, time_window=8.0,
        description="three-mode linear, desk scale",
        network=NetworkSpec(n_blocks=3, width=64, n_outputs=6), train=DESK_TRAIN,
    ),
}


def get_preset(name: str) -> CasePreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
