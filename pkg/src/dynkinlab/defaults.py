"""Versioned verdict thresholds.

Every pass/fail decision in the library and in the scenario runner reads its
threshold from :data:`THRESHOLDS`, so an acceptance run is fully described by
``THRESHOLDS.version`` plus the scenario config.
"""
from dataclasses import asdict, dataclass

# environment variable naming the artifact directory
OUTPUT_ENV = "DYNKINLAB_OUTPUT_DIR"


@dataclass(frozen=True)
class Thresholds:
    version: str = "1"
    # Monte Carlo comparisons, in standard errors
    se_multiplier: float = 3.0
    # growth per horizon doubling required by the E1 scenario check
    e1_growth_factor: float = 1.5
    # growth per doubling above which the lattice classifier calls V infinite
    divergence_growth_factor: float = 1.1
    divergence_doublings: int = 3
    # relative tolerances for lattice outputs
    boundary_rtol: float = 0.05
    boundary_rtol_refined: float = 0.025
    lattice_value_rtol: float = 0.005
    # lattice truncation: grid extends this many sqrt(T_max) beyond the region
    width_sigmas: float = 6.0
    # fits with fewer surviving paths at the last tail point are unreliable
    breiman_min_survivors: int = 100
    # factor on the exponent bound beta(a) < gamma / 4
    breiman_gamma_fraction: float = 0.25

    def to_dict(self):
        return asdict(self)


THRESHOLDS = Thresholds()
