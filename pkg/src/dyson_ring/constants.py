"""Physical and mission constants (SI units)."""

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Constants:
    """Immutable physical constants shared by every module.

    Attributes:
        mu_sun: solar gravitational parameter (m^3/s^2)
        AU: meters per astronomical unit
        gamma: ATD thrust acceleration (m/s^2)
        alpha: mass-conversion rate (1/s)
        year: days per year
        m_max: maximum asteroid mass (kg)
        m_min: minimum asteroid mass (kg)
        mission_days: mission duration (days)
    """

    mu_sun: float = 1.32712440018e20
    AU: float = 1.49597870691e11
    gamma: float = 1e-4
    alpha: float = 6e-9
    year: float = 365.25
    m_max: float = 1.963e14
    m_min: float = 2.266e9
    mission_days: float = 7305.0

    @property
    def day(self) -> float:
        return 86400.0

    @property
    def mission_end(self) -> float:
        """Mission end epoch in seconds."""
        return self.mission_days * self.day

    @property
    def time_unit(self) -> float:
        """Canonical time unit: a 1 AU circular orbit has period 2*pi."""
        return math.sqrt(self.AU**3 / self.mu_sun)

    @property
    def velocity_unit(self) -> float:
        return self.AU / self.time_unit

    @property
    def au_per_year(self) -> float:
        """AU/year in m/s."""
        return self.AU / (self.year * self.day)


CONSTANTS = Constants()

MU_SUN = CONSTANTS.mu_sun
AU = CONSTANTS.AU
DAY = CONSTANTS.day
YEAR = CONSTANTS.year * DAY
GAMMA = CONSTANTS.gamma
ALPHA = CONSTANTS.alpha
M_MAX = CONSTANTS.m_max
M_MIN = CONSTANTS.m_min
MISSION_END = CONSTANTS.mission_end

STATIONS = 12
KM = 1000.0
