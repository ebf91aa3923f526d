"""Large deviations of random paths on the half-line.

Deviation functions, action functionals in weighted-sup path spaces, rate
infima over events, and Monte Carlo checks of the exponential decay rates.
"""

__version__ = "0.1.0"
