"""Shared physical and numerical constants."""

import math

SPEED_OF_LIGHT_M_PER_S = 299_792_458.0

# Gaussian FWHM = 2 sqrt(2 ln 2) sigma
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

PS_PER_S = 1.0e12
PS_PER_NS = 1.0e3
PS_PER_US = 1.0e6

# Two-photon visibility above which a local-realistic description fails.
BELL_VISIBILITY_THRESHOLD = 1.0 / math.sqrt(2.0)
