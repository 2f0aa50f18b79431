import numpy as np


def photo_residual(ci, vcmax25):
    """Net assimilation minus diffusive CO2 supply at intercellular CO2 ci (Pa)."""
    gamma_star = 4.275
    kc = 40.49
    ko = 27840.0
    oi = 20900.0
    ca = 40.0
    g0 = 0.01
    g1 = 4.0
    vpd = 1.5
    pressure = 101325.0

    jmax = 1.67 * vcmax25
    rd = 0.015 * vcmax25
    ac = vcmax25 * (ci - gamma_star) / (ci + kc * (1.0 + oi / ko))
    aj = jmax / 4.0 * (ci - gamma_star) / (ci + 2.0 * gamma_star)
    an = np.minimum(ac, aj) - rd
    gs = np.maximum(an, 0.0) * (1.6 * (1.0 + g1 / np.sqrt(vpd)) / (ca / pressure * 1.0e6)) + g0
    return an - gs * (ca - ci) * (1.0e6 / (1.6 * pressure))
