import numpy as np


def effective_kc(kc, ko, oi):
    return kc * (1.0 + oi / ko)


def medlyn_slope(g1, vpd):
    return 1.6 * (1.0 + g1 / np.sqrt(vpd))


def rubisco_rate(vcmax, ci, gamma_star, kc_eff):
    return vcmax * (ci - gamma_star) / (ci + kc_eff)


def electron_rate(jmax, ci, gamma_star):
    return jmax / 4.0 * (ci - gamma_star) / (ci + 2.0 * gamma_star)


def net_assimilation(ac, aj, rd):
    return np.minimum(ac, aj) - rd


def stomatal_conductance(g0, slope, an, cs):
    return g0 + slope * np.maximum(an, 0.0) / cs


def ci_residual(ci, vcmax, jmax, rd, gamma_star, kc_eff, g0, slope, ca, pressure):
    ac = rubisco_rate(vcmax, ci, gamma_star, kc_eff)
    aj = electron_rate(jmax, ci, gamma_star)
    an = net_assimilation(ac, aj, rd)
    cs = ca / pressure * 1.0e6
    gs = stomatal_conductance(g0, slope, an, cs)
    return an - gs * (ca - ci) * 1.0e6 / (1.6 * pressure)


def secant_step(x0, f0, x1, f1):
    return x1 - f1 * (x1 - x0) / (f1 - f0)


def hybrid(ci0, vcmax):
    """Returns (ci_star, an_star, gs_star)."""
    gamma_star = 4.275
    kc = 40.49
    ko = 27840.0
    oi = 20900.0
    ca = 40.0
    g0 = 0.01
    g1 = 4.0
    vpd = 1.5
    pressure = 101325.0

    jmax = 1.67 * vcmax
    rd = 0.015 * vcmax
    kc_eff = effective_kc(kc, ko, oi)
    slope = medlyn_slope(g1, vpd)
    x0 = ci0
    x1 = 0.99 * ci0
    f0 = ci_residual(x0, vcmax, jmax, rd, gamma_star, kc_eff, g0, slope, ca, pressure)
    f1 = ci_residual(x1, vcmax, jmax, rd, gamma_star, kc_eff, g0, slope, ca, pressure)
    for _ in range(40):
        if f1 == f0:
            break
        x2 = secant_step(x0, f0, x1, f1)
        x0 = x1
        f0 = f1
        x1 = x2
        f1 = ci_residual(x1, vcmax, jmax, rd, gamma_star, kc_eff, g0, slope, ca, pressure)
        if abs(f1) <= 1.0e-6 and abs(x1 - x0) <= 1.0e-3:
            break
    ci_star = x1
    ac = rubisco_rate(vcmax, ci_star, gamma_star, kc_eff)
    aj = electron_rate(jmax, ci_star, gamma_star)
    an_star = net_assimilation(ac, aj, rd)
    gs_star = stomatal_conductance(g0, slope, an_star, ca / pressure * 1.0e6)
    return ci_star, an_star, gs_star
