from photo_residual import photo_residual


def leaf_photosynthesis(ci0, vcmax25):
    """Safeguarded secant solve for intercellular CO2.

    Returns (ci_star, an_star).
    """
    ca = 40.0
    gamma_star = 4.275
    kc = 40.49
    ko = 27840.0
    oi = 20900.0

    lo = 1.0e-6
    hi = 2.0 * ca
    lo_negative = photo_residual(lo, vcmax25) < 0.0
    x0 = ci0
    f0 = photo_residual(x0, vcmax25)
    x1 = 0.99 * ci0
    f1 = photo_residual(x1, vcmax25)

    def tighten(x, fx, lo, hi):
        if lo < x < hi:
            if (fx < 0.0) == lo_negative:
                lo = x
            else:
                hi = x
        return lo, hi

    lo, hi = tighten(x0, f0, lo, hi)
    lo, hi = tighten(x1, f1, lo, hi)
    stalled = False
    for _ in range(40):
        if f1 != f0:
            x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        else:
            x2 = hi + 1.0
        if stalled or not (lo < x2 < hi):
            x2 = (lo + hi) * 0.5
        f2 = photo_residual(x2, vcmax25)
        lo, hi = tighten(x2, f2, lo, hi)
        step = abs(x2 - x1)
        stalled = abs(f2) > 0.5 * abs(f1)
        x0, f0 = x1, f1
        x1, f1 = x2, f2
        if abs(f2) <= 1.0e-6 and step <= 1.0e-3:
            break
    ci_star = x1
    ac = vcmax25 * (ci_star - gamma_star) / (ci_star + kc * (1.0 + oi / ko))
    aj = 1.67 * vcmax25 / 4.0 * (ci_star - gamma_star) / (ci_star + 2.0 * gamma_star)
    an_star = min(ac, aj) - 0.015 * vcmax25
    return ci_star, an_star
