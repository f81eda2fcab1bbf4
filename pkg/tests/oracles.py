"""Independent straight-line transcriptions used as test oracles."""

import math


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _proj(v, y):
    c = _dot(v, y)
    return [yk - c * vk for yk, vk in zip(y, v)]


def aniso_agent(v, vc, lam, sigma, dt, dB):
    """One anisotropic update of a single agent in the (lambda, sigma, dt) form, before projection."""
    F = [a - b for a, b in zip(v, vc)]
    drift = _proj(v, vc)
    noise = _proj(v, [f * b for f, b in zip(F, dB)])
    f2 = _dot(F, F)
    dfv2 = sum((f * x) ** 2 for f, x in zip(F, v))
    out = []
    for k in range(len(v)):
        corr = f2 * v[k] + F[k] ** 2 * v[k] - 2.0 * dfv2 * v[k]
        out.append(v[k] + dt * lam * drift[k] + sigma * noise[k] - dt * sigma**2 / 2.0 * corr)
    return out


def iso_agent(v, vc, lam, sigma, dt, dB):
    """One isotropic update of a single agent, before projection."""
    d = len(v)
    F = [a - b for a, b in zip(v, vc)]
    fn = math.sqrt(_dot(F, F))
    drift = _proj(v, vc)
    noise = _proj(v, dB)
    return [v[k] + dt * lam * drift[k] + sigma * fn * noise[k]
            - dt * sigma**2 / 2.0 * (d - 1) * fn**2 * v[k] for k in range(d)]


def normalized(x):
    n = math.sqrt(_dot(x, x))
    return [t / n for t in x]
