"""Closed-form reference values, computed without the package under test."""
import numpy as np

ETA = np.diag([1.0, -1.0, -1.0, -1.0])
SIGMA = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)
G0 = np.diag([1.0, 1.0, -1.0, -1.0]).astype(complex)


def gammas():
    out = [G0]
    for s in SIGMA:
        g = np.zeros((4, 4), dtype=complex)
        g[:2, 2:], g[2:, :2] = s, -s
        out.append(g)
    return np.array(out)


def spinor(p, m, chi):
    p = np.asarray(p, dtype=float)
    e = np.sqrt(m * m + p @ p)
    chi = np.asarray(chi, dtype=complex) / np.linalg.norm(chi)
    lower = (p[0] * SIGMA[0] + p[1] * SIGMA[1] + p[2] * SIGMA[2]) @ chi / (e + m)
    return np.sqrt(e + m) * np.concatenate([chi, lower])


def boost_x(rapidity):
    c, s = np.cosh(rapidity), np.sinh(rapidity)
    m = np.eye(4)
    m[0, 0] = m[1, 1] = c
    m[0, 1] = m[1, 0] = s
    return m


def rotation_z(angle):
    m = np.eye(4)
    c, s = np.cos(angle), np.sin(angle)
    m[1, 1], m[1, 2], m[2, 1], m[2, 2] = c, -s, s, c
    return m


def straight_line(x0, p, m, t):
    """Worldline of a lone mode: ``x0 + (1, p/E) t``."""
    p = np.asarray(p, dtype=float)
    e = np.sqrt(m * m + p @ p)
    return np.asarray(x0, dtype=float) + t * np.concatenate([[1.0], p / e])


def gaussian_bohm(x0, center, p, m, sigma, t):
    """Free-packet Bohm trajectory: co-moving mean plus width-scaled offset."""
    x0, center, p = (np.asarray(a, dtype=float) for a in (x0, center, p))
    scale = np.sqrt(1.0 + (t / (2.0 * m * sigma**2)) ** 2)
    return center + p * t / m + (x0 - center) * scale


def fringe_density(x, k, m, c1, c2):
    """``psi^dag psi`` at t = 0 for ``c1 u(+k x) + c2 u(-k x)``, both spin up along z.

    The overlap ``u(+k)^dag u(-k)`` equals ``2 m`` for this pair.
    """
    e = np.sqrt(m * m + k * k)
    return 2 * e * (abs(c1) ** 2 + abs(c2) ** 2) + 4 * m * np.real(np.conj(c1) * c2 * np.exp(-2j * k * np.asarray(x)))


def circular_speed(mass, separation, coupling, softening):
    """Speed of each body of an equal-mass pair on a circular orbit."""
    r = separation / 2.0
    omega = np.sqrt(2.0 * coupling * mass / (separation**2 + softening**2) ** 1.5)
    return omega * r, omega


def dirac_velocity(terms, x):
    """``psi^dag alpha psi / psi^dag psi`` at t = 0 for one particle.

    ``terms`` is a list of ``(c, p, m, chi)``; the wave is ``sum c u(p) e^{i p.x}``.
    """
    g = gammas()
    psi = sum(c * spinor(p, m, chi) * np.exp(1j * np.dot(p, x)) for c, p, m, chi in terms)
    rho = np.vdot(psi, psi).real
    return np.array([np.vdot(psi, G0 @ g[i] @ psi).real for i in (1, 2, 3)]) / rho


def plane_wave_velocity(terms, x):
    """``Im(grad psi / psi) / m`` for ``sum c e^{i p.x}`` at t = 0 (common mass)."""
    m = terms[0][2]
    psi = sum(c * np.exp(1j * np.dot(p, x)) for c, p, _, _ in terms)
    grad = sum(1j * np.asarray(p) * c * np.exp(1j * np.dot(p, x)) for c, p, _, _ in terms)
    return (grad / psi).imag / m
