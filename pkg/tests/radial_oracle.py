"""Closed-form radial solution family on the unit disk.

For weight r^(2 alpha) centered at the origin (alpha = 0: constant weight)
with beta = 1 + alpha, the one-parameter family

    u_c(r) = log(8 beta^2 c / mu) - 2 log(1 + c r^(2 beta)),  c > -1

solves the Gelfand equation with

    mu(c)     = 8 beta^2 c / (1 + c)^2
    lambda(c) = 8 pi beta c / (1 + c)

The fold sits at c = 1: mu* = 2 beta^2, lambda* = 4 pi beta.  Negative c in
(-1, 0) covers mu < 0.  Everything the tests freeze comes from these few
lines, independently of the package under test.
"""

import math


def mu_of_c(c, beta=1.0):
    return 8.0 * beta * beta * c / (1.0 + c) ** 2


def lam_of_c(c, beta=1.0):
    return 8.0 * math.pi * beta * c / (1.0 + c)


def c_of_lam(lam, beta=1.0):
    return lam / (8.0 * math.pi * beta - lam)


def u_center(c):
    """u(0) = 2 log(1 + c)."""
    return 2.0 * math.log(1.0 + c)


def grad_sq(c, beta=1.0):
    """int |grad u|^2 over the disk."""
    return 16.0 * math.pi * beta * (math.log(1.0 + c) - c / (1.0 + c))


def energy_of_c(c, beta=1.0):
    """E = int |grad u|^2 / (2 lambda^2), the mean-field energy."""
    lam = lam_of_c(c, beta)
    return grad_sq(c, beta) / (2.0 * lam * lam)


def energy_of_lam(lam, beta=1.0):
    return energy_of_c(c_of_lam(lam, beta), beta)


E0 = 1.0 / (16.0 * math.pi)          # lambda -> 0 limit of the energy
PSI0_CENTER = 1.0 / (4.0 * math.pi)  # psi(0) at lambda = 0, h constant
FOLD_MU = 2.0                        # beta = 1
FOLD_LAM = 4.0 * math.pi

# Bessel roots for the constant-weight disk spectra at lambda = 0
J0_1 = 2.404825557695773       # first zero of J0: principal Dirichlet mode
J1P_1 = 1.8411837813406593     # first zero of J1': Neumann-type mean-free mode
J1_1 = 3.831705970207512       # first zero of J1

TAU1_DISK = math.pi * J0_1 ** 2       # pi j_{0,1}^2
POINCARE_DISK = math.pi * J1P_1 ** 2  # pi j'_{1,1}^2


def collar_energy(delta):
    """E(rho_delta) for the uniform density on the annulus 1-delta < r < 1."""
    a = 1.0 - delta
    i_val = 0.125 - a * a / 2.0 + 3.0 * a ** 4 / 8.0 - (a ** 4 / 2.0) * math.log(a)
    return i_val / (2.0 * math.pi * (1.0 - a * a) ** 2)
