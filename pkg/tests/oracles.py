"""Frozen reference values, computed independently of the package.

Fisher decay rates: root c(c - sqrt(c^2 - 4b)) / 2 of z^2/c^2 - z + b = 0,
evaluated in 30-digit arithmetic.  Chemostat roots: 30-digit findroot on
the scalar u-component characteristic equation
d2 eps^2 z^2 - z - D + exp(-(D + z) tau) F(S0) = 0 (eps = 0 for lambda0).
"""
import math

FISHER_DECAY = {
    3.0: 1.1458980337503155,
    4.0: 1.0717967697244908,
    6.0: 1.0294372515228594,
    10.0: 1.0102051443364380,
    12.0: 1.0070426028046075,
    24.0: 1.0017421655664475,
}

CHEMOSTAT = {
    "D": 1.0, "S0": 1.0, "tau": 0.2, "m": 4.0, "a": 1.0,
    "lambda0": 0.48583875336569273,
    # eigenvector (s, u) with unit max norm: u / s = (lambda0 + D) / F(S0)
    "v": (1.0, 0.74291937668284637),
    "S_bar": 0.43957531511527231,
    "u_bar": 0.45883692429916378,
    "s_bar": 0.56042468488472769,
    "lambda_eps": {10.0: 0.48767224177831184, 15.0: 0.48665020611338074, 20.0: 0.48629452486076386},
}


def fisher_decay(c, b=1.0):
    return c * (c - math.sqrt(c * c - 4 * b)) / 2


def logistic(t):
    return 1.0 / (1.0 + math.exp(-t))
