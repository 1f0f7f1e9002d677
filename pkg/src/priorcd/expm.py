"""Matrix exponential by scaling and squaring with Padé approximants.

Follows Higham (2005), "The scaling and squaring method for the matrix
exponential revisited": pick the lowest Padé degree in {3, 5, 7, 9, 13}
whose 1-norm bound ``theta_m`` covers the input; otherwise scale by ``2**-s``
so the degree-13 approximant applies, then square ``s`` times.
"""
import math

import numpy as np

__all__ = ["MatrixExponentialError", "expm"]


class MatrixExponentialError(ArithmeticError):
    """The exponential overflowed or the input was not finite."""


_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}

_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}


def _pade_low(a, m):
    # U holds the odd terms, V the even ones; powers of A^2 built incrementally.
    b = _PADE[m]
    ident = np.eye(a.shape[0])
    a2 = a @ a
    u = b[1] * ident
    v = b[0] * ident
    power = ident
    for k in range(1, m // 2 + 1):
        power = power @ a2
        u = u + b[2 * k + 1] * power
        v = v + b[2 * k] * power
    return a @ u, v


def _pade13(a):
    b = _PADE[13]
    ident = np.eye(a.shape[0])
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    return u, v


def expm(m):
    """Return ``exp(m)`` for a square real matrix.

    Raises :class:`MatrixExponentialError` when the input is not finite or
    the result overflows.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise MatrixExponentialError("matrix has non-finite entries")
    if a.shape[0] == 0:
        return a.copy()

    norm = np.linalg.norm(a, 1)
    squarings = 0
    for degree in (3, 5, 7, 9):
        if norm <= _THETA[degree]:
            u, v = _pade_low(a, degree)
            break
    else:
        if norm > _THETA[13]:
            squarings = max(0, int(math.ceil(math.log2(norm / _THETA[13]))))
            a = a / 2.0 ** squarings
        u, v = _pade13(a)

    with np.errstate(over="ignore", invalid="ignore"):
        result = np.linalg.solve(v - u, v + u)
        for _ in range(squarings):
            result = result @ result
    if not np.all(np.isfinite(result)):
        raise MatrixExponentialError(
            f"matrix exponential overflowed (1-norm {norm:.3g}); rescale the input")
    return result
