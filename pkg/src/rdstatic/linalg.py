"""Periodic grid operators and the cyclic tridiagonal solver.

Row ``i`` of a cyclic tridiagonal system reads::

    lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1] = rhs[i]

with indices taken modulo ``M``. Systems are solved by the Thomas
algorithm on a corner-corrected tridiagonal matrix plus a Sherman-Morrison
rank-one update. All routines accept a leading batch axis.
"""

import numpy as np
from numba import njit

__all__ = [
    "solve_cyclic_tridiagonal",
    "laplacian",
    "forward_difference",
    "spectral_second_derivative_matrix",
    "spectral_derivative",
    "fourier_shift",
    "fourier_resample",
]


@njit(cache=True, nogil=True)
def _thomas(a, b, c, d, out, cp, dp):
    m = b.shape[0]
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, m):
        den = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / den
        dp[i] = (d[i] - a[i] * dp[i - 1]) / den
    out[m - 1] = dp[m - 1]
    for i in range(m - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]


@njit(cache=True, nogil=True)
def _cyclic_batch(lower, diag, upper, rhs, out):
    nb, m = diag.shape
    bb = np.empty(m)
    u = np.zeros(m)
    y = np.empty(m)
    z = np.empty(m)
    cp = np.empty(m)
    dp = np.empty(m)
    for k in range(nb):
        alpha = upper[k, m - 1]  # A[m-1, 0]
        beta = lower[k, 0]  # A[0, m-1]
        gamma = -diag[k, 0]
        for i in range(m):
            bb[i] = diag[k, i]
        bb[0] = diag[k, 0] - gamma
        bb[m - 1] = diag[k, m - 1] - alpha * beta / gamma
        _thomas(lower[k], bb, upper[k], rhs[k], y, cp, dp)
        u[0] = gamma
        u[m - 1] = alpha
        _thomas(lower[k], bb, upper[k], u, z, cp, dp)
        u[0] = 0.0
        u[m - 1] = 0.0
        fact = (y[0] + beta * y[m - 1] / gamma) / (1.0 + z[0] + beta * z[m - 1] / gamma)
        for i in range(m):
            out[k, i] = y[i] - fact * z[i]


def solve_cyclic_tridiagonal(lower, diag, upper, rhs):
    """Solve one or many cyclic tridiagonal systems.

    Parameters
    ----------
    lower, diag, upper, rhs : array_like, shape (..., M)
        Sub-diagonal (``lower[i]`` multiplies ``x[i-1]``; ``lower[0]`` is the
        top-right corner), diagonal, super-diagonal (``upper[M-1]`` is the
        bottom-left corner) and right-hand side. Coefficient arrays broadcast
        against ``rhs``.

    Returns
    -------
    ndarray, shape of ``rhs``

    Notes
    -----
    No pivoting is performed; the systems met in this package are
    diagonally dominant. Requires ``M >= 3``.
    """
    rhs = np.asarray(rhs, dtype=float)
    shape = rhs.shape
    m = shape[-1]
    if m < 3:
        raise ValueError("cyclic tridiagonal solve needs at least 3 unknowns")
    lo, di, up, r = np.broadcast_arrays(
        np.asarray(lower, float), np.asarray(diag, float), np.asarray(upper, float), rhs
    )
    lo = np.ascontiguousarray(lo.reshape(-1, m))
    di = np.ascontiguousarray(di.reshape(-1, m))
    up = np.ascontiguousarray(up.reshape(-1, m))
    r = np.ascontiguousarray(r.reshape(-1, m))
    out = np.empty_like(r)
    _cyclic_batch(lo, di, up, r, out)
    return out.reshape(shape)


def laplacian(u, h):
    """Periodic second difference ``(u[j+1] - 2u[j] + u[j-1]) / h**2`` along the last axis."""
    u = np.asarray(u, dtype=float)
    return (np.roll(u, -1, axis=-1) - 2.0 * u + np.roll(u, 1, axis=-1)) / (h * h)


def forward_difference(u, h):
    """Periodic forward difference ``(u[j+1] - u[j]) / h`` along the last axis."""
    u = np.asarray(u, dtype=float)
    return (np.roll(u, -1, axis=-1) - u) / h


def _wavenumbers(m):
    return np.fft.fftfreq(m, d=1.0 / m)


def spectral_second_derivative_matrix(m):
    """Dense symmetric Fourier second-derivative matrix on ``m`` points of the unit torus.

    For even ``m`` the Nyquist mode is kept with symbol ``-(pi m)**2``, which
    keeps the matrix symmetric and exact on every grid-resolvable cosine.
    """
    k = _wavenumbers(m)
    symbol = -((2.0 * np.pi * k) ** 2)
    eye = np.eye(m)
    d2 = np.real(np.fft.ifft(symbol[:, None] * np.fft.fft(eye, axis=0), axis=0))
    return 0.5 * (d2 + d2.T)


def spectral_derivative(u, order=1):
    """Fourier derivative of a periodic sample vector on the unit torus."""
    u = np.asarray(u, dtype=float)
    m = u.shape[-1]
    k = _wavenumbers(m)
    sym = (2j * np.pi * k) ** order
    if order % 2 == 1 and m % 2 == 0:
        sym[m // 2] = 0.0
    return np.real(np.fft.ifft(sym * np.fft.fft(u, axis=-1), axis=-1))


def fourier_shift(u, shift):
    """Return samples of ``theta -> u(theta + shift)`` by trigonometric interpolation."""
    u = np.asarray(u, dtype=float)
    m = u.shape[-1]
    k = _wavenumbers(m)
    phase = np.exp(2j * np.pi * k * shift)
    if m % 2 == 0:
        phase[m // 2] = np.cos(np.pi * m * shift)
    return np.real(np.fft.ifft(phase * np.fft.fft(u, axis=-1), axis=-1))


def fourier_resample(u, m_new):
    """Resample a periodic sample vector onto ``m_new`` equispaced points."""
    u = np.asarray(u, dtype=float)
    m = u.shape[-1]
    if m_new == m:
        return u.copy()
    coeffs = np.fft.rfft(u, axis=-1) / m
    n_keep = min(coeffs.shape[-1], m_new // 2 + 1)
    new = np.zeros(u.shape[:-1] + (m_new // 2 + 1,), dtype=complex)
    new[..., :n_keep] = coeffs[..., :n_keep]
    if m % 2 == 0 and n_keep == m // 2 + 1 and m_new > m:
        new[..., m // 2] *= 0.5
    if m_new % 2 == 0 and m_new < m:
        new[..., m_new // 2] *= 2.0
    return np.fft.irfft(new * m_new, n=m_new, axis=-1)
