"""Kernel-weighted autoconvolution and its lifted factorization.

The forward map sends a signal u on [0, 1] to

    A[u](t) = integral k(s, t) u(s) u(t - s) ds,   t in [0, 2],

discretized with the uniform quadrature weight 1/N:

    A[u](n/N) = (1/N) * sum_j k(j/N, n/N) u(j/N) u((n-j)/N),

where the sum runs over the indices j with 0 <= j <= N and 0 <= n - j <= N.
The map factors as A = G o outer, where outer lifts u to the two-variable
function u(s) u(t) on [0, 1]^2 and G integrates a two-variable function
against the kernel along anti-diagonals:

    G[w](t) = integral k(s, t) w(s, t - s) ds.

Kernels are stored on the strip coordinates (s, t - s) in [0, 1]^2, i.e. as
the matrix S[j, m] = k(j/N, (j + m)/N).  The symmetry k(s, t) = k(t - s, t)
of a weight that cannot distinguish the two factors reads S = S^T in strip
coordinates; asymmetric inputs are symmetrized to (S + S^T) / 2 with a
warning.  The trivial kernel k == 1 is handled without storage, and all its
convolutions run through zero-padded FFTs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .signal import GridMismatchError, GridSignal, fft_convolve


@dataclass(frozen=True, eq=False)
class TwoVarFunction:
    """Samples w(j/N, m/N) of a complex function on the grid of [0, 1]^2.

    The inner product uses the uniform two-dimensional quadrature weight
    1/N^2 on all (N + 1)^2 samples.
    """

    values: np.ndarray
    resolution: int

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.complex128)
        n1 = self.resolution + 1
        if arr.shape != (n1, n1):
            raise ValueError(
                f"expected values of shape ({n1}, {n1}) for resolution "
                f"{self.resolution}, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
            raise ValueError("two-variable samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        scale = np.max(np.abs(self.values)) or 1.0
        return bool(np.max(np.abs(self.values - self.values.T)) <= tol * scale)


def inner_real_two_var(w1: TwoVarFunction, w2: TwoVarFunction) -> float:
    """Real inner product Re[(1/N^2) * sum w1 * conj(w2)] on [0, 1]^2."""
    if w1.resolution != w2.resolution:
        raise GridMismatchError(
            f"grid mismatch: N={w1.resolution} vs N={w2.resolution}"
        )
    return float(np.real(np.vdot(w2.values, w1.values)) / w1.resolution**2)


def norm_two_var(w: TwoVarFunction) -> float:
    return float(np.sqrt(np.sum(np.abs(w.values) ** 2)) / w.resolution)


# -- kernels -------------------------------------------------------------------

_SYMMETRY_WARN_TOL = 1e-12


class Kernel:
    """Integration weight k(s, t) on the strip 0 <= s <= 1, s <= t <= s + 1.

    Either trivial (k == 1 at every resolution) or sampled at one fixed
    resolution.  Sampled kernels store the strip matrix
    S[j, m] = k(j/N, (j + m)/N) and are symmetrized on construction.
    """

    def __init__(self, strip_values=None, resolution=None):
        if strip_values is None:
            if resolution is not None:
                raise ValueError("trivial kernel takes no resolution")
            self._strip = None
            self.resolution = None
            return
        if resolution is None or resolution < 1:
            raise ValueError("sampled kernel needs a resolution >= 1")
        arr = np.asarray(strip_values, dtype=np.complex128)
        n1 = resolution + 1
        if arr.shape != (n1, n1):
            raise ValueError(
                f"expected strip of shape ({n1}, {n1}) for resolution "
                f"{resolution}, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
            raise ValueError("kernel samples must be finite")
        scale = np.max(np.abs(arr)) or 1.0
        asymmetry = np.max(np.abs(arr - arr.T))
        if asymmetry > _SYMMETRY_WARN_TOL * scale:
            warnings.warn(
                "asymmetric kernel symmetrized by averaging k(s, t) with "
                f"k(t - s, t); largest adjustment {asymmetry / 2:.3e}",
                stacklevel=2,
            )
        arr = (arr + arr.T) / 2.0
        arr.setflags(write=False)
        self._strip = arr
        self.resolution = resolution

    @classmethod
    def trivial(cls) -> "Kernel":
        return cls()

    @classmethod
    def sampled(cls, strip_values, resolution: int) -> "Kernel":
        return cls(strip_values, resolution)

    @classmethod
    def from_function(cls, func, resolution: int) -> "Kernel":
        """Sample k(s, t) on the strip grid (s, t) = (j/N, (j + m)/N)."""
        idx = np.arange(resolution + 1)
        jj, mm = np.meshgrid(idx, idx, indexing="ij")
        values = np.vectorize(func)(jj / resolution, (jj + mm) / resolution)
        return cls(values, resolution)

    @property
    def is_trivial(self) -> bool:
        return self._strip is None

    def strip(self, resolution: int) -> np.ndarray:
        """Strip matrix S[j, m] = k(j/N, (j + m)/N) at the given resolution."""
        if self.is_trivial:
            return np.ones((resolution + 1, resolution + 1), dtype=np.complex128)
        if resolution != self.resolution:
            raise GridMismatchError(
                f"kernel sampled at N={self.resolution}, requested N={resolution}"
            )
        return self._strip

    def _check_resolution(self, resolution: int):
        if not self.is_trivial and resolution != self.resolution:
            raise GridMismatchError(
                f"kernel sampled at N={self.resolution}, signal has N={resolution}"
            )

    def __eq__(self, other):
        if not isinstance(other, Kernel):
            return NotImplemented
        if self.is_trivial or other.is_trivial:
            return self.is_trivial and other.is_trivial
        return self.resolution == other.resolution and np.array_equal(
            self._strip, other._strip
        )


TRIVIAL_KERNEL = Kernel.trivial()


# -- internal index helpers ----------------------------------------------------


def _antidiagonal_sums(matrix: np.ndarray) -> np.ndarray:
    """Sums of M[j, m] over j + m = n for n = 0, ..., 2N."""
    n1 = matrix.shape[0]
    idx = np.add.outer(np.arange(n1), np.arange(n1)).ravel()
    flat = matrix.ravel()
    out_len = 2 * n1 - 1
    return np.bincount(idx, weights=flat.real, minlength=out_len) + 1j * np.bincount(
        idx, weights=flat.imag, minlength=out_len
    )


def _lag_products(r_samples: np.ndarray, resolution: int) -> np.ndarray:
    """Matrix V[j, m] = r[j + m] for a signal r on [0, 2]."""
    return np.lib.stride_tricks.sliding_window_view(r_samples, resolution + 1)


def _require_unit_domain(u: GridSignal, name: str):
    if u.domain_length != 1:
        raise GridMismatchError(f"{name} must live on [0, 1], got [0, {u.domain_length}]")


def _require_double_domain(r: GridSignal, name: str):
    if r.domain_length != 2:
        raise GridMismatchError(f"{name} must live on [0, 2], got [0, {r.domain_length}]")


# -- lifted factorization -------------------------------------------------------


def outer(u: GridSignal) -> TwoVarFunction:
    """Lift u to the rank-one two-variable function u(s) u(t)."""
    _require_unit_domain(u, "outer input")
    # Mirror the upper triangle so the grid is symmetric bit-for-bit; the
    # vectorized product alone can differ across the diagonal by one ulp.
    upper = np.triu(np.outer(u.samples, u.samples))
    return TwoVarFunction(upper + np.triu(upper, 1).T, u.resolution)


def g_apply(w: TwoVarFunction, kernel: Kernel = TRIVIAL_KERNEL) -> GridSignal:
    """Kernel-weighted anti-diagonal integration G[w](t) of a lifted function."""
    kernel._check_resolution(w.resolution)
    if kernel.is_trivial:
        summed = _antidiagonal_sums(w.values)
    else:
        summed = _antidiagonal_sums(kernel.strip(w.resolution) * w.values)
    return GridSignal(summed / w.resolution, w.resolution, domain_length=2)


def g_adjoint(phi: GridSignal, kernel: Kernel = TRIVIAL_KERNEL) -> TwoVarFunction:
    """Adjoint of g_apply: W[j, m] = conj(k(j/N, (j+m)/N)) * phi((j+m)/N).

    Exact discrete adjoint: inner_real(g_apply(w), phi) equals
    inner_real_two_var(w, g_adjoint(phi)) for every w.
    """
    _require_double_domain(phi, "g_adjoint input")
    n = phi.resolution
    kernel._check_resolution(n)
    lifted = _lag_products(phi.samples, n)
    if not kernel.is_trivial:
        lifted = np.conj(kernel.strip(n)) * lifted
    return TwoVarFunction(lifted, n)


# -- forward map and derivative ---------------------------------------------------


def bilinear_apply(
    u: GridSignal, v: GridSignal, kernel: Kernel = TRIVIAL_KERNEL
) -> GridSignal:
    """Symmetric bilinear form B[u, v](n/N) = (1/N) sum_{j+m=n} S[j, m] u_j v_m.

    B[u, u] is the forward map; the factor-exchange symmetry
    B[u, v] = B[v, u] holds because the strip matrix is symmetric.
    """
    _require_unit_domain(u, "bilinear factor")
    _require_unit_domain(v, "bilinear factor")
    u._require_same_grid(v)
    n = u.resolution
    kernel._check_resolution(n)
    if kernel.is_trivial:
        summed = fft_convolve(u.samples, v.samples)
    else:
        summed = _antidiagonal_sums(
            kernel.strip(n) * np.outer(u.samples, v.samples)
        )
    return GridSignal(summed / n, n, domain_length=2)


def autoconvolve(u: GridSignal, kernel: Kernel = TRIVIAL_KERNEL) -> GridSignal:
    """Forward map A[u] = B[u, u], a signal on [0, 2]."""
    return bilinear_apply(u, u, kernel)


def derivative_apply(
    u: GridSignal, h: GridSignal, kernel: Kernel = TRIVIAL_KERNEL
) -> GridSignal:
    """Frechet derivative of the forward map at u applied to h: 2 B[u, h]."""
    return 2.0 * bilinear_apply(u, h, kernel)


def derivative_adjoint(
    u: GridSignal, r: GridSignal, kernel: Kernel = TRIVIAL_KERNEL
) -> GridSignal:
    """Adjoint of derivative_apply(u, .) in the real inner products.

    Returns q on [0, 1] with q_m = (2/N) sum_j conj(S[j, m] u_j) r_{j+m},
    so that inner_real(derivative_apply(u, h), r) = inner_real(h, q) exactly.
    """
    _require_unit_domain(u, "linearization point")
    _require_double_domain(r, "residual")
    if u.resolution != r.resolution:
        raise GridMismatchError(
            f"grid mismatch: N={u.resolution} vs N={r.resolution}"
        )
    n = u.resolution
    kernel._check_resolution(n)
    if kernel.is_trivial:
        corr = fft_convolve(np.conj(u.samples[::-1]), r.samples)
        q = 2.0 * corr[n : 2 * n + 1] / n
    else:
        weighted = np.conj(kernel.strip(n) * u.samples[:, None])
        q = 2.0 * np.sum(weighted * _lag_products(r.samples, n), axis=0) / n
    return GridSignal(q, n, domain_length=1)


# -- kernel serialization ----------------------------------------------------------


def save_kernel(path, kernel: Kernel):
    """Write a kernel as CSV: '# kind=trivial' or strip samples by (s, t) index."""
    with open(path, "w") as fh:
        for line in kernel_block_lines(kernel):
            fh.write(line + "\n")


def kernel_block_lines(kernel: Kernel):
    if kernel.is_trivial:
        yield "# kind=trivial"
        return
    n = kernel.resolution
    yield f"# N={n} kind=sampled"
    yield "s_index,t_index,re,im"
    strip = kernel.strip(n)
    for j in range(n + 1):
        for m in range(n + 1):
            z = strip[j, m]
            yield f"{j},{j + m},{float(z.real)!r},{float(z.imag)!r}"


def load_kernel(path) -> Kernel:
    """Read a kernel written by save_kernel (bit-exact round trip)."""
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh]
    return parse_kernel_block(lines)


def parse_kernel_block(lines) -> Kernel:
    lines = [line for line in lines if line.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("kernel file must start with a '# kind=...' header")
    header = dict(item.split("=") for item in lines[0][1:].split())
    if header.get("kind") == "trivial":
        return Kernel.trivial()
    if header.get("kind") != "sampled":
        raise ValueError(f"unknown kernel kind {header.get('kind')!r}")
    n = int(header["N"])
    if len(lines) < 2 or lines[1].strip() != "s_index,t_index,re,im":
        raise ValueError("sampled kernel needs header 's_index,t_index,re,im'")
    strip = np.zeros((n + 1, n + 1), dtype=np.complex128)
    for row in lines[2:]:
        j_str, t_str, re_str, im_str = row.strip().split(",")
        j, t_idx = int(j_str), int(t_str)
        if not (0 <= j <= n and j <= t_idx <= j + n):
            raise ValueError(f"kernel sample ({j}, {t_idx}) outside the strip")
        strip[j, t_idx - j] = float(re_str) + 1j * float(im_str)
    return Kernel.sampled(strip, n)
