"""Complex-valued signals sampled on uniform grids over [0, 1] or [0, 2].

A signal of resolution N on [0, L] holds the L*N + 1 samples u(j/N),
j = 0, ..., L*N.  All inner products and norms use the uniform quadrature
weight 1/N on every sample, so

    <u, v> = (1/N) * sum_j u(j/N) * conj(v(j/N)),

and the real inner product takes the real part of the same sum.  The same
weight is applied at both endpoints; no trapezoidal halving is performed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


class GridMismatchError(ValueError):
    """Raised when two grid quantities with incompatible grids are combined."""


def _as_complex_samples(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim != 1:
        raise ValueError(f"signal samples must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
        raise ValueError("signal samples must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class GridSignal:
    """Samples of a complex signal on the uniform grid j/N over [0, domain_length].

    Parameters
    ----------
    samples : array_like of complex
        The domain_length * resolution + 1 grid samples.
    resolution : int
        Grid resolution N >= 1 (spacing 1/N).
    domain_length : int
        Length of the domain, 1 or 2.
    """

    samples: np.ndarray
    resolution: int
    domain_length: int = 1

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError(f"resolution must be >= 1, got {self.resolution}")
        if self.domain_length not in (1, 2):
            raise ValueError(f"domain_length must be 1 or 2, got {self.domain_length}")
        arr = _as_complex_samples(self.samples)
        expected = self.domain_length * self.resolution + 1
        if arr.size != expected:
            raise ValueError(
                f"expected {expected} samples for resolution {self.resolution} on "
                f"[0, {self.domain_length}], got {arr.size}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    # -- grid helpers ------------------------------------------------------

    def grid(self) -> np.ndarray:
        """Grid points j/N as a float array."""
        return np.arange(self.samples.size) / self.resolution

    def same_grid(self, other: "GridSignal") -> bool:
        return (
            self.resolution == other.resolution
            and self.domain_length == other.domain_length
        )

    def _require_same_grid(self, other: "GridSignal"):
        if not self.same_grid(other):
            raise GridMismatchError(
                f"grid mismatch: (N={self.resolution}, L={self.domain_length}) vs "
                f"(N={other.resolution}, L={other.domain_length})"
            )

    def with_samples(self, samples) -> "GridSignal":
        return GridSignal(samples, self.resolution, self.domain_length)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other: "GridSignal") -> "GridSignal":
        self._require_same_grid(other)
        return self.with_samples(self.samples + other.samples)

    def __sub__(self, other: "GridSignal") -> "GridSignal":
        self._require_same_grid(other)
        return self.with_samples(self.samples - other.samples)

    def __mul__(self, scalar) -> "GridSignal":
        return self.with_samples(self.samples * complex(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "GridSignal":
        return self.with_samples(-self.samples)


def zeros(resolution: int, domain_length: int = 1) -> GridSignal:
    return GridSignal(
        np.zeros(domain_length * resolution + 1, dtype=np.complex128),
        resolution,
        domain_length,
    )


def constant(value, resolution: int, domain_length: int = 1) -> GridSignal:
    return GridSignal(
        np.full(domain_length * resolution + 1, complex(value), dtype=np.complex128),
        resolution,
        domain_length,
    )


def from_function(func, resolution: int, domain_length: int = 1) -> GridSignal:
    """Sample a callable t -> complex on the grid."""
    t = np.arange(domain_length * resolution + 1) / resolution
    return GridSignal(np.asarray(func(t), dtype=np.complex128), resolution, domain_length)


# -- inner products and norms ------------------------------------------------


def inner_complex(u: GridSignal, v: GridSignal) -> complex:
    """Sesquilinear inner product (1/N) * sum u_j * conj(v_j)."""
    u._require_same_grid(v)
    return complex(np.vdot(v.samples, u.samples) / u.resolution)


def inner_real(u: GridSignal, v: GridSignal) -> float:
    """Real inner product Re[(1/N) * sum u_j * conj(v_j)].

    This is the inner product of the underlying real Hilbert space in which
    the spectral theory of the conjugating operators lives.
    """
    u._require_same_grid(v)
    return float(np.real(np.vdot(v.samples, u.samples)) / u.resolution)


def norm(u: GridSignal) -> float:
    """Quadrature norm sqrt((1/N) * sum |u_j|^2)."""
    return float(np.sqrt(np.sum(np.abs(u.samples) ** 2) / u.resolution))


# -- noise --------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    """Absolute noise level and generator seed for a perturbation.

    The perturbation is circular complex Gaussian, drawn from
    default_rng(seed) and rescaled so its quadrature norm equals `level`
    exactly.
    """

    level: float
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.level) or self.level < 0:
            raise ValueError(f"noise level must be finite and >= 0, got {self.level}")


def add_noise(g: GridSignal, spec: NoiseSpec) -> GridSignal:
    """Return g plus a complex Gaussian perturbation of exact norm spec.level.

    A zero level returns g unchanged.  The direction is drawn from
    numpy.random.default_rng(spec.seed); the draw is repeated in the
    (measure-zero) event of an exactly zero sample.
    """
    if spec.level == 0.0:
        return g
    rng = np.random.default_rng(spec.seed)
    n = g.samples.size
    while True:
        draw = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        scale = np.sqrt(np.sum(np.abs(draw) ** 2) / g.resolution)
        if scale > 0.0:
            break
    return g.with_samples(g.samples + draw * (spec.level / scale))


def derive_seed(master: int, *parts) -> int:
    """Stable 64-bit sub-seed from a master seed and a label path.

    Hash-based, so extending a sweep with more levels or restarts never
    reshuffles the seeds of existing cells.
    """
    label = ":".join([str(int(master)), *map(str, parts)])
    digest = hashlib.sha256(label.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little")


# -- FFT convolution -----------------------------------------------------------


def fft_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full linear convolution of two complex 1-d arrays via zero-padded FFT.

    The transform length is the next power of two at or above
    len(a) + len(b) - 1; the output has exactly that logical length
    len(a) + len(b) - 1.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("fft_convolve expects one-dimensional arrays")
    out_len = a.size + b.size - 1
    fft_len = 1 << int(np.ceil(np.log2(out_len)))
    conv = np.fft.ifft(np.fft.fft(a, fft_len) * np.fft.fft(b, fft_len))
    return conv[:out_len]


# -- CSV serialization ---------------------------------------------------------


def _format_complex_rows(samples: np.ndarray):
    for idx, z in enumerate(samples):
        yield f"{idx},{float(z.real)!r},{float(z.imag)!r}"


def signal_block_lines(u: GridSignal):
    """CSV body lines (header plus rows) for a signal, bit-exact via repr."""
    yield "index,re,im"
    yield from _format_complex_rows(u.samples)


def parse_signal_block(lines, resolution: int, domain_length: int) -> GridSignal:
    """Inverse of signal_block_lines for a known grid."""
    lines = list(lines)
    if not lines or lines[0].strip() != "index,re,im":
        raise ValueError("signal block must start with header 'index,re,im'")
    count = domain_length * resolution + 1
    rows = lines[1:]
    if len(rows) != count:
        raise ValueError(f"expected {count} sample rows, got {len(rows)}")
    samples = np.empty(count, dtype=np.complex128)
    for row in rows:
        idx_str, re_str, im_str = row.strip().split(",")
        samples[int(idx_str)] = float(re_str) + 1j * float(im_str)
    return GridSignal(samples, resolution, domain_length)


def save_signal(path, u: GridSignal):
    """Write a signal as CSV with a '# N=<int> L=<int>' comment header."""
    with open(path, "w") as fh:
        fh.write(f"# N={u.resolution} L={u.domain_length}\n")
        for line in signal_block_lines(u):
            fh.write(line + "\n")


def load_signal(path) -> GridSignal:
    """Read a signal written by save_signal (bit-exact round trip)."""
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing '# N=... L=...' header")
    header = dict(item.split("=") for item in lines[0][1:].split())
    return parse_signal_block(lines[1:], int(header["N"]), int(header["L"]))
