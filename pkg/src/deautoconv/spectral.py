"""Spectral analysis of the conjugating operator attached to a source element.

For a signal phi on [0, 2] and a kernel k, the operator

    Phi[u](t) = integral conj(k(s, s + t)) phi(s + t) conj(u(s)) ds

is R-linear (it conjugates its argument), self-adjoint with respect to the
real inner product, and compact.  Its spectrum is symmetric: if
Phi[v] = lam * v then Phi[i v] = -lam * (i v), so eigenvalues come in pairs
+/- lam and it suffices to track the positive ones.  Discretely,

    Phi[u](n/N) = (1/N) * sum_k conj(k(k/N, (k+n)/N)) phi((k+n)/N) conj(u(k/N)).

Rescaling phi by the spectral radius lam1 produces an operator of norm one
whose leading eigenvector u (normalized, eigenvalue +1) satisfies the
source condition Phi[u] = u; the certificate stores the rescaled source
element, the eigenvector, its autoconvolution image, and the two leading
eigenvalues.  These are the ingredients for the convergence-rate bounds of
the regularized problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import forward
from .forward import Kernel, TRIVIAL_KERNEL
from .signal import GridSignal, fft_convolve, inner_real, norm

DENSE_ORACLE_CAP = 512


class SourceConstructionError(RuntimeError):
    """Raised when a source certificate cannot be constructed or validated."""


class PhiOperator:
    """The conjugating operator u -> Phi[u] for a fixed phi on [0, 2] and kernel.

    Instances cache the transformed source element, so repeated applications
    (power iteration, Bregman distances) cost two FFTs for the trivial kernel
    and one dense matrix product for sampled kernels.
    """

    def __init__(self, phi: GridSignal, kernel: Kernel = TRIVIAL_KERNEL):
        if phi.domain_length != 2:
            raise ValueError("source element must live on [0, 2]")
        kernel._check_resolution(phi.resolution)
        self.phi = phi
        self.kernel = kernel
        self.resolution = phi.resolution
        n = self.resolution
        if kernel.is_trivial:
            out_len = 3 * n + 1
            self._fft_len = 1 << int(np.ceil(np.log2(out_len)))
            self._phi_fft = np.fft.fft(phi.samples, self._fft_len)
            self._matrix = None
        else:
            lag = forward._lag_products(phi.samples, n)
            self._matrix = (np.conj(kernel.strip(n)) * lag).T / n
            self._phi_fft = None

    def apply(self, u: GridSignal) -> GridSignal:
        n = self.resolution
        if u.domain_length != 1 or u.resolution != n:
            raise ValueError(
                f"operator at N={n} on [0, 1] cannot act on "
                f"(N={u.resolution}, L={u.domain_length})"
            )
        if self._matrix is not None:
            out = self._matrix @ np.conj(u.samples)
        else:
            spec = np.fft.fft(np.conj(u.samples[::-1]), self._fft_len)
            corr = np.fft.ifft(spec * self._phi_fft)
            out = corr[n : 2 * n + 1] / n
        return GridSignal(out, n, domain_length=1)

    def rescaled(self, factor: float) -> "PhiOperator":
        return PhiOperator(self.phi * factor, self.kernel)


def phi_apply(op: PhiOperator, u: GridSignal) -> GridSignal:
    """Apply the conjugating operator; R-linear, conjugates its argument."""
    return op.apply(u)


# -- dense oracle ---------------------------------------------------------------


def to_dense_real(op: PhiOperator, cap: int = DENSE_ORACLE_CAP) -> np.ndarray:
    """Dense symmetric matrix of Phi on the stacked real coordinates.

    A signal u = x + i y maps to the stacked vector (x, y) of length
    2 (N + 1); the returned matrix M satisfies
    M (x, y) = (Re Phi[u], Im Phi[u]) and is symmetric because the
    quadrature weight is uniform.  Refuses resolutions above `cap`: the
    matrix takes 4 (N + 1)^2 floats, which is the point where the dense
    oracle stops being a cross-check and starts being the bottleneck.
    """
    n = op.resolution
    if n > cap:
        raise ValueError(
            f"dense oracle limited to N <= {cap}, got N={n}; "
            "use phi_apply / power_iterate at this resolution"
        )
    lag = forward._lag_products(op.phi.samples, n)
    omega = np.conj(op.kernel.strip(n)) * lag
    a = omega.T / n
    ar, ai = a.real, a.imag
    return np.block([[ar, ai], [ai, -ar]])


def real_stack(u: GridSignal) -> np.ndarray:
    """Stacked real coordinates (Re u, Im u) used by the dense oracle."""
    return np.concatenate([u.samples.real, u.samples.imag])


def from_real_stack(z: np.ndarray, resolution: int, domain_length: int = 1) -> GridSignal:
    half = z.size // 2
    return GridSignal(z[:half] + 1j * z[half:], resolution, domain_length)


def dense_eigenvalues(op: PhiOperator, cap: int = DENSE_ORACLE_CAP) -> np.ndarray:
    """All eigenvalues of the dense oracle, ascending (symmetric about 0)."""
    return np.linalg.eigvalsh(to_dense_real(op, cap))


# -- power iteration --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PowerIterationResult:
    value: float
    vector: GridSignal
    converged: bool
    iterations: int
    residual: float


def _random_signal(rng: np.random.Generator, resolution: int) -> GridSignal:
    draw = rng.standard_normal(resolution + 1) + 1j * rng.standard_normal(resolution + 1)
    return GridSignal(draw, resolution, domain_length=1)


def power_iterate(
    op: PhiOperator,
    seed: int = 0,
    max_iter: int = 10000,
    tol: float = 1e-12,
    deflate=None,
) -> PowerIterationResult:
    """Dominant eigenpair of Phi o Phi, reported as (lam1, v1) with lam1 >= 0.

    Phi o Phi is C-linear, self-adjoint and positive semi-definite, so plain
    power iteration applies; lam1 is the square root of its Rayleigh
    quotient.  Convergence means the relative eigen-residual
    ||Phi[Phi[v]] - lam1^2 v|| <= tol * lam1^2 for the unit vector v.  A
    non-converged run is reported through the flag, not an exception.

    `deflate` optionally projects each iterate onto an invariant subspace
    (used for the second eigenvalue); it must be idempotent.
    """
    if norm(op.phi) == 0.0:
        raise ValueError("source element is zero; the operator has no spectrum")
    rng = np.random.default_rng(seed)
    n = op.resolution

    def prepared(vec: GridSignal):
        return deflate(vec) if deflate is not None else vec

    v = prepared(_random_signal(rng, n))
    for _ in range(8):
        if norm(v) > 0.0:
            break
        v = prepared(_random_signal(rng, n))
    scale = norm(v)
    if scale == 0.0:
        return PowerIterationResult(0.0, v, True, 0, 0.0)
    v = v * (1.0 / scale)

    value = 0.0
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        w = prepared(op.apply(op.apply(v)))
        rayleigh = inner_real(w, v)
        residual = norm(w - rayleigh * v)
        w_norm = norm(w)
        if w_norm <= 1e-14 * max(rayleigh, 1.0) or rayleigh <= 0.0:
            # The iterate was annihilated: the operator vanishes on the
            # current (possibly deflated) subspace.
            return PowerIterationResult(0.0, v, True, iteration, residual)
        value = float(np.sqrt(rayleigh))
        if residual <= tol * rayleigh:
            return PowerIterationResult(value, v, True, iteration, residual)
        v = w * (1.0 / w_norm)
    return PowerIterationResult(value, v, False, max_iter, residual)


def project_E1(v: GridSignal, op: PhiOperator) -> GridSignal:
    """Orthogonal projection onto the fixed space E1 = ker(Phi - Id).

    Valid for the rescaled operator of norm one and v in the span of the
    leading eigenspaces: P = (Id + Phi) / 2.
    """
    return 0.5 * (v + op.apply(v))


def project_iE1(v: GridSignal, op: PhiOperator) -> GridSignal:
    """Orthogonal projection onto i E1 = ker(Phi + Id) of the rescaled operator."""
    return 0.5 * (v - op.apply(v))


def second_eigenvalue(
    op: PhiOperator,
    v1: GridSignal,
    seed: int = 0,
    max_iter: int = 10000,
    tol: float = 1e-12,
) -> PowerIterationResult:
    """Largest positive eigenvalue of Phi below lam1, by deflated power iteration.

    The plane span{v1, i v1} pairs the eigenvalues +/- lam1 and is invariant
    under Phi o Phi; projecting it out of every iterate leaves the dominant
    remaining eigenvalue lam2^2.
    """
    scale = norm(v1)
    if scale == 0.0:
        raise ValueError("deflation vector must be nonzero")
    e1 = v1 * (1.0 / scale)
    e2 = 1j * e1

    def deflate(w: GridSignal) -> GridSignal:
        return w - inner_real(w, e1) * e1 - inner_real(w, e2) * e2

    return power_iterate(op, seed=seed, max_iter=max_iter, tol=tol, deflate=deflate)


# -- source certificates ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SourceCertificate:
    """A source element together with the true solution it certifies.

    phi_rescaled : source element divided by the spectral radius lam1, so the
        attached operator has norm one.
    lambda1 : spectral radius of the original operator (the rescaling factor).
    lambda2 : second-largest positive eigenvalue of the rescaled operator,
        strictly below one; 1 - lambda2 is the constant in the Bregman
        lower bound.
    u_true : unit-norm solution satisfying Phi[u_true] = u_true for the
        rescaled operator.
    g_true : exact data, the autoconvolution image of u_true.
    kernel : integration weight shared by all of the above.
    """

    phi_rescaled: GridSignal
    lambda1: float
    lambda2: float
    u_true: GridSignal
    g_true: GridSignal
    kernel: Kernel = TRIVIAL_KERNEL

    def __post_init__(self):
        if self.phi_rescaled.domain_length != 2 or self.g_true.domain_length != 2:
            raise ValueError("phi_rescaled and g_true must live on [0, 2]")
        if self.u_true.domain_length != 1:
            raise ValueError("u_true must live on [0, 1]")
        n = self.phi_rescaled.resolution
        if self.u_true.resolution != n or self.g_true.resolution != n:
            raise ValueError("certificate parts must share one resolution")
        if not (self.lambda1 > 0.0):
            raise ValueError("lambda1 must be positive")
        if not (0.0 <= self.lambda2 < 1.0):
            raise ValueError("lambda2 must lie in [0, 1)")

    @property
    def resolution(self) -> int:
        return self.phi_rescaled.resolution

    def operator(self) -> PhiOperator:
        """Operator of the rescaled source element (norm one); cached."""
        cached = self.__dict__.get("_operator")
        if cached is None:
            cached = PhiOperator(self.phi_rescaled, self.kernel)
            object.__setattr__(self, "_operator", cached)
        return cached


_EIGEN_RESIDUAL_TOL = 1e-8
_NORM_ONE_TOL = 1e-6
_SPECTRAL_GAP_TOL = 1e-8
_IMAGE_TOL = 1e-12


def validate_certificate(cert: SourceCertificate, recheck_norm: bool = True):
    """Re-derive the certificate invariants; raise SourceConstructionError on failure.

    Checks, in order: u_true is a unit fixed point of the rescaled operator
    (residual below 1e-8 relative), the rescaled operator norm is one to
    1e-6 (fresh power iteration when recheck_norm), the spectral gap
    1 - lambda2 exceeds 1e-8, and g_true is the autoconvolution image of
    u_true to 1e-12 relative.
    """
    op = cert.operator()
    u_norm = norm(cert.u_true)
    if abs(u_norm - 1.0) > 1e-10:
        raise SourceConstructionError(f"u_true is not unit-norm: ||u|| = {u_norm!r}")
    fixed_residual = norm(op.apply(cert.u_true) - cert.u_true)
    if fixed_residual > _EIGEN_RESIDUAL_TOL * u_norm:
        raise SourceConstructionError(
            f"u_true fails the fixed-point residual: {fixed_residual:.3e} > "
            f"{_EIGEN_RESIDUAL_TOL:.0e}"
        )
    if recheck_norm:
        check = power_iterate(op, seed=101)
        if not check.converged or abs(check.value - 1.0) > _NORM_ONE_TOL:
            raise SourceConstructionError(
                f"rescaled operator norm {check.value!r} not within "
                f"{_NORM_ONE_TOL:.0e} of one (converged={check.converged})"
            )
    if cert.lambda2 >= 1.0 - _SPECTRAL_GAP_TOL:
        raise SourceConstructionError(
            f"spectral gap too small: lambda2 = {cert.lambda2!r}"
        )
    image_residual = norm(forward.autoconvolve(cert.u_true, cert.kernel) - cert.g_true)
    if image_residual > _IMAGE_TOL * max(norm(cert.g_true), 1.0):
        raise SourceConstructionError(
            f"g_true is not the autoconvolution image: residual {image_residual:.3e}"
        )


def _canonical_sign(u: GridSignal) -> float:
    """Resolve the +/- freedom of a fixed-space representative.

    Both u and -u are fixed points; pick the sign making the dominant
    component of the largest sample positive, so equal inputs give equal
    certificates regardless of which representative power iteration found.
    """
    z = u.samples[int(np.argmax(np.abs(u.samples)))]
    lead = z.real if abs(z.real) >= abs(z.imag) else z.imag
    return 1.0 if lead >= 0.0 else -1.0


def construct_source(
    phi: GridSignal,
    kernel: Kernel = TRIVIAL_KERNEL,
    seed: int = 0,
    max_iter: int = 10000,
    tol: float = 1e-12,
) -> SourceCertificate:
    """Build a source certificate from a raw source element.

    Runs power iteration for the spectral radius lam1, rescales phi by
    1/lam1, projects the dominant eigenvector onto the fixed space E1 (or
    rotates it out of i E1 when the E1 component vanishes), normalizes it to
    the unit solution u_true, and estimates the second eigenvalue by
    deflation.  Raises SourceConstructionError when power iteration fails,
    the operator is degenerate, or any certificate invariant fails.
    """
    op = PhiOperator(phi, kernel)
    leading = power_iterate(op, seed=seed, max_iter=max_iter, tol=tol)
    if not leading.converged:
        raise SourceConstructionError(
            f"power iteration did not converge in {max_iter} iterations "
            f"(residual {leading.residual:.3e}); the spectral gap may be too small"
        )
    lam1 = leading.value
    if lam1 <= 0.0:
        raise SourceConstructionError("source element induces the zero operator")

    rescaled_op = op.rescaled(1.0 / lam1)
    candidate = project_E1(leading.vector, rescaled_op)
    if norm(candidate) <= 1e-6 * norm(leading.vector):
        # The eigenvector landed in i E1 (eigenvalue -1 branch); rotate back.
        candidate = project_iE1(leading.vector, rescaled_op) * (-1j)
    cand_norm = norm(candidate)
    if cand_norm <= 1e-6 * norm(leading.vector):
        raise SourceConstructionError(
            "dominant eigenvector has no component in the fixed space"
        )
    u_true = candidate * (_canonical_sign(candidate) / cand_norm)

    second = second_eigenvalue(
        rescaled_op, u_true, seed=seed + 1, max_iter=max_iter, tol=tol
    )
    if not second.converged:
        raise SourceConstructionError(
            f"deflated power iteration did not converge in {max_iter} iterations "
            f"(residual {second.residual:.3e})"
        )

    cert = SourceCertificate(
        phi_rescaled=phi * (1.0 / lam1),
        lambda1=lam1,
        lambda2=second.value,
        u_true=u_true,
        g_true=forward.autoconvolve(u_true, kernel),
        kernel=kernel,
    )
    validate_certificate(cert)
    return cert


# -- catalog of source elements --------------------------------------------------------


def _sinc(x: np.ndarray) -> np.ndarray:
    """Unnormalized sinc sin(x)/x with value 1 at 0."""
    return np.sinc(x / np.pi)


def _modulus_argument(which: int, t: np.ndarray):
    if which == 1:
        modulus = (
            2.7 * np.exp(-(((t - 0.27) / 0.025) ** 2))
            + 4.0 * np.exp(-(((t - 1.56) / 0.024) ** 2))
            + 4.0 * np.exp(-(((t - 0.346) / 0.022) ** 2))
            + 2.0 * np.exp(-(((t - 1.146) / 0.024) ** 2))
        )
        argument = 5.0 * np.cos(7.867 * t) - 2.3 * np.sin(25.786 * t)
    elif which == 2:
        modulus = 2.95 * ((t >= 0.415) & (t <= 0.459)) + 6.0 * (
            (t >= 0.92) & (t <= 0.95)
        )
        argument = 2.0 * np.cos(0.867 * t) - 1.3 * np.sin(25.786 * t)
    elif which == 3:
        modulus = (
            0.645 * _sinc(9.855 * (t - 1.2))
            + 0.434 * _sinc(15.243 * (t - 0.42))
            + 6.234 * _sinc(0.143 * (t - 0.85))
        )
        argument = (
            1.2 * np.cos(2.867 * t)
            - 2.3 * np.sin(4.786 * (t - 0.78))
            + np.exp(0.643 * t)
        )
    else:
        raise ValueError(f"unknown catalog source element {which!r}")
    return modulus, argument


#: Smallest feature width of each catalog element, used for a resolution
#: sanity warning: a grid with 1/N above this scale cannot resolve the
#: narrowest Gaussian peak or indicator block.
CATALOG_FEATURE_WIDTH = {1: 0.022, 2: 0.03, 3: 0.2}


def builtin_source(which, resolution: int) -> GridSignal:
    """Catalog source element on [0, 2]: 1, 2, 3, or 'const:<c>'.

    The catalog entries are modulus/argument pairs: narrow Gaussian peaks
    with an oscillating argument (1), two indicator blocks (2), and a sum of
    sinc ripples with a smooth argument (3).  'const:<c>' gives the constant
    element with closed-form spectrum, for oracle tests.
    """
    t = np.arange(2 * resolution + 1) / resolution
    if isinstance(which, str) and which.startswith("const:"):
        value = float(which.split(":", 1)[1])
        return GridSignal(
            np.full(t.size, value, dtype=np.complex128), resolution, domain_length=2
        )
    which = int(which)
    modulus, argument = _modulus_argument(which, t)
    return GridSignal(modulus * np.exp(1j * argument), resolution, domain_length=2)


# -- certificate serialization ------------------------------------------------------------


def save_certificate(path, cert: SourceCertificate):
    """Write a certificate as a key=value header plus named signal blocks.

    Floats are written with repr, so save -> load -> save is byte-identical.
    """
    n = cert.resolution
    kind = "trivial" if cert.kernel.is_trivial else "sampled"
    with open(path, "w") as fh:
        fh.write("# source-certificate\n")
        fh.write(f"lambda1={float(cert.lambda1)!r}\n")
        fh.write(f"lambda2={float(cert.lambda2)!r}\n")
        fh.write(f"N={n}\n")
        fh.write(f"kernel={kind}\n")
        for name, sig in (
            ("phi_rescaled", cert.phi_rescaled),
            ("u_true", cert.u_true),
            ("g_true", cert.g_true),
        ):
            fh.write(f"== {name}\n")
            from .signal import signal_block_lines

            for line in signal_block_lines(sig):
                fh.write(line + "\n")
        if not cert.kernel.is_trivial:
            fh.write("== kernel\n")
            for line in forward.kernel_block_lines(cert.kernel):
                fh.write(line + "\n")


def load_certificate(path) -> SourceCertificate:
    """Read a certificate written by save_certificate (bit-exact round trip)."""
    from .signal import parse_signal_block

    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines or lines[0].strip() != "# source-certificate":
        raise ValueError(f"{path}: not a source certificate file")
    header = {}
    cursor = 1
    while cursor < len(lines) and not lines[cursor].startswith("== "):
        key, _, value = lines[cursor].partition("=")
        header[key.strip()] = value.strip()
        cursor += 1
    blocks = {}
    current = None
    for line in lines[cursor:]:
        if line.startswith("== "):
            current = line[3:].strip()
            blocks[current] = []
        elif current is not None:
            blocks[current].append(line)
    n = int(header["N"])
    kernel = TRIVIAL_KERNEL
    if header.get("kernel") == "sampled":
        kernel = forward.parse_kernel_block(blocks["kernel"])
    return SourceCertificate(
        phi_rescaled=parse_signal_block(blocks["phi_rescaled"], n, 2),
        lambda1=float(header["lambda1"]),
        lambda2=float(header["lambda2"]),
        u_true=parse_signal_block(blocks["u_true"], n, 1),
        g_true=parse_signal_block(blocks["g_true"], n, 2),
        kernel=kernel,
    )
