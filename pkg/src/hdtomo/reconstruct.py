"""Density-matrix estimation from homodyne quadrature data.

The estimator is the phase-averaged Monte Carlo sum

    rho_{n,m} = < e^{-i(m-n)phi} f_{n,m}(x) >

over measured pairs (phi, x).  Two evaluation paths give the same numbers
on the same data: the unbinned path visits every sample, while the binned
path compresses the data into a sinogram (per-phase histograms), takes a
DFT along the phase axis, and contracts each matrix diagonal against
pattern-function rows evaluated once per bin center.  Error bars come
either from the per-sample variance (real and imaginary parts separately)
or from the scatter of estimates over independent statistical blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError, UsageError
from .patterns import PatternConfig, build_table, pattern_row_grid

PHASE_GRID_TOL = 1e-8


@dataclass(frozen=True)
class QuadratureSample:
    """One homodyne measurement: phase in [0, 2 pi), quadrature outcome."""

    phase: float
    value: float


@dataclass
class QuadratureDataset:
    """Measurement record (phases, values), optionally split into blocks.

    n_phi declares how many distinct phases the acquisition used.  Phases
    must lie in [0, 2 pi); data taken only on [0, pi) has to go through
    double_by_symmetry before binning.
    """

    phases: np.ndarray
    values: np.ndarray
    n_phi: int
    block: np.ndarray | None = None
    nblks: int | None = None

    def __post_init__(self):
        self.phases = np.asarray(self.phases, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.phases.shape != self.values.shape or self.phases.ndim != 1:
            raise ValueError("phases and values must be 1-d arrays of equal length")
        if self.n_phi < 1:
            raise ValueError(f"n_phi must be >= 1, got {self.n_phi}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("quadrature values contain NaN or Inf")
        if self.phases.size and not (
            np.all(self.phases >= 0.0) and np.all(self.phases < 2.0 * math.pi)
        ):
            raise DataError("phases must lie in [0, 2*pi)")
        if self.block is not None:
            self.block = np.asarray(self.block)
            if self.block.shape != self.values.shape:
                raise ValueError("block labels must match the sample count")
            if self.nblks is None or self.nblks < 1:
                raise ValueError("nblks must be given alongside block labels")
            if self.block.size and (
                self.block.min() < 0 or self.block.max() >= self.nblks
            ):
                raise DataError(f"block labels must lie in 0..{self.nblks - 1}")

    @property
    def N(self) -> int:
        return self.values.size


@dataclass
class Sinogram:
    """Row-normalized histogram of quadrature values per phase."""

    n_phi: int
    n_bin: int
    freq: np.ndarray
    bin_edges: np.ndarray
    bin_centers: np.ndarray
    n_per_phase: np.ndarray


@dataclass
class PhaseSpectrum:
    """DFT of a sinogram along the phase axis.

    shat[d, i] = (1/n_phi) sum_j freq[j, i] e^{-2 pi i j d / n_phi}, with
    the conjugate symmetry shat[n_phi - d] = conj(shat[d]) holding exactly.
    Bin geometry and per-phase counts ride along so estimators need only
    this object and a PatternConfig.
    """

    n_phi: int
    n_bin: int
    shat: np.ndarray
    bin_centers: np.ndarray
    bin_width: float
    n_per_phase: np.ndarray


@dataclass
class DensityMatrixEstimate:
    """Hermitian M x M estimate with one standard error per element part."""

    M: int
    rho: np.ndarray
    err_re: np.ndarray
    err_im: np.ndarray
    trace: float
    trace_err: float
    meta: dict


def double_by_symmetry(ds: QuadratureDataset) -> QuadratureDataset:
    """Extend a half-circle dataset to [0, 2 pi) using X_{phi+pi} = -X_phi.

    Every sample (phi, x) gains a partner (phi + pi, -x); the declared
    phase count doubles.  Data already containing phases >= pi would be
    double-counted, so that is rejected.
    """
    if ds.phases.size and float(ds.phases.max()) >= math.pi:
        raise DataError(
            "double_by_symmetry needs all phases in [0, pi); "
            f"found phase {float(ds.phases.max()):.6g}"
        )
    phases = np.concatenate([ds.phases, ds.phases + math.pi])
    values = np.concatenate([ds.values, -ds.values])
    block = None if ds.block is None else np.concatenate([ds.block, ds.block])
    return QuadratureDataset(
        phases=phases, values=values, n_phi=2 * ds.n_phi,
        block=block, nblks=ds.nblks,
    )


def _phase_indices(ds: QuadratureDataset) -> np.ndarray:
    """Map phases to grid indices j with phi_j = 2 pi j / n_phi, verifying
    the dataset really is gridded over the full circle."""
    step = 2.0 * math.pi / ds.n_phi
    j = np.rint(ds.phases / step).astype(np.int64)
    if np.any(np.abs(ds.phases - j * step) > PHASE_GRID_TOL):
        k = int(np.argmax(np.abs(ds.phases - j * step)))
        raise DataError(
            f"phases are not on the equispaced grid 2*pi*j/{ds.n_phi}: "
            f"sample {k} has phase {ds.phases[k]!r}"
        )
    if j.size and (j.min() < 0 or j.max() >= ds.n_phi):
        raise DataError("phase indices fall outside 0..n_phi-1")
    return j


def _default_edges(values: np.ndarray, n_bin: int) -> tuple[float, float]:
    amax = float(np.max(np.abs(values)))
    if amax == 0.0:
        return -0.5, 0.5
    if n_bin == 1:
        return -amax - 0.5, amax + 0.5
    half_bin = amax / (n_bin - 1)
    return -amax - half_bin, amax + half_bin


def bin(ds: QuadratureDataset, n_bin: int, bin_range=None) -> Sinogram:
    """Histogram each phase row into n_bin equal-width bins.

    The default range is symmetric about zero and covers every sample,
    widened by half a bin so the extreme values sit at bin centers.  A
    sample exactly on an interior edge goes to the bin on its right, and
    one on the top edge stays in the last bin.
    """
    if n_bin < 1:
        raise ValueError(f"n_bin must be >= 1, got {n_bin}")
    if ds.values.size == 0:
        raise DataError("cannot bin an empty dataset")
    j = _phase_indices(ds)
    if bin_range is None:
        lo, hi = _default_edges(ds.values, n_bin)
    else:
        lo, hi = float(bin_range[0]), float(bin_range[1])
        if not lo < hi:
            raise ValueError(f"bin range must satisfy lo < hi, got [{lo}, {hi}]")
        if np.any(ds.values < lo) or np.any(ds.values > hi):
            raise DataError(
                "samples fall outside the requested bin range "
                f"[{lo:.6g}, {hi:.6g}]; dropping them would bias the estimator"
            )
    edges = np.linspace(lo, hi, n_bin + 1)
    idx = np.searchsorted(edges, ds.values, side="right") - 1
    np.clip(idx, 0, n_bin - 1, out=idx)
    counts = np.bincount(j * n_bin + idx, minlength=ds.n_phi * n_bin)
    counts = counts.reshape(ds.n_phi, n_bin)
    n_per_phase = counts.sum(axis=1)
    if np.any(n_per_phase == 0):
        k = int(np.argmin(n_per_phase))
        raise DataError(
            f"phase index {k} has no samples; the phase average would be biased"
        )
    freq = counts / n_per_phase[:, None]
    centers = 0.5 * (edges[:-1] + edges[1:])
    return Sinogram(
        n_phi=ds.n_phi, n_bin=n_bin, freq=freq,
        bin_edges=edges, bin_centers=centers, n_per_phase=n_per_phase,
    )


def _half_spectrum(freq: np.ndarray, n_phi: int) -> np.ndarray:
    return np.fft.rfft(freq, axis=0) / n_phi


def _mirror_rows(half: np.ndarray, n_phi: int, dmax: int) -> np.ndarray:
    """Rows 0..dmax of the full DFT, built from the real-input half
    spectrum so conjugate symmetry is exact."""
    nused = half.shape[0]
    half[0] = half[0].real
    if n_phi % 2 == 0:
        half[-1] = half[-1].real
    if dmax < nused:
        return half[:dmax + 1]
    out = np.empty((dmax + 1, half.shape[1]), dtype=np.complex128)
    out[:nused] = half
    mirror = n_phi - np.arange(nused, dmax + 1)
    out[nused:] = np.conj(half[mirror])
    return out


def phase_dft(s: Sinogram) -> PhaseSpectrum:
    """Full complex spectrum of the sinogram along the phase axis."""
    shat = _mirror_rows(_half_spectrum(s.freq, s.n_phi), s.n_phi, s.n_phi - 1)
    return PhaseSpectrum(
        n_phi=s.n_phi, n_bin=s.n_bin, shat=shat,
        bin_centers=s.bin_centers,
        bin_width=float(s.bin_edges[1] - s.bin_edges[0]) if s.n_bin else 0.0,
        n_per_phase=s.n_per_phase,
    )


def _resolve_max_diag(M: int, max_diag) -> int:
    if max_diag is None:
        return M - 1
    if not 0 <= max_diag <= M - 1:
        raise ValueError(f"max_diag must be in 0..{M - 1}, got {max_diag}")
    return int(max_diag)


def _require_phases(n_phi: int, M: int, dmax: int):
    needed = M if dmax == M - 1 else dmax + 1
    if n_phi < needed:
        raise UsageError(
            f"phase count insufficient for cutoff M: n_phi={n_phi} cannot "
            f"resolve diagonals up to d={dmax} (need n_phi >= {needed})"
        )


def _finite_rows(f: np.ndarray, d: int) -> np.ndarray:
    if not np.all(np.isfinite(f)):
        raise NumericalError(
            f"pattern rows for diagonal d={d} are not finite; "
            "try a different beta or double precision"
        )
    return f


def _assemble(M, rho_u, err_re_u, err_im_u, meta) -> DensityMatrixEstimate:
    """Mirror the upper triangle into an exactly Hermitian estimate."""
    rho = rho_u + rho_u.conj().T
    np.fill_diagonal(rho, np.real(np.diagonal(rho_u)))
    err_re = err_re_u + err_re_u.T
    err_im = err_im_u + err_im_u.T
    np.fill_diagonal(err_re, np.diagonal(err_re_u))
    np.fill_diagonal(err_im, np.diagonal(err_im_u))
    diag_re = np.real(np.diagonal(rho))
    diag_err = np.diagonal(err_re)
    trace = float(diag_re.sum())
    trace_err = float(np.sqrt(np.sum(diag_err**2)))
    return DensityMatrixEstimate(
        M=M, rho=rho, err_re=err_re, err_im=err_im,
        trace=trace, trace_err=trace_err, meta=meta,
    )


def _midpoint_corrected(f: np.ndarray) -> np.ndarray:
    """Subtract the O(h^2) midpoint term from kernel rows on uniform bins.

    Evaluating f at bin centers biases sums against oscillatory densities
    by (h^2/24) int f p'' dx.  Replacing f(c) with f(c) - delta^2 f / 24
    (second difference along the bin axis, so the h^2 factors cancel)
    removes that term; end bins are left untouched.
    """
    out = f.copy()
    out[..., 1:-1] -= (f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]) / 24.0
    return out


def estimate_binned(
    spec: PhaseSpectrum,
    cfg: PatternConfig,
    max_diag: int | None = None,
    bin_correction: bool = False,
) -> DensityMatrixEstimate:
    """Contract the phase spectrum against pattern rows at the bin centers.

    rho_{n,n+d} = sum_i shat[d, i] f_{n,n+d}(x_i).  Error bars use the
    per-sample variance of Re F and Im F, recovered from the spectrum
    itself: sums of f^2 cos^2 and f^2 sin^2 reduce to the d = 0 and 2d
    spectrum rows.  Exact for equal per-phase counts (the designed
    acquisition); with mild imbalance the bars are approximate.

    bin_correction swaps the center-evaluated kernel for its
    second-difference refinement; see _midpoint_corrected.
    """
    M = cfg.cutoff
    dmax = _resolve_max_diag(M, max_diag)
    _require_phases(spec.n_phi, M, dmax)
    table = build_table(spec.bin_centers, cfg)
    N = int(spec.n_per_phase.sum())
    rho_u = np.zeros((M, M), dtype=np.complex128)
    err_re_u = np.zeros((M, M))
    err_im_u = np.zeros((M, M))
    for d in range(dmax + 1):
        f = _finite_rows(pattern_row_grid(table, d), d)
        if bin_correction:
            f = _midpoint_corrected(f)
        row = spec.shat[d]
        mean_re = f @ row.real
        mean_im = f @ row.imag
        f2 = f * f
        even = spec.shat[0].real + spec.shat[(2 * d) % spec.n_phi].real
        odd = spec.shat[0].real - spec.shat[(2 * d) % spec.n_phi].real
        sum_re2 = 0.5 * N * (f2 @ even)
        sum_im2 = 0.5 * N * (f2 @ odd)
        denom = max(N - 1, 1)  # a single sample gives a zero numerator too
        var_re = np.maximum(sum_re2 - N * mean_re**2, 0.0) / denom
        var_im = np.maximum(sum_im2 - N * mean_im**2, 0.0) / denom
        rows = np.arange(M - d)
        rho_u[rows, rows + d] = mean_re + 1j * mean_im
        err_re_u[rows, rows + d] = np.sqrt(var_re / N)
        err_im_u[rows, rows + d] = np.sqrt(var_im / N)
    meta = {
        "estimator": "binned", "N": N, "n_bin": spec.n_bin,
        "n_phi": spec.n_phi, "beta": cfg.beta, "max_diag": dmax,
        "bin_correction": bool(bin_correction),
    }
    return _assemble(M, rho_u, err_re_u, err_im_u, meta)


def _moment_sums(phases, values, cfg, dmax, want_var):
    """Per-diagonal sums of F = e^{-i d phi} f(x) over the given samples.

    Returns (sums, sums2) where sums[d] is complex of length M-d and
    sums2[d] stacks sum(Re F)^2 and sum(Im F)^2; sums2 is None unless
    want_var.  Samples are processed in slabs to bound workspace memory.
    """
    M = cfg.cutoff
    sums = [np.zeros(M - d, dtype=np.complex128) for d in range(dmax + 1)]
    sums2 = [np.zeros((2, M - d)) for d in range(dmax + 1)] if want_var else None
    slab = max(256, int(4.0e6) // (M + 2))
    for start in range(0, values.size, slab):
        sl = slice(start, min(start + slab, values.size))
        table = build_table(values[sl], cfg)
        phi = phases[sl]
        for d in range(dmax + 1):
            f = _finite_rows(pattern_row_grid(table, d), d)
            c = np.cos(d * phi)
            s = np.sin(d * phi)
            sums[d] += (f @ c) - 1j * (f @ s)
            if want_var:
                f2 = f * f
                sums2[d][0] += f2 @ (c * c)
                sums2[d][1] += f2 @ (s * s)
    return sums, sums2


def estimate_unbinned(
    ds: QuadratureDataset, cfg: PatternConfig, max_diag: int | None = None
) -> DensityMatrixEstimate:
    """Direct Monte Carlo sum over every sample, with per-sample variance
    error bars computed separately for real and imaginary parts."""
    M = cfg.cutoff
    dmax = _resolve_max_diag(M, max_diag)
    _require_phases(ds.n_phi, M, dmax)
    N = ds.N
    if N < 2:
        raise DataError(
            f"estimate_unbinned needs at least 2 samples (got {N}); "
            "the sample variance is undefined"
        )
    sums, sums2 = _moment_sums(ds.phases, ds.values, cfg, dmax, want_var=True)
    rho_u = np.zeros((M, M), dtype=np.complex128)
    err_re_u = np.zeros((M, M))
    err_im_u = np.zeros((M, M))
    for d in range(dmax + 1):
        mean = sums[d] / N
        var_re = np.maximum(sums2[d][0] - N * mean.real**2, 0.0) / (N - 1)
        var_im = np.maximum(sums2[d][1] - N * mean.imag**2, 0.0) / (N - 1)
        rows = np.arange(M - d)
        rho_u[rows, rows + d] = mean
        err_re_u[rows, rows + d] = np.sqrt(var_re / N)
        err_im_u[rows, rows + d] = np.sqrt(var_im / N)
    meta = {
        "estimator": "unbinned", "N": N, "n_bin": None,
        "n_phi": ds.n_phi, "beta": cfg.beta, "max_diag": dmax,
    }
    return _assemble(M, rho_u, err_re_u, err_im_u, meta)


def _block_slices(ds: QuadratureDataset):
    if ds.block is None or ds.nblks is None:
        raise DataError("block statistics need a dataset with block labels")
    if ds.nblks < 2:
        raise DataError(f"need at least 2 blocks, got {ds.nblks}")
    sizes = np.bincount(ds.block.astype(np.int64), minlength=ds.nblks)
    if np.any(sizes != sizes[0]):
        raise DataError(
            f"blocks must have equal sizes, got {sizes.min()}..{sizes.max()}"
        )
    return [np.flatnonzero(ds.block == b) for b in range(ds.nblks)]


def block_statistics(
    ds: QuadratureDataset,
    cfg: PatternConfig,
    n_bin: int | None = None,
    bin_range=None,
    max_diag: int | None = None,
    bin_correction: bool = False,
) -> DensityMatrixEstimate:
    """Estimate per statistical block; report the mean of the block
    estimates with errors from their scatter, std(blocks)/sqrt(nblks).

    With n_bin given each block runs through the binned path on a shared
    bin grid (bin_correction as in estimate_binned); otherwise each block
    is summed unbinned.
    """
    M = cfg.cutoff
    dmax = _resolve_max_diag(M, max_diag)
    _require_phases(ds.n_phi, M, dmax)
    picks = _block_slices(ds)
    nblks = ds.nblks
    if n_bin is not None:
        if bin_range is None:
            bin_range = _default_edges(ds.values, n_bin)
        # shared bin grid, pattern tables built once for all blocks; each
        # sinogram is reduced to its spectrum immediately so only one
        # (n_phi, n_bin) histogram is alive at a time
        big = nblks * (dmax + 1) * n_bin * 16 > 3e8
        rows_dtype = np.complex64 if big else np.complex128
        spectra = np.empty((nblks, dmax + 1, n_bin), dtype=rows_dtype)
        table = None
        for b, pick in enumerate(picks):
            sub = QuadratureDataset(
                phases=ds.phases[pick], values=ds.values[pick], n_phi=ds.n_phi
            )
            sino = bin(sub, n_bin, bin_range=bin_range)
            if table is None:
                table = build_table(sino.bin_centers, cfg)
            half = _half_spectrum(sino.freq, ds.n_phi)
            spectra[b] = _mirror_rows(half, ds.n_phi, dmax)
        block_rows = None
    else:
        table = None
        block_rows = []
        for pick in picks:
            sums, _ = _moment_sums(
                ds.phases[pick], ds.values[pick], cfg, dmax, want_var=False
            )
            block_rows.append([s / pick.size for s in sums])
    rho_u = np.zeros((M, M), dtype=np.complex128)
    err_re_u = np.zeros((M, M))
    err_im_u = np.zeros((M, M))
    for d in range(dmax + 1):
        if n_bin is not None:
            f = _finite_rows(pattern_row_grid(table, d), d)
            if bin_correction:
                f = _midpoint_corrected(f)
            rows_d = np.ascontiguousarray(spectra[:, d, :]).astype(np.complex128)
            G = (f @ rows_d.real.T) + 1j * (f @ rows_d.imag.T)
        else:
            G = np.stack([block_rows[b][d] for b in range(nblks)], axis=1)
        mean = G.mean(axis=1)
        rows = np.arange(M - d)
        rho_u[rows, rows + d] = mean
        err_re_u[rows, rows + d] = G.real.std(axis=1, ddof=1) / math.sqrt(nblks)
        err_im_u[rows, rows + d] = G.imag.std(axis=1, ddof=1) / math.sqrt(nblks)
    meta = {
        "estimator": "block", "N": ds.N, "n_bin": n_bin,
        "n_phi": ds.n_phi, "beta": cfg.beta, "max_diag": dmax, "nblks": nblks,
        "bin_correction": bool(bin_correction and n_bin is not None),
    }
    return _assemble(M, rho_u, err_re_u, err_im_u, meta)


def check_normalization(est: DensityMatrixEstimate) -> dict:
    """Trace of the estimate and whether it is compatible with 1 at 3 sigma."""
    compatible = abs(est.trace - 1.0) <= 3.0 * est.trace_err
    return {
        "trace": est.trace,
        "trace_err": est.trace_err,
        "compatible": bool(compatible),
    }
