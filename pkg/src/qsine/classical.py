"""Classical baselines: periodogram parameter estimation and AIC/MDL counting.

Both operate on the Bussgang-linearized frame (pass qspec=None for already
unquantized data). Frequency/amplitude/phase come from peaks of a zero-padded
DFT; the sinusoid count from eigenvalue information criteria on a sliding-
window sample covariance.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .quantize import Quantizer, bussgang_linearize
from .signals import TWO_PI, ParameterSet, from_iq

DEFAULT_NFFT = 2**16


@dataclass
class SpectrumEstimate:
    """Zero-padded DFT of one frame; bin k <-> normalized frequency k/nfft."""

    nfft: int
    values: np.ndarray
    magnitudes: np.ndarray


def zero_padded_dft(x: np.ndarray, nfft: int = DEFAULT_NFFT) -> SpectrumEstimate:
    """DFT of x zero-padded to nfft points (nfft a power of two, >= len(x))."""
    x = np.asarray(x)
    if nfft < len(x):
        raise ValueError(f"nfft={nfft} must be >= frame length {len(x)}")
    if nfft & (nfft - 1):
        raise ValueError(f"nfft={nfft} must be a power of two")
    vals = np.fft.fft(x, n=nfft)
    return SpectrumEstimate(nfft=nfft, values=vals, magnitudes=np.abs(vals))


def _local_maxima(mag: np.ndarray, lo: int, hi: int) -> np.ndarray:
    # indices k in [lo, hi) with mag[k-1] < mag[k] >= mag[k+1]
    k = np.arange(lo, hi)
    return k[(mag[k] > mag[k - 1]) & (mag[k] >= mag[k + 1])]


def pick_peaks(
    spec: SpectrumEstimate, m: int, N: int, mode: str = "local_maxima"
) -> np.ndarray:
    """Selects m peak bins in the (0, 0.5) frequency band, ascending.

    Default mode takes local maxima of the magnitude spectrum greedily by
    magnitude, with an exclusion zone of +-ceil(nfft/(2N)) bins around each
    pick so one mainlobe cannot yield several picks. mode="top_m" instead
    takes the m largest-magnitude bins literally (no guard) for comparison.

    If fewer than m guarded local maxima exist, the remaining picks fall back
    to the largest unguarded bins and a RuntimeWarning flags the degraded
    quality.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    mag = spec.magnitudes
    nfft = spec.nfft
    lo, hi = 1, nfft // 2  # bins with 0 < k/nfft < 0.5
    if mode == "top_m":
        band = np.arange(lo, hi)
        order = band[np.argsort(mag[band])[::-1][:m]]
        return np.sort(order)
    if mode != "local_maxima":
        raise ValueError(f"unknown peak mode {mode!r}")
    guard = math.ceil(nfft / (2 * N))
    candidates = _local_maxima(mag, lo, hi)
    order = candidates[np.argsort(mag[candidates])[::-1]]
    picked: list[int] = []
    for k in order:
        if len(picked) == m:
            break
        if all(abs(k - p) >= guard for p in picked):
            picked.append(int(k))
    if len(picked) < m:
        warnings.warn(
            f"only {len(picked)} guarded local maxima for m={m}; "
            "padding with largest unguarded bins",
            RuntimeWarning,
        )
        blocked = np.zeros(nfft, dtype=bool)
        for p in picked:
            blocked[max(0, p - guard + 1) : p + guard] = True
        rest = np.arange(lo, hi)
        rest = rest[~blocked[lo:hi]]
        for k in rest[np.argsort(mag[rest])[::-1]]:
            if len(picked) == m:
                break
            if all(abs(k - p) >= guard for p in picked):
                picked.append(int(k))
        while len(picked) < m:  # pathological tiny-band fallback
            picked.append(int(lo))
    return np.sort(np.asarray(picked, dtype=int))


def classical_estimate(
    x: np.ndarray,
    m: int,
    qspec: Quantizer | None = None,
    nfft: int = DEFAULT_NFFT,
    peak_mode: str = "local_maxima",
) -> ParameterSet:
    """Periodogram estimate of m sinusoids from an IQ frame.

    Pipeline: Bussgang linearization (if qspec given) -> zero-padded DFT ->
    peak picking -> per peak p: f = p/nfft, a = |r[p]|/N, phi = angle(r[p])
    wrapped to [0, 2*pi). Results sorted ascending in frequency.
    """
    x = np.asarray(x)
    if qspec is not None:
        xt = bussgang_linearize(x, qspec)
    else:
        xt = x if np.iscomplexobj(x) else from_iq(x)
    N = len(xt)
    spec = zero_padded_dft(xt, nfft)
    peaks = pick_peaks(spec, m, N, mode=peak_mode)
    r = spec.values[peaks]
    freqs = peaks / nfft
    amps = np.abs(r) / N
    phases = np.mod(np.angle(r), TWO_PI)
    return ParameterSet(m=m, amps=amps, freqs=freqs, phases=phases)


def aic_mdl_detect(
    x: np.ndarray,
    criterion: str = "mdl",
    qspec: Quantizer | None = None,
    L: int = 16,
    Mmax: int = 5,
) -> int:
    """Eigenvalue information-criterion estimate of the sinusoid count.

    Builds the L x K matrix of the K = N-L+1 sliding length-L subvectors,
    takes eigenvalues of its sample covariance, and scores each candidate
    count k by the likelihood-ratio term on the smallest L-k eigenvalues
    plus the criterion's complexity penalty:

        AIC(k) = -2K(L-k) ln(g_k/a_k) + 2k(2L-k)
        MDL(k) =  -K(L-k) ln(g_k/a_k) + (k/2)(2L-k) ln K

    (g_k/a_k: geometric/arithmetic mean ratio). Returns argmin over
    k in {1..Mmax}.

    Args:
        x: IQ matrix or complex frame.
        criterion: "aic" or "mdl".
        qspec: quantizer used on x, for Bussgang linearization; None if x is
            unquantized.
        L: subvector length (1 <= L <= N/2).
        Mmax: largest candidate count (< L).
    """
    crit = criterion.lower()
    if crit not in ("aic", "mdl"):
        raise ValueError(f"criterion must be 'aic' or 'mdl', got {criterion!r}")
    x = np.asarray(x)
    if qspec is not None:
        xt = bussgang_linearize(x, qspec)
    else:
        xt = x if np.iscomplexobj(x) else from_iq(x)
    N = len(xt)
    if not 1 <= L <= N // 2:
        raise ValueError(f"L must be in [1, N/2] = [1, {N // 2}], got {L}")
    if not 1 <= Mmax < L:
        raise ValueError(f"Mmax must be in [1, L), got {Mmax}")
    K = N - L + 1
    Y = np.lib.stride_tricks.sliding_window_view(xt, L).T  # (L, K)
    R = (Y @ Y.conj().T) / K
    ev = np.linalg.eigvalsh(R)[::-1].real
    ev = np.clip(ev, 1e-12, None)
    best_k, best_score = 1, math.inf
    for k in range(1, Mmax + 1):
        tail = ev[k:]
        log_gm = float(np.mean(np.log(tail)))
        am = float(np.mean(tail))
        llr = -K * (L - k) * (log_gm - math.log(am))
        if crit == "aic":
            score = 2.0 * llr + 2.0 * k * (2 * L - k)
        else:
            score = llr + 0.5 * k * (2 * L - k) * math.log(K)
        if score < best_score:
            best_k, best_score = k, score
    return best_k
