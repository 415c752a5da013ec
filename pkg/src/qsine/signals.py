"""Multi-sinusoid frame synthesis and labeled dataset generation.

A frame is N complex baseband samples

    u[n] = sum_i a_i * exp(j*(2*pi*f_i*n*T + phi_i)),   n = 0..N-1,

with normalized frequencies f_i in (0, 0.5) cycles/sample and T = 1. The
generation pipeline for one labeled example is

    draw_parameters -> synthesize -> add_noise -> normalize_power
                    -> quantize (see qsine.quantize) -> to_iq

Frames are plain complex128 ndarrays; the quantizer input is normalized to
unit average per-sample power (||s||^2 = N) so each real component is
approximately Normal(0, 1/2) for the Bussgang linearization downstream.

Randomness: every example draws from its own substream keyed by
(seed, example index), so datasets are reproducible and independent of any
parallel generation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Give up on rejection sampling after this many attempts (probability ~0 for
# sane configs; guards against a pathological config looping forever).
REJECTION_CAP = 10**6

DATASET_MAGIC = "qsine-dataset v1"


def substream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic child generator for (seed, *key).

    Args:
        seed: base 64-bit seed.
        *key: integers identifying the substream (e.g. an example index).

    Returns:
        An independent numpy Generator; the same (seed, key) always yields
        the same stream regardless of what other substreams were consumed.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


@dataclass
class ParameterSet:
    """Label or estimate for one frame: m sinusoids with (a, f, phi) vectors.

    Generated labels satisfy: freqs strictly ascending in (0, 0.5), phases in
    [0, 2*pi), amps in [0.1, 1.0]. Estimates produced by models reuse this
    container without those range guarantees; call validate() where the label
    contract matters.
    """

    m: int
    amps: np.ndarray
    freqs: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        self.amps = np.atleast_1d(np.asarray(self.amps, dtype=np.float64))
        self.freqs = np.atleast_1d(np.asarray(self.freqs, dtype=np.float64))
        self.phases = np.atleast_1d(np.asarray(self.phases, dtype=np.float64))
        if not (len(self.amps) == len(self.freqs) == len(self.phases) == self.m):
            raise ValueError(
                f"parameter vectors must all have length m={self.m}: got "
                f"{len(self.amps)}/{len(self.freqs)}/{len(self.phases)}"
            )

    def validate(self) -> "ParameterSet":
        """Checks the generated-label invariants; returns self."""
        if self.m < 1:
            raise ValueError("label must contain at least one sinusoid")
        if not np.all((self.freqs > 0.0) & (self.freqs < 0.5)):
            raise ValueError(f"frequencies out of (0, 0.5): {self.freqs}")
        if self.m > 1 and not np.all(np.diff(self.freqs) > 0.0):
            raise ValueError(f"frequencies not strictly ascending: {self.freqs}")
        if not np.all((self.phases >= 0.0) & (self.phases < TWO_PI)):
            raise ValueError(f"phases out of [0, 2*pi): {self.phases}")
        return self


@dataclass
class GenConfig:
    """Dataset generation settings.

    Attributes:
        N: frame length in samples.
        M: maximum sinusoid count; labels draw m ~ Uniform{1..M}.
        snr_db: per-example SNR in dB (ignored when snr_range is set).
        bits: quantizer resolution b.
        seed: base RNG seed; example i uses substream (seed, i).
        freq_mode: "in_distribution" (offset + folded-normal jitter) or
            "ood_uniform" (uniform on (0, 0.5) with min spacing 1/N).
        sample_interval: T, fixed at 1.0 (frequencies are normalized).
        m_fixed: when set, every label has exactly this count (used to build
            per-m estimator training sets).
        snr_range: when set, each example draws snr_db ~ U(lo, hi).
    """

    N: int = 64
    M: int = 5
    snr_db: float = 10.0
    bits: int = 3
    seed: int = 0
    freq_mode: str = "in_distribution"
    sample_interval: float = 1.0
    m_fixed: int | None = None
    snr_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        if self.sample_interval != 1.0:
            raise ValueError("sample_interval is fixed at 1.0 (normalized frequencies)")
        if self.freq_mode not in ("in_distribution", "ood_uniform"):
            raise ValueError(f"unknown freq_mode {self.freq_mode!r}")
        if self.m_fixed is not None and not (1 <= self.m_fixed <= self.M):
            raise ValueError(f"m_fixed must be in 1..{self.M}")
        if self.snr_range is not None:
            lo, hi = self.snr_range
            if not lo <= hi:
                raise ValueError("snr_range must be (lo, hi) with lo <= hi")


@dataclass
class LabeledExample:
    """One generated frame: quantized IQ data, its label, and the SNR used."""

    x: np.ndarray  # (N, 2) real
    label: ParameterSet
    snr_db: float


def synthesize(params: ParameterSet, N: int, T: float = 1.0) -> np.ndarray:
    """Noiseless frame u[n] = sum_i a_i exp(j(2 pi f_i n T + phi_i)).

    An empty parameter set (m = 0 container) yields the all-zero frame.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    n = np.arange(N, dtype=np.float64)
    if len(params.freqs) == 0:
        return np.zeros(N, dtype=np.complex128)
    angles = TWO_PI * np.outer(n, params.freqs) * T + params.phases[None, :]
    return (params.amps[None, :] * np.exp(1j * angles)).sum(axis=1)


def add_noise(
    frame: np.ndarray, snr_db: float, signal_power: float, rng: np.random.Generator
) -> np.ndarray:
    """Adds circularly-symmetric complex Gaussian noise at the requested SNR.

    Noise variance is sigma_v^2 = signal_power / 10^(snr_db/10), split evenly
    between the real and imaginary components. snr_db = +inf returns the frame
    unchanged (noiseless sentinel).
    """
    if signal_power <= 0:
        raise ValueError("signal_power must be > 0")
    if math.isinf(snr_db) and snr_db > 0:
        return frame.copy()
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite or +inf")
    var = signal_power / 10.0 ** (snr_db / 10.0)
    sigma = math.sqrt(var / 2.0)
    noise = rng.normal(0.0, sigma, size=(len(frame), 2))
    return frame + noise[:, 0] + 1j * noise[:, 1]


def normalize_power(frame: np.ndarray) -> np.ndarray:
    """Scales to unit average per-sample power: s = sqrt(N) * frame / ||frame||."""
    norm = np.linalg.norm(frame)
    if norm == 0.0:
        raise ValueError("cannot normalize an all-zero frame")
    return math.sqrt(len(frame)) * frame / norm


def to_iq(frame: np.ndarray) -> np.ndarray:
    """Vectorizes a complex frame into an N x 2 real matrix [Re | Im]."""
    return np.stack([frame.real, frame.imag], axis=1)


def from_iq(x: np.ndarray) -> np.ndarray:
    """Inverse of to_iq."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) IQ matrix, got shape {x.shape}")
    return x[:, 0] + 1j * x[:, 1]


def _draw_freqs_in_distribution(m: int, N: int, rng: np.random.Generator) -> np.ndarray:
    # f_1 = w0 ~ U(0, 0.25); f_{i+1} = w0 + i/N + |Normal(0, 2.5/N)|.
    # The whole set is redrawn while any f >= 0.5. Offsets share the single
    # anchor w0 (they do not accumulate), so the raw draw order is not always
    # ascending; the caller sorts. Every f_i (i >= 2) exceeds f_1 by >= i/N.
    sigma = math.sqrt(2.5 / N)
    for _ in range(REJECTION_CAP):
        w0 = rng.uniform(0.0, 0.25)
        f = np.empty(m)
        f[0] = w0
        if m > 1:
            jitter = np.abs(rng.normal(0.0, sigma, size=m - 1))
            f[1:] = w0 + np.arange(1, m) / N + jitter
        if f[0] > 0.0 and f.max() < 0.5:
            return np.sort(f)
    raise RuntimeError(f"frequency rejection sampling exceeded {REJECTION_CAP} attempts")


def _draw_freqs_ood(m: int, N: int, rng: np.random.Generator) -> np.ndarray:
    # Uniform on (0, 0.5); fully regenerated until all pairwise spacings >= 1/N.
    for _ in range(REJECTION_CAP):
        f = np.sort(rng.uniform(0.0, 0.5, size=m))
        if f[0] <= 0.0:
            continue
        if m == 1 or np.diff(f).min() >= 1.0 / N:
            return f
    raise RuntimeError(f"frequency rejection sampling exceeded {REJECTION_CAP} attempts")


def draw_parameters(cfg: GenConfig, rng: np.random.Generator) -> ParameterSet:
    """Draws one label: m, then frequencies (with rejection), then (a, phi).

    In-distribution mode rejects and redraws the frequency set only; the
    amplitude/phase draws happen once, afterwards. Returned frequencies are
    sorted ascending (the canonical label order).
    """
    if cfg.m_fixed is not None:
        m = cfg.m_fixed
    else:
        m = int(rng.integers(1, cfg.M + 1))
    if cfg.freq_mode == "in_distribution":
        freqs = _draw_freqs_in_distribution(m, cfg.N, rng)
    else:
        freqs = _draw_freqs_ood(m, cfg.N, rng)
    amps = rng.uniform(0.1, 1.0, size=m)
    phases = rng.uniform(0.0, TWO_PI, size=m)
    return ParameterSet(m=m, amps=amps, freqs=freqs, phases=phases).validate()


def make_example(cfg: GenConfig, index: int, quantizer=None) -> LabeledExample:
    """Generates example `index` of the dataset keyed by cfg.seed.

    The full pipeline: draw -> synthesize -> noise -> normalize -> quantize
    -> IQ. Pure function of (cfg, index).
    """
    rng = substream(cfg.seed, index)
    if cfg.snr_range is not None:
        snr_db = float(rng.uniform(cfg.snr_range[0], cfg.snr_range[1]))
    else:
        snr_db = float(cfg.snr_db)
    params = draw_parameters(cfg, rng)
    u = synthesize(params, cfg.N, cfg.sample_interval)
    power = float(np.sum(params.amps**2))
    y = add_noise(u, snr_db, power, rng)
    s = normalize_power(y)
    from .quantize import make_quantizer, quantize

    spec = quantizer if quantizer is not None else make_quantizer(cfg.bits)
    z = quantize(s, spec)
    return LabeledExample(x=to_iq(z), label=params, snr_db=snr_db)


def make_dataset(cfg: GenConfig, count: int) -> list[LabeledExample]:
    """Generates `count` labeled examples deterministically from cfg.seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    from .quantize import make_quantizer

    spec = make_quantizer(cfg.bits)
    return [make_example(cfg, i, quantizer=spec) for i in range(count)]


# ---------------------------------------------------------------------------
# Dataset files: "<base>.labels.csv" (header + one CSV row per example) and
# "<base>.samples.f32" (little-endian float32, row-major N x 2 per example).
# ---------------------------------------------------------------------------


def save_dataset(base: str, cfg: GenConfig, examples: Sequence[LabeledExample]) -> tuple[str, str]:
    """Writes the labels/samples file pair; returns their paths."""
    labels_path = base + ".labels.csv"
    samples_path = base + ".samples.f32"
    lines = [f"{DATASET_MAGIC}, N={cfg.N}, M={cfg.M}, bits={cfg.bits}"]
    for i, ex in enumerate(examples):
        p = ex.label
        fields = [str(i), str(p.m), repr(float(ex.snr_db))]
        fields += [repr(float(v)) for v in p.amps]
        fields += [repr(float(v)) for v in p.freqs]
        fields += [repr(float(v)) for v in p.phases]
        lines.append(",".join(fields))
    with open(labels_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(samples_path, "wb") as fh:
        for ex in examples:
            fh.write(np.ascontiguousarray(ex.x, dtype="<f4").tobytes())
    return labels_path, samples_path


def load_dataset(base: str) -> tuple[dict, list[LabeledExample]]:
    """Reads a dataset file pair; returns (header metadata, examples).

    Sample data comes back float32 (the file precision).
    """
    labels_path = base + ".labels.csv"
    samples_path = base + ".samples.f32"
    with open(labels_path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith(DATASET_MAGIC):
        raise ValueError(f"{labels_path}: not a {DATASET_MAGIC} file")
    meta = {}
    for part in lines[0].split(",")[1:]:
        k, v = part.strip().split("=")
        meta[k.strip()] = int(v)
    N = meta["N"]
    raw = np.fromfile(samples_path, dtype="<f4")
    if raw.size % (N * 2) != 0:
        raise ValueError(f"{samples_path}: size not a multiple of N*2 floats")
    frames = raw.reshape(-1, N, 2)
    records = lines[1:]
    if len(records) != len(frames):
        raise ValueError(
            f"label rows ({len(records)}) and sample frames ({len(frames)}) disagree"
        )
    examples = []
    for row, x in zip(records, frames):
        cells = row.split(",")
        m = int(cells[1])
        snr_db = float(cells[2])
        vals = [float(c) for c in cells[3:]]
        if len(vals) != 3 * m:
            raise ValueError(f"label row has {len(vals)} values, expected {3 * m}")
        label = ParameterSet(
            m=m,
            amps=np.array(vals[:m]),
            freqs=np.array(vals[m : 2 * m]),
            phases=np.array(vals[2 * m :]),
        )
        examples.append(LabeledExample(x=x.astype(np.float64), label=label, snr_db=snr_db))
    return meta, examples
