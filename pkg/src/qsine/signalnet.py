"""Sinusoid counting and parameter estimation networks, plus their training.

Two model families built on the :mod:`qsine.nn` engine:

* a detection classifier mapping an IQ frame to a distribution over counts
  1..M, trained by applying the asymmetric detection loss to the expected
  count under the softmax, and
* a residual chain of per-sinusoid block estimators: block k estimates one
  (amplitude, frequency, phase) triple, its reconstruction is subtracted
  from the frame, and block k+1 sees the residual. Each block has a
  batch-normalized branch (frequency head), a phase head off the first conv
  stage, and an unnormalized branch (amplitude head) so amplitude scale
  survives.

Both trainers share an early-stopping loop with validation-driven learning
rate reduction and best-weights restore. Parameter-matched MLP/conv
baselines are provided for capacity-fair comparisons.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import (
    Activation,
    Adam,
    BatchNorm1D,
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    MaxPool1D,
    Network,
)
from .nn.checkpoint import load_chain, load_network, save_chain, save_network
from .signals import TWO_PI, LabeledExample, ParameterSet, substream
from .thresholds import amplitude_threshold, frequency_threshold, phase_threshold

_TAG_SPLIT = 7000
_TAG_EPOCH = 7001
_TAG_DETECT_NET = 11
_TAG_BLOCK_NET = 13
_TAG_BASELINE = 17


# --------------------------------------------------------------------------
# reconstruction
# --------------------------------------------------------------------------

def reconstruct(amps, freqs, phases, N: int) -> np.ndarray:
    """Complex frame sum_i a_i exp(j(2 pi f_i n + phi_i)), n = 0..N-1."""
    a = np.atleast_1d(np.asarray(amps, dtype=np.float64))
    f = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    p = np.atleast_1d(np.asarray(phases, dtype=np.float64))
    n = np.arange(N)
    theta = TWO_PI * f[:, None] * n + p[:, None]
    return (a[:, None] * np.exp(1j * theta)).sum(axis=0)


def _recon_iq(a, f, p, N):
    # (B,) params -> (B, N, 2) IQ of one sinusoid per row, in input dtype
    n = np.arange(N, dtype=a.dtype)
    theta = TWO_PI * f[:, None] * n + p[:, None]
    return np.stack([a[:, None] * np.cos(theta), a[:, None] * np.sin(theta)], axis=-1)


def _recon_jacobian(a, f, p, N):
    # partials of _recon_iq w.r.t. a, f, p; each (B, N, 2)
    n = np.arange(N, dtype=a.dtype)
    theta = TWO_PI * f[:, None] * n + p[:, None]
    c, s = np.cos(theta), np.sin(theta)
    ja = np.stack([c, s], axis=-1)
    jp = np.stack([-a[:, None] * s, a[:, None] * c], axis=-1)
    jf = TWO_PI * n[None, :, None] * jp
    return ja, jf, jp


# --------------------------------------------------------------------------
# architectures
# --------------------------------------------------------------------------

def build_detection_network(N: int = 64, M: int = 5, seed: int = 0,
                            dropout_rate: float = 0.7) -> Network:
    """Count classifier: 3 conv stages (32/64/128, pools 2/2/4) -> 2 dense."""
    if N % 16:
        raise ValueError(f"N must be divisible by 16, got {N}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_DETECT_NET]))
    net = Network()
    src = "x"
    c_in = 2
    for i, (c_out, pool) in enumerate([(32, 2), (64, 2), (128, 4)], start=1):
        net.add(f"conv{i}", Conv1D(c_in, c_out, 3, rng=rng), src)
        net.add(f"relu{i}", Activation("relu"), f"conv{i}")
        net.add(f"pool{i}", MaxPool1D(pool), f"relu{i}")
        net.add(f"bn{i}", BatchNorm1D(c_out), f"pool{i}")
        src, c_in = f"bn{i}", c_out
    net.add("flat", Flatten(), src)
    net.add("drop", Dropout(dropout_rate, seed=seed + 9001), "flat")
    net.add("fc1", Dense((N // 16) * 128, 128, rng=rng), "drop")
    net.add("fc1_relu", Activation("relu"), "fc1")
    net.add("fc2", Dense(128, 64, rng=rng), "fc1_relu")
    net.add("fc2_relu", Activation("relu"), "fc2")
    net.add("logits", Dense(64, M, rng=rng), "fc2_relu")
    net.add("probs", Activation("softmax"), "logits")
    return net


def build_block_network(N: int = 64, seed: int = 0, tag: int = 0) -> Network:
    """One residual block: outputs scalar heads "amp", "freq", "phase".

    Normalized branch (conv8+pool+BN -> conv16+pool+BN -> dense16 SeLU)
    feeds the frequency head; the phase head branches off the first
    normalized conv stage; the amplitude branch repeats the conv stack
    without BatchNorm so the input scale is preserved.
    """
    if N % 4:
        raise ValueError(f"N must be divisible by 4, got {N}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_BLOCK_NET, tag]))
    net = Network()
    flat_dim = (N // 4) * 16

    net.add("n1_conv", Conv1D(2, 8, 3, rng=rng), "x")
    net.add("n1_relu", Activation("relu"), "n1_conv")
    net.add("n1_pool", MaxPool1D(2), "n1_relu")
    net.add("n1_bn", BatchNorm1D(8), "n1_pool")
    net.add("n2_conv", Conv1D(8, 16, 3, rng=rng), "n1_bn")
    net.add("n2_relu", Activation("relu"), "n2_conv")
    net.add("n2_pool", MaxPool1D(2), "n2_relu")
    net.add("n2_bn", BatchNorm1D(16), "n2_pool")
    net.add("n_flat", Flatten(), "n2_bn")
    net.add("n_fc", Dense(flat_dim, 16, rng=rng), "n_flat")
    net.add("n_selu", Activation("selu"), "n_fc")
    net.add("freq", Dense(16, 1, rng=rng), "n_selu")

    net.add("p_conv", Conv1D(8, 16, 3, rng=rng), "n1_bn")
    net.add("p_relu", Activation("relu"), "p_conv")
    net.add("p_pool", MaxPool1D(2), "p_relu")
    net.add("p_flat", Flatten(), "p_pool")
    net.add("p_fc", Dense(flat_dim, 16, rng=rng), "p_flat")
    net.add("p_selu", Activation("selu"), "p_fc")
    net.add("phase", Dense(16, 1, rng=rng), "p_selu")

    net.add("u1_conv", Conv1D(2, 8, 3, rng=rng), "x")
    net.add("u1_relu", Activation("relu"), "u1_conv")
    net.add("u1_pool", MaxPool1D(2), "u1_relu")
    net.add("u2_conv", Conv1D(8, 16, 3, rng=rng), "u1_pool")
    net.add("u2_relu", Activation("relu"), "u2_conv")
    net.add("u2_pool", MaxPool1D(2), "u2_relu")
    net.add("u_flat", Flatten(), "u2_pool")
    net.add("u_fc", Dense(flat_dim, 16, rng=rng), "u_flat")
    net.add("u_selu", Activation("selu"), "u_fc")
    net.add("amp", Dense(16, 1, rng=rng), "u_selu")
    return net


HEADS = ("amp", "freq", "phase")


@dataclass
class SinusoidEstimator:
    """Residual chain of block networks; block k handles sinusoid k.

    residual_mode "stop_gradient" treats each reconstruction as a constant
    when backpropagating (the default, matching how the chain is trained
    block-locally); "differentiable" also propagates loss gradients through
    the reconstruction into earlier blocks.
    """

    blocks: list[Network]
    N: int = 64
    residual_mode: str = "stop_gradient"

    def __post_init__(self):
        if self.residual_mode not in ("stop_gradient", "differentiable"):
            raise ValueError(f"unknown residual_mode {self.residual_mode!r}")

    @property
    def m(self) -> int:
        return len(self.blocks)

    def param_count(self) -> int:
        return sum(b.param_count() for b in self.blocks)

    def astype(self, dtype) -> "SinusoidEstimator":
        return SinusoidEstimator(blocks=[b.astype(dtype) for b in self.blocks],
                                 N=self.N, residual_mode=self.residual_mode)


def build_estimator(m: int, N: int = 64, seed: int = 0,
                    residual_mode: str = "stop_gradient") -> SinusoidEstimator:
    blocks = [build_block_network(N, seed=seed, tag=k) for k in range(m)]
    return SinusoidEstimator(blocks=blocks, N=N, residual_mode=residual_mode)


def _chain_dtype(est: SinusoidEstimator):
    return next(iter(est.blocks[0].named_params().values())).dtype


def _forward_chain(est: SinusoidEstimator, X: np.ndarray, train: bool):
    """Runs all blocks on residuals; returns per-head (B, m) arrays.

    Leaves each block's layer caches populated (one backward per block may
    follow)."""
    R = np.ascontiguousarray(X, dtype=_chain_dtype(est))
    a_cols, f_cols, p_cols = [], [], []
    for k, net in enumerate(est.blocks):
        vals = net.forward(R, train=train)
        a = vals["amp"][:, 0]
        f = vals["freq"][:, 0]
        p = vals["phase"][:, 0]
        a_cols.append(a)
        f_cols.append(f)
        p_cols.append(p)
        if k + 1 < est.m:
            R = R - _recon_iq(a, f, p, est.N)
    return np.stack(a_cols, 1), np.stack(f_cols, 1), np.stack(p_cols, 1)


def estimator_forward_batch(est: SinusoidEstimator, X: np.ndarray):
    """Inference over a batch of IQ frames -> (amps, freqs, phases), (B, m)."""
    return _forward_chain(est, X, train=False)


def forward_estimator(est: SinusoidEstimator, x: np.ndarray) -> ParameterSet:
    """Single-frame inference. Heads are ordered by block (trained against
    frequency-sorted targets) but the outputs are reported as produced."""
    A, F, P = _forward_chain(est, x[None], train=False)
    return ParameterSet(m=est.m, amps=A[0], freqs=F[0], phases=P[0])


# --------------------------------------------------------------------------
# training configuration and data plumbing
# --------------------------------------------------------------------------

@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    detection_epochs: int = 20
    detection_samples: int = 50_000
    estimator_epochs: int = 60
    estimator_samples: int = 100_000
    val_fraction: float = 0.1
    patience: int = 8
    lr_patience: int = 4
    lr_factor: float = 0.5
    seed: int = 0


def detection_arrays(examples: list[LabeledExample]):
    X = np.stack([ex.x for ex in examples]).astype(np.float32)
    counts = np.array([ex.label.m for ex in examples], dtype=np.int64)
    return X, counts


def estimator_arrays(examples: list[LabeledExample]):
    m = examples[0].label.m
    if any(ex.label.m != m for ex in examples):
        raise ValueError("estimator training needs a fixed sinusoid count")
    X = np.stack([ex.x for ex in examples]).astype(np.float32)
    A = np.stack([ex.label.amps for ex in examples]).astype(np.float32)
    F = np.stack([ex.label.freqs for ex in examples]).astype(np.float32)
    P = np.stack([ex.label.phases for ex in examples]).astype(np.float32)
    return X, A, F, P


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        idx = order[i : i + batch_size]
        if len(idx) >= 2:  # BatchNorm needs at least two rows
            yield idx


def _fit(cfg: TrainConfig, epochs: int, n_train: int, run_epoch, eval_val,
         snapshot, restore, adam: Adam):
    """Shared epoch loop: LR reduction and early stop on validation loss."""
    history = []
    best = np.inf
    best_snap = None
    lr_wait = stop_wait = 0
    for epoch in range(epochs):
        rng = substream(cfg.seed, _TAG_EPOCH, epoch)
        train_loss = run_epoch(rng)
        val_loss = eval_val()
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_loss": val_loss, "lr": adam.lr})
        if val_loss < best - 1e-7:
            best = val_loss
            best_snap = snapshot()
            lr_wait = stop_wait = 0
        else:
            lr_wait += 1
            stop_wait += 1
            if stop_wait >= cfg.patience:
                break
            if lr_wait >= cfg.lr_patience:
                adam.lr *= cfg.lr_factor
                lr_wait = 0
    if best_snap is not None:
        restore(best_snap)
    return history


def _split(n: int, cfg: TrainConfig):
    perm = substream(cfg.seed, _TAG_SPLIT).permutation(n)
    n_val = max(1, int(round(cfg.val_fraction * n)))
    return perm[n_val:], perm[:n_val]


# --------------------------------------------------------------------------
# detection training
# --------------------------------------------------------------------------

def expected_count(probs: np.ndarray) -> np.ndarray:
    """Fractional count under a class distribution: sum_k k * p[..., k-1]."""
    ks = np.arange(1.0, probs.shape[-1] + 1.0, dtype=probs.dtype)
    return probs @ ks


def _expected_count_loss(probs: np.ndarray, counts: np.ndarray):
    """Detection loss of the expected count, plus its gradient w.r.t. probs.

    The loss is applied to mhat = sum_k k*p_k rather than as the
    probability-weighted cost sum C @ p: in the weighted-cost form a class's
    gradient is proportional to its own probability, so classes crushed early
    by their large average cost (answering 1 when the truth might be 5 costs
    e^4 - 1) can never recover, and the output collapses onto the two classes
    flanking the constant-optimum count. Routing the loss through the
    expected count keeps the push and pull on every class at comparable
    scale, which is what lets the classifier become input-dependent.
    """
    from .losses import detection_loss

    ks = np.arange(1.0, probs.shape[-1] + 1.0)
    mbar = probs.astype(np.float64) @ ks
    m = counts.astype(np.float64)
    loss = float(np.mean(detection_loss(m, mbar)))
    dmbar = np.where(m >= mbar, -np.exp(m - mbar), mbar - m) / len(probs)
    dprobs = dmbar[:, None] * ks[None, :]
    return loss, dprobs


def detection_batch_grads(net: Network, X: np.ndarray, counts: np.ndarray,
                          M: int, train: bool = True):
    """One forward/backward of the detection training loss; returns
    (loss, named grads). Gradients are left on the network."""
    net.zero_grads()
    vals = net.forward(X, train=train)
    probs = vals["probs"]
    loss, dprobs = _expected_count_loss(probs, counts)
    net.backward({"probs": dprobs.astype(probs.dtype)})
    return loss, net.named_grads()


def _detection_loss_eval(net: Network, X: np.ndarray, counts: np.ndarray,
                         chunk: int = 1024) -> float:
    total = 0.0
    for i in range(0, len(X), chunk):
        probs = net.forward(X[i : i + chunk], train=False)["probs"]
        loss, _ = _expected_count_loss(probs, counts[i : i + chunk])
        total += loss * len(probs)
    return total / len(X)


def train_detection(examples: list[LabeledExample], cfg: TrainConfig,
                    M: int = 5, net: Network | None = None):
    """Trains the count classifier on mixed-count frames.

    Returns (network, history); the network carries the best-validation
    weights."""
    X, counts = detection_arrays(examples)
    N = X.shape[1]
    if net is None:
        net = build_detection_network(N=N, M=M, seed=cfg.seed)
    tr, va = _split(len(X), cfg)
    adam = Adam(net.named_params(), lr=cfg.lr)

    def run_epoch(rng):
        total = weight = 0.0
        for idx in _epoch_batches(len(tr), cfg.batch_size, rng):
            b = tr[idx]
            loss, grads = detection_batch_grads(net, X[b], counts[b], M, train=True)
            adam.step(grads)
            total += loss * len(b)
            weight += len(b)
        return total / weight

    history = _fit(cfg, cfg.detection_epochs, len(tr), run_epoch,
                   lambda: _detection_loss_eval(net, X[va], counts[va]),
                   net.snapshot, net.restore, adam)
    return net, history


def detect_count_batch(net: Network, X: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Hard count decisions: argmax of the class distribution, as counts 1..M."""
    out = []
    for i in range(0, len(X), chunk):
        probs = net.forward(np.asarray(X[i : i + chunk], dtype=np.float32),
                            train=False)["probs"]
        out.append(probs.argmax(axis=1) + 1)
    return np.concatenate(out)


def detect_count(net: Network, x: np.ndarray) -> int:
    return int(detect_count_batch(net, x[None])[0])


# --------------------------------------------------------------------------
# estimator training
# --------------------------------------------------------------------------

def _effective_loss_terms(m: int, N: int):
    thr_a = amplitude_threshold()[1]
    thr_f = frequency_threshold(m, N)
    thr_p = phase_threshold()[1]
    return thr_a, thr_f, thr_p


def _eff_loss_and_head_grads(A, F, P, At, Ft, Pt, thr):
    thr_a, thr_f, thr_p = thr
    B, m = A.shape
    da, df, dp = A - At, F - Ft, P - Pt
    loss = (np.mean(da**2) / thr_a + np.mean(df**2) / thr_f
            + np.mean(dp**2) / thr_p) / m
    scale = 2.0 / (B * m * m)
    return float(loss), (scale / thr_a) * da, (scale / thr_f) * df, (scale / thr_p) * dp


def estimator_batch_grads(est: SinusoidEstimator, X, At, Ft, Pt,
                          train: bool = True):
    """Forward/backward of the threshold-normalized loss through the chain.

    Returns (loss, grads) with grads keyed "b{k}.{node}.{param}". In
    stop_gradient mode each block is differentiated against its own heads
    only; in differentiable mode the reconstruction couples blocks and
    gradients flow into earlier ones.
    """
    for net in est.blocks:
        net.zero_grads()
    A, F, P = _forward_chain(est, X, train=train)
    thr = _effective_loss_terms(est.m, est.N)
    loss, dA, dF, dP = _eff_loss_and_head_grads(
        A.astype(np.float64), F.astype(np.float64), P.astype(np.float64),
        At, Ft, Pt, thr)
    dtype = _chain_dtype(est)
    dA = dA.astype(dtype)
    dF = dF.astype(dtype)
    dP = dP.astype(dtype)

    if est.residual_mode == "stop_gradient":
        for k, net in enumerate(est.blocks):
            net.backward({"amp": dA[:, k : k + 1], "freq": dF[:, k : k + 1],
                          "phase": dP[:, k : k + 1]})
    else:
        dR = None  # gradient w.r.t. the residual fed to block k+1
        for k in range(est.m - 1, -1, -1):
            ga = dA[:, k].copy()
            gf = dF[:, k].copy()
            gp = dP[:, k].copy()
            if dR is not None:
                # residual update R' = R - recon(a, f, p)
                ja, jf, jp = _recon_jacobian(A[:, k].astype(dtype),
                                             F[:, k].astype(dtype),
                                             P[:, k].astype(dtype), est.N)
                ga -= (dR * ja).sum(axis=(1, 2))
                gf -= (dR * jf).sum(axis=(1, 2))
                gp -= (dR * jp).sum(axis=(1, 2))
            dx = est.blocks[k].backward({"amp": ga[:, None], "freq": gf[:, None],
                                         "phase": gp[:, None]})
            dR = dx if dR is None else dx + dR
    grads = {}
    for k, net in enumerate(est.blocks):
        for name, g in net.named_grads().items():
            grads[f"b{k}.{name}"] = g
    return loss, grads


def _chain_params(est: SinusoidEstimator) -> dict[str, np.ndarray]:
    return {f"b{k}.{name}": p
            for k, net in enumerate(est.blocks)
            for name, p in net.named_params().items()}


def _eval_estimator_loss(est: SinusoidEstimator, X, At, Ft, Pt,
                         chunk: int = 2048) -> float:
    thr = _effective_loss_terms(est.m, est.N)
    total = 0.0
    for i in range(0, len(X), chunk):
        A, F, P = _forward_chain(est, X[i : i + chunk], train=False)
        loss, *_ = _eff_loss_and_head_grads(
            A.astype(np.float64), F.astype(np.float64), P.astype(np.float64),
            At[i : i + chunk], Ft[i : i + chunk], Pt[i : i + chunk], thr)
        total += loss * len(A)
    return total / len(X)


def train_estimator(examples: list[LabeledExample], cfg: TrainConfig,
                    est: SinusoidEstimator | None = None,
                    residual_mode: str = "stop_gradient"):
    """Trains a residual-chain estimator on fixed-count frames.

    Targets are the frequency-sorted ground-truth triples; block k learns
    the k-th lowest-frequency sinusoid. Returns (estimator, history).
    """
    X, At, Ft, Pt = estimator_arrays(examples)
    At, Ft, Pt = (a.astype(np.float64) for a in (At, Ft, Pt))
    m = At.shape[1]
    N = X.shape[1]
    if est is None:
        est = build_estimator(m, N=N, seed=cfg.seed, residual_mode=residual_mode)
    tr, va = _split(len(X), cfg)
    adam = Adam(_chain_params(est), lr=cfg.lr)

    def run_epoch(rng):
        total = weight = 0.0
        for idx in _epoch_batches(len(tr), cfg.batch_size, rng):
            b = tr[idx]
            loss, grads = estimator_batch_grads(est, X[b], At[b], Ft[b], Pt[b])
            adam.step(grads)
            total += loss * len(b)
            weight += len(b)
        return total / weight

    def snapshot():
        return [net.snapshot() for net in est.blocks]

    def restore(snaps):
        for net, snap in zip(est.blocks, snaps):
            net.restore(snap)

    history = _fit(cfg, cfg.estimator_epochs, len(tr), run_epoch,
                   lambda: _eval_estimator_loss(est, X[va], At[va], Ft[va], Pt[va]),
                   snapshot, restore, adam)
    return est, history


# --------------------------------------------------------------------------
# parameter-matched baselines
# --------------------------------------------------------------------------

def _mlp_param_count(h: int, N: int, m: int) -> int:
    d_in, d_out = 2 * N, 3 * m
    return (d_in * h + h) + (h * h + h) + (h * d_out + d_out)

def _conv_param_count(c: int, N: int, m: int) -> int:
    d_out = 3 * m
    return (3 * 2 * c + c) + (3 * c * 2 * c + 2 * c) + ((N // 4) * 2 * c * d_out + d_out)


def build_baseline(kind: str, m: int, N: int = 64, seed: int = 0,
                   target_params: int | None = None) -> Network:
    """MLP or two-stage conv regressor with ~the same parameter count as the
    m-block residual chain (within 10%); output node "out" stacks the m
    amplitudes, then frequencies, then phases."""
    if target_params is None:
        target_params = build_estimator(m, N=N, seed=0).param_count()
    rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_BASELINE]))
    d_out = 3 * m
    net = Network()
    if kind == "mlp":
        counts = [(abs(_mlp_param_count(h, N, m) - target_params), h)
                  for h in range(1, 2049)]
        _, h = min(counts)
        got = _mlp_param_count(h, N, m)
        net.add("flat", Flatten(), "x")
        net.add("fc1", Dense(2 * N, h, rng=rng), "flat")
        net.add("fc1_relu", Activation("relu"), "fc1")
        net.add("fc2", Dense(h, h, rng=rng), "fc1_relu")
        net.add("fc2_relu", Activation("relu"), "fc2")
        net.add("out", Dense(h, d_out, rng=rng), "fc2_relu")
    elif kind == "conv":
        counts = [(abs(_conv_param_count(c, N, m) - target_params), c)
                  for c in range(1, 1025)]
        _, c = min(counts)
        got = _conv_param_count(c, N, m)
        net.add("conv1", Conv1D(2, c, 3, rng=rng), "x")
        net.add("relu1", Activation("relu"), "conv1")
        net.add("pool1", MaxPool1D(2), "relu1")
        net.add("conv2", Conv1D(c, 2 * c, 3, rng=rng), "pool1")
        net.add("relu2", Activation("relu"), "conv2")
        net.add("pool2", MaxPool1D(2), "relu2")
        net.add("flat", Flatten(), "pool2")
        net.add("out", Dense((N // 4) * 2 * c, d_out, rng=rng), "flat")
    else:
        raise ValueError(f"unknown baseline kind {kind!r}")
    if abs(got - target_params) > 0.1 * target_params:
        raise ValueError(
            f"no {kind} width matches {target_params} parameters within 10% "
            f"(closest {got})")
    return net


def baseline_batch_grads(net: Network, X, At, Ft, Pt, m: int, N: int,
                         train: bool = True):
    """Same threshold-normalized loss, direct 3m-way regression head."""
    net.zero_grads()
    out = net.forward(np.asarray(X, dtype=np.float32), train=train)["out"]
    A, F, P = out[:, :m], out[:, m : 2 * m], out[:, 2 * m :]
    thr = _effective_loss_terms(m, N)
    loss, dA, dF, dP = _eff_loss_and_head_grads(
        A.astype(np.float64), F.astype(np.float64), P.astype(np.float64),
        At, Ft, Pt, thr)
    dout = np.concatenate([dA, dF, dP], axis=1).astype(np.float32)
    net.backward({"out": dout})
    return loss, net.named_grads()


def baseline_forward_batch(net: Network, X: np.ndarray, m: int,
                           chunk: int = 4096):
    A, F, P = [], [], []
    for i in range(0, len(X), chunk):
        out = net.forward(np.asarray(X[i : i + chunk], dtype=np.float32),
                          train=False)["out"]
        A.append(out[:, :m])
        F.append(out[:, m : 2 * m])
        P.append(out[:, 2 * m :])
    return np.concatenate(A), np.concatenate(F), np.concatenate(P)


def train_baseline(examples: list[LabeledExample], cfg: TrainConfig,
                   kind: str = "conv", net: Network | None = None):
    """Trains a parameter-matched baseline on fixed-count frames."""
    X, At, Ft, Pt = estimator_arrays(examples)
    At, Ft, Pt = (a.astype(np.float64) for a in (At, Ft, Pt))
    m = At.shape[1]
    N = X.shape[1]
    if net is None:
        net = build_baseline(kind, m, N=N, seed=cfg.seed)
    tr, va = _split(len(X), cfg)
    adam = Adam(net.named_params(), lr=cfg.lr)

    def run_epoch(rng):
        total = weight = 0.0
        for idx in _epoch_batches(len(tr), cfg.batch_size, rng):
            b = tr[idx]
            loss, grads = baseline_batch_grads(net, X[b], At[b], Ft[b], Pt[b], m, N)
            adam.step(grads)
            total += loss * len(b)
            weight += len(b)
        return total / weight

    def eval_val():
        thr = _effective_loss_terms(m, N)
        A, F, P = baseline_forward_batch(net, X[va], m)
        loss, *_ = _eff_loss_and_head_grads(
            A.astype(np.float64), F.astype(np.float64), P.astype(np.float64),
            At[va], Ft[va], Pt[va], thr)
        return loss

    history = _fit(cfg, cfg.estimator_epochs, len(tr), run_epoch, eval_val,
                   net.snapshot, net.restore, adam)
    return net, history


# --------------------------------------------------------------------------
# bundled pipeline
# --------------------------------------------------------------------------

@dataclass
class SignalNetModel:
    """Detection network plus one residual-chain estimator per count."""

    detection: Network
    estimators: dict[int, SinusoidEstimator] = field(default_factory=dict)
    N: int = 64
    M: int = 5
    bits: int = 3


def signalnet_infer(model: SignalNetModel, x: np.ndarray):
    """Full pipeline on one frame: detect count, then estimate parameters.

    Returns (count, ParameterSet)."""
    mhat = detect_count(model.detection, x)
    if mhat not in model.estimators:
        raise KeyError(f"no estimator for detected count {mhat}")
    return mhat, forward_estimator(model.estimators[mhat], x)


def signalnet_infer_batch(model: SignalNetModel, X: np.ndarray):
    """Batched pipeline: returns (counts (B,), list of ParameterSet)."""
    counts = detect_count_batch(model.detection, X)
    results: list[ParameterSet | None] = [None] * len(X)
    for mhat in np.unique(counts):
        if mhat not in model.estimators:
            raise KeyError(f"no estimator for detected count {int(mhat)}")
        idx = np.flatnonzero(counts == mhat)
        A, F, P = estimator_forward_batch(model.estimators[mhat], X[idx])
        for j, b in enumerate(idx):
            results[b] = ParameterSet(m=int(mhat), amps=A[j], freqs=F[j],
                                      phases=P[j])
    return counts, results


def save_signalnet(model: SignalNetModel, out_dir) -> Path:
    """Writes detection.ckpt, est_m{k}.ckpt and a signalnet.json manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_network(model.detection, out / "detection.ckpt",
                 meta={"task": "detection", "N": model.N, "M": model.M,
                       "bits": model.bits})
    manifest = {"N": model.N, "M": model.M, "bits": model.bits,
                "detection": "detection.ckpt", "estimators": {}}
    for m, est in sorted(model.estimators.items()):
        name = f"est_m{m}.ckpt"
        save_chain(est.blocks, out / name,
                   meta={"task": "estimator", "m": m, "N": est.N,
                         "bits": model.bits, "residual_mode": est.residual_mode})
        manifest["estimators"][str(m)] = name
    path = out / "signalnet.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return path


def load_signalnet(path) -> SignalNetModel:
    """Loads a bundle from its manifest (or the directory containing it)."""
    p = Path(path)
    if p.is_dir():
        p = p / "signalnet.json"
    manifest = json.loads(p.read_text())
    base = p.parent
    detection, _ = load_network(base / manifest["detection"])
    estimators = {}
    for m_str, name in manifest["estimators"].items():
        blocks, meta = load_chain(base / name)
        estimators[int(m_str)] = SinusoidEstimator(
            blocks=blocks, N=meta.get("N", manifest["N"]),
            residual_mode=meta.get("residual_mode", "stop_gradient"))
    return SignalNetModel(detection=detection, estimators=estimators,
                          N=manifest["N"], M=manifest["M"],
                          bits=manifest["bits"])


def load_estimator(path) -> tuple[SinusoidEstimator, dict]:
    """Loads a single chain checkpoint written by save_chain."""
    blocks, meta = load_chain(path)
    est = SinusoidEstimator(blocks=blocks, N=int(meta.get("N", 64)),
                            residual_mode=meta.get("residual_mode",
                                                   "stop_gradient"))
    return est, meta


def save_estimator(est: SinusoidEstimator, path, bits: int | None = None,
                   extra: dict | None = None):
    meta = {"task": "estimator", "m": est.m, "N": est.N,
            "residual_mode": est.residual_mode}
    if bits is not None:
        meta["bits"] = bits
    if extra:
        meta.update(extra)
    save_chain(est.blocks, path, meta=meta)
