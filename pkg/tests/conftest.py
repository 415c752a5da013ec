"""Shared fixtures: desk-scale trained models, cached under tests/.model_cache.

The first run trains everything on one core (roughly 15-20 minutes); later
runs load checkpoints. Delete the cache directory to force retraining. Cache
file names encode the training recipe, so changing a budget below invalidates
only the affected model.

`python -c "import sys; sys.path.insert(0, 'tests'); import conftest;
conftest.warm_all()"` pre-builds the cache outside pytest.
"""
from pathlib import Path

import pytest

from qsine.nn.checkpoint import load_network, save_network
from qsine.signals import GenConfig, make_dataset
from qsine.signalnet import (
    SignalNetModel,
    TrainConfig,
    load_estimator,
    save_estimator,
    save_signalnet,
    train_detection,
    train_estimator,
)

CACHE = Path(__file__).resolve().parent / ".model_cache"

DET_SAMPLES = 50_000
DET_EPOCHS = 20
# detection training draws SNR from a wider spread than the evaluation
# sweep: count signatures keep sharpening above 10 dB, and the extra
# clean-regime exposure is what lets one model beat the eigenvalue
# criteria across the whole SNR >= 0 range
DET_SNR_RANGE = (-10.0, 20.0)
EST_SAMPLES = 20_000
EST_EPOCHS = 60  # early stopping usually ends far sooner

_DET_DATA_SEED = 910
_EST_DATA_SEED = {m: 920 + m for m in range(1, 6)}
_B1_DATA_SEED = 931
_TRAIN_SEED = 7


def _det_path() -> Path:
    hi = int(DET_SNR_RANGE[1])
    return (CACHE /
            f"det_b3_n{DET_SAMPLES}_e{DET_EPOCHS}_s{_TRAIN_SEED}_hi{hi}.ckpt")


def _est_path(m: int, bits: int) -> Path:
    return CACHE / f"est_m{m}_b{bits}_n{EST_SAMPLES}_s{_TRAIN_SEED}.ckpt"


def _ensure_detection() -> Path:
    path = _det_path()
    if not path.exists():
        CACHE.mkdir(exist_ok=True)
        cfg = GenConfig(bits=3, seed=_DET_DATA_SEED, snr_range=DET_SNR_RANGE)
        examples = make_dataset(cfg, DET_SAMPLES)
        tcfg = TrainConfig(seed=_TRAIN_SEED, detection_epochs=DET_EPOCHS,
                           detection_samples=DET_SAMPLES)
        net, _ = train_detection(examples, tcfg)
        save_network(net, path, meta={"task": "detection", "N": 64, "M": 5,
                                      "bits": 3})
    return path


def _ensure_estimator(m: int, bits: int) -> Path:
    path = _est_path(m, bits)
    if not path.exists():
        CACHE.mkdir(exist_ok=True)
        data_seed = _EST_DATA_SEED[m] if bits == 3 else _B1_DATA_SEED
        cfg = GenConfig(bits=bits, seed=data_seed, m_fixed=m,
                        snr_range=(-10.0, 10.0))
        examples = make_dataset(cfg, EST_SAMPLES)
        tcfg = TrainConfig(seed=_TRAIN_SEED, estimator_epochs=EST_EPOCHS,
                           estimator_samples=EST_SAMPLES)
        est, _ = train_estimator(examples, tcfg)
        save_estimator(est, path, bits=bits)
    return path


def _ensure_bundle() -> Path:
    bundle_dir = CACHE / "bundle_b3"
    manifest = bundle_dir / "signalnet.json"
    if not manifest.exists():
        det, _ = load_network(_ensure_detection())
        estimators = {}
        for m in range(1, 6):
            estimators[m], _ = load_estimator(_ensure_estimator(m, bits=3))
        model = SignalNetModel(detection=det, estimators=estimators,
                               N=64, M=5, bits=3)
        save_signalnet(model, bundle_dir)
    return bundle_dir


def warm_all():
    _ensure_detection()
    for m in range(1, 6):
        _ensure_estimator(m, bits=3)
    _ensure_estimator(1, bits=1)
    _ensure_bundle()
    print("model cache is warm:", sorted(p.name for p in CACHE.iterdir()))


@pytest.fixture(scope="session")
def detection_net_b3():
    net, _ = load_network(_ensure_detection())
    return net


@pytest.fixture(scope="session")
def est_m1_b3():
    est, _ = load_estimator(_ensure_estimator(1, bits=3))
    return est


@pytest.fixture(scope="session")
def est_m2_b3():
    est, _ = load_estimator(_ensure_estimator(2, bits=3))
    return est


@pytest.fixture(scope="session")
def est_m2_b3_path():
    return _ensure_estimator(2, bits=3)


@pytest.fixture(scope="session")
def est_m1_b1():
    est, _ = load_estimator(_ensure_estimator(1, bits=1))
    return est


@pytest.fixture(scope="session")
def bundle_b3_dir():
    return _ensure_bundle()


if __name__ == "__main__":
    warm_all()
