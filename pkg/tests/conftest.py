import os

import numpy as np
import pytest

from fairmislead.constants import FINGERPRINT_PERIOD
from fairmislead.data.manifest import DemographicKey, Label, Method, PredictionRecord, load_image
from fairmislead.synth.synthgen import SynthConfig, generate_dataset
from fairmislead.trainer.augment import AugmentConfig
from fairmislead.trainer.model import TrainConfig
from fairmislead.trainer.trainer import train_pipeline


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow experiments"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session", autouse=True)
def quiet_environment(tmp_path_factory):
    log_dir = tmp_path_factory.mktemp("logs")
    os.environ["FAIRMISLEAD_LOGGER_PATH"] = str(log_dir / "fairmislead.log")
    os.environ["FAIRMISLEAD_NO_COLORS"] = "true"
    os.environ.pop("FAIRMISLEAD_CONFIG_YML", None)
    yield


def tiny_synth_config(**kwargs):
    params = dict(
        image_size=16,
        n_per_split={"train": 48, "val": 16, "test": 40},
        subgroup_proportions={"M-W": 0.7, "F-B": 0.3},
        fingerprint_strength=0.3,
        seed=0,
    )
    params.update(kwargs)
    return SynthConfig(**params)


def tiny_train_config(**kwargs):
    params = dict(
        batch_size=8,
        epochs_pretrain=1,
        epochs_misleading=1,
        input_size=16,
        widths=(8, 8, 16, 16),
        aux_widths=(4, 8),
        feature_dim=8,
        srm_channels=6,
        augment=AugmentConfig(enabled=False),
    )
    params.update(kwargs)
    return TrainConfig(**params)


@pytest.fixture
def synth_config():
    return tiny_synth_config()


@pytest.fixture
def train_config():
    return tiny_train_config()


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("synthetic")
    return generate_dataset(tiny_synth_config(), str(out_dir))


@pytest.fixture(scope="session")
def trained(tiny_dataset):
    """
    (pretrain checkpoint, misleading checkpoint, training log) of one
    tiny run, shared by the tests that only read them
    """
    return train_pipeline(tiny_train_config(), tiny_dataset)


def make_record(sample_id, score, label, subgroup="M-W", method=None):
    label = Label(label)
    if label == Label.FAKE and method is None:
        method = Method.DF
    return PredictionRecord(
        sample_id=str(sample_id),
        score=float(score),
        label=label,
        subgroup=DemographicKey.parse(subgroup),
        method=method,
    )


def period_energy(image):
    """
    Fixed high-pass detector: spectral magnitude of the grayscale image at
    the four frequency bins of the planted fingerprint period
    """
    gray = np.asarray(image, dtype=np.float64).mean(axis=2)
    spectrum = np.abs(np.fft.fft2(gray - gray.mean()))
    k = gray.shape[0] // FINGERPRINT_PERIOD
    return float(spectrum[np.ix_((k, -k), (k, -k))].sum())


def split_statistics(manifest, split="train"):
    """
    (labels, period energies, subgroups) of the images of a split
    """
    labels, energies, subgroups = list(), list(), list()
    for entry in manifest.in_split(split):
        labels.append(int(entry.label))
        energies.append(period_energy(load_image(manifest.resolve(entry))))
        subgroups.append(str(entry.subgroup))
    return np.array(labels), np.array(energies), subgroups
