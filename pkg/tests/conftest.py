import pytest

from jmsc.config import RunConfig


def tiny_config(**over) -> RunConfig:
    """Small but complete configuration: fast to simulate, valid CNN input sizes."""
    base = RunConfig().replace(
        scenario__n_sequences=2,
        scenario__seq_len=14,
        scenario__n_beams=16,
        scenario__n_ant=16,
        scenario__image_size=[64, 64],
        scenario__lidar_channels=16,
        scenario__lidar_yaw_samples=128,
        preprocess__vision_size=[60, 60],
        preprocess__lidar_hw=[60, 64],
        model__dim=16,
        model__depth=1,
        model__heads=2,
        model__predictor_depth=1,
        model__head_hidden=16,
        model__cnn_channels=[4, 4, 4],
        pretrain__epochs=2,
        pretrain__batch_size=2,
        heads__epochs=2,
        heads__batch_size=2,
    )
    return base.replace(**over) if over else base


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    """A generated tiny dataset, shared read-only across tests."""
    from jmsc.sim.dataset import generate_dataset

    path = tmp_path_factory.mktemp("tiny-data")
    generate_dataset(tiny_config(), path)
    return path
