import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(1)

# desk-scale training recipe shared by the acceptance, trainer and CLI tests
DESK_SCENES = 40
DESK_SCENE_SEED = 1
DESK_EPOCHS = 120

_acceptance = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """A depth-4/base-16/side-128 network trained on 40 synthetic scenes."""
    from cropseg import imagery, netbuilder, trainer

    out = tmp_path_factory.mktemp("desk")
    samples = imagery.synthetic_samples(DESK_SCENES, imagery.SCENE_PRESETS["default"], seed=DESK_SCENE_SEED)
    train_set, val_set = imagery.split_dataset(samples, 0.8, seed=0)
    net = netbuilder.build_network(netbuilder.NetworkConfig(depth=4, base_width=16, input_side=128), 0)
    cfg = trainer.TrainConfig(max_epochs=DESK_EPOCHS, eval_every=10, tag="desk",
                              augmentation=imagery.AugmentationConfig(seed=0))
    result = trainer.train(net, train_set, val_set, cfg, out_dir=out)
    return {"result": result, "out": out, "train": train_set, "val": val_set, "config": cfg}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    status = "PASS" if rep.passed else "FAIL"
    line = f"[{status}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
    _acceptance.append((number, line))
    sys.stdout.write("\n" + line + "\n")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_acceptance):
        terminalreporter.write_line(line)
