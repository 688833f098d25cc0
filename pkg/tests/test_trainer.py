import copy
import json
import math

import numpy as np
import pytest
import torch
from torch import nn

from cropseg import imagery, netbuilder, objectives, trainer
from cropseg.imagery import AnnotatedSample, AugmentationConfig, SceneSpec
from cropseg.netbuilder import ConfigurationError, NetworkConfig
from cropseg.trainer import TrainConfig, TrainingDivergedError

TINY = NetworkConfig(depth=2, base_width=4, input_side=16)
TINY_SCENE = SceneSpec(width=16, height=16, radius_range=(3, 6), center_jitter=1,
                       distractor_count=(0, 1), distractor_radius_range=(2, 4))


def tiny_samples(n=10, seed=0):
    return imagery.synthetic_samples(n, TINY_SCENE, seed=seed)


class GreenChannelNet(nn.Module):
    """Stub whose prediction is whatever mask is stored in the green channel."""

    def __init__(self, side):
        super().__init__()
        self.config = NetworkConfig(depth=1, base_width=1, input_side=side)

    def forward(self, x):
        return (x[:, 1:2] * 2.0 - 1.0) * 20.0


def stub_sample(pred, truth, name=""):
    img = np.zeros(pred.shape + (3,))
    img[..., 1] = pred
    return AnnotatedSample(img, truth.astype(np.uint8), name)


def masks_with_iou(shared, only_truth, only_pred, side=8):
    truth = np.zeros(side * side, np.uint8)
    pred = np.zeros(side * side, np.uint8)
    truth[:shared + only_truth] = 1
    pred[only_truth:only_truth + shared + only_pred] = 1
    return pred.reshape(side, side), truth.reshape(side, side)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    cfg = TrainConfig(augmentation={"flip_probability": 0.3})
    assert isinstance(cfg.augmentation, AugmentationConfig)
    assert json.loads(json.dumps(cfg.to_dict()))["augmentation"]["flip_probability"] == 0.3


def test_one_epoch_gives_one_record():
    net = netbuilder.build_network(TINY, 0)
    res = trainer.train(net, tiny_samples(6), tiny_samples(2, 1), TrainConfig(max_epochs=1, batch_size=4))
    assert len(res.records) == 1 and res.records[0].epoch == 1


def test_record_schedule_and_best_selection(tmp_path):
    samples = tiny_samples(10)
    tr, va = imagery.split_dataset(samples, 0.8, 0)
    cfg = TrainConfig(max_epochs=7, eval_every=3, batch_size=3, tag="t")
    res = trainer.train(netbuilder.build_network(TINY, 1), tr, va, cfg, out_dir=tmp_path)
    assert [r.epoch for r in res.records] == [3, 6, 7]
    best = max(res.records, key=lambda r: r.val_iou)
    assert res.best_val_iou == best.val_iou
    assert res.best_epoch == min(r.epoch for r in res.records if r.val_iou == best.val_iou)
    for r in res.records:
        assert all(math.isfinite(v) for v in (r.train_loss, r.val_loss, r.train_iou, r.val_iou))
        assert 0 <= r.train_iou <= 1 and 0 <= r.val_iou <= 1

    rows = trainer.read_curves_csv(tmp_path / "curves.csv")
    assert rows == res.records
    for name in ("loss_full", "loss_last_half", "iou_full", "iou_last_half"):
        assert (tmp_path / f"{name}.png").stat().st_size > 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["checkpoint"] == f"net_dic_t_{res.best_epoch:05d}.pt"
    assert manifest["train_hash"] == trainer.dataset_hash(tr)

    # reloading the best checkpoint reproduces its validation IoU
    loaded, meta = netbuilder.load_checkpoint(tmp_path / manifest["checkpoint"], TINY)
    assert meta["epoch"] == res.best_epoch
    again = trainer.evaluate(loaded, va).mean_iou
    assert abs(again - res.best_val_iou) <= 1e-6


def test_empty_validation_keeps_last():
    cfg = TrainConfig(max_epochs=4, eval_every=2, batch_size=4)
    res = trainer.train(netbuilder.build_network(TINY, 0), tiny_samples(5), [], cfg)
    assert res.best_epoch == 4


def test_training_is_deterministic():
    for aug in (None, AugmentationConfig(seed=3)):
        cfg = TrainConfig(max_epochs=3, eval_every=1, batch_size=4, augmentation=aug, seed=5)
        a = trainer.train(netbuilder.build_network(TINY, 2), tiny_samples(8), tiny_samples(3, 1), cfg)
        b = trainer.train(netbuilder.build_network(TINY, 2), tiny_samples(8), tiny_samples(3, 1), cfg)
        assert a.records == b.records
        sa, sb = a.net.state_dict(), b.net.state_dict()
        assert all(torch.equal(sa[k], sb[k]) for k in sa)


def test_single_step_decreases_loss():
    rng = np.random.default_rng(0)
    decreased = 0
    for trial in range(50):
        net = netbuilder.build_network(TINY, trial).train()
        batch = tiny_samples(4, seed=int(rng.integers(1 << 30)))
        x = trainer._stack_images([s.image for s in batch])
        t = trainer._stack_masks([s.mask for s in batch])
        opt = torch.optim.Adam(net.parameters(), lr=1e-4)
        loss = objectives.soft_dice_loss_torch(torch.sigmoid(net(x)), t)
        opt.zero_grad()
        loss.backward()
        opt.step()
        with torch.no_grad():
            after = objectives.soft_dice_loss_torch(torch.sigmoid(net(x)), t)
        decreased += after.item() < loss.item()
    assert decreased >= 48


def test_nan_input_aborts_with_location():
    bad = tiny_samples(4)
    bad[2] = AnnotatedSample(np.full((16, 16, 3), np.nan), bad[2].mask)
    with pytest.raises(TrainingDivergedError, match=r"epoch 1, batch \d"):
        trainer.train(netbuilder.build_network(TINY, 0), bad, [], TrainConfig(max_epochs=2, batch_size=2))


def test_huge_learning_rate_diverges():
    cfg = TrainConfig(learning_rate=1e30, max_epochs=20, batch_size=2)
    with pytest.raises(TrainingDivergedError):
        trainer.train(netbuilder.build_network(TINY, 0), tiny_samples(6), [], cfg)


def test_side_mismatch():
    with pytest.raises(ConfigurationError):
        trainer.train(netbuilder.build_network(NetworkConfig(2, 4, 32), 0), tiny_samples(2), [],
                      TrainConfig(max_epochs=1))


def test_fine_tune_from_path_and_mismatch(tmp_path):
    net = netbuilder.build_network(TINY, 0)
    path = netbuilder.save_checkpoint(net, tmp_path, "base")
    res = trainer.fine_tune(path, tiny_samples(4), tiny_samples(2, 1), TrainConfig(learning_rate=1e-4, max_epochs=2))
    assert res.records[-1].epoch == 2
    with pytest.raises(ConfigurationError):
        trainer.fine_tune(path, tiny_samples(4), [], expected_config=NetworkConfig(2, 8, 16))
    with pytest.raises(ConfigurationError):
        trainer.fine_tune(net, tiny_samples(4), [], expected_config=NetworkConfig(2, 8, 16))
    # the source network is not modified in place
    assert all(torch.equal(a, b) for a, b in zip(net.state_dict().values(),
                                                  netbuilder.build_network(TINY, 0).state_dict().values()))


def test_evaluate_stubs():
    net = GreenChannelNet(8)
    rng = np.random.default_rng(0)
    perfect = []
    for _ in range(4):
        m = (rng.random((8, 8)) > 0.5).astype(np.uint8)
        perfect.append(stub_sample(m, m))
    assert trainer.evaluate(net, perfect).mean_iou == 1.0

    a = stub_sample(*masks_with_iou(4, 6, 0))      # 4 / 10
    b = stub_sample(*masks_with_iou(8, 2, 0))      # 8 / 10
    res = trainer.evaluate(net, [a, b])
    assert res.per_sample == [0.4, 0.8]
    assert res.mean_iou == pytest.approx(0.6, abs=1e-15)
    with pytest.raises(ValueError):
        trainer.evaluate(net, [])


def test_evaluate_is_order_invariant():
    net = netbuilder.build_network(TINY, 3)
    data = tiny_samples(9)
    base = trainer.evaluate(net, data).mean_iou
    rng = np.random.default_rng(1)
    for _ in range(5):
        perm = [data[i] for i in rng.permutation(len(data))]
        assert trainer.evaluate(net, perm).mean_iou == base


def test_evaluate_augmented_is_seeded():
    net = netbuilder.build_network(TINY, 3)
    data = tiny_samples(5)
    a = trainer.evaluate(net, data, augmented=True, seed=4)
    b = trainer.evaluate(net, data, augmented=True, seed=4)
    assert a.per_sample == b.per_sample


def test_ablation_runner_small(tmp_path):
    deep = NetworkConfig(3, 2, 16)
    shallow = NetworkConfig(1, 4, 16)
    rows = trainer.run_depth_ablation(tiny_samples(10), seeds=(0, 1), deep=deep, shallow=shallow,
                                      max_epochs=2, eval_every=1, out_dir=tmp_path)
    assert [(r.variant, r.seed) for r in rows] == [("deep", 0), ("shallow", 0), ("deep", 1), ("shallow", 1)]
    assert rows[0].parameters == netbuilder.closed_form_parameter_count(deep)
    margins = trainer.ablation_margins(rows)
    assert set(margins) == {0, 1}
    assert (tmp_path / "ablation.csv").read_text().count("\n") == 5


@pytest.mark.slow
def test_fine_tune_recovers_blurred_domain(desk_run):
    base = desk_run["result"].net
    blurred = imagery.synthetic_samples(40, imagery.SCENE_PRESETS["blurred"], seed=2)
    tr, va = imagery.split_dataset(blurred, 0.8, 0)
    held_out = imagery.synthetic_samples(20, imagery.SCENE_PRESETS["blurred"], seed=3)
    before = trainer.evaluate(base, held_out).mean_iou
    cfg = TrainConfig(learning_rate=1e-4, max_epochs=100, eval_every=10, augmentation=AugmentationConfig(seed=0))
    tuned = trainer.fine_tune(copy.deepcopy(base), tr, va, cfg)
    after = trainer.evaluate(tuned.net, held_out).mean_iou
    print(f"blurred-set IoU before {before:.4f}, after {after:.4f}")
    assert after - before >= 0.1
