import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from cropseg import cli, imagery, netbuilder

SUBCOMMANDS = ["train", "finetune", "eval", "ablate", "segment", "track", "report", "synth", "probe"]

TINY_CONFIG = {
    "network": {"depth": 2, "base_width": 4, "input_side": 16},
    "training": {"batch_size": 4, "max_epochs": 3, "eval_every": 1, "seed": 0, "tag": "tiny"},
    "augmentation": {"seed": 0},
    "data": {"synthetic": {"count": 10, "seed": 0,
                           "scene": {"width": 16, "height": 16, "radius_range": [3, 6], "center_jitter": 1,
                                     "distractor_count": [0, 1], "distractor_radius_range": [2, 4]}},
             "train_fraction": 0.8, "split_seed": 0},
    "output_dir": "run",
    "init_seed": 0,
}


def write_config(path, cfg):
    path.write_text(yaml.safe_dump(cfg))
    return path


def tree(root):
    return sorted(str(p.relative_to(root)) for p in Path(root).rglob("*"))


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_subcommand_help(sub, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        cli.main([sub, "--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out
    assert tree(tmp_path) == []


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "cropseg", "--help"], capture_output=True, text=True, cwd=tmp_path)
    assert r.returncode == 0 and "track" in r.stdout


def test_train_writes_only_inside_output_dir(tmp_path, monkeypatch, capsys):
    cfg_dir = tmp_path / "cfg"
    cfg_dir.mkdir()
    cwd = tmp_path / "cwd"
    cwd.mkdir()
    monkeypatch.chdir(cwd)
    path = write_config(cfg_dir / "run.yaml", TINY_CONFIG)
    assert cli.main(["train", str(path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert Path(out["checkpoint"]).exists()
    assert tree(cwd) == []
    outside = [p for p in tree(tmp_path) if not p.startswith(("cfg/run", "cwd"))]
    assert outside == ["cfg"]
    run = cfg_dir / "run"
    assert {"curves.csv", "manifest.json", "best.pt", "best.json"} <= set(tree(run))
    rows = list(csv.DictReader(open(run / "curves.csv")))
    assert len(rows) == 3


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = dict(TINY_CONFIG, trainig={"x": 1})
    assert cli.main(["train", str(write_config(tmp_path / "c.yaml", cfg))]) == 2
    assert "trainig" in capsys.readouterr().err
    cfg = json.loads(json.dumps(TINY_CONFIG))
    cfg["training"]["lr"] = 0.1
    assert cli.main(["train", str(write_config(tmp_path / "c.yaml", cfg))]) == 2
    assert "lr" in capsys.readouterr().err


def test_missing_inputs_exit_2(tmp_path):
    cfg = json.loads(json.dumps(TINY_CONFIG))
    cfg["data"] = {"annotations": "nowhere"}
    assert cli.main(["train", str(write_config(tmp_path / "c.yaml", cfg))]) == 2
    assert cli.main(["train", str(tmp_path / "absent.yaml")]) == 2
    assert cli.main(["segment", str(tmp_path / "none.pt"), str(tmp_path / "x.png")]) == 2
    assert cli.main(["report", str(tmp_path / "none.csv")]) == 2


def test_divergence_exit_3(tmp_path):
    cfg = json.loads(json.dumps(TINY_CONFIG))
    cfg["training"].update(learning_rate=1e30, max_epochs=20)
    cfg["output_dir"] = str(tmp_path / "run")
    assert cli.main(["train", str(write_config(tmp_path / "c.yaml", cfg))]) == 3


def test_train_from_annotations(tmp_path, capsys):
    ann_dir = tmp_path / "ann"
    ann_dir.mkdir()
    assert cli.main(["--seed", "2", "synth", "--count", "6", "--out", str(ann_dir)]) == 0
    cfg = json.loads(json.dumps(TINY_CONFIG))
    cfg["network"]["input_side"] = 32
    cfg["data"] = {"annotations": "ann", "label": "fruit", "train_fraction": 0.5}
    cfg["training"]["max_epochs"] = 1
    assert cli.main(["train", str(write_config(tmp_path / "c.yaml", cfg))]) == 0
    capsys.readouterr()
    ckpt = tmp_path / "run" / "best.pt"
    assert cli.main(["eval", str(ckpt), str(tmp_path / "c.yaml"), "--split", "val",
                     "--out", str(tmp_path / "ev")]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["samples"] == 3 and 0 <= res["mean_iou"] <= 1


def test_finetune_mismatch_exit_2(tmp_path):
    net = netbuilder.build_network(netbuilder.NetworkConfig(2, 8, 16), 0)
    ckpt = netbuilder.save_checkpoint(net, tmp_path, "wide")
    cfg = dict(TINY_CONFIG, output_dir=str(tmp_path / "ft"))
    assert cli.main(["finetune", str(write_config(tmp_path / "c.yaml", cfg)), "--checkpoint", str(ckpt)]) == 2
    cfg.pop("network")
    assert cli.main(["finetune", str(write_config(tmp_path / "c.yaml", cfg)), "--checkpoint", str(ckpt),
                     "--epochs", "1"]) == 0


def test_device_env(tmp_path, monkeypatch):
    net = netbuilder.build_network(netbuilder.NetworkConfig(2, 4, 16), 0)
    ckpt = netbuilder.save_checkpoint(net, tmp_path, "n")
    imagery.save_image(tmp_path / "x.png", np.zeros((16, 16, 3)))
    monkeypatch.setenv("CROPSEG_DEVICE", "tpu9")
    assert cli.main(["segment", str(ckpt), str(tmp_path / "x.png"), "--out", str(tmp_path / "o")]) == 2


def test_probe_and_synth(tmp_path, capsys):
    assert cli.main(["synth", "--preset", "hard", "--count", "2", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert cli.main(["probe", str(tmp_path / "scene_0000.png"), "--columns", "16"]) == 0
    out = capsys.readouterr().out
    assert "96x96" in out
    _, ann = imagery.load_annotation(tmp_path / "scene_0000.json")
    mask = imagery.load_mask(tmp_path / "scene_0000_mask.png")
    raster = imagery.rasterize_polygon(ann)
    from cropseg.objectives import iou
    assert iou(raster, mask) > 0.9


def test_segment_counters_and_threshold(desk_run, tmp_path, capsys):
    spec = imagery.SCENE_PRESETS["default"]
    scene = imagery.generate_synthetic_scene(spec, seed=[99, 0])
    img = tmp_path / "scene.png"
    imagery.save_image(img, scene.image)
    ckpt = str(desk_run["result"].checkpoint)
    results = {}
    for name, extra in (("d4", []), ("single", ["--no-d4"]), ("strict", ["--threshold", "0.9"])):
        assert cli.main(["segment", ckpt, str(img), "--out", str(tmp_path / name)] + extra) == 0
        results[name] = json.loads(capsys.readouterr().out)
    assert (results["d4"]["forward_batches"], results["d4"]["forward_samples"]) == (1, 8)
    assert (results["single"]["forward_batches"], results["single"]["forward_samples"]) == (1, 1)
    truth = scene.mask.sum()
    assert abs(results["d4"]["foreground_pixels"] - truth) <= 0.1 * truth
    for name in results:
        for suffix in ("_overlay.png", "_prob.png", "_mask.png"):
            assert (tmp_path / name / f"scene{suffix}").exists()
    base = imagery.load_mask(tmp_path / "d4" / "scene_mask.png")
    strict = imagery.load_mask(tmp_path / "strict" / "scene_mask.png")
    assert np.all(strict <= base)
    prob = imagery.load_probability_png(tmp_path / "d4" / "scene_prob.png")
    assert prob.shape == (128, 128) and 0 <= prob.min() and prob.max() <= 1


def short_sequence(tmp_path, n=4):
    seq = tmp_path / "seq"
    assert cli.main(["synth", "--sequence", "--count", str(n), "--out", str(seq)]) == 0
    truth = list(csv.DictReader(open(seq / "truth.csv")))
    return seq, f"{truth[0]['cx']},{truth[0]['cy']}"


def test_track_cap_and_bad_center(desk_run, tmp_path, capsys):
    seq, center = short_sequence(tmp_path)
    capsys.readouterr()
    ckpt = str(desk_run["result"].checkpoint)
    assert cli.main(["track", ckpt, str(seq / "manifest.csv"), "--center", "9999,5", "--out", str(tmp_path / "x")]) == 2
    assert cli.main(["track", ckpt, str(seq / "manifest.csv"), "--center", "abc", "--out", str(tmp_path / "x")]) == 2
    out = tmp_path / "t"
    assert cli.main(["track", ckpt, str(seq / "manifest.csv"), "--center", center, "--cap", "1000",
                     "--no-d4", "--out", str(out)]) == 0
    assert "frames processed: 4" in capsys.readouterr().out
    raw = list(csv.DictReader(open(out / "track_raw.csv")))
    clamped = list(csv.DictReader(open(out / "track_clamped.csv")))
    for a, b in zip(raw, clamped):
        assert float(a["area"]) > 1000 and a["clamped"] == "0"
        assert float(b["area"]) == 1000 and b["clamped"] == "1"
    # report subcommand regenerates plots from the raw CSV
    assert cli.main(["report", str(out / "track_raw.csv"), "--cap", "1000", "--highlight", "1:2",
                     "--out", str(tmp_path / "rep")]) == 0
    assert {"area_timeline.png", "area_boxplot.png", "positions.png"} <= set(tree(tmp_path / "rep"))
