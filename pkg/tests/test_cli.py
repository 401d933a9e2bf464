import csv
import glob
import os

import pytest

from fairmislead import __version__
from fairmislead.cli import build_parser, keys_epilog, main, report_name
from fairmislead.data.manifest import parse_manifest
from fairmislead.perturb.perturb import Disturbance

TINY_CONFIG = """
synth:
  image_size: 16
  n_per_split: {train: 48, val: 16, test: 40}
  subgroup_proportions: {M-W: 0.7, F-B: 0.3}
  fingerprint_strength: 0.3
train:
  batch_size: 8
  epochs_pretrain: 1
  epochs_misleading: 1
  input_size: 16
  widths: [8, 8, 16, 16]
  aux_widths: [4, 8]
  feature_dim: 8
  srm_channels: 6
  augment:
    enabled: false
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """
    Synthesised and trained once through the command line
    """
    root = tmp_path_factory.mktemp("cli")
    config = root / "run.yml"
    config.write_text(TINY_CONFIG)
    data_dir = root / "tiny"
    assert main(["-P", "synth", "--config", str(config), "-o", str(data_dir)]) == 0
    checkpoint = root / "model.zip"
    code = main(
        [
            "-P",
            "train",
            "--config",
            str(config),
            "-m",
            str(data_dir / "manifest.csv"),
            "--checkpoint",
            str(checkpoint),
            "--training-log",
            str(root / "train.csv"),
        ]
    )
    assert code == 0
    return root, config, data_dir, checkpoint


def test_no_command_prints_help(capsys):
    assert main([]) == 2
    assert "synth" in capsys.readouterr().out


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_help_lists_config_keys(capsys):
    with pytest.raises(SystemExit) as e:
        main(["train", "--help"])
    assert e.value.code == 0
    out = capsys.readouterr().out
    assert "train.lr (default: 0.001)" in out
    assert "paths.checkpoint" in out
    assert "synth.seed" not in out
    assert "report.threshold" in keys_epilog("eval")


def test_bad_arguments_exit_with_usage_error():
    with pytest.raises(SystemExit) as e:
        build_parser().parse_args(["train", "--ablation", "no-everything"])
    assert e.value.code == 2


def test_error_families_map_to_exit_codes(tmp_path, capsys):
    assert main(["synth", "--set", "synth.nope=1", "-o", str(tmp_path)]) == 2
    assert "UnknownConfigKey" in capsys.readouterr().err
    assert main(["train", "-m", str(tmp_path / "missing.csv")]) == 3
    assert main(["eval", "--checkpoint", str(tmp_path / "none.zip"), "-m", "x.csv"]) == 3
    assert main(["train", "--set", "train.batch_size=1", "-m", "x.csv"]) == 2


def test_synth_and_train_outputs(workspace):
    root, _, data_dir, checkpoint = workspace
    manifest = parse_manifest(str(data_dir / "manifest.csv"))
    assert len(manifest) == 104
    assert checkpoint.is_file()
    assert (root / "model.pretrain.zip").is_file()
    assert (root / "model.srm.bin").is_file() and (root / "model.srm.json").is_file()
    with open(root / "train.csv", newline="") as fp:
        assert len(list(csv.DictReader(fp))) == 12


def test_synth_prints_manifest_digest(tmp_path, capsys):
    config = tmp_path / "run.yml"
    config.write_text(TINY_CONFIG)
    for out in ("a", "b"):
        assert main(["-P", "synth", "--config", str(config), "-o", str(tmp_path / out)]) == 0
    digests = [line for line in capsys.readouterr().out.splitlines() if "sha256" in line]
    assert len(digests) == 2 and digests[0] == digests[1]


def test_eval_report_and_plot(workspace):
    root, config, data_dir, checkpoint = workspace
    reports = root / "reports"
    common = ["--config", str(config), "--checkpoint", str(checkpoint)]
    common += ["-m", str(data_dir / "manifest.csv"), "-o", str(reports)]
    assert main(["-P", "eval"] + common) == 0
    assert main(["-P", "eval", "--disturbance", "GB:3"] + common) == 0

    for tag in ("clean", "GB3"):
        base = reports / "tiny-test-misleading-{}".format(tag)
        for suffix in (".predictions.csv", ".report.json", ".report.csv"):
            assert os.path.isfile(str(base) + suffix)

    jsons = sorted(glob.glob(str(reports / "*.report.json")))
    assert len(jsons) == 2
    out = root / "summary"
    assert main(["report", "-o", str(out)] + jsons) == 0
    with open(out / "deltas.csv", newline="") as fp:
        rows = list(csv.DictReader(fp))
    assert [row["perturbation"] for row in rows] == ["GB:3"]
    assert (out / "summary.html").is_file()

    assert main(["plot", "-o", str(root / "plots")] + jsons) == 0
    assert sorted(os.listdir(root / "plots")) == [
        "groups.auc.png",
        "groups.fpr.png",
        "robustness.deltas.png",
    ]


def test_eval_rejects_bad_disturbance(workspace):
    root, config, data_dir, checkpoint = workspace
    code = main(
        [
            "eval",
            "--checkpoint",
            str(checkpoint),
            "-m",
            str(data_dir / "manifest.csv"),
            "--disturbance",
            "GB:9",
            "-o",
            str(root / "bad"),
        ]
    )
    assert code == 2


def test_report_name(tiny_dataset):
    assert report_name(tiny_dataset, "test", "pretrain", None).endswith("-test-pretrain-clean")
    name = report_name(tiny_dataset, "val", "misleading", Disturbance("IC", 2))
    assert name == "{}-val-misleading-IC2".format(tiny_dataset.name)
