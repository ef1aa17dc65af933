"""CLI contract: dispatch, exit codes, stamps, end-to-end tiny runs."""

import json

import numpy as np
import pytest

from rfcnet.cli import main

SUBCOMMANDS = ["generate-data", "train", "eval", "count-params", "report",
               "grid-search"]


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_exits_zero_and_lists_flags(command, capsys):
    with pytest.raises(SystemExit) as excinfo:
        main([command, "--help"])
    assert excinfo.value.code == 0
    out = capsys.readouterr().out
    assert "--" in out


def test_top_level_help(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["--help"])
    assert excinfo.value.code == 0
    out = capsys.readouterr().out
    for command in SUBCOMMANDS:
        assert command in out


def test_unknown_subcommand_exits_1_with_synopsis(capsys):
    assert main(["frobnicate"]) == 1
    err = capsys.readouterr().err
    assert "usage" in err.lower()


def test_no_subcommand_exits_1(capsys):
    assert main([]) == 1


def test_missing_required_flag_exits_1(capsys):
    assert main(["train", "--spec", "fcd_s"]) == 1


def test_count_params_table_and_ed2_gt_ed1(capsys):
    assert main(["count-params", "--spec", "rfcd_ed1"]) == 0
    ed1_row = capsys.readouterr().out.splitlines()[-1]
    assert main(["count-params", "--spec", "rfcd_ed2"]) == 0
    ed2_row = capsys.readouterr().out.splitlines()[-1]

    def total(row):
        return int(row.split()[1].replace(",", ""))

    assert total(ed2_row) > total(ed1_row)


def test_count_params_unknown_spec_exits_1(capsys):
    assert main(["count-params", "--spec", "resnet50"]) == 1


def _write_tiny_config(tmp_path, splits):
    from rfcnet.config import default_config
    raw = default_config()
    raw["profiles"]["tiny"]["dataset"]["splits"] = splits
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


def test_generate_data_end_to_end(tmp_path, capsys):
    config = _write_tiny_config(
        tmp_path, {"train": 4, "val": 2, "test": 2, "clean_test": 2})
    out = tmp_path / "data"
    code = main(["generate-data", "--config", str(config), "--profile", "tiny",
                 "--out", str(out), "--seed", "3", "--verify"])
    assert code == 0
    assert (out / "manifest.json").exists()
    stamp = json.loads((out / "run_stamp.json").read_text())
    assert stamp["command"] == "generate-data"
    assert stamp["seed"] == 3
    assert len(stamp["config_sha256"]) == 64

    from rfcnet.datastore import load_manifest, open_split
    manifest = load_manifest(out)
    assert manifest.splits["train"] == 4
    samples = list(open_split(manifest, "clean_test"))
    assert len(samples) == 2
    assert np.array_equal(samples[0].frames, samples[0].clean_frames)


def test_train_eval_report_round_trip(tmp_path, capsys):
    config = _write_tiny_config(
        tmp_path, {"train": 4, "val": 2, "test": 2, "clean_test": 2})
    data = tmp_path / "data"
    assert main(["generate-data", "--config", str(config), "--profile", "tiny",
                 "--out", str(data), "--seed", "3"]) == 0

    run = tmp_path / "run"
    code = main(["train", "--config", str(config), "--profile", "tiny",
                 "--spec", "fcd_s", "--data", str(data), "--out", str(run),
                 "--max-epochs", "1", "--seed", "0"])
    assert code == 0
    ckpt = run / "fcd_s-best.ckpt"
    assert ckpt.exists()
    capsys.readouterr()

    code = main(["eval", "--checkpoint", str(ckpt), "--data", str(data),
                 "--split", "test", "--split", "clean_test"])
    assert code == 0
    out = capsys.readouterr().out
    assert "split: test" in out
    assert "split: clean_test" in out
    assert "mean IoU" in out

    report_dir = tmp_path / "report"
    code = main(["report", "--checkpoint", str(ckpt), "--data", str(data),
                 "--out", str(report_dir)])
    assert code == 0
    assert (report_dir / "iou_test.txt").exists()
    assert (report_dir / "iou_clean_test.txt").exists()
    payload = json.loads((report_dir / "report.json").read_text())
    assert set(payload) == {"test", "clean_test"}


def test_eval_unknown_split_exits_2(tmp_path, capsys):
    config = _write_tiny_config(
        tmp_path, {"train": 2, "val": 2, "test": 2, "clean_test": 2})
    data = tmp_path / "data"
    main(["generate-data", "--config", str(config), "--profile", "tiny",
          "--out", str(data), "--seed", "1"])
    run = tmp_path / "run"
    main(["train", "--config", str(config), "--profile", "tiny", "--spec",
          "fcd_s", "--data", str(data), "--out", str(run), "--max-epochs", "1"])
    capsys.readouterr()
    code = main(["eval", "--checkpoint", str(run / "fcd_s-best.ckpt"),
                 "--data", str(data), "--split", "nope"])
    assert code == 2


def test_missing_data_dir_exits_2(tmp_path, capsys):
    code = main(["train", "--spec", "fcd_s", "--data", str(tmp_path / "absent"),
                 "--out", str(tmp_path / "run"), "--profile", "tiny"])
    assert code == 2
