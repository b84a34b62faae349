import io
import json

import pytest

from pose_boost import __version__
from pose_boost.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, _human_bytes, main
from pose_boost.models import AblationRow

# --- helpers ---------------------------------------------------------------

CYCLIC_GRAPH = """\
root 0
joint 0 a
joint 1 b
joint 2 c
joint 3 d
edge 0 1 physical
edge 1 2 physical
edge 2 3 physical
edge 3 1 symmetrical
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    """Run from an empty directory so no pyproject.toml is merged."""
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def config_file(workdir, tiny_graph_file):
    path = workdir / "tiny.toml"
    path.write_text(
        "\n".join(
            [
                "[network]",
                'preset = "tiny"',
                "stacks = 1",
                "[graph]",
                f"name = {json.dumps(str(tiny_graph_file))}",
                "[training]",
                "epochs = 1",
                "batch_size = 2",
                'precision = "float64"',
                "[data]",
                f"train_dir = {json.dumps(str(workdir / 'data' / 'train'))}",
                f"test_dir = {json.dumps(str(workdir / 'data' / 'test'))}",
                "num_train = 4",
                "num_test = 3",
                'background = "flat"',
                "[cache]",
                f"directory = {json.dumps(str(workdir / 'cache'))}",
                "",
            ]
        ),
        encoding="utf-8",
    )
    return path


def _run(*argv: str) -> tuple[int, str]:
    out = io.StringIO()
    code = main(list(argv), stdout=out)
    return code, out.getvalue()


@pytest.fixture
def trained(config_file, workdir):
    code, _ = _run("train", "--config", str(config_file), "--out", str(workdir / "run"))
    assert code == EXIT_OK
    return workdir / "run" / "model.ckpt"


# --- usage -----------------------------------------------------------------


def test_version(capsys):
    assert main(["--version"]) == EXIT_OK
    assert __version__ in capsys.readouterr().out


def test_no_command_is_usage_error(capsys):
    assert main([]) == EXIT_USAGE


def test_bad_threshold_list_is_usage_error(workdir, capsys):
    code, _ = _run("eval", "--ckpt", "x", "--data", "y", "--pck", "ten")
    assert code == EXIT_USAGE


def test_unknown_axis_is_usage_error(capsys):
    assert main(["ablate", "--axis", "colours"]) == EXIT_USAGE


@pytest.mark.parametrize("joints", ["0,x", ","])
def test_malformed_joint_list_is_usage_error(joints, capsys):
    code = main(["dump-fmaps", "--ckpt", "m.ckpt", "--image", "i.ppm", "--joints", joints])
    assert code == EXIT_USAGE
    assert "integer" in capsys.readouterr().err


def test_missing_input_file_is_usage_error(workdir):
    code, _ = _run("eval", "--ckpt", "missing.ckpt", "--data", str(workdir))
    assert code == EXIT_USAGE


def test_wrongly_typed_config_value_fails(workdir):
    bad = workdir / "bad.toml"
    bad.write_text('[network]\nstacks = "2"\n', encoding="utf-8")
    code, _ = _run("train", "--config", str(bad), "--out", str(workdir / "run"))
    assert code == EXIT_FAILURE
    assert not (workdir / "run" / "model.ckpt").exists()


def test_human_bytes():
    assert _human_bytes(0) == "0 B"
    assert _human_bytes(1536) == "1.5 KB"
    assert _human_bytes(1024**3) == "1 GB"


# --- graph validate --------------------------------------------------------


def test_graph_validate_ok(tiny_graph_file):
    code, out = _run("graph", "validate", str(tiny_graph_file))
    assert code == EXIT_OK
    assert out.strip().endswith(": OK")


def test_graph_validate_reports_cycle(tmp_path):
    path = tmp_path / "cyclic.graph"
    path.write_text(CYCLIC_GRAPH, encoding="utf-8")
    code, out = _run("graph", "validate", str(path))
    assert code == EXIT_FAILURE
    assert "1 violation(s)" in out
    assert "- cycle: 1 -> 2 -> 3 -> 1" in out


def test_graph_validate_unparseable_file(tmp_path):
    path = tmp_path / "junk.graph"
    path.write_text("root 0\nwobble\n", encoding="utf-8")
    code, _ = _run("graph", "validate", str(path))
    assert code == EXIT_FAILURE


def test_graph_validate_missing_file(tmp_path):
    code, _ = _run("graph", "validate", str(tmp_path / "nope.graph"))
    assert code == EXIT_USAGE


# --- experiment commands ---------------------------------------------------


def test_synth_writes_both_splits(config_file, workdir):
    code, out = _run("synth", "--config", str(config_file), "--out", str(workdir / "ds"))
    assert code == EXIT_OK
    assert "Wrote datasets:" in out
    assert (workdir / "ds" / "train" / "meta.json").exists()
    assert (workdir / "ds" / "test" / "annotations.jsonl").exists()


def test_train_then_eval_with_records(config_file, workdir, trained):
    assert trained.exists()
    records = workdir / "report.jsonl"
    code, out = _run(
        "eval", "--ckpt", str(trained), "--data", str(workdir / "data" / "train"), "--pck", "2,8", "--records", str(records)
    )
    assert code == EXIT_OK
    assert "PCK@2" in out and "PCK@8" in out and "mean error" in out
    (record,) = [json.loads(line) for line in records.read_text(encoding="utf-8").splitlines()]
    assert set(record["pck"]) == {"2.0", "8.0"}
    assert record["count"] == 4


def test_train_output_mentions_checkpoint(config_file, workdir):
    code, out = _run("train", "--config", str(config_file), "--out", str(workdir / "run"))
    assert code == EXIT_OK
    assert "Checkpoint:" in out
    assert "Trained 2 steps" in out


def test_dump_fmaps_writes_three_maps_per_joint(workdir, trained):
    image = workdir / "data" / "train" / "samples" / "000000.ppm"
    code, out = _run("dump-fmaps", "--ckpt", str(trained), "--image", str(image), "--joints", "0,2", "--out", "maps")
    assert code == EXIT_OK
    assert "Wrote 6 feature maps:" in out
    assert sorted(p.name for p in (workdir / "maps").iterdir()) == [
        "joint0_gate.pgm",
        "joint0_post.pgm",
        "joint0_pre.pgm",
        "joint2_gate.pgm",
        "joint2_post.pgm",
        "joint2_pre.pgm",
    ]


def test_dump_fmaps_bad_joint_fails(workdir, trained):
    image = workdir / "data" / "train" / "samples" / "000000.ppm"
    code, _ = _run("dump-fmaps", "--ckpt", str(trained), "--image", str(image), "--joints", "9")
    assert code == EXIT_FAILURE


def test_ablate_prints_table_and_records(config_file, workdir, mocker):
    rows = [
        AblationRow(axis="stacks", variant="1", seeds=[0, 1], pck={5.0: 0.25}, mean_error=7.5),
        AblationRow(axis="stacks", variant="2", seeds=[0, 1], pck={5.0: 0.5}, mean_error=5.0),
    ]
    fake = mocker.patch("pose_boost.cli.run_ablation", return_value=rows)
    records = workdir / "ablation.jsonl"
    code, out = _run(
        "ablate", "--axis", "stacks", "--config", str(config_file), "--seeds", "0,1", "--no-cache", "--records", str(records)
    )
    assert code == EXIT_OK
    assert fake.call_args.kwargs["seeds"] == [0, 1]
    assert fake.call_args.kwargs["use_cache"] is False
    assert "Seeds: 0, 1" in out
    assert "0.2500" in out and "0.5000" in out
    assert [json.loads(line)["variant"] for line in records.read_text(encoding="utf-8").splitlines()] == ["1", "2"]


def test_cache_stats_and_clear(config_file, workdir):
    code, out = _run("cache", "--config", str(config_file), "stats")
    assert code == EXIT_OK
    stats = json.loads(out)
    assert stats["items"] == 0
    code, out = _run("cache", "--config", str(config_file), "clear")
    assert code == EXIT_OK
    assert "Cache cleared at:" in out
