import json

import pytest

from cdmsg.cli import main
from cdmsg.harness import make_default_carriers
from cdmsg.image import read_image, write_image
from cdmsg.harness import synthetic_carrier


@pytest.fixture(scope="module")
def carrier_path(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli_carrier")
    path = d / "carrier.pgm"
    write_image(synthetic_carrier(256, 256, seed=42), path)
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestEmbedCaptureRecover:
    def test_full_pipeline_identity(self, capsys, tmp_path, carrier_path):
        out_dir = str(tmp_path / "pair")
        bits = "1010" * 3 + "1"  # 13 message blocks on a 4x4 grid with 3 ratex
        code, out, err = run_cli(
            capsys,
            "embed", "--carrier", carrier_path, "--bits", bits, "--kappa", "5",
            "--grid", "4x4", "--ratex", "3", "--out-dir", out_dir,
        )
        assert code == 0, err

        for frame in ("original", "embedded"):
            code, out, err = run_cli(
                capsys,
                "capture", "--in", f"{out_dir}/{frame}.pgm", "--preset", "identity",
                "--angle", "0", "--seed", "1", "--out", f"{out_dir}/{frame}_cap.pgm",
            )
            assert code == 0, err

        for method in ("naive", "two-step", "oorc", "hidden-ratex"):
            code, out, err = run_cli(
                capsys,
                "recover", "--pair", f"{out_dir}/original_cap.pgm,{out_dir}/embedded_cap.pgm",
                "--method", method, "--meta", f"{out_dir}/meta.json",
            )
            assert code == 0, err
            lines = out.strip().splitlines()
            assert lines[0] == f"bits {bits}"
            assert lines[1] == "count 13"
            assert lines[2] == "accuracy 1.000"

    def test_recover_with_explicit_truth(self, capsys, tmp_path, carrier_path):
        out_dir = str(tmp_path / "pair2")
        bits = "0" * 13
        run_cli(
            capsys,
            "embed", "--carrier", carrier_path, "--bits", bits, "--kappa", "6",
            "--grid", "4x4", "--ratex", "3", "--out-dir", out_dir,
        )
        code, out, err = run_cli(
            capsys,
            "recover", "--pair", f"{out_dir}/original.pgm,{out_dir}/embedded.pgm",
            "--method", "naive", "--grid", "4x4", "--ratex", "3",
            "--truth", bits,
        )
        assert code == 0, err
        assert "accuracy 1.000" in out

    def test_unknown_preset_fails_cleanly(self, capsys, tmp_path, carrier_path):
        code, out, err = run_cli(
            capsys,
            "capture", "--in", carrier_path, "--preset", "identity",
            "--angle", "120", "--out", str(tmp_path / "x.pgm"),
        )
        assert code != 0
        assert "error" in json.loads(err.strip())


class TestExperimentAndReport:
    def test_experiment_and_report(self, capsys, tmp_path):
        carriers = make_default_carriers(str(tmp_path / "c"), count=1, size=256)
        cfg = {
            "version": 1,
            "carriers": list(carriers),
            "rows": 4, "cols": 4, "ratex_count": 3,
            "kappas": [5.0], "angles": [0.0],
            "presets": ["identity"],
            "messages_per_carrier": 2,
            "seed": 3,
            "out_dir": str(tmp_path / "run"),
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        code, out, err = run_cli(capsys, "experiment", "--config", str(cfg_path))
        assert code == 0, err

        code, out, err = run_cli(capsys, "report", "--in", str(tmp_path / "run"), "--format", "md")
        assert code == 0
        assert "| identity |" in out

        code, out, err = run_cli(capsys, "report", "--in", str(tmp_path / "run"), "--format", "csv")
        assert code == 0
        assert out.startswith("angle,kappa,preset,")

    def test_malformed_config_names_field(self, capsys, tmp_path):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text('{"carriers": ["x.pgm"], "seed": "not-an-int"}')
        code, out, err = run_cli(capsys, "experiment", "--config", str(cfg_path))
        assert code != 0
        info = json.loads(err.strip())
        assert info["field"] == "seed"
        assert "seed" in info["message"]

    def test_invalid_json_config(self, capsys, tmp_path):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text("{broken")
        code, out, err = run_cli(capsys, "experiment", "--config", str(cfg_path))
        assert code != 0
        assert json.loads(err.strip())["error"] == "ConfigError"


def test_embed_writes_quantized_frames(capsys, tmp_path, carrier_path):
    out_dir = str(tmp_path / "q")
    code, _, err = run_cli(
        capsys,
        "embed", "--carrier", carrier_path, "--bits", "1" * 13, "--kappa", "2.5",
        "--grid", "4x4", "--ratex", "3", "--out-dir", out_dir,
    )
    assert code == 0, err
    img = read_image(f"{out_dir}/embedded.pgm")
    assert img.is_quantized()
