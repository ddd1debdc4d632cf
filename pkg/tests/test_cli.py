import numpy as np
import pytest

from conftest import write_frames
from simkit import cli
from simkit.image import read_container, read_image
from simkit.phantoms import smooth_texture, translate


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    values = dict(line.split("=", 1) for line in out.splitlines() if "=" in line)
    return code, values, err


def test_otf_report(capsys, tmp_path):
    code, v, _ = run(capsys, "otf", "--na", 1.2, "--lambda", 600, "--pixel", 60, "--size", 256,
                     "--out", tmp_path / "otf.png", "--profile", tmp_path / "otf.csv")
    assert code == 0
    assert float(v["f_c_pix"]) == pytest.approx(0.24)
    img = read_image(tmp_path / "otf.png")
    assert img.shape == (256, 256) and img[128, 128] == 1.0
    assert (tmp_path / "otf.csv").read_text().startswith("freq_cycles_per_px,otf\n0.000000,1.0")


def test_check_grad_exit_code(capsys):
    code, v, _ = run(capsys, "check-grad", "--op", "msa", "--seed", 7)
    assert code == 0 and v["pass"] == "1"
    assert float(v["max_rel_error"]) < 1e-4


def test_dataset_count_zero(capsys, tmp_path):
    code, v, _ = run(capsys, "dataset", "--count", 0, "--out", tmp_path / "ds")
    assert code == 0 and v["count"] == "0"
    assert [p.name for p in (tmp_path / "ds").iterdir()] == ["manifest.jsonl"]


def test_help_documents_exit_codes(capsys):
    assert cli.main(["--help"]) == 0
    out = capsys.readouterr().out
    for code in range(9):
        assert f"\n  {code}  " in out
    assert "SIMKIT_THREADS" in out
    assert cli.main(["reconstruct", "--help"]) == 0
    assert "exit codes" in capsys.readouterr().out


def test_error_exit_codes_are_distinct(capsys, tmp_path):
    unknown, _, err = run(capsys, "otf", "--bogus")
    assert unknown == cli.EXIT_USAGE
    assert run(capsys, "frobnicate")[0] == cli.EXIT_USAGE
    missing, _, err = run(capsys, "reconstruct", tmp_path / "nope.vsim", "--out", tmp_path / "o.png")
    assert missing == cli.EXIT_MISSING_INPUT and "kind=missing-input" in err
    invalid, _, err = run(capsys, "otf", "--na", 0)
    assert invalid == cli.EXIT_INVALID_CONFIG and "kind=invalid-config" in err
    assert run(capsys, "simulate", "--frames", 5, "--out", tmp_path / "s.vsim")[0] == invalid
    (tmp_path / "bad.vsim").write_bytes(b"VSIM garbage")
    corrupt, _, err = run(capsys, "reconstruct", tmp_path / "bad.vsim", "--out", tmp_path / "o.png")
    assert corrupt == cli.EXIT_BAD_INPUT
    assert len({unknown, missing, invalid, corrupt}) == 4
    assert run(capsys, "otf", "--threads", 0)[0] == cli.EXIT_USAGE


def test_estimation_failure_exit_code(capsys, tmp_path):
    assert run(capsys, "simulate", "--phantom", "texture", "--size", 64, "--modulation", 0,
               "--out", tmp_path / "flat.vsim")[0] == 0
    code, _, err = run(capsys, "reconstruct", tmp_path / "flat.vsim", "--estimate",
                       "--out", tmp_path / "o.png")
    assert code == cli.EXIT_ESTIMATION and "kind=estimation" in err
    assert not (tmp_path / "o.png").exists()


def test_simulate_reconstruct_roundtrip(capsys, tmp_path):
    args = ["simulate", "--phantom", "texture", "--size", 64, "--sigma", 0.01, "--seed", 3]
    assert run(capsys, *args, "--out", tmp_path / "a.vsim")[0] == 0
    assert run(capsys, *args, "--out", tmp_path / "b.vsim", "--threads", 4)[0] == 0
    assert (tmp_path / "a.vsim").read_bytes() == (tmp_path / "b.vsim").read_bytes()
    code, v, _ = run(capsys, "reconstruct", tmp_path / "a.vsim", "--estimate", "--w", 0.1,
                     "--apodize", "none", "--out", tmp_path / "r.png", "--raw", tmp_path / "r.npy")
    assert code == 0
    assert (v["height"], v["width"]) == ("128", "128")
    assert all(float(v[f"orientation{i}_score"]) > 0.5 for i in range(3))
    raw = np.load(tmp_path / "r.npy")
    assert raw.dtype == np.float32 and raw.shape == (128, 128)
    assert float(v["max"]) == pytest.approx(float(raw.max()), rel=1e-6)
    code, v, _ = run(capsys, "reconstruct", tmp_path / "a.vsim", "--method", "wiener",
                     "--known-patterns", "--out", tmp_path / "w.npy")
    assert code == 0 and np.load(tmp_path / "w.npy").shape == (64, 64)


def test_rolling_and_confound(capsys, tmp_path):
    assert run(capsys, "simulate", "--phantom", "texture", "--size", 32, "--frames", 20,
               "--motion", 0, 0.5, "--out", tmp_path / "s.vsim")[0] == 0
    assert len(read_container(tmp_path / "s.vsim")) == 20
    code, v, _ = run(capsys, "rolling", tmp_path / "s.vsim", "--out", tmp_path / "roll")
    assert code == 0 and v["windows"] == "12"
    assert v["timestamps"] == ",".join(str(t) for t in range(4, 16))
    assert len(list((tmp_path / "roll").glob("window_*.npy"))) == 12
    code, _, _ = run(capsys, "confound", tmp_path / "s.vsim")
    assert code == cli.EXIT_BAD_INPUT  # a 20-frame stream is not a 9-frame stack


def test_metrics_and_flow(capsys, tmp_path):
    base = smooth_texture((64, 64), np.random.default_rng(0), 3.0)
    np.save(tmp_path / "a.npy", base)
    np.save(tmp_path / "b.npy", base + 0.1)
    np.save(tmp_path / "c.npy", translate(base, 0.0, 2.0))
    code, v, _ = run(capsys, "metrics", "--psnr", tmp_path / "a.npy", tmp_path / "b.npy")
    assert code == 0 and float(v["psnr"]) == pytest.approx(20.0)
    assert run(capsys, "metrics", "--psnr", tmp_path / "a.npy", tmp_path / "a.npy")[1]["psnr"] == "inf"
    code, v, _ = run(capsys, "flow", tmp_path / "a.npy", tmp_path / "c.npy",
                     "--out", tmp_path / "f.npz")
    assert code == 0 and float(v["mean_u"]) > 1.0
    assert np.load(tmp_path / "f.npz")["u"].shape == (64, 64)


def test_motion_stats_directory(capsys, moving_frames):
    code, v, _ = run(capsys, "motion-stats", moving_frames)
    assert code == 0
    assert 2.4 <= float(v["median_flow"]) <= 3.6  # 4 frames x 0.75 px
    # about 3 px on a 96 px frame is about 16 px at 512 x 512
    assert float(v["median_flow_512"]) == pytest.approx(float(v["median_flow"]) * 512 / 96,
                                                        rel=1e-5)
    assert v["regime"] == "Extreme"
    skipped = run(capsys, "motion-stats", moving_frames, "--skip", 1)[1]
    assert float(skipped["median_flow"]) >= float(v["median_flow"])


def test_dataset_partial_failure_exit_code(capsys, tmp_path):
    base = smooth_texture((48, 48), np.random.default_rng(1), 3.0)
    video = write_frames(tmp_path / "video", [translate(base, 0, 0.5 * t) for t in range(10)])
    sorted(video.iterdir())[-1].write_bytes(b"broken")
    code, v, _ = run(capsys, "dataset", video, "--count", 6, "--crop", 16, "--out", tmp_path / "ds")
    assert code == cli.EXIT_PARTIAL
    assert int(v["failed"]) > 0 and int(v["ok"]) > 0
