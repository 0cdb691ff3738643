import numpy as np
import pytest

from pyrfuse import cli
from pyrfuse.fusenet import init_fusenet, save_checkpoint, zero_fusenet
from pyrfuse.fusion import interpolate
from pyrfuse.metrics import MetricsReport
from pyrfuse.raster import RasterImage, load_mbr, save_mbr


@pytest.fixture
def pair(tmp_path, rng):
    pan = rng.uniform(0.1, 0.9, (1, 64, 64))
    ms = rng.uniform(0.1, 0.9, (4, 16, 16))
    save_mbr(RasterImage(pan), tmp_path / "pan.mbr")
    save_mbr(RasterImage(ms), tmp_path / "ms.mbr")
    return tmp_path / "pan.mbr", tmp_path / "ms.mbr"


def run(*argv):
    return cli.main([str(a) for a in argv])


# --- simulate ---------------------------------------------------------------


def test_simulate_shapes_and_gt_equals_ms(pair, tmp_path):
    pan, ms = pair
    out = tmp_path / "sim"
    out.mkdir()
    assert run("simulate", "--pan", pan, "--ms", ms, "--out-dir", out) == 0
    assert load_mbr(out / "pan_lr.mbr").data.shape == (1, 16, 16)
    assert load_mbr(out / "ms_lr.mbr").data.shape == (4, 4, 4)
    np.testing.assert_array_equal(load_mbr(out / "gt.mbr").data, load_mbr(ms).data)


def test_simulate_is_byte_deterministic(pair, tmp_path):
    pan, ms = pair
    outputs = []
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        run("simulate", "--pan", pan, "--ms", ms, "--out-dir", tmp_path / name)
        outputs.append([(tmp_path / name / f).read_bytes() for f in ("pan_lr.mbr", "ms_lr.mbr", "gt.mbr")])
    assert outputs[0] == outputs[1]


def test_simulate_crops_to_largest_valid_size(tmp_path, rng):
    save_mbr(RasterImage(rng.uniform(size=(1, 72, 68))), tmp_path / "pan.mbr")
    save_mbr(RasterImage(rng.uniform(size=(3, 18, 17))), tmp_path / "ms.mbr")
    assert run("simulate", "--pan", tmp_path / "pan.mbr", "--ms", tmp_path / "ms.mbr", "--out-dir", tmp_path) == 0
    assert load_mbr(tmp_path / "gt.mbr").data.shape == (3, 16, 16)


def test_simulate_ratio_violation_is_usage_error(tmp_path, rng, capsys):
    save_mbr(RasterImage(rng.uniform(size=(1, 32, 32))), tmp_path / "pan.mbr")
    save_mbr(RasterImage(rng.uniform(size=(3, 16, 16))), tmp_path / "ms.mbr")
    assert run("simulate", "--pan", tmp_path / "pan.mbr", "--ms", tmp_path / "ms.mbr", "--out-dir", tmp_path) == 1


def test_missing_file_names_the_flag(pair, tmp_path, capsys):
    _, ms = pair
    code = run("simulate", "--pan", tmp_path / "nope.mbr", "--ms", ms, "--out-dir", tmp_path)
    assert code != 0
    assert "--pan" in capsys.readouterr().err


def test_inputs_are_not_mutated(pair, tmp_path):
    pan, ms = pair
    before = pan.read_bytes(), ms.read_bytes()
    run("simulate", "--pan", pan, "--ms", ms, "--out-dir", tmp_path)
    assert (pan.read_bytes(), ms.read_bytes()) == before


# --- train -------------------------------------------------------------------


def _train_setup(tmp_path, pair, config):
    pan, ms = pair
    (tmp_path / "cfg.txt").write_text(config)
    (tmp_path / "list.txt").write_text(f"# pan ms\n{pan.name} {ms.name}\n")
    return ["--config", tmp_path / "cfg.txt", "--data-list", tmp_path / "list.txt"]


def test_train_zero_iterations_writes_empty_log(pair, tmp_path):
    flags = _train_setup(tmp_path, pair, "iterations = 0\nK = 1\n")
    code = run("train", *flags, "--out-checkpoint", tmp_path / "m.fnet", "--loss-log", tmp_path / "loss.csv")
    assert code == 0
    assert (tmp_path / "m.fnet").stat().st_size > 0
    assert (tmp_path / "loss.csv").read_text().strip().splitlines() == ["iteration,loss"]


def test_train_unknown_key_is_usage_error_naming_key(pair, tmp_path, capsys):
    flags = _train_setup(tmp_path, pair, "lr = 0.001\n")
    code = run("train", *flags, "--out-checkpoint", tmp_path / "m.fnet", "--loss-log", tmp_path / "loss.csv")
    assert code == 1
    assert "'lr'" in capsys.readouterr().err
    assert not (tmp_path / "m.fnet").exists()


def test_train_seeded_runs_are_byte_identical(pair, tmp_path):
    flags = _train_setup(tmp_path, pair, "iterations = 2\nK = 1\nbatch_size = 2\npatch_size = 8\nseed = 5\n")
    blobs = []
    for name in ("a", "b"):
        run("train", *flags, "--out-checkpoint", tmp_path / f"{name}.fnet", "--loss-log", tmp_path / f"{name}.csv")
        blobs.append(((tmp_path / f"{name}.fnet").read_bytes(), (tmp_path / f"{name}.csv").read_bytes()))
    assert blobs[0] == blobs[1]


def test_train_bad_data_list_entry(pair, tmp_path, capsys):
    flags = _train_setup(tmp_path, pair, "iterations = 0\n")
    (tmp_path / "list.txt").write_text("pan.mbr missing.mbr\n")
    code = run("train", *flags, "--out-checkpoint", tmp_path / "m.fnet", "--loss-log", tmp_path / "l.csv")
    assert code == 1
    assert "missing.mbr" in capsys.readouterr().err


# --- fuse --------------------------------------------------------------------


def test_fuse_zero_checkpoint_is_interpolation(pair, tmp_path):
    pan, ms = pair
    save_checkpoint(zero_fusenet(4, 2), tmp_path / "z.fnet")
    code = run("fuse", "--pan", pan, "--ms", ms, "--checkpoint", tmp_path / "z.fnet", "--out", tmp_path / "f.mbr")
    assert code == 0
    fused = load_mbr(tmp_path / "f.mbr").data
    assert fused.shape == (4, 64, 64)
    np.testing.assert_allclose(fused, interpolate(load_mbr(ms).data, 2), atol=1e-6)


def test_fuse_writes_preview(pair, tmp_path, rng):
    pan, ms = pair
    save_checkpoint(init_fusenet(4, 1, rng), tmp_path / "m.fnet")
    code = run("fuse", "--pan", pan, "--ms", ms, "--checkpoint", tmp_path / "m.fnet",
               "--out", tmp_path / "f.mbr", "--preview", tmp_path / "p.ppm", "--bands", "2,1,0")
    assert code == 0
    assert (tmp_path / "p.ppm").read_bytes().startswith(b"P6\n64 64\n255\n")


def test_fuse_band_mismatch_is_format_error(pair, tmp_path):
    pan, ms = pair
    save_checkpoint(zero_fusenet(8, 1), tmp_path / "z.fnet")
    assert run("fuse", "--pan", pan, "--ms", ms, "--checkpoint", tmp_path / "z.fnet", "--out", tmp_path / "f.mbr") == 2


def test_fuse_preview_band_out_of_range(pair, tmp_path):
    pan, ms = pair
    save_checkpoint(zero_fusenet(4, 1), tmp_path / "z.fnet")
    code = run("fuse", "--pan", pan, "--ms", ms, "--checkpoint", tmp_path / "z.fnet",
               "--out", tmp_path / "f.mbr", "--preview", tmp_path / "p.ppm", "--bands", "0,1,4")
    assert code == 2
    assert not (tmp_path / "f.mbr").exists()


# --- eval ----------------------------------------------------------------------


def test_eval_reduced_identical(pair, tmp_path):
    _, ms = pair
    code = run("eval-reduced", "--fused", ms, "--gt", ms, "--out", tmp_path / "r.csv",
               "--markdown", tmp_path / "r.md", "--window", 8)
    assert code == 0
    report = MetricsReport.from_csv((tmp_path / "r.csv").read_text())
    assert report.values == pytest.approx({"QAVE": 1.0, "SAM": 0.0, "ERGAS": 0.0, "SCC": 1.0}, abs=1e-9)
    assert "| Proposed |" in (tmp_path / "r.md").read_text()


def test_eval_full_rows(pair, tmp_path, rng):
    pan, ms = pair
    fused = interpolate(load_mbr(ms).data, 2) + rng.normal(0, 0.01, (4, 64, 64))
    save_mbr(RasterImage(fused), tmp_path / "f.mbr")
    code = run("eval-full", "--fused", tmp_path / "f.mbr", "--ms", ms, "--pan", pan,
               "--out", tmp_path / "full.csv", "--window", 8)
    assert code == 0
    v = MetricsReport.from_csv((tmp_path / "full.csv").read_text()).values
    assert list(v) == ["D_lambda", "D_s", "QNR"]
    assert v["QNR"] == pytest.approx((1 - v["D_lambda"]) * (1 - v["D_s"]), abs=1e-12)


def test_eval_dimension_mismatch_is_data_error(pair, tmp_path):
    pan, ms = pair
    assert run("eval-reduced", "--fused", pan, "--gt", ms, "--out", tmp_path / "r.csv") == 2


# --- info ---------------------------------------------------------------------


def test_info_mbr(tmp_path, capsys):
    data = np.zeros((8, 512, 512))
    save_mbr(RasterImage(data), tmp_path / "x.mbr", dtype="u16")
    assert run("info", "--file", tmp_path / "x.mbr") == 0
    assert capsys.readouterr().out.strip() == "512x512, 8 bands, u16, max 2047"


def test_info_fnet(tmp_path, capsys):
    save_checkpoint(zero_fusenet(8, 4), tmp_path / "m.fnet")
    assert run("info", "--file", tmp_path / "m.fnet") == 0
    assert "151976 parameters" in capsys.readouterr().out


def test_info_unknown_magic(tmp_path, capsys):
    (tmp_path / "x.bin").write_bytes(b"JUNKJUNKJUNK")
    assert run("info", "--file", tmp_path / "x.bin") == 2
    assert "JUNK" in capsys.readouterr().err


def test_unknown_command_is_usage_error():
    assert run("frobnicate") == 1


def test_bad_bands_flag_is_usage_error(pair, tmp_path):
    pan, ms = pair
    save_checkpoint(zero_fusenet(4, 1), tmp_path / "z.fnet")
    code = run("fuse", "--pan", pan, "--ms", ms, "--checkpoint", tmp_path / "z.fnet",
               "--out", tmp_path / "f.mbr", "--preview", tmp_path / "p.ppm", "--bands", "red")
    assert code == 1
