import csv
import subprocess
import sys

import numpy as np

from orbit_llie import checkpoint
from orbit_llie.cli import main
from orbit_llie.imaging import load_float, mosaic, save_float, write_image
from orbit_llie.posegen import ArmSetup

SMALL_RUN = """\
base_channels = 4
depth = 2
time_embed_dim = 8
image_size = 16
dropout = 0.1
epochs = 2
batch_size = 4
peak_lr = 0.001
warmup_steps = 2
diffusion_steps = 20
"""


def run(*args):
    return main([str(a) for a in args])


def test_schedule_dump_first_row(tmp_path, capsys):
    assert run("schedule-dump", "--T", 2000, "--offset", 0.008) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,beta,alpha,gamma"
    assert lines[1].split(",")[0] == "0" and float(lines[1].split(",")[3]) == 1.0
    assert len(lines) == 2002


def test_metrics_of_identical_images(tmp_path, capsys):
    img = np.random.default_rng(0).random((32, 32))
    save_float(tmp_path / "x.pgm", img)
    assert run("metrics", tmp_path / "x.pgm", tmp_path / "x.pgm") == 0
    head, row = capsys.readouterr().out.strip().split("\n")
    assert head == "image,PSNR,SSIM,FSIM,LPIPS"
    assert row == "x.pgm,99.0000,1.0000,1.0000,n/a"


def test_demosaic_and_fag(tmp_path):
    rgb = np.random.default_rng(1).random((16, 16, 3))
    bayer = mosaic(rgb, bit_depth=12)
    write_image(tmp_path / "raw.pgm", bayer.values, bayer.maxval)
    assert run("demosaic", tmp_path / "raw.pgm", tmp_path / "rgb.ppm") == 0
    out = load_float(tmp_path / "rgb.ppm")
    assert out.shape == (16, 16, 3)
    assert run("fag", tmp_path / "rgb.ppm", tmp_path / "g.pgm", "--lambda", 0.5, "--cutoff", 30) == 0
    assert load_float(tmp_path / "g.pgm").shape == (16, 16)
    save_float(tmp_path / "black.ppm", np.zeros((8, 8, 3)))
    assert run("fag", tmp_path / "black.ppm", tmp_path / "one.pgm") == 0
    assert np.all(load_float(tmp_path / "one.pgm") == 1.0)


def test_train_enhance_round_trip(tmp_path, capsys):
    (tmp_path / "run.cfg").write_text(SMALL_RUN)
    assert run("synth-data", tmp_path / "data", "--n", 8, "--seed", 3, "--size", 16) == 0
    assert (tmp_path / "data" / "manifest.tsv").read_text().count("\n") == 8
    assert run("train", tmp_path / "run.cfg", tmp_path / "data", tmp_path / "net.ckpt", "--seed", 1) == 0
    with open(tmp_path / "net.ckpt.curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["epoch"] for r in rows] == ["1", "2"]
    low = tmp_path / "data" / "low_0000.pgm"
    for name in ("a.pgm", "b.pgm"):
        assert run("enhance", tmp_path / "net.ckpt", low, tmp_path / name, "--seed", 5, "--T", 20) == 0
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()
    assert run("enhance", tmp_path / "net.ckpt", low, tmp_path / "c.pgm", "--seed", 6, "--T", 20) == 0
    assert (tmp_path / "a.pgm").read_bytes() != (tmp_path / "c.pgm").read_bytes()
    assert run("metrics", "--manifest", tmp_path / "data" / "manifest.tsv", "--out", tmp_path / "m.csv") == 0
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert len(lines) == 10 and lines[-1].startswith("mean,")


def test_workspace_pipeline(tmp_path):
    cfg = tmp_path / "arm.cfg"
    cfg.write_text(ArmSetup().to_text())
    ws = tmp_path / "ws.csv"
    assert run("workspace", cfg, "--candidates", 30, "--seed", 2, "--out", ws) == 0
    header = ws.read_text().splitlines()[0]
    assert header == "q1,q2,q3,q4,q5,q6,r,az,el,feasible"
    assert run("workspace-plot", ws, cfg, tmp_path / "proj.csv") == 0
    assert (tmp_path / "proj.csv").read_text().splitlines()[0] == "view,h,z"
    out = tmp_path / "picks.csv"
    assert run("sample-poses", ws, "--bins", "2,2,2", "--k", 5, "--seed", 4, "--spin", "--config", cfg, "--out", out) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 1 + 5 * 36


def test_exit_codes(tmp_path, capsys):
    assert run("metrics", "--nope") == 1
    assert run("enhance") == 1
    assert run("sample-poses", tmp_path / "x.csv", "--bins", "1,2") == 1
    assert run("metrics", tmp_path / "missing.pgm", tmp_path / "missing.pgm") == 2
    (tmp_path / "bad.cfg").write_text("this is not a config\n")
    assert run("workspace", tmp_path / "bad.cfg") == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert all(line.startswith(("usage error:", "error:")) for line in err)


def test_numeric_failure_exit_code(tmp_path):
    (tmp_path / "run.cfg").write_text(SMALL_RUN)
    assert run("synth-data", tmp_path / "d", "--n", 8, "--size", 16) == 0
    assert run("train", tmp_path / "run.cfg", tmp_path / "d", tmp_path / "n.ckpt") == 0
    state = checkpoint.load(tmp_path / "n.ckpt")
    state["out.b"] = np.full_like(state["out.b"], np.nan)
    checkpoint.save(tmp_path / "nan.ckpt", state)
    code = run("enhance", tmp_path / "nan.ckpt", tmp_path / "d" / "low_0000.pgm", tmp_path / "o.pgm", "--T", 5)
    assert code == 3


def test_console_script_entry_point(tmp_path):
    done = subprocess.run([sys.executable, "-m", "orbit_llie.cli", "schedule-dump", "--T", "3"],
                          capture_output=True, text=True)
    assert done.returncode == 0
    assert done.stdout.splitlines()[0] == "t,beta,alpha,gamma"
    bad = subprocess.run([sys.executable, "-m", "orbit_llie.cli", "frobnicate"], capture_output=True, text=True)
    assert bad.returncode == 1
    assert len(bad.stderr.strip().splitlines()) == 1
