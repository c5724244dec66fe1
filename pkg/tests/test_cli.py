import subprocess
import sys

import numpy as np
import pytest

from gglr_retinex.cli import EXIT_INPUT, RunConfig, main, process, run
from gglr_retinex.imageio import load_image, save_image
from gglr_retinex.report import read_report
from gglr_retinex.retinex import PlanarImage, RetinexParams
from gglr_retinex.synthetic import low_light_scene


@pytest.fixture
def scene_png(tmp_path):
    l, r, y = low_light_scene(20, 25, rng=3)
    p = tmp_path / "scene.png"
    save_image(PlanarImage(np.stack([y, 0.8 * y, 0.6 * y], axis=2)), p)
    return p


def test_constant_image_fixed_point(tmp_path):
    src, dst = tmp_path / "c.pgm", tmp_path / "out.png"
    save_image(PlanarImage(np.full((10, 10), 64 / 255)), src)
    code = main(["enhance", "--input", str(src), "--output", str(dst), "--noise-sigma", "0",
                 "--gamma", "0.5", "--threads", "1"])
    assert code == 0
    # output is 8-bit; compare in float before quantisation via the in-process path too
    out, _ = process(RunConfig(str(src), str(dst), RetinexParams(gamma=0.5), noise_sigma=0.0))
    np.testing.assert_allclose(out.data, (64 / 255) ** 0.5, atol=1e-3)
    np.testing.assert_allclose(load_image(dst).data, (64 / 255) ** 0.5, atol=1 / 255)


def test_missing_input(tmp_path, capsys):
    code = main(["enhance", "--input", str(tmp_path / "missing.png"), "--output", str(tmp_path / "o.png")])
    assert code == EXIT_INPUT
    assert "input error" in capsys.readouterr().err


def test_bad_config(tmp_path, capsys):
    code = main(["enhance", "--input", "a.png", "--output", "b.png", "--gamma", "1.5"])
    assert code != 0
    assert "config error" in capsys.readouterr().err


def test_resize_policy(tmp_path):
    src = tmp_path / "odd.png"
    save_image(PlanarImage(np.full((12, 13, 3), 0.2)), src)
    out, rep = process(RunConfig(str(src), str(tmp_path / "o.png"), noise_sigma=0))
    assert out.data.shape == (10, 10, 3)
    code = run(RunConfig(str(src), str(tmp_path / "o.png"), resize_policy="error"))
    assert code == EXIT_INPUT


def test_report_round_trip_and_totals(scene_png, tmp_path):
    rep_path = tmp_path / "r.txt"
    code = main(["enhance", "--input", str(scene_png), "--output", str(tmp_path / "o.png"),
                 "--report", str(rep_path), "--threads", "2"])
    assert code == 0
    rep = read_report(rep_path)
    s = rep.summary
    assert s["height"] == 20 and s["width"] == 25 and s["patches"] == 20
    assert s["solves"] == len(rep.records)
    assert s["cg_iterations_total"] == sum(r["iterations"] for r in rep.records)
    kb = [r["kappa_before"] for r in rep.records]
    assert s["kappa_before_max"] == max(kb)
    assert s["kappa_before_mean"] == pytest.approx(np.mean(kb), rel=1e-12)
    assert [r["patch"] for r in rep.records] == sorted(r["patch"] for r in rep.records)
    assert all(r["converged"] for r in rep.records)
    assert 0 <= s["loe"] <= 1


def test_determinism(scene_png, tmp_path):
    runs = []
    for k in range(2):
        out = tmp_path / f"o{k}.png"
        rp = tmp_path / f"r{k}.txt"
        assert main(["enhance", "--input", str(scene_png), "--output", str(out), "--report", str(rp),
                     "--seed", "11", "--noise-sigma", "0.01"]) == 0
        runs.append((out.read_bytes(), read_report(rp).without_timings()))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]


def test_precondition_toggle(scene_png, tmp_path):
    params = RetinexParams(estimate_kappa=True)
    on_img, on = process(RunConfig(str(scene_png), "x.png", params, seed=5))
    off_img, off = process(RunConfig(str(scene_png), "x.png", RetinexParams(precondition=False, estimate_kappa=True), seed=5))
    assert np.max(np.abs(on_img.data - off_img.data)) <= 1e-5
    assert on.summary["kappa_after_mean"] < on.summary["kappa_before_mean"]
    # on ill-conditioned solves preconditioning needs no more iterations
    worst = [i for i, r in enumerate(off.records) if r["kappa_before"] >= 1e3]
    if worst:
        assert np.median([on.records[i]["iterations"] for i in worst]) <= np.median(
            [off.records[i]["iterations"] for i in worst])


def test_reference_metrics(tmp_path):
    l, r, y = low_light_scene(15, 15, rng=1)
    ref = tmp_path / "ref.png"
    src = tmp_path / "in.png"
    save_image(PlanarImage(l ** 0.5 * r), ref)
    save_image(PlanarImage(y), src)
    _, rep = process(RunConfig(str(src), "x.png", reference_path=str(ref)))
    assert rep.summary["mse"] > 0 and np.isfinite(rep.summary["psnr"])


def test_bench(tmp_path, capsys):
    d = tmp_path / "imgs"
    d.mkdir()
    for k in range(2):
        _, _, y = low_light_scene(10 + 5 * k, 15, rng=k)
        save_image(PlanarImage(y), d / f"img{k}.png")
    (d / "notes.txt").write_text("ignored")
    report = tmp_path / "bench.txt"
    outdir = tmp_path / "out"
    outdir.mkdir()
    assert main(["bench", "--input-dir", str(d), "--report", str(report), "--output-dir", str(outdir),
                 "--no-kappa"]) == 0
    text = report.read_text()
    assert "img0" in text and "img1" in text and "Average" in text and "15 x 15" in text
    assert sorted(p.name for p in outdir.iterdir()) == ["img0_enhanced.png", "img1_enhanced.png"]


def test_bench_empty_dir(tmp_path):
    assert main(["bench", "--input-dir", str(tmp_path), "--report", str(tmp_path / "b.txt")]) == EXIT_INPUT


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "gglr_retinex.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "enhance" in res.stdout and "bench" in res.stdout
