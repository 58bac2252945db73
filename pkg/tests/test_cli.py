import numpy as np
import pytest

from rvescope.cli import ConfigError, _threads, main, parse_config, read_config_file
from rvescope.micrograph import Micrograph, load_micrograph, save_pgm, write_meta
from rvescope.report import CSV_HEADER, read_csv

SMALL_RUN = ["--ls", "5", "--sizes", "8:48:8", "--cv-folds", "0"]


@pytest.fixture
def small_image(tmp_path, disks256):
    path = tmp_path / "disks.pgm"
    sub = Micrograph(disks256.phases[:96, :96].copy(), 0.25)
    save_pgm(path, sub)
    write_meta(path, 0.25)
    return path


def _run(tmp_path, image, *extra, stem="out"):
    args = ["run", "--input", str(image), *SMALL_RUN,
            "--csv", str(tmp_path / f"{stem}.csv"), "--svg", str(tmp_path / f"{stem}.svg"),
            "--report", str(tmp_path / f"{stem}.txt"), *extra]
    return main(args)


def test_parse_config_examples():
    cfg = parse_config(["run", "--input", "x.pgm", "--sizes", "40:800:20"])
    assert cfg.ls == 21
    from rvescope.cli import resolve_sizes

    assert len(resolve_sizes(cfg, (2000, 2000))) == 39
    with pytest.raises(ConfigError, match="odd"):
        parse_config(["run", "--input", "x.pgm", "--ls", "20"])
    with pytest.raises(ConfigError, match="conflicts"):
        parse_config(["run", "--input", "x.pgm", "--sizes", "8:64:8", "--size-min", "8"])


def test_exit_code_for_config_errors(tmp_path, small_image, capsys):
    assert main(["run", "--input", str(small_image), "--ls", "20"]) == 2
    assert main(["run", "--input", str(small_image), "--sizes", "8:64:8", "--size-count", "5"]) == 2
    assert main(["run", "--input", str(small_image), "--model", "forest"]) == 2
    assert main(["frobnicate"]) == 2
    assert "conflicts" in capsys.readouterr().err


def test_config_file_round_trip(tmp_path):
    cfg = parse_config(["run", "--input", "a.pgm", "--ls", "9", "--lambda", "0.5", "--a", "full",
                        "--sizes", "8:64:8"])
    path = tmp_path / "run.cfg"
    path.write_text(cfg.to_text())
    back = parse_config(["run", "--config", str(path)])
    assert back == cfg
    # flags override the file
    assert parse_config(["run", "--config", str(path), "--ls", "11"]).ls == 11
    assert read_config_file(path)["lam"] == 0.5


def test_unknown_config_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("colour = red\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(["run", "--config", str(path)])


def test_run_outputs(tmp_path, small_image, capsys):
    assert _run(tmp_path, small_image) == 0
    lines = (tmp_path / "out.csv").read_text().split("\n")
    assert lines[-1] == ""
    assert tuple(lines[0].split(",")) == CSV_HEADER
    assert len(lines) - 1 == 7  # header and six sizes
    svg = (tmp_path / "out.svg").read_text()
    assert svg.count('class="rve-marker"') == 1
    report = (tmp_path / "out.txt").read_text()
    assert "RVE size" in report and "confidence" in report
    assert "ls = 5" in report
    assert capsys.readouterr().out == report
    stats, scale = read_csv(tmp_path / "out.csv")
    assert [s.w for s in stats] == [8, 16, 24, 32, 40, 48]
    assert scale == 0.25


def test_run_is_byte_identical(tmp_path, small_image):
    assert _run(tmp_path, small_image, stem="a") == 0
    assert _run(tmp_path, small_image, stem="b") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_curve_subcommand(tmp_path, small_image, capsys):
    assert _run(tmp_path, small_image) == 0
    capsys.readouterr()
    svg = tmp_path / "again.svg"
    assert main(["curve", "--csv", str(tmp_path / "out.csv"), "--svg", str(svg)]) == 0
    out = capsys.readouterr().out
    first = (tmp_path / "out.txt").read_text()
    pick = [line for line in first.splitlines() if line.startswith("RVE size")]
    assert pick and pick[0] in out
    assert svg.read_text().count("rve-marker") == 1


def test_save_model(tmp_path, small_image):
    assert _run(tmp_path, small_image, "--save-model", str(tmp_path / "m.json")) == 0
    from rvescope.model import load_model

    m = load_model(tmp_path / "m.json")
    assert m.n_features_in_ == 24


def test_generate_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
    args = ["--kind", "boolean-disks", "--vf", "0.1", "--radius", "6", "--size", "128", "--seed", "7",
            "--scale", "0.5"]
    assert main(["generate", "--output", str(a), *args]) == 0
    assert main(["generate", "--output", str(b), *args]) == 0
    assert a.read_bytes() == b.read_bytes()
    m = load_micrograph(a)
    assert m.shape == (128, 128)
    assert m.scale == 0.5
    assert 0.09 <= m.volume_fraction <= 0.11
    assert "realized vf" in capsys.readouterr().out


def test_exit_code_io(tmp_path):
    assert main(["run", "--input", str(tmp_path / "missing.pgm")]) == 3
    junk = tmp_path / "junk.pgm"
    junk.write_bytes(b"not an image")
    assert main(["run", "--input", str(junk)]) == 3


def test_exit_code_generation(tmp_path):
    code = main(["generate", "--output", str(tmp_path / "g.pgm"), "--vf", "0.95", "--radius", "40",
                 "--size", "256"])
    assert code == 4


def test_exit_code_numeric(tmp_path):
    blank = tmp_path / "blank.pgm"
    save_pgm(blank, np.zeros((64, 64), dtype=np.uint8))
    code = main(["run", "--input", str(blank), "--threshold", "1", "--ls", "5",
                 "--sizes", "8:32:8", "--csv", str(tmp_path / "x.csv")])
    assert code == 5


def test_threads_from_environment(monkeypatch, tmp_path, small_image):
    cfg = parse_config(["run", "--input", "x.pgm"])
    monkeypatch.setenv("RVE_SCOPE_THREADS", "1")
    assert _threads(cfg) == 1
    assert _threads(parse_config(["run", "--input", "x.pgm", "--threads", "3"])) == 3
    monkeypatch.setenv("RVE_SCOPE_THREADS", "many")
    assert _run(tmp_path, small_image) == 2
