import numpy as np
import pytest

import mfgmix.cli as cli
from mfgmix.cli import main
from mfgmix.core import MixtureModel, load_model, save_model
from mfgmix.errors import SubsystemError
from mfgmix.ingest import load_idx_images, load_idx_labels


@pytest.fixture()
def true_model(tmp_path):
    mu = np.vstack([np.full(16, 0.8), np.full(16, 0.2)])
    model = MixtureModel(weights=[0.5, 0.5], components=np.stack([1 - mu, mu], axis=-1))
    path = tmp_path / "true.mfgm"
    save_model(model, path)
    return path


@pytest.fixture()
def synth_files(tmp_path, true_model):
    images = tmp_path / "x.idx"
    labels = tmp_path / "y.idx"
    rc = main(["synth", "--model", str(true_model), "--N", "400", "--seed", "5",
               "--out-images", str(images), "--out-labels", str(labels)])
    assert rc == 0
    return images, labels


def run_fit(tmp_path, images, labels, out_name, *extra):
    out = tmp_path / out_name
    rc = main(["fit", "--images", str(images), "--labels", str(labels),
               "--classes", "0,1", "--S", "2", "--seed", "7",
               "--out", str(out), *extra])
    assert rc == 0
    return out


def test_full_pipeline(tmp_path, synth_files, capsys):
    images, labels = synth_files
    model_path = run_fit(tmp_path, images, labels, "fit.mfgm",
                         "--eps", "0.05", "--trace", str(tmp_path / "trace.csv"))
    capsys.readouterr()
    rc = main(["eval", "--model", str(model_path), "--images", str(images),
               "--labels", str(labels), "--classes", "0,1",
               "--out-h", str(tmp_path / "h.csv")])
    assert rc == 0
    printed = capsys.readouterr().out
    diag = float(printed.rsplit("aligned diagonal mean:", 1)[1].strip())
    assert diag >= 0.95
    rc = main(["export", "--model", str(model_path), "--side", "4",
               "--out-dir", str(tmp_path / "imgs")])
    assert rc == 0
    assert sorted(p.name for p in (tmp_path / "imgs").iterdir()) == [
        "component_00.pgm", "component_01.pgm"]
    trace = (tmp_path / "trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,theta_residual,log_likelihood"
    assert len(trace) >= 3


def test_eval_generating_model_scores_its_own_samples(tmp_path, true_model, synth_files,
                                                      capsys):
    images, labels = synth_files
    rc = main(["eval", "--model", str(true_model), "--images", str(images),
               "--labels", str(labels), "--classes", "0,1"])
    assert rc == 0
    printed = capsys.readouterr().out
    diag = float(printed.rsplit("aligned diagonal mean:", 1)[1].strip())
    assert diag >= 0.99


def test_runs_are_byte_identical(tmp_path, synth_files):
    images, labels = synth_files
    a = run_fit(tmp_path, images, labels, "a.mfgm", "--eps", "0.05",
                "--trace", str(tmp_path / "a.csv"))
    b = run_fit(tmp_path, images, labels, "b.mfgm", "--eps", "0.05",
                "--trace", str(tmp_path / "b.csv"))
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def digests(path):
        with open(str(path) + ".manifest") as fh:
            return [ln.split("=", 1)[1] for ln in fh if "sha256" in ln]

    assert digests(a) == digests(b)


def test_baseline_equals_subsystem_path_without_entropy(tmp_path, synth_files):
    # the two routes agree to solver precision; files are compared after
    # parsing because independent linear solves differ in the last ulps
    images, labels = synth_files
    a = run_fit(tmp_path, images, labels, "mfg.mfgm", "--eps", "0", "--max-iter", "40")
    b = run_fit(tmp_path, images, labels, "em.mfgm", "--eps", "0", "--max-iter", "40",
                "--baseline")
    ma, mb = load_model(a), load_model(b)
    assert np.abs(ma.weights - mb.weights).max() <= 1e-12
    assert np.abs(ma.components - mb.components).max() <= 1e-12


def test_config_file_supplies_flags_and_explicit_wins(tmp_path, synth_files):
    images, labels = synth_files
    cfg = tmp_path / "run.cfg"
    cfg.write_text("classes=0,1\nS=2\neps=0.05\nseed=7\nmax-iter=3\n")
    out1 = tmp_path / "c1.mfgm"
    rc = main(["fit", "--images", str(images), "--labels", str(labels),
               "--out", str(out1), "--config", str(cfg)])
    assert rc == 0
    manifest = (tmp_path / "c1.mfgm.manifest").read_text()
    assert "flag.max_iter=3" in manifest and "flag.eps=0.05" in manifest
    out2 = tmp_path / "c2.mfgm"
    rc = main(["fit", "--images", str(images), "--labels", str(labels),
               "--out", str(out2), "--config", str(cfg), "--max-iter", "5"])
    assert rc == 0
    assert "flag.max_iter=5" in (tmp_path / "c2.mfgm.manifest").read_text()


def test_solve_prints_closed_form(capsys):
    rc = main(["solve", "--theta", "0.7,0.3", "--eps", "0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "(-0.2, 0.2)" in out
    assert "(0.7, 0.3)" in out


def test_solve_three_state_fixed_point(capsys):
    rc = main(["solve", "--theta", "0.2,0.3,0.5", "--eps", "0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "(0.2, 0.3, 0.5)" in out  # distribution equals theta
    # value entries are 1/3 - theta(i)
    assert "(0.133333333333, 0.0333333333333, -0.166666666667)" in out


def test_usage_errors_exit_2(tmp_path, synth_files):
    images, labels = synth_files
    assert main(["fit", "--images", str(images), "--K", "0",
                 "--out", str(tmp_path / "z.mfgm")]) == 2
    assert main(["solve", "--theta", "0.5,0.6"]) == 2
    assert main(["fit"]) == 2
    assert main(["nonsense"]) == 2


def test_data_errors_exit_3(tmp_path, true_model, synth_files):
    images, labels = synth_files
    assert main(["fit", "--images", str(tmp_path / "missing.idx"), "--K", "2",
                 "--out", str(tmp_path / "z.mfgm")]) == 3
    # eval with a class count that disagrees with the model
    assert main(["eval", "--model", str(true_model), "--images", str(images),
                 "--labels", str(labels), "--classes", "0"]) == 3
    # export side mismatch
    assert main(["export", "--model", str(true_model), "--side", "3",
                 "--out-dir", str(tmp_path / "imgs")]) == 3
    # corrupt model file
    bad = tmp_path / "bad.mfgm"
    bad.write_text("MFGMIX v9\n")
    assert main(["eval", "--model", str(bad), "--images", str(images),
                 "--labels", str(labels)]) == 3


def test_eval_dimension_mismatch_exits_3(tmp_path, synth_files):
    images, labels = synth_files
    small = MixtureModel(weights=[0.5, 0.5], components=np.full((2, 4, 2), 0.5))
    path = tmp_path / "small.mfgm"
    save_model(small, path)
    assert main(["eval", "--model", str(path), "--images", str(images),
                 "--labels", str(labels), "--classes", "0,1"]) == 3


def test_solver_failures_exit_4(tmp_path, synth_files, monkeypatch):
    images, labels = synth_files

    def boom(*args, **kwargs):
        raise SubsystemError(1, 3, "forced failure")

    monkeypatch.setattr(cli, "fit", boom)
    rc = main(["fit", "--images", str(images), "--labels", str(labels),
               "--classes", "0,1", "--out", str(tmp_path / "z.mfgm")])
    assert rc == 4


def test_synth_empty_and_deterministic(tmp_path, true_model):
    x0, y0 = tmp_path / "e.idx", tmp_path / "el.idx"
    rc = main(["synth", "--model", str(true_model), "--N", "0",
               "--out-images", str(x0), "--out-labels", str(y0)])
    assert rc == 0
    assert load_idx_images(x0).num_images == 0
    assert load_idx_labels(y0).size == 0
    x1, y1 = tmp_path / "s1.idx", tmp_path / "sl1.idx"
    x2, y2 = tmp_path / "s2.idx", tmp_path / "sl2.idx"
    for xi, yi in ((x1, y1), (x2, y2)):
        assert main(["synth", "--model", str(true_model), "--N", "100", "--seed", "3",
                     "--out-images", str(xi), "--out-labels", str(yi)]) == 0
    assert x1.read_bytes() == x2.read_bytes()
    assert y1.read_bytes() == y2.read_bytes()


def test_synth_then_fit_recovers_parameters(tmp_path, true_model, synth_files):
    # loose bound: N=400 sampling noise plus the entropy pull toward 1/2
    images, labels = synth_files
    out = run_fit(tmp_path, images, labels, "rec.mfgm", "--eps", "0.05")
    fitted = load_model(out)
    truth = load_model(true_model)
    mu = fitted.bernoulli_parameters()
    true_mu = truth.bernoulli_parameters()
    if abs(mu[0, 0] - true_mu[0, 0]) > abs(mu[1, 0] - true_mu[0, 0]):
        mu = mu[::-1]
    assert np.abs(mu - true_mu).max() <= 0.1
