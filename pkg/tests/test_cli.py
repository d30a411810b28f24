import os
import subprocess
import sys

import numpy as np
import pytest

from resvoc import synthetic
from resvoc.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from resvoc.io import load_codebook, load_track, write_wav

from conftest import FS


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    corpus.mkdir()
    for i, name in enumerate(("m1", "f1")):
        utt = synthetic.utterance(synthetic.SPEAKERS[name], 2.0, seed=40 + i)
        write_wav(corpus / f"{name}.wav", utt.wave)
    held = synthetic.utterance(synthetic.SPEAKERS["m2"], 2.0, seed=99)
    write_wav(root / "held.wav", held.wave)
    assert main(["train", "--corpus", str(corpus), "--out", str(root / "cb.rscb"), "--k", "8", "--n", "3",
                 "--full-out", str(root / "full.rscb")]) == EXIT_OK
    return root


def run(*args, env=None):
    return subprocess.run([sys.executable, "-m", "resvoc.cli", *map(str, args)], capture_output=True, text=True,
                          env=env)


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------

class TestCommands:
    def test_train_outputs(self, workspace):
        cb = load_codebook(workspace / "cb.rscb")
        full = load_codebook(workspace / "full.rscb")
        assert cb.kind == "compressed" and len(cb) == 8 and cb.n_closest == 3
        assert full.kind == "full" and len(full) > 8
        assert cb.pca is not None and cb.digest == full.digest

    def test_analyze(self, workspace):
        out = workspace / "held.trk"
        assert main(["analyze", "--in", str(workspace / "held.wav"), "--track-out", str(out)]) == EXIT_OK
        track, env = load_track(out)
        assert track.total_length == 2 * FS and any(e.voiced for e in track.events)

    def test_copy_synth_modes(self, workspace, capsys):
        for mode, cb in (("compressed", "cb.rscb"), ("full", "full.rscb")):
            rc = main(["copy-synth", "--in", str(workspace / "held.wav"), "--codebook", str(workspace / cb),
                       "--mode", mode, "--out", str(workspace / f"{mode}.wav"),
                       "--report", str(workspace / f"{mode}.txt")])
            assert rc == EXIT_OK
            assert "log_spectral_distortion_db" in (workspace / f"{mode}.txt").read_text()

    def test_pulse_without_codebook(self, workspace, capsys):
        rc = main(["copy-synth", "--in", str(workspace / "held.wav"), "--mode", "pulse",
                   "--out", str(workspace / "pulse.wav")])
        assert rc == EXIT_OK
        assert "segmental_snr_db" in capsys.readouterr().out

    def test_synth_from_track(self, workspace):
        trk = workspace / "synth.trk"
        main(["analyze", "--in", str(workspace / "held.wav"), "--track-out", str(trk)])
        rc = main(["synth", "--track", str(trk), "--codebook", str(workspace / "cb.rscb"),
                   "--out", str(workspace / "synth.wav")])
        assert rc == EXIT_OK and (workspace / "synth.wav").stat().st_size == 44 + 2 * 2 * FS

    def test_pca_export(self, workspace):
        out = workspace / "eig.csv"
        assert main(["pca", "--codebook", str(workspace / "cb.rscb"), "--eigen-out", str(out)]) == EXIT_OK
        assert len(out.read_text().splitlines()) == 21

    def test_metrics_identity(self, workspace, capsys):
        wav = str(workspace / "held.wav")
        assert main(["metrics", "--ref", wav, "--test", wav]) == EXIT_OK
        out = capsys.readouterr().out
        assert "log_spectral_distortion_db\t0.000000" in out


# ----------------------------------------------------------------------
# Errors and exit codes
# ----------------------------------------------------------------------

class TestErrors:
    def test_empty_corpus(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        rc = main(["train", "--corpus", str(tmp_path / "empty"), "--out", str(tmp_path / "x.rscb")])
        assert rc == EXIT_DATA
        err = capsys.readouterr().err
        assert "0 frames" in err

    def test_usage_errors(self, workspace, capsys):
        assert main([]) == EXIT_USAGE
        assert main(["train"]) == EXIT_USAGE
        assert main(["copy-synth", "--in", "x.wav", "--mode", "loud", "--out", "y.wav"]) == EXIT_USAGE
        assert main(["copy-synth", "--in", str(workspace / "held.wav"), "--mode", "full",
                     "--out", "y.wav"]) == EXIT_USAGE
        captured = capsys.readouterr()
        assert captured.out == ""

    def test_bad_files(self, workspace, tmp_path, capsys):
        bad = tmp_path / "bad.rscb"
        bad.write_bytes(b"nope")
        rc = main(["pca", "--codebook", str(bad), "--eigen-out", str(tmp_path / "e.csv")])
        assert rc == EXIT_DATA
        rc = main(["metrics", "--ref", str(bad), "--test", str(bad)])
        assert rc == EXIT_DATA
        rc = main(["metrics", "--ref", str(tmp_path / "missing.wav"), "--test", str(bad)])
        assert rc == EXIT_DATA
        assert "error" in capsys.readouterr().err

    def test_mode_codebook_mismatch(self, workspace):
        rc = main(["copy-synth", "--in", str(workspace / "held.wav"), "--codebook", str(workspace / "cb.rscb"),
                   "--mode", "full", "--out", str(workspace / "mm.wav")])
        assert rc == EXIT_DATA

    def test_subprocess_exit_codes(self, workspace):
        assert run("metrics", "--ref", workspace / "held.wav").returncode == EXIT_USAGE
        r = run("metrics", "--ref", workspace / "held.wav", "--test", workspace / "held.wav")
        assert r.returncode == EXIT_OK and r.stderr == ""


class TestReproducible:
    def test_byte_identical_across_threads(self, workspace):
        outputs = []
        for threads in ("1", "4"):
            env = dict(os.environ, OMP_NUM_THREADS=threads, OPENBLAS_NUM_THREADS=threads, MKL_NUM_THREADS=threads)
            out = workspace / f"rep{threads}"
            out.mkdir()
            assert run("train", "--corpus", workspace / "corpus", "--out", out / "cb.rscb", "--k", "8",
                       "--n", "3", env=env).returncode == 0
            assert run("copy-synth", "--in", workspace / "held.wav", "--codebook", out / "cb.rscb",
                       "--mode", "compressed", "--out", out / "y.wav", "--report", out / "r.txt",
                       env=env).returncode == 0
            outputs.append([(out / name).read_bytes() for name in ("cb.rscb", "y.wav", "r.txt")])
        assert outputs[0] == outputs[1]
        assert outputs[0][0] == (workspace / "cb.rscb").read_bytes()
