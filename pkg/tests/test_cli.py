import json

import numpy as np
import pytest

from wirehouse.cli import EXIT_DATA, EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, main, run_record_path
from wirehouse.quantizer import read_tokens
from wirehouse.wireframe import cube_wireframe, read_wireframe, write_wireframe

TINY_CONFIG = """\
preset = desk
[synth]
max_segments = 100
[ae]
embed_dim = 8
gcn_dims = (8, 8)
latent_dim = 8
heads = 2
encoder_layers = 1
window = 4
decoder_dim = 8
decoder_layers = 1
conv_channels = (4, 4)
conv_blocks = (1, 1)
[ae_train]
total_epochs = 3
warmup_epochs = 1
batch_size = 4
[gen]
dim = 8
heads = 2
coarse_layers = 1
[gen_train]
total_epochs = 3
warmup_epochs = 1
[sample]
count = 3
[eval]
points = 32
emd_points = 16
novelty_bins = 3
"""


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    cfg = root / "tiny.ini"
    cfg.write_text(TINY_CONFIG)
    steps = [
        ("synth", "--config", cfg, "--count", 12, "--seed", 0, "--out", root / "data"),
        ("train-ae", "--config", cfg, "--dataset", root / "data", "--out", root / "ae.ck",
         "--quiet"),
        ("tokenize", "--config", cfg, "--ckpt", root / "ae.ck", "--dataset", root / "data",
         "--out", root / "tokens"),
        ("train-gen", "--config", cfg, "--tokens", root / "tokens", "--out", root / "gen.ck",
         "--quiet"),
        ("sample", "--config", cfg, "--ckpt", root / "gen.ck", "--ae", root / "ae.ck",
         "--out", root / "samples"),
        ("eval", "--config", cfg, "--samples", root / "samples", "--dataset", root / "data",
         "--out", root / "eval"),
    ]
    codes = [run(*s) for s in steps]
    return root, codes


def test_pipeline_exits_cleanly(pipeline, capsys):
    root, codes = pipeline
    assert codes == [EXIT_OK] * 6
    report = json.loads((root / "eval" / "report.json").read_text())
    assert report["generated"] == 3
    for name in ("per_sample.csv", "novelty.csv", "run.json"):
        assert (root / "eval" / name).exists()
    assert (root / "ae.ck.metrics.csv").read_text().startswith("epoch,lr,total")
    assert (root / "gen.ck.run.json").exists()


def test_tokens_match_dataset(pipeline):
    root, _ = pipeline
    index = json.loads((root / "tokens" / "tokens.json").read_text())
    assert len(index["sequences"]) == 12
    manifest = json.loads((root / "data" / "manifest.json").read_text())
    counts = {s["id"]: s["segment_count"] for s in manifest["samples"]}
    for s in index["sequences"]:
        tf = read_tokens(root / "tokens" / s["file"])
        assert len(tf.tokens) == 2 * 2 * counts[s["id"]] + 1 == s["length"]


def test_run_records(pipeline):
    root, _ = pipeline
    rec = json.loads((root / "samples" / "run.json").read_text())
    assert set(rec) == {"command", "config_hash", "seed", "params", "inputs", "versions"}
    assert rec["params"] == {"count": 3, "temperature": 1.0}
    assert set(rec["inputs"]) == {"generator", "autoencoder"}
    synth = json.loads((root / "data" / "run.json").read_text())
    assert synth["config_hash"] == rec["config_hash"]


def test_complete_and_inspect(pipeline, capsys, tmp_path):
    root, _ = pipeline
    prefix = sorted((root / "tokens").glob("*.tok"))[0]
    code = run("complete", "--config", root / "tiny.ini", "--ckpt", root / "gen.ck",
               "--ae", root / "ae.ck", "--prefix", prefix, "--keep-segments", 2,
               "--count", 2, "--out", tmp_path / "comp")
    assert code == EXIT_OK
    body = read_tokens(prefix).tokens[:8]
    for k in range(2):
        toks = read_tokens(tmp_path / "comp" / f"completion_{k:04d}.tok").tokens
        assert np.array_equal(toks[:8], body)
    capsys.readouterr()
    assert run("inspect", prefix) == EXIT_OK
    assert "complete: True" in capsys.readouterr().out


def test_synth_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("synth", "--count", 6, "--seed", 0, "--out", tmp_path / d) == EXIT_OK
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 6 + 3
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_config_hash_follows_parameters(tmp_path):
    (tmp_path / "c1.ini").write_text("[ae_train]\nlr_max = 2e-3\n")
    (tmp_path / "c2.ini").write_text("[ae_train]\nlr_max = 3e-3\n")
    hashes = []
    for name, cfg in (("x", None), ("y", "c1.ini"), ("z", "c2.ini")):
        extra = ["--config", tmp_path / cfg] if cfg else []
        run("synth", *extra, "--count", 2, "--out", tmp_path / name)
        hashes.append(json.loads((tmp_path / name / "run.json").read_text())["config_hash"])
    # c1 restates the desk default, c2 changes it
    assert hashes[0] == hashes[1] != hashes[2]


def test_inspect_cube(tmp_path, capsys):
    write_wireframe(tmp_path / "cube.wf", cube_wireframe())
    assert run("inspect", tmp_path / "cube.wf") == EXIT_OK
    out = capsys.readouterr().out
    assert "vertices: 8" in out and "segments: 12" in out
    assert "components: 1" in out and "cvp3: 1.0000" in out


def test_split_command(tmp_path, two_squares):
    write_wireframe(tmp_path / "w.wf", two_squares)
    assert run("split", tmp_path / "w.wf", "--out", tmp_path / "parts") == EXIT_OK
    parts = sorted((tmp_path / "parts").glob("part_*.wf"))
    assert len(parts) == 2
    assert all(read_wireframe(p).num_segments == 4 for p in parts)


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("synth", "--count", "many", "--out", tmp_path)
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == EXIT_USAGE
    (tmp_path / "bad.ini").write_text("[ae]\nnope = 1\n")
    assert run("synth", "--config", tmp_path / "bad.ini", "--count", 1,
               "--out", tmp_path / "o") == EXIT_USAGE


def test_data_errors(tmp_path):
    assert run("inspect", tmp_path / "missing.wf") == EXIT_DATA
    (tmp_path / "bad.wf").write_text("v 0 0\n")
    assert run("inspect", tmp_path / "bad.wf") == EXIT_DATA
    assert run("train-ae", "--dataset", tmp_path, "--out", tmp_path / "x.ck") == EXIT_DATA
    (tmp_path / "junk.ck").write_bytes(b"junk")
    assert run("sample", "--ckpt", tmp_path / "junk.ck", "--ae", tmp_path / "junk.ck",
               "--out", tmp_path / "s") == EXIT_DATA


def test_divergence_exit_code(pipeline, tmp_path):
    root, _ = pipeline
    cfg = tmp_path / "hot.ini"
    cfg.write_text(TINY_CONFIG.replace("[ae_train]\n", "[ae_train]\nlr_max = 1e300\nlr_min = 1e299\n"))
    code = run("train-ae", "--config", cfg, "--dataset", root / "data",
               "--out", tmp_path / "ae.ck", "--quiet")
    assert code == EXIT_DIVERGED


def test_run_record_path(tmp_path):
    assert run_record_path(tmp_path) == tmp_path / "run.json"
    assert run_record_path(tmp_path / "m.ck") == tmp_path / "m.ck.run.json"
