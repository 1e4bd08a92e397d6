import json
import shutil

import numpy as np
import pytest

from warpforge.cli import main
from warpforge.faces import write_demo_corpus
from warpforge.flow import flow_magnitude
from warpforge.io import read_flo, read_image, read_manifest, read_msk, write_flo
from warpforge.pipeline import (EvalBundle, assign_split, balanced_iteration_weights, evaluate,
                                generate_dataset, overlay_weights, render_overlay, render_undo)
from warpforge.synth import FalParams, SynthConfig, params_to_flow


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    lm = write_demo_corpus(root / "images", 2, 96, seed=1)
    return root / "images", lm


@pytest.fixture(scope="module")
def dataset(corpus, tmp_path_factory):
    images, lm = corpus
    out = tmp_path_factory.mktemp("ds")
    entries = generate_dataset(images, lm, out, SynthConfig(seed=5), reps=6, workers=1)
    return out, entries


def test_dataset_layout(dataset):
    out, entries = dataset
    assert sum(e["label"] == "real" for e in entries) == 2
    assert sum(e["label"] == "fake" for e in entries) == 12
    assert [e["id"] for e in entries] == sorted(e["id"] for e in entries)
    assert read_manifest(out / "manifest.jsonl") == entries
    meta = json.loads((out / "meta.json").read_text())
    assert meta["reps"] == 6 and meta["synth_config"]["seed"] == 5
    for e in entries:
        assert e["split"] in ("train", "val", "test")
        assert (out / e["original_path"]).exists()
        if e["label"] == "fake":
            flow = read_flo(out / e["flow_path"])
            mask = read_msk(out / e["mask_path"])
            assert flow_magnitude(flow).max() <= 5.0 + 1e-5
            assert mask.shape == flow.shape[:2] and 0 <= mask.min() and mask.max() <= 1
            assert FalParams.from_dict(e["params"]).active()
            assert read_image(out / e["warped_path"]).shape == (96, 96, 3)


def test_rerun_is_byte_identical(corpus, dataset, tmp_path):
    images, lm = corpus
    out, _ = dataset
    generate_dataset(images, lm, tmp_path, SynthConfig(seed=5), reps=6, workers=1)
    for f in sorted(p for p in out.rglob("*") if p.is_file()):
        rel = f.relative_to(out)
        assert (tmp_path / rel).read_bytes() == f.read_bytes(), rel


def test_missing_landmarks_skipped(corpus, tmp_path, caplog):
    images, lm = corpus
    imgs = tmp_path / "imgs"
    shutil.copytree(images, imgs)
    shutil.copy(imgs / "face_0000.png", imgs / "stranger.png")
    entries = generate_dataset(imgs, lm, tmp_path / "out", reps=1, workers=1)
    assert {e["image_id"] for e in entries} == {"face_0000", "face_0001"}
    assert "stranger.png" in caplog.text


def test_split_assignment():
    assert assign_split("abc") == assign_split("abc")
    counts = {"train": 0, "val": 0, "test": 0}
    for i in range(3000):
        counts[assign_split(f"img{i}")] += 1
    assert abs(counts["train"] / 3000 - 0.8) < 0.03
    assert assign_split("x", {"only": 1.0}) == "only"


def test_balanced_weights():
    manifest = [{"label": "real"}] + [{"label": "fake"}] * 6
    w = balanced_iteration_weights(manifest)
    assert w[0] == 6.0 and w[1:] == [1.0] * 6
    with pytest.raises(ValueError):
        balanced_iteration_weights([{"label": "fake"}])


def _oracle_bundle(out, entries):
    scores = {e["id"]: float(e["label"] == "fake") for e in entries}
    flows = {e["id"]: read_flo(out / e["flow_path"]) for e in entries if e["label"] == "fake"}
    return EvalBundle(scores=scores, flows=flows)


def test_evaluate_oracle(dataset):
    out, entries = dataset
    rep = evaluate(entries, _oracle_bundle(out, entries), out)
    cls, loc = rep["classification"], rep["localization"]
    assert cls["ap"] == 100.0 and cls["2afc"] == 100.0 and cls["n_pairs"] == 12
    assert cls["accuracy"]["total"] == 100.0
    assert loc["epe"] == 0.0 and loc["iou"] == 1.0 and loc["n"] == 12
    assert loc["delta_psnr"] > 0


def test_evaluate_zero_flow(dataset):
    out, entries = dataset
    flows = {e["id"]: np.zeros((96, 96, 2), np.float32) for e in entries if e["label"] == "fake"}
    loc = evaluate(entries, EvalBundle(flows=flows), out)["localization"]
    assert loc["delta_psnr"] == 0.0
    for row in loc["entries"]:
        assert row["delta_psnr"] == 0.0
        if row["gt_region_px"]:
            assert row["iou"] == 0.0


def test_evaluate_shuffled_scores(dataset):
    out, entries = dataset
    rng = np.random.default_rng(0)
    labels = np.array([e["label"] == "fake" for e in entries])
    aps = []
    for _ in range(200):
        scores = {e["id"]: float(s) for e, s in zip(entries, rng.random(len(entries)))}
        aps.append(evaluate(entries, EvalBundle(scores=scores), out)["classification"]["ap"] / 100)
    # a random ranking has AP close to the positive rate
    se = np.std(aps) / np.sqrt(len(aps))
    assert abs(np.mean(aps) - labels.mean()) < 3 * se + 0.02


def test_evaluate_errors_and_omissions(dataset, caplog):
    out, entries = dataset
    with pytest.raises(ValueError, match="not in the manifest"):
        evaluate(entries, EvalBundle(scores={"nope": 0.1}), out)
    rep = evaluate(entries, EvalBundle(), out)
    assert "classification" not in rep and "localization" not in rep
    assert "omitted" in caplog.text


def test_overlay(face):
    img, mesh = face
    zero = render_overlay(img, np.zeros(img.shape[:2] + (2,)))
    gray = img @ np.array([0.299, 0.587, 0.114])
    np.testing.assert_allclose(zero, np.repeat(gray[..., None], 3, -1), atol=1e-12)
    flow = params_to_flow(FalParams(mouth_smile=1.0), mesh)
    w = overlay_weights(flow)
    y, x = np.unravel_index(np.argmax(w), w.shape)
    x0, y0, x1, y1 = mesh.bbox("mouth")
    assert x0 - 2 <= x <= x1 + 2 and y0 - 2 <= y <= y1 + 2
    out = render_overlay(img, flow)
    assert out.shape == img.shape and out.min() >= 0 and out.max() <= 1
    with pytest.raises(ValueError):
        render_overlay(img, np.zeros((3, 3, 2)))


def test_undo(face, tmp_path):
    img, _ = face
    np.testing.assert_array_equal(render_undo(img, np.zeros(img.shape[:2] + (2,))), img)
    out = render_undo(img, np.ones(img.shape[:2] + (2,)) * 0.5, tmp_path / "u.png")
    np.testing.assert_array_equal(read_image(tmp_path / "u.png"), np.round(out * 255) / 255)


def test_cli_end_to_end(tmp_path, capsys):
    imgs = tmp_path / "imgs"
    assert main(["demo-corpus", "--out", str(imgs), "--count", "2", "--size", "64"]) == 0
    ds = tmp_path / "ds"
    assert main(["synth", "--images", str(imgs), "--landmarks", str(imgs / "landmarks.json"),
                 "--out", str(ds), "--reps", "2", "--seed", "3", "--workers", "1"]) == 0
    entries = read_manifest(ds / "manifest.jsonl")
    fake = next(e for e in entries if e["label"] == "fake")
    flo = ds / fake["flow_path"]

    assert main(["mask", "--forward", str(flo), "--out", str(tmp_path / "m.msk")]) == 0
    assert read_msk(tmp_path / "m.msk").shape == (64, 64)
    assert main(["unwarp", "--image", str(ds / fake["warped_path"]), "--flow", str(flo),
                 "--out", str(tmp_path / "u.png")]) == 0
    assert main(["overlay", "--image", str(ds / fake["warped_path"]), "--flow", str(flo),
                 "--out", str(tmp_path / "o.png"), "--max-disp", "3"]) == 0
    capsys.readouterr()
    assert main(["loss", "--pred", str(flo), "--gt", str(flo), "--mask", str(ds / fake["mask_path"]),
                 "--modified", str(ds / fake["warped_path"]),
                 "--original", str(ds / fake["original_path"]), "--strides", "2", "8"]) == 0
    loss = json.loads(capsys.readouterr().out)
    assert loss["epe"] == 0.0 and loss["ms"] == 0.0 and loss["strides"] == [2, 8]

    (tmp_path / "s.csv").write_text("id,score,label\n" + "".join(
        f"{e['id']},{float(e['label'] == 'fake')},{e['label']}\n" for e in entries))
    preds = tmp_path / "preds"
    preds.mkdir()
    for e in entries:
        if e["label"] == "fake":
            write_flo(preds / f"{e['id']}.flo", read_flo(ds / e["flow_path"]))
    assert main(["eval", "--manifest", str(ds / "manifest.jsonl"), "--scores", str(tmp_path / "s.csv"),
                 "--flows", str(preds), "--out", str(tmp_path / "r.json")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["classification"]["ap"] == 100.0 and rep["localization"]["epe"] == 0.0
    assert "entries" not in rep["localization"]

    (tmp_path / "spec.json").write_text(json.dumps({"flip": True, "jpeg_quality": 80}))
    assert main(["augment", "--spec", str(tmp_path / "spec.json"), "--input", str(imgs),
                 "--output", str(tmp_path / "aug"), "--per-image-seed"]) == 0
    assert len(list((tmp_path / "aug").glob("*.png"))) == 2
    assert main(["corrupt", "--input", str(imgs), "--output", str(tmp_path / "cor"),
                 "--jpeg", "30", "--blur", "1.5"]) == 0
    assert len(list((tmp_path / "cor" / "jpeg_q30").glob("*.png"))) == 2
    assert len(list((tmp_path / "cor" / "blur_s1.5").glob("*.png"))) == 2

    capsys.readouterr()
    assert main(["synth", "--benchmark", "2", "--bench-size", "64", "--workers", "1"]) == 0
    bench = json.loads(capsys.readouterr().out)
    assert bench["triples"] == 2 and bench["triples_per_second"] > 0


def test_cli_config_file(tmp_path, corpus):
    images, lm = corpus
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"synth": {"max_displacement": 2.0, "seed": 9}, "reps": 1}))
    assert main(["synth", "--config", str(conf), "--images", str(images), "--landmarks", str(lm),
                 "--out", str(tmp_path / "ds"), "--workers", "1"]) == 0
    entries = read_manifest(tmp_path / "ds" / "manifest.jsonl")
    assert len(entries) == 4
    for e in entries:
        if e["flow_path"]:
            assert flow_magnitude(read_flo(tmp_path / "ds" / e["flow_path"])).max() <= 2.0 + 1e-5
    with pytest.raises(SystemExit):
        main(["synth", "--images", str(images)])


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "warpforge", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "synth" in res.stdout
