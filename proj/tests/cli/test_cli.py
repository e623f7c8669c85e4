import json
from pathlib import Path

import pytest
from PIL import Image


def weights(fx):
    return ["--weights", fx / "w.oswb"]


def small(fx):
    return [*weights(fx), "--query-side", 48]


def test_help_exits_zero(cli):
    r = cli("--help")
    assert r.returncode == 0
    assert "detect" in r.stdout


def test_unknown_flag_is_a_usage_error(cli):
    assert cli("detect", "--bogus").returncode == 2


def test_weights_check(cli, fixture_dir):
    r = cli("convert-weights-check", *weights(fixture_dir))
    assert r.returncode == 0
    assert "26 tensors" in r.stdout


def test_missing_weights(cli, fixture_dir, tmp_path):
    q = fixture_dir / "corpus/queries/query1.png"
    r = cli("detect", "--weights", tmp_path / "nope.oswb", "--query", q, "--target", q, "--out", tmp_path)
    assert r.returncode == 2
    assert "weights" in r.stderr


def test_corrupt_weights(cli, tmp_path):
    bad = tmp_path / "bad.oswb"
    bad.write_bytes(b"OSVGGW01" + b"\x00" * 40)
    r = cli("convert-weights-check", "--weights", bad)
    assert r.returncode == 2
    assert "weights" in r.stderr


def test_detect_planted(cli, fixture_dir, tmp_path):
    c = fixture_dir / "corpus"
    args = ["detect", *small(fixture_dir), "--query", c / "queries/query1.png", "--target",
            c / "targets/query1_t1.png", "--emit-scoremap", "--emit-overlay"]
    r = cli(*args, "--out", tmp_path / "a")
    assert r.returncode == 0, r.stderr
    dets = json.loads((tmp_path / "a/detections.json").read_text())
    assert len(dets) >= 1
    gt = {g["image_id"]: g for g in json.loads((c / "gt.json").read_text())}
    assert dets[0]["image_id"] == "query1_t1"
    assert dets[0]["query_id"] == "query1"
    assert dets[0]["stage"] == 2
    x, y, w, h = dets[0]["box"]
    gx, gy, gw, gh = gt["query1_t1"]["boxes"][0]
    ix = max(0, min(x + w, gx + gw) - max(x, gx))
    iy = max(0, min(y + h, gy + gh) - max(y, gy))
    assert ix * iy / (w * h + gw * gh - ix * iy) >= 0.5

    score = Image.open(tmp_path / "a/query1_t1_query1_score.png")
    assert score.size == (176, 176)
    assert score.mode.startswith("I")
    overlay = Image.open(tmp_path / "a/query1_t1_query1_overlay.png").convert("RGB")
    assert overlay.getpixel((x, y + h // 2)) == (255, 0, 0)

    r2 = cli(*args, "--out", tmp_path / "b")
    assert r2.returncode == 0
    assert (tmp_path / "a/detections.json").read_bytes() == (tmp_path / "b/detections.json").read_bytes()


def test_detect_blank_target_is_empty_but_succeeds(cli, fixture_dir, tmp_path):
    blank = tmp_path / "blank.png"
    Image.new("RGB", (160, 160), (90, 140, 60)).save(blank)
    r = cli("detect", *small(fixture_dir), "--query", fixture_dir / "corpus/queries/query1.png", "--target", blank,
            "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    assert json.loads((tmp_path / "detections.json").read_text()) == []


def test_setting_b_runs_only_block_5(cli, fixture_dir, tmp_path):
    c = fixture_dir / "corpus"
    r = cli("detect", *small(fixture_dir), "--setting", "b", "-v", "--query", c / "queries/query1.png", "--target",
            c / "targets/query1_t1.png", "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    assert "block 5:" in r.stderr
    for b in range(1, 5):
        assert f"block {b}:" not in r.stderr


def test_bad_setting_and_thresholds(cli, fixture_dir, tmp_path):
    q = fixture_dir / "corpus/queries/query1.png"
    base = ["detect", *small(fixture_dir), "--query", q, "--target", q, "--out", tmp_path]
    assert cli(*base, "--setting", "z").returncode == 2
    r = cli(*base, "--first-threshold", 0.95)
    assert r.returncode == 2
    assert "threshold" in r.stderr


def test_query_larger_than_target(cli, fixture_dir, tmp_path):
    tiny = tmp_path / "tiny.png"
    Image.new("RGB", (40, 40)).save(tiny)
    r = cli("detect", *small(fixture_dir), "--query", fixture_dir / "corpus/queries/query1.png", "--target", tiny,
            "--out", tmp_path)
    assert r.returncode == 2


def test_missing_image(cli, fixture_dir, tmp_path):
    r = cli("detect", *small(fixture_dir), "--query", tmp_path / "no.png", "--target", tmp_path / "no.png",
            "--out", tmp_path)
    assert r.returncode == 2
    assert "not found" in r.stderr


def write(path, doc):
    path.write_text(json.dumps(doc))
    return path


def test_eval_perfect_and_empty(cli, tmp_path):
    gt = write(tmp_path / "gt.json", [{"image_id": "t1", "boxes": [[10, 10, 20, 20]], "category": "q1"}])
    dets = write(tmp_path / "d.json",
                 [{"query_id": "q1", "image_id": "t1", "box": [10, 10, 20, 20], "score": 0.95, "stage": 2}])
    r = cli("eval", "--detections", dets, "--gt", gt, "--report", tmp_path / "r.json")
    assert r.returncode == 0, r.stderr
    assert "precision 1.000 recall 1.000" in r.stdout
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["mean_precision"] == 1.0
    assert report["per_query"][0]["tp"] == 1

    empty = write(tmp_path / "e.json", [])
    r = cli("eval", "--detections", empty, "--gt", gt)
    assert r.returncode == 0
    assert "precision 0.000 recall 0.000" in r.stdout


def test_eval_schema_errors_name_the_field(cli, tmp_path):
    gt = write(tmp_path / "gt.json", [{"image_id": "t1", "boxes": [[10, 10, -20, 20]]}])
    dets = write(tmp_path / "d.json", [])
    r = cli("eval", "--detections", dets, "--gt", gt)
    assert r.returncode == 2
    assert "[0].boxes[0][2]" in r.stderr

    good_gt = write(tmp_path / "g2.json", [{"image_id": "t1", "boxes": []}])
    bad = write(tmp_path / "d2.json", [{"query_id": "q", "image_id": "t1", "box": [0, 0, 5, 5], "score": 2}])
    r = cli("eval", "--detections", bad, "--gt", good_gt)
    assert r.returncode == 2
    assert "[0].score" in r.stderr

    (tmp_path / "junk.json").write_text("{not json")
    assert cli("eval", "--detections", tmp_path / "junk.json", "--gt", good_gt).returncode == 2


def test_eval_unknown_image(cli, tmp_path):
    gt = write(tmp_path / "gt.json", [{"image_id": "t1", "boxes": []}])
    dets = write(tmp_path / "d.json", [{"query_id": "q", "image_id": "t9", "box": [0, 0, 5, 5], "score": 0.5,
                                        "stage": 1}])
    r = cli("eval", "--detections", dets, "--gt", gt)
    assert r.returncode == 2
    assert "t9" in r.stderr


def test_bench_subset_and_stage_rows(cli, fixture_dir, tmp_path):
    corpus = fixture_dir / "corpus/corpus.json"
    r = cli("bench", *small(fixture_dir), "--corpus", corpus, "--settings", "a,c", "--out", tmp_path / "x")
    assert r.returncode == 0, r.stderr
    report = json.loads((tmp_path / "x/bench.json").read_text())
    assert [s["label"] for s in report["settings"]] == ["a", "c"]
    assert "stages" not in report
    assert (tmp_path / "x/bench.txt").read_text() == r.stdout

    r = cli("bench", *small(fixture_dir), "--corpus", corpus, "--settings", "b", "--no-stage2", "--out",
            tmp_path / "y")
    assert r.returncode == 0, r.stderr
    report = json.loads((tmp_path / "y/bench.json").read_text())
    assert [s["label"] for s in report["stages"]] == ["1-stage", "2-stage"]
    assert "1-stage vs 2-stage" in r.stdout


def test_extract(cli, fixture_dir, tmp_path):
    img = fixture_dir / "corpus/queries/query2.png"
    r = cli("extract", *weights(fixture_dir), img, "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    doc = json.loads((tmp_path / "query2_features.json").read_text())
    assert [b["shape"] for b in doc["blocks"]] == [[64, 112, 112], [128, 56, 56], [256, 28, 28], [512, 14, 14],
                                                   [512, 7, 7]]
    assert doc["blocks"][4]["kind"] == "R-AMAC"
    assert len(doc["blocks"][4]["descriptor"]) == 1024


def test_config_file_with_flag_override(cli, fixture_dir, tmp_path):
    c = fixture_dir / "corpus"
    cfg = tmp_path / "run.toml"
    cfg.write_text(f'weights = "{fixture_dir / "w.oswb"}"\nsetting = "b"\nquery-side = 48\nverbose = true\n')
    common = ["--query", c / "queries/query1.png", "--target", c / "targets/query1_t1.png", "--out", tmp_path]
    r = cli("detect", "--config", cfg, *common)
    assert r.returncode == 0, r.stderr
    assert "block 1:" not in r.stderr and "block 5:" in r.stderr
    r = cli("detect", "--config", cfg, "--setting", "c", *common)
    assert r.returncode == 0, r.stderr
    assert "block 1:" in r.stderr


def test_emitted_documents_match_the_schemas(cli, fixture_dir, tmp_path):
    jsonschema = pytest.importorskip("jsonschema")
    referencing = pytest.importorskip("referencing")
    schema_dir = Path(__file__).resolve().parents[2] / "docs/schemas"
    schemas = {p.name: json.loads(p.read_text()) for p in schema_dir.glob("*.json")}
    registry = referencing.Registry().with_resources(
        (name, referencing.Resource.from_contents(s)) for name, s in schemas.items())

    def check(doc, name):
        jsonschema.Draft202012Validator(schemas[name], registry=registry).validate(doc)

    c = fixture_dir / "corpus"
    r = cli("detect", *small(fixture_dir), "--query", c / "queries/query1.png", "--target",
            c / "targets/query1_t1.png", "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    check(json.loads((tmp_path / "detections.json").read_text()), "detections.schema.json")
    check(json.loads((c / "gt.json").read_text()), "ground_truth.schema.json")
    check(json.loads((c / "corpus.json").read_text()), "corpus.schema.json")

    r = cli("eval", "--detections", tmp_path / "detections.json", "--gt", c / "gt.json", "--report",
            tmp_path / "eval.json")
    assert r.returncode == 0, r.stderr
    check(json.loads((tmp_path / "eval.json").read_text()), "report.schema.json")

    r = cli("bench", *small(fixture_dir), "--corpus", c / "corpus.json", "--settings", "b", "--no-stage2", "--out",
            tmp_path)
    assert r.returncode == 0, r.stderr
    check(json.loads((tmp_path / "bench.json").read_text()), "report.schema.json")
