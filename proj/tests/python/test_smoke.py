import json
import struct

import pytest

import mainframe_forge as mf


def test_version():
    assert mf.__version__ == "0.1.0"


def test_metrics_goldens():
    assert mf.bleu4("the cat sat on the mat", "the cat sat on the mat") == pytest.approx(100.0)
    assert mf.rouge_l("a b c d e f", "a b x d e f g") == pytest.approx(10 / 13)
    assert mf.token_f1("a b c", "a b d") == pytest.approx(2 / 3)
    assert mf.meteor("cats run", "cat runs") == pytest.approx(0.9375)
    assert mf.porter_stem("caresses") == "caress"


def test_extract_choice():
    assert mf.extract_choice("B") == "B"
    assert mf.extract_choice("The answer is: (c)") == "C"
    assert mf.extract_choice("no idea") is None


def test_judge_parse():
    assert mf.parse_trailing_int_list("scores follow [7, 9, 3]") == [7, 9, 3]
    assert mf.parse_trailing_int_list("nothing") is None


def test_minhash_estimate_tracks_exact():
    a = " ".join(f"w{i}" for i in range(200))
    b = " ".join(f"w{i}" for i in range(40, 240))
    sa = mf.minhash_signature(a, num_hashes=256)
    sb = mf.minhash_signature(b, num_hashes=256)
    assert len(sa) == 256
    exact = mf.exact_jaccard(a, b)
    assert abs(mf.estimate_jaccard(sa, sb) - exact) < 0.1


def test_dedup_clusters_near_duplicates():
    base = " ".join(f"tok{i}" for i in range(300))
    near = base + " extra"
    other = " ".join(f"zz{i}" for i in range(300))
    out = mf.dedup([("a", base), ("b", near), ("c", other)])
    assert out["kept"] == ["a", "c"]
    assert out["clusters"][0]["member_ids"] == ["a", "b"]


def test_plan_upscale():
    s, prov = mf.plan_upscale(32, 8)
    assert s == 48
    assert prov == list(range(24)) + list(range(8, 32))
    with pytest.raises(ValueError):
        mf.plan_upscale(4, 4)


def _write_archive(path, n_layers):
    header = {}
    data = b""
    names = ["embed.weight"] + [f"model.layers.{i}.w" for i in range(n_layers)]
    for idx, name in enumerate(names):
        blob = struct.pack("<2f", float(idx), float(idx) + 0.5)
        header[name] = {"dtype": "F32", "shape": [2], "data_offsets": [len(data), len(data) + len(blob)]}
        data += blob
    raw = json.dumps(header).encode()
    raw += b" " * (-len(raw) % 8)
    path.write_bytes(struct.pack("<Q", len(raw)) + raw + data)


def test_upscale_round_trip(tmp_path):
    src = tmp_path / "src.safetensors"
    dst = tmp_path / "dst.safetensors"
    _write_archive(src, 6)
    summary = mf.upscale(src, dst, m=2)
    assert summary["s"] == 8
    report = mf.verify_upscaled(src, dst, m=2)
    assert report["violations"] == []
