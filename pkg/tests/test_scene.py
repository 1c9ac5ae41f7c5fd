import json

import numpy as np
import pytest

from seamgrid.errors import SceneError
from seamgrid.scene import load_scene, parse_scene, scene_to_json, write_synthetic
from seamgrid.synthetic import generate_synthetic

IDENTITY = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0]


def minimal(**over):
    doc = {
        "fields": [{"path": "a.snrf", "transform": IDENTITY}, {"path": "b.snrf", "transform": IDENTITY}],
        "cameras": [{"position": [3, 0, 0], "look_at": [0, 0, 0]}],
    }
    doc.update(over)
    return json.dumps(doc)


def test_minimal_defaults():
    s = parse_scene(minimal().encode())
    assert len(s.fields) == 2 and s.fields[1].beta == 1.0
    assert s.blend.lam == 0.1 and s.blend.threshold == 1.0
    assert s.render.background == (1.0, 1.0, 1.0)


def test_malformed_json():
    with pytest.raises(SceneError, match="malformed JSON"):
        parse_scene(b"{fields: ")


def test_missing_source():
    with pytest.raises(SceneError, match="source"):
        parse_scene(minimal(fields=[]))


def test_non_identity_source():
    doc = json.loads(minimal())
    doc["fields"][0]["transform"] = [2, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0]
    with pytest.raises(SceneError, match=r"fields\[0\]"):
        parse_scene(json.dumps(doc))


def test_eleven_numbers():
    doc = json.loads(minimal())
    doc["fields"][1]["transform"] = IDENTITY[:11]
    with pytest.raises(SceneError, match=r"fields\[1\].transform: expected 12 numbers.*got 11"):
        parse_scene(json.dumps(doc))


def test_diagnostics_are_distinct():
    bad = [b"{", minimal(fields=[]), None, None]
    doc = json.loads(minimal())
    doc["fields"][0]["transform"] = [1, 0, 0, 1, 0, 1, 0, 0, 0, 0, 1, 0]
    bad[2] = json.dumps(doc)
    doc = json.loads(minimal())
    doc["fields"][1]["transform"] = [1, 2]
    bad[3] = json.dumps(doc)
    messages = set()
    for text in bad:
        with pytest.raises(SceneError) as info:
            parse_scene(text)
        messages.add(str(info.value).split(":")[0])
    assert len(messages) == 4


def test_blend_overrides_and_unknown_keys():
    s = parse_scene(minimal(blend={"lambda": 0.5, "tth": 2.0, "iterations": 7}))
    assert (s.blend.lam, s.blend.threshold, s.blend.iterations) == (0.5, 2.0, 7)
    with pytest.raises(SceneError, match="unknown"):
        parse_scene(minimal(blend={"lamda": 0.5}))


def test_needs_camera():
    with pytest.raises(SceneError, match="camera"):
        parse_scene(minimal(cameras=[]))


def test_missing_file(tmp_path):
    (tmp_path / "scene.json").write_text(minimal())
    with pytest.raises(SceneError, match="not found"):
        load_scene(tmp_path / "scene.json")


def test_written_scene_reloads(tmp_path):
    synth = generate_synthetic("lshape", 5, 8)
    path = write_synthetic(tmp_path, synth)
    s = load_scene(path)
    m = s.merged_field()
    np.testing.assert_array_equal(m[1].transform.matrix, synth.transforms[1].matrix)
    np.testing.assert_array_equal(m[1].field.color.coeffs, synth.fields[1].color.coeffs)
    assert parse_scene(scene_to_json(s), tmp_path).blend == s.blend
    banks = s.ray_banks(m)
    assert len(banks[1]) == len(synth.cameras) * len(range(0, 32 * 32, 16))


def test_field_tagged_camera(tmp_path):
    synth = generate_synthetic("two_box", 0, 6)
    path = write_synthetic(tmp_path, synth)
    doc = json.loads(path.read_text())
    doc["cameras"].append({"position": [0.5, 0.5, 4], "look_at": [0.5, 0.5, 0.5], "up": [0, 1, 0], "field": 1,
                           "width": 8, "height": 8})
    path.write_text(json.dumps(doc))
    s = load_scene(path)
    m = s.merged_field()
    bank = s.ray_bank(m, 1)
    assert len(bank) == 4
    # local camera position maps back into unified space
    np.testing.assert_allclose(bank.origins[0], m[1].transform.inverse().matrix @ [0.5, 0.5, 4, 1])
