import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcam.actions import (
    ActionCatalog,
    ActionPlan,
    ActionSet,
    CrxGate,
    PixelNoise,
    ShotNoise,
    compile_action_set,
    count_action_sets,
    decode_action_index,
    default_catalog,
    encode_action_set,
    enumerate_action_sets,
    reduced_catalog,
    run_action_set,
    sample_action_set,
)
from qcam.frqi import FrqiLayout, GrayImage, image_to_angles
from qcam.rng import make_rng


def brute_force_subsets(n, max_k):
    """Every non-empty subset of size <= max_k, via recursion, sorted size-major then lexicographically."""
    out = []

    def grow(prefix, start):
        if prefix:
            out.append(tuple(prefix))
        if len(prefix) == max_k:
            return
        for i in range(start, n):
            grow(prefix + [i], i + 1)

    grow([], 0)
    return sorted(out, key=lambda t: (len(t), t))


def test_default_catalog_layout():
    cat = default_catalog()
    assert len(cat) == 28 and cat.max_select == 4
    assert all(isinstance(a, CrxGate) and a.control_value == 1 and a.control == k
               for k, a in enumerate(cat.actions[:8]))
    assert all(isinstance(a, CrxGate) and a.control_value == 0 for a in cat.actions[8:16])
    assert [a.shots for a in cat.actions[16:22]] == [4096, 2048, 1024, 512, 256, 128]
    assert [a.fraction for a in cat.actions[22:]] == [0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
    assert all(math.isclose(a.theta_r, math.pi / 4) for a in cat.actions[22:])
    with pytest.raises(ValueError):
        default_catalog(FrqiLayout(2))


def test_action_set_count():
    # C(28,1) + C(28,2) + C(28,3) + C(28,4)
    assert 28 + 378 + 3276 + 20475 == 24157
    assert default_catalog().num_action_sets == 24157
    assert reduced_catalog().num_action_sets == 36
    assert count_action_sets(3, 10) == 7


def test_enumeration_matches_brute_force():
    for n, k in [(28, 4), (8, 2), (5, 5), (1, 1)]:
        cat = ActionCatalog(tuple(ShotNoise(i + 1) for i in range(n)), k)
        got = [s.indices for s in enumerate_action_sets(cat)]
        assert got == brute_force_subsets(n, k)


def test_codec_round_trip_exhaustive_small():
    for n, k in [(8, 2), (6, 6), (10, 3)]:
        for idx, s in enumerate(brute_force_subsets(n, k)):
            assert encode_action_set(ActionSet(s), n) == idx
            assert decode_action_index(idx, n, k).indices == s


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 24156))
def test_codec_bijective_default(index):
    s = decode_action_index(index, 28, 4)
    assert 1 <= len(s) <= 4
    assert encode_action_set(s, 28) == index


def test_codec_errors():
    with pytest.raises(ValueError):
        decode_action_index(24157, 28, 4)
    with pytest.raises(ValueError):
        decode_action_index(-1, 28, 4)
    with pytest.raises(ValueError):
        encode_action_set(ActionSet((3, 28)), 28)
    with pytest.raises(ValueError):
        ActionSet(())
    with pytest.raises(ValueError):
        ActionSet((2, 2))


def test_action_validation():
    with pytest.raises(ValueError):
        CrxGate(0, 2)
    with pytest.raises(ValueError):
        ShotNoise(0)
    with pytest.raises(ValueError):
        PixelNoise(0.0)
    with pytest.raises(ValueError):
        PixelNoise(0.1, 3.0)
    with pytest.raises(ValueError):
        ActionCatalog(())


def test_catalog_json_round_trip(tmp_path):
    cat = default_catalog()
    again = ActionCatalog.load(cat.save(tmp_path / "cat.json"))
    assert again == cat and again.digest() == cat.digest()
    assert reduced_catalog().digest() != cat.digest()
    with pytest.raises(ValueError):
        ActionCatalog.from_json('{"actions": [{"kind": "warp"}]}')


def test_describe():
    cat = default_catalog()
    assert cat.describe(ActionSet((3, 17, 22))) == "CRX(p3=1)+Shots(2048)+Pixels(0.05)"


def test_compile_levels_and_gates():
    cat = default_catalog()
    lay = FrqiLayout(4)
    plan = compile_action_set(ActionSet((2, 9, 17, 20)), cat, 5, lay)
    assert plan.shots_override == 256
    assert plan.pixel_redaction is None
    assert [(g.kind, g.target, g.controls) for g in plan.gate_suffix] == [
        ("RX", 0, ((3, 1),)), ("RX", 0, ((2, 0),)),
    ]
    plan = compile_action_set(ActionSet((22, 25, 27)), cat, 5, lay)
    assert plan.pixel_redaction == (0.5, math.pi / 4, 5)
    assert plan.gate_suffix == [] and plan.shots_override is None


def test_plan_redaction_count_and_determinism(rng):
    ang = image_to_angles(GrayImage(16, rng.random(256) * 0.4))
    plan = ActionPlan(pixel_redaction=(0.3, math.pi / 4, 9))
    a, b = plan.redact(ang), plan.redact(ang)
    assert np.array_equal(a.thetas, b.thetas)
    changed = np.flatnonzero(a.thetas != ang.thetas)
    assert changed.size == math.ceil(0.3 * 256)
    assert np.allclose(a.thetas[changed], math.pi / 4)
    assert ActionPlan().redact(ang) is ang


def test_run_action_set_deterministic_and_damaging(rng):
    img = GrayImage(16, rng.random(256))
    cat = default_catalog()
    s = ActionSet((0, 8))  # p0 on 1 and on 0: every pixel grayed
    a = run_action_set(img, s, cat, 3)
    b = run_action_set(img, s, cat, 3)
    assert np.array_equal(a.pixels, b.pixels)
    assert abs(a.pixels.mean() - 0.5) < 0.05
    plain = run_action_set(img, None, None, 3)
    assert np.mean(np.abs(plain.pixels - img.pixels)) < 0.1


def test_sample_action_set_uniform():
    cat = reduced_catalog()
    r = make_rng(0)
    counts = np.zeros(36)
    for _ in range(36000):
        counts[encode_action_set(sample_action_set(cat, r), 8)] += 1
    # 1000 expected per cell; 4.5 sigma band
    assert np.all(np.abs(counts - 1000) < 4.5 * math.sqrt(1000))
