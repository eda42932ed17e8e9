"""Smoke test for the tpvec extension module.

    cd crates/python && maturin develop --release
    python python/smoke_test.py
"""

import math
import pathlib
import tempfile

import tpvec

ROOT = pathlib.Path(__file__).resolve().parent.parent
GOLDEN = ROOT / "crates" / "core" / "tests" / "fixtures" / "tpv1"


def check_algebra():
    pre = tpvec.SoftPrompt(2, 2, [0.5, -1.0, 2.0, 0.25], "init-0")
    ft = tpvec.SoftPrompt(2, 2, [1.0, -1.0, 1.5, 0.75], "init-0", task_id="rte")
    v = tpvec.make_tpv(pre, ft)
    assert v.delta == [0.5, 0.0, -0.5, 0.5], v.delta
    assert v.task_ids == ["rte"]
    back = tpvec.apply_tpv(pre, v, 1.0)
    assert back.weights == ft.weights
    assert back.task_id == "rte"
    half = tpvec.apply_tpv(pre, v, 0.5)
    assert half.weights == [0.75, -1.0, 1.75, 0.5]
    assert (v + (-v)).is_zero()
    assert tpvec.scale_tpv(v, 0.5).scale_history == [0.5]

    other = tpvec.SoftPrompt(2, 2, [0.0, 0.0, 0.0, 1.0], "init-0", task_id="mnli")
    w = tpvec.make_tpv(pre, other)
    combined = tpvec.sum_tpvs([w, v])
    assert combined.task_ids == ["mnli", "rte"], combined.task_ids

    try:
        tpvec.apply_tpv(pre, v, 1.5)
    except ValueError as e:
        assert "1.5" in str(e)
    else:
        raise AssertionError("lambda outside (0, 1] accepted")


def check_cosine():
    got = tpvec.cosine([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert abs(got - 32 / math.sqrt(14 * 77)) < 1e-12
    try:
        tpvec.cosine([0.0, 0.0], [1.0, 0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("zero vector accepted")


def check_store():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        p = tpvec.SoftPrompt(2, 3, [0.0] * 6, "init-0")
        p.save(tmp / "z.tpv")
        assert (tmp / "z.tpv").read_bytes() == (GOLDEN / "zeros_2x3.tpv").read_bytes()
        assert tpvec.SoftPrompt.load(tmp / "z.tpv") == p

        v = tpvec.TaskPromptVector(1, 2, [1.0, -2.0], "init-1", ["a", "b"])
        v.save(tmp / "v.tpv")
        assert tpvec.TaskPromptVector.load(tmp / "v.tpv") == v

        (tmp / "v.json").unlink()
        try:
            tpvec.TaskPromptVector.load(tmp / "v.tpv")
        except FileNotFoundError as e:
            assert "manifest not found" in str(e)
        else:
            raise AssertionError("missing sidecar accepted")

    ramp = tpvec.SoftPrompt.load(GOLDEN / "ramp_3x4.tpv")
    assert ramp.shape == (3, 4) and ramp.task_id == "rte"


def check_stats():
    a, b = [2.1, 2.5, 2.3, 2.2], [1.9, 2.0, 2.1, 2.0]
    s = tpvec.student_t(a, b)
    assert s["method"] == "student" and s["dof"] == 6
    assert abs(s["p"] - 0.027139550489314605) < 1e-9
    w = tpvec.welch_t(list(range(1, 11)), [2, 4, 9])
    assert abs(w["p"] - 0.8416770185499142) < 1e-9
    assert tpvec.bonferroni([0.01, 0.5]) == [0.02, 1.0]


if __name__ == "__main__":
    check_algebra()
    check_cosine()
    check_store()
    check_stats()
    print("tpvec smoke test passed")
