"""Smoke test for the spritedecomp extension module.

Build and install it first, for example:

    pip install -e crates/python --no-build-isolation
    python python/smoke_test.py
"""

import json
import math
import struct
import tempfile

import spritedecomp as sd

TINY = json.dumps({"max_iters": 3, "n_warm": 1, "prior": {"levels": 2, "channels": 4}})


def floats(raw):
    return struct.unpack(f"<{len(raw) // 4}f", raw)


def main():
    gt, video = sd.benchmark_scene(0)
    assert gt.num_sprites == 2 and gt.num_frames == 50, gt
    assert (video.width, video.height, video.num_frames) == (128, 128, 50), video
    frame = floats(video.frame(0))
    assert len(frame) == 128 * 128 * 3 and all(0.0 <= v <= 1.0 for v in frame)

    # the ground truth renders back to its own video
    again = gt.render()
    assert again.frame(10) == video.frame(10)

    anns = sd.simulate_prompt(gt)
    assert len(anns) == 1 and anns[0].sprite_id == 2
    x0, y0, x1, y1 = anns[0].bbox
    assert 0 <= x0 < x1 <= 128 and 0 <= y0 < y1 <= 128

    pred, history = sd.decompose(video, anns, TINY)
    assert len(history) == 3 and all(math.isfinite(l) for l in history.losses)
    assert history.to_csv().startswith("iteration,loss,wall_ms")

    report = sd.evaluate(pred, gt)
    assert set(report) >= {"frame_l1", "sprite_rgb_l1", "sprite_alpha_l1", "assignment"}
    assert report["assignment"][0] == 0
    assert report["frame_l1"] < 0.2, report
    self_report = sd.evaluate(gt, gt)
    assert self_report["frame_l1"] == 0.0 and self_report["sprite_alpha_l1"] == 0.0

    # editing
    only_bg = sd.remove_sprite(gt, 1)
    assert only_bg.num_sprites == 1
    try:
        sd.remove_sprite(gt, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("removing the background must fail")
    red = sd.replace_texture(gt, 1, 2, 2, [1.0, 0.0, 0.0, 1.0] * 4)
    assert red.texture(1)[:2] == (2, 2)
    assert red.track(1) == gt.track(1)
    spun = sd.rotate(gt, 1, 0.1)
    assert spun.track(1)[0] == gt.track(1)[0] and spun.track(1)[5] != gt.track(1)[5]
    hidden = sd.scale_opacity(gt, 1, [0.0] * gt.num_frames)
    assert hidden.render().frame(7) == only_bg.render().frame(7)

    # disk round trip
    with tempfile.TemporaryDirectory() as d:
        path = gt.save(d)
        back = sd.Composition.load(path)
        assert back.track(1) == gt.track(1)
        video.save(d + "/video")
        assert sd.Video.load(d + "/video").num_frames == 50

    print("smoke test passed:", json.dumps({k: report[k] for k in ("frame_l1", "sprite_alpha_l1")}))


if __name__ == "__main__":
    main()
