"""Smoke test for the Python bindings.

Build and install first, e.g. ``maturin develop -m crates/py/Cargo.toml``,
or point EGVD_LIB at a built ``libegvd_py.so``.
"""

import importlib.machinery
import importlib.util
import os
import sys
import tempfile

import numpy as np


def load():
    lib = os.environ.get("EGVD_LIB")
    if not lib:
        import egvd

        return egvd
    loader = importlib.machinery.ExtensionFileLoader("egvd", lib)
    spec = importlib.util.spec_from_loader("egvd", loader)
    mod = importlib.util.module_from_spec(spec)
    loader.exec_module(mod)
    return mod


def main():
    egvd = load()
    w, h, n = 32, 32, 6

    # events from a brightening ramp: every pixel fires ON events only
    frames = [np.full(w * h, 0.2 + 0.1 * k, dtype=np.float32).tolist() for k in range(n)]
    ts = [k * 40_000 for k in range(n)]
    s = egvd.simulate_events(frames, w, h, ts, contrast=0.15)
    ev = np.array(s.events())
    assert len(s) > 0 and (ev[:, 3] == 1).all(), s
    assert s.t_range == (0, ts[-1])

    grid = s.voxel_grid(10)
    vox = np.frombuffer(grid.tobytes(), dtype="<f4").reshape(grid.shape)
    assert grid.shape == (10, h, w)
    assert abs(vox.sum() - s.polarity_sum()) < 1e-3

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "e.evt")
        s.save(path)
        back = egvd.EventStream.load(path)
        assert back.to_bytes() == s.to_bytes() == open(path, "rb").read()

    clean = egvd.scene(w, h, n, seed=3)
    rainy, gt, events = egvd.synthesize(clean, w, h, rain="heavy", seed=1)
    a, b = np.array(rainy[0]), np.array(gt[0])
    assert (a >= b - 1e-6).all(), "rain only brightens"
    assert egvd.ssim(gt[0], gt[0], 3, h, w) == 1.0
    base = egvd.psnr(rainy[0], gt[0])
    assert np.isfinite(base)

    model = egvd.Model(channels=8, seed=0)
    out = model.derain(rainy, w, h, events)
    assert len(out) == n and len(out[0]) == 3 * h * w
    assert all(0.0 <= v <= 1.0 for v in out[0])
    assert model.param_report()[-1] == ("total", model.param_count())

    trained, losses = egvd.train_synthetic(2, seed=0)
    assert len(losses) == 2 and all(np.isfinite(losses))
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.ckpt")
        trained.save(path)
        again = egvd.Model.load(path)
        assert again.derain(rainy, w, h, events) == trained.derain(rainy, w, h, events)

    try:
        egvd.Model(variant="bogus")
    except ValueError:
        pass
    else:
        raise AssertionError("bad variant accepted")

    print(f"ok: {len(s)} events, rainy psnr {base:.2f} dB, {model!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
