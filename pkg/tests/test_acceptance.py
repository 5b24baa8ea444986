"""Exit criteria for the package, one test per criterion.

Each test appends a PASS/FAIL line that pytest prints in an
"acceptance criteria" section at the end of the run. Run just this module
with ``pytest tests/test_acceptance.py``.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from anchorfuse.grid import build_partition
from anchorfuse.io import read_depth_png, read_float_raster, write_depth_png, write_float_raster
from anchorfuse.metrics import masked_rmse_mae, silog_loss
from anchorfuse.oracle import dense_poisson_solve, reference_propagate, synth_scene
from anchorfuse.poisson import (
    CgSettings,
    TouchCounter,
    apply_restricted_operator,
    conjugate_gradient,
    densify,
)
from anchorfuse.refine import (
    RefineParams,
    affinity_weights,
    center_tethered_step,
    refine,
    sensor_anchor_blend,
)

from conftest import ACCEPTANCE_LINES

# Residual tolerance for the oracle comparison. The criterion bounds the
# solution error; with cond(A_UU) < 100 on grids up to 16x16 a residual of
# 1e-11 guarantees the 1e-8 error bound, whereas the default 1e-8 does not.
ORACLE_TOL = 1e-11


@contextmanager
def criterion(number, title):
    info = {}
    try:
        yield info
    except BaseException:
        line = f"FAIL  {number:>2}. {title}  {info.get('detail', '')}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        raise
    line = f"PASS  {number:>2}. {title}  {info.get('detail', '')}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def oracle_instances():
    rng = np.random.default_rng(2024)
    densities = (0.0, 0.02, 0.06, 0.20)
    for idx in range(100):
        h, w = rng.integers(3, 17, size=2)
        prior = rng.uniform(0.5, 80.0, (h, w))
        anchors = rng.random((h, w)) < densities[idx % 4]
        sparse = np.where(anchors, rng.uniform(0.5, 80.0, (h, w)), 0.0)
        yield sparse, prior


def test_01_poisson_oracle_equivalence():
    with criterion(1, "densify == dense direct solve, |d|inf <= 1e-8 (1+|x|inf), < 10 s") as info:
        t0 = time.perf_counter()
        worst = 0.0
        for sparse, prior in oracle_instances():
            out, report = densify(sparse, prior, CgSettings(ORACLE_TOL))
            ref = dense_poisson_solve(sparse, prior)
            assert report.converged
            worst = max(worst, np.abs(out - ref).max() / (1 + np.abs(ref).max()))
        elapsed = time.perf_counter() - t0
        info["detail"] = f"(worst scaled error {worst:.2e}, {elapsed:.2f} s)"
        assert worst <= 1e-8
        assert elapsed < 10.0


def test_02_hard_constraints_bit_identical():
    with criterion(2, "anchor pixels copied bit-identically") as info:
        count = 0
        cases = list(oracle_instances())
        cases += [(s.sparse, s.prior) for s in (synth_scene(64, 64, seed) for seed in range(20))]
        for sparse, prior in cases:
            out, _ = densify(sparse, prior)
            sel = sparse > 0
            assert np.array_equal(out[sel], sparse[sel])
            count += int(sel.sum())
        info["detail"] = f"({len(cases)} instances, {count} anchors)"


def test_03_zero_anchors_return_prior():
    # The identity is checked with the solver converged far past its default
    # stopping rule: at rel. residual 1e-8 the error bound grows with cond(A),
    # about 2.6e3 at 80x80, and white-noise priors then sit near 2e-5. The
    # default-tolerance figure is reported alongside for reference.
    with criterion(3, "no anchors -> prior, |d|inf <= 1e-6") as info:
        rng = np.random.default_rng(3)
        worst = worst_default = 0.0
        for _ in range(20):
            h, w = rng.integers(3, 80, size=2)
            prior = rng.uniform(0.5, 90.0, (h, w))
            out, report = densify(np.zeros_like(prior), prior, CgSettings(rel_tolerance=1e-12))
            assert report.converged
            worst = max(worst, np.abs(out - prior).max())
            out, _ = densify(np.zeros_like(prior), prior)
            worst_default = max(worst_default, np.abs(out - prior).max())
        info["detail"] = f"(worst {worst:.2e} at tol 1e-12; {worst_default:.1e} at default tol)"
        assert worst <= 1e-6


def test_04_operator_is_spd():
    with criterion(4, "A_UU symmetric (1e-10 rel) and positive definite") as info:
        rng = np.random.default_rng(4)
        worst = 0.0
        for _ in range(10):
            h, w = rng.integers(3, 40, size=2)
            sparse = np.where(rng.random((h, w)) < rng.uniform(0, 0.3), 1.0, 0.0)
            part = build_partition(sparse)
            if part.unknown.size == 0:
                sparse[:] = 0
                part = build_partition(sparse)
            for _ in range(100):
                u, v = rng.normal(size=(2, part.unknown.size))
                au = apply_restricted_operator(u, part)
                av = apply_restricted_operator(v, part)
                a, b = au @ v, u @ av
                worst = max(worst, abs(a - b) / max(abs(a), abs(b), 1e-300))
                assert au @ u > 0
        info["detail"] = f"(1000 vectors, worst asymmetry {worst:.1e})"
        assert worst <= 1e-10


def test_05_propagation_matches_reference():
    with criterion(5, "refine == loop reference on 50 8x8 instances, |d|inf <= 1e-9") as info:
        rng = np.random.default_rng(5)
        worst = 0.0
        for idx in range(50):
            c = int(rng.integers(1, 6))
            params = RefineParams(
                kappa=float(rng.choice([0.1, 1.0, 10.0])),
                iterations=(1, 3, 6)[idx % 3],
                d_max=40.0,
                w_f=rng.normal(scale=0.7, size=(c, int(rng.integers(1, 5)))),
                g=rng.normal(size=(3, c)),
                w_alpha=rng.normal(size=c),
                alpha_bias=float(rng.normal()),
            )
            feats = rng.normal(size=(8, 8, c))
            init = rng.uniform(0, 50, (8, 8))
            sensor = rng.uniform(0, 50, (8, 8))
            mask = rng.random((8, 8)) < 0.3
            sensor[~mask] = 0.0
            out = refine(init, sensor, mask, feats, params)
            ref = reference_propagate(init, sensor, mask, feats, params)
            worst = max(worst, np.abs(out - ref).max())
        info["detail"] = f"(worst {worst:.1e})"
        assert worst <= 1e-9


def test_06_row_and_gate_stochasticity():
    with criterion(6, "affinity rows and gates sum to 1 (1e-6), nonnegative") as info:
        rng = np.random.default_rng(6)
        checked = 0
        for kappa in (0.1, 1.0, 10.0):
            for scale in (0.1, 1.0, 10.0):
                feats = rng.normal(scale=scale, size=(12, 10, 4))
                params = RefineParams(kappa=kappa, w_f=rng.normal(size=(4, 3)), g=rng.normal(size=(3, 4)) * scale)
                aff = affinity_weights(feats, params)
                assert aff.kernel_sizes == (3, 5, 7)
                for a in aff.weights:
                    assert np.all(a >= 0)
                    assert np.abs(a.sum(-1) - 1).max() <= 1e-6
                    checked += a.shape[0] * a.shape[1]
                assert np.all(aff.gates >= 0)
                assert np.abs(aff.gates.sum(-1) - 1).max() <= 1e-6
        info["detail"] = f"({checked} rows)"


def test_07_anchoring_limits():
    with criterion(7, "alpha=1 & full mask -> sensor; empty mask -> gated mix"):
        rng = np.random.default_rng(7)
        feats = rng.normal(size=(10, 10, 3))
        init = rng.uniform(1, 40, (10, 10))
        sensor = rng.uniform(1, 40, (10, 10))
        full = RefineParams(w_alpha=np.zeros(3), alpha_bias=60.0)
        assert np.array_equal(refine(init, sensor, np.ones((10, 10), bool), feats, full), sensor)

        params = RefineParams(w_alpha=rng.normal(size=3), g=rng.normal(size=(3, 3)), w_f=rng.normal(size=(3, 3)))
        empty = np.zeros((10, 10), bool)
        mix = center_tethered_step(init, init, affinity_weights(feats, params))
        assert np.array_equal(sensor_anchor_blend(mix, sensor, empty, feats, params), mix)
        aff = affinity_weights(feats, params)
        d = init
        for _ in range(params.iterations):
            d = center_tethered_step(d, init, aff)
        assert np.array_equal(refine(init, sensor, empty, feats, params), np.clip(d, 0, params.d_max))


def test_08_silog_scale_invariance():
    with criterion(8, "|silog(s pred) - silog(pred)| <= 1e-6, s in {0.5, 2, 10}") as info:
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(200):
            # predictions in [0.05, 0.1] keep s * pred inside (eps, 1] for every s
            pred = rng.uniform(0.05, 0.1, (16, 16))
            gt = np.clip(pred * np.exp(rng.normal(0, 0.3, (16, 16))), 1e-3, 1.0)
            gt[rng.random((16, 16)) < 0.2] = 0.0
            base = silog_loss(pred, gt)
            for s in (0.5, 2.0, 10.0):
                worst = max(worst, abs(silog_loss(s * pred, gt) - base))
        info["detail"] = f"(worst {worst:.1e})"
        assert worst <= 1e-6


def test_09_codec_bit_exactness(tmp_path):
    with criterion(9, "depth PNG code-exact over 65536 codes; PFM exact for float32"):
        from PIL import Image

        codes = np.arange(65536, dtype=np.uint16).reshape(256, 256)
        Image.fromarray(codes).save(tmp_path / "codes.png")
        write_depth_png(read_depth_png(tmp_path / "codes.png"), tmp_path / "again.png")
        assert np.array_equal(np.array(Image.open(tmp_path / "again.png")), codes)

        rng = np.random.default_rng(9)
        bits = rng.integers(0, 2**32, size=64 * 64, dtype=np.uint64).astype(np.uint32)
        floats = bits.view(np.float32)
        floats = np.where(np.isfinite(floats), floats, np.float32(1.0)).reshape(64, 64)
        extremes = np.array([0.0, -0.0, np.finfo(np.float32).max, np.finfo(np.float32).tiny,
                             np.float32(1e-45), -np.finfo(np.float32).max], dtype=np.float32)
        floats.ravel()[: extremes.size] = extremes
        write_float_raster(floats, tmp_path / "f.pfm")
        back = read_float_raster(tmp_path / "f.pfm").astype(np.float32)
        assert np.array_equal(back.view(np.uint32), floats.view(np.uint32))


def test_10_mechanism_on_synthetic_scenes():
    with criterion(10, "densify beats distorted prior on >= 90/100 scenes, median RMSE cut >= 30%") as info:
        wins = 0
        reductions = []
        for seed in range(100):
            scene = synth_scene(64, 64, seed)
            out, _ = densify(scene.sparse, scene.prior)
            after = masked_rmse_mae(out, scene.dense_gt)[0]
            before = masked_rmse_mae(scene.prior, scene.dense_gt)[0]
            wins += after < before
            reductions.append(1 - after / before)
        median = float(np.median(reductions))
        info["detail"] = f"(wins {wins}/100, median reduction {median:.1%})"
        assert wins >= 90
        assert median >= 0.30


@pytest.mark.slow
def test_11_performance_envelope():
    with criterion(11, "1216x352 @ 6% < 30 s; per-iteration cost linear within 1.5x") as info:
        scene = synth_scene(352, 1216, 11)
        densify(scene.sparse[:16, :16], scene.prior[:16, :16])  # JIT warm-up
        t0 = time.perf_counter()
        _, report = densify(scene.sparse, scene.prior, CgSettings(1e-8))
        big = time.perf_counter() - t0
        assert report.converged

        # Sizes are timed round-robin so drift in machine speed hits all of
        # them alike. Per-iteration cost is the marginal cost of 80 extra
        # iterations, which keeps setup and the final residual check out.
        sizes = (64, 128, 256)
        problems = {}
        for n in sizes:
            s = synth_scene(n, n, n)
            part = build_partition(s.sparse)
            problems[n] = (part, np.random.default_rng(n).normal(size=part.unknown.size))
        best = {(n, its): np.inf for n in sizes for its in (40, 120)}
        touches = {}
        for _ in range(15):
            for n in sizes:
                part, rhs = problems[n]
                for its in (40, 120):
                    counter = TouchCounter()
                    t = time.perf_counter()
                    _, rep = conjugate_gradient(rhs, part, CgSettings(1e-15, max_iterations=its), counter)
                    best[n, its] = min(best[n, its], time.perf_counter() - t)
                    assert rep.iterations == its
                    touches[n] = counter.pixels / counter.applications / (n * n)
        per_pixel = {n: (best[n, 120] - best[n, 40]) / 80 / (n * n) for n in sizes}
        spread = max(per_pixel.values()) / min(per_pixel.values())
        info["detail"] = (f"({big:.2f} s, {report.iterations} it; ns/px/it "
                          + ", ".join(f"{n}^2: {v * 1e9:.2f}" for n, v in per_pixel.items())
                          + f"; spread {spread:.2f}x)")
        assert big < 30.0
        assert all(t == 1.0 for t in touches.values())
        assert spread <= 1.5


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
