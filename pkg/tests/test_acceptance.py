"""Acceptance gate: every release criterion, one test per criterion.

Each test measures its quantity, records a one-line summary (shown in the
pytest terminal summary section and printed under -s), and then asserts
at the pinned tolerance.  Tolerances are stated inline and never loosened
to make a test pass; a failing criterion is supposed to fail loudly.
"""

import json
import time

import numpy as np
import numpy.testing as npt

from conftest import record_acceptance
from dcemetrics.cli import main
from dcemetrics.io import canonical_bytes, read_report, write_tensor
from dcemetrics.kernels import (
    ConvLSTMState,
    ConvLSTMWeights,
    adain,
    bidirectional_convlstm,
    convlstm_cell,
    run_grad_checks,
)
from dcemetrics.metrics import (
    SSIMParams,
    cw_ssim,
    detect_ce,
    dice,
    distance_map,
    distance_transform,
    invert_map,
    ms_ssim,
    ssim,
)
from dcemetrics.phantom import PhantomSpec, Region, generate, make_triple
from dcemetrics.tensor import VolumeSequence
from oracles import brute_force_edt, naive_ssim, scalar_convlstm_cell


def _gauss_window(sizes, sigma=1.5):
    w = np.ones(())
    for n in sizes:
        r = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
        w = np.multiply.outer(w, np.exp(-(r**2) / (2.0 * sigma**2)))
    return w / w.sum()


def test_criterion_01_distance_transform_matches_brute_force():
    # 200 random masks up to 12x12x4; exact equality; under 10 s total
    rng = np.random.default_rng(1001)
    start = time.perf_counter()
    checked = 0
    for _ in range(200):
        shape = (
            int(rng.integers(1, 13)),
            int(rng.integers(1, 13)),
            int(rng.integers(1, 5)),
        )
        density = rng.uniform(0.0, 0.4)
        mask = rng.random(shape) < density
        got = distance_transform(mask)
        expected = brute_force_edt(mask)
        npt.assert_array_equal(got, expected)
        checked += 1
    elapsed = time.perf_counter() - start
    ok = checked == 200 and elapsed < 10.0
    record_acceptance(
        1,
        "distance transform == brute force",
        ok,
        f"200/200 masks exact, {elapsed:.2f} s (limit 10 s)",
    )
    assert ok


def test_criterion_02_metric_identities():
    # ssim/ms_ssim/cw_ssim self-similarity == 1 within 1e-9 on 50 images;
    # unit weight map reproduces plain ssim bit for bit
    rng = np.random.default_rng(1002)
    worst = 0.0
    bitwise_ok = True
    for _ in range(50):
        n = int(rng.integers(32, 72))
        x = rng.uniform(0, 255, size=(n, n))
        mask = rng.random((n, n)) < 0.15
        if not mask.any():
            mask[0, 0] = True
        dm = distance_map(mask)
        worst = max(
            worst,
            abs(ssim(x, x) - 1.0),
            abs(ms_ssim(x, x) - 1.0),
            abs(cw_ssim(x, x, dm) - 1.0),
        )
        y = np.clip(x + rng.normal(0, 12, x.shape), 0, 255)
        unit = distance_map(np.zeros_like(mask))  # degenerate all-background map
        p = SSIMParams(data_range=255.0)
        if cw_ssim(x, y, unit, p) != ssim(x, y, p):
            bitwise_ok = False
    ok = worst <= 1e-9 and bitwise_ok
    record_acceptance(
        2,
        "self-similarity identities",
        ok,
        f"max |score-1| = {worst:.2e} (tol 1e-9), unit-map bitwise equal: {bitwise_ok}",
    )
    assert ok


def test_criterion_03_weighted_composition_matches_reference():
    # cw_ssim == reference sliding-window ssim of weighted images, 1e-9
    rng = np.random.default_rng(1003)
    window = _gauss_window((11, 11))
    worst = 0.0
    for _ in range(20):
        x = rng.uniform(0, 255, size=(24, 24))
        y = np.clip(x + rng.normal(0, 20, (24, 24)), 0, 255)
        mask = rng.random((24, 24)) < 0.2
        if not mask.any():
            mask[0, 0] = True
        dm = distance_map(mask)
        got = cw_ssim(x, y, dm, SSIMParams(data_range=255.0))
        ref = naive_ssim(x * dm.weights, y * dm.weights, window, 255.0)
        worst = max(worst, abs(got - ref))
    ok = worst <= 1e-9
    record_acceptance(
        3,
        "weighted-composition equals reference",
        ok,
        f"max |cw_ssim - reference| = {worst:.2e} (tol 1e-9), 20 triples",
    )
    assert ok


def test_criterion_04_weight_normalization_and_inversion():
    # weights in [0.1, 1]; w + inverted(w) == 1.1 exactly; CE voxels at 0.1
    rng = np.random.default_rng(1004)
    ok = True
    for _ in range(100):
        shape = (int(rng.integers(4, 24)), int(rng.integers(4, 24)))
        mask = rng.random(shape) < rng.uniform(0.05, 0.6)
        if not mask.any():
            mask.flat[int(rng.integers(0, mask.size))] = True
        dm = distance_map(mask)
        inv = invert_map(dm)
        if dm.weights.min() < 0.1 or dm.weights.max() > 1.0:
            ok = False
        if not np.all(dm.weights + inv.weights == 1.1):
            ok = False
        if not np.all(dm.weights[mask] == 0.1):
            ok = False
    record_acceptance(
        4,
        "weight range, inversion sum, CE anchor",
        ok,
        "100/100 masks: range [0.1,1], sum == 1.1 exact, mask voxels == 0.1"
        if ok
        else "violation found",
    )
    assert ok


def _ce_phantom_spec(seed: int, sigma: float) -> PhantomSpec:
    return PhantomSpec(
        grid=(48, 48),
        regions=(
            Region(center=(14, 14), radii=(6, 7), baseline=70.0),
            Region(
                center=(30, 28),
                radii=(8, 6),
                baseline=55.0,
                amplitude=120.0,
                onset=0.5,
                alpha=3.0,
                beta=1.5,
            ),
        ),
        n_frames=6,
        background=25.0,
        noise_sigma=sigma,
        seed=seed,
    )


def test_criterion_05_ce_detection_recovery():
    # noise-free: exact recovery; sigma = threshold/4: Dice >= 0.95, 20 phantoms
    threshold = 20.0
    exact = 0
    dices = []
    for seed in range(20):
        clean = generate(_ce_phantom_spec(seed, 0.0))
        ce = detect_ce(clean.sequence, 0, threshold)
        if np.array_equal(ce.mask, clean.truth_mask.mask):
            exact += 1
        noisy = generate(_ce_phantom_spec(100 + seed, threshold / 4.0))
        ce_noisy = detect_ce(noisy.sequence, 0, threshold)
        dices.append(dice(ce_noisy.mask, noisy.truth_mask.mask))
    ok = exact == 20 and min(dices) >= 0.95
    record_acceptance(
        5,
        "CE mask recovery",
        ok,
        f"noise-free exact {exact}/20, min Dice at sigma=5: {min(dices):.4f} (>= 0.95)",
    )
    assert ok


def test_criterion_06_gradient_checks():
    # four losses x 20 seeds, max relative error <= 1e-4, under 60 s
    start = time.perf_counter()
    worst = 0.0
    all_ok = True
    for seed in range(20):
        for report in run_grad_checks(seed):
            all_ok = all_ok and report.ok
            worst = max(worst, report.max_rel_error)
    elapsed = time.perf_counter() - start
    ok = all_ok and worst <= 1e-4 and elapsed < 60.0
    record_acceptance(
        6,
        "analytic gradients vs finite differences",
        ok,
        f"max rel error {worst:.2e} (tol 1e-4) over 4 losses x 20 seeds, {elapsed:.1f} s",
    )
    assert ok


def test_criterion_07_adain_contract():
    # style statistics reproduced within 1e-6; adain(x, x) == x within 1e-6
    rng = np.random.default_rng(1007)
    worst_stat = 0.0
    worst_self = 0.0
    for _ in range(100):
        channels = int(rng.integers(1, 5))
        c = rng.normal(
            rng.uniform(-10, 10), rng.uniform(0.01, 4.0), size=(channels, 12, 12)
        )
        s = rng.normal(
            rng.uniform(-10, 10), rng.uniform(0.01, 4.0), size=(channels, 9, 15)
        )
        out = adain(c, s, eps=1e-12)
        worst_stat = max(
            worst_stat,
            np.abs(out.mean(axis=(1, 2)) - s.mean(axis=(1, 2))).max(),
            np.abs(out.std(axis=(1, 2)) - s.std(axis=(1, 2))).max(),
        )
        worst_self = max(worst_self, np.abs(adain(c, c, eps=1e-12) - c).max())
    ok = worst_stat <= 1e-6 and worst_self <= 1e-6
    record_acceptance(
        7,
        "feature statistic alignment",
        ok,
        f"max stat error {worst_stat:.2e}, max self-map error {worst_self:.2e} "
        f"(tol 1e-6), 100 cases",
    )
    assert ok


def test_criterion_08_bidirectional_symmetry_and_cell_oracle():
    # reversal/swap equivalence exact; cell matches scalar loop within 1e-12
    rng = np.random.default_rng(1008)
    worst_cell = 0.0
    symmetric = True
    for seed in range(20):
        fw = ConvLSTMWeights.from_seed(2000 + seed, in_channels=2, hidden=2)
        bw = ConvLSTMWeights.from_seed(3000 + seed, in_channels=2, hidden=2)
        seq = [rng.normal(size=(2, 5, 5)) for _ in range(5)]
        out = bidirectional_convlstm(seq, fw, bw)
        out_rev = bidirectional_convlstm(seq[::-1], bw, fw)
        for t in range(5):
            swapped = np.concatenate([out_rev[4 - t][2:], out_rev[4 - t][:2]], axis=0)
            if not np.array_equal(out[t], swapped):
                symmetric = False

        x = rng.normal(size=(2, 4, 4))
        state = ConvLSTMState(rng.normal(size=(2, 4, 4)), rng.normal(size=(2, 4, 4)))
        got = convlstm_cell(x, state, fw)
        h_ref, c_ref = scalar_convlstm_cell(x, state.h, state.c, fw)
        worst_cell = max(
            worst_cell,
            np.abs(got.h - h_ref).max(),
            np.abs(got.c - c_ref).max(),
        )
    ok = symmetric and worst_cell <= 1e-12
    record_acceptance(
        8,
        "recurrent symmetry and scalar oracle",
        ok,
        f"reversal symmetry exact: {symmetric}, max cell deviation {worst_cell:.2e} "
        f"(tol 1e-12), 20 sequences",
    )
    assert ok


def test_criterion_09_metric_ordering_on_phantoms():
    # ideal transfer beats a geometry-mismatched distractor on content
    # CW-SSIM and beats the unmodified content on style CW-SSIM, >= 95%
    content_wins = 0
    style_wins = 0
    n = 50
    for seed in range(n):
        rng = np.random.default_rng(5000 + seed)
        cy, cx = rng.uniform(16, 32, size=2)
        spec = PhantomSpec(
            grid=(48, 48),
            regions=(
                Region(center=(12, 34), radii=(5, 5), baseline=70.0),
                Region(
                    center=(cy, cx),
                    radii=(7, 6),
                    baseline=55.0,
                    amplitude=120.0,
                    onset=0.5,
                ),
            ),
            n_frames=6,
            background=25.0,
            noise_sigma=5.0,
            seed=seed,
        )
        content, style, ideal = make_triple(spec, 0, 5)

        # same enhancement state, deliberately wrong geometry
        d_cy = cy + rng.choice((-1, 1)) * rng.uniform(6, 9)
        d_cx = cx + rng.choice((-1, 1)) * rng.uniform(6, 9)
        d_cy = float(np.clip(d_cy, 10, 38))
        d_cx = float(np.clip(d_cx, 10, 38))
        distractor_spec = PhantomSpec(
            grid=(48, 48),
            regions=(
                Region(center=(34, 12), radii=(5, 5), baseline=70.0),
                Region(
                    center=(d_cy, d_cx),
                    radii=(6, 7),
                    baseline=55.0,
                    amplitude=120.0,
                    onset=0.5,
                ),
            ),
            n_frames=6,
            background=25.0,
            noise_sigma=5.0,
            seed=9000 + seed,
        )
        distractor = generate(distractor_spec).sequence.frame(5)

        seq = generate(spec).sequence
        ce = detect_ce(seq, 0, 20.0)
        dm = distance_map(ce.mask)
        inv = invert_map(dm)
        params = SSIMParams(data_range=float(content.max() - content.min()))

        if cw_ssim(content, ideal, dm, params) > cw_ssim(content, distractor, dm, params):
            content_wins += 1
        style_ideal = cw_ssim(style, ideal, inv, params, mode="style")
        style_content = cw_ssim(style, content, inv, params, mode="style")
        if style_ideal > style_content:
            style_wins += 1
    ok = content_wins >= 0.95 * n and style_wins >= 0.95 * n
    record_acceptance(
        9,
        "metric ordering on phantom triples",
        ok,
        f"content ordering {content_wins}/{n}, style ordering {style_wins}/{n} "
        f"(need >= {int(np.ceil(0.95 * n))})",
    )
    assert ok


def test_criterion_10_cli_pipeline_determinism(tmp_path):
    # full pipeline twice, same seed: byte-identical canonical reports
    spec = {
        "grid": [32, 32],
        "regions": [
            {"center": [10, 10], "radii": [4, 5], "baseline": 75.0},
            {
                "center": [21, 20],
                "radii": [6, 5],
                "baseline": 55.0,
                "amplitude": 110.0,
                "onset": 0.5,
            },
        ],
        "n_frames": 5,
        "background": 22.0,
        "noise_sigma": 3.0,
        "seed": 77,
    }
    spec_file = tmp_path / "spec.json"
    spec_file.write_text(json.dumps(spec))
    pspec = PhantomSpec.from_dict(spec)

    def pipeline(run_dir):
        run_dir.mkdir()
        assert main(["phantom", "gen", "--spec", str(spec_file), "--out-dir", str(run_dir)]) == 0
        seq = run_dir / "sequence.raw"
        mask = run_dir / "mask.raw"
        assert main(["cemask", "--seq", str(seq), "--out", str(mask)]) == 0
        weights = run_dir / "weights.raw"
        assert main(["distmap", "--mask", str(mask), "--out", str(weights)]) == 0

        content, style, generated = make_triple(pspec, 0, 4)
        for name, arr in (("content", content), ("style", style), ("generated", generated)):
            write_tensor(run_dir / f"{name}.raw", arr)
        report = run_dir / "report.json"
        assert (
            main(
                [
                    "metrics",
                    "--generated",
                    str(run_dir / "generated.raw"),
                    "--content",
                    str(run_dir / "content.raw"),
                    "--style",
                    str(run_dir / "style.raw"),
                    "--seq",
                    str(seq),
                    "--out",
                    str(report),
                ]
            )
            == 0
        )
        merged = run_dir / "merged.json"
        assert main(["report", "merge", str(report), "--out", str(merged)]) == 0
        # provenance carries absolute paths; normalize so only run contents count
        rep = read_report(report)
        mrg = read_report(merged)
        rep["provenance"]["parameters"] = {}
        for src in mrg["provenance"]["sources"]:
            src["parameters"] = {}
        return canonical_bytes(rep), canonical_bytes(mrg)

    first = pipeline(tmp_path / "run_a")
    second = pipeline(tmp_path / "run_b")
    ok = first == second
    record_acceptance(
        10,
        "CLI pipeline determinism",
        ok,
        f"canonical report bytes identical across runs: {ok} "
        f"({len(first[0])} + {len(first[1])} bytes compared)",
    )
    assert ok
