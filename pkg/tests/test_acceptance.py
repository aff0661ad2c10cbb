"""End-to-end acceptance checks for the package's primary guarantees.

Each test prints one machine-readable ``[PASS]``/``[FAIL]`` scoreboard line
(written through pytest's capture so it is always visible) before asserting,
covering: analytic gradients vs. finite differences, exact retrieval against a
brute-force oracle, bitwise reduction of the composite loss at lambda = 1, the
directional held-out-PSNR claims on the synthetic glow benchmark, candidate
verification behavior, serialization fuzzing, and metric identities.

Benchmark protocol shared by the directional tests: 64 px renders, 150
training iterations, 600 initial Gaussians (cap 2500), 6 training views on an
orbit arc, 6 interleaved held-out views, banks built from withheld candidate
poses on the same arc. Results are cached so overlapping criteria reuse runs.
"""

import time

import numpy as np
import torch

from glowgs.descriptor import describe, patch_features
from glowgs.errors import DataFormatError
from glowgs.featbank import (
    FeatureBank,
    build_bank,
    calibrate_threshold,
    retrieve,
    retrieve_batch,
    verify,
)
from glowgs.formats import read_bank, read_scene, write_bank, write_scene
from glowgs.glowsim import (
    benchmark_cameras,
    benchmark_spec,
    glow_mask,
    procedural_texture,
    render_reference,
)
from glowgs.metrics import masked_eval, psnr, ssim
from glowgs.rasterizer import rasterize, rasterize_backward, render_tensors
from glowgs.scene import GaussianScene, random_scene
from glowgs.trainer import TrainConfig, original_loss_t, train
import conftest
from conftest import make_camera, make_scene, rel_err


def report(name: str, ok: bool, detail: str) -> None:
    """One scoreboard line per criterion, echoed in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    conftest.SCOREBOARD.append(line)
    print(line)


# --------------------------------------------------------------------------
# Shared glow-benchmark machinery
# --------------------------------------------------------------------------

BENCH_SIZE = 64
BENCH_ITERS = 150
BENCH_INIT = 600
BENCH_CAP = 2500
SEEDS = (0, 1, 2, 3, 4)

_scene_cache: dict = {}
_bank_cache: dict = {}
_run_cache: dict = {}


def _scene_data(scene_seed: int):
    if scene_seed not in _scene_cache:
        spec = benchmark_spec(scene_seed)
        train_cams, test_cams, cand_cams = benchmark_cameras(size=BENCH_SIZE)
        _scene_cache[scene_seed] = (
            [(render_reference(spec, c), c) for c in train_cams],
            [(render_reference(spec, c), c, glow_mask(spec, c)) for c in test_cams],
            [render_reference(spec, c) for c in cand_cams],
        )
    return _scene_cache[scene_seed]


def _bench_bank(scene_seed: int, n_views: int):
    key = (scene_seed, n_views)
    if key not in _bank_cache:
        images = _scene_data(scene_seed)[2]
        step = max(len(images) // n_views, 1)
        _bank_cache[key] = build_bank(
            images[::step][:n_views], crops_per_view=1, rng=np.random.default_rng(0)
        )
    return _bank_cache[key]


def _bench_run(scene_seed: int, seed: int, lam: float, n_bank: int, n_train: int = 6):
    """One training run on the glow benchmark; returns (psnr, glow_psnr) on
    the held-out views, averaged over the test set."""
    key = (scene_seed, seed, lam, n_bank, n_train)
    if key in _run_cache:
        return _run_cache[key]
    train_views, tests, _ = _scene_data(scene_seed)
    if n_train == 6:
        views = train_views
    else:
        spec = benchmark_spec(scene_seed)
        cams = benchmark_cameras(n_train=n_train, size=BENCH_SIZE)[0]
        views = [(render_reference(spec, c), c) for c in cams]
    bank = _bench_bank(scene_seed, n_bank) if n_bank > 0 else None
    cfg = TrainConfig(
        iters=BENCH_ITERS,
        init_count=BENCH_INIT,
        max_gaussians=BENCH_CAP,
        sh_degree=1,
        lambda_weight=lam,
        semantic_enabled=bank is not None,
        seed=seed,
    )
    cams = [c for _, c in views]
    scene0 = random_scene(cams, cfg.init_count, np.random.default_rng(seed), sh_degree=1)
    scene, _ = train(scene0, views, bank, cfg)
    ps, gps = [], []
    for gt, cam, mask in tests:
        rep = masked_eval(rasterize(scene, cam).image, gt, mask)
        ps.append(rep.psnr)
        if rep.glow_psnr is not None:
            gps.append(rep.glow_psnr)
    out = (float(np.mean(ps)), float(np.mean(gps)))
    _run_cache[key] = out
    return out


# --------------------------------------------------------------------------
# 1. Gradient suite
# --------------------------------------------------------------------------


def test_gradients_match_finite_differences():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    cam = make_camera()

    def render_value(scene, weight):
        with torch.no_grad():
            tensors = scene.tensors(dtype=torch.float64, requires_grad=False)
            img, _ = render_tensors(*tensors, cam, (0.0, 0.0, 0.0))
        return float((img.numpy() * weight).sum())

    worst_render = 0.0
    for s in range(100):
        sc = make_scene(rng, k=5, sh_degree=1 if s % 10 == 0 else 0)
        weight = rng.normal(size=(32, 32, 3))
        grads = rasterize_backward(rasterize(sc, cam, dtype=torch.float64), weight)
        eps = 1e-4
        for name in ("means", "quats", "log_scales", "opacity_logits", "sh"):
            analytic = getattr(grads, name)
            for idx in np.ndindex(getattr(sc, name).shape):
                up, down = sc.copy(), sc.copy()
                getattr(up, name)[idx] += eps
                getattr(down, name)[idx] -= eps
                fd = (render_value(up, weight) - render_value(down, weight)) / (2 * eps)
                worst_render = max(worst_render, rel_err(analytic[idx], fd).max())

    worst_desc = 0.0
    for _ in range(10):
        crop = rng.random((256, 256, 3))
        t = torch.tensor(crop, dtype=torch.float64, requires_grad=True)
        weight_t = torch.tensor(rng.normal(size=(256, 17)), dtype=torch.float64)
        (patch_features(t)[0] * weight_t).sum().backward()
        for _ in range(5):
            idx = tuple(int(rng.integers(0, n)) for n in crop.shape)
            eps = 1e-6
            vals = []
            for sgn in (1.0, -1.0):
                probe = crop.copy()
                probe[idx] += sgn * eps
                p, _ = patch_features(torch.tensor(probe, dtype=torch.float64))
                vals.append(float((p * weight_t).sum()))
            fd = (vals[0] - vals[1]) / (2 * eps)
            worst_desc = max(worst_desc, rel_err(float(t.grad[idx]), fd).max())

    worst_loss = 0.0
    for _ in range(10):
        a = rng.random((32, 32, 3))
        b = rng.random((32, 32, 3))
        t = torch.tensor(a, dtype=torch.float64, requires_grad=True)
        original_loss_t(t, torch.tensor(b, dtype=torch.float64)).backward()
        for _ in range(5):
            idx = tuple(int(rng.integers(0, n)) for n in a.shape)
            eps = 1e-6
            vals = []
            for sgn in (1.0, -1.0):
                probe = a.copy()
                probe[idx] += sgn * eps
                vals.append(
                    float(
                        original_loss_t(
                            torch.tensor(probe, dtype=torch.float64),
                            torch.tensor(b, dtype=torch.float64),
                        )
                    )
                )
            fd = (vals[0] - vals[1]) / (2 * eps)
            worst_loss = max(worst_loss, rel_err(float(t.grad[idx]), fd).max())

    elapsed = time.perf_counter() - t0
    ok = worst_render < 1e-3 and worst_desc < 1e-4 and worst_loss < 1e-4 and elapsed < 120
    report(
        "gradient suite (100 scenes, all parameters, f64)",
        ok,
        f"renderer rel err {worst_render:.2e} (<1e-3), descriptor {worst_desc:.2e} "
        f"(<1e-4), loss {worst_loss:.2e} (<1e-4), {elapsed:.0f}s (<120s)",
    )
    assert worst_render < 1e-3
    assert worst_desc < 1e-4
    assert worst_loss < 1e-4
    assert elapsed < 120


# --------------------------------------------------------------------------
# 2. Retrieval vs. brute-force oracle
# --------------------------------------------------------------------------


def test_retrieval_matches_bruteforce_oracle():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        count = int(rng.integers(1, 64))
        dim = int(rng.integers(1, 24))
        vectors = rng.random((count, dim)).astype(np.float32)
        if count > 3 and rng.random() < 0.3:  # force exact ties
            vectors[count // 2] = vectors[count // 4]
        bank = FeatureBank(
            dim=dim,
            vectors=vectors,
            source_views=np.zeros(count, dtype=np.uint32),
            patch_indices=np.arange(count, dtype=np.uint32),
        )
        query = rng.random(dim)
        idx, dist = retrieve(bank, query)
        best_i, best_d = -1, np.inf
        for i in range(count):
            d = float(np.linalg.norm(bank.vectors[i].astype(np.float64) - query))
            if d < best_d:
                best_i, best_d = i, d
        if idx != best_i or dist != best_d:
            mismatches += 1
        bidx, bdist = retrieve_batch(bank, query[None, :])
        if int(bidx[0]) != best_i:
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 30
    report(
        "retrieval equals exhaustive scan (1000 banks)",
        ok,
        f"{mismatches} mismatches, {elapsed:.1f}s (<30s)",
    )
    assert mismatches == 0
    assert elapsed < 30


# --------------------------------------------------------------------------
# 3. lambda = 1 reduces bitwise to the branch-disabled baseline
# --------------------------------------------------------------------------


def test_lambda_one_training_is_bitwise_baseline():
    rng = np.random.default_rng(5)
    size = 48
    views = []
    for i in range(2):
        cam = make_camera(size=size, focal=60.0)
        cam.trans = cam.trans + np.array([0.4 * i, 0.0, 0.0])
        views.append((rng.random((size, size, 3)), cam))
    scene0 = make_scene(rng, k=15)
    bank = build_bank(
        [rng.random((260, 260, 3)) for _ in range(2)],
        crops_per_view=1,
        rng=np.random.default_rng(11),
    )
    kw = dict(iters=200, semantic_every=5, densify_every=40, densify_from=30, seed=3)
    out_a, log_a = train(scene0, views, bank, TrainConfig(lambda_weight=1.0, **kw))
    out_b, log_b = train(scene0, views, None, TrainConfig(semantic_enabled=False, **kw))
    same_params = all(
        (getattr(out_a, n) == getattr(out_b, n)).all()
        for n in ("means", "quats", "log_scales", "opacity_logits", "sh")
    )
    same_losses = [r["l_ori"] for r in log_a.records] == [
        r["l_ori"] for r in log_b.records
    ]
    ok = same_params and same_losses and len(log_a.records) == 200
    report(
        "lambda=1 trajectory bit-identical to disabled branch (200 iters)",
        ok,
        f"params identical={same_params}, losses identical={same_losses}",
    )
    assert ok


# --------------------------------------------------------------------------
# 4. Directional held-out PSNR claim on the glow benchmark
# --------------------------------------------------------------------------


def test_bank_supervision_improves_heldout_psnr():
    t0 = time.perf_counter()
    deltas, glow_deltas = [], []
    for scene_seed in (0, 1, 2):
        for seed in SEEDS:
            base = _bench_run(scene_seed, seed, 1.0, 0)
            sem = _bench_run(scene_seed, seed, 0.01, 24)
            deltas.append(sem[0] - base[0])
            glow_deltas.append(sem[1] - base[1])
    elapsed = time.perf_counter() - t0
    med, med_glow = float(np.median(deltas)), float(np.median(glow_deltas))
    ok = med >= 0.3 and med_glow >= 0.3 and elapsed < 900
    report(
        "bank supervision beats baseline on held-out views (3 scenes x 5 seeds)",
        ok,
        f"median dPSNR {med:+.2f} dB (>=+0.3), glow {med_glow:+.2f} dB (>=+0.3), "
        f"{elapsed:.0f}s (<900s)",
    )
    assert elapsed < 900
    assert med >= 0.3, f"median held-out PSNR delta {med:+.2f} dB < +0.3 dB"
    assert med_glow >= 0.3, f"median glow-pixel PSNR delta {med_glow:+.2f} dB < +0.3 dB"


def test_heldout_psnr_nondecreasing_in_bank_size():
    medians = []
    for n_bank in (0, 12, 24):
        lam = 1.0 if n_bank == 0 else 0.01
        medians.append(
            float(np.median([_bench_run(0, seed, lam, n_bank)[0] for seed in SEEDS]))
        )
    ok = medians[0] <= medians[1] <= medians[2]
    report(
        "held-out PSNR non-decreasing in candidate-view count {0,12,24}",
        ok,
        f"medians {medians[0]:.2f} / {medians[1]:.2f} / {medians[2]:.2f} dB",
    )
    assert ok, f"median PSNR not non-decreasing: {medians}"


def test_improvement_nonnegative_at_4_and_8_views():
    medians = {}
    for n_train in (4, 8):
        deltas = [
            _bench_run(0, seed, 0.01, 24, n_train=n_train)[0]
            - _bench_run(0, seed, 1.0, 0, n_train=n_train)[0]
            for seed in SEEDS
        ]
        medians[n_train] = float(np.median(deltas))
    ok = medians[4] >= 0.0 and medians[8] >= 0.0
    report(
        "bank-supervision improvement >= 0 dB at 4 and 8 training views",
        ok,
        f"median dPSNR {medians[4]:+.2f} dB @4 views, {medians[8]:+.2f} dB @8 views",
    )
    assert ok, f"negative median improvement: {medians}"


# --------------------------------------------------------------------------
# 5. Candidate verification behavior
# --------------------------------------------------------------------------


def test_verification_accepts_identical_rejects_noise():
    rng = np.random.default_rng(13)
    images = [procedural_texture(i, seed=5, res=300) for i in range(4)]
    zero_ok = True
    for img in images:
        ref = describe(img, (10, 10))
        rep = verify(ref, [describe(img, (10, 10)) for _ in range(3)], threshold=1.5)
        zero_ok = zero_ok and rep.accepted and rep.distance == 0.0

    cal = calibrate_threshold(images, rng=np.random.default_rng(2))
    threshold = cal["suggested_threshold"]
    separated = cal["same_scene"].max() < cal["noise"].min()
    noise_rejected = True
    for img in images:
        ref = describe(img, (0, 0))
        noise = [describe(rng.uniform(size=(256, 256, 3)), (0, 0)) for _ in range(3)]
        noise_rejected = noise_rejected and not verify(ref, noise, threshold=threshold).accepted
    ok = zero_ok and separated and noise_rejected
    report(
        "verification: identical sets accepted at D=0, noise rejected",
        ok,
        f"identical D=0 accepted={zero_ok}; calibration same-scene "
        f"[{cal['same_scene'].min():.3f},{cal['same_scene'].max():.3f}] vs noise "
        f"[{cal['noise'].min():.3f},{cal['noise'].max():.3f}], threshold "
        f"{threshold:.3f}, noise rejected={noise_rejected}",
    )
    assert ok


# --------------------------------------------------------------------------
# 6. Serialization fuzzing
# --------------------------------------------------------------------------


def test_format_fuzz_roundtrip_and_rejection():
    rng = np.random.default_rng(99)
    bad = 0
    for i in range(1000):
        if i % 2 == 0:
            count, dim = int(rng.integers(1, 40)), int(rng.integers(1, 32))
            bank = FeatureBank(
                dim=dim,
                vectors=rng.random((count, dim)).astype(np.float32),
                source_views=rng.integers(0, 100, count).astype(np.uint32),
                patch_indices=rng.integers(0, 256, count).astype(np.uint32),
                extractor="x" * int(rng.integers(1, 20)),
            )
            data = write_bank(bank)
            back = read_bank(data)
            if not (
                (back.vectors == bank.vectors).all()
                and (back.source_views == bank.source_views).all()
                and (back.patch_indices == bank.patch_indices).all()
                and back.extractor == bank.extractor
            ):
                bad += 1
            try:
                read_bank(data[: int(rng.integers(0, len(data)))])
                bad += 1  # truncation must never parse
            except DataFormatError as e:
                if not e.field:
                    bad += 1
        else:
            k = int(rng.integers(0, 12))
            sc = (
                make_scene(rng, k=k, sh_degree=int(rng.integers(0, 3)))
                if k
                else GaussianScene.empty(sh_degree=int(rng.integers(0, 3)))
            )
            if k:  # store f32-exact unit quaternions
                sc.quats = sc.quats.astype(np.float32).astype(np.float64)
                sc.quats /= np.linalg.norm(sc.quats, axis=-1, keepdims=True)
            data = write_scene(sc)
            back = read_scene(data)
            if not (
                np.allclose(back.means, sc.means, atol=1e-6)
                and np.allclose(back.sh, sc.sh, atol=1e-6)
                and len(back) == len(sc)
            ):
                bad += 1
            if len(data) > 20:
                try:
                    read_scene(data[: int(rng.integers(0, len(data) - 1))])
                    bad += 1
                except DataFormatError as e:
                    if not e.field:
                        bad += 1
            corrupted = bytearray(data)
            corrupted[int(rng.integers(0, 4))] ^= 0xFF  # break the magic
            try:
                read_scene(bytes(corrupted))
                bad += 1
            except DataFormatError as e:
                if e.field != "magic":
                    bad += 1
    ok = bad == 0
    report(
        "format fuzz: 1000 roundtrips exact, corrupt/truncated rejected",
        ok,
        f"{bad} violations",
    )
    assert bad == 0


# --------------------------------------------------------------------------
# 7. Metric identities
# --------------------------------------------------------------------------


def test_metric_identities():
    rng = np.random.default_rng(3)
    a = rng.random((40, 40, 3))
    p_self = psnr(a, a)
    s_self = ssim(a, a)

    # For constant images x and y the covariance terms vanish and SSIM
    # collapses to its luminance/contrast closed form.
    x, y = 0.3, 0.7
    c1, c2 = 0.01**2, 0.03**2
    closed = ((2 * x * y + c1) * c2) / ((x * x + y * y + c1) * c2)
    s_const = ssim(np.full((32, 32, 3), x), np.full((32, 32, 3), y))

    ok = p_self == 99.0 and s_self == 1.0 and abs(s_const - closed) < 1e-9
    report(
        "metric identities (self-PSNR cap, self-SSIM, constant-image SSIM)",
        ok,
        f"psnr(a,a)={p_self}, ssim(a,a)={s_self}, |ssim-closed form|="
        f"{abs(s_const - closed):.2e} (<1e-9)",
    )
    assert p_self == 99.0
    assert s_self == 1.0
    assert abs(s_const - closed) < 1e-9
