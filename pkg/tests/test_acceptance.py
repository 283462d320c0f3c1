"""Acceptance gate: one test per top-level criterion, each printing a
single PASS line on success (failures raise with details).

Run with `pytest tests/test_acceptance.py -v -s` to see the lines live.
"""

import json
import time

import numpy as np
import pytest

from camulenet import autodiff as ad
from camulenet.autodiff import Tensor
from camulenet.cli import main as cli_main
from camulenet.crossval import build_fold_plan, run_crossval, run_fold
from camulenet.dataset import fleiss_kappa
from camulenet.dsp import (AudioClip, hz_to_mel, mel_filterbank, mfcc,
                           power_spectrum, stft_spectrogram)
from camulenet.errors import SpeakerLeakError
from camulenet.features import DspConfig, TinyEncoderSource, build_bundles
from camulenet.fusion import CoAttentionFusion, FusionConfig
from camulenet.heads import HeadOutputs, MultitaskLossConfig, multitask_loss
from camulenet.metrics import weighted_metrics
from camulenet.model import (FeatureBundle, ModelConfig, build_model,
                             stack_batch)
from camulenet.optim import Adam
from camulenet.synthetic import build_corpus
from camulenet.training import TrainConfig, evaluate, train


def _report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {name}: {status}{(' ' + detail) if detail else ''}")
    assert ok, f"{name}: {detail}"


# ------------------------------------------------------------------ fixtures


SMALL_DSP = DspConfig(target_len_s=0.25, n_mfcc=8, n_mels=24)


def _model_cfg(mode="camulenet", **kw):
    base = dict(mode=mode, n_classes=2, L=8, W=6, preset="tiny", n_mfcc=8,
                gru_hidden=8, gru_layers=1, T=16, D_hidden=16)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture(scope="module")
def overfit_corpus(tmp_path_factory):
    """32 clips: 8 speakers x 4 clips, 2 emotions, both genders."""
    root = tmp_path_factory.mktemp("overfit")
    manifest = build_corpus(root, n_speakers=8, clips_per_speaker=4,
                            n_emotions=2, seed=31, duration_s=0.25)
    bundles = build_bundles(manifest, SMALL_DSP, TinyEncoderSource(8, 6, 31),
                            preset="tiny")
    return manifest, bundles


@pytest.fixture(scope="module")
def heldout_corpus(tmp_path_factory):
    """Overfit-style corpus plus 6 unseen speakers for the ablation check.

    The speaker-varied style makes absolute pitch a speaker trait and keeps
    the emotion cue as a pitch ratio, so memorizing seen-speaker spectra
    does not transfer; the check is about unseen-speaker generalization.
    """
    root = tmp_path_factory.mktemp("heldout")
    manifest = build_corpus(root, n_speakers=16, clips_per_speaker=4,
                            n_emotions=2, seed=33, duration_s=0.25,
                            style="speaker-varied")
    bundles = build_bundles(manifest, SMALL_DSP, TinyEncoderSource(8, 6, 33),
                            preset="tiny")
    train_items = [b for b in bundles if b.speaker_id < "spk010"]
    eval_items = [b for b in bundles if b.speaker_id >= "spk010"]
    return train_items, eval_items


# ------------------------------------------------------------------ criteria


def test_gradient_suite_composed_graph():
    """Composed model graph passes sampled central finite differences."""
    start = time.monotonic()
    cfg = _model_cfg(n_mfcc=3, gru_hidden=2, T=8, L=4, W=6, D_hidden=5)
    model = build_model(cfg, ad.make_rng(3, 60), dtype=np.float64)
    rng = np.random.default_rng(8)
    bundles = [FeatureBundle(clip_id=f"c{i}", speaker_id=f"s{i}", emotion=i % 2,
                             gender=i % 2,
                             spec_image=rng.standard_normal((32, 32)),
                             mfcc=rng.standard_normal((5, 3)),
                             x_w=rng.standard_normal((4, 6)))
               for i in range(2)]
    batch = stack_batch(bundles)

    def loss_value():
        return model.compute(batch, train=False).loss

    base = loss_value()
    ad.backward(base)
    params = model.params()
    eps = 1e-6
    worst = 0.0
    checked = 0
    idx_rng = np.random.default_rng(4)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        grad = (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1)
        picks = idx_rng.choice(flat.size, size=min(4, flat.size), replace=False)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_value().item()
            flat[i] = orig - eps
            lm = loss_value().item()
            flat[i] = orig
            num = (lp - lm) / (2 * eps)
            scale = max(abs(num), abs(grad[i]), 1e-6)
            worst = max(worst, abs(grad[i] - num) / scale)
            checked += 1
    elapsed = time.monotonic() - start
    _report("gradient-suite", worst <= 1e-3 and elapsed < 60.0,
            f"(rel err {worst:.2e} over {checked} sampled entries, {elapsed:.1f}s)")


def test_dsp_oracle_suite():
    """FFT vs naive DFT, MFCC vs from-scratch mel+DCT, 197-frame shape."""
    import scipy.fft

    rng = np.random.default_rng(12)
    # spectrogram vs O(N^2) DFT on random short frames
    worst = 0.0
    for _ in range(5):
        n = 64
        samples = rng.standard_normal(n)
        power = power_spectrum(samples, n, n, 128)
        window = 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(n) / (n - 1))
        frame = np.zeros(128)
        frame[:n] = samples * window
        k = np.arange(65)[:, None]
        t = np.arange(128)[None, :]
        dft = (frame * np.exp(-2j * np.pi * k * t / 128)).sum(axis=1)
        oracle = np.abs(dft) ** 2
        worst = max(worst, np.max(np.abs(power[0] - oracle) /
                                  np.maximum(oracle, 1e-9)))
    fft_ok = worst < 1e-6

    # 2 s at 16 kHz with 40 ms window / 10 ms hop -> exactly 197 frames
    clip = AudioClip(samples=rng.standard_normal(32000), sample_rate=16000)
    spec = stft_spectrogram(clip, window_ms=40, hop_ms=10, n_fft=800)
    shape_ok = spec.values.shape == (197, 401)

    # full MFCC vs an independent mel+DCT recomputation
    clip2 = AudioClip(samples=rng.standard_normal(8000), sample_rate=16000)
    got = mfcc(clip2, n_mfcc=13, hop_samples=160, n_mels=24,
               win_samples=400, n_fft=512).values
    power = power_spectrum(clip2.samples, 400, 160, 512)
    bank = mel_filterbank(24, 512, 16000)
    logmel = np.log(power @ bank.T + 1e-10)
    oracle = scipy.fft.dct(logmel, type=2, norm="ortho", axis=1)[:, :13]
    rel = np.max(np.abs(got - oracle) / np.maximum(np.abs(oracle), 1e-6))
    mfcc_ok = rel < 1e-6

    mel_ok = abs(hz_to_mel(700.0) - 2595.0 * np.log10(2.0)) < 1e-9
    _report("dsp-oracles", fft_ok and shape_ok and mfcc_ok and mel_ok,
            f"(dft rel {worst:.1e}, shape {spec.values.shape}, mfcc rel {rel:.1e})")


def test_multitask_loss_arithmetic():
    """Uniform-logit closed form within 1e-9; gamma gradient-free bit-wise."""
    out = HeadOutputs(emotion_logits=Tensor(np.zeros((3, 4)), dtype=np.float64),
                      gender_logit=Tensor(np.zeros((3, 1)), dtype=np.float64))
    loss = multitask_loss(out, [0, 1, 2], [0, 1, 0], MultitaskLossConfig())
    expect = 0.4 * np.log(4.0) + 0.1 * np.log(2.0) + 0.2
    value_ok = abs(loss.item() - expect) < 1e-9

    rng = np.random.default_rng(3)
    logits = rng.standard_normal((4, 3))
    gl = rng.standard_normal((4, 1))
    grads = []
    for gamma in (0.0, 0.2):
        te = Tensor(logits, requires_grad=True, dtype=np.float64)
        tg = Tensor(gl, requires_grad=True, dtype=np.float64)
        l = multitask_loss(HeadOutputs(te, tg), [0, 1, 2, 0], [1, 0, 1, 1],
                           MultitaskLossConfig(gamma=gamma))
        ad.backward(l)
        grads.append((te.grad.copy(), tg.grad.copy()))
    grad_ok = (np.array_equal(grads[0][0], grads[1][0])
               and np.array_equal(grads[0][1], grads[1][1]))
    _report("multitask-loss", value_ok and grad_ok,
            f"(value err {abs(loss.item() - expect):.1e}, gamma grads bit-equal)")


def test_coattention_identities():
    """One-hot weights copy the matching frame; the skip connection is live."""
    cfg = FusionConfig(L=4, W=6, T=8, D_hidden=5, dropout=0.0)
    fus = CoAttentionFusion(cfg, 10, 7, ad.make_rng(0, 61), dtype=np.float64)
    rng = np.random.default_rng(6)
    frames = rng.standard_normal((1, 4, 6))
    one_hot_ok = True
    for j in range(4):
        w = np.zeros((1, 4))
        w[0, j] = 1.0
        out = fus.attend(Tensor(w, dtype=np.float64),
                         Tensor(frames, dtype=np.float64))
        one_hot_ok &= np.array_equal(out.data, frames[:, j])

    s = Tensor(rng.standard_normal((2, 10)), dtype=np.float64)
    m = Tensor(rng.standard_normal((2, 7)), dtype=np.float64)
    xs, xm = fus.project_branches(s, m)
    weights = fus.concat_project(xm, xs)
    fused = fus(s, m, Tensor(frames.repeat(2, axis=0), dtype=np.float64))
    skip_ok = np.array_equal(fused.data[:, cfg.D_hidden:], weights.data)
    _report("coattention-identities", one_hot_ok and skip_ok)


def test_cv_protocol(tmp_path):
    """91-speaker plan shape, leak abort, and a full 10-fold run in budget."""
    start = time.monotonic()
    plan = build_fold_plan([f"s{i:03d}" for i in range(91)], k=10)
    sizes = sorted((len(f) for f in plan.folds), reverse=True)
    plan_ok = sizes == [10] + [9] * 9 and len(plan.all_speakers()) == 91

    manifest = build_corpus(tmp_path, n_speakers=91, clips_per_speaker=1,
                            n_emotions=2, seed=37, duration_s=0.25)
    bundles = build_bundles(manifest, SMALL_DSP, TinyEncoderSource(8, 6, 37),
                            preset="tiny")
    doctored = build_fold_plan(sorted({b.speaker_id for b in bundles}), k=10)
    doctored.folds[0].append(doctored.folds[1][0])
    with pytest.raises(SpeakerLeakError):
        run_fold(1, doctored, bundles, _model_cfg(),
                 TrainConfig(batch_size=16, max_epochs=1))

    report, logs = run_crossval(
        bundles, _model_cfg(),
        TrainConfig(batch_size=16, lr=1e-3, max_epochs=2, patience=2, seed=37),
        k=10)
    elapsed = time.monotonic() - start
    run_ok = (len(report.fold_results) == 10
              and sum(np.array(report.confusions).sum() for _ in [0]) == 91
              and elapsed < 600.0)
    _report("cv-protocol", plan_ok and run_ok,
            f"(fold sizes {sizes}, full run {elapsed:.1f}s, "
            f"mean WA {report.mean['wa']:.3f})")


def test_overfit_smoke(overfit_corpus):
    """>= 95% train accuracy on 32 clips within 200 epochs, 3 of 3 seeds."""
    _, bundles = overfit_corpus
    batch = stack_batch(bundles)
    truth = batch.emotion
    wins = []
    for seed in (1, 2, 3):
        model = build_model(_model_cfg(), ad.make_rng(seed, 62))
        opt = Adam(model.params(), lr=2e-3)
        reached = None
        for epoch in range(1, 201):
            res = model.compute(batch, train=True, rng=ad.make_rng(seed, 63, epoch))
            ad.backward(res.loss)
            opt.step()
            opt.zero_grad()
            with ad.no_grad():
                acc = (model.compute(batch, train=False).emotion_pred
                       == truth).mean()
            if acc >= 0.95:
                reached = epoch
                break
        wins.append(reached)
    _report("overfit-smoke", all(w is not None for w in wins),
            f"(epochs to 95%: {wins})")


def test_metrics_oracle():
    """Brute-force confusion recomputation on 1000 random vectors; hand case."""
    from test_metrics import brute_force_metrics

    rng = np.random.default_rng(44)
    exact = True
    for _ in range(1000):
        c = int(rng.integers(2, 8))
        n = int(rng.integers(1, 50))
        truth = rng.integers(0, c, size=n)
        preds = rng.integers(0, c, size=n)
        wa, wf1 = weighted_metrics(preds, truth, c)
        bwa, bwf1 = brute_force_metrics(preds, truth, c)
        exact &= abs(wa - bwa) < 1e-12 and abs(wf1 - bwf1) < 1e-12
    wa, wf1 = weighted_metrics([0, 1, 1, 1], [0, 0, 1, 1], 2)
    hand_ok = abs(wa - 0.75) < 1e-9 and abs(wf1 - 0.7333333333) < 1e-9
    _report("metrics-oracle", exact and hand_ok,
            f"(hand case WA {wa:.4f} WF1 {wf1:.4f})")


def test_fleiss_kappa_cases():
    unanimous = fleiss_kappa([[3, 0], [0, 3], [3, 0]])
    hand = fleiss_kappa([[2, 1], [1, 2]])
    ok = unanimous == 1.0 and abs(hand - (-1.0 / 3.0)) < 1e-12
    _report("fleiss-kappa", ok, f"(unanimous {unanimous}, hand {hand:.6f})")


def test_crossval_determinism(tmp_path):
    """Two CLI crossval runs with the same config: byte-identical reports."""
    build_corpus(tmp_path / "data", n_speakers=10, clips_per_speaker=2,
                 n_emotions=2, seed=41, duration_s=0.25)
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(
        'mode = "camulenet"\nseed = 41\ntiny_L = 8\ntiny_W = 6\nT = 16\n'
        "D_hidden = 16\ngru_hidden = 8\ngru_layers = 1\nn_mfcc = 8\n"
        "batch_size = 16\nmax_epochs = 1\nn_folds = 5\n\n"
        "[dsp]\ntarget_len_s = 0.25\nn_mels = 24\n")
    blobs = []
    fingerprints = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        rc = cli_main(["crossval", "--manifest", str(tmp_path / "data" / "manifest.csv"),
                       "--out", str(out), "--config", str(cfg_path)])
        assert rc == 0
        blobs.append((out / "report.json").read_bytes())
        fingerprints.append(json.loads(
            (out / "resolved_config.json").read_text())["fingerprint"])
    ok = blobs[0] == blobs[1] and fingerprints[0] == fingerprints[1]
    _report("crossval-determinism", ok,
            f"(fingerprint {fingerprints[0]}, {len(blobs[0])} bytes)")


def test_ablation_ordering(heldout_corpus):
    """Mean held-out WA: co-attention model >= no-coattention over 5 seeds."""
    train_items, eval_items = heldout_corpus
    means = {}
    for mode in ("camulenet", "camulenet_no_coattention"):
        scores = []
        for seed in (1, 2, 3, 4, 5):
            model = build_model(_model_cfg(mode=mode), ad.make_rng(seed, 64))
            train(model, train_items, eval_items,
                  TrainConfig(batch_size=16, lr=2e-3, max_epochs=64,
                              patience=64, seed=seed))
            scores.append(evaluate(model, eval_items)["wa"])
        means[mode] = float(np.mean(scores))
    ok = means["camulenet"] >= means["camulenet_no_coattention"]
    _report("ablation-ordering", ok,
            f"(WA camulenet {means['camulenet']:.3f} vs "
            f"no-coattention {means['camulenet_no_coattention']:.3f})")
