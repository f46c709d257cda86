import numpy as np
import pytest

from segnoise.folds import make_folds
from segnoise.metrics import grad_loss, hard_metrics, loss, soft_dice
from segnoise.noise import NoiseMode, NoiseSpec, corrupt_dataset
from segnoise.phantom import PhantomSpec, generate_corpus
from segnoise.trainer import (
    LinearSegmenter,
    TrainConfig,
    beta_gridsearch,
    extract_features,
    predict,
    train,
)
from segnoise.volume import zscore_normalize


def brute_force_box_mean(frame, radius):
    h, w = frame.shape
    out = np.zeros((h, w))
    size = 2 * radius + 1
    for y in range(h):
        for x in range(w):
            total = 0.0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w:
                        total += frame[yy, xx]
            out[y, x] = total / size**2
    return out


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(PhantomSpec(depth=4, height=64, width=64), count=8, seed=7)


@pytest.fixture(scope="module")
def samples(corpus):
    pairs = []
    for rec in corpus[:4]:
        image = zscore_normalize(rec.volume).first_modality()
        for frame_index in range(image.shape[0]):
            pairs.append((image[frame_index], rec.mask[frame_index]))
    return pairs


class TestFeatures:
    def test_constant_zero_frame(self):
        feats = extract_features(np.zeros((6, 6)))
        assert feats.shape == (6, 6, 5)
        assert np.all(feats[..., :4] == 0.0)
        assert np.all(feats[..., 4] == 1.0)

    def test_single_bright_pixel_spreads_over_box(self):
        frame = np.zeros((7, 7))
        frame[3, 3] = 9.0
        feats = extract_features(frame)
        mean3 = feats[..., 1]
        assert mean3[3, 3] == pytest.approx(1.0)
        assert mean3[2, 3] == pytest.approx(1.0)
        assert mean3[3, 2] == pytest.approx(1.0)
        assert mean3[0, 0] == 0.0

    @pytest.mark.parametrize("radius,feature_index", [(1, 1), (3, 3)])
    def test_box_mean_matches_brute_force(self, radius, feature_index):
        rng = np.random.default_rng(0)
        frame = rng.normal(size=(11, 13))
        feats = extract_features(frame)
        expected = brute_force_box_mean(frame, radius)
        assert np.allclose(feats[..., feature_index], expected, atol=1e-10)

    def test_box_std_matches_brute_force(self):
        rng = np.random.default_rng(1)
        frame = rng.normal(size=(9, 9))
        feats = extract_features(frame)
        mean = brute_force_box_mean(frame, 1)
        mean_sq = brute_force_box_mean(frame * frame, 1)
        expected = np.sqrt(np.clip(mean_sq - mean**2, 0, None))
        assert np.allclose(feats[..., 2], expected, atol=1e-10)

    def test_rejects_non_finite(self):
        frame = np.zeros((4, 4))
        frame[0, 0] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            extract_features(frame)


class TestPredict:
    def test_zero_weights_give_half(self):
        model = LinearSegmenter(weights=np.zeros(5))
        feats = extract_features(np.random.default_rng(2).normal(size=(5, 5)))
        assert np.all(predict(model, feats) == 0.5)

    def test_saturates_toward_binary_with_scaled_weights(self):
        rng = np.random.default_rng(3)
        frame = rng.normal(size=(6, 6))
        feats = extract_features(frame)
        model = LinearSegmenter(weights=np.array([1000.0, 0, 0, 0, 0]))
        p = predict(model, feats)
        assert np.all((p > 0.999) | (p < 0.001))

    def test_matches_scalar_dot_product(self):
        rng = np.random.default_rng(4)
        frame = rng.normal(size=(3, 3))
        feats = extract_features(frame)
        w = np.array([0.3, -0.2, 0.1, 0.05, -0.4])
        model = LinearSegmenter(weights=w)
        p = predict(model, feats)
        for y in range(3):
            for x in range(3):
                z = sum(feats[y, x, i] * w[i] for i in range(5))
                assert p[y, x] == pytest.approx(1.0 / (1.0 + np.exp(-z)), abs=1e-12)

    def test_arity_mismatch(self):
        model = LinearSegmenter(weights=np.zeros(5))
        with pytest.raises(ValueError, match="arity"):
            predict(model, np.zeros((4, 4, 3)))


class TestTrain:
    def test_clean_phantom_reaches_high_soft_dice(self, samples):
        model, history = train(samples, TrainConfig(learning_rate=4.0, epochs=200))
        dices = [
            soft_dice(predict(model, extract_features(img)), mask) for img, mask in samples
        ]
        assert float(np.mean(dices)) > 0.85
        assert history[-1] < history[0]

    def test_zero_learning_rate_keeps_weights_and_history_constant(self, samples):
        model, history = train(samples[:4], TrainConfig(learning_rate=0.0, epochs=5))
        assert np.all(model.weights == 0.0)
        assert len(set(history)) == 1

    def test_deterministic_per_seed(self, samples):
        cfg = TrainConfig(learning_rate=2.0, epochs=30, seed=5, init_scale=0.1)
        a, hist_a = train(samples[:6], cfg)
        b, hist_b = train(samples[:6], cfg)
        assert np.array_equal(a.weights, b.weights)
        assert hist_a == hist_b

    def test_loss_decreases_over_first_epochs(self, samples):
        _, history = train(samples, TrainConfig(learning_rate=4.0, epochs=10))
        increases = sum(1 for a, b in zip(history, history[1:]) if b > a)
        assert increases <= 2

    def test_epoch_losses_match_metrics_loss(self, samples):
        # The vectorized descent must agree with the canonical per-frame
        # loss at epoch 0 (weights all zero -> p = 0.5 everywhere).
        subset = samples[:5]
        _, history = train(subset, TrainConfig(learning_rate=1.0, epochs=1, beta=0.7))
        expected = np.mean(
            [loss(np.full(mask.shape, 0.5), mask, 0.7) for _, mask in subset]
        )
        assert history[0] == pytest.approx(float(expected), abs=1e-12)

    def test_composed_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        frame = rng.normal(size=(8, 8))
        mask = (rng.random((8, 8)) < 0.4).astype(np.float64)
        feats = extract_features(frame).reshape(-1, 5)
        w = rng.normal(scale=0.3, size=5)
        beta = 0.6

        def objective(weights):
            z = feats @ weights
            p = 1.0 / (1.0 + np.exp(-z))
            return loss(p.reshape(8, 8), mask, beta)

        z = feats @ w
        p = 1.0 / (1.0 + np.exp(-z))
        grad_p = grad_loss(p.reshape(8, 8), mask, beta).reshape(-1)
        analytic = feats.T @ (grad_p * p * (1 - p))
        eps = 1e-6
        for i in range(5):
            bump = np.zeros(5)
            bump[i] = eps
            numeric = (objective(w + bump) - objective(w - bump)) / (2 * eps)
            assert abs(analytic[i] - numeric) / max(abs(numeric), 1e-12) < 1e-3

    def test_mixed_shapes_rejected(self):
        with pytest.raises(ValueError, match="share one shape"):
            train(
                [(np.zeros((4, 4)), np.zeros((4, 4))), (np.zeros((5, 5)), np.zeros((5, 5)))],
                TrainConfig(epochs=1),
            )

    def test_empty_sample_list_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            train([], TrainConfig())


@pytest.fixture(scope="module")
def grid_setup(corpus):
    plan = make_folds([r.patient_id for r in corpus], 1, (4, 1, 3), seed=3)
    return corpus, plan.folds[0]


class TestGridsearch:
    def test_single_cell_equals_plain_pipeline(self, grid_setup):
        corpus, split = grid_setup
        cfg = TrainConfig(learning_rate=3.0, epochs=40)
        grid = beta_gridsearch(
            corpus, split, betas=[1.0], mode=NoiseMode.DILATE,
            sigma2_values=[0.0], seeds=[0], base_config=cfg,
        )
        cell = grid.cells[0]

        # Plain pipeline: sigma2=0 leaves masks clean.
        masks, _ = corrupt_dataset(
            corpus, split, NoiseSpec(mode=NoiseMode.DILATE, sigma2=0.0, seed=0)
        )
        by_id = {r.patient_id: r for r in corpus}
        samples = []
        for pid in split.train_ids:
            image = zscore_normalize(by_id[pid].volume).first_modality()
            for f in range(image.shape[0]):
                samples.append((image[f], masks[pid][f]))
        model, _ = train(samples, cfg)
        triples = []
        for pid in split.test_ids:
            image = zscore_normalize(by_id[pid].volume).first_modality()
            pred = np.stack([predict(model, extract_features(fr)) for fr in image])
            triples.append(hard_metrics(pred, by_id[pid].mask))
        expected = np.array(triples).mean(axis=0)
        assert cell.dice == pytest.approx(expected[0], abs=1e-12)
        assert cell.precision == pytest.approx(expected[1], abs=1e-12)
        assert cell.recall == pytest.approx(expected[2], abs=1e-12)

    def test_deterministic_and_parallel_identical(self, grid_setup):
        corpus, split = grid_setup
        cfg = TrainConfig(learning_rate=3.0, epochs=15)
        kwargs = dict(
            betas=[0.4, 1.0], mode=NoiseMode.DILATE, sigma2_values=[2.0],
            seeds=[0, 1], base_config=cfg,
        )
        serial = beta_gridsearch(corpus, split, jobs=1, **kwargs)
        parallel = beta_gridsearch(corpus, split, jobs=4, **kwargs)
        assert serial.cells == parallel.cells

    def test_csv_and_heatmap(self, grid_setup, tmp_path):
        corpus, split = grid_setup
        cfg = TrainConfig(learning_rate=3.0, epochs=10)
        grid = beta_gridsearch(
            corpus, split, betas=[0.5, 1.0], mode=NoiseMode.ERODE,
            sigma2_values=[0.0, 2.0], seeds=[0], base_config=cfg,
        )
        lines = grid.to_csv_string().splitlines()
        assert lines[0] == "beta,sigma2,seed,test_dice,test_precision,test_recall"
        assert len(lines) == 1 + 4
        files = grid.write_outputs(tmp_path)
        assert all(f.exists() for f in files)
        svg = grid.heatmap_svg()
        assert svg.startswith("<svg")

    def test_empty_axes_rejected(self, grid_setup):
        corpus, split = grid_setup
        with pytest.raises(ValueError, match="non-empty"):
            beta_gridsearch(corpus, split, betas=[], mode=NoiseMode.DILATE,
                            sigma2_values=[1.0], seeds=[0])


class TestTrainConfigValidation:
    def test_negative_learning_rate_rejected(self):
        with pytest.raises(ValueError, match="learning_rate"):
            TrainConfig(learning_rate=-1.0)

    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError, match="epochs"):
            TrainConfig(epochs=0)
