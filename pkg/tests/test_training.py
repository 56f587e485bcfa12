import numpy as np
import pytest

from spikedrop.data import Dataset, synth_combo
from spikedrop.network import (
    DropMasks,
    EncoderSpec,
    LayerSpec,
    NetworkSpec,
    combo_spec,
    forward,
    init_weights,
    sample_masks,
    single_tower,
)
from spikedrop.neuron import NeuronParams
from spikedrop.training import (
    TrainConfig,
    TrainingDivergedError,
    _AdamState,
    backward,
    loss_mse,
    train,
)

P = NeuronParams()


class TestLossMse:
    def test_perfect_fit(self):
        assert loss_mse([1, 2], [1, 2]) == 0.0

    def test_single_residual(self):
        assert loss_mse([0], [2]) == 4.0

    def test_hand_computed(self):
        assert loss_mse([1, 2, 3], [2, 2, 2]) == pytest.approx(2 / 3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            loss_mse([1, 2], [1])


def tiny_spec(keep_prob=1.0):
    return NetworkSpec(
        input_slices=[("features", 0, 3)],
        encoders=[EncoderSpec(["features"], [LayerSpec(3, 4, "softlif", keep_prob)])],
        head=[LayerSpec(4, 1, "linear")],
        output_dim=1,
    )


def numeric_gradients(spec, weights, x, masks, targets, params, h=1e-5):
    """Central finite differences of loss_mse through the forward pass."""
    grads = weights.zeros_like()

    def loss_at(w):
        out, _ = forward(spec, w, x, masks, params)
        return loss_mse(out, targets)

    for key in weights.keys():
        for arrs, garrs in ((weights.weights, grads.weights),
                            (weights.biases, grads.biases)):
            base = arrs[key]
            it = np.nditer(base, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = base[idx]
                base[idx] = orig + h
                up = loss_at(weights)
                base[idx] = orig - h
                down = loss_at(weights)
                base[idx] = orig
                garrs[key][idx] = (up - down) / (2 * h)
    return grads


def assert_grads_close(analytic, numeric, rel):
    for key in analytic.weights:
        for a, n in ((analytic.weights[key], numeric.weights[key]),
                     (analytic.biases[key], numeric.biases[key])):
            scale = np.maximum(np.abs(n), 1e-8)
            assert np.max(np.abs(a - n) / scale) < rel


class TestBackward:
    def test_matches_finite_differences_fixed_mask(self):
        spec = tiny_spec(keep_prob=0.75)
        weights = init_weights(spec, seed=0)
        x = np.array([0.4, -0.3, 0.8])
        masks = sample_masks(spec, seed=5)
        targets = np.array([0.7])
        out, cache = forward(spec, weights, x, masks, P)
        analytic = backward(spec, weights, cache, masks, targets, P)
        numeric = numeric_gradients(spec, weights, x, masks, targets, P)
        assert_grads_close(analytic, numeric, rel=1e-4)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_finite_differences_batched(self, seed):
        spec = tiny_spec(keep_prob=0.8)
        rng = np.random.default_rng(seed)
        weights = init_weights(spec, seed=seed)
        x = rng.normal(size=(4, 3))
        targets = rng.normal(size=4)
        masks = sample_masks(spec, seed=seed + 100)
        out, cache = forward(spec, weights, x, masks, P)
        analytic = backward(spec, weights, cache, masks, targets, P)
        numeric = numeric_gradients(spec, weights, x, masks, targets, P)
        assert_grads_close(analytic, numeric, rel=1e-4)

    def test_masked_neuron_has_zero_gradients(self):
        spec = tiny_spec(keep_prob=0.5)
        weights = init_weights(spec, seed=1)
        x = np.array([0.2, 0.1, -0.4])
        mask = np.array([1.0, 0.0, 1.0, 1.0])
        masks = DropMasks({"enc0:0": mask})
        out, cache = forward(spec, weights, x, masks, P)
        grads = backward(spec, weights, cache, masks, np.array([1.0]), P)
        assert np.all(grads.weights["enc0:0"][1, :] == 0.0)  # incoming
        assert grads.biases["enc0:0"][1] == 0.0
        assert np.all(grads.weights["head:0"][:, 1] == 0.0)  # outgoing

    def test_shared_encoder_gradient_accumulates(self):
        spec = NetworkSpec(
            input_slices=[("a", 0, 3), ("b", 3, 3)],
            encoders=[
                EncoderSpec(["a"], [LayerSpec(3, 4)], share_tag="tw"),
                EncoderSpec(["b"], [LayerSpec(3, 4)], share_tag="tw"),
            ],
            head=[LayerSpec(8, 1, "linear")],
            output_dim=1,
        )
        weights = init_weights(spec, seed=2)
        # identical inputs on both towers, identical outgoing head weights
        weights.weights["head:0"][0, 4:] = weights.weights["head:0"][0, :4]
        x = np.array([0.3, -0.1, 0.6, 0.3, -0.1, 0.6])
        out, cache = forward(spec, weights, x, None, P)
        grads = backward(spec, weights, cache, None, np.array([2.0]), P)

        # single-tower reference with the same layer and half the head
        ref_spec = NetworkSpec(
            input_slices=[("a", 0, 3)],
            encoders=[EncoderSpec(["a"], [LayerSpec(3, 4)], share_tag="tw")],
            head=[LayerSpec(4, 1, "linear")],
            output_dim=1,
        )
        ref_weights = init_weights(ref_spec, seed=99)
        ref_weights.weights["tw:0"] = weights.weights["tw:0"].copy()
        ref_weights.biases["tw:0"] = weights.biases["tw:0"].copy()
        ref_weights.weights["head:0"] = weights.weights["head:0"][:, :4].copy()
        ref_weights.biases["head:0"] = weights.biases["head:0"].copy()
        ref_out, ref_cache = forward(ref_spec, ref_weights, x[:3], None, P)
        # choose the target so the residual matches the two-tower case
        residual_target = ref_out[0] - (out[0] - 2.0)
        ref_grads = backward(ref_spec, ref_weights, ref_cache, None,
                             np.array([residual_target]), P)
        assert np.allclose(grads.weights["tw:0"],
                           2.0 * ref_grads.weights["tw:0"], rtol=1e-9)


class TestAdam:
    def test_zero_gradient_leaves_weights_unchanged(self):
        spec = tiny_spec()
        weights = init_weights(spec, seed=3)
        before = weights.copy()
        state = _AdamState(weights)
        state.step(weights, weights.zeros_like(), TrainConfig())
        assert weights.equal(before)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(adam_betas=(1.0, 0.9))


class TestTrain:
    def test_linear_least_squares_converges(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(200, 3))
        true_w = np.array([1.5, -2.0, 0.5])
        ds = Dataset(features=x, targets=x @ true_w,
                     feature_names=["a", "b", "c"])
        spec = single_tower(3, [LayerSpec(3, 1, "linear")])
        weights, history = train(
            spec, ds, TrainConfig(epochs=200, batch_size=32,
                                  learning_rate=0.01, seed=0), P)
        assert history[-1][1] < 1e-4

    def test_nonlinear_beats_mean_predictor(self):
        ds = synth_combo(600, 4, 4, noise_std=0.1, seed=3)
        spec = combo_spec(4, 4, cell_hidden=12, drug_hidden=12,
                          head_hidden=16, keep_prob=1.0)
        weights, history = train(
            spec, ds, TrainConfig(epochs=250, batch_size=32,
                                  learning_rate=3e-3, seed=0), P)
        assert history[-1][1] < 0.5 * np.var(ds.targets)
        assert history[-1][1] < history[0][1]

    def test_deterministic_given_seed(self):
        ds = synth_combo(120, 3, 3, seed=4)
        spec = combo_spec(3, 3, cell_hidden=6, drug_hidden=6,
                          head_hidden=8, keep_prob=0.8)
        cfg = TrainConfig(epochs=4, batch_size=16, seed=12)
        w1, h1 = train(spec, ds, cfg, P)
        w2, h2 = train(spec, ds, cfg, P)
        assert w1.equal(w2)
        assert np.array_equal(np.array(h1), np.array(h2), equal_nan=True)

    def test_keep_prob_one_invariant_to_mask_path(self):
        ds = synth_combo(80, 3, 3, seed=5)
        spec = combo_spec(3, 3, cell_hidden=4, drug_hidden=4,
                          head_hidden=6, keep_prob=1.0)
        cfg = TrainConfig(epochs=3, batch_size=16, seed=7)
        w1, h1 = train(spec, ds, cfg, P)
        w2, h2 = train(spec, ds, cfg, P)
        assert w1.equal(w2)
        assert np.array_equal(np.array(h1), np.array(h2), equal_nan=True)

    def test_empty_dataset_rejected(self):
        spec = tiny_spec()
        ds = Dataset(features=np.empty((0, 3)), targets=np.empty(0),
                     feature_names=list("abc"))
        with pytest.raises(ValueError):
            train(spec, ds, TrainConfig(epochs=1), P)

    @pytest.mark.filterwarnings("ignore:overflow")
    @pytest.mark.filterwarnings("ignore:invalid value")
    def test_divergence_detected(self):
        rng = np.random.default_rng(1)
        ds = Dataset(features=rng.normal(size=(64, 3)) * 1e150,
                     targets=rng.normal(size=64) * 1e150,
                     feature_names=list("abc"))
        spec = single_tower(3, [LayerSpec(3, 1, "linear")])
        with pytest.raises(TrainingDivergedError):
            train(spec, ds, TrainConfig(epochs=5, learning_rate=1e10), P)

    def test_eval_history_column(self):
        ds = synth_combo(100, 2, 2, seed=6)
        holdout = synth_combo(30, 2, 2, seed=7)
        spec = combo_spec(2, 2, cell_hidden=4, drug_hidden=4,
                          head_hidden=4, keep_prob=1.0)
        _, history = train(spec, ds, TrainConfig(epochs=2), P,
                           eval_dataset=holdout)
        assert len(history) == 2
        assert all(np.isfinite(row[2]) for row in history)
