"""Loss contract, single training steps, and full runs with checkpoints."""

import numpy as np
import pytest

from diff3m.formats import load_checkpoint
from diff3m.model import Diff3MModel, ModelConfig, load_model
from diff3m.optim import AdamState
from diff3m.schedule import make_schedule
from diff3m.synthdata import GenConfig, generate_dataset
from diff3m.tensor import Tensor, gradients, mse
from diff3m.training import (
    TrainConfig,
    TrainingDataError,
    diff3m_loss,
    train,
    train_step,
)

SMALL = TrainConfig(
    T=60, batch_size=4, iters=3, seed=0, image_size=16, d_embed=8, widths=(3, 5)
)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    cfg = GenConfig(image_size=16, n_train_normal=12, n_test_normal=4, n_test_anomaly=4)
    generate_dataset(cfg, root)
    return root


def make_batch(n=4, size=16, seed=0):
    from diff3m.synthdata import generate_sample

    cfg = GenConfig(image_size=size)
    samples = [generate_sample((seed, i), False, cfg) for i in range(n)]
    images = np.stack([s.image for s in samples])
    return images, [s.record for s in samples], [s.label for s in samples]


class TestLoss:
    def test_perfect_predictions_zero(self):
        a = Tensor(np.random.default_rng(0).standard_normal((2, 4, 4, 1)))
        assert diff3m_loss(a, a, a, a, 0.5).item() == 0.0

    def test_equal_terms_convex_combination(self):
        z = Tensor(np.zeros((1, 2, 2, 1)))
        v = Tensor(np.full((1, 2, 2, 1), 3.0))  # mse = 9 for both heads
        assert diff3m_loss(v, z, v, z, 0.5).item() == pytest.approx(9.0)
        assert diff3m_loss(v, z, z, z, 0.25).item() == pytest.approx(0.25 * 9.0)

    def test_lambda_near_one_reduces_to_noise_objective(self):
        rng = np.random.default_rng(1)
        ep = Tensor(rng.standard_normal((1, 2, 2, 1)))
        e = Tensor(rng.standard_normal((1, 2, 2, 1)))
        xt = Tensor(rng.standard_normal((1, 2, 2, 1)))
        xs = Tensor(rng.standard_normal((1, 2, 2, 1)))
        lam = 1.0 - 1e-9
        assert diff3m_loss(ep, e, xs, xt, lam).item() == pytest.approx(
            mse(ep, e).item(), rel=1e-6
        )

    @pytest.mark.parametrize("lam", [0.0, 1.0, -0.2, 1.5])
    def test_lambda_out_of_range_rejected(self, lam):
        z = Tensor(np.zeros((1, 2, 2, 1)))
        with pytest.raises(ValueError, match="lambda"):
            diff3m_loss(z, z, z, z, lam)


class TestTrainStep:
    def test_zero_learning_rate_freezes_parameters(self):
        images, records, labels = make_batch()
        cfg = TrainConfig(T=60, lr=0.0, batch_size=4, image_size=16, d_embed=8, widths=(3, 5))
        model = Diff3MModel(cfg.model_config(records[0].schema), np.random.default_rng(0))
        sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
        before = {k: p.data.copy() for k, p in model.parameters().items()}
        train_step(images, records, labels, model, AdamState(lr=0.0), sched, cfg, np.random.default_rng(1))
        for k, p in model.parameters().items():
            assert p.data.tobytes() == before[k].tobytes(), k

    def test_identical_seeds_identical_metrics(self):
        images, records, labels = make_batch()

        def run():
            cfg = TrainConfig(T=60, batch_size=4, image_size=16, d_embed=8, widths=(3, 5))
            model = Diff3MModel(cfg.model_config(records[0].schema), np.random.default_rng(3))
            sched = make_schedule(cfg.T)
            rng = np.random.default_rng(4)
            opt = AdamState(lr=cfg.lr)
            return [
                train_step(images, records, labels, model, opt, sched, cfg, rng)["total"]
                for _ in range(3)
            ]

        assert run() == run()

    def test_anomalous_sample_rejected(self):
        images, records, labels = make_batch()
        labels = list(labels)
        labels[2] = "anomalous"
        cfg = TrainConfig(T=60, batch_size=4, image_size=16, d_embed=8, widths=(3, 5))
        model = Diff3MModel(cfg.model_config(records[0].schema), np.random.default_rng(0))
        with pytest.raises(TrainingDataError, match="positions \\[2\\]"):
            train_step(images, records, labels, model, AdamState(), make_schedule(60), cfg, np.random.default_rng(0))

    def test_gradient_reaches_conditioning_stack(self):
        # cross attention trains jointly: tokenizer and encoder get gradients
        images, records, labels = make_batch()
        cfg = TrainConfig(T=60, batch_size=4, image_size=16, d_embed=8, widths=(3, 5))
        model = Diff3MModel(cfg.model_config(records[0].schema), np.random.default_rng(0))
        sched = make_schedule(cfg.T)
        rng = np.random.default_rng(5)
        opt = AdamState(lr=cfg.lr)
        train_step(images, records, labels, model, opt, sched, cfg, rng)
        train_step(images, records, labels, model, opt, sched, cfg, rng)
        grads = {k: p.grad for k, p in model.parameters().items()}
        for key in ("tokenizer.w", "tokenizer.b", "encoder.convs.0.w", "cond_proj.w"):
            assert grads[key] is not None and np.any(grads[key] != 0), key

    def test_ddpm_variant_skips_reconstruction_head(self):
        images, records, labels = make_batch()
        cfg = TrainConfig(T=60, batch_size=4, image_size=16, d_embed=8, widths=(3, 5), variant="ddpm")
        model = Diff3MModel(cfg.model_config(records[0].schema), np.random.default_rng(0))
        m = train_step(images, records, labels, model, AdamState(), make_schedule(60), cfg, np.random.default_rng(0))
        assert m["rec_mse"] == 0.0
        assert m["total"] == pytest.approx(m["noise_mse"])


class TestTrainRuns:
    def test_metrics_log_and_checkpoint(self, tiny_dataset, tmp_path):
        ckpt = tmp_path / "model.ckpt"
        log = tmp_path / "train.log"
        metrics = train(SMALL, tiny_dataset, ckpt, log_path=log)
        assert len(metrics) == 3
        lines = log.read_text().strip().splitlines()
        assert len(lines) == 3
        step, total, noise, rec = lines[0].split("\t")
        assert step == "0"
        assert float(total) == pytest.approx(metrics[0]["total"], abs=1e-6)
        meta, params = load_checkpoint(ckpt)
        assert meta["lambda"] == 0.5
        assert meta["iters"] == 3
        assert meta["schema"][0] == "bmi"

    def test_same_seed_checkpoint_byte_identity(self, tiny_dataset, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        train(SMALL, tiny_dataset, a)
        train(SMALL, tiny_dataset, b)
        assert a.read_bytes() == b.read_bytes()

    def test_resume_zero_steps_reproduces_checkpoint(self, tiny_dataset, tmp_path):
        from dataclasses import replace

        first = tmp_path / "first.ckpt"
        train(SMALL, tiny_dataset, first)
        resumed = tmp_path / "resumed.ckpt"
        train(replace(SMALL, iters=0), tiny_dataset, resumed, resume=first)
        a_meta, a_params = load_checkpoint(first)
        b_meta, b_params = load_checkpoint(resumed)
        assert a_meta == b_meta
        assert first.read_bytes() == resumed.read_bytes()

    def test_loaded_model_matches_saved_parameters(self, tiny_dataset, tmp_path):
        ckpt = tmp_path / "model.ckpt"
        train(SMALL, tiny_dataset, ckpt)
        model, meta = load_model(ckpt)
        _, params = load_checkpoint(ckpt)
        for name, p in model.parameters().items():
            np.testing.assert_array_equal(p.data, params[name])

    def test_anomalous_train_split_rejected(self, tmp_path):
        cfg = GenConfig(image_size=16, n_train_normal=6, n_test_normal=2, n_test_anomaly=2)
        generate_dataset(cfg, tmp_path)
        csv = tmp_path / "train" / "records.csv"
        text = csv.read_text().replace("normal", "anomalous", 1)
        csv.write_text(text)
        with pytest.raises(TrainingDataError, match="anomalous"):
            train(SMALL, tmp_path, tmp_path / "x.ckpt")
