import dataclasses

import numpy as np
import pytest

from conftest import fd_agree
from kdg.acquisition import (
    Sampling,
    acquire,
    input_grad_to_coord_grads,
    input_grad_to_line_grads,
)
from kdg.data import generate_phantom, source_spec
from kdg.evaluation import evaluate_model, psnr
from kdg.fourier import ComplexImage
from kdg.network import ReconNetConfig, init_params, loss_l1
from kdg.perturb import NoiseConfig, NoiseKind
from kdg.trajectory import (
    RadialTrajectory,
    interpolate_controls,
    make_fixed_cartesian,
    make_fixed_radial,
    resample_controls,
    controls_grad_from_coords,
)
from kdg.training import NumericAbort, TrainConfig, lr_schedule, train, train_step, init_state


def tiny_config(**overrides) -> TrainConfig:
    defaults = dict(
        epochs=2,
        image_size=16,
        acceleration=4,
        shots=3,
        points_per_shot=16,
        seed=0,
        net=ReconNetConfig(depth=2, base_channels=4),
        noise=NoiseConfig(kind=NoiseKind.NONE, t_warmup=1),
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)


def tiny_dataset(n=6, size=16):
    return [generate_phantom(source_spec(size), i) for i in range(n)]


class TestLrSchedule:
    def test_peak_at_warmup(self):
        assert lr_schedule(4, 40, 5e-4) == 5e-4

    def test_floor_at_start(self):
        assert lr_schedule(0, 40, 5e-4) == 5e-6  # lr_max/100 floor over the raw 0

    def test_decay_midpoint(self):
        # halfway through the decay segment: (T + t_warmup) / 2 = 22 for T=40
        assert lr_schedule(22, 40, 5e-4) == pytest.approx(2.5e-4, rel=1e-12)

    def test_floor_at_end(self):
        assert lr_schedule(40, 40, 5e-4) == 5e-6


class TestAcquire:
    def test_full_mask_is_identity(self):
        sample = generate_phantom(source_spec(16), 1)
        mask = make_fixed_cartesian(16, 16, 0.1, 0)
        net_input, _ = acquire(ComplexImage.from_real(sample.gt), mask=mask)
        # gt is already min-max normalized, so identity acquisition reproduces it
        assert np.max(np.abs(net_input - sample.gt)) < 1e-10

    def test_four_x_uses_exact_line_budget(self):
        cfg = tiny_config(image_size=64, acceleration=4)
        assert cfg.n_acquired == 16
        state = init_state(cfg)
        assert int(state.fixed_mask.lines.sum()) == 16

    def test_zero_image_gives_zero_input(self):
        zero = ComplexImage.from_real(np.zeros((16, 16)))
        mask = make_fixed_cartesian(16, 4, 0.1, 0)
        net_input, _ = acquire(zero, mask=mask)
        assert np.all(net_input == 0)

    def test_requires_exactly_one_pattern(self):
        gt = ComplexImage.from_real(np.zeros((16, 16)))
        with pytest.raises(ValueError):
            acquire(gt)


class TestChainGradients:
    """End-to-end derivative of the loss w.r.t. sampling parameters.

    The FD oracle runs the whole acquire -> forward -> loss pipeline; h=1e-6
    balances the coordinate third-derivative truncation against roundoff.
    """

    def test_radial_control_point_chain(self):
        h_img = 32
        sample = generate_phantom(source_spec(h_img), 7)
        gt = ComplexImage.from_real(sample.gt)
        net_cfg = ReconNetConfig(depth=2, base_channels=8)
        from kdg.network import ReconNet

        net = ReconNet(net_cfg)
        params = init_params(net_cfg, 0)
        base = make_fixed_radial(4, 24, h_img, h_img)
        controls = resample_controls(base, 4)
        pps = 24

        def full_loss(ctrl):
            coords = interpolate_controls(ctrl, pps)
            net_in, _ = acquire(gt, traj=RadialTrajectory(4, pps, coords))
            return loss_l1(net.forward(params, net_in), sample.gt)

        coords = interpolate_controls(controls, pps)
        net_in, ctx = acquire(gt, traj=RadialTrajectory(4, pps, coords))
        _, gb = net.backward(params, net_in, sample.gt)
        coord_g = input_grad_to_coord_grads(ctx, gb.input_grad)
        an = controls_grad_from_coords(coord_g, controls, pps)

        h = 1e-6
        rng = np.random.default_rng(3)
        fd_list, an_list = [], []
        for _ in range(24):
            s = int(rng.integers(controls.shape[0]))
            i = int(rng.integers(controls.shape[1]))
            ax = int(rng.integers(2))
            cp, cm = controls.copy(), controls.copy()
            cp[s, i, ax] += h
            cm[s, i, ax] -= h
            fd_list.append((full_loss(cp) - full_loss(cm)) / (2 * h))
            an_list.append(an[s, i, ax])
        assert fd_agree(np.array(fd_list), np.array(an_list), rtol=1e-4, atol=1e-8)

    def test_cartesian_line_grads_match_fd(self):
        from kdg.data import normalize01
        from kdg.fourier import Domain, fft2, ifft2
        from kdg.network import ReconNet

        h_img = 32
        sample = generate_phantom(source_spec(h_img), 7)
        gt = ComplexImage.from_real(sample.gt)
        net_cfg = ReconNetConfig(depth=2, base_channels=8)
        net = ReconNet(net_cfg)
        params = init_params(net_cfg, 0)
        mask = make_fixed_cartesian(h_img, 8, 0.1, 0)

        def loss_of_weights(wts):
            ksp = fft2(gt).data * wts[:, None]
            z = ifft2(ComplexImage(ksp, Domain.KSPACE)).data
            v, _ = normalize01(np.abs(z))
            return loss_l1(net.forward(params, v), sample.gt)

        net_in, ctx = acquire(gt, mask=mask)
        _, gb = net.backward(params, net_in, sample.gt)
        an = input_grad_to_line_grads(ctx, gb.input_grad)

        w0 = mask.lines.astype(float)
        h = 1e-6
        fd = np.zeros(h_img)
        for r in range(h_img):
            wp, wm = w0.copy(), w0.copy()
            wp[r] += h
            wm[r] -= h
            fd[r] = (loss_of_weights(wp) - loss_of_weights(wm)) / (2 * h)
        assert fd_agree(fd, an, rtol=1e-4, atol=1e-8)


class TestTrainStep:
    def test_fixed_trajectory_params_untouched(self):
        cfg = tiny_config(sampling=Sampling.RADIAL, trajectory_learning=False)
        state = init_state(cfg)
        coords_before = state.fixed_traj.coords.copy()
        train_step(state, tiny_dataset(1)[0])
        assert np.array_equal(state.fixed_traj.coords, coords_before)
        assert state.controls is None and state.scores is None

    def test_deterministic_loss_sequence(self):
        ds = tiny_dataset(4)
        losses = []
        for _ in range(2):
            cfg = tiny_config(epochs=3)
            state = train(cfg, ds)
            losses.append([row["mean_loss"] for row in state.metrics])
        assert losses[0] == losses[1]

    def test_learned_cartesian_keeps_cardinality(self):
        cfg = tiny_config(trajectory_learning=True, epochs=3,
                          lr_traj_cartesian=0.5)
        state = init_state(cfg)
        ds = tiny_dataset(4)
        for epoch in range(3):
            state.epoch = epoch
            for s in ds:
                train_step(state, s)
                assert int(state.current_mask().lines.sum()) == cfg.n_acquired

    def test_learned_radial_updates_controls(self):
        cfg = tiny_config(sampling=Sampling.RADIAL, trajectory_learning=True,
                          epochs=4, lr_traj_radial=0.05)
        state = init_state(cfg)
        before = state.controls.copy()
        train_step(state, tiny_dataset(1)[0])
        assert not np.array_equal(state.controls, before)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss_aborts(self):
        cfg = tiny_config()
        state = init_state(cfg)
        state.params = [p * np.inf for p in state.params]
        with pytest.raises(NumericAbort, match="epoch 0"):
            train_step(state, tiny_dataset(1)[0])

    def test_single_sample_overfit(self):
        """200 steps on one 32x32 phantom shrink the loss below 20% of initial."""
        cfg = tiny_config(image_size=32, epochs=200, lr_recon_max=2e-3,
                          val_fraction=0.0, center_fraction=0.25, seed=1,
                          net=ReconNetConfig(depth=2, base_channels=16))
        sample = generate_phantom(source_spec(32), 3)
        state = init_state(cfg)
        state.epoch = 4  # hold the schedule at its peak: constant lr_max
        first = train_step(state, sample)
        for _ in range(199):
            last = train_step(state, sample)
        assert last < 0.2 * first


class TestTrain:
    def test_epochs_zero_keeps_init(self):
        cfg = tiny_config(epochs=0)
        state = train(cfg, tiny_dataset(4))
        fresh = init_state(cfg)
        assert all(np.array_equal(a, b) for a, b in zip(state.params, fresh.params))

    def test_noise_isolation_bit_identical(self):
        """apply_prob=0 runs match kind=None runs exactly at the same seed."""
        ds = tiny_dataset(5)
        cfg_none = tiny_config(epochs=3, noise=NoiseConfig(kind=NoiseKind.NONE, t_warmup=1))
        cfg_gated = tiny_config(epochs=3, noise=NoiseConfig(
            kind=NoiseKind.TRAJECTORY, apply_prob=0.0, t_warmup=1))
        s1 = train(cfg_none, ds)
        s2 = train(cfg_gated, ds)
        assert all(np.array_equal(a, b) for a, b in zip(s1.params, s2.params))
        assert [r["mean_loss"] for r in s1.metrics] == [r["mean_loss"] for r in s2.metrics]

    def test_gap_schedule_applied(self):
        cfg = tiny_config(sampling=Sampling.RADIAL, trajectory_learning=True,
                          epochs=6, initial_gap=4)
        state = train(cfg, tiny_dataset(4))
        gaps = [row["gap"] for row in state.metrics]
        assert gaps[0] == 4
        assert gaps[-1] == 1
        assert all(a >= b for a, b in zip(gaps, gaps[1:]))

    def test_noise_log_and_metrics_shapes(self):
        ds = tiny_dataset(5)
        cfg = tiny_config(epochs=2, noise=NoiseConfig(kind=NoiseKind.IMAGE, t_warmup=1))
        state = train(cfg, ds)
        n_train = len(ds) - round(cfg.val_fraction * len(ds))
        assert len(state.noise_log) == cfg.epochs * n_train
        assert len(state.metrics) == cfg.epochs

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train(tiny_config(), [])

    def test_adversarial_radial_runs(self):
        cfg = tiny_config(sampling=Sampling.RADIAL, epochs=3,
                          noise=NoiseConfig(kind=NoiseKind.TRAJECTORY_ADV,
                                            t_warmup=1, apply_prob=1.0))
        state = train(cfg, tiny_dataset(4))
        assert any(r["applied"] for r in state.noise_log)

    def test_adversarial_cartesian_runs(self):
        cfg = tiny_config(epochs=3, noise=NoiseConfig(
            kind=NoiseKind.TRAJECTORY_ADV, t_warmup=1, apply_prob=1.0, num_bits=2))
        state = train(cfg, tiny_dataset(4))
        assert any(r["applied"] for r in state.noise_log)

    def test_best_checkpoint_tracks_validation(self):
        cfg = tiny_config(epochs=4, val_fraction=0.25)
        state = train(cfg, tiny_dataset(8))
        vals = [r["val_psnr"] for r in state.metrics]
        assert state.best_val_psnr == pytest.approx(max(vals))
