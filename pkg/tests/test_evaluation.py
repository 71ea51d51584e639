import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kdg.acquisition import Sampling
from kdg.data import PhantomDomain, generate_phantom, source_spec, target_spec
from kdg.evaluation import (
    EvalRecord,
    ModelTag,
    TrainedModel,
    cross_domain_matrix,
    evaluate_model,
    paired_diff,
    psnr,
)
from kdg.network import ReconNet, ReconNetConfig, init_params
from kdg.perturb import NoiseKind
from kdg.trajectory import make_fixed_cartesian


class TestPSNR:
    def test_constant_offsets(self, rng):
        gt = rng.random((8, 8))
        assert psnr(gt + 0.1, gt) == pytest.approx(20.0, abs=1e-9)
        assert psnr(gt + 0.01, gt) == pytest.approx(40.0, abs=1e-9)

    def test_identical_capped(self, rng):
        gt = rng.random((8, 8))
        assert psnr(gt, gt) == 100.0

    def test_near_identical_capped(self, rng):
        gt = rng.random((8, 8))
        assert psnr(gt + 1e-9, gt) == 100.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_permutation_invariant(self, rng):
        gt = rng.random(64)
        pred = gt + rng.normal(0, 0.05, 64)
        perm = rng.permutation(64)
        assert psnr(pred.reshape(8, 8), gt.reshape(8, 8)) == pytest.approx(
            psnr(pred[perm].reshape(8, 8), gt[perm].reshape(8, 8)), abs=1e-12)

    @given(seed=st.integers(0, 100), s1=st.floats(0.01, 0.3), s2=st.floats(0.01, 0.3))
    @settings(max_examples=30)
    def test_strictly_decreasing_in_mse(self, seed, s1, s2):
        rng = np.random.default_rng(seed)
        gt = rng.random((8, 8))
        noise = rng.standard_normal((8, 8))
        lo, hi = sorted([s1, s2])
        if lo == hi:
            return
        assert psnr(gt + hi * noise, gt) < psnr(gt + lo * noise, gt)


def _record(sid, value, model="m", domain=PhantomDomain.SOURCE):
    return EvalRecord(sid, domain, model, value)


class TestPairedDiff:
    def test_equal_records_zero(self):
        a = [_record(i, 30.0, "a") for i in range(5)]
        b = [_record(i, 30.0, "b") for i in range(5)]
        rep = paired_diff(a, b)
        assert rep.mean_diff == 0.0 and rep.std_diff == 0.0 and rep.n == 5

    def test_population_std(self):
        a = [_record(0, 31.0, "a"), _record(1, 29.0, "a")]
        b = [_record(0, 30.0, "b"), _record(1, 30.0, "b")]
        rep = paired_diff(a, b)
        assert rep.mean_diff == 0.0
        assert rep.std_diff == 1.0  # population, not sample, std

    def test_antisymmetric(self, rng):
        a = [_record(i, float(rng.random() * 10 + 25), "a") for i in range(10)]
        b = [_record(i, float(rng.random() * 10 + 25), "b") for i in range(10)]
        ab = paired_diff(a, b)
        ba = paired_diff(b, a)
        assert ab.mean_diff == pytest.approx(-ba.mean_diff, abs=1e-12)
        assert ab.std_diff == pytest.approx(ba.std_diff, abs=1e-12)

    def test_intersection_only(self):
        a = [_record(i, 30.0, "a") for i in (1, 2, 3)]
        b = [_record(i, 28.0, "b") for i in (2, 3, 4)]
        rep = paired_diff(a, b)
        assert rep.n == 2 and rep.mean_diff == pytest.approx(2.0)

    def test_empty_intersection(self):
        with pytest.raises(ValueError):
            paired_diff([_record(1, 30.0)], [_record(2, 30.0)])


def _identityish_model(size=16, noise=NoiseKind.NONE, tl=False):
    cfg = ReconNetConfig(depth=2, base_channels=4)
    net = ReconNet(cfg)
    tag = ModelTag(Sampling.CARTESIAN, tl, noise)
    mask = make_fixed_cartesian(size, size, 0.1, 0)  # all lines: identity acquisition
    return TrainedModel(tag, net, init_params(cfg, 0), mask=mask)


class TestEvaluateModel:
    def test_record_count(self):
        model = _identityish_model()
        dataset = [generate_phantom(source_spec(16), i) for i in range(7)]
        records = evaluate_model(model, dataset)
        assert len(records) == 7
        assert {r.sample_id for r in records} == set(range(7))

    def test_bypass_net_with_full_mask_hits_cap(self):
        # all-lines mask makes the zero-filled input equal gt, so PSNR caps
        model = _identityish_model()
        dataset = [generate_phantom(source_spec(16), i) for i in range(3)]
        records = evaluate_model(model, dataset, bypass_net=True)
        assert all(r.psnr == 100.0 for r in records)

    def test_zero_filled_baseline_below_cap_when_undersampled(self):
        model = _identityish_model()
        mask4 = make_fixed_cartesian(16, 4, 0.1, 0)
        dataset = [generate_phantom(source_spec(16), i) for i in range(3)]
        records = evaluate_model(model, dataset, trajectory_override=mask4, bypass_net=True)
        assert all(r.psnr < 100.0 for r in records)

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            evaluate_model(_identityish_model(), [])


class TestCrossDomainMatrix:
    def _datasets(self, n=4):
        return {
            PhantomDomain.SOURCE: [generate_phantom(source_spec(16), i) for i in range(n)],
            PhantomDomain.TARGET: [generate_phantom(target_spec(16), i) for i in range(n)],
        }

    def test_identical_datasets_identical_cells(self):
        model = _identityish_model()
        ds = [generate_phantom(source_spec(16), i) for i in range(4)]
        result = cross_domain_matrix([model], {PhantomDomain.SOURCE: ds, PhantomDomain.TARGET: ds})
        means = {c.domain: c.mean_psnr for c in result.cells}
        assert means[PhantomDomain.SOURCE] == means[PhantomDomain.TARGET]

    def test_cell_recompute(self):
        model = _identityish_model()
        result = cross_domain_matrix([model], self._datasets())
        for cell in result.cells:
            values = np.array([r.psnr for r in cell.records])
            assert cell.mean_psnr == pytest.approx(values.mean(), abs=1e-12)
            assert cell.std_psnr == pytest.approx(values.std(), abs=1e-12)

    def test_tl_pairing_sign_convention(self):
        # model_a is the no-TL variant: a better TL twin means a negative mean
        no_tl = _identityish_model(tl=False)
        tl = _identityish_model(tl=True)
        result = cross_domain_matrix([no_tl, tl], self._datasets())
        pairs = result.tl_pairs[PhantomDomain.TARGET]
        assert len(pairs) == 1
        assert pairs[0].model_a == str(no_tl.tag)
        assert pairs[0].model_b == str(tl.tag)

    def test_noise_pairing_families(self):
        models = [_identityish_model(noise=k) for k in
                  (NoiseKind.NONE, NoiseKind.IMAGE, NoiseKind.TRAJECTORY,
                   NoiseKind.TRAJECTORY_ADV)]
        result = cross_domain_matrix(models, self._datasets())
        pairs = result.noise_pairs[PhantomDomain.SOURCE]
        assert len(pairs) == 3  # each noise kind vs the clean baseline
        assert all(p.model_b.endswith("-none") for p in pairs)

    def test_requires_models_and_datasets(self):
        with pytest.raises(ValueError):
            cross_domain_matrix([], self._datasets())
        with pytest.raises(ValueError):
            cross_domain_matrix([_identityish_model()], {})
