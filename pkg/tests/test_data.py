import math

import numpy as np
import pytest

from earlypcr.data import (BLUEPRINT, DRUGS, AugmentSpec, augment, draw_batch, draw_epoch,
                           encode_tabular, fit_age_normalizer, flip, read_cohort, rotate_axial,
                           sampler_weights, stratified_nested_folds, synth_cohort, write_cohort)
from earlypcr.data.io import MAGIC, encode_volume_bytes, read_volume
from earlypcr.errors import (CohortFormatError, CohortValidationError, DataError,
                             StratificationError)
from earlypcr.evalstat import auroc


@pytest.fixture(scope="module")
def cohort624():
    return synth_cohort(624, dim=16, seed=0)


class TestGenerator:
    def test_deterministic(self):
        a, b = synth_cohort(24, dim=8, seed=5), synth_cohort(24, dim=8, seed=5)
        for ra, rb in zip(a, b):
            assert all(ra.volumes[t].tobytes() == rb.volumes[t].tobytes() for t in ra.volumes)
            assert (ra.id, ra.label, ra.drugs, ra.age) == (rb.id, rb.label, rb.drugs, rb.age)

    def test_seed_changes_cohort(self):
        a, b = synth_cohort(24, dim=8, seed=5), synth_cohort(24, dim=8, seed=6)
        assert any(ra.label != rb.label or ra.drugs != rb.drugs for ra, rb in zip(a, b))

    def test_positive_count(self, cohort624):
        assert abs(sum(r.label for r in cohort624) - 213) <= 13

    def test_t2_mask_volume_beats_t0(self, cohort624):
        y = [r.label for r in cohort624]

        def shrinkage(tp):  # smaller tumours respond, so score by negative volume
            return [-r.volumes[tp][2].sum() for r in cohort624]

        assert auroc(shrinkage("T2"), y) > auroc(shrinkage("T0"), y)

    def test_volume_invariants(self, small_cohort):
        for r in small_cohort:
            for vol in r.volumes.values():
                assert vol.shape == (3, 8, 8, 8)
                assert set(np.unique(vol[2])) <= {0.0, 1.0}
                assert np.all(np.isfinite(vol))

    def test_too_small(self):
        with pytest.raises(StratificationError):
            synth_cohort(10, dim=8)

    def test_dim_too_small(self):
        with pytest.raises(ValueError):
            synth_cohort(40, dim=4)


class TestTabular:
    def test_drug_multi_hot(self, small_cohort):
        rec = small_cohort[0]
        rec = type(rec)(**{**rec.__dict__, "drugs": ("Paclitaxel", "Trastuzumab")})
        enc = encode_tabular(rec)
        drugs = enc.clinical[:12]
        assert drugs.sum() == 2
        assert drugs[DRUGS.index("Paclitaxel")] == 1 and drugs[DRUGS.index("Trastuzumab")] == 1

    def test_status_codes(self, small_cohort):
        rec = type(small_cohort[0])(**{**small_cohort[0].__dict__, "hr": "Positive",
                                       "her2": "Negative"})
        assert tuple(encode_tabular(rec).subtype[:2]) == (0.0, 1.0)

    def test_blueprint_one_hot(self, small_cohort):
        rec = type(small_cohort[0])(**{**small_cohort[0].__dict__, "blueprint": "Luminal"})
        assert BLUEPRINT == ("Basal", "HER2", "Luminal")
        assert tuple(encode_tabular(rec).subtype[5:]) == (0.0, 0.0, 1.0)

    def test_dimensions_and_blocks(self, small_cohort):
        norm = fit_age_normalizer(small_cohort)
        for r in small_cohort:
            enc = encode_tabular(r, norm)
            assert enc.clinical.shape == (20,) and enc.subtype.shape == (8,)
            assert enc.clinical[:12].sum() >= 1
            assert enc.clinical[13:18].sum() == 1 and enc.clinical[18:20].sum() == 1
            assert enc.subtype[5:].sum() == 1
            assert set(enc.subtype[:5]) <= {0.0, 1.0}

    def test_age_slot_empty_without_normalizer(self, small_cohort):
        assert math.isnan(encode_tabular(small_cohort[0]).clinical[12])

    def test_unknown_category_named(self, small_cohort):
        rec = type(small_cohort[0])(**{**small_cohort[0].__dict__, "race": "Martian"})
        with pytest.raises(DataError, match="race 'Martian'"):
            encode_tabular(rec)
        rec = type(small_cohort[0])(**{**small_cohort[0].__dict__, "drugs": ("Aspirin",)})
        with pytest.raises(DataError, match="drug 'Aspirin'"):
            encode_tabular(rec)


class TestAgeNormalizer:
    @staticmethod
    def recs(ages, template):
        return [type(template)(**{**template.__dict__, "age": a}) for a in ages]

    def test_population_std(self, small_cohort):
        norm = fit_age_normalizer(self.recs([40, 50, 60], small_cohort[0]))
        assert norm.mean == 50
        assert norm.std == pytest.approx(8.164966, abs=1e-6)
        assert norm.apply(40) == pytest.approx(-1.224745, abs=1e-6)
        assert norm.apply(norm.mean) == 0

    def test_zero_std(self, small_cohort):
        with pytest.raises(DataError, match="zero std"):
            fit_age_normalizer(self.recs([50, 50], small_cohort[0]))

    def test_order_invariant_exactly(self, small_cohort):
        rng = np.random.default_rng(0)
        ages = rng.uniform(20, 80, size=50)
        a = fit_age_normalizer(self.recs(ages, small_cohort[0]))
        b = fit_age_normalizer(self.recs(rng.permutation(ages), small_cohort[0]))
        assert a == b

    def test_held_out_ages_do_not_move_statistics(self, small_cohort):
        plan = stratified_nested_folds([r.id for r in small_cohort],
                                       [r.label for r in small_cohort], 5, 0)
        train_ids, val_ids, _ = plan.split(0, 0)
        by_id = {r.id: r for r in small_cohort}
        norm = fit_age_normalizer([by_id[i] for i in train_ids])
        perturbed = {i: type(by_id[i])(**{**by_id[i].__dict__, "age": 99.0}) for i in val_ids}
        again = fit_age_normalizer([perturbed.get(i, by_id[i]) for i in train_ids])
        assert norm == again


class TestAugment:
    def test_identity(self, small_cohort):
        vol = small_cohort[0].volumes["T0"]
        spec = AugmentSpec(flip_p=0.0, max_angle=0.0, noise=False)
        assert augment(vol, spec, np.random.default_rng(0)).tobytes() == vol.tobytes()

    def test_flip_involution(self, small_cohort):
        vol = small_cohort[0].volumes["T1"]
        assert flip(flip(vol)).tobytes() == vol.tobytes()

    def test_flip_is_left_right(self, small_cohort):
        vol = small_cohort[0].volumes["T1"]
        np.testing.assert_array_equal(flip(vol), vol[..., ::-1])

    def test_rotate_180_matches_double_flip(self, rng):
        vol = rng.normal(size=(3, 4, 9, 9))
        vol[2] = (vol[2] > 0).astype(float)
        out = rotate_axial(vol, 180.0)
        ref = vol[:, :, ::-1, ::-1]
        interior = (slice(None), slice(None), slice(1, -1), slice(1, -1))
        assert np.max(np.abs(out[interior] - ref[interior])) <= 1e-9

    def test_rotation_keeps_mask_binary(self, rng, small_cohort):
        out = rotate_axial(small_cohort[1].volumes["T0"], 33.0)
        assert set(np.unique(out[2])) <= {0.0, 1.0}

    def test_shape_and_finiteness(self, small_cohort):
        spec = AugmentSpec()
        rng = np.random.default_rng(0)
        for r in small_cohort[:10]:
            out = augment(r.volumes["T0"], spec, rng)
            assert out.shape == r.volumes["T0"].shape and np.all(np.isfinite(out))

    def test_noise_only_on_enhancement_channels(self, small_cohort):
        vol = small_cohort[0].volumes["T0"]
        spec = AugmentSpec(flip_p=0.0, max_angle=0.0, noise=True)
        out = augment(vol, spec, np.random.default_rng(1))
        assert out[2].tobytes() == vol[2].tobytes()
        assert np.std(out[:2] - vol[:2]) == pytest.approx(0.3, rel=0.05)

    def test_same_stream_same_result(self, small_cohort):
        vol = small_cohort[0].volumes["T0"]
        a = augment(vol, AugmentSpec(), np.random.default_rng(3))
        b = augment(vol, AugmentSpec(), np.random.default_rng(3))
        assert a.tobytes() == b.tobytes()


class TestSampler:
    def test_weights(self):
        w = sampler_weights([1] * 3 + [0] * 9)
        assert np.allclose(w[:3], 1 / 3) and np.allclose(w[3:], 1 / 9)
        assert w[:3].sum() / w.sum() == pytest.approx(0.5)

    def test_balanced_is_uniform(self):
        w = sampler_weights([0, 1] * 5)
        assert np.all(w == w[0])

    def test_single_class(self):
        with pytest.raises(DataError, match="both classes"):
            sampler_weights([1, 1, 1])

    def test_positive_frequency(self):
        labels = np.array([1] * 213 + [0] * 411)
        idx = draw_batch(sampler_weights(labels), 100_000, np.random.default_rng(0))
        assert 0.48 <= labels[idx].mean() <= 0.52

    def test_epoch_batches(self):
        batches = draw_epoch(sampler_weights([0, 1] * 70), 64, np.random.default_rng(0))
        assert [len(b) for b in batches] == [64, 64, 12]


class TestFolds:
    @pytest.fixture
    def plan(self):
        labels = [1] * 213 + [0] * 411
        return stratified_nested_folds([f"P{i}" for i in range(624)], labels, 5, 0), labels

    def test_per_fold_class_counts(self, plan):
        plan, labels = plan
        y = dict(zip(plan.ids, labels))
        for f in range(5):
            test = plan.test_ids(f)
            pos = sum(y[i] for i in test)
            assert pos in (42, 43) and len(test) - pos in (82, 83)

    def test_partition(self, plan):
        plan, _ = plan
        seen = [i for f in range(5) for i in plan.test_ids(f)]
        assert sorted(seen) == sorted(plan.ids)

    def test_inner_rotations(self, plan):
        plan, _ = plan
        for f in range(5):
            rots = plan.rotations(f)
            assert len(rots) == 4
            assert sorted(v for _, v in rots) == sorted(set(range(5)) - {f})
            for train, val in rots:
                assert len(train) == 3 and val not in train and f not in train
            for j in range(4):
                tr, va, te = plan.split(f, j)
                assert not (set(tr) & set(va)) and not (set(tr + va) & set(te))
                assert len(tr) + len(va) + len(te) == 624

    def test_deterministic(self):
        labels = [1] * 10 + [0] * 20
        ids = [str(i) for i in range(30)]
        assert stratified_nested_folds(ids, labels, 5, 1) == stratified_nested_folds(ids, labels, 5, 1)

    def test_insufficient_classes(self):
        with pytest.raises(StratificationError):
            stratified_nested_folds([str(i) for i in range(20)], [1] * 4 + [0] * 16, 5, 0)


class TestIO:
    def test_round_trip(self, small_cohort, tmp_path):
        write_cohort(small_cohort, tmp_path)
        back = read_cohort(tmp_path)
        assert len(back) == len(small_cohort)
        for a, b in zip(small_cohort, back):
            assert (a.id, a.label, sorted(a.drugs), a.age, a.race, a.blueprint) == \
                   (b.id, b.label, sorted(b.drugs), b.age, b.race, b.blueprint)
            for tp in a.volumes:
                assert a.volumes[tp].tobytes() == b.volumes[tp].tobytes()

    def test_truncated_volume(self, small_cohort, tmp_path):
        write_cohort(small_cohort[:25], tmp_path)
        f = tmp_path / "volumes" / f"{small_cohort[3].id}_T1.lpv"
        f.write_bytes(f.read_bytes()[:-7])
        with pytest.raises(CohortFormatError, match="truncated payload at byte"):
            read_cohort(tmp_path)

    def test_bad_magic(self, tmp_path):
        f = tmp_path / "x.lpv"
        f.write_bytes(b"NOPE" + encode_volume_bytes(np.zeros((3, 2, 2, 2)))[4:])
        with pytest.raises(CohortFormatError, match="bad magic at byte 0"):
            read_volume(f)
        assert encode_volume_bytes(np.zeros((3, 2, 2, 2)))[:4] == MAGIC

    def test_missing_t1_names_patient(self, small_cohort, tmp_path):
        write_cohort(small_cohort[:25], tmp_path)
        manifest = tmp_path / "manifest.jsonl"
        lines = manifest.read_text().splitlines()
        victim = small_cohort[4].id
        lines[4] = lines[4].replace('"T1": "volumes/%s_T1.lpv", ' % victim, "")
        manifest.write_text("\n".join(lines) + "\n")
        with pytest.raises(CohortValidationError, match=victim):
            read_cohort(tmp_path)

    def test_malformed_manifest_reports_offset(self, small_cohort, tmp_path):
        write_cohort(small_cohort[:25], tmp_path)
        manifest = tmp_path / "manifest.jsonl"
        text = manifest.read_text()
        first = text.index("\n") + 1
        manifest.write_text(text[:first] + "{broken\n" + text[first:])
        with pytest.raises(CohortFormatError, match=f"at byte {first}"):
            read_cohort(tmp_path)
