"""Tests of the synthetic corpus generator."""

import numpy as np
import pytest # type:ignore

from dexgroup.classifier import (
    Hyperparameters,
    Label,
)
from dexgroup.corpus import (
    CorpusManifest,
    ingest,
)
from dexgroup.evaluation import sweep
from dexgroup.exceptions import InvalidSpec
from dexgroup.extractor import extract_from_dex
from dexgroup.grouping import (
    GroupId,
    assign_groups,
)
from dexgroup.opcodes import OPCODE_COUNT
from dexgroup.selection import (
    compute_profile,
    rank_features,
    top_n,
)
from dexgroup.synthetic import (
    ClassMeans,
    GroupSpec,
    FIELD_GROUP_SIZES,
    PERMISSION_TEMPLATES,
    SyntheticSpec,
    generate_synthetic,
    materialize,
    synthetic_corpus,
)

from . import ASSIGNED


def flat_means(value, **overrides):
    means = [0.0] * OPCODE_COUNT
    for op in ASSIGNED:
        means[op] = float(value)
    for op, mean in overrides.items():
        means[int(op[1:], 16)] = float(mean)
    return tuple(means)


def sms_spec(n_benign=3, n_malicious=3, **kwargs):
    means = ClassMeans(flat_means(1, x1a=2), flat_means(1, x1a=9))
    return SyntheticSpec(
        (GroupSpec(GroupId.SMS, n_benign, n_malicious, means, PERMISSION_TEMPLATES[GroupId.SMS]),),
        **kwargs
    )


class TestSyntheticSpec(object):

    def test_permission_templates_match_their_groups(self):
        for group, permissions in PERMISSION_TEMPLATES.items():
            assert assign_groups(permissions, include_sensors=True) == frozenset([group])

    @pytest.mark.parametrize(
        "kwargs",
        [dict(dispersion=-0.1), dict(dispersion=float("nan")), dict(seed=-1)],
    )
    def test_bad_parameters(self, kwargs):
        with pytest.raises(InvalidSpec):
            sms_spec(**kwargs)

    def test_invalid_spec_is_a_value_error(self):
        with pytest.raises(ValueError):
            sms_spec(dispersion=-1)

    def test_no_groups(self):
        with pytest.raises(InvalidSpec):
            SyntheticSpec(())

    def test_group_listed_twice(self):
        group = sms_spec().groups[0]
        with pytest.raises(InvalidSpec):
            SyntheticSpec((group, group))

    def test_negative_count(self):
        with pytest.raises(InvalidSpec):
            sms_spec(n_benign=-1)

    @pytest.mark.parametrize(
        "means",
        [
            (1.0,) * 10,
            flat_means(1, x00=-1),
            flat_means(1, x00=float("inf")),
            # 0x3e is unused.
            flat_means(1, x3e=1),
        ],
    )
    def test_bad_means(self, means):
        group = GroupSpec(
            GroupId.SMS, 1, 1, ClassMeans(means, flat_means(1)), PERMISSION_TEMPLATES[GroupId.SMS]
        )
        with pytest.raises(InvalidSpec):
            SyntheticSpec((group,))

    def test_permissions_must_match_group(self):
        means = ClassMeans(flat_means(1), flat_means(1))
        with pytest.raises(InvalidSpec):
            SyntheticSpec(
                (GroupSpec(GroupId.CAMERA, 1, 1, means, PERMISSION_TEMPLATES[GroupId.SMS]),)
            )

    def test_benchmark(self):
        spec = SyntheticSpec.benchmark()
        assert [g.group for g in spec.groups] == [g for g in GroupId if g is not GroupId.SENSORS]
        assert spec.size == 9 * 83 * 2
        planted = spec.planted_opcodes()
        assert all(len(ops) == 10 for ops in planted.values())
        # Every group gets its own planted opcodes.
        every = [op for ops in planted.values() for op in ops]
        assert len(set(every)) == len(every)
        for group in spec.groups:
            gaps = np.array(group.means.malicious) - np.array(group.means.benign)
            assert sorted(np.flatnonzero(gaps).tolist()) == list(group.planted)
            assert set(gaps[list(group.planted)].tolist()) == {20.0}

    def test_field_shaped(self):
        spec = SyntheticSpec.field_shaped(scale=0.1)
        sizes = {g.group: (g.n_malicious, g.n_benign) for g in spec.groups}
        assert sizes[GroupId.CALENDAR] == (7, 7)
        assert sizes[GroupId.PHONE] == (497, 183)
        assert set(sizes) == set(FIELD_GROUP_SIZES)

    def test_field_shaped_keeps_groups_splittable(self):
        spec = SyntheticSpec.field_shaped(scale=0.001)
        assert min(min(g.n_benign, g.n_malicious) for g in spec.groups) == 2

    @pytest.mark.parametrize("scale", [0.0, -1.0])
    def test_field_shaped_bad_scale(self, scale):
        with pytest.raises(InvalidSpec):
            SyntheticSpec.field_shaped(scale=scale)

    def test_too_many_planted(self):
        with pytest.raises(InvalidSpec):
            SyntheticSpec.planted_gap({GroupId.SMS: (2, 2)}, planted_per_group=300)


class TestGenerate(object):

    def test_zero_dispersion_gives_the_means(self):
        apps = generate_synthetic(sms_spec(dispersion=0.0))
        assert len(apps) == 6
        for app in apps:
            expected = 9 if app.label is Label.MALICIOUS else 2
            assert app.histogram[0x1A] == expected
            assert app.histogram[0x00] == 1
            assert app.histogram[0x3E] == 0

    def test_order_and_ids(self):
        apps = generate_synthetic(sms_spec(2, 1))
        assert [a.app_id for a in apps] == ["sms-benign-0000", "sms-benign-0001", "sms-malicious-0000"]
        assert all(a.group is GroupId.SMS for a in apps)
        assert all(assign_groups(a.permissions) == {GroupId.SMS} for a in apps)

    def test_deterministic(self):
        spec = SyntheticSpec.benchmark(seed=3, apps_per_class=4)
        assert generate_synthetic(spec) == generate_synthetic(spec)
        other = generate_synthetic(SyntheticSpec.benchmark(seed=4, apps_per_class=4))
        assert [a.histogram for a in generate_synthetic(spec)] != [a.histogram for a in other]

    def test_class_means_are_approached(self):
        spec = SyntheticSpec.planted_gap({GroupId.SMS: (400, 400)}, seed=2, dispersion=0.1)
        apps = generate_synthetic(spec)
        group = spec.groups[0]
        for label in Label:
            counts = np.array([a.histogram.as_array() for a in apps if a.label is label])
            expected = np.array(group.means.of(label))
            used = expected > 0
            assert np.all(counts[:, ~used] == 0)
            observed = counts.mean(axis=0)
            assert np.all(np.abs(observed[used] - expected[used]) <= 0.05 * expected[used])

    def test_planted_opcodes_rank_first(self):
        spec = SyntheticSpec.benchmark(seed=1, apps_per_class=40)
        corpus = synthetic_corpus(spec)
        for group in spec.groups:
            bucket = corpus.bucket(group.group)
            assert len(bucket) == 80
            ranking = rank_features(
                compute_profile(
                    [a.histogram for a in bucket if a.label is Label.BENIGN],
                    [a.histogram for a in bucket if a.label is Label.MALICIOUS],
                )
            )
            assert sorted(top_n(ranking, 10)) == list(group.planted)

    def test_benchmark_is_learnable(self):
        corpus = synthetic_corpus(SyntheticSpec.benchmark())
        report = sweep(corpus, kinds=("forest",), n_list=(10,), hyper=Hyperparameters(n_trees=25))
        assert report.skipped_cells() == []
        for best in report.best_per_group().values():
            assert best.accuracy >= 95.0


class TestMaterialize(object):

    @pytest.mark.parametrize("binary_manifest", [False, True])
    def test_ingest_gives_back_the_generated_apps(self, tmp_path, binary_manifest):
        spec = SyntheticSpec.planted_gap(
            {GroupId.SMS: (3, 3), GroupId.CALENDAR: (2, 2)}, seed=5, dispersion=0.5
        )
        apps = generate_synthetic(spec)
        manifest = materialize(apps, tmp_path, emit_dex=True, binary_manifest=binary_manifest)
        assert len(manifest) == 10
        assert (tmp_path / "manifest.tsv").exists()

        result = ingest(CorpusManifest.read(tmp_path / "manifest.tsv"))
        assert result.quarantine == []
        assert list(result.corpus) == [a.extracted() for a in apps]

        # The DEX file says the same thing as the smali.
        for app in apps:
            dex = (tmp_path / "apps" / app.app_id / "classes.dex").read_bytes()
            assert extract_from_dex(dex) == app.histogram

    def test_layout(self, tmp_path):
        apps = generate_synthetic(sms_spec(1, 0, dispersion=0.0))
        materialize(apps, tmp_path, methods_per_app=3)
        app_dir = tmp_path / "apps" / "sms-benign-0000"
        assert (app_dir / "AndroidManifest.xml").read_bytes().startswith(b"<?xml")
        smali = app_dir / "smali" / "com" / "example" / "sms_benign_0000" / "Main.smali"
        text = smali.read_text()
        assert text.count(".method ") == 3
        assert not (app_dir / "classes.dex").exists()
