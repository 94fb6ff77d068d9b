"""Acceptance suite: one test per release criterion, each printing PASS/FAIL.

The per-criterion lines bypass pytest's capture (via ``capfd.disabled``) so
they appear in any logged run.  Tolerances are pinned here and nowhere
else; the real crash data is not redistributable, so end-to-end criteria
run on the bundled synthetic generator.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from severitas import autodiff as ad
from severitas.armnet import ArmNetConfig, armnet_forward, armnet_init
from severitas.ingest import (Dataset, RawTable, SchemaConfig, SplitSpec, fit_schema,
                              stratified_assignment, transform)
from severitas.mambanet import MambaNetConfig, mambanet_forward, mambanet_init
from severitas.pipeline import PipelineConfig, run_evaluate, run_ingest, run_resample, run_train
from severitas.reporting import classwise_metrics, confusion, evaluate_model
from severitas.resample import ResampleConfig, enn_edit, smote_oversample, smoteenn
from severitas.synth import SynthSpec, generate_rows, header, schema_config_dict, write_dataset
from severitas.training import (EarlyStopState, SchedulerState, build_hyperparams,
                                plateau_step, random_search, train_model)

from helpers import (central_diff_check, enn_removal_oracle, jitter_arrays, model_gradients,
                     point_on_segment, random_batch, small_schema, sparsemax_oracle)


@pytest.fixture
def criterion(capfd):
    """Context manager printing one visible [PASS]/[FAIL] line per criterion."""

    @contextmanager
    def _criterion(name):
        try:
            yield
        except Exception:
            with capfd.disabled():
                print(f"[FAIL] {name}", flush=True)
            raise
        with capfd.disabled():
            print(f"[PASS] {name}", flush=True)

    return _criterion


def synth_dataset(spec: SynthSpec, split_seed: int):
    """Generator output -> encoded Dataset with split tags (fit on train only)."""
    cols = header()
    raw = RawTable(columns=cols, rows=[dict(zip(cols, r)) for r in generate_rows(spec)])
    for r in raw.rows:
        for num in ("speed_limit", "rider_age", "traffic_volume"):
            r[num] = float(r[num])
    config = SchemaConfig(columns=schema_config_dict()["columns"])
    y = np.array([{"KA": 0, "BC": 1, "O": 2}[r["severity"]] for r in raw.rows])
    tags = stratified_assignment(y, SplitSpec(seed=split_seed))
    schema = fit_schema(raw.subset([i for i, t in enumerate(tags) if t == "train"]), config)
    ds, _ = transform(raw, schema)
    return schema, Dataset(ds.X, ds.y, split=tags)


# ---------------------------------------------------------------------------
# 1. gradient suite (double precision, h=1e-5, rel err <= 1e-4, 100 seeds, <2min)
# ---------------------------------------------------------------------------

def _primitive_composite_check(seed):
    """One graph through every primitive family; FD-checked leaf by leaf."""
    rng = np.random.default_rng(seed)
    arrays = {
        "w": rng.normal(size=(3, 4)) * 0.7,
        "x": rng.normal(size=(2, 3)),
        "conv_w": rng.normal(size=(2, 1, 3)) * 0.7,
        "wx": rng.normal(size=(2, 8)) * 0.5,  # lstm input = the conv's 2 channels
        "wh": rng.normal(size=(2, 8)) * 0.5,
        "b": rng.normal(size=8) * 0.5,
        "scores": rng.normal(size=(2, 4)) * 2.0,
    }
    labels = rng.integers(0, 3, size=2)

    def build(tape=None):
        t = ({k: ad.Tensor(v) for k, v in arrays.items()} if tape is None
             else {k: tape.leaf(v, k) for k, v in arrays.items()})
        h = ad.matmul(t["x"], t["w"])                                   # matmul
        h = ad.add(ad.relu(h), ad.exp(ad.mul(h, 0.1)))                  # relu/exp/mul/add
        h = ad.add(h, ad.log(ad.add(ad.sigmoid(h), 0.5)))               # sigmoid/log
        conv = ad.conv1d(ad.reshape(h, (2, 1, 4)), t["conv_w"], padding=1)  # conv1d/reshape
        seq = ad.tanh(conv)                                             # tanh
        state = ad.LstmState.zeros(2, 2)
        for step in range(seq.data.shape[2]):                           # lstm scan
            x_t = ad.reshape(ad.slice_axis(seq, 2, step, step + 1), (2, 2))
            state = ad.lstm_cell(x_t, state, t["wx"], t["wh"], t["b"])
        attn = ad.sparsemax(t["scores"])                                # sparsemax
        mixed = ad.einsum("bf,bh->bfh", attn, state.h)                  # einsum
        flat = ad.concat([ad.reshape(mixed, (2, 8)), state.c], axis=1)  # concat
        flat = ad.dropout_apply(flat, 0.25, "train", np.random.default_rng(seed + 17))
        logits = ad.stack([ad.mean(flat), ad.mean(ad.mul(flat, flat)),
                           ad.mean(ad.mul(flat, 0.5))], axis=0)         # stack/mean
        return ad.cross_entropy_with_logits(ad.transpose(                # transpose/xent
            ad.stack([logits, ad.mul(logits, 0.9)], axis=1), (1, 0)), labels)

    tape = ad.GradTape()
    loss = build(tape)
    grads = ad.backward(tape, loss)
    analytic = {k: grads[nid] for k, nid in zip(arrays, tape.leaf_ids())}
    central_diff_check(lambda: float(build().data), arrays, analytic, h=1e-5, tol=1e-4)


def _full_model_check(kind, seed):
    schema = small_schema()
    rng = np.random.default_rng(seed)
    if kind == "armnet":
        params = armnet_init(ArmNetConfig(embed_dim=2, n_heads=2, n_interactions=2,
                                          hidden_dim=4, num_layers=2, dropout_rate=0.0),
                             schema, rng)
        forward = armnet_forward
    else:
        params = mambanet_init(MambaNetConfig(embed_channels=2, conv_out_channels=3,
                                              lstm_hidden=3, hidden_dims=(4, 3),
                                              dropout_rate=0.0), schema, rng)
        forward = mambanet_forward
    jitter_arrays(params.arrays, rng)  # leave exact ReLU kinks (measure zero otherwise)
    X = random_batch(schema, 4, rng)
    labels = rng.integers(0, 3, size=4)
    analytic = model_gradients(forward, params, X, labels)

    def loss():
        return float(ad.cross_entropy_with_logits(forward(X, params), labels).data)

    central_diff_check(loss, params.arrays, analytic, h=1e-5, tol=1e-4)


def test_gradient_suite(criterion):
    with criterion("gradient suite: primitives + both models, 100 seeds, <2min"):
        start = time.time()
        for seed in range(100):
            _primitive_composite_check(seed)
            _full_model_check("armnet", seed)
            _full_model_check("mambanet", seed)
        elapsed = time.time() - start
        assert elapsed < 120.0, f"gradient suite took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 2. sparsemax oracle: 10,000 vectors, dims 2..16, <=1e-9
# ---------------------------------------------------------------------------

def test_sparsemax_oracle_10k(criterion):
    with criterion("sparsemax oracle: 10,000 random vectors within 1e-9"):
        rng = np.random.default_rng(1234)
        checked = 0
        while checked < 10_000:
            dim = int(rng.integers(2, 17))
            batch = min(500, 10_000 - checked)
            z = rng.normal(scale=rng.uniform(0.2, 4.0), size=(batch, dim))
            p = ad.sparsemax(ad.Tensor(z)).data
            assert p.min() >= 0.0
            assert np.abs(p.sum(axis=1) - 1.0).max() <= 1e-9
            for row in range(batch):
                np.testing.assert_allclose(p[row], sparsemax_oracle(z[row]), atol=1e-9)
            checked += batch


# ---------------------------------------------------------------------------
# 3. resampler oracle: 50 seeded datasets, segments + exact ENN set + composition
# ---------------------------------------------------------------------------

def test_resampler_oracle_50_datasets(criterion):
    with criterion("resampler oracle: segments, exact ENN sets, stage composition (50 datasets)"):
        for seed in range(50):
            rng = np.random.default_rng(5000 + seed)
            n_classes = 2 + seed % 2
            counts = [0, 0, 0]
            active = rng.choice(3, size=n_classes, replace=False)
            sizes = sorted(rng.integers(15, 160, size=n_classes), reverse=True)
            for cls, size in zip(active, sizes):
                counts[cls] = int(size)
            if sum(counts) > 500:
                counts = [min(c, 160) for c in counts]
            dim = int(rng.integers(2, 6))
            xs, ys = [], []
            for cls in range(3):
                if counts[cls]:
                    center = rng.normal(scale=1.5, size=dim)
                    xs.append(center + rng.normal(scale=1.0, size=(counts[cls], dim)))
                    ys.append(np.full(counts[cls], cls, dtype=np.int64))
            ds = Dataset(X=np.vstack(xs), y=np.concatenate(ys))
            cfg = ResampleConfig(seed=0)

            oversampled, info = smote_oversample(ds, cfg, np.random.default_rng(seed))
            n0 = len(ds)
            for row, (base, nb, u) in enumerate(info.generators):
                assert 0.0 <= u < 1.0
                assert point_on_segment(oversampled.X[n0 + row], ds.X[base], ds.X[nb], tol=1e-9)
                assert ds.y[base] == ds.y[nb] == oversampled.y[n0 + row]
            np.testing.assert_array_equal(oversampled.X[:n0], ds.X)

            edited, _ = enn_edit(oversampled, cfg)
            removed_oracle = enn_removal_oracle(oversampled.X, oversampled.y, cfg.k_enn)
            kept = sorted(set(range(len(oversampled))) - removed_oracle)
            np.testing.assert_array_equal(edited.X, oversampled.X[kept])
            np.testing.assert_array_equal(edited.y, oversampled.y[kept])

            combined, report = smoteenn(ds, cfg, np.random.default_rng(seed))
            present = [c for c, n in ds.class_counts().items() if n > 0]
            assert report.before == {c: ds.class_counts()[c] for c in present}
            assert report.after_smote == {c: oversampled.class_counts()[c] for c in present}
            assert report.after_enn == {c: edited.class_counts()[c] for c in present}
            np.testing.assert_array_equal(combined.X, edited.X)


# ---------------------------------------------------------------------------
# 4. metrics oracle: 1,000 random matrices + the hand fixture
# ---------------------------------------------------------------------------

def test_metrics_oracle_1000(criterion):
    with criterion("metrics oracle: micro-recall identity + per-sample recount + hand fixture"):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            n = int(rng.integers(1, 60))
            labels = rng.integers(0, 3, size=n)
            preds = rng.integers(0, 3, size=n)
            cm = confusion(preds, labels)
            m = classwise_metrics(cm)
            # micro-averaged recall over classes == overall accuracy
            tp = int(np.trace(cm.counts))
            assert m.overall_accuracy == pytest.approx(tp / n, abs=1e-15)
            # direct per-sample recount, no matrix involved
            for ci, cls in enumerate(("KA", "BC", "O")):
                pred_c = sum(1 for p in preds if p == ci)
                true_c = sum(1 for t in labels if t == ci)
                hit_c = sum(1 for p, t in zip(preds, labels) if p == t == ci)
                assert m.per_class[cls]["precision"] == pytest.approx(
                    hit_c / pred_c if pred_c else 0.0, abs=1e-15)
                assert m.per_class[cls]["recall"] == pytest.approx(
                    hit_c / true_c if true_c else 0.0, abs=1e-15)
        fixture = classwise_metrics(confusion(np.array([0, 1, 1, 2]), np.array([0, 0, 1, 2])))
        assert fixture.per_class["KA"]["precision"] == 1.0
        assert fixture.per_class["KA"]["recall"] == 0.5
        assert f"{100 * fixture.per_class['KA']['f1']:.2f}" == "66.67"


# ---------------------------------------------------------------------------
# 5. end-to-end synthetic run: Table-I defaults, both models >= 90% test accuracy
# ---------------------------------------------------------------------------

def test_end_to_end_synthetic(criterion, tmp_path):
    with criterion("end-to-end synthetic: >=90% test accuracy, both models, <10min each"):
        data = tmp_path / "data"
        data.mkdir()
        write_dataset(data / "crashes.csv", data / "schema_config.json",
                      SynthSpec(counts={"KA": 600, "BC": 120, "O": 480}, seed=42))
        (tmp_path / "run.json").write_text(json.dumps({
            "input_csv": "data/crashes.csv", "schema_config": "data/schema_config.json",
            "out_dir": "out", "seed": 42}), encoding="utf-8")
        cfg = PipelineConfig.from_json_file(tmp_path / "run.json")
        run_ingest(cfg)
        run_resample(cfg)
        for model in ("armnet", "mambanet"):
            start = time.time()
            result = run_train(cfg, model)  # Table-I defaults: 50 epochs, lr 1e-3, batch 32
            payload = run_evaluate(cfg, model)
            elapsed = time.time() - start
            assert elapsed < 600.0, f"{model} took {elapsed:.0f}s"
            assert result.epochs_ran <= 50
            assert payload["overall_accuracy"] >= 0.90, \
                f"{model} test accuracy {payload['overall_accuracy']:.4f}"


# ---------------------------------------------------------------------------
# 6. imbalance benefit: minority recall up >= 5pp (5-seed average)
# ---------------------------------------------------------------------------

def test_imbalance_benefit(criterion):
    with criterion("imbalance benefit: SMOTEENN lifts minority recall >= 5pp (5 seeds)"):
        base_recalls, resampled_recalls = [], []
        for seed in range(5):
            spec = SynthSpec(counts={"KA": 300, "BC": 60, "O": 240}, seed=seed,
                             class_sep=0.6, informative_prob=0.5)
            schema, ds = synth_dataset(spec, split_seed=seed)
            train, val, test = ds.subset("train"), ds.subset("val"), ds.subset("test")
            hp = build_hyperparams("armnet", {"hidden_dim": 32, "num_layers": 2,
                                              "dropout_rate": 0.3}, epochs=12)
            for collect, tr in ((base_recalls, train), (resampled_recalls, None)):
                if tr is None:
                    tr, _ = smoteenn(train, ResampleConfig(seed=0),
                                     np.random.default_rng(seed + 1000))
                result = train_model("armnet", tr, val, hp, schema, seed=seed + 5)
                ev = evaluate_model("armnet", result.params, test)
                collect.append(ev.metrics.per_class["BC"]["recall"])
        lift = float(np.mean(resampled_recalls)) - float(np.mean(base_recalls))
        assert lift >= 0.05, f"minority recall lift {lift:+.3f}"


# ---------------------------------------------------------------------------
# 7. scheduler / early-stop rule traces
# ---------------------------------------------------------------------------

def test_scheduler_and_early_stop_traces(criterion):
    with criterion("scheduler/early-stop traces reproduce the rules exactly"):
        sched = SchedulerState(lr=1e-3)
        plateau_step(sched, 0.8)
        lrs = [plateau_step(sched, 0.8) for _ in range(6)]
        assert lrs == [1e-3] * 5 + [5e-4]

        stop = EarlyStopState(patience=10)
        arrays = {"w": np.zeros(1)}
        stopped_at = None
        for epoch in range(1, 100):
            val = 1.0 - 0.1 * epoch if epoch <= 7 else 0.35
            arrays["w"][0] = epoch
            if stop.update(val, epoch, arrays):
                stopped_at = epoch
                break
        assert stopped_at == 17
        assert stop.best_epoch == 7
        assert stop.snapshot["w"][0] == 7.0


# ---------------------------------------------------------------------------
# 8. determinism: byte-identical artifacts for one master seed
# ---------------------------------------------------------------------------

def test_pipeline_determinism(criterion, tmp_path):
    with criterion("determinism: byte-identical metrics + loss curves across reruns"):
        data = tmp_path / "data"
        data.mkdir()
        write_dataset(data / "crashes.csv", data / "schema_config.json",
                      SynthSpec(counts={"KA": 150, "BC": 30, "O": 120}, seed=3))
        digests = []
        for run in ("one", "two"):
            (tmp_path / f"{run}.json").write_text(json.dumps({
                "input_csv": "data/crashes.csv", "schema_config": "data/schema_config.json",
                "out_dir": run, "seed": 99, "hyperparams": {"epochs": 5}}), encoding="utf-8")
            cfg = PipelineConfig.from_json_file(tmp_path / f"{run}.json")
            run_ingest(cfg)
            run_resample(cfg)
            run_train(cfg, "armnet")
            run_evaluate(cfg, "armnet")
            digests.append(tuple((tmp_path / run / name).read_bytes()
                                 for name in ("metrics_armnet.json", "loss_curve_armnet.csv")))
        assert digests[0] == digests[1]


# ---------------------------------------------------------------------------
# 9. random search: degenerate point x100 + full-space membership
# ---------------------------------------------------------------------------

def test_random_search_criterion(criterion):
    with criterion("random search: 100 degenerate trials + full-space membership"):
        schema = small_schema()
        rng = np.random.default_rng(0)
        X = random_batch(schema, 45, rng)
        X[:, 5] = np.repeat([-3.0, 0.0, 3.0], 15) + rng.normal(scale=0.5, size=45)
        y = np.repeat([0, 1, 2], 15).astype(np.int64)
        ds = Dataset(X=X, y=y)
        tagged = Dataset(ds.X, ds.y, split=stratified_assignment(ds.y, SplitSpec(seed=1)))
        train, val = tagged.subset("train"), tagged.subset("val")

        point = {"hidden_dim": [16], "num_layers": [2], "dropout_rate": [0.1],
                 "lr": [1e-3], "weight_decay": [1e-4], "batch_size": [16]}
        ranked = random_search("armnet", train, val, schema, space=point,
                               n_trials=100, seed=5, epochs=1)
        assert len(ranked) == 100
        assert all(r.hyperparams == ranked[0].hyperparams for r in ranked)
        assert len({r.seed for r in ranked}) == 100

        full = random_search("armnet", train, val, schema, n_trials=40, seed=6, epochs=1)
        for r in full:
            assert r.hyperparams["hidden_dim"] in (64, 128, 256)
            assert r.hyperparams["num_layers"] in (2, 3, 4)
            assert r.hyperparams["dropout_rate"] in (0.1, 0.3, 0.5)
            assert 1e-4 <= r.hyperparams["lr"] <= 1e-2
            assert r.hyperparams["weight_decay"] in (1e-5, 1e-4, 1e-3)
            assert r.hyperparams["batch_size"] in (32, 64)
