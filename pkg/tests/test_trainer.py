import copy
import json
import math

import numpy as np
import pytest
import torch
from conftest import make_model, sentence, split_and_multi_objectives

from fckt.config import RunConfig
from fckt.corpus import split_sentences
from fckt.experiments import ABLATIONS, ablation_config
from fckt.model import build_model
from fckt.synthetic import generate_corpus, generate_splits
from fckt.trainer import (
    NonFiniteError,
    batch_objective,
    load_checkpoint,
    seed_everything,
    train,
    train_step,
)


@pytest.fixture
def examples(small_corpus):
    return split_sentences(small_corpus)


def test_lambda_zero_drops_contrastive_term(tiny_model, examples, tiny_config):
    tiny_config.trainer.lambda_cl = 0.0
    obj = batch_objective(tiny_model, examples, tiny_config, real_path=np.ones(len(examples), bool))
    assert obj.cl.item() > 0
    assert obj.total.item() == (obj.ae + obj.sp).item()


def test_contrast_disabled_skips_term(tiny_model, examples, tiny_config):
    tiny_config.contrast.enabled = False
    obj = batch_objective(tiny_model, examples, tiny_config, rng=np.random.default_rng(0))
    assert obj.cl.item() == 0.0
    assert obj.total.item() == (obj.ae + obj.sp).item()


def test_transfer_disabled_forces_real_path(tiny_model, examples, tiny_config):
    tiny_config.transfer.enabled = False
    tiny_config.transfer.xi = 0.0
    obj = batch_objective(tiny_model, examples, tiny_config, rng=np.random.default_rng(0))
    assert obj.real_path.all()


def _step_setup(small_corpus, tiny_config):
    model = make_model(small_corpus)
    opt = torch.optim.Adam(model.parameters(), lr=1e-2)
    return model, opt


def test_cloned_state_gives_identical_reports(small_corpus, examples, tiny_config):
    model, opt = _step_setup(small_corpus, tiny_config)
    # one warm-up step so the optimizer carries state
    train_step(model, opt, examples, tiny_config, np.random.default_rng(0))
    model2 = copy.deepcopy(model)
    opt2 = torch.optim.Adam(model2.parameters(), lr=1e-2)
    opt2.load_state_dict(copy.deepcopy(opt.state_dict()))
    rng_state = torch.get_rng_state()
    a = train_step(model, opt, examples, tiny_config, np.random.default_rng(5))
    torch.set_rng_state(rng_state)
    b = train_step(model2, opt2, examples, tiny_config, np.random.default_rng(5))
    assert a == b
    for p, q in zip(model.parameters(), model2.parameters()):
        assert torch.equal(p, q)


def test_reported_total_is_sum_of_components(small_corpus, examples, tiny_config):
    model, opt = _step_setup(small_corpus, tiny_config)
    rng = np.random.default_rng(1)
    for _ in range(5):
        r = train_step(model, opt, examples, tiny_config, rng)
        assert abs(r.total - (r.ae + r.sp + tiny_config.effective_lambda * r.cl)) < 1e-9


def test_step_rejects_empty_batch_and_nonfinite(small_corpus, examples, tiny_config):
    model, opt = _step_setup(small_corpus, tiny_config)
    with pytest.raises(ValueError):
        train_step(model, opt, [], tiny_config, np.random.default_rng(0))
    with torch.no_grad():
        model.start_head.net[0].weight[0, 0] = math.nan
    with pytest.raises(NonFiniteError, match="loss_ae"):
        train_step(model, opt, examples, tiny_config, np.random.default_rng(0))


def test_gradient_clipping_reported(small_corpus, examples, tiny_config):
    tiny_config.trainer.grad_clip = 1e-6
    model, opt = _step_setup(small_corpus, tiny_config)
    r = train_step(model, opt, examples, tiny_config, np.random.default_rng(0))
    assert r.clipped and r.grad_norm > 1e-6


def test_loss_decreases_on_synthetic_corpus():
    first, last = [], []
    for seed in range(5):
        cfg = ablation_config("full", seed)
        rng = seed_everything(seed)
        sentences = generate_corpus(400, seed=seed)
        model = build_model(cfg, sentences)
        opt = torch.optim.Adam(model.parameters(), lr=cfg.trainer.lr)
        examples = split_sentences(sentences)
        reports = []
        for step in range(200):
            idx = rng.choice(len(examples), cfg.trainer.batch_size, replace=False)
            reports.append(train_step(model, opt, [examples[i] for i in idx], cfg, rng))
        first.append(reports[0].total)
        last.append(reports[-1].total)
    assert np.mean(last) < np.mean(first)


def test_split_objective_equals_multi_aspect(tiny_config):
    corpus = [
        sentence("the lens and the autofocus are great".split(), (1, 1, "positive"), (4, 4, "negative"), sid="x"),
        sentence("battery life is poor".split(), (0, 1, "negative"), sid="y"),
    ]
    model = make_model(corpus).eval()
    tiny_config.transfer.xi = 0.5
    for paths in ([True, True, True], [False, False, False], [True, False, True]):
        split, multi = split_and_multi_objectives(model, corpus, tiny_config, paths)
        assert split.item() == pytest.approx(multi.item(), rel=1e-6)


def _sp_boundary_grads(model, examples, cfg, seed):
    model.zero_grad()
    obj = batch_objective(model, examples, cfg, rng=np.random.default_rng(seed))
    obj.sp.backward()
    grads = [p.grad for p in model.boundary_parameters()]
    return obj, [torch.zeros_like(p) if g is None else g for p, g in zip(model.boundary_parameters(), grads)]


def test_sentiment_loss_reaches_boundary_heads_only_through_expected_path(small_corpus, examples, tiny_config):
    model = make_model(small_corpus).eval()
    tiny_config.transfer.xi = 0.5
    obj, grads = _sp_boundary_grads(model, examples, tiny_config, seed=3)
    assert not obj.real_path.all()
    assert sum(float(g.abs().sum()) for g in grads) > 0
    tiny_config.transfer.xi = 1.0
    obj, grads = _sp_boundary_grads(model, examples, tiny_config, seed=3)
    assert obj.real_path.all()
    assert all(torch.count_nonzero(g) == 0 for g in grads)


def small_run_config(seed=0, epochs=2):
    cfg = RunConfig(run_id="t")
    cfg.encoder.dim, cfg.encoder.heads = 8, 2
    cfg.trainer.epochs = epochs
    cfg.trainer.seed = seed
    cfg.trainer.lr = 3e-3
    return cfg


@pytest.fixture(scope="module")
def tiny_splits():
    return generate_splits(60, 20, seed=1)


def test_epochs_zero_returns_initial_model(tmp_path, tiny_splits):
    train_s, dev_s = tiny_splits
    cfg = small_run_config(epochs=0)
    result = train(train_s, dev_s, cfg, run_dir=tmp_path)
    seed_everything(cfg.trainer.seed)
    fresh = build_model(cfg, train_s)
    for (name, p), q in zip(result.model.state_dict().items(), fresh.state_dict().values()):
        assert torch.equal(p, q), name
    assert (tmp_path / "epoch_0.ckpt").exists()
    assert result.history == []


def test_run_directory_layout_and_checkpoint_reload(tmp_path, tiny_splits):
    train_s, dev_s = tiny_splits
    result = train(train_s, dev_s, small_run_config(), run_dir=tmp_path)
    rows = [json.loads(l) for l in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [1, 2]
    assert {"loss_ae", "loss_sp", "loss_cl", "loss_total", "dev"} <= set(rows[0])
    assert (tmp_path / "config.snapshot").exists()
    best = json.loads((tmp_path / "best.json").read_text())
    assert best["epoch"] == result.best_epoch
    ckpts = sorted(tmp_path.glob("epoch_*.ckpt"))
    assert [c.name for c in ckpts] == [best["checkpoint"]]

    model, cfg, payload = load_checkpoint(ckpts[0])
    assert cfg.to_dict() == small_run_config().to_dict()
    assert payload["epoch"] == result.best_epoch
    batch = [s.tokens for s in dev_s[:4]]
    result.model.eval()
    with torch.no_grad():
        a, b = result.model(batch), model(batch)
    assert torch.equal(a.boundaries.start_probs, b.boundaries.start_probs)
    assert torch.equal(a.words.hidden, b.words.hidden)


def test_same_seed_same_metrics(tmp_path, tiny_splits):
    train_s, dev_s = tiny_splits
    train(train_s, dev_s, small_run_config(seed=4), run_dir=tmp_path / "a")
    train(train_s, dev_s, small_run_config(seed=4), run_dir=tmp_path / "b")
    assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()


def test_holdout_used_when_no_dev(tiny_splits):
    train_s, _ = tiny_splits
    result = train(train_s, None, small_run_config(epochs=1), run_dir=None)
    assert len(result.history) == 1


@pytest.mark.parametrize("name", list(ABLATIONS))
def test_each_ablation_produces_a_metrics_row(tmp_path, tiny_splits, name):
    train_s, dev_s = tiny_splits
    cfg = ablation_config(name, 0, **{"encoder.dim": 8, "encoder.heads": 2, "trainer.epochs": 1})
    train(train_s, dev_s, cfg, run_dir=tmp_path)
    rows = (tmp_path / "metrics.jsonl").read_text().splitlines()
    assert len(rows) == 1
    row = json.loads(rows[0])
    if not cfg.contrast.enabled:
        assert row["loss_cl"] == 0.0
    assert 0.0 <= row["dev"]["f1"] <= 1.0
