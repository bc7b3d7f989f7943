"""End-to-end smoke tests for the python bindings."""

import math

import pytest

import specdec as sd

SEQS = [[1, 2, 3, 1, 2], [2, 3, 1, 2], [3, 1, 2, 3], [1, 2, 1, 2], [2, 1, 3, 2, 1]]


def models():
    target = sd.fit_kgram(SEQS, order=2, alpha=0.5, vocab_size=4, append_eos=True)
    draft = sd.perturbed_model(target, 0.3, tau=1.3)
    return target, draft


def test_version():
    assert sd.__version__ == "0.1.0"


def test_dist_basics():
    d = sd.normalize([2.0, 2.0, 4.0])
    assert len(d) == 3
    assert math.isclose(d[0], 0.25, rel_tol=0, abs_tol=1e-15)
    assert math.isclose(d[2], 0.5, rel_tol=0, abs_tol=1e-15)
    assert math.isclose(sum(d.mass()), 1.0, rel_tol=0, abs_tol=1e-12)

    p = sd.Dist([0.5, 0.5])
    q = sd.Dist([0.9, 0.1])
    assert math.isclose(sd.accept_prob(p, q, 0), 5.0 / 9.0, rel_tol=1e-15)
    r = sd.residual(p, q)
    assert r[0] == 0.0
    assert math.isclose(r[1], 1.0, rel_tol=0, abs_tol=1e-15)

    with pytest.raises(sd.SpecdecError):
        sd.Dist([0.5, 0.2])  # doesn't sum to one


def test_rng_and_sampling():
    rng = sd.Rng(1)
    u = rng.uniform()
    assert 0.0 <= u < 1.0
    assert sd.Rng(1).uniform() == u
    assert sd.split_seed(1, 0) != sd.split_seed(1, 1)
    assert sd.sample(sd.Dist([0.0, 1.0]), sd.Rng(3)) == 1


def test_models_and_generate():
    target, draft = models()
    assert target.vocab_size == 4
    assert target.eos == 0
    d = target.next_dist([1, 2])
    assert math.isclose(sum(d.mass()), 1.0, rel_tol=0, abs_tol=1e-12)

    pol = sd.parse_policy("fixed:3")
    assert pol.name == "fixed"
    assert pol.params == "k=3"
    cfg = sd.DecodeConfig(max_len=16, k_cap=5)
    t = sd.generate(target, draft, [1, 2], pol, cfg, seed=7)
    assert t.n_draft + t.n_target == t.n_generated + t.n_discarded
    assert 1 <= len(t.output) <= 14
    assert len(t.rounds) == t.n_target

    # determinism + json round trip
    t2 = sd.generate(target, draft, [1, 2], pol, cfg, seed=7)
    assert t.to_json(include_dists=True) == t2.to_json(include_dists=True)
    back = sd.trace_from_json(t.to_json(include_dists=True))
    assert back.output == t.output
    assert back.n_generated == t.n_generated


def test_verify_step():
    q = sd.Dist([0.9, 0.1])
    p = sd.Dist([0.5, 0.5])
    accepted = 0
    n = 4000
    for seed in range(n):
        n_acc, correction, kind = verify_once([0], [q], [p, p], seed)
        assert kind in ("bonus", "replaced")
        if n_acc == 1:
            accepted += 1
        else:
            assert correction == 1  # residual is a point mass on token 1
    # acceptance rate concentrates around 5/9
    assert abs(accepted / n - 5.0 / 9.0) < 0.03


def verify_once(candidates, draft_dists, target_dists, seed):
    return sd.verify(candidates, draft_dists, target_dists, seed)


def test_policy_errors():
    with pytest.raises(sd.SpecdecError):
        sd.parse_policy("junk:1")
    with pytest.raises(sd.SpecdecError):
        sd.parse_policy("oracle-greedy")  # needs a target handle
    target, _ = models()
    pol = sd.parse_policy("oracle-greedy", target=target)
    assert pol.name == "oracle-greedy"


def test_head_training_and_policy():
    target, draft = models()
    ds = sd.gen_dataset(target, draft, [[1, 2], [2, 3], [3, 1]],
                        max_response_len=12, k_cap=4, responses_per_prompt=3, seed=5)
    assert len(ds) > 0
    feats, label, included = ds[0]
    assert len(feats) == 6
    assert 0.0 <= label <= 1.0
    assert isinstance(included, bool)

    head, train_loss, holdout_loss = sd.train_head(ds, depth=1, width=8, epochs=2, seed=3)
    assert train_loss > 0.0
    assert head.num_params() == (6 * 8 + 8) + (8 + 1)
    beta = head.predict([0.5, 1.0, 0.6, 0.1, 0.25, 0.5])
    assert 0.0 < beta < 1.0
    assert sd.eval_binary_kl(head, ds) >= 0.0

    pol = sd.adaptive_policy(head, 0.4)
    cfg = sd.DecodeConfig(max_len=16, k_cap=5)
    t = sd.generate(target, draft, [1, 2], pol, cfg, seed=9)
    assert t.n_draft + t.n_target == t.n_generated + t.n_discarded


def test_run_bench_identity():
    target, draft = models()
    cost = sd.CostModel(0.0234, 0.112)
    standalone = sd.CostModel(0.0207, 0.108)
    cfg = sd.DecodeConfig(max_len=18, k_cap=6)
    res = sd.run_bench(target, draft, [[1, 2], [2, 3]], sd.parse_policy("fixed:3"), cfg,
                       cost, standalone, generations=10, seed=3)
    pt = res["point"]
    want = sd.latency_from_rates(pt.discard_rate, pt.verification_rate, cost)
    assert math.isclose(pt.latency, want, rel_tol=0, abs_tol=1e-12)
    assert math.isclose(pt.speedup, pt.throughput * 0.108, rel_tol=1e-12)
    assert res["generations"] == 10
    assert res["total_tokens"] > 0
    csv = sd.bench_csv([pt])
    assert csv.startswith("policy,params,")


def test_micro_mdp_oracles():
    target = sd.matrix_model(3, 0, sd.Dist([0.2, 0.5, 0.3]),
                             [sd.Dist([0.3, 0.4, 0.3]), sd.Dist([0.25, 0.35, 0.4]),
                              sd.Dist([0.15, 0.6, 0.25])])
    draft = sd.matrix_model(3, 0, sd.Dist([0.1, 0.6, 0.3]),
                            [sd.Dist([0.2, 0.5, 0.3]), sd.Dist([0.4, 0.3, 0.3]),
                             sd.Dist([0.1, 0.45, 0.45])])
    cfg = sd.DecodeConfig(max_len=4, k_cap=3)
    mdp = sd.MicroMdp(target, draft, [1], cfg, sd.CostModel(0.1, 1.0))
    pol = sd.parse_policy("fixed:2")

    gap = sd.unbiasedness_gap(mdp, pol)
    assert gap["tv"] <= 1e-12
    assert gap["max_abs"] <= 1e-12

    law = sd.exact_output_dist(mdp, pol)
    assert math.isclose(sum(law.values()), 1.0, rel_tol=0, abs_tol=1e-12)

    stop, cont = sd.q_values(mdp, pol, [1], [2])
    mean, se, n = sd.mc_q_estimate(mdp, pol, [1], [2], stop_first=True,
                                   n_rollouts=20000, seed=3)
    assert n == 20000
    assert abs(mean - stop) <= 5 * se

    rep = sd.check_threshold_condition(mdp, pol)
    assert not rep["any_violation"]
    assert math.isclose(rep["threshold"], sd.stop_threshold(mdp), rel_tol=1e-12)
    assert all(0.0 <= row["rejection_prob"] <= 1.0 for row in rep["rows"])

    with pytest.raises(sd.SpecdecError):
        sd.q_values(mdp, pol, [1, 1, 1, 1], [])  # already at max_len


def test_head_save_load(tmp_path):
    head = sd.PredictorHead(depth=2, width=6, init_seed=4)
    path = str(tmp_path / "head.json")
    head.save(path)
    back = sd.PredictorHead.load(path)
    x = [0.3, 0.9, 0.5, 0.2, 0.5, 0.3]
    assert back.predict(x) == head.predict(x)
    assert back.get_params() == head.get_params()


def test_oracle_check():
    rep = sd.run_oracle_check(seed=1)
    assert rep["ok"] is True
    assert rep["worst_unbiasedness_gap"] <= 1e-9
    assert rep["theorem_strict_fire"] is True
    assert rep["theorem_violations"] == 0
    assert rep["csv"].startswith("case,kind,value,ok\n")
