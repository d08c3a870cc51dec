import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agd_evade import attack, codec, corpus, models
from agd_evade.errors import ModelInputMismatch, ShapeMismatch, TooShort
from agd_evade.nn import graph

label = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789-_", min_size=2, max_size=20)
tld = st.sampled_from(["com", "net", "org", "ru", "ddns.net"])
domains = st.builds(lambda a, b: f"{a}.{b}", label, tld)


def oracle_plan(domain, values):
    """Reference enumeration of the selection rules."""
    s = codec.analyze_structure(domain)
    cands = {}
    for p in s.perturbable:
        best_j, best = None, None
        for j in range(codec.NUM_SYMBOLS):  # ascending ordinal: first maximum wins
            if j == codec.DOT or codec.ALPHABET[j] == domain[p]:
                continue
            if best is None or values[p, j] > best:
                best_j, best = j, values[p, j]
        cands[p] = (best_j, best)
    k = len(s.perturbable) // 2
    best_subset, best_sum = None, None
    for subset in itertools.combinations(s.perturbable, k):  # lexicographic order
        total = sum(cands[p][1] for p in subset)
        if best_sum is None or total > best_sum:
            best_subset, best_sum = subset, total
    return {p: cands[p][0] for p in best_subset}


def test_fixture_from_hand_built_map():
    values = np.zeros((8, 39))
    for pos, ch, score in [(0, "z", 4), (1, "a", 3), (2, "q", 2), (3, "k", 1)]:
        values[pos, codec.INDEX_OF[ch]] = score
    adv, plan = attack.maskdga_perturb("abcd.com", values)
    assert adv == "zacd.com"
    assert plan.threshold == 3
    assert [(p, codec.ALPHABET[n]) for p, _, n in plan.replacements] == [(0, "z"), (1, "a")]
    # the maximum at a position's own character is skipped for the next best symbol
    values[0, codec.INDEX_OF["a"]] = 9
    values[0, codec.INDEX_OF["y"]] = 8
    assert attack.maskdga_perturb("abcd.com", values)[0] == "yacd.com"
    # the dot column is never used even when it is the largest entry
    values[2, codec.DOT] = 100
    assert "." not in attack.maskdga_perturb("abcd.com", values)[0][:4]


@settings(max_examples=300, deadline=None)
@given(domains, st.integers(0, 2**32 - 1))
def test_plan_matches_brute_force_oracle(domain, seed):
    s = codec.analyze_structure(domain)
    if len(s.perturbable) > 12:
        return
    rng = np.random.default_rng(seed)
    values = rng.integers(-3, 4, size=(len(domain), codec.NUM_SYMBOLS)).astype(float)  # many ties
    plan = attack.plan_maskdga(domain, values)
    assert {p: n for p, _, n in plan.replacements} == oracle_plan(domain, values)


@settings(max_examples=500, deadline=None)
@given(domains, st.integers(0, 2**32 - 1))
def test_exactly_half_both_modes(domain, seed):
    n = len(codec.analyze_structure(domain).perturbable)
    values = np.random.default_rng(seed).standard_normal((len(domain), codec.NUM_SYMBOLS))
    for adv in (attack.maskdga_perturb(domain, values)[0], attack.random_perturb(domain, seed)):
        assert attack.half_replaced(domain, adv)
        assert len(adv) == len(domain) and adv.count(".") == domain.count(".")
        assert adv.rsplit(".", 1)[1] == domain.rsplit(".", 1)[1]
        assert sum(a != b for a, b in zip(domain, adv)) == n // 2
        codec.encode(adv)


def test_random_perturb_contract():
    d = "02sygu4egq8m.net"
    assert attack.random_perturb(d, 7) == attack.random_perturb(d, 7)
    assert sum(a != b for a, b in zip(d, attack.random_perturb(d, 7))) == 6
    assert attack.random_perturb("ab.com", 1) != "ab.com"
    with pytest.raises(TooShort):
        attack.random_perturb("a.com", 1)


def test_plan_errors():
    with pytest.raises(TooShort):
        attack.plan_maskdga("a.com", np.zeros((5, 39)))
    with pytest.raises(ShapeMismatch):
        attack.plan_maskdga("abcd.com", np.zeros((4, 39)))
    adv, plan = attack.maskdga_perturb("ab.com", np.random.default_rng(0).random((6, 39)))
    assert len(plan.replacements) == 1


def test_saliency_matches_finite_differences():
    classes = ("benign", "f1", "f2")
    sub = models.build_substitute(classes, input_rows=12, seed=3, dtype=np.float64)
    rng = np.random.default_rng(5)
    for p in sub.params.values():
        if p.ndim == 1:
            p += rng.uniform(-0.2, 0.2, p.shape)
    domain = "k3jd9x.net"
    onehot = codec.encode_batch([domain], 12, np.float64)
    np.testing.assert_array_equal(attack.build_jsm(sub, domain).values,
                                  attack.saliency_array(sub, onehot)[0, :len(domain)])
    # relaxed input keeps the check away from ReLU and max-pool kinks
    x = onehot + rng.uniform(-0.05, 0.05, onehot.shape)
    sal = attack.saliency_array(sub, x)[0]
    # a 1e-3 step crosses max-pool switches on this piecewise-linear net; 1e-5 does not
    eps = 1e-5
    loss = lambda z: -np.log(graph.forward(sub, z)[1][0, 0])  # noqa: E731
    for i in range(len(domain)):
        for j in range(codec.NUM_SYMBOLS):
            up, down = x.copy(), x.copy()
            up[0, i, j] += eps
            down[0, i, j] -= eps
            numeric = -(loss(up) - loss(down)) / (2 * eps)  # descent direction
            assert abs(sal[i, j] - numeric) <= 1e-3 * max(abs(sal[i, j]) + abs(numeric), 1e-6)


def test_saliency_edge_cases(small_substitute):
    zero = models.build_substitute(small_substitute.class_names, seed=0)
    for p in zero.params.values():
        p[...] = 0
    assert not attack.build_jsm(zero, "abcdef.com").values.any()
    sal = attack.build_jsm(small_substitute, "02sygu4egq8m.net").values
    assert sal.shape == (16, 39) and np.isfinite(sal).all() and sal.any()
    with pytest.raises(ModelInputMismatch):
        attack.build_jsm(small_substitute, "a" * 40 + ".com")


def test_reference_name_structure(small_substitute):
    adv, plan = attack.maskdga_perturb("02sygu4egq8m.net",
                                       attack.build_jsm(small_substitute, "02sygu4egq8m.net"))
    assert adv.endswith(".net") and len(adv) == 16
    assert sum(a != b for a, b in zip("02sygu4egq8m", adv[:12])) == 6


def test_attack_moves_substitute_towards_benign(small_corpus, small_substitute):
    names, _ = small_corpus.select("test")
    names = names + small_corpus.select("target_train", labels={"lcg1", "dict1"})[0][:200]
    rep = attack.attack_batch(small_substitute, names, "maskdga")
    before = graph.predict_proba(small_substitute, names)[:, 0]
    after = graph.predict_proba(small_substitute, rep.adversarial_domains())[:, 0]
    assert np.mean(after > before) >= 0.95


def test_attack_batch_reporting(small_substitute):
    assert attack.attack_batch(small_substitute, [], "maskdga").results == []
    rep = attack.attack_batch(small_substitute, ["a.c", "x1y2z3w4.net", "helloqq.com"], "maskdga")
    assert [r.error is None for r in rep.results] == [False, True, True]
    assert "TooShort" in rep.errors[0].error
    assert rep.summary()["error_count"] == 1 and rep.summary()["succeeded"] == 2
    back = attack.AttackReport.from_csv(rep.to_csv())
    assert back.adversarial_domains() == rep.adversarial_domains()
    r1 = attack.attack_batch(small_substitute, ["x1y2z3w4.net"] * 3, "random", rng_seed=7)
    r2 = attack.attack_batch(small_substitute, ["x1y2z3w4.net"] * 3, "random", rng_seed=7)
    assert r1.to_csv() == r2.to_csv()
    with pytest.raises(ValueError):
        attack.attack_batch(small_substitute, ["abc.com"], "bogus")


def test_collisions_are_rare(small_substitute):
    spec = corpus.FamilySpec("lcg1", "lcg_uniform", (8, 14), "com", 99)
    names = corpus.generate_family(spec, 1000)
    rep = attack.attack_batch(small_substitute, names, "maskdga")
    assert len(rep.succeeded) == 1000 and rep.collisions < 10
