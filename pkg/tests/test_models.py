import numpy as np
import pytest

from agd_evade import codec, models
from agd_evade.errors import BadShape, UnknownArchitecture
from agd_evade.nn import graph, training


def test_substitute_contract():
    m = models.build_substitute(2, seed=0)
    assert m.class_names == ("benign", "class_1")
    probs = graph.predict_proba(m, ["abc.com", "zzz123.net"])
    assert probs.shape == (2, 2)
    np.testing.assert_allclose(probs.sum(axis=1), 1, atol=1e-5)
    assert 80_000 <= m.num_params <= 320_000
    again = models.build_substitute(2, seed=0)
    assert all(np.array_equal(m.params[k], again.params[k]) for k in m.params)
    with pytest.raises(BadShape):
        models.build_substitute(1)
    with pytest.raises(BadShape):
        models.build_substitute(2, input_rows=66)


@pytest.mark.parametrize("arch", models.TARGETS)
def test_targets_build_train_and_predict(arch):
    m = models.build_target(arch, 21, seed=0)
    assert m.params[[k for k in m.params if k.endswith("W")][-1]].shape[-1] == 21
    names = ["abc.com", "x9y8z7.net", "helloworld.org", "qq.ru"]
    labels = ["benign", "class_3", "class_20", "benign"]
    trained, curve = training.train(m, names, labels, epochs=1, batch_size=4)
    assert len(curve) == 1 and np.isfinite(curve[0])
    probs = graph.predict_proba(trained, names)
    assert probs.shape == (4, 21)
    np.testing.assert_allclose(probs.sum(axis=1), 1, atol=1e-5)


def test_unknown_architectures():
    with pytest.raises(UnknownArchitecture):
        models.build_target("substitute_cnn", 3)
    with pytest.raises(UnknownArchitecture):
        models.build("bogus", 3)


def test_defining_structure():
    kinds = lambda arch: [l.kind for l in models.build(arch, 3).layers]  # noqa: E731
    assert kinds("lstm_endgame") == ["lstm", "softmax_output"]
    assert kinds("bilstm_cmu") == ["bilstm", "softmax_output"]
    assert kinds("cnn_lstm_mit") == ["conv1d", "relu", "conv1d", "relu", "lstm", "softmax_output"]
    inv = models.build("cnn_parallel_invincea", 3).layers[0]
    assert [b[0].width for b in inv.branches] == [2, 3, 4, 5]
    sub = models.build("substitute_cnn", 3).layers
    assert [b[0].width for b in sub[0].branches] == [2, 3, 4, 5]
    assert sub[1].kind == "max_pool_half"
