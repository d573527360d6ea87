import numpy as np
import pytest

from ccgm import autodiff as ad


def scalar_param(value, name="p"):
    return ad.Param(name, np.asarray(value, dtype=np.float64))


def test_square_value_and_grad():
    p = scalar_param(3.0)
    out = ad.mul(ad.param_tensor(p), ad.param_tensor(p))
    out.backward()
    assert out.value == 9.0
    assert p.grad == 6.0


def test_sigmoid_at_zero():
    p = scalar_param(0.0)
    out = ad.sigmoid(ad.param_tensor(p))
    out.backward()
    assert out.value == 0.5
    assert p.grad == 0.25


def test_forward_deterministic():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((5, 4))
    w = scalar_param(rng.standard_normal((4, 3)), "w")

    def run():
        return ad.total_sum(ad.sigmoid(ad.matmul(ad.constant(x), ad.param_tensor(w)))).value

    a, b = run(), run()
    assert a == b  # bit-identical


def test_shape_mismatch_identifies_node():
    a = ad.constant(np.zeros((2, 3)))
    b = ad.constant(np.zeros((2, 3)))
    with pytest.raises(ad.ShapeError, match="matmul"):
        ad.matmul(a, b)


def test_backward_requires_scalar():
    t = ad.constant(np.zeros(3))
    p = ad.param_tensor(scalar_param(np.ones(3)))
    with pytest.raises(ad.ShapeError, match="scalar"):
        ad.add(t, p).backward()


def test_optimizer_step_arithmetic():
    p = scalar_param(1.0)
    p.grad = np.asarray(0.5)
    rejected = ad.sgd_step([p], lr=0.01)
    assert rejected == []
    assert p.value == pytest.approx(0.995)
    assert p.grad == 0.0


def test_optimizer_zero_lr_is_identity():
    p = scalar_param(np.array([1.0, -2.0, 3.5]))
    p.grad = np.array([10.0, 10.0, 10.0])
    ad.sgd_step([p], lr=0.0)
    assert np.array_equal(p.value, np.array([1.0, -2.0, 3.5]))


def test_optimizer_rejects_nonfinite_grad():
    good = scalar_param(1.0, "good")
    bad = scalar_param(1.0, "bad")
    good.grad = np.asarray(1.0)
    bad.grad = np.asarray(np.nan)
    rejected = ad.sgd_step([good, bad], lr=0.1)
    assert rejected == ["bad"]
    assert bad.value == 1.0
    assert good.value == pytest.approx(0.9)


def test_gradient_check_quadratic_nearly_exact():
    p = scalar_param(np.array([1.5, -0.5]))

    def loss():
        t = ad.param_tensor(p)
        return ad.total_sum(ad.mul(t, t))

    assert ad.gradient_check(loss, [p], step=1e-5) < 1e-9


def unary_cases():
    return [
        ("sigmoid", ad.sigmoid, lambda r, s: r.standard_normal(s)),
        ("relu", ad.relu, lambda r, s: r.standard_normal(s) + 0.3),
        ("softplus", ad.softplus, lambda r, s: r.standard_normal(s)),
        ("log", ad.log, lambda r, s: r.uniform(0.5, 2.0, s)),
        ("exp", ad.exp, lambda r, s: r.standard_normal(s) * 0.5),
        ("abs", ad.absval, lambda r, s: r.standard_normal(s) + 0.2),
        ("mean", ad.mean, lambda r, s: r.standard_normal(s)),
    ]


@pytest.mark.parametrize("name,op,sampler", unary_cases())
def test_unary_ops_match_finite_differences(name, op, sampler):
    # 100 random inputs spread over the op set exercises the diffcore property.
    for seed in range(15):
        rng = np.random.default_rng(1000 + seed)
        p = ad.Param(name, sampler(rng, (3, 4)))

        def loss():
            out = op(ad.param_tensor(p))
            return out if out.value.ndim == 0 else ad.total_sum(out)

        assert ad.gradient_check(loss, [p], step=1e-5) < 1e-4, f"{name} seed {seed}"


def test_binary_and_matrix_ops_match_finite_differences():
    for seed in range(15):
        rng = np.random.default_rng(2000 + seed)
        a = ad.Param("a", rng.standard_normal((3, 4)))
        b = ad.Param("b", rng.standard_normal((4, 2)))
        c = ad.Param("c", rng.standard_normal((3, 2)))
        d = ad.Param("d", rng.standard_normal((2,)))

        def loss():
            prod = ad.matmul(ad.param_tensor(a), ad.param_tensor(b))
            mixed = ad.mul(prod, ad.param_tensor(c))
            shifted = ad.add(mixed, ad.param_tensor(d))  # broadcast add
            return ad.total_sum(ad.sub(ad.sigmoid(shifted), ad.scale(ad.param_tensor(c), 0.25)))

        err = ad.gradient_check(loss, [a, b, c, d], step=1e-5)
        assert err < 1e-4, f"seed {seed}: {err}"


def test_structured_ops_match_finite_differences():
    for seed in range(10):
        rng = np.random.default_rng(3000 + seed)
        adj = ad.Param("adj", rng.uniform(0, 1, (3, 3)))
        emb = ad.Param("emb", rng.standard_normal((2, 3, 4)))
        w = ad.Param("w", rng.standard_normal((4,)))
        heads = ad.Param("heads", rng.standard_normal((3, 4)))

        def loss():
            z = ad.mix_parents(ad.param_tensor(adj), ad.param_tensor(emb))
            s1 = ad.total_sum(ad.lastdim_dot(z, ad.param_tensor(w)))
            s2 = ad.total_sum(ad.per_node_dot(z, ad.param_tensor(heads)))
            return ad.add(s1, s2)

        err = ad.gradient_check(loss, [adj, emb, w, heads], step=1e-5)
        assert err < 1e-4, f"seed {seed}: {err}"


def test_trace_power_matches_finite_differences():
    for seed in range(5):
        rng = np.random.default_rng(4000 + seed)
        a = ad.Param("a", rng.uniform(0.1, 0.9, (4, 4)))

        def loss():
            return ad.matrix_power_trace(ad.param_tensor(a), 4)

        assert ad.gradient_check(loss, [a], step=1e-5) < 1e-5


def test_reshape_and_expand_grads():
    rng = np.random.default_rng(5)
    p = ad.Param("p", rng.standard_normal((2, 6)))
    w_fixed = rng.standard_normal((2, 3))

    def loss():
        r = ad.reshape(ad.param_tensor(p), (2, 3, 2))
        w = ad.expand_last(ad.constant(w_fixed))
        return ad.total_sum(ad.mul(w, r))

    assert ad.gradient_check(loss, [p], step=1e-5) < 1e-6
