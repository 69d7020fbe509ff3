import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protoloss import tensor as T
from protoloss.errors import ContractError
from protoloss.gradcheck import check_gradients, relative_error
from protoloss.tensor import ComputationRecord, Tensor, grad, half_power, half_power_value


def test_square_derivative():
    x = Tensor(3.0, requires_grad=True)
    (gx,) = grad(x * x, [x])
    assert gx == 6.0


def test_product_derivative():
    x = Tensor(2.0, requires_grad=True)
    y = Tensor(5.0, requires_grad=True)
    gx, gy = grad(x * y, [x, y])
    assert (gx, gy) == (5.0, 2.0)


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        grad(x * 2.0, [x])


def test_unused_leaf_gets_zero_gradient():
    x = Tensor(np.ones(3), requires_grad=True)
    unused = Tensor(np.ones((2, 2)), requires_grad=True)
    gx, gu = grad(T.sum(T.square(x)), [x, unused])
    np.testing.assert_array_equal(gx, 2 * np.ones(3))
    np.testing.assert_array_equal(gu, np.zeros((2, 2)))


def test_leaf_data_is_copied_and_frozen():
    arr = np.ones(3)
    t = Tensor(arr)
    arr[0] = 5.0
    assert t.data[0] == 1.0
    with pytest.raises(ValueError):
        t.data[0] = 2.0


def test_constants_record_nothing():
    a = Tensor(np.ones((2, 2)))
    out = T.relu(T.matmul(a, a))
    assert out.is_leaf and not out.requires_grad


@pytest.mark.parametrize(
    "t,eps,expected",
    [(4.0, 0.0, 2.0), (0.0, 1e-12, 1e-3), (-4.0, 0.0, 2.0)],
)
def test_half_power_values(t, eps, expected):
    assert half_power(Tensor(t), eps).item() == pytest.approx(expected, rel=1e-12)


def test_half_power_derivative_at_one():
    x = Tensor(1.0, requires_grad=True)
    (g,) = grad(half_power(x, 0.0), [x])
    assert g == pytest.approx(0.5, rel=1e-12)


def test_half_power_derivative_at_zero_is_finite():
    x = Tensor(0.0, requires_grad=True)
    for eps in (0.0, 1e-12):
        (g,) = grad(half_power(x, eps), [x])
        assert np.isfinite(g) and g == 0.0


@settings(max_examples=200, deadline=None)
@given(t=st.floats(-1e3, 1e3), eps=st.sampled_from([1e-12, 1e-6, 1e-2, 1.0]))
def test_half_power_even_and_bounded_slope(t, eps):
    a = half_power(Tensor(t), eps).item()
    b = half_power(Tensor(-t), eps).item()
    assert a == b
    x = Tensor(t, requires_grad=True)
    (g,) = grad(half_power(x, eps), [x])
    assert abs(g) <= 0.5 * eps ** -0.25 * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0, 1e3), b=st.floats(0, 1e3))
def test_half_power_monotone_in_magnitude(a, b):
    lo, hi = sorted((a, b))
    assert half_power_value(lo, 1e-12) <= half_power_value(hi, 1e-12)


# every primitive against central differences at 20 random points
PRIMITIVES = {
    "add": (lambda a, b: T.sum(T.mul(T.add(a, b), T.add(a, b))), [(3, 2), (3, 2)]),
    "sub": (lambda a, b: T.sum(T.square(T.sub(a, b))), [(3, 2), (3, 2)]),
    "add_bias": (lambda x, b: T.sum(T.square(T.add_bias(x, b))), [(4, 3), (3,)]),
    "mul": (lambda a, b: T.sum(T.mul(a, b)), [(2, 3), (2, 3)]),
    "scale": (lambda a: T.sum(T.square(T.scale(a, -2.5))), [(5,)]),
    "matmul": (lambda a, b: T.sum(T.square(T.matmul(a, b))), [(3, 4), (4, 2)]),
    "transpose": (lambda a, b: T.sum(T.mul(T.transpose(a), b)), [(2, 3), (3, 2)]),
    "relu": (lambda a: T.sum(T.square(T.relu(a))), [(4, 3)]),
    "sum_axis": (lambda a: T.sum(T.square(T.sum(a, axis=1))), [(3, 4)]),
    "mean": (lambda a: T.mean(T.square(a)), [(3, 4)]),
    "square": (lambda a: T.sum(T.square(a)), [(6,)]),
    "sqrt": (lambda a: T.sum(T.sqrt(T.add(T.square(a), Tensor(np.ones(a.shape))))), [(5,)]),
    "half_power": (lambda a: T.sum(T.half_power(a)), [(6,)]),
    "gather_rows": (lambda a: T.sum(T.square(T.gather_rows(a, [2, 0, 2, 1]))), [(3, 2)]),
    "logsumexp": (lambda a: T.sum(T.logsumexp(a)), [(3, 5)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_adjoints_match_finite_differences(name):
    fn, shapes = PRIMITIVES[name]
    rng = np.random.default_rng(hash(name) % 2**32)
    for _ in range(20):
        arrays = [rng.normal(size=s) for s in shapes]
        assert check_gradients(fn, *arrays) < 1e-4


def test_backward_visits_each_record_once(rng):
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    h = T.relu(T.matmul(x, w))
    loss = T.add(T.sum(T.square(h)), T.sum(T.logsumexp(h)))  # h is shared by two branches
    record = ComputationRecord(loss)
    ids = [id(n) for n in record.nodes]
    assert len(ids) == len(set(ids))
    record.backward()
    assert record.visits == len(record.nodes)


def test_record_is_topologically_ordered(rng):
    x = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
    y = T.matmul(x, x)
    loss = T.sum(T.add(y, T.square(x)))
    record = ComputationRecord(loss)
    position = {id(n): k for k, n in enumerate(record.nodes)}
    for k, node in enumerate(record.nodes):
        for p in node._parents:
            assert position[id(p)] < k


def test_backward_accumulates_into_leaves():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    T.backward(T.sum(T.square(x)))
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_relative_error_floor():
    assert relative_error(np.array([1e-12]), np.array([0.0]))[0] < 1e-5
    assert relative_error(np.array([1.0]), np.array([1.1]))[0] == pytest.approx(0.1 / 1.1)


def test_shape_checks():
    with pytest.raises(ContractError):
        T.add(Tensor(np.ones(2)), Tensor(np.ones(3)))
    with pytest.raises(ContractError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ContractError):
        T.gather_rows(Tensor(np.ones((2, 3))), [2])
