import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parhac.core import Instance, MalformedInput, MalformedTrace
from parhac.fileio import format_points, format_trace, parse_points, parse_trace
from parhac.gen import gen_uniform
from parhac.hac_seq import run_exact


def test_parse_points_weights_and_comments():
    inst = parse_points("# header\nw=2,0,1\n\n1.5,2\n")
    assert inst.coords.tolist() == [[0.0, 1.0], [1.5, 2.0]]
    assert inst.weights.tolist() == [2.0, 1.0]


@pytest.mark.parametrize("text", ["", "1,2\n3\n", "1,x\n", "w=2\n"])
def test_parse_points_errors(text):
    with pytest.raises(MalformedInput):
        parse_points(text)


@given(st.integers(0, 10_000))
def test_points_roundtrip(seed):
    rng = np.random.default_rng(seed)
    inst = Instance(rng.random((6, 3)), rng.integers(1, 5, 6).astype(float))
    back = parse_points(format_points(inst))
    assert np.array_equal(back.coords, inst.coords) and np.array_equal(back.weights, inst.weights)


def test_unit_weights_written_bare():
    assert "w=" not in format_points(gen_uniform(3, 2))


@given(st.integers(0, 10_000))
def test_trace_roundtrip(seed):
    trace = run_exact(gen_uniform(9, 2, seed))
    assert parse_trace(format_trace(trace), 9).records == trace.records


def test_parse_trace_errors():
    with pytest.raises(MalformedTrace):
        parse_trace("{not json\n", 2)
    with pytest.raises(MalformedTrace):
        parse_trace("[1, 2]\n", 2)
