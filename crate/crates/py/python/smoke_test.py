# SPDX-License-Identifier: MIT OR Apache-2.0
"""Smoke test for the trace_py extension module."""

import json
import os
import tempfile

import trace_py


def item(k):
    n, depth = 3, 10
    rows = []
    for i in range(n):
        level = -1.6 if k % 2 else -0.4
        rows.append([level - 0.3 * i * d / depth - 0.02 * ((k * 31 + i * 7 + d * 3) % 11) for d in range(depth + 1)])
    return trace_py.Trajectory(f"q{k:03}", rows, "truthfulqa", truthful=[k % n])


def main():
    cfg = trace_py.Config()
    assert cfg.variant == "none"
    assert json.loads(cfg.to_json())["tau_dim"] == cfg.tau_dim
    assert trace_py.Config.from_json(cfg.to_json()).to_json() == cfg.to_json()
    assert cfg.with_variant("drop_early").variant == "drop_early"

    items = [item(k) for k in range(12)]
    t = items[0]
    assert (t.n, t.depth) == (3, 10)
    assert t.base() == t.layer(10)
    assert t.d_eff() >= 1.0

    single = [trace_py.run_item(x, 0.5) for x in items]
    batch = trace_py.run_batch(items, 0.5, jobs=4)
    assert [v.to_json() for v in single] == [v.to_json() for v in batch]
    assert all(0 <= v.chosen_index < 3 for v in batch)
    print("regimes:", sorted({v.regime for v in batch}))

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "items.jsonl")
        trace_py.write_archive(items, path)
        back = trace_py.read_archive(path)
        assert [x.base() for x in back] == [x.base() for x in items]

    assert abs(trace_py.d_eff([[0.0, 0.0], [0.0, 0.0]]) - 1.0) < 1e-12
    assert abs(trace_py.d_eff([[1.0, 0.0], [0.0, 1.0]]) - 2.0) < 1e-12
    assert trace_py.rcv([2.0, 2.0, 2.0]) == 0.0
    assert trace_py.mc1([0.1, 0.9], [1]) == 1
    assert abs(trace_py.mc2([0.0, 0.0], [0]) - 0.5) < 1e-12

    summary = json.loads(trace_py.fixture_summary())
    assert summary["mc1"]["regressions"] == 0
    lo, hi = trace_py.bootstrap_ci([1.0, 2.0, 3.0, 4.0], resamples=2000, seed=7)
    assert 1.0 <= lo < hi <= 4.0
    assert trace_py.sign_test([1.0] * 10) == 2.0 ** -10

    try:
        trace_py.Trajectory("bad", [[0.0, 0.1], [0.0]])
    except trace_py.TraceError:
        pass
    else:
        raise AssertionError("ragged table accepted")
    try:
        trace_py.run_item(items[0], 0.5, variant="nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown variant accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
