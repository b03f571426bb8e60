import csv
import io
from collections import Counter

import pytest

from espcks.harness import bench


def test_synthetic_triples_exact_counts():
    triples = bench.synthetic_triples(500, {"a": 16, "b": 64}, seed=3)
    counts = Counter(t.w for t in triples)
    assert len(triples) == 500
    assert counts[b"a"] == 16 and counts[b"b"] == 64
    docs_a = {t.id for t in triples if t.w == b"a"}
    docs_b = {t.id for t in triples if t.w == b"b"}
    assert docs_a <= docs_b
    assert len({(t.id, t.w) for t in triples}) == 500


def test_synthetic_triples_too_small():
    with pytest.raises(ValueError):
        bench.synthetic_triples(10, {"a": 11})


def test_within_linear():
    freqs = [4, 8, 16, 32, 64]
    assert bench.within_linear(freqs, [1 + 0.5 * f for f in freqs])
    assert bench.within_linear(freqs, [2.0, 4.1, 7.5, 15.4, 28.0])
    assert not bench.within_linear(freqs, [f * f for f in freqs])
    assert not bench.within_linear(freqs, [5.0] * 5)


def test_linear_fit_exact():
    a, b = bench.linear_fit([1, 2, 3], [3, 5, 7])
    assert (round(a, 9), round(b, 9)) == (1, 2)


def test_rows_and_csv():
    r = bench.BenchResult()
    r.rows.append(bench.Row("w", "end_to_end", [0.001 * i for i in range(1, 21)]))
    rows = list(csv.reader(io.StringIO(r.to_csv())))
    assert rows[0] == ["workload", "phase", "median_ms", "p95_ms", "mean_ms", "runs"]
    assert rows[1][:2] == ["w", "end_to_end"] and rows[1][-1] == "20"
    assert float(rows[1][2]) == pytest.approx(10.5)
    assert float(rows[1][3]) == pytest.approx(19.0)
    assert r.median("w") == pytest.approx(10.5)


def test_unknown_profile():
    with pytest.raises(ValueError):
        bench.run_profile("")
    with pytest.raises(ValueError):
        bench.run_profile("nope")


def test_small_sweep_monotone_and_complete():
    out = bench.BenchResult()
    meds = bench.sterm_sweep(out, runs=10, freqs=[4, 16, 64])
    assert meds[0] < meds[-1]
    phases = Counter(r.phase for r in out.rows)
    assert phases == {"end_to_end": 3, "client": 3, "server": 3}
    assert all(len(r.samples) == 10 for r in out.rows)
