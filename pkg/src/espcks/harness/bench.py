"""Search-latency benchmarks on synthetic databases.

Workloads mirror the scaling experiments: a two-keyword (or five-keyword)
query with one conjunct's update count fixed and the other swept over
2^2..2^10; a sweep over the number of matching documents; and a database
growth series with the s-term count held fixed. Each cell is timed at least
``runs`` times; medians, 95th percentiles and means are reported.
"""

from __future__ import annotations

import csv
import io
import math
import random
import statistics
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

from ..core import SecretKeyBundle, UpdateTriple, Op
from ..service import wire
from ..service.client import LocalTransport, OwnerClient, OwnerState, SearchClient, SocketTransport
from ..service.server import ServerEngine

FILLER_VOCAB = 512
KEYWORDS_PER_DOC = 5


@dataclass
class Row:
    workload: str
    phase: str
    samples: list[float]

    @property
    def median_ms(self) -> float:
        return statistics.median(self.samples) * 1e3

    @property
    def p95_ms(self) -> float:
        s = sorted(self.samples)
        return s[min(len(s) - 1, math.ceil(0.95 * len(s)) - 1)] * 1e3

    @property
    def mean_ms(self) -> float:
        return statistics.fmean(self.samples) * 1e3


@dataclass
class BenchResult:
    rows: list[Row] = field(default_factory=list)
    verdicts: dict[str, bool] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["workload", "phase", "median_ms", "p95_ms", "mean_ms", "runs"])
        for r in self.rows:
            w.writerow([r.workload, r.phase, f"{r.median_ms:.3f}", f"{r.p95_ms:.3f}",
                        f"{r.mean_ms:.3f}", len(r.samples)])
        return buf.getvalue()

    def median(self, workload: str, phase: str = "end_to_end") -> float:
        for r in self.rows:
            if r.workload == workload and r.phase == phase:
                return r.median_ms
        raise KeyError((workload, phase))


# -- synthetic data --------------------------------------------------------------

def synthetic_triples(total: int, frequencies: dict[str, int], *, seed: int = 0,
                      nested: bool = True) -> list[UpdateTriple]:
    """Documents with exact per-keyword counts for the named keywords.

    Named keyword ``w`` appears in documents ``0 .. frequencies[w]-1`` when
    ``nested`` is set, so the conjunction of two named keywords matches
    ``min`` of their counts. Remaining slots are filled from a filler
    vocabulary until ``total`` triples exist.
    """
    rng = random.Random(seed)
    n_named = sum(frequencies.values())
    if n_named > total:
        raise ValueError("named keyword counts exceed the requested total")
    n_docs = max(max(frequencies.values(), default=1), math.ceil(total / KEYWORDS_PER_DOC))
    docs: list[list[str]] = [[] for _ in range(n_docs)]
    for w, f in frequencies.items():
        idx = range(f) if nested else rng.sample(range(n_docs), f)
        for i in idx:
            docs[i].append(w)
    remaining = total - n_named
    i = 0
    while remaining > 0:
        d = docs[i % n_docs]
        filler = f"f{rng.randrange(FILLER_VOCAB)}"
        if filler not in d:
            d.append(filler)
            remaining -= 1
        i += 1
    return [UpdateTriple(Op.ADD, f"d{n}".encode(), w.encode()) for n, kws in enumerate(docs) for w in kws]


class TimedTransport(LocalTransport):
    def __init__(self, engine):
        super().__init__(engine)
        self.server_time = 0.0

    def exchange(self, msg_type: int, payload: bytes):
        frame = wire.encode_frame(msg_type, payload)
        t0 = time.perf_counter()
        out = self.engine.handle_frame(frame)
        self.server_time += time.perf_counter() - t0
        return wire.decode_frame(out, 1 << 62)


@dataclass
class Fixture:
    sk: SecretKeyBundle
    engine: ServerEngine | None
    client: SearchClient
    transport: TimedTransport | SocketTransport


def build_fixture(triples: Sequence[UpdateTriple], *, capacity: int | None = None,
                  target_fp: float = 1e-6, batch: int = 4096, server: str | None = None) -> Fixture:
    """Load ``triples`` into a fresh database.

    With ``server`` set the remote database is re-initialised (its contents
    are replaced) and only end-to-end time is measured.
    """
    sk = SecretKeyBundle.generate()
    engine = None
    if server is None:
        engine = ServerEngine(session_timeout=3600)
        transport = TimedTransport(engine)
    else:
        transport = SocketTransport(server)
    owner = OwnerClient(transport, sk, OwnerState.fresh(sk, capacity or max(1, len(triples)), target_fp))
    owner.init()
    for i in range(0, len(triples), batch):
        owner.update_triples(triples[i:i + batch])
    return Fixture(sk, engine, SearchClient(transport, sk), transport)


def time_search(fx: Fixture, query: Sequence[str]) -> tuple[float, float]:
    """One end-to-end search; returns (total seconds, server seconds)."""
    timed = isinstance(fx.transport, TimedTransport)
    if timed:
        fx.transport.server_time = 0.0
    t0 = time.perf_counter()
    fx.client.search(query)
    total = time.perf_counter() - t0
    return total, fx.transport.server_time if timed else math.nan


def measure(fx: Fixture, workload: str, query: Sequence[str], runs: int, out: BenchResult) -> Row:
    totals, servers = [], []
    time_search(fx, query)  # warm-up
    for _ in range(runs):
        t, s = time_search(fx, query)
        totals.append(t)
        servers.append(s)
    row = Row(workload, "end_to_end", totals)
    out.rows.append(row)
    _split_rows(out, workload, totals, servers)
    return row


def _split_rows(out: BenchResult, workload: str, totals: list[float], servers: list[float]) -> None:
    if any(math.isnan(s) for s in servers):
        return
    out.rows += [Row(workload, "client", [t - s for t, s in zip(totals, servers)]),
                 Row(workload, "server", servers)]


# -- verdicts ---------------------------------------------------------------------

def linear_fit(xs: Sequence[float], ys: Sequence[float],
               weights: Sequence[float] | None = None) -> tuple[float, float]:
    """Weighted least-squares ``y = a + b*x`` (unit weights by default)."""
    ws = list(weights) if weights is not None else [1.0] * len(xs)
    sw = sum(ws)
    mx = sum(w * x for w, x in zip(ws, xs)) / sw
    my = sum(w * y for w, y in zip(ws, ys)) / sw
    sxx = sum(w * (x - mx) ** 2 for w, x in zip(ws, xs))
    b = sum(w * (x - mx) * (y - my) for w, x, y in zip(ws, xs, ys)) / sxx
    return my - b * mx, b


def within_linear(freqs: Sequence[int], medians: Sequence[float], factor: float = 2.0) -> bool:
    """Latency is affine in frequency up to ``factor``, and grows no faster than ``factor`` x linear.

    The fit weights each point by 1/t^2 so it minimises relative error;
    otherwise the largest counts dominate and the small end is judged
    against a line that passes near zero.
    """
    if min(medians) <= 0:
        return False
    a, b = linear_fit(freqs, medians, [1 / t ** 2 for t in medians])
    if b <= 0:
        return False
    for f, t in zip(freqs, medians):
        fit = a + b * f
        if fit <= 0 or not 1 / factor <= t / fit <= factor:
            return False
    return medians[-1] / medians[0] <= factor * freqs[-1] / freqs[0]


# -- workloads --------------------------------------------------------------------

SWEEP = [2 ** e for e in range(2, 11)]


def sterm_sweep(out: BenchResult, runs: int, freqs: Sequence[int] = SWEEP, n_terms: int = 2,
                progress: Callable[[str], None] | None = None, server: str | None = None) -> list[float]:
    """Fix the x-terms at 2*max(freqs) updates and sweep the s-term count."""
    x_freq = 2 * max(freqs)
    named = {f"s{f}": f for f in freqs}
    named.update({f"x{i}": x_freq for i in range(1, n_terms)})
    total = sum(named.values()) + 1024
    fx = build_fixture(synthetic_triples(total, named, seed=1), server=server)
    meds = []
    for f in freqs:
        q = [f"s{f}"] + [f"x{i}" for i in range(1, n_terms)]
        meds.append(measure(fx, f"sterm_sweep_n{n_terms}_cnt{f}", q, runs, out).median_ms)
        if progress:
            progress(f"sterm n={n_terms} cnt={f}: {meds[-1]:.2f} ms")
    out.verdicts[f"sterm_sweep_n{n_terms}_within_2x_linear"] = within_linear(freqs, meds)
    return meds


def xterm_sweep(out: BenchResult, runs: int, freqs: Sequence[int] = SWEEP, s_freq: int = 4,
                progress: Callable[[str], None] | None = None, server: str | None = None) -> list[float]:
    """Fix the s-term at ``s_freq`` and sweep the other conjunct; cost should stay flat."""
    named = {"s": s_freq}
    named.update({f"x{f}": f for f in freqs})
    fx = build_fixture(synthetic_triples(sum(named.values()) + 1024, named, seed=2), server=server)
    meds = []
    for f in freqs:
        meds.append(measure(fx, f"xterm_sweep_cnt{f}", ["s", f"x{f}"], runs, out).median_ms)
        if progress:
            progress(f"xterm cnt={f}: {meds[-1]:.2f} ms")
    out.verdicts["xterm_sweep_flat"] = max(meds) <= 1.5 * min(meds)
    return meds


def matches_sweep(out: BenchResult, runs: int, matches: Sequence[int] = (10, 100, 1000),
                  progress: Callable[[str], None] | None = None, server: str | None = None) -> list[float]:
    """Two-keyword queries whose s-term updates all match."""
    named = {f"m{n}": n for n in matches}
    named["x"] = max(matches)
    fx = build_fixture(synthetic_triples(sum(named.values()) + 1024, named, seed=3), server=server)
    meds = []
    for n in matches:
        meds.append(measure(fx, f"matches_{n}", [f"m{n}", "x"], runs, out).median_ms)
        if progress:
            progress(f"matches={n}: {meds[-1]:.2f} ms")
    return meds


def dbsize_series(out: BenchResult, runs: int, sizes: Sequence[int] = (1000, 10000), s_freq: int = 16,
                  x_freq: int = 64, progress: Callable[[str], None] | None = None,
                  server: str | None = None) -> float:
    """Hold the s-term count fixed and grow the database; returns largest/smallest median ratio.

    In-process, the databases coexist and the sizes are timed interleaved so
    slow drift hits every cell equally. A remote server holds one database
    at a time, so each size is loaded and timed in turn.
    """
    samples: dict[int, list[tuple[float, float]]] = {n: [] for n in sizes}
    if server is None:
        fixtures = {n: build_fixture(synthetic_triples(n, {"s": s_freq, "x": x_freq}, seed=4)) for n in sizes}
        for fx in fixtures.values():
            time_search(fx, ["s", "x"])
        for _ in range(runs):
            for n, fx in fixtures.items():
                samples[n].append(time_search(fx, ["s", "x"]))
    else:
        for n in sizes:
            fx = build_fixture(synthetic_triples(n, {"s": s_freq, "x": x_freq}, seed=4), server=server)
            time_search(fx, ["s", "x"])
            samples[n] = [time_search(fx, ["s", "x"]) for _ in range(runs)]
            fx.client.close()
    meds = []
    for n in sizes:
        tot = [t for t, _ in samples[n]]
        srv = [s for _, s in samples[n]]
        out.rows.append(Row(f"dbsize_{n}", "end_to_end", tot))
        _split_rows(out, f"dbsize_{n}", tot, srv)
        meds.append(statistics.median(tot))
        if progress:
            progress(f"dbsize={n}: {meds[-1] * 1e3:.2f} ms")
    ratio = meds[-1] / meds[0]
    out.verdicts["dbsize_ratio_le_1.5"] = ratio <= 1.5
    out.notes.append(f"dbsize median ratio {sizes[-1]}/{sizes[0]} = {ratio:.3f}")
    return ratio


PROFILES = ("quick", "standard", "acceptance")


def run_profile(profile: str, runs: int = 10, progress: Callable[[str], None] | None = None,
                server: str | None = None) -> BenchResult:
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose one of {', '.join(PROFILES)}")
    runs = max(runs, 10)
    out = BenchResult()
    if profile == "quick":
        sterm_sweep(out, runs, freqs=[4, 8, 16, 32, 64], progress=progress, server=server)
        dbsize_series(out, runs, sizes=(1000, 4000), progress=progress, server=server)
    elif profile == "acceptance":
        sterm_sweep(out, runs, progress=progress, server=server)
        dbsize_series(out, runs, progress=progress, server=server)
    else:
        sterm_sweep(out, runs, n_terms=2, progress=progress, server=server)
        sterm_sweep(out, runs, n_terms=5, progress=progress, server=server)
        xterm_sweep(out, runs, progress=progress, server=server)
        matches_sweep(out, runs, progress=progress, server=server)
        dbsize_series(out, runs, progress=progress, server=server)
    return out
