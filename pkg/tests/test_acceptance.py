"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line that is printed in the
``acceptance criteria`` section at the end of the pytest run.
"""
import json
import math
import random
import re
import statistics
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from conftest import DATA, make_doc
from newsrag.cli import main
from newsrag.core import QAPair
from newsrag.embedder import DeterministicEmbedder
from newsrag.evaluation import (
    LexicalJudge,
    EvalSample,
    answer_correctness,
    answer_correctness_from_counts,
    answer_relevance,
    context_precision,
    context_precision_from_flags,
    context_recall,
    render_table,
    run_eval,
)
from newsrag.engine import EngineConfig
from newsrag.index import VectorIndex, cosine_similarity
from newsrag.prompts import render_plain
from newsrag.qa import dedup_pairs, parse_qa_response, render_pairs
from oracles import oracle_cosine_dense
from synth import oracle_search, synthetic_chunks

RESULTS = []
GOLDEN = Path(__file__).parent / "golden" / "chantix_prompt.txt"


@contextmanager
def criterion(name):
    t0 = time.perf_counter()
    notes = []
    try:
        yield notes
    except BaseException as e:
        msg = str(e).splitlines()[0] if str(e) else ""
        RESULTS.append(("FAIL", name, f"{type(e).__name__}: {msg}"[:200]))
        raise
    RESULTS.append(("PASS", name, "; ".join(notes + [f"{time.perf_counter() - t0:.2f}s"])))


# -- cosine -------------------------------------------------------------------

def test_cosine_oracle():
    with criterion("cosine oracle: 1000 pairs, dims 2-1024, 1e-6, < 5 s") as notes:
        rng = np.random.default_rng(2016)
        t0 = time.perf_counter()
        worst = 0.0
        for _ in range(1000):
            dim = int(rng.integers(2, 1025))
            a, b = rng.standard_normal(dim), rng.standard_normal(dim)
            worst = max(worst, abs(cosine_similarity(a, b) - oracle_cosine_dense(a.tolist(), b.tolist())))
        elapsed = time.perf_counter() - t0
        hand = cosine_similarity((1, 2, 3), (4, 5, 6))
        assert abs(hand - 32 / (math.sqrt(14) * math.sqrt(77))) <= 1e-6
        assert abs(hand - 0.974632) <= 1e-6
        assert worst <= 1e-6, worst
        assert elapsed < 5.0, elapsed
        notes.append(f"max abs err {worst:.1e}")


# -- retrieval ----------------------------------------------------------------

def test_retrieval_oracle():
    with criterion("retrieval oracle: 10k chunks, 100 queries, k in {1,4,10}, exact incl. ties, < 60 s") as notes:
        t0 = time.perf_counter()
        dim, n = 96, 10_000
        rng = np.random.default_rng(7)
        chunks = synthetic_chunks(n, seed=7)
        matrix = rng.standard_normal((n, dim))
        # plant groups of identical vectors so tie-breaking is exercised
        for g in range(50):
            src = int(rng.integers(n))
            matrix[rng.choice(n, size=4, replace=False)] = matrix[src]
        index = VectorIndex(dim, capacity=n)
        index.upsert_arrays(chunks, matrix)
        stored = matrix.astype(np.float32)
        ties_seen = 0
        for qi in range(100):
            if qi % 5 == 0:
                q = stored[int(rng.integers(n))].astype(np.float64) * 2.5  # query equal to a stored row
            else:
                q = rng.standard_normal(dim)
            want = oracle_search(chunks, stored, q, 10)
            for k in (1, 4, 10):
                got = index.search(q, k=k)
                assert [h.chunk_id for h in got] == [c for c, _ in want[:k]], (qi, k)
                assert [h.rank for h in got] == list(range(1, k + 1))
                for h, (_, s) in zip(got, want):
                    assert abs(h.score - s) <= 1e-12
            scores = [h.score for h in index.search(q, k=10)]
            ties_seen += len(scores) - len(set(scores))
        elapsed = time.perf_counter() - t0
        assert ties_seen > 0
        assert elapsed < 60.0, elapsed
        notes.append(f"{ties_seen} tied hits checked")


# -- prompt -------------------------------------------------------------------

def test_prompt_byte_exact():
    with criterion("prompt byte-exactness against golden file"):
        rendered = render_plain("What is the most common side effect of taking Chantix?").encode("utf-8")
        assert rendered == GOLDEN.read_bytes()


# -- metrics ------------------------------------------------------------------

JUDGE = LexicalJudge()
EMB = DeterministicEmbedder()


def test_metric_golden_values():
    with criterion("metric golden values within 1e-9"):
        assert abs(context_precision_from_flags([1, 1, 0, 0]) - 1.0) <= 1e-9
        assert abs(context_precision_from_flags([0, 1, 0, 0]) - 0.5) <= 1e-9
        assert abs(answer_correctness_from_counts(2, 1, 1, 0.8) - 0.7) <= 1e-9
        gt = (
            "Officials confirmed the water contains dangerous lead. "
            "Residents received free bottled water supplies. "
            "The governor declared a state emergency. "
            "Federal investigators opened a criminal probe."
        )
        ctx = "Officials confirmed the water contains dangerous lead. The governor declared a state emergency."
        assert abs(context_recall(EvalSample("q", gt, (ctx,), "a"), JUDGE) - 0.5) <= 1e-9


VOCAB = (
    "oil prices fell lead water flint zika virus mosquitoes senator debate iran sanctions "
    "governor emergency the a of was and in to rally caucus trump cruz rubio"
).split()


def rand_text(rng, sentences=(1, 4)):
    out = []
    for _ in range(rng.randint(*sentences)):
        words = [rng.choice(VOCAB) for _ in range(rng.randint(1, 9))]
        out.append(" ".join(words).capitalize() + rng.choice([".", "!", "?"]))
    return " ".join(out)


def rand_sample(rng):
    return EvalSample(
        rand_text(rng, (1, 1)),
        rand_text(rng),
        tuple(rand_text(rng) for _ in range(rng.randint(1, 4))),
        rand_text(rng),
    )


def all_metrics(s):
    return (
        context_recall(s, JUDGE),
        context_precision(s, JUDGE),
        answer_correctness(s, JUDGE, EMB),
        answer_relevance(s, JUDGE, EMB),
    )


def test_metric_properties():
    with criterion("metric properties: 500 samples each (range, CP rank, CR monotone, reproducible)"):
        rng = random.Random(11)
        samples = [rand_sample(rng) for _ in range(500)]
        first = [all_metrics(s) for s in samples]
        for vals in first:
            assert all(0.0 <= v <= 1.0 for v in vals), vals
        means = [math.fsum(col) / len(col) for col in zip(*first)]
        assert all(0.0 <= m <= 1.0 for m in means)

        # bit-equal reproducibility
        assert [all_metrics(s) for s in samples] == first

        # CP rank sensitivity: the single relevant context moved from rank 1 to rank K
        checked = 0
        for _ in range(500):
            gt = rand_text(rng)
            k = rng.randint(2, 6)
            fillers = [" ".join(rng.choice(["basketball", "weather", "traffic", "stocks"]) for _ in range(5)) for _ in range(k - 1)]
            at_top = context_precision(EvalSample("q", gt, tuple([gt] + fillers), "a"), JUDGE)
            pos = rng.randint(1, k - 1)
            moved = fillers[:pos] + [gt] + fillers[pos:]
            assert context_precision(EvalSample("q", gt, tuple(moved), "a"), JUDGE) < at_top
            checked += 1
        assert checked == 500

        # CR monotone under context addition
        for s in samples:
            grown = EvalSample(s.question, s.ground_truth, s.retrieved_contexts + (rand_text(rng),), s.generated_answer)
            assert context_recall(grown, JUDGE) >= context_recall(s, JUDGE)


# -- snapshot -----------------------------------------------------------------

def test_snapshot_fidelity(tmp_path):
    with criterion("snapshot fidelity: 1000 chunks, 20 queries, bit-equal scores"):
        dim = 64
        rng = np.random.default_rng(5)
        index = VectorIndex(dim)
        index.upsert_arrays(synthetic_chunks(1000, seed=5), rng.standard_normal((1000, dim)))
        queries = rng.standard_normal((20, dim))
        before = [index.search(q, k=10) for q in queries]
        path = tmp_path / "s.nrvi"
        index.save_snapshot(path)
        loaded = VectorIndex.load_snapshot(path)
        after = [loaded.search(q, k=10) for q in queries]
        for b, a in zip(before, after):
            assert [(h.chunk_id, h.rank) for h in a] == [(h.chunk_id, h.rank) for h in b]
            assert [h.score.hex() for h in a] == [h.score.hex() for h in b]


# -- end to end ---------------------------------------------------------------

# Frozen from tests/tools/derive_e2e_expected.py, which recomputes retrieval and
# every metric from their definitions without the package's scoring code.
E2E_QUESTION = "Why did lead get into the water in Flint?"
E2E_ANSWER = "After the city switched its water source to the Flint River, lead leached from old pipes into homes."
E2E_SOURCES = [
    "2016-01-20_MSNBC_Live#0",
    "2016-01-20_MSNBC_Live#1",
    "2016-01-20_MSNBC_Live#2",
    "2016-01-29_FOX_Special_Report#1",
]
E2E_MEANS = {"CR": 0.95, "CP": 0.933333333333, "AC": 0.677932978357, "AR": 0.369793995877}


def test_end_to_end_smoke(tmp_path, monkeypatch, capsys, scripted_llm, corpus_dir):
    with criterion("end-to-end smoke: ingest/chunk/index/ask/evaluate, frozen means, < 30 s") as notes:
        t0 = time.perf_counter()
        cfg = tmp_path / "c.yaml"
        cfg.write_text(
            f"snapshot_path: {tmp_path / 'idx.nrvi'}\n"
            f"llm:\n  endpoint_url: {scripted_llm.url}\n"
            "chunking:\n  max_chars: 300\n  overlap_chars: 60\n"
        )
        monkeypatch.chdir(tmp_path)

        def run(*argv):
            code = main(["--config", str(cfg), *map(str, argv)])
            out = capsys.readouterr().out
            assert code == 0, (argv, out)
            return out

        run("ingest", corpus_dir, "--out", "docs.jsonl", "--manifest", "manifest.json")
        run("chunk", "docs.jsonl", "--out", "chunks.jsonl")
        run("index", "build", "chunks.jsonl")
        answer = json.loads(run("ask", E2E_QUESTION, "--json"))
        assert answer["text"] == E2E_ANSWER
        assert [s["chunk_id"] for s in answer["sources"]] == E2E_SOURCES
        assert [s["rank"] for s in answer["sources"]] == [1, 2, 3, 4]

        text_out = run("ask", E2E_QUESTION)
        assert text_out.startswith(E2E_ANSWER + "\n")
        assert re.findall(r"\] (\S+#\d+) ", text_out) == E2E_SOURCES

        run("evaluate", DATA / "eval10.jsonl", "--out", "report.json", "--model", "news-reporter-3b")
        summary = json.loads((tmp_path / "report.json").read_text())["summary"]
        for m, v in E2E_MEANS.items():
            assert abs(summary[m] - v) <= 1e-9, (m, summary[m], v)
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0, elapsed
        notes.append(" ".join(f"{m}={summary[m]:.4f}" for m in E2E_MEANS))


# -- QA -----------------------------------------------------------------------

def test_qa_round_trip_and_dedup():
    with criterion("QA round-trip (50 pairs) and dedup idempotence (1000 near-duplicates)"):
        rng = random.Random(3)
        alphabet = "abcdefghijklmnopqrstuvwxyzáéñüç0123456789 ,;'\"-?!()"

        def phrase():
            return "".join(rng.choice(alphabet) for _ in range(rng.randint(3, 60))).strip() or "x"

        doc = make_doc("transcript", doc_id="rec-42", language="es")
        pairs = [QAPair(phrase(), phrase(), "es", source_recording_id="rec-42") for _ in range(50)]
        assert parse_qa_response(render_pairs(pairs), doc).pairs == pairs

        bases = [f"what happened with story number {i} today" for i in range(100)]
        noisy, origin = [], []
        for _ in range(1000):
            b = rng.randrange(len(bases))
            words = [w.upper() if rng.random() < 0.3 else w for w in bases[b].split()]
            q = (" " * rng.randint(1, 3)).join(words) + rng.choice(["?", "??", "!", ".", ""])
            if rng.random() < 0.3:
                q = rng.choice(["¿", "'", "\"", " "]) + q
            noisy.append(QAPair(q, "answer", "en"))
            origin.append(b)
        once = dedup_pairs(noisy)
        assert dedup_pairs(once) == once
        # oracle: the first variant generated from each base survives, in order
        first = {}
        for i, b in enumerate(origin):
            first.setdefault(b, i)
        assert once == [noisy[i] for i in sorted(first.values())]


# -- report schema ------------------------------------------------------------

class _VerbatimEngine:
    def __init__(self, truth):
        self.truth = truth
        self.config = EngineConfig()
        self.llm = type("L", (), {"model_id": "news-reporter-3b"})()

    def answer_with_contexts(self, question, cfg):
        from newsrag.core import Answer

        gt = self.truth[question]
        return Answer(gt, (), question, "news-reporter-3b"), ([gt] if cfg.use_rag else [])


def test_report_schema(tmp_path):
    with criterion("report schema: (model, setting, CR, CP, AC, AR) with null CR/CP for no rag"):
        pairs = [QAPair("Who won?", "The senator won the Iowa caucus.", "en")]
        engine = _VerbatimEngine({"Who won?": "The senator won the Iowa caucus."})
        rows = []
        for use_rag in (False, True):
            report = run_eval(pairs, engine, JUDGE, EMB, cfg=EngineConfig(use_rag=use_rag))
            path = tmp_path / f"{use_rag}.json"
            report.write(path)
            data = json.loads(path.read_text())
            assert data["columns"] == ["model", "setting", "CR", "CP", "AC", "AR"]
            assert list(data["summary"]) == data["columns"]
            rows.append(data["summary"])
        assert rows[0]["setting"] == "no rag" and rows[0]["CR"] is None and rows[0]["CP"] is None
        assert rows[1]["setting"] == "rag" and rows[1]["CR"] is not None and rows[1]["CP"] is not None
        lines = render_table(rows).splitlines()
        assert [c.strip() for c in lines[0].strip("|").split("|")] == ["Model", "Setting", "CR", "CP", "AC", "AR"]
        assert [c.strip() for c in lines[2].strip("|").split("|")][2:4] == ["-", "-"]


# -- performance --------------------------------------------------------------

def test_performance_floor():
    with criterion("performance: 100k x 768 exact search, k=4, < 150 ms per query") as notes:
        n, dim = 100_000, 768
        rng = np.random.default_rng(0)
        matrix = rng.standard_normal((n, dim), dtype=np.float32)
        index = VectorIndex(dim, capacity=n)
        index.upsert_arrays(synthetic_chunks(n, seed=0), matrix)
        del matrix
        timings = []
        for _ in range(10):
            q = rng.standard_normal(dim)
            t0 = time.perf_counter()
            hits = index.search(q, k=4)
            timings.append(time.perf_counter() - t0)
            assert len(hits) == 4
        worst = max(timings)
        notes.append(f"median {statistics.median(timings) * 1e3:.1f} ms, max {worst * 1e3:.1f} ms")
        assert worst < 0.150, timings
