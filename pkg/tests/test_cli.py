import json
import os
import select
import subprocess
import sys

import numpy as np
import pytest

from dynmatch import Matcher, distort, make_shape
from dynmatch.cli import EXIT_CONFIG, EXIT_IO, EXIT_PARSE, LAMBDA_SWEEP, main


def write_lines(path, values):
    path.write_text("".join(f"{float(v)!r}\n" for v in values))
    return str(path)


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def events_of(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


@pytest.fixture
def planted(tmp_path):
    q = make_shape("arc_blob", 60)
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.standard_normal(100), distort(q, 3.0, 2.0, 1.0),
                        rng.standard_normal(100)])
    return write_lines(tmp_path / "q.txt", q), write_lines(tmp_path / "s.txt", x)


def test_match_finds_planted_copy(planted, capsys):
    qp, sp = planted
    code, out, err = run(["match", "--query", qp, "--stream", sp, "--epsilon", 1.0], capsys)
    assert code == 0
    evs = events_of(out)
    assert [(e["start"], e["end"]) for e in evs] == [(100, 159)]
    assert "query" not in evs[0]
    summary = json.loads(err.strip().splitlines()[-1])["summary"]
    assert summary["ticks"] == 260 and summary["events"] == [1]


def test_match_reads_tick_value_csv(planted, tmp_path, capsys):
    qp, sp = planted
    vals = [float(v) for v in open(sp)]
    csv_path = tmp_path / "s.csv"
    csv_path.write_text("tick,value\n" + "".join(f"{t},{v!r}\n" for t, v in enumerate(vals)))
    _, a, _ = run(["match", "--query", qp, "--stream", sp, "--epsilon", 1.0], capsys)
    _, b, _ = run(["match", "--query", qp, "--stream", csv_path, "--epsilon", 1.0], capsys)
    assert a == b


def test_match_topk_and_multi_query(planted, tmp_path, capsys):
    qp, sp = planted
    q2 = write_lines(tmp_path / "tri.txt", make_shape("triangle_wave", 40))
    code, out, _ = run(["match", "--query", qp, "--query", q2, "--stream", sp,
                        "--mode", "topk", "--k", 2], capsys)
    assert code == 0
    evs = events_of(out)
    assert {e["query"] for e in evs} == {"q", "tri"}
    top_q = [e for e in evs if e["query"] == "q"]
    assert len(top_q) == 2 and [e["start"] for e in top_q] == sorted(e["start"] for e in top_q)
    best = min(top_q, key=lambda e: e["distance"])
    assert (best["start"], best["end"]) == (100, 159)


def test_match_normalized_out(planted, tmp_path, capsys):
    qp, sp = planted
    norm = tmp_path / "norm.csv"
    code, _, _ = run(["match", "--query", qp, "--stream", sp, "--epsilon", 1.0,
                      "--normalized-out", norm], capsys)
    assert code == 0
    rows = norm.read_text().splitlines()
    assert rows[0] == "query,start,tick,value" and len(rows) == 61
    vals = np.array([float(r.split(",")[3]) for r in rows[1:]])
    q = make_shape("arc_blob", 60)
    np.testing.assert_allclose(vals, (q - q.mean()) / q.std(), atol=1e-6)


def test_empty_stream(planted, tmp_path, capsys):
    qp, _ = planted
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    code, out, _ = run(["match", "--query", qp, "--stream", empty, "--epsilon", 1.0], capsys)
    assert code == 0 and out == ""


def test_malformed_line_cites_line_number(planted, tmp_path, capsys):
    qp, _ = planted
    bad = tmp_path / "bad.txt"
    bad.write_text("1.0\n2.0\nabc\n4.0\n")
    code, _, err = run(["match", "--query", qp, "--stream", bad, "--epsilon", 1.0], capsys)
    assert code == EXIT_PARSE
    assert f"{bad}:3" in err and "abc" in err


def test_nonfinite_sample_is_parse_error(planted, tmp_path, capsys):
    qp, _ = planted
    bad = tmp_path / "bad.txt"
    bad.write_text("1.0\nnan\n")
    code, _, err = run(["match", "--query", qp, "--stream", bad, "--epsilon", 1.0], capsys)
    assert code == EXIT_PARSE and ":2" in err


def test_missing_file_is_io_error(planted, tmp_path, capsys):
    qp, _ = planted
    code, _, err = run(["match", "--query", qp, "--stream", tmp_path / "nope.txt",
                        "--epsilon", 1.0], capsys)
    assert code == EXIT_IO and "nope.txt" in err


@pytest.mark.parametrize("extra", [
    ["--mode", "topk", "--k", 3, "--epsilon", 1.0],
    ["--mode", "disjoint", "--k", 3, "--epsilon", 1.0],
    ["--mode", "disjoint"],
    ["--epsilon", 1.0, "--band", -0.5],
    ["--epsilon", 1.0, "--trace-window", -1],
    ["--epsilon", 1.0, "--baseline-window", 60, "--normalized-out", "x.csv"],
])
def test_bad_config_is_config_error(planted, capsys, extra):
    qp, sp = planted
    code, _, err = run(["match", "--query", qp, "--stream", sp, *extra], capsys)
    assert code == EXIT_CONFIG and "configuration error" in err


def test_constant_query_is_config_error(planted, tmp_path, capsys):
    _, sp = planted
    flat = write_lines(tmp_path / "flat.txt", [2.0] * 20)
    code, _, _ = run(["match", "--query", flat, "--stream", sp, "--epsilon", 1.0], capsys)
    assert code == EXIT_CONFIG


def test_bad_buffering_env(planted, capsys, monkeypatch):
    qp, sp = planted
    monkeypatch.setenv("DYNMATCH_BUFFERING", "sometimes")
    code, _, err = run(["match", "--query", qp, "--stream", sp, "--epsilon", 1.0], capsys)
    assert code == EXIT_CONFIG and "DYNMATCH_BUFFERING" in err


def test_generate_layout_and_reproducibility(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["generate", "--m", 40, "--seed", 9, "--out-dir", d, "--queries"], capsys)[0] == 0
    truth = (a / "stream_truth.csv").read_text().splitlines()
    assert truth[0] == "start,end,label" and len(truth) == 1 + 180
    assert (a / "stream.csv").read_bytes() == (b / "stream.csv").read_bytes()
    assert (a / "stream_truth.csv").read_bytes() == (b / "stream_truth.csv").read_bytes()
    assert (a / "stairs.txt").exists()
    assert (a / "stream.csv").read_text().startswith("tick,value\n0,")


def test_generate_prints_drawn_seed(tmp_path, capsys):
    code, _, err = run(["generate", "--m", 40, "--plants", 1, "--shapes", "stairs",
                        "--out-dir", tmp_path], capsys)
    assert code == 0 and "seed=" in err


def test_generate_lambda_sweep(tmp_path, capsys):
    code, _, _ = run(["generate", "--m", 40, "--plants", 2, "--seed", 1, "--lambda-sweep",
                      "--out-dir", tmp_path], capsys)
    assert code == 0
    streams = sorted(p.name for p in tmp_path.glob("stream_lam*.csv")
                     if not p.name.endswith("_truth.csv"))
    assert len(streams) == len(LAMBDA_SWEEP) == 7
    assert "stream_lam0.25.csv" in streams and "stream_lam10.csv" in streams


def test_generate_then_match_then_eval(tmp_path, capsys):
    run(["generate", "--m", 60, "--plants", 5, "--shapes", "arc_blob", "--seed", 3,
         "--out-dir", tmp_path, "--queries"], capsys)
    events = tmp_path / "ev.jsonl"
    code, _, _ = run(["match", "--query", tmp_path / "arc_blob.txt",
                      "--stream", tmp_path / "stream.csv", "--mode", "topk", "--k", 5,
                      "--output", events], capsys)
    assert code == 0
    code, out, _ = run(["eval", "--events", events, "--truth", tmp_path / "stream_truth.csv",
                        "--stream", tmp_path / "stream.csv",
                        "--query", tmp_path / "arc_blob.txt"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["recall"] == 1.0 and rep["mean_znorm_dtw"] < 1.0


def test_eval_perfect_and_empty(tmp_path, capsys):
    truth = tmp_path / "t.csv"
    truth.write_text("start,end,label\n10,19,a\n40,49,a\n")
    perfect = tmp_path / "p.jsonl"
    perfect.write_text("".join(json.dumps({"start": s, "end": e}) + "\n"
                               for s, e in [(10, 19), (40, 49)]))
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    _, out, _ = run(["eval", "--events", perfect, "--truth", truth], capsys)
    assert json.loads(out)["recall"] == 1.0
    _, out, _ = run(["eval", "--events", empty, "--truth", truth], capsys)
    assert json.loads(out)["recall"] == 0.0


def test_eval_delay(tmp_path, capsys):
    truth = tmp_path / "t.csv"
    truth.write_text("0,9\n")
    ev = tmp_path / "e.jsonl"
    ev.write_text('{"start": 0, "end": 9}\n')
    _, out, _ = run(["eval", "--events", ev, "--truth", truth, "--dt-p", 0.001,
                     "--dt-s", 0.004, "--delay-m", 100, "--delay-method", "buffered"], capsys)
    assert json.loads(out)["modeled_delay_s"] == pytest.approx(0.401)


def test_eval_malformed_events(tmp_path, capsys):
    truth = tmp_path / "t.csv"
    truth.write_text("0,9\n")
    ev = tmp_path / "e.jsonl"
    ev.write_text('{"start": 0, "end": 9}\nnot json\n')
    code, _, err = run(["eval", "--events", ev, "--truth", truth], capsys)
    assert code == EXIT_PARSE and ":2" in err


def test_eval_lambda_sweep_csv(tmp_path, capsys):
    out_csv = tmp_path / "sweep.csv"
    code, _, _ = run(["eval", "--lambda-sweep", "--lambdas", 1.0, "--shapes", "arc_blob",
                      "--m", 60, "--plants", 3, "--seed", 2, "--with-baseline",
                      "--output", out_csv], capsys)
    assert code == 0
    rows = out_csv.read_text().splitlines()
    assert rows[0] == "lambda,shape,method,recall"
    assert rows[1].startswith("1,arc_blob,dnrtpm,") and rows[2].startswith("1,arc_blob,baseline,")
    assert float(rows[1].split(",")[3]) == 1.0


def test_bench_output(tmp_path, capsys):
    code, out, _ = run(["bench", "--m", 8, 16, "--ticks", 3000, "--window", 500,
                        "--seed", 0], capsys)
    assert code == 0
    recs = events_of(out)
    assert [r["m"] for r in recs] == [8, 16]
    assert all(r["n"] == 3000 and r["mean"] > 0 for r in recs)


def lockstep(query_path, values, expected_ends, epsilon, timeout=20.0):
    """Feed samples one line at a time. Where an event is expected, it must
    be readable before the next sample is written; elsewhere nothing may
    arrive. Returns the end ticks in arrival order."""
    proc = subprocess.Popen(
        [sys.executable, "-m", "dynmatch", "match", "--query", query_path,
         "--mode", "monitor", "--epsilon", repr(epsilon)],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
        text=True, bufsize=1)
    got = []
    try:
        for t, v in enumerate(values):
            proc.stdin.write(f"{float(v)!r}\n")
            proc.stdin.flush()
            wait = timeout if t in expected_ends else 0.0
            if select.select([proc.stdout], [], [], wait)[0]:
                got.append((json.loads(proc.stdout.readline())["end"], t))
    finally:
        proc.stdin.close()
        rest = proc.stdout.read()
        proc.wait(timeout=30)
    assert proc.returncode == 0 and rest == ""
    return got


def test_monitor_events_precede_next_sample(tmp_path):
    q = make_shape("arc_blob", 30)
    qp = write_lines(tmp_path / "q.txt", q)
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.standard_normal(20), 4 * q - 1, rng.standard_normal(5)])
    mt = Matcher(q, mode="monitor", epsilon=0.5)
    expected = [ev.end for ev in mt.feed(x)]
    assert 49 in expected
    got = lockstep(qp, x, set(expected), 0.5)
    assert got == [(e, e) for e in expected]
