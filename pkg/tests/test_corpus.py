import pytest
from hypothesis import given, strategies as st

from sotana import corpus


def so_record(i, body="how do I do this", answer="like so"):
    return {"id": str(i), "title": f"question {i}", "body": body, "answer": answer}


# ---------------------------------------------------------------------------
# load_so_questions


def test_bigblock_records_excluded(write_jsonl):
    records = [so_record(i) for i in range(7)]
    records += [so_record(7 + j, body=f"see BIGBLOCK here {j}") for j in range(3)]
    path = write_jsonl("so.jsonl", records)
    loaded, report = corpus.load_so_questions(path)
    assert len(loaded) == 7
    assert report.excluded_by_reason == {"bigblock": 3}


def test_bigblock_checked_in_answer_too(write_jsonl):
    path = write_jsonl("so.jsonl", [so_record(0, answer="BIGBLOCK")])
    loaded, report = corpus.load_so_questions(path)
    assert loaded == [] and report.excluded_by_reason == {"bigblock": 1}


def test_no_loaded_record_contains_bigblock(write_jsonl):
    records = [so_record(i) for i in range(5)]
    records.append(so_record(9, body="BIGBLOCK"))
    loaded, _ = corpus.load_so_questions(write_jsonl("so.jsonl", records))
    for rec in loaded:
        assert "BIGBLOCK" not in rec.title + rec.body + rec.answer


def test_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    loaded, report = corpus.load_so_questions(path)
    assert loaded == [] and report.total_excluded == 0


def test_malformed_line_is_collected_not_fatal(tmp_path, write_jsonl):
    path = write_jsonl("so.jsonl", [so_record(0)])
    with path.open("a") as fh:
        fh.write("{not json\n")
    loaded, report = corpus.load_so_questions(path)
    assert len(loaded) == 1
    assert report.excluded_by_reason["malformed"] == 1


def test_unreadable_file_is_fatal(tmp_path):
    with pytest.raises(corpus.CorpusError):
        corpus.load_so_questions(tmp_path / "missing.jsonl")


def test_synthetic_506_record_split(write_jsonl):
    records = [so_record(i) for i in range(420)]
    records += [so_record(1000 + j, body=f"BIGBLOCK {j}") for j in range(86)]
    loaded, report = corpus.load_so_questions(write_jsonl("so.jsonl", records))
    assert len(loaded) == 420
    assert report.excluded_by_reason["bigblock"] == 86


# ---------------------------------------------------------------------------
# load_code_summaries


def summ_record(i):
    return {"code": f"def f{i}(): pass", "summary": f"does thing {i}"}


def test_limit_takes_first_n_in_order(write_jsonl):
    path = write_jsonl("summ.jsonl", [summ_record(i) for i in range(250)])
    loaded, _ = corpus.load_code_summaries(path, limit=100)
    assert len(loaded) == 100
    assert [p.summary for p in loaded] == [f"does thing {i}" for i in range(100)]


def test_limit_zero(write_jsonl):
    path = write_jsonl("summ.jsonl", [summ_record(0)])
    loaded, _ = corpus.load_code_summaries(path, limit=0)
    assert loaded == []


def test_limit_clamps_to_file_length(write_jsonl):
    path = write_jsonl("summ.jsonl", [summ_record(i) for i in range(5)])
    loaded, _ = corpus.load_code_summaries(path, limit=100)
    assert len(loaded) == 5


def test_missing_key_skipped_and_counted(write_jsonl):
    path = write_jsonl("summ.jsonl", [summ_record(0), {"code": "x"}, summ_record(1)])
    loaded, report = corpus.load_code_summaries(path, limit=10)
    assert len(loaded) == 2
    assert report.excluded_by_reason["missing_field"] == 1


def test_limited_load_is_prefix_of_unlimited(write_jsonl):
    path = write_jsonl("summ.jsonl", [summ_record(i) for i in range(40)])
    full, _ = corpus.load_code_summaries(path, limit=10**9)
    for k in (0, 1, 7, 40):
        prefix, _ = corpus.load_code_summaries(path, limit=k)
        assert prefix == full[:k]


# ---------------------------------------------------------------------------
# load_codegen_tasks


def task_record(i):
    return {
        "task_id": f"T/{i}",
        "prompt": f"def f{i}():\n",
        "tests": "def check(candidate): pass",
        "entry_point": f"f{i}",
    }


def test_codegen_full_load(write_jsonl):
    path = write_jsonl("gen.jsonl", [task_record(i) for i in range(164)])
    tasks, _ = corpus.load_codegen_tasks(path)
    assert len(tasks) == 164


def test_codegen_duplicate_id_fatal(write_jsonl):
    path = write_jsonl("gen.jsonl", [task_record(1), task_record(1)])
    with pytest.raises(corpus.CorpusError, match="T/1"):
        corpus.load_codegen_tasks(path)


def test_codegen_single_record(write_jsonl):
    path = write_jsonl("gen.jsonl", [task_record(3)])
    tasks, _ = corpus.load_codegen_tasks(path)
    t = tasks[0]
    assert (t.task_id, t.entry_point) == ("T/3", "f3")
    assert t.prompt and t.tests


# ---------------------------------------------------------------------------
# render_prompt


def test_render_contains_all_sections():
    p = corpus.render_prompt("Summarize this code.", "def f(): pass")
    assert "### Instruction:" in p.rendered
    assert "### Input:" in p.rendered
    assert "### Response:" in p.rendered


def test_render_omits_input_section_when_empty():
    p = corpus.render_prompt("Answer the question.", "")
    assert "### Input:" not in p.rendered
    assert "### Instruction:" in p.rendered


def test_render_empty_instruction_raises():
    with pytest.raises(corpus.CorpusError):
        corpus.render_prompt("   ", "x")


def test_render_truncates_long_input_to_exact_max():
    huge = " ".join(f"w{i}" for i in range(10_000))
    p = corpus.render_prompt("Answer the question.", huge, max_tokens=512)
    assert corpus.count_tokens(p.rendered) == 512
    # instruction preserved, input truncated from the right
    assert "Answer the question." in p.rendered
    assert p.rendered.index("w0") < p.rendered.index("w100")
    assert "w9999" not in p.rendered


@given(st.text(min_size=1, max_size=30).filter(lambda s: s.strip()), st.text(max_size=60))
def test_render_deterministic(instr, inp):
    a = corpus.render_prompt(instr, inp)
    b = corpus.render_prompt(instr, inp)
    assert a.rendered == b.rendered
