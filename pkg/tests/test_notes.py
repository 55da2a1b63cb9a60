import os

from dctnet import notes


def test_run_notes_append_sections(tmp_path):
    first = notes.write_run_note("eval", {"model": "lenet", "accuracy": 98.123456789}, folder=str(tmp_path))
    assert first["ok"] and os.path.basename(first["path"]) == "eval.md"
    notes.write_run_note("eval", {"model": "dct_mlp", "accuracy": 97.5}, folder=str(tmp_path))
    with open(first["path"], encoding="utf-8") as f:
        text = f.read()
    assert text.startswith("# eval 运行记录")
    assert text.count("## ") == 2
    assert "| model | lenet |" in text and "| accuracy | 98.1235 |" in text
    assert "| model | dct_mlp |" in text


def test_note_path_sanitizes_command(tmp_path):
    assert os.path.basename(notes.note_path("bench n/32", str(tmp_path))) == "bench_n_32.md"
