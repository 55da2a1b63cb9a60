"""运行报告：每个命令一份 Markdown 文件，每次运行追加一节摘要表。"""

from __future__ import annotations

import os
from datetime import datetime
from typing import Dict, Mapping, Optional

from config_manager import config_manager


def note_path(command: str, folder: Optional[str] = None) -> str:
    base_dir = folder or config_manager.get_notes_dir()
    os.makedirs(base_dir, exist_ok=True)
    name = "".join(c if c.isalnum() or c in "-_" else "_" for c in command.strip()) or "run"
    return os.path.join(base_dir, f"{name}.md")


def render_summary(summary: Mapping[str, object]) -> str:
    """两列 Markdown 表格；浮点数保留 6 位有效数字。"""
    lines = ["| 项目 | 值 |", "|---|---|"]
    for key, value in summary.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        lines.append(f"| {key} | {value} |")
    return "\n".join(lines)


def write_run_note(command: str, summary: Mapping[str, object], folder: Optional[str] = None) -> Dict[str, str]:
    """把一次 train / eval / bench 的摘要追加到 <NOTES_DIR>/<command>.md。

    Return:
    { ok, path }
    """
    path = note_path(command, folder)
    now = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
    fresh = not os.path.exists(path)
    with open(path, "a", encoding="utf-8") as f:
        if fresh:
            f.write(f"# {command} 运行记录\n")
        f.write(f"\n## {now}\n\n{render_summary(summary)}\n")
    return {"ok": True, "path": path}
