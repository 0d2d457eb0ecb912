"""Placeholder frame rendering.

Samples carry symbolic frame references; these helpers draw simple labeled
PNGs (room, step, and the action each human is performing) so the review UI
has something to show without a 3D renderer. A real image provider can drop
files into corpus/frames/<scenario_id>/<step>.png instead and everything
downstream picks them up.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

from PIL import Image, ImageDraw

_BG = (24, 26, 32)
_FG = (222, 226, 230)
_ACCENT = (110, 168, 254)


def render_frame_png(
    scenario_id: str,
    step: int,
    action_lines: list[str] | None = None,
    size: tuple[int, int] = (320, 240),
) -> bytes:
    img = Image.new("RGB", size, _BG)
    draw = ImageDraw.Draw(img)
    draw.rectangle([4, 4, size[0] - 5, size[1] - 5], outline=_ACCENT)
    draw.text((14, 12), scenario_id, fill=_ACCENT)
    draw.text((14, 30), f"step {step}", fill=_FG)
    for i, line in enumerate(action_lines or []):
        draw.text((14, 58 + 18 * i), line, fill=_FG)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def actions_at_step(scenario_meta: dict, step: int) -> list[str]:
    """Active action per human from a stored scenarios/<id>.json record."""
    lines = []
    for entry in scenario_meta.get("timeline", []):
        if entry["start"] <= step < entry["end"]:
            lines.append(f"h{entry['h']}: {entry['verb']} {entry['noun']}")
    return sorted(lines)


def render_corpus_frames(corpus_root: str | Path, size=(320, 240)) -> int:
    """Render every referenced frame into corpus/frames/. Returns the count."""
    root = Path(corpus_root)
    rendered = 0
    for meta_path in sorted((root / "scenarios").glob("*.json")):
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        sid = meta["scenario_id"]
        out_dir = root / "frames" / sid
        out_dir.mkdir(parents=True, exist_ok=True)
        for step in range(meta["num_steps"]):
            out = out_dir / f"{step}.png"
            if out.exists():
                continue
            out.write_bytes(
                render_frame_png(sid, step, actions_at_step(meta, step), size)
            )
            rendered += 1
    return rendered
