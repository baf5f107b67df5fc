#!/usr/bin/env python3
"""WebP transcoding helper used by the digital-baseline evaluation.

Protocol:
    webp_codec.py probe
        Exit 0 when the codec is usable (Pillow with WebP support).
    webp_codec.py batch <request.json>
        request.json: {"tasks": [{"quality": q, "in": in.ppm,
                                  "bin": stream.webp, "out": decoded.ppm}]}
        For every task: encode in.ppm at the given quality, write the
        bitstream to "bin", decode it again and write the pixels to "out".

Pixels travel as binary PPM (P6, maxval 255) in both directions.
"""

import io
import json
import sys


def _probe() -> int:
    try:
        from PIL import Image, features
    except ImportError:
        return 1
    if not features.check("webp"):
        return 1
    img = Image.new("RGB", (8, 8), (12, 34, 56))
    buf = io.BytesIO()
    img.save(buf, format="WEBP", quality=50)
    Image.open(io.BytesIO(buf.getvalue())).load()
    return 0


def _batch(request_path: str) -> int:
    from PIL import Image

    with open(request_path, "r", encoding="utf-8") as f:
        request = json.load(f)
    for task in request["tasks"]:
        quality = int(task["quality"])
        with Image.open(task["in"]) as src:
            rgb = src.convert("RGB")
            buf = io.BytesIO()
            # method=6 spends the most search effort, giving the smallest
            # bitstream at a fixed quality; exact=False allows RGB-only coding.
            rgb.save(buf, format="WEBP", quality=quality, method=6)
        with open(task["bin"], "wb") as f:
            f.write(buf.getvalue())
        with Image.open(io.BytesIO(buf.getvalue())) as dec:
            dec.convert("RGB").save(task["out"], format="PPM")
    return 0


def main(argv):
    if len(argv) >= 2 and argv[1] == "probe":
        return _probe()
    if len(argv) >= 3 and argv[1] == "batch":
        return _batch(argv[2])
    sys.stderr.write(__doc__)
    return 2


if __name__ == "__main__":
    sys.exit(main(sys.argv))
