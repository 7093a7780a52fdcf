#!/usr/bin/env python3
"""Write MovieLens 100k ratings to <data-dir>/ml-100k/u.data.

Tries the GroupLens archive first, then falls back to the copy bundled in the
recbole 1.2.1 wheel on PyPI (same 100000 ratings, one header line). Either way
the result is the tab-separated user/item/rating/timestamp file.
"""
import argparse
import hashlib
import io
import os
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

GROUPLENS = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
WHEEL_MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"
EXPECTED_LINES = 100_000


def from_grouplens():
    with urllib.request.urlopen(GROUPLENS, timeout=30) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return archive.read("ml-100k/u.data")


def from_wheel():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "recbole==1.2.1", "--no-deps",
             "--only-binary=:all:", "-q", "-d", tmp],
            check=True,
        )
        wheel = next(f for f in os.listdir(tmp) if f.endswith(".whl"))
        text = zipfile.ZipFile(os.path.join(tmp, wheel)).read(WHEEL_MEMBER).decode()
    lines = text.splitlines()
    if lines and lines[0].startswith("user_id"):
        lines = lines[1:]
    return ("\n".join(lines) + "\n").encode()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", default=os.environ.get("RS_DATA_DIR", "data"))
    args = parser.parse_args()

    try:
        data = from_grouplens()
        source = "grouplens"
    except Exception as err:  # noqa: BLE001
        print(f"grouplens download failed ({err}); using the recbole wheel", file=sys.stderr)
        data = from_wheel()
        source = "recbole wheel"

    n = data.count(b"\n")
    if n != EXPECTED_LINES:
        sys.exit(f"expected {EXPECTED_LINES} ratings, got {n}")
    out = os.path.join(args.data_dir, "ml-100k", "u.data")
    os.makedirs(os.path.dirname(out), exist_ok=True)
    with open(out, "wb") as f:
        f.write(data)
    print(f"wrote {out} from {source} ({n} ratings, md5 {hashlib.md5(data).hexdigest()})")


if __name__ == "__main__":
    main()
