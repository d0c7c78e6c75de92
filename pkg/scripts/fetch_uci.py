"""Download UCI data sets used by the acceptance suite into ``data/``.

Data are not vendored in the repository. Ionosphere and Spambase come
from the UCI Machine Learning Repository (CC BY 4.0). When the UCI host
is unreachable, ionosphere is taken from the copy shipped inside the
Orange3 wheel (``Orange/tests/datasets/ionosphere.tab``), fetched with
``pip download``.

Usage: python scripts/fetch_uci.py [ionosphere|spambase ...]
"""

import csv
import glob
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "data"
UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
SOURCES = {
    "ionosphere": (f"{UCI}/ionosphere/ionosphere.data", 34),
    "spambase": (f"{UCI}/spambase/spambase.data", 57),
}


def _write(name, rows, n_features):
    out = DATA / f"{name}.csv"
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(1, n_features + 1)] + ["label"])
        w.writerows(rows)
    print(f"{name}: {len(rows)} rows -> {out}")
    return out


def _label(cell):
    # ionosphere marks classes g(ood)/b(ad)
    return {"g": "1", "b": "0"}.get(cell.strip(), cell.strip())


def from_uci(name):
    url, n = SOURCES[name]
    with urllib.request.urlopen(url, timeout=20) as resp:
        text = resp.read().decode()
    rows = [line.split(",") for line in text.splitlines() if line.strip()]
    return _write(name, [r[:n] + [_label(r[n])] for r in rows], n)


def ionosphere_from_orange():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp,
                        "orange3"], check=True)
        wheel = glob.glob(f"{tmp}/*.whl")[0]
        text = zipfile.ZipFile(wheel).read("Orange/tests/datasets/ionosphere.tab").decode()
    lines = text.splitlines()[3:]  # three-line Orange header
    rows = [line.split("\t") for line in lines if line.strip()]
    return _write("ionosphere", [r[:34] + [_label(r[34])] for r in rows], 34)


def fetch(name):
    DATA.mkdir(exist_ok=True)
    try:
        return from_uci(name)
    except OSError as e:
        if name != "ionosphere":
            raise
        print(f"UCI unreachable ({e}); falling back to the Orange3 copy")
        return ionosphere_from_orange()


if __name__ == "__main__":
    for name in sys.argv[1:] or ["ionosphere"]:
        fetch(name)
