"""Download the categorical tables and MNIST into data/.

The three UCI tables come from the Orange3 3.8.0 source distribution
(``Orange/datasets/*.tab``) and are rewritten as plain CSV with a ``class``
column; MNIST comes from the ``mnist-data`` 1.2.6 npm package and is stored
as the usual gzipped IDX files. Needs ``pip`` and ``npm`` on PATH.
"""

import argparse
import csv
import glob
import gzip
import os
import shutil
import subprocess
import tarfile
import tempfile

TABLES = {"iris.tab": ("iris.csv", "iris"),
          "breast-cancer.tab": ("breast-cancer.csv", "recurrence"),
          "voting.tab": ("vote.csv", "party")}


def tab_to_csv(src, dst, class_col):
    lines = open(src).read().splitlines()
    header = lines[0].split("\t")
    rows = [ln.split("\t") for ln in lines[3:] if ln.strip()]
    with open(dst, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class" if h == class_col else h for h in header])
        for r in rows:
            r = r + [""] * (len(header) - len(r))
            w.writerow([v if v.strip() not in ("", "?", "~") else "?" for v in r])
    return len(rows)


def fetch_uci(out, tmp):
    subprocess.run(["pip", "download", "--no-deps", "--no-binary", ":all:", "Orange3==3.8.0", "-d", tmp],
                   check=True)
    sdist = glob.glob(os.path.join(tmp, "Orange3-3.8.0.tar.gz"))[0]
    os.makedirs(out, exist_ok=True)
    with tarfile.open(sdist) as tar:
        for name, (dst, cls) in TABLES.items():
            member = f"Orange3-3.8.0/Orange/datasets/{name}"
            tar.extract(member, tmp)
            n = tab_to_csv(os.path.join(tmp, member), os.path.join(out, dst), cls)
            print(f"{dst}: {n} rows")


def fetch_mnist(out, tmp):
    subprocess.run(["npm", "pack", "mnist-data@1.2.6"], cwd=tmp, check=True, stdout=subprocess.DEVNULL)
    os.makedirs(out, exist_ok=True)
    with tarfile.open(os.path.join(tmp, "mnist-data-1.2.6.tgz")) as tar:
        for m in tar.getmembers():
            if m.isfile() and m.name.startswith("package/data/") and "idx" in m.name:
                src = tar.extractfile(m)
                dst = os.path.join(out, os.path.basename(m.name) + ".gz")
                with gzip.open(dst, "wb") as fh:
                    shutil.copyfileobj(src, fh)
                print(dst)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--skip-mnist", action="store_true")
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        fetch_uci(os.path.join(args.out, "uci"), tmp)
        if not args.skip_mnist:
            fetch_mnist(os.path.join(args.out, "mnist"), tmp)


if __name__ == "__main__":
    main()
