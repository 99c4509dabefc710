#!/usr/bin/env python3
"""Fetch the AT&T/ORL face corpus and optionally write an lbdface manifest.

The 400 ORL images (40 subjects x 10 samples, 92x112 PGM) ship inside the
nimfa wheel on PyPI, so pip is the only network dependency.
"""

import argparse
import pathlib
import subprocess
import sys
import tempfile
import zipfile

WHEEL = "nimfa==1.4.0"
PREFIX = "nimfa/datasets/ORL_faces/"


def fetch(dest: pathlib.Path) -> int:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:",
             "-d", tmp, WHEEL],
            check=True,
        )
        wheels = list(pathlib.Path(tmp).glob("nimfa-*.whl"))
        if not wheels:
            sys.exit("pip did not produce a nimfa wheel")
        count = 0
        with zipfile.ZipFile(wheels[0]) as zf:
            for name in zf.namelist():
                if not (name.startswith(PREFIX) and name.endswith(".pgm")):
                    continue
                target = dest / name[len(PREFIX):]
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(zf.read(name))
                count += 1
    return count


def write_manifest(root: pathlib.Path, out: pathlib.Path, gallery_per_subject: int) -> None:
    lines = ["path,subject,sample,role,condition,eye_lx,eye_ly,eye_rx,eye_ry"]
    for s in range(1, 41):
        for k in range(1, 11):
            role = "gallery" if k <= gallery_per_subject else "test"
            path = (root / f"s{s}" / f"{k}.pgm").resolve()
            lines.append(f"{path},s{s},{k},{role},,,,,")
    out.write_text("\n".join(lines) + "\n")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dest", default="data/orl", type=pathlib.Path)
    ap.add_argument("--manifest", type=pathlib.Path,
                    help="also write a manifest (first N samples gallery, rest test)")
    ap.add_argument("--gallery-per-subject", type=int, default=5)
    args = ap.parse_args()

    complete = all((args.dest / f"s{s}" / f"{k}.pgm").is_file()
                   for s in range(1, 41) for k in range(1, 11))
    if not complete:
        n = fetch(args.dest)
        print(f"extracted {n} images into {args.dest}")
    else:
        print(f"{args.dest} already holds the full corpus")
    if args.manifest:
        write_manifest(args.dest, args.manifest, args.gallery_per_subject)
        print(f"wrote {args.manifest}")


if __name__ == "__main__":
    main()
