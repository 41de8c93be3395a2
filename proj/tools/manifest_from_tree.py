#!/usr/bin/env python3
"""Build a ttsound manifest CSV (path,onset_ms,surface,spin) from a directory
tree of labeled WAV recordings.

Labels come from path components, case-insensitively:
  surface: "racket_3", "racket03", "Racket 3", "r3" style names -> racket_03;
           "table", "floor", "other"
  spin:    "back"/"backspin", "flat"/"nospin"/"no_spin", "top"/"topspin"
Spin is only kept for racket recordings.

Onsets come from a sidecar next to each WAV with the same stem:
  <stem>.txt / <stem>.csv  one onset per line (first numeric field), or an
                           Audacity label track (start<TAB>end<TAB>label)
Sidecar times are seconds unless --unit ms is given. Without a sidecar the
file is skipped, or, with --whole-file-onset-ms X, treated as one bounce at X.

Files whose surface cannot be inferred are an error unless --skip-unlabeled.
"""

import argparse
import csv
import os
import re
import sys
from pathlib import Path

SURFACE_WORDS = {"table": "table", "floor": "floor", "other": "other"}
SPIN_PATTERNS = [
    (re.compile(r"^(back|backspin|back_spin|underspin)$"), "back"),
    (re.compile(r"^(flat|nospin|no_spin|no-spin|none)$"), "flat"),
    (re.compile(r"^(top|topspin|top_spin)$"), "top"),
]
RACKET = re.compile(r"^(?:racket|r)[ _\-]?0*(\d{1,2})$")
TOKEN_SPLIT = re.compile(r"[\s/\\.]+")


def tokens(rel_path):
    """Path components plus their '_'/'-' separated pieces, outermost first."""
    out = []
    for part in Path(rel_path).with_suffix("").parts:
        part = part.lower()
        out.append(part)
        pieces = re.split(r"[_\-\s]+", part)
        out.extend(pieces)
        out.extend(a + "_" + b for a, b in zip(pieces, pieces[1:]))
    return out


def infer_labels(rel_path):
    surface = None
    spin = None
    for tok in tokens(rel_path):
        m = RACKET.match(tok)
        if m and 1 <= int(m.group(1)) <= 10:
            surface = "racket_%02d" % int(m.group(1))
        elif tok in SURFACE_WORDS:
            surface = SURFACE_WORDS[tok]
        for pattern, name in SPIN_PATTERNS:
            if pattern.match(tok):
                spin = name
    if surface is None or not surface.startswith("racket"):
        spin = None
    return surface, spin


def read_onsets(sidecar, unit):
    scale = 1.0 if unit == "ms" else 1000.0
    onsets = []
    with open(sidecar, newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            field = re.split(r"[\t,; ]+", line)[0]
            try:
                value = float(field)
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise SystemExit("%s:%d: not a number: %r" % (sidecar, lineno, field))
            if value < 0:
                raise SystemExit("%s:%d: negative onset" % (sidecar, lineno))
            onsets.append(value * scale)
    return onsets


def find_sidecar(wav):
    for ext in (".txt", ".csv"):
        candidate = wav.with_suffix(ext)
        if candidate.exists():
            return candidate
    return None


def build(root, out_path, unit, whole_file_onset_ms, skip_unlabeled):
    root = Path(root).resolve()
    out_dir = Path(out_path).resolve().parent
    rows = []
    problems = []
    for wav in sorted(root.rglob("*")):
        if wav.suffix.lower() != ".wav" or not wav.is_file():
            continue
        rel = wav.relative_to(root)
        surface, spin = infer_labels(rel)
        if surface is None:
            if not skip_unlabeled:
                problems.append("cannot infer surface label for %s" % rel)
            continue
        sidecar = find_sidecar(wav)
        if sidecar is not None:
            onsets = read_onsets(sidecar, unit)
        elif whole_file_onset_ms is not None:
            onsets = [whole_file_onset_ms]
        else:
            continue
        path = os.path.relpath(wav, out_dir)
        if "," in path:
            problems.append("path contains a comma: %s" % path)
            continue
        for onset in onsets:
            rows.append((path, onset, surface, spin or ""))
    if problems:
        for p in problems:
            print("error: " + p, file=sys.stderr)
        raise SystemExit(2)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "onset_ms", "surface", "spin"])
        for path, onset, surface, spin in rows:
            writer.writerow([path, repr(float(onset)), surface, spin])
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("root", help="directory holding the recordings")
    parser.add_argument("--out", required=True, help="manifest CSV to write")
    parser.add_argument("--unit", choices=("s", "ms"), default="s", help="unit of sidecar onset times")
    parser.add_argument("--whole-file-onset-ms", type=float, default=None,
                        help="treat a WAV without sidecar as one bounce at this onset")
    parser.add_argument("--skip-unlabeled", action="store_true", help="ignore WAVs without a surface label")
    args = parser.parse_args(argv)
    rows = build(args.root, args.out, args.unit, args.whole_file_onset_ms, args.skip_unlabeled)
    counts = {}
    for _, _, surface, spin in rows:
        key = surface + ("/" + spin if spin else "")
        counts[key] = counts.get(key, 0) + 1
    for key in sorted(counts):
        print("%-16s %6d" % (key, counts[key]))
    print("%-16s %6d" % ("total", len(rows)))


if __name__ == "__main__":
    main()
