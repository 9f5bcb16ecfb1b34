#!/usr/bin/env python3
"""Build a flowlab manifest from a directory of N-BaIoT CSVs.

Expects the UCI layout where files are named like

    1.benign.csv
    1.gafgyt.combo.csv
    5.mirai.udp.csv
    9.mirai.udpplain.csv

(one prefix per device). Files whose attack name is not one of the ten
traffic classes used here (for example gafgyt.tcp) are skipped with a note.

Usage:
    python3 tools/make_nbaiot_manifest.py /path/to/nbaiot > manifest.json
    flowlab ingest --manifest manifest.json --out nbaiot.nbio
"""

import json
import re
import sys
from pathlib import Path

LABELS = {
    "benign": "Normal",
    "mirai.udp": "mirai_udp",
    "mirai.syn": "mirai_syn",
    "mirai.ack": "mirai_ack",
    "mirai.scan": "mirai_scan",
    "mirai.udpplain": "mirai_udplain",
    "gafgyt.udp": "gafgyt_udp",
    "gafgyt.combo": "gafgyt_combo",
    "gafgyt.junk": "gafgyt_junk",
    "gafgyt.scan": "gafgyt_scan",
}

NAME_RE = re.compile(r"^\d+\.(?P<kind>[a-z]+(?:\.[a-z]+)?)\.csv$")


def main() -> int:
    if len(sys.argv) != 2:
        print(__doc__.strip(), file=sys.stderr)
        return 1
    root = Path(sys.argv[1])
    if not root.is_dir():
        print(f"not a directory: {root}", file=sys.stderr)
        return 1

    entries = []
    skipped = []
    for path in sorted(root.rglob("*.csv")):
        m = NAME_RE.match(path.name)
        if not m:
            skipped.append(path.name)
            continue
        label = LABELS.get(m.group("kind"))
        if label is None:
            skipped.append(path.name)
            continue
        entries.append({"path": str(path.resolve()), "label": label})

    if not entries:
        print("no N-BaIoT CSVs found", file=sys.stderr)
        return 1
    for name in skipped:
        print(f"skipping {name} (not one of the ten traffic classes)", file=sys.stderr)

    json.dump(entries, sys.stdout, indent=2)
    print()
    print(f"{len(entries)} files, {len(skipped)} skipped", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
