"""Fronthaul bits, detection and sniffer exposure per placement and mantissa width."""

import argparse
import csv
import sys

from oran_isac.harness import compare_placements, parse_scenario
from oran_isac.harness.compare import PLACEMENT_COLUMNS

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("scenario", nargs="?", default="scenarios/default.json")
p.add_argument("--workers", type=int, default=1)
args = p.parse_args()

rows = compare_placements(parse_scenario(args.scenario), workers=args.workers)
w = csv.DictWriter(sys.stdout, PLACEMENT_COLUMNS, lineterminator="\n")
w.writeheader()
w.writerows(rows)
