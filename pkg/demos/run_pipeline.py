"""
The whole pipeline from the command line entry point
====================================================

Equivalent to::

    memcard --image card.dd --out case --case-number 2014-0042 \\
            --bbb device.bbb --bbb-key-entry Databases/WhatsApp/key.bin --iv <hex>
"""

import json
import tempfile
from pathlib import Path

from memcard.cli import main
from memcard.fixtures import build_phone_card

work = Path(tempfile.mkdtemp(prefix="memcard-demo-"))
card = build_phone_card(work / "card")
out = work / "case"

rc = main([
    "--image", str(card.image.path), "--out", str(out),
    "--case-name", "Harbour", "--case-number", "2014-0042", "--item-number", "3", "--examiner", "J. Doe",
    "--bbb", str(card.bbb_path), "--bbb-key-entry", card.bbb_entry, "--iv", card.iv.hex(),
])
print("exit status", rc)

report = json.loads((out / "report.json").read_text())
print(report["counts"])
for stage in report["stages"]:
    print(f"{stage['name']:8} {stage['status']:9} {stage['detail']}")

# open this in a browser
print(out / "report.html")
