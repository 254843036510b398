"""
Working through files
=====================

The same pipeline as the round trip, but with tensors and manifests on disk,
as the command line tool does it::

    cuboidpose generate --config configs/default.json --frames 20 --out data
    cuboidpose detect --config configs/default.json --in data --out est.txt
    cuboidpose evaluate --config configs/default.json --est est.txt --gt data/manifest.txt --out-csv curve.csv
"""
import os
import tempfile

from cuboidpose.pipeline import cmd_detect, cmd_evaluate, cmd_generate, load_config
from cuboidpose.tensorio import read_tensor

cfg = load_config(os.path.join(os.path.dirname(__file__), "..", "configs", "default.json"))

with tempfile.TemporaryDirectory() as tmp:
    data = os.path.join(tmp, "data")
    cmd_generate(cfg, 20, data, seed=7)
    print("written:", sorted(os.listdir(data))[:3], "...")
    t = read_tensor(os.path.join(data, "frame_000000.cracker_box.belief.dtns"))
    print("one belief tensor:", t.shape, t.dtype)

    est = os.path.join(tmp, "est.txt")
    records, errors = cmd_detect(cfg, data, est)
    print(f"{sum(len(r.objects) for r in records)} poses, {len(errors)} errors")
    print(open(est).read().splitlines()[:2])

    summary = cmd_evaluate(cfg, est, os.path.join(data, "manifest.txt"), os.path.join(tmp, "curve.csv"))
    print("\n".join(summary.lines()))
