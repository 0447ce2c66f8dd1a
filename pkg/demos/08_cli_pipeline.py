"""
The command-line pipeline end to end
====================================

Drives the installed console script through a full run: generate data,
train a probe, plan budgets, select with seed floors, reweigh, and
diagnose. Every artifact lands in a scratch directory and every stage is
reproducible byte for byte.
"""

import json
import pathlib
import subprocess
import tempfile


def run(*args):
    cmd = ["tailprune", *map(str, args)]
    print("$", " ".join(cmd))
    subprocess.run(cmd, check=True)


with tempfile.TemporaryDirectory() as tmp:
    root = pathlib.Path(tmp)

    run("generate", "--classes", 6, "--ratio", 20, "--head-count", 80,
        "--dims", 8, "--seed", 11, "--out", root / "train.emb")
    run("calibrate", "--data", root / "train.emb", "--alpha", "cb",
        "--max-iter", 150, "--out", root / "head.json")
    run("allocate", "--data", root / "train.emb", "--budget", 48,
        "--gamma", "0.5", "--floor", 2, "--out", root / "plan.json")
    run("select", "--data", root / "train.emb", "--method", "sgs",
        "--k", "0.4", "--budget", 48, "--base-method", "flrbf",
        "--out", root / "sel.json")
    run("reweigh", "--data", root / "train.emb",
        "--selection", root / "sel.json", "--out", root / "rw.json")
    run("diagnose", "--data", root / "train.emb",
        "--selection", root / "rw.json", "--out", root / "diag.json")
    run("eval", "--data", root / "train.emb", "--head", root / "head.json",
        "--out", root / "eval.json")

    sel = json.loads((root / "sel.json").read_text())["selection"]
    diag = json.loads((root / "diag.json").read_text())["diagnostics"]
    ev = json.loads((root / "eval.json").read_text())["eval"]
    print("picked", len(sel["indices"]), "samples,",
          "per-class:", sel["per_class_counts"])
    print("prior mismatch after reweigh:", diag["tv"])
    print("probe OA:", round(ev["oa"], 3), "mAcc:", round(ev["macc"], 3))
