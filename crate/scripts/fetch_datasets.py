#!/usr/bin/env python3
"""Rebuild data/metabric.csv and data/gbsg.csv from datasets bundled in PyPI wheels.

METABRIC: the 1,904-patient, 9-covariate cohort shipped in `survival-datasets`.
GBSG: 1,546 node-positive Rotterdam patients (`SurvSet` rott2) plus the 686
GBSG2 patients (`SurvSet` GBSG2), harmonised to a common covariate set with
durations in months.

Requires pip and pandas (with pyarrow for feather). Output is deterministic.
"""
import argparse
import glob
import io
import os
import subprocess
import sys
import tempfile
import zipfile

import pandas as pd

DAYS_PER_MONTH = 30.4375


def fetch_wheel(package, dest):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--timeout", "300",
         "-q", package, "-d", dest],
        check=True,
    )
    return zipfile.ZipFile(glob.glob(os.path.join(dest, "*.whl"))[0])


def build_metabric(wheel):
    df = pd.read_feather(io.BytesIO(wheel.read("survdata/metabric.feather")))
    out = pd.DataFrame({
        "patient_id": [f"MB{i:04d}" for i in range(len(df))],
        "mki67": df["x0"],
        "egfr": df["x1"],
        "pgr": df["x2"],
        "erbb2": df["x3"],
        "hormone_treatment": df["x4"].astype(int),
        "radiotherapy": df["x5"].astype(int),
        "chemotherapy": df["x6"].astype(int),
        "er_positive": df["x7"].astype(int),
        "age": df["x8"],
    })
    # HER2 status proxy: top 15% of ERBB2 expression.
    cut = out["erbb2"].quantile(0.85)
    out["her2_status"] = (out["erbb2"] > cut).map({True: "pos", False: "neg"})
    out["duration"] = df["duration"]
    out["event"] = df["event"].astype(int)
    return out


def size_class_mm(mm):
    if mm <= 20:
        return "le20"
    if mm <= 50:
        return "gt20_le50"
    return "gt50"


def build_gbsg(wheel):
    def load(name):
        return pd.read_pickle(io.BytesIO(wheel.read(f"SurvSet/resources/pickles/{name}.pickle")))

    rott = load("rott2")
    rott = rott[rott["num_nodes"] > 0].sort_values("pid")
    rott_map = {"<=20mm": "le20", ">20-50mmm": "gt20_le50", ">50mm": "gt50"}
    a = pd.DataFrame({
        "patient_id": [f"R{int(p):04d}" for p in rott["pid"]],
        "cohort": "rotterdam",
        "hormone_therapy": (rott["fac_hormon"] == "yes").astype(int),
        "age": rott["num_age"].astype(float),
        "postmenopausal": (rott["fac_meno"] == "post").astype(int),
        "size_class": rott["fac_tsize"].map(rott_map),
        "grade": rott["fac_grade"].astype(int),
        "positive_nodes": rott["num_nodes"].astype(float),
        "progesterone": rott["num_progesterone"].astype(float),
        "estrogen": rott["num_estrogen"].astype(float),
        "duration": rott["time"].astype(float),
        "event": rott["event"].astype(int),
    })

    g = load("GBSG2").sort_values("pid")
    grade_map = {"I": 1, "II": 2, "III": 3}
    b = pd.DataFrame({
        "patient_id": [f"G{int(p):04d}" for p in g["pid"]],
        "cohort": "gbsg",
        "hormone_therapy": (g["fac_horTh"] == "yes").astype(int),
        "age": g["num_age"].astype(float),
        "postmenopausal": (g["fac_menostat"] == "Post").astype(int),
        "size_class": g["num_tsize"].map(size_class_mm),
        "grade": g["fac_tgrade"].map(grade_map).astype(int),
        "positive_nodes": g["num_pnodes"].astype(float),
        "progesterone": g["num_progrec"].astype(float),
        "estrogen": g["num_estrec"].astype(float),
        "duration": g["time"].astype(float) / DAYS_PER_MONTH,
        "event": g["event"].astype(int),
    })
    return pd.concat([a, b], ignore_index=True)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        mb = build_metabric(fetch_wheel("survival-datasets==0.1.5", os.path.join(tmp, "sd")))
        gb = build_gbsg(fetch_wheel("SurvSet==0.2.11", os.path.join(tmp, "ss")))
    mb.to_csv(os.path.join(args.out, "metabric.csv"), index=False, float_format="%.6f")
    gb.to_csv(os.path.join(args.out, "gbsg.csv"), index=False, float_format="%.6f")
    for name, df in (("metabric", mb), ("gbsg", gb)):
        print(f"{name}: {len(df)} rows, {1 - df['event'].mean():.1%} censored")


if __name__ == "__main__":
    main()
