"""Regenerate the CSV files under data/ from their upstream package copies.

The LaLonde files come from the DAAG R package tables bundled in the
``rdatasets`` wheel (``nsw74demo`` is the Dehejia-Wahba experimental
sample, ``nsw74psid1`` the NSW treated units plus the PSID-1 comparison
group). The IHDP covariates come from the ``sim.csv`` table shipped inside
the ``econml`` wheel.

Usage::

    pip download --no-deps -d /tmp/wheels rdatasets econml
    python scripts/export_data.py /tmp/wheels
"""

from __future__ import annotations

import glob
import io
import os
import sys
import zipfile

import pandas as pd

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, os.pardir, "data")

LALONDE_COLUMNS = {
    "trt": "treat",
    "age": "age",
    "educ": "education",
    "black": "black",
    "hisp": "hispanic",
    "marr": "married",
    "nodeg": "nodegree",
    "re74": "re74",
    "re75": "re75",
    "re78": "re78",
}


def _lalonde(name: str) -> pd.DataFrame:
    import rdatasets

    df = rdatasets.data("DAAG", name)
    df = df[list(LALONDE_COLUMNS)].rename(columns=LALONDE_COLUMNS)
    return df


def _ihdp(wheel_dir: str) -> pd.DataFrame:
    (wheel,) = glob.glob(os.path.join(wheel_dir, "econml-*.whl"))
    with zipfile.ZipFile(wheel) as zf:
        raw = zf.read("econml/data/ihdp/sim.csv")
    return pd.read_csv(io.BytesIO(raw))


def main(argv: list[str]) -> int:
    wheel_dir = argv[1] if len(argv) > 1 else "/tmp/wheels"
    os.makedirs(OUT, exist_ok=True)
    exp = _lalonde("nsw74demo")
    assert exp.shape == (445, 10)
    exp.to_csv(os.path.join(OUT, "lalonde_experimental.csv"), index=False)
    comp = _lalonde("nsw74psid1")
    assert comp.shape == (2675, 10)
    comp.to_csv(os.path.join(OUT, "lalonde_psid_composite.csv"), index=False)
    ihdp = _ihdp(wheel_dir)
    assert ihdp.shape == (985, 30)
    ihdp.to_csv(os.path.join(OUT, "ihdp_covariates.csv"), index=False)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
