"""The delimited results contract shared by estimators, oracle and CLI.

One schema for shadow and exact rows so they overlay directly:

    t,quantity,A,jc_or_k,value,std_error,M_U,M_S,mode,mitigated

* ``A`` holds the fixed reference block, 1-based and '+'-joined: the input
  block for mutual-information/ratio rows, the output block for operator
  weight rows.
* ``jc_or_k`` is the 1-based output qubit for per-qubit quantities and the
  locality k for weight rows.
* Floats carry 12 significant digits with '.' decimals; undefined
  estimates are written as ``nan``; fields that do not apply (e.g. M_U on
  exact rows) stay empty.
"""

from __future__ import annotations

import csv
import math

COLUMNS = ("t", "quantity", "A", "jc_or_k", "value", "std_error", "M_U", "M_S", "mode", "mitigated")

QUANTITIES = ("renyi_mi", "neg_ratio", "dk", "dk_cum", "log_negativity",
              "tri_info_2", "recovery_fidelity", "i3_renyi")


def fmt_float(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{float(x):.12g}"


def subset_label(qubits) -> str:
    """1-based '+'-joined label for a qubit subset."""
    return "+".join(str(q + 1) for q in sorted(qubits))


def make_row(t, quantity, a_label, jc_or_k, value, std_error=None, m_u=None, m_s=None,
             mode="exact", mitigated=False) -> dict:
    return {
        "t": str(int(t)),
        "quantity": quantity,
        "A": a_label,
        "jc_or_k": str(int(jc_or_k)),
        "value": fmt_float(value),
        "std_error": fmt_float(std_error),
        "M_U": "" if m_u is None else str(int(m_u)),
        "M_S": "" if m_s is None else str(int(m_s)),
        "mode": mode,
        "mitigated": "true" if mitigated else "false",
    }


def write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_rows(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != COLUMNS:
            raise ValueError(f"unexpected results header in {path}")
        return list(reader)


def parse_value(row, key="value"):
    text = row[key]
    return None if text == "" else float(text)


def row_key(row) -> tuple:
    return (row["t"], row["quantity"], row["A"], row["jc_or_k"])
