"""Command-line driver: run experiments end to end from a JSON config.

Verbs:

* ``run``       protocol + estimation + exact reference, all artifacts
* ``oracle``    exact-only results for a config
* ``compare``   join two results files (or shadow vs exact rows of one)
* ``calibrate`` readout confusion matrices for a config's noise model

Exit codes: 0 ok, 2 config error, 3 runtime error. The worker count for
the per-timestep work units comes from ``OPSHADOW_WORKERS`` (default 1);
``--deterministic`` forces sequential execution. Results are byte-stable
for a fixed config and seed either way, because every timestep draws from
its own counter-based random stream.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, circuits, estimators, oracle, results, runtime

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["model", "seed", "regions", "quantities", "output_dir"],
    "additionalProperties": False,
    "properties": {
        "model": {"enum": ["brickwork5", "ladder7", "custom"]},
        "seed": {"type": "integer"},
        "t_range": {
            "type": "array", "items": {"type": "integer", "minimum": 0},
            "minItems": 2, "maxItems": 2,
        },
        "t_values": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "M_U": {"type": "integer", "minimum": 2},
        "M_S": {"type": "integer", "minimum": 1},
        "mode": {"enum": ["ideal-one-shot", "repeated-circuit"]},
        "noise": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "properties": {
                "p1": {"type": "number", "minimum": 0, "maximum": 1},
                "p2": {"type": "number", "minimum": 0, "maximum": 1},
                "readout": {"type": "array"},
            },
        },
        "mitigation": {"type": "boolean"},
        "regions": {
            "type": "object",
            "required": ["A", "j_C"],
            "additionalProperties": False,
            "properties": {
                "A": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "j_C": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            },
        },
        "quantities": {
            "type": "array", "minItems": 1,
            "items": {"enum": ["renyi_mi", "neg_ratio", "dk", "oracle_all"]},
        },
        "dk_C": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "output_dir": {"type": "string"},
        "layer_order": {"enum": ["cnot_first", "single_first"]},
        "ladder_layout": {"type": "array", "minItems": 3, "maxItems": 3},
        "custom_circuit": {"type": "object"},
        "bootstrap": {"type": "integer", "minimum": 0},
        "calibration_shots": {"type": "integer", "minimum": 100},
    },
}

PROFILES = {
    "desk": {"M_U": 200, "M_S": 256, "t_range": [0, 15]},
    "paper": {"M_U": 900, "M_S": 8192, "t_range": [0, 15]},
}


class ConfigError(Exception):
    pass


def load_config(path: str, profile: str = "desk") -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if "config" in doc and "artifacts" in doc:
        doc = doc["config"]  # re-run from a manifest
    defaults = PROFILES[profile]
    merged = {
        "mode": "repeated-circuit",
        "noise": None,
        "mitigation": False,
        "bootstrap": estimators.DEFAULT_BOOTSTRAP,
        "calibration_shots": 100000,
        **defaults,
        **doc,
    }
    try:
        jsonschema.validate(merged, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        field = ".".join(str(p) for p in exc.absolute_path) or "(top level)"
        raise ConfigError(f"config field {field}: {exc.message}") from exc
    n = model_qubits(merged)
    for q in merged["regions"]["A"] + merged["regions"]["j_C"] + merged.get("dk_C", []):
        if q > n:
            raise ConfigError(f"config field regions: qubit {q} exceeds register size {n}")
    if merged["mode"] == "ideal-one-shot" and merged["M_S"] != 1:
        raise ConfigError("config field M_S: ideal-one-shot mode requires M_S = 1")
    merged.setdefault("dk_C", [(n + 1) // 2])
    return merged


def model_qubits(config) -> int:
    if config["model"] == "brickwork5":
        return 5
    if config["model"] == "ladder7":
        return 7
    cc = config.get("custom_circuit") or {}
    if "n_qubits" not in cc:
        raise ConfigError("config field custom_circuit: n_qubits required for model=custom")
    return int(cc["n_qubits"])


def t_values(config) -> list:
    if "t_values" in config:
        return sorted(set(int(t) for t in config["t_values"]))
    lo, hi = config["t_range"]
    if hi < lo:
        raise ConfigError("config field t_range: upper bound below lower bound")
    return list(range(lo, hi + 1))


def build_circuit(config) -> circuits.CircuitSpec:
    t_max = max(t_values(config))
    order = config.get("layer_order", "cnot_first")
    if config["model"] == "brickwork5":
        return circuits.build_brickwork(5, t_max, config["seed"], order)
    if config["model"] == "ladder7":
        layout = config.get("ladder_layout")
        if layout is not None:
            layout = [[(a - 1, b - 1) for a, b in layer] for layer in layout]
        return circuits.build_ladder7(t_max, config["seed"], layout, layer_order=order)
    cc = config["custom_circuit"]
    layers = tuple(
        circuits.TimestepLayer(
            tuple((a - 1, b - 1) for a, b in pairs), tuple(ws)
        )
        for pairs, ws in zip(cc["cnots"], cc["w_choices"])
    )
    return circuits.CircuitSpec(
        int(cc["n_qubits"]), len(layers), layers, config["seed"], order, model="custom"
    )


def noise_params(config) -> circuits.NoiseParams | None:
    doc = config.get("noise")
    if doc is None:
        return None
    readout = doc.get("readout", (0.0, 0.0))
    return circuits.NoiseParams(
        p1=doc.get("p1", 0.0), p2=doc.get("p2", 0.0), readout=tuple(map(tuple, readout))
        if readout and isinstance(readout[0], (list, tuple)) else tuple(readout)
    )


def _seed_for_t(master_seed: int, t: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(1000 + t,)).generate_state(1)[0])


def _workers(args) -> int:
    if getattr(args, "deterministic", False):
        return 1
    return max(1, int(os.environ.get("OPSHADOW_WORKERS", "1")))


def _a_internal(config):
    return tuple(q - 1 for q in config["regions"]["A"])


def _exact_rows(channel, config, t) -> list:
    rows = []
    a0 = _a_internal(config)
    a_label = results.subset_label(a0)
    wants = config["quantities"]
    extras = "oracle_all" in wants
    for jc in config["regions"]["j_C"]:
        q = oracle.exact_quantities(channel, t, a0, jc - 1, extras=extras)
        if "renyi_mi" in wants or extras:
            rows.append(results.make_row(t, "renyi_mi", a_label, jc, q["i2"]))
        if "neg_ratio" in wants or extras:
            rows.append(results.make_row(t, "neg_ratio", a_label, jc, q["log2_r"]))
        if extras:
            rows.append(results.make_row(t, "i3_renyi", a_label, jc, q["i3"]))
            rows.append(results.make_row(t, "log_negativity", a_label, jc, q["log_negativity"]))
            rows.append(results.make_row(t, "tri_info_2", a_label, jc, q["tri_info_2"]))
            rows.append(results.make_row(t, "recovery_fidelity", a_label, jc, q["recovery_fidelity"]))
    if "dk" in wants or extras:
        c0 = tuple(q - 1 for q in config["dk_C"])
        c_label = results.subset_label(c0)
        dk = oracle.dk_direct(channel, t, c0)
        cum = np.cumsum(dk)
        for k in range(1, channel.n_qubits + 1):
            rows.append(results.make_row(t, "dk", c_label, k, dk[k]))
            rows.append(results.make_row(t, "dk_cum", c_label, k, cum[k]))
    return rows


def _shadow_rows(dataset, config) -> list:
    rows = []
    t = dataset.timestep
    a0 = _a_internal(config)
    a_label = results.subset_label(a0)
    wants = config["quantities"]
    boot = config["bootstrap"]
    mit = config["mitigation"]
    common = dict(m_u=dataset.m_u, m_s=dataset.m_s, mode=dataset.mode, mitigated=mit)
    for jc in config["regions"]["j_C"]:
        if "renyi_mi" in wants:
            est = estimators.renyi_mi(dataset, a0, jc - 1, n_bootstrap=boot, use_mitigation=mit)
            rows.append(results.make_row(t, "renyi_mi", a_label, jc, est.value, est.std_error, **common))
        if "neg_ratio" in wants:
            est = estimators.negativity_ratio(dataset, a0, jc - 1, n_bootstrap=boot, use_mitigation=mit)
            rows.append(results.make_row(t, "neg_ratio", a_label, jc, est.value, est.std_error, **common))
    if "dk" in wants:
        c0 = tuple(q - 1 for q in config["dk_C"])
        c_label = results.subset_label(c0)
        dk = estimators.estimate_dk(dataset, c0, n_bootstrap=boot, use_mitigation=mit)
        for i, k in enumerate(dk["k"]):
            rows.append(results.make_row(t, "dk", c_label, k, dk["dk"][i], dk["dk_std_error"][i], **common))
            rows.append(results.make_row(t, "dk_cum", c_label, k, dk["cumulative"][i],
                                         dk["cumulative_std_error"][i], **common))
    return rows


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _prepare_out(args, config) -> Path:
    out = Path(args.out or config["output_dir"])
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ConfigError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, config, timings):
    artifacts = {}
    for path in sorted(out.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            artifacts[str(path.relative_to(out))] = _sha256(path)
    manifest = {
        "format": "opshadow.manifest/1",
        "config": config,
        "config_sha256": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()
        ).hexdigest(),
        "versions": {
            "opshadow": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "timings": timings,
        "artifacts": artifacts,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_run(args) -> int:
    config = load_config(args.config, args.profile)
    out = _prepare_out(args, config)
    (out / "datasets").mkdir(exist_ok=True)
    spec = build_circuit(config)
    noise = noise_params(config)
    channel = circuits.compile_channel(spec, noise)
    spec.save(out / "circuit.json")

    confusion = None
    if config["mitigation"]:
        ro_noise = noise if noise is not None else circuits.NoiseParams()
        confusion = runtime.calibrate_readout(
            ro_noise, config["calibration_shots"], spec.n_qubits, seed=config["seed"]
        )

    timings = {}
    tvals = t_values(config)

    def work(t):
        t0 = time.monotonic()
        ds = runtime.run_protocol(
            channel, t, config["M_U"], config["M_S"],
            _seed_for_t(config["seed"], t), config["mode"],
        )
        ds.mitigation = confusion
        ds.save(out / "datasets" / f"t{t:02d}.jsonl")
        rows = _shadow_rows(ds, config)
        rows += _exact_rows(channel, config, t)
        return t, rows, time.monotonic() - t0

    workers = _workers(args)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(work, tvals))
    else:
        done = [work(t) for t in tvals]
    all_rows = []
    for t, rows, dt in sorted(done):
        all_rows.extend(rows)
        timings[f"t{t:02d}_seconds"] = round(dt, 3)
    results.write_rows(out / "results.csv", all_rows)
    _write_manifest(out, config, timings)
    print(f"wrote {len(all_rows)} result rows to {out / 'results.csv'}")
    return 0


def cmd_oracle(args) -> int:
    config = load_config(args.config, args.profile)
    out = _prepare_out(args, config)
    spec = build_circuit(config)
    channel = circuits.compile_channel(spec, noise_params(config))
    spec.save(out / "circuit.json")
    t0 = time.monotonic()
    rows = []
    for t in t_values(config):
        rows.extend(_exact_rows(channel, config, t))
    results.write_rows(out / "results.csv", rows)
    _write_manifest(out, config, {"oracle_seconds": round(time.monotonic() - t0, 3)})
    print(f"wrote {len(rows)} exact rows to {out / 'results.csv'}")
    return 0


def compare_tables(rows_a, rows_b) -> dict:
    """Join two result-row lists on (t, quantity, A, jc) and score them."""
    index_b = {results.row_key(r): r for r in rows_b}
    joined = []
    for ra in rows_a:
        rb = index_b.get(results.row_key(ra))
        if rb is None:
            continue
        va, vb = results.parse_value(ra), results.parse_value(rb)
        if va is None or vb is None:
            continue
        dev = va - vb
        se = 0.0
        for r in (ra, rb):
            s = results.parse_value(r, "std_error")
            if s is not None and not math.isnan(s):
                se += s * s
        z = dev / math.sqrt(se) if se > 0 else math.nan
        joined.append({"key": results.row_key(ra), "a": va, "b": vb, "dev": dev, "z": z})
    if not joined:
        raise ValueError("no overlapping (t, quantity, A, jc_or_k) keys to compare")
    summary = {}
    for quantity in sorted({k["key"][1] for k in joined}):
        sel = [j for j in joined if j["key"][1] == quantity]
        devs = np.array([j["dev"] for j in sel if not math.isnan(j["dev"])])
        zs = np.array([abs(j["z"]) for j in sel if not math.isnan(j["z"])])
        summary[quantity] = {
            "n": len(sel),
            "mean_abs_dev": float(np.mean(np.abs(devs))) if len(devs) else math.nan,
            "max_abs_dev": float(np.max(np.abs(devs))) if len(devs) else math.nan,
            "frac_within_3z": float(np.mean(zs <= 3.0)) if len(zs) else math.nan,
        }
    return {"rows": joined, "summary": summary}


def cmd_compare(args) -> int:
    rows_a = results.read_rows(args.paths[0])
    if len(args.paths) == 1:
        rows_b = [r for r in rows_a if r["mode"] == "exact"]
        rows_a = [r for r in rows_a if r["mode"] != "exact"]
    else:
        rows_b = results.read_rows(args.paths[1])
    report = compare_tables(rows_a, rows_b)
    print(f"{'quantity':<18}{'n':>5}{'mean|dev|':>12}{'max|dev|':>12}{'within 3z':>11}")
    for quantity, s in report["summary"].items():
        print(f"{quantity:<18}{s['n']:>5}{s['mean_abs_dev']:>12.4g}"
              f"{s['max_abs_dev']:>12.4g}{s['frac_within_3z']:>11.2%}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report["summary"], fh, indent=1, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_calibrate(args) -> int:
    config = load_config(args.config, args.profile)
    noise = noise_params(config) or circuits.NoiseParams()
    n = model_qubits(config)
    mats = runtime.calibrate_readout(noise, config["calibration_shots"], n, seed=config["seed"])
    doc = {"format": "opshadow.confusion/1", "n_qubits": n,
           "matrices": [m.tolist() for m in mats]}
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opshadow",
        description="Operator-space entanglement experiments on simulated channels",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("oracle", cmd_oracle), ("calibrate", cmd_calibrate)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config (or manifest for re-runs)")
        p.add_argument("--out", default=None, help="output directory (run/oracle) or file (calibrate)")
        p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
        p.add_argument("--profile", choices=sorted(PROFILES), default="desk",
                       help="defaults for M_U/M_S/t_range when the config omits them")
        p.add_argument("--deterministic", action="store_true",
                       help="sequential execution (results are identical either way)")
        p.set_defaults(fn=fn)
    p = sub.add_parser("compare")
    p.add_argument("paths", nargs="+", help="one results.csv (shadow vs exact rows) or two files")
    p.add_argument("--out", default=None, help="write the summary as JSON")
    p.set_defaults(fn=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
