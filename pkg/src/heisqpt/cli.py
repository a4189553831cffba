"""Config-driven experiment harness.

Every subcommand resolves a configuration (YAML file, then command-line
overrides), validates it against ``config_schema.json``, and writes its
results into ``<output>/<experiment>/``. Trained compression parameters are
shared through ``params_dir`` (default ``<output>``), so ``compress``, ``qpt``
and ``spectrum`` chain from one config file. Each emitted file carries the
tool version and a hash of the resolved configuration.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__
from . import channel as chn
from . import circuit as cq
from . import compress as cp
from . import tomo_full as tf
from . import tomo_selective as ts
from .linalg import matrix_to_json
from .pauli import PauliString

log = logging.getLogger("heisqpt")

DEFAULTS: dict = {
    "L": 3,
    "bc": "open",
    "t": 1.0,
    "layers": [2],
    "circuit": "trotter2",
    "circuits": ["trotter1", "trotter2", "compressed"],
    "noise": {"p1": 0.001, "p2": 0.01, "p_ro": 0.01, "cx_overrotation": 0.0},
    "shots": 1024,
    "seed": 0,
    "output": "runs/latest",
    "params_dir": None,
    "adam": {
        "learning_rate": 0.01,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon_hat": 1e-8,
        "max_iters": 5000,
        "restarts": 8,
        "target_eps": 0.0,
        "trotter_init": True,
    },
    "qpt": {"mode": "full", "k": 32, "diagonal": "twirl"},
    "spectrum": {"bin_width": 0.05, "upper": 1.2, "mask_threshold": 1e-10},
}

# full QPT of four qubits works but is a 20736-setting sweep; the CLI routes it to SQPT
FULL_QPT_MAX_QUBITS = 3

EXPERIMENTS = {
    "compress": "compress",
    "infidelity-scan": "infidelity_scan",
    "qpt": None,
    "twirl": "twirl",
    "spectrum": "spectrum",
    "export-qasm": "export_qasm",
}


class CliError(Exception):
    """Failure reported to the caller as JSON on stderr."""

    def __init__(self, kind: str, message: str, code: int = 1):
        super().__init__(message)
        self.kind = kind
        self.code = code


def schema() -> dict:
    return json.loads(resources.files("heisqpt").joinpath("config_schema.json").read_text())


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(file_cfg: dict | None, overrides: dict) -> dict:
    cfg = _merge(DEFAULTS, file_cfg or {})
    cfg = _merge(cfg, overrides)
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliError("schema", f"{path}: {exc.message}", 2) from None
    return cfg


def config_hash(cfg: dict) -> str:
    core = {k: v for k, v in cfg.items() if k not in ("output", "params_dir")}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise CliError("io", f"cannot read config {path}: {exc.strerror}", 2) from None
    except yaml.YAMLError as exc:
        raise CliError("parse", f"invalid YAML in {path}: {exc}", 2) from None
    if not isinstance(data, dict):
        raise CliError("schema", "config file must hold a mapping", 2)
    return data


# output helpers


class RunDir:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.path = Path(cfg["output"]) / cfg["experiment"]
        self.path.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def _stamp(self) -> dict:
        return {"tool": "heisqpt", "version": __version__, "config_hash": self.hash}

    def write_json(self, name: str, payload: dict) -> Path:
        p = self.path / name
        with open(p, "w") as fh:
            json.dump(self._stamp() | payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.files.append(str(p))
        return p

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        p = self.path / name
        with open(p, "w", newline="") as fh:
            fh.write(f"# heisqpt {__version__} config {self.hash}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        self.files.append(str(p))
        return p

    def write_config(self) -> None:
        self.write_json("config.json", {"config": self.cfg})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path) -> list[dict]:
    """Read a CSV written by this tool, skipping the provenance comment."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# circuits


def _adam_config(cfg: dict) -> cp.AdamConfig:
    return cp.AdamConfig(seed=cfg["seed"], **cfg["adam"])


def _params_path(cfg: dict, n: int) -> Path:
    base = Path(cfg["params_dir"] or cfg["output"])
    return base / f"compressed_{cfg['bc']}_L{cfg['L']}_n{n}_t{cfg['t']:g}.json"


def compressed_circuit(cfg: dict, n: int) -> tuple[cq.Circuit, float]:
    """Load a stored compression result, or run the optimizer and store it."""
    path = _params_path(cfg, n)
    if path.exists():
        problem, theta, phase = cp.load_result(path)
        if (problem.L, problem.bc, problem.n_layers) != (cfg["L"], cfg["bc"], n) or problem.t != cfg["t"]:
            raise CliError("params", f"{path} does not match the requested circuit")
        eps = problem.cost(np.append(theta, phase))
        return cq.build_brickwall(cfg["L"], n, theta), eps
    problem = cp.CompressionProblem(cfg["L"], cfg["bc"], cfg["t"], n)
    trace = cp.adam_optimize(problem, _adam_config(cfg))
    path.parent.mkdir(parents=True, exist_ok=True)
    cp.save_result(path, problem, _adam_config(cfg), trace)
    return cq.build_brickwall(cfg["L"], n, trace.best_theta), trace.best_eps


def build_circuit(cfg: dict, kind: str, n: int) -> tuple[cq.Circuit, float]:
    """Circuit of the given type and depth with its approximation error."""
    L, bc, t = cfg["L"], cfg["bc"], cfg["t"]
    if kind == "compressed":
        return compressed_circuit(cfg, n)
    builder = {"trotter1": cq.build_trotter1, "trotter2": cq.build_trotter2}[kind]
    c = builder(L, bc, t, n)
    return c, cp.epsilon(cp.exact_propagator(L, bc, t), cq.unitary(c))


def _executor(cfg: dict) -> chn.SimulatedExecutor:
    return chn.SimulatedExecutor(cfg["L"], chn.NoiseModel(seed=cfg["seed"], **cfg["noise"]))


# commands


def cmd_compress(cfg: dict) -> dict:
    run = RunDir(cfg)
    run.write_config()
    rows, results = [], []
    for n in cfg["layers"]:
        problem = cp.CompressionProblem(cfg["L"], cfg["bc"], cfg["t"], n)
        adam = _adam_config(cfg)
        trace = cp.adam_optimize(problem, adam)
        path = _params_path(cfg, n)
        path.parent.mkdir(parents=True, exist_ok=True)
        cp.save_result(path, problem, adam, trace, {"config_hash": run.hash, "version": __version__})
        run.files.append(str(path))
        for r, hist in enumerate(trace.histories):
            rows += [(n, r, it, float(e)) for it, e in enumerate(hist)]
        results.append({"layers": n, "eps": trace.best_eps, "best_restart": trace.best_restart,
                        "cnot_count": cq.cnot_count(cq.build_brickwall(cfg["L"], n, trace.best_theta))})
    run.write_csv("trace.csv", ["layers", "restart", "iteration", "eps"], rows)
    run.write_json("stats.json", {"compress": results})
    return {"config_hash": run.hash, "results": results, "files": run.files}


def cmd_infidelity_scan(cfg: dict) -> dict:
    run = RunDir(cfg)
    run.write_config()
    rows = []
    for kind in cfg["circuits"]:
        for n in cfg["layers"]:
            c, eps = build_circuit(cfg, kind, n)
            rows.append((kind, n, cq.cnot_count(c), eps))
    run.write_csv("scan.csv", ["circuit", "layers", "cnot_count", "eps"], rows)
    run.write_json("stats.json", {"scan": [dict(zip(["circuit", "layers", "cnot_count", "eps"], r)) for r in rows]})
    return {"config_hash": run.hash, "rows": len(rows), "files": run.files}


def _check_mode(cfg: dict, mode: str) -> None:
    L = cfg["L"]
    if mode == "full" and L > FULL_QPT_MAX_QUBITS:
        raise CliError("mode", f"full QPT is limited to L <= 3, got L={L}; use --mode sqpt", 2)
    if mode == "sqpt" and L > ts.MAX_QUBITS:
        raise CliError("mode", f"SQPT is limited to L <= 4, got L={L}", 2)


def _reconstruct(cfg: dict, c: cq.Circuit, chi_ideal: np.ndarray, mode: str, label: str):
    ex = _executor(cfg)
    if mode == "full":
        data = tf.run_full_qpt(ex, c, cfg["L"], cfg["shots"], label)
        est = tf.ProcessTomography().fit(data)
        return est.chi_, None
    q = cfg["qpt"]
    res = ts.run_sqpt(ex, c, chi_ideal, q["k"], cfg["shots"], q["diagonal"], label)
    return res.chi, res


def _chi_rows(kind: str, n: int, chi: np.ndarray, L: int, tol: float = 1e-12):
    for m, nn in zip(*np.nonzero(np.abs(chi) > tol)):
        yield (kind, n, PauliString.from_index(int(m), L).label, PauliString.from_index(int(nn), L).label,
               float(chi[m, nn].real), float(chi[m, nn].imag))


def cmd_qpt(cfg: dict, mode: str | None = None) -> dict:
    mode = mode or cfg["qpt"]["mode"]
    _check_mode(cfg, mode)
    run = RunDir(cfg)
    run.write_config()
    L = cfg["L"]
    chi_rows, fid_rows, elements = [], [], []
    for n in cfg["layers"]:
        c, eps = build_circuit(cfg, cfg["circuit"], n)
        chi_ideal = tf.ideal_chi_for_circuit(c)
        chi, res = _reconstruct(cfg, c, chi_ideal, mode, f"{cfg['circuit']}_{n}")
        F = tf.process_fidelity(chi_ideal, chi)
        fid_rows.append((cfg["circuit"], n, cq.cnot_count(c), eps, F))
        chi_rows += list(_chi_rows(cfg["circuit"], n, chi, L))
        run.write_json(f"chi_{cfg['circuit']}_n{n}.json", {"chi": matrix_to_json(chi), "chi_ideal": matrix_to_json(chi_ideal)})
        if res is not None:
            for e in res.elements:
                elements.append((n, PauliString.from_index(e.m, L).label, PauliString.from_index(e.n, L).label,
                                 e.value.real, e.value.imag, e.sigma, e.settings, e.max_prep_depth + c.depth()))
    run.write_csv("chi.csv", ["circuit", "layers", "m", "n", "re", "im"], chi_rows)
    run.write_csv("fidelity.csv", ["circuit", "layers", "cnot_count", "eps", "F"], fid_rows)
    if mode == "sqpt":
        run.write_csv("elements.csv", ["layers", "m", "n", "re", "im", "sigma", "settings", "total_depth"], elements)
    stats = [dict(zip(["circuit", "layers", "cnot_count", "eps", "F"], r)) for r in fid_rows]
    run.write_json("stats.json", {"mode": mode, "fidelity": stats})
    return {"config_hash": run.hash, "fidelity": stats, "files": run.files}


def cmd_twirl(cfg: dict) -> dict:
    if cfg["L"] > ts.MAX_QUBITS:
        raise CliError("mode", f"twirling is limited to L <= {ts.MAX_QUBITS}", 2)
    run = RunDir(cfg)
    run.write_config()
    L = cfg["L"]
    rows, stats = [], []
    for n in cfg["layers"]:
        c, eps = build_circuit(cfg, cfg["circuit"], n)
        ideal = np.real(np.diag(tf.ideal_chi_for_circuit(c)))
        tw = ts.twirl_diagonal(_executor(cfg), c, L, cfg["shots"], f"twirl_{cfg['circuit']}_{n}")
        for a in range(4**L):
            rows.append((n, PauliString.from_index(a, L).label, tw.eigenvalues[a], tw.chi_diag[a], tw.sigma[a], ideal[a]))
        stats.append({"layers": n, "eps": eps, "settings": tw.settings,
                      "max_abs_error": float(np.abs(tw.chi_diag - ideal).max())})
    run.write_csv("twirl.csv", ["layers", "pauli", "c", "chi_diag", "sigma", "chi_ideal"], rows)
    run.write_json("stats.json", {"twirl": stats})
    return {"config_hash": run.hash, "twirl": stats, "files": run.files}


def cmd_spectrum(cfg: dict, mode: str | None = None) -> dict:
    mode = mode or ("full" if cfg["L"] <= 3 else "sqpt")
    _check_mode(cfg, mode)
    run = RunDir(cfg)
    run.write_config()
    sp = cfg["spectrum"]
    rows, stats, chi_rows = [], [], []
    for n in cfg["layers"]:
        c, eps = build_circuit(cfg, cfg["circuit"], n)
        u = cq.unitary(c)
        chi_ideal = tf.chi_from_unitary(u)
        chi, _ = _reconstruct(cfg, c, chi_ideal, mode, f"spectrum_{cfg['circuit']}_{n}")
        masked = tf.mask_to_ideal_support(chi, chi_ideal, sp["mask_threshold"])
        lam = tf.lambda_spectrum(tf.superoperator_from_chi(masked))
        st = tf.spectral_stats(lam, sp["bin_width"], sp["upper"])
        rows += [(cfg["circuit"], n, float(z.real), float(z.imag), float(abs(z))) for z in lam]
        chi_rows += list(_chi_rows(cfg["circuit"], n, masked, cfg["L"]))
        above = int(np.sum(np.abs(lam) > 1 + 1e-12))
        if above:
            log.warning("%d eigenvalues with modulus above one (reported, not clipped)", above)
        stats.append({"circuit": cfg["circuit"], "layers": n, "eps": eps,
                      "F_masked": tf.process_fidelity(chi_ideal, masked),
                      "above_unit_circle": above,
                      "ideal_angles": tf.ideal_angles(u).tolist()} | st.to_dict())
    run.write_csv("spectrum.csv", ["circuit", "layers", "re", "im", "abs"], rows)
    run.write_csv("chi.csv", ["circuit", "layers", "m", "n", "re", "im"], chi_rows)
    run.write_json("stats.json", {"mode": mode, "spectrum": stats})
    return {"config_hash": run.hash, "spectrum": [{k: s[k] for k in ("layers", "mean_modulus", "second_moment")} for s in stats], "files": run.files}


def cmd_export_qasm(cfg: dict) -> dict:
    run = RunDir(cfg)
    run.write_config()
    out = []
    for n in cfg["layers"]:
        c, _ = build_circuit(cfg, cfg["circuit"], n)
        p = run.path / f"{cfg['circuit']}_L{cfg['L']}_n{n}.qasm"
        p.write_text(f"// heisqpt {__version__} config {run.hash}\n" + cq.export_qasm(cq.decompose(c)))
        out.append(str(p))
    return {"config_hash": run.hash, "files": run.files + out}


COMMANDS = {
    "compress": cmd_compress,
    "infidelity-scan": cmd_infidelity_scan,
    "qpt": cmd_qpt,
    "twirl": cmd_twirl,
    "spectrum": cmd_spectrum,
    "export-qasm": cmd_export_qasm,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, 2)


def _int_list(text: str) -> list[int]:
    text = text.strip()
    return [int(x) for x in text.split(",") if x.strip()] if text else []


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="heisqpt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"heisqpt {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML experiment file")
        p.add_argument("--L", type=int)
        p.add_argument("--bc", choices=["open", "periodic"])
        p.add_argument("--t", type=float)
        p.add_argument("--layers", type=_int_list, help="comma separated depths, e.g. 1,2,3")
        p.add_argument("--circuit", choices=["trotter1", "trotter2", "compressed"])
        p.add_argument("--circuits", type=lambda s: [x for x in s.split(",") if x])
        p.add_argument("--shots", type=int, help="0 means exact expectations")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", dest="output")
        p.add_argument("--params-dir")
        p.add_argument("--p1", type=float)
        p.add_argument("--p2", type=float)
        p.add_argument("--p-ro", type=float)
        p.add_argument("--noiseless", action="store_true")
        p.add_argument("--restarts", type=int)
        p.add_argument("--max-iters", type=int)
        p.add_argument("--target-eps", type=float)
        p.add_argument("--k", type=int, help="off-diagonal elements measured by SQPT")
        if name in ("qpt", "spectrum"):
            p.add_argument("--mode", choices=["full", "sqpt"])
    return parser


def overrides_from_args(args) -> dict:
    o: dict = {}
    for key in ("L", "bc", "t", "layers", "circuit", "circuits", "shots", "seed", "output", "params_dir"):
        v = getattr(args, key, None)
        if v is not None:
            o[key] = v
    noise = {k: getattr(args, k) for k in ("p1", "p2", "p_ro") if getattr(args, k) is not None}
    if args.noiseless:
        noise = {"p1": 0.0, "p2": 0.0, "p_ro": 0.0, "cx_overrotation": 0.0}
    if noise:
        o["noise"] = noise
    adam = {k: getattr(args, k) for k in ("restarts", "max_iters", "target_eps") if getattr(args, k) is not None}
    if adam:
        o["adam"] = adam
    qpt = {}
    if args.k is not None:
        qpt["k"] = args.k
    if getattr(args, "mode", None) is not None and args.command == "qpt":
        qpt["mode"] = args.mode
    if qpt:
        o["qpt"] = qpt
    return o


def run(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    file_cfg = load_config_file(args.config)
    overrides = overrides_from_args(args)
    kind = EXPERIMENTS[args.command]
    if kind is None:
        mode = overrides.get("qpt", {}).get("mode") or file_cfg.get("qpt", {}).get("mode", "full")
        kind = "full_qpt" if mode == "full" else "sqpt"
    overrides["experiment"] = kind
    cfg = resolve_config(file_cfg, overrides)
    start = time.perf_counter()
    if args.command == "spectrum":
        result = cmd_spectrum(cfg, getattr(args, "mode", None))
    else:
        result = COMMANDS[args.command](cfg)
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - start)
    return result


def main(argv=None) -> int:
    try:
        result = run(argv)
    except CliError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc)}), file=sys.stderr)
        return exc.code
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
