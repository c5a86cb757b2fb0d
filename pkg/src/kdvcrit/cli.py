"""Command-line front end: classify, spectrum, control, verify, sweep and nonlinear.

Every command prints one JSON object {config, results, diagnostics, warnings}
and, with --out DIR, also writes it to DIR/<command>.json next to any CSV
tables.  Floats carry 17 significant digits so that runs can be reproduced and
compared byte for byte.  Exit codes: 0 success, 2 invalid input, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import json
import math
import operator
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# value parsing

_NAMES = {"pi": math.pi, "e": math.e}
_FUNCS = {"sqrt": math.sqrt}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}


def parse_number(text) -> float:
    """A float or a small arithmetic expression such as 2*pi*sqrt(7/3)."""
    if isinstance(text, (int, float)):
        return float(text)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and len(node.args) == 1:
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ValueError(f"unsupported expression {text!r}")

    try:
        return float(ev(ast.parse(str(text).strip(), mode="eval")))
    except (SyntaxError, ZeroDivisionError, OverflowError) as exc:
        raise ValueError(f"cannot parse {text!r}: {exc}") from None


def parse_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [parse_number(t) for t in text]
    return [parse_number(t) for t in str(text).split(",") if t.strip()]


# serialization


def _num(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _plain(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    return obj


def dumps(obj, indent: int = 2, level: int = 0) -> str:
    """JSON with every float written to 17 significant digits; non-finite floats as strings."""
    obj = _plain(obj)
    pad, inner = " " * (indent * level), " " * (indent * (level + 1))
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k), ensure_ascii=False)}: {dumps(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(_plain(v), (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent, level + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(float(v)).strip('"') if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# configuration

COMMON_KEYS = ("L", "L0", "T", "jmax", "ktrunc", "grid", "dt", "Q", "offsets", "seed", "variant")

DEFAULTS = {
    "classify": {"L": None, "n": None},
    "spectrum": {"L": None, "jmax": 30},
    "control": {
        "L": None, "L0": None, "T": 8.0, "Q": 1.0, "nmax": 3, "ktrunc": 8, "jmax": 30,
        "grid": 1024, "dt": 5e-4, "seed": 0, "variant": "basic", "init": "random", "modes": 4,
    },
    "verify": {"L": "2*pi+0.05", "jmax": 30},
    "sweep": {"L0": None, "offsets": "0.1,0.01,0.001", "T": 1.0, "grid": 1024, "dt": 1e-3, "simulate": False, "jobs": 1},
    "nonlinear": {"L": None, "L0": None, "T": 20.0, "dt": 0.05, "grid": 1024, "amplitude": 0.01, "direction": "M"},
}

POSITIVE = {"L", "L0", "T", "dt", "Q", "amplitude"}
COUNTS = {"jmax": 1, "ktrunc": 1, "grid": 16, "nmax": 1, "modes": 1, "jobs": 1, "n": 1}


def resolve_config(command: str, flags: dict) -> dict:
    """Defaults, then the optional --config JSON file, then command-line flags."""
    cfg = dict(DEFAULTS[command])
    path = flags.get("config")
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from None
        if not isinstance(data, dict):
            raise ConfigError("config", "file must hold a JSON object")
        for k, v in data.items():
            if k not in cfg:
                raise ConfigError(k, f"not a parameter of {command}")
            cfg[k] = v
    for k, v in flags.items():
        if k in cfg and v is not None:
            cfg[k] = v
    out = {}
    for k, v in cfg.items():
        try:
            if v is None or k in ("variant", "init", "direction", "simulate"):
                out[k] = v
            elif k == "offsets":
                out[k] = parse_list(v)
                if not out[k] or any(d == 0 or not math.isfinite(d) for d in out[k]):
                    raise ValueError("offsets must be finite and nonzero")
            elif k in COUNTS or k == "seed":
                f = parse_number(v)
                if f != int(f):
                    raise ValueError("must be an integer")
                out[k] = int(f)
                if k in COUNTS and out[k] < COUNTS[k]:
                    raise ValueError(f"must be >= {COUNTS[k]}")
            else:
                out[k] = parse_number(v)
                if k in POSITIVE and not (out[k] > 0 and math.isfinite(out[k])):
                    raise ValueError("must be positive")
        except ValueError as exc:
            raise ConfigError(k, str(exc)) from None
    if out.get("variant") not in (None, "basic", "refined"):
        raise ConfigError("variant", "must be basic or refined")
    if out.get("direction") not in (None, "M", "H"):
        raise ConfigError("direction", "must be M or H")
    if command == "control" and not (out["init"] in ("random", "zero") or str(out["init"]).startswith("mode=")):
        raise ConfigError("init", "must be random, zero or mode=J")
    return out


def require(cfg: dict, *keys) -> None:
    for k in keys:
        if cfg.get(k) is None:
            raise ConfigError(k, "is required")


def nearest_critical(L: float) -> float | None:
    from .critical_lengths import classify_length, critical_length

    n = max(1, round(3.0 * (L / (2.0 * math.pi)) ** 2))
    for m in sorted(range(max(1, n - 2), n + 3), key=lambda m: abs(critical_length(m) - L)):
        if classify_length(critical_length(m)) is not None:
            return critical_length(m)
    return None


def reject_critical(L: float, key: str = "L") -> None:
    from .critical_lengths import classify_length

    if classify_length(L) is not None:
        raise ConfigError(key, f"{L!r} is a critical length; choose a nearby noncritical length")


# commands


def cmd_classify(cfg: dict) -> dict:
    from .critical_lengths import classify_length, critical_length

    if (cfg["L"] is None) == (cfg["n"] is None):
        raise ConfigError("L", "give exactly one of --L and --n")
    L = critical_length(cfg["n"]) if cfg["n"] is not None else cfg["L"]
    info = classify_length(L)
    ic = 3.0 * (L / (2.0 * math.pi)) ** 2
    if info is None:
        return {"results": {"L": L, "I_C": ic, "critical": False}}
    return {
        "results": {
            "L": L,
            "I_C": ic,
            "critical": True,
            "L0": info.L0,
            "class": info.length_class,
            "N0": info.N0,
            "pairs": [{"k": p.k, "l": p.l, "kind": p.kind} for p in info.pairs],
            "lambda_c": list(info.critical_eigenvalues),
        }
    }


def cmd_spectrum(cfg: dict) -> dict:
    from .spectrum_b import full_spectrum

    require(cfg, "L")
    reject_critical(cfg["L"])
    sp = full_spectrum(cfg["L"], cfg["jmax"])
    rows = [(int(m.index), float(m.tau), float(m.lam), m.regime, float(abs(m.dE_at_L))) for m in sp.modes]
    sym = max(abs(sp.mode(j).lam + sp.mode(-j).lam) for j in range(1, cfg["jmax"] + 1))
    return {
        "results": {"N_L": sp.N_L, "elliptic": sp.Lambda_E, "modes": [dict(zip(("j", "tau", "lambda", "regime", "abs_dE_L"), r)) for r in rows]},
        "diagnostics": {"max_bc_residual": max(m.bc_residual() for m in sp.modes), "lambda_symmetry_defect": sym},
        "tables": {"spectrum.csv": csv_text(("j", "tau", "lambda", "regime", "abs_dE_L"), rows)},
    }


def _initial_state(cfg: dict, sp):
    from .control import SpectralState, random_real_state
    from .kdv_simulator import GridFunction

    L, n = cfg["L"], cfg["grid"]
    x = np.linspace(0.0, L, n + 1)
    init = cfg["init"]
    if init == "zero":
        return GridFunction(L, np.zeros(n + 1))
    if init == "random":
        z = random_real_state(sp, cfg["modes"], cfg["seed"])
    else:
        try:
            j = int(init.split("=", 1)[1])
            sp.mode(j)
        except (ValueError, KeyError):
            raise ConfigError("init", f"no mode {init!r}") from None
        # a real state needs the conjugate partner as well
        z = SpectralState(L, {j: 0.5 + 0j, -j: 0.5 + 0j}, abs(j))
    return GridFunction(L, np.real(z.evaluate(sp, x)))


def cmd_control(cfg: dict) -> dict:
    from .control import StabilizationParams, run_transition_stabilization
    from .spectrum_b import full_spectrum

    require(cfg, "L")
    L = cfg["L"]
    reject_critical(L)
    warnings = []
    if cfg["variant"] == "refined" and cfg["L0"] is None:
        cfg["L0"] = nearest_critical(L)
        warnings.append(f"L0 not given; using the nearest critical length {cfg['L0']!r}")
    if cfg["ktrunc"] > cfg["jmax"]:
        raise ConfigError("ktrunc", "must not exceed jmax")
    sp = full_spectrum(L, cfg["jmax"])
    y0 = _initial_state(cfg, sp)
    params = StabilizationParams(
        Q=cfg["Q"], n_max=cfg["nmax"], K_trunc=cfg["ktrunc"], J_series=cfg["jmax"], variant=cfg["variant"], dt_max=cfg["dt"]
    )
    plan = run_transition_stabilization(y0, cfg["T"], params, L, cfg["L0"])
    t = np.concatenate([iv.t for iv in plan.intervals])
    u = np.concatenate([iv.u for iv in plan.intervals])
    ratios = plan.ratios
    if any(r >= 1 for r in ratios):
        warnings.append("an interval increased the energy; try a larger T or Q")
    total = math.sqrt(plan.energies[-1] / plan.energies[0]) if plan.energies[0] > 0 else 0.0
    return {
        "results": {"energies": plan.energies, "ratios": ratios, "total_ratio": total, "u_sup": float(np.max(np.abs(u)))},
        "diagnostics": {"intervals": plan.reports},
        "warnings": warnings,
        "tables": {"control_u.csv": csv_text(("t", "u"), zip(t.tolist(), u.tolist()))},
    }


def _check(name, value, tol, ok=None) -> dict:
    ok = bool(value < tol) if ok is None else bool(ok)
    return {"name": name, "passed": ok, "value": value, "tolerance": tol}


def cmd_verify(cfg: dict) -> dict:
    """Fast internal consistency checks; the full acceptance suite lives in the tests."""
    from .biortho import build_family
    from .critical_lengths import classify_length, lambda_c, solve_pairs
    from .spectrum_b import full_spectrum, rotation_explicit, rotation_matrix

    checks = []
    table = [
        (2 * math.pi, "N1", 1),
        (2 * math.pi * math.sqrt(7 / 3), "N2", 2),
        (2 * math.pi * math.sqrt(7), "N3", 2),
        (14 * math.pi, "N3", 3),
    ]
    bad = 0
    for L0, cls, n0 in table:
        info = classify_length(L0)
        bad += info is None or info.length_class != cls or info.N0 != n0
    info = classify_length(14 * math.pi)
    bad += {(p.k, p.l) for p in info.pairs} != {(7, 7), (11, 2)}
    checks.append(_check("classification table", float(bad), 0.5))
    (p21,) = solve_pairs(7)
    (p41,) = solve_pairs(21)
    err = max(abs(lambda_c(p21) - 20 / (21 * math.sqrt(21))), abs(lambda_c(p41) - 6 * math.sqrt(7) / 49))
    checks.append(_check("critical eigenvalues", err, 1e-12))
    L = cfg["L"]
    reject_critical(L)
    sp = full_spectrum(L, cfg["jmax"])
    checks.append(_check("spectrum boundary residual", max(m.bc_residual() for m in sp.modes), 1e-8))
    xg, wg = np.polynomial.legendre.leggauss(400)
    xg, wg = L * (xg + 1) / 2, L * wg / 2
    ks = [j for j in range(-8, 9) if j]
    E = np.array([sp.mode(j)(xg) for j in ks])
    G = (E * wg) @ E.conj().T
    checks.append(_check("Gram matrix |j| <= 8", float(np.max(np.abs(G - np.eye(len(ks))))), 1e-7))
    if cfg["jmax"] >= 20:
        r = sp.mode(20).lam / (2 * 20 * math.pi / L) ** 3
        checks.append(_check("lambda_20 asymptotics", abs(r - 1.0), 0.03))
    defect = 0.0
    for n in (3, 21, 147):
        for p in solve_pairs(n):
            if p.kind == "S3":
                continue
            R, _ = rotation_matrix(p)
            defect = max(defect, float(np.max(np.abs(R @ R.T - np.eye(2)))), float(np.max(np.abs(R - rotation_explicit(p)))))
    checks.append(_check("rotation structure", defect, 1e-10))
    far = full_spectrum(2 * math.pi + 0.3, 30)
    fam = build_family(far, 2.0, 8)
    ks = [j for j in range(-4, 5) if j]
    M = fam.pairing_matrix(ks, ks)
    checks.append(_check("bi-orthogonality at 2pi+0.3", float(np.max(np.abs(M - np.eye(len(ks))))), 1e-3))
    failed = [c["name"] for c in checks if not c["passed"]]
    return {"results": {"checks": checks, "all_passed": not failed}, "warnings": [f"check failed: {n}" for n in failed], "failed": bool(failed)}


def _sweep_one(args):
    from .kdv_simulator import decay_sweep

    L0, d, T, conf = args
    return decay_sweep(L0, [d], T, conf)


def cmd_sweep(cfg: dict) -> dict:
    from .kdv_simulator import loglog_slope

    require(cfg, "L0")
    from .critical_lengths import classify_length

    if classify_length(cfg["L0"]) is None:
        raise ConfigError("L0", f"{cfg['L0']!r} is not a critical length")
    conf = {"n": cfg["grid"], "dt": cfg["dt"], "simulate": bool(cfg["simulate"])}
    jobs = [(cfg["L0"], d, cfg["T"], conf) for d in cfg["offsets"]]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            parts = list(pool.map(_sweep_one, jobs))
    else:
        parts = [_sweep_one(j) for j in jobs]
    fields = ("zeta_M", "rate_M_spectral", "rate_M_simulated", "rate_H_simulated", "observability_M", "observability_H")
    merged = {f: [getattr(p, f)[0] for p in parts] for f in fields}
    failures = [m for p in parts for m in p.failures]
    ok = [(abs(d), r) for d, r in zip(cfg["offsets"], merged["rate_M_spectral"]) if np.isfinite(r) and r > 0]
    okb = [(abs(d), o) for d, o in zip(cfg["offsets"], merged["observability_M"]) if o is not None and np.isfinite(o)]
    results = dict(merged)
    results["exponent_rate"] = loglog_slope(*zip(*ok)) if len(ok) >= 2 else None
    results["exponent_observability"] = loglog_slope(*zip(*okb)) if len(okb) >= 2 else None
    rows = []
    for i, d in enumerate(cfg["offsets"]):
        z = merged["zeta_M"][i]
        vals = [merged[f][i] for f in fields[1:]]
        rows.append([d, z.real, z.imag] + [math.nan if v is None else float(v) for v in vals])
    return {
        "results": results,
        "warnings": failures,
        "tables": {"sweep.csv": csv_text(("offset", "zeta_re", "zeta_im") + fields[1:], rows)},
    }


def cmd_nonlinear(cfg: dict) -> dict:
    from .critical_lengths import classify_length, lambda_c
    from .kdv_simulator import fit_rate, real_part_datum, simulate, simulate_nonlinear
    from .spectrum_a import eigen_near, real_spectrum_A

    require(cfg, "L")
    L = cfg["L"]
    reject_critical(L)
    warnings = []
    if cfg["direction"] == "M":
        if cfg["L0"] is None:
            cfg["L0"] = nearest_critical(L)
            warnings.append(f"L0 not given; using the nearest critical length {cfg['L0']!r}")
        info = classify_length(cfg["L0"])
        if info is None:
            raise ConfigError("L0", f"{cfg['L0']!r} is not a critical length")
        mode = eigen_near(min(lambda_c(p) for p in info.pairs), L, cfg["L0"])
    else:
        mode = real_spectrum_A(L, 2)[1]
    y0 = real_part_datum(mode, L, cfg["grid"]).scaled(cfg["amplitude"])
    nl = simulate_nonlinear(y0, cfg["T"], dt=cfg["dt"])
    lin = simulate(y0, None, cfg["T"], dt=cfg["dt"])
    t_nl = nl.times
    t_lin = np.linspace(0.0, cfg["T"], len(lin.energy))
    gap = float(np.max(np.abs(np.interp(t_nl, t_lin, lin.energy) - nl.energy)))
    return {
        "results": {
            "zeta": complex(mode.zeta),
            "rate_spectral": -2.0 * float(mode.zeta.real),
            "rate_nonlinear": fit_rate(t_nl, nl.energy),
            "rate_linear": fit_rate(t_lin, lin.energy),
            "energy_ratio": float(nl.energy[-1] / nl.energy[0]),
        },
        "diagnostics": {"max_energy_gap": gap},
        "warnings": warnings,
        "tables": {"nonlinear.csv": csv_text(("t", "energy"), zip(t_nl.tolist(), nl.energy.tolist()))},
    }


COMMANDS = {
    "classify": cmd_classify,
    "spectrum": cmd_spectrum,
    "control": cmd_control,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "nonlinear": cmd_nonlinear,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--L", help="interval length; accepts expressions such as 2*pi+0.05")
    common.add_argument("--L0", help="critical length the run refers to")
    common.add_argument("--T", help="time horizon")
    common.add_argument("--jmax", help="number of positive modes in the spectrum")
    common.add_argument("--ktrunc", help="modes steered by the moment method")
    common.add_argument("--grid", help="number of grid cells")
    common.add_argument("--dt", help="time step")
    common.add_argument("--Q", help="gain of the iteration schedule")
    common.add_argument("--offsets", help="comma-separated offsets L - L0")
    common.add_argument("--seed", help="seed for random initial data")
    common.add_argument("--variant", choices=("basic", "refined"))
    common.add_argument("--out", help="directory for JSON and CSV output")
    common.add_argument("--config", help="JSON file of parameters; flags take precedence")
    parser = argparse.ArgumentParser(prog="kdvcrit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("classify", parents=[common], help="classify a length")
    p.add_argument("--n", help="index I_C instead of a length")
    sub.add_parser("spectrum", parents=[common], help="eigenvalues of the B operator")
    p = sub.add_parser("control", parents=[common], help="transition-stabilization run")
    p.add_argument("--nmax", help="number of dyadic intervals")
    p.add_argument("--init", help="random, zero or mode=J")
    p.add_argument("--modes", help="modes of the random initial state")
    sub.add_parser("verify", parents=[common], help="fast consistency checks")
    p = sub.add_parser("sweep", parents=[common], help="decay rates across offsets")
    p.add_argument("--simulate", action="store_true", default=None, help="also simulate decay and observability")
    p.add_argument("--jobs", help="worker processes, one offset each")
    p = sub.add_parser("nonlinear", parents=[common], help="nonlinear decay of a small datum")
    p.add_argument("--amplitude", help="L2 norm of the initial datum")
    p.add_argument("--direction", choices=("M", "H"), help="slow M_A mode or a fast H_A mode")
    return parser


def run(argv=None, stdout=None) -> int:
    from .biortho import QuadratureError
    from .control import ControlError
    from .kdv_simulator import SimulationError
    from .spectrum_a import NewtonError
    from .spectrum_b import SpectrumError

    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "out")}
    envelope = {"config": {"command": args.command}, "results": {}, "diagnostics": {}, "warnings": []}
    code = EXIT_OK
    try:
        cfg = resolve_config(args.command, flags)
        envelope["config"].update(cfg)
        out = COMMANDS[args.command](cfg)
        envelope["config"].update(cfg)
        code = EXIT_NUMERIC if out.pop("failed", False) else EXIT_OK
    except ValueError as exc:
        out = {"error": {"kind": "input", "key": getattr(exc, "key", None), "message": str(exc)}}
        code = EXIT_INPUT
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError, SpectrumError, ControlError, SimulationError, QuadratureError, NewtonError) as exc:
        out = {"error": {"kind": "numerical", "message": f"{type(exc).__name__}: {exc}"}}
        code = EXIT_NUMERIC
    tables = out.pop("tables", {})
    for k in ("results", "diagnostics"):
        envelope[k] = out.pop(k, envelope[k])
    envelope["warnings"] = list(out.pop("warnings", []))
    envelope.update(out)
    text = dumps(envelope) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"{args.command}.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
        for name, body in tables.items():
            with open(os.path.join(args.out, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(body)
    stdout.write(text)
    if code != EXIT_OK and "error" in envelope:
        print(envelope["error"]["message"], file=sys.stderr)
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))


__all__ = ["ConfigError", "build_parser", "dumps", "main", "parse_number", "resolve_config", "run"]
