"""Command-line entry point: ``mutualmf <command> [options]``.

Every command resolves its options from (in increasing precedence) built-in
defaults, a flat ``key = value`` file given with ``--config``, and flags.
Artifacts go to ``<runs-root>/<command>-<hash>``, where the hash covers the
resolved options and the contents of any input files, so the same inputs
always land in the same place with the same bytes.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import measure, moments, oracle, projection, spectra, verify

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


# --- value parsers --------------------------------------------------------------

def parse_range(text: str) -> np.ndarray:
    """``lo:hi:step`` (inclusive) or a single number."""
    parts = str(text).split(":")
    try:
        nums = [float(x) for x in parts]
    except ValueError:
        raise UsageError(f"cannot parse range {text!r}; expected lo:hi:step") from None
    if len(nums) == 1:
        return np.array(nums)
    if len(nums) != 3:
        raise UsageError(f"range {text!r} must have the form lo:hi:step")
    lo, hi, step = nums
    if step <= 0 or hi < lo:
        raise UsageError(f"range {text!r} needs step > 0 and hi >= lo")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 12)


def parse_window(text: str):
    try:
        lo, hi = (int(x) for x in str(text).split(":"))
    except ValueError:
        raise UsageError(f"cannot parse window {text!r}; expected j_min:j_max") from None
    return lo, hi


def parse_probs(text: str):
    try:
        return tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise UsageError(f"cannot parse probability vector {text!r}") from None


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes and underscores are equivalent."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# --- parser -----------------------------------------------------------------------

# option name -> (default, converter); None defaults mean "required or unset"
_COMMON = {
    "seed": (None, int),
    "workers": (None, int),
    "runs_root": ("runs", str),
}

_OPTIONS = {
    "gen": {
        "preset": ("binomial-pair", str),
        "p": ("0.7,0.3", parse_probs),
        "w": ("0.5,0.5", parse_probs),
        "depth": (14, int),
        "base": (None, int),
    },
    "tau": {
        "q": ("-2:2:0.5", parse_range),
        "t": ("-2:2:0.5", parse_range),
        "window": (None, parse_window),
    },
    "spectrum": {
        "q": ("-2:2:0.1", parse_range),
        "t": ("-2:2:0.1", parse_range),
        "window": (None, parse_window),
        "bin_width": (spectra.DEFAULT_BIN_WIDTH, float),
        "exponents": ("endpoint", str),
    },
    "project": {
        "m": (1, int),
        "count": (verify.DEFAULT_V_COUNT, int),
        "box": ("auto", str),
        "depth": (None, int),
    },
    "oracle": {
        "p": ("0.7,0.3", parse_probs),
        "w": ("0.5,0.5", parse_probs),
        "base": (None, int),
        "q": ("-2:2:0.5", parse_range),
        "t": ("-2:2:0.5", parse_range),
    },
    "verify": {
        "suite": ("multinomial", str),
    },
}

_HELP = {
    "gen": "generate a measure pair from a preset",
    "tau": "estimate b, B, Lambda on a (q, t) grid",
    "spectrum": "Legendre and histogram spectra of a pair",
    "project": "push a pair onto Haar-random subspaces",
    "oracle": "analytic dimension function of a multinomial pair",
    "verify": "run a verification suite",
}

_INPUTS = {"tau", "spectrum", "project"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mutualmf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in _OPTIONS.items():
        sp = sub.add_parser(name, help=_HELP[name])
        if name in _INPUTS:
            sp.add_argument("mu_file")
            sp.add_argument("nu_file")
        sp.add_argument("--config", help="flat key = value file; flags take precedence")
        for key in list(opts) + list(_COMMON):
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
        if name == "verify":
            sp.add_argument("--list", action="store_true", help="list suites and exit")
    return parser


_NEGATIVE = re.compile(r"^-\d|^-\.\d")


def _join_negative_values(argv):
    """``--q -2:2:1`` -> ``--q=-2:2:1`` so argparse does not read the value as a flag."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and _NEGATIVE.match(argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def resolve(args) -> dict:
    """Merge defaults, the config file and flags into typed options."""
    spec = dict(_OPTIONS[args.command])
    spec.update(_COMMON)
    cfg = read_config(args.config) if args.config else {}
    unknown = set(cfg) - set(spec)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(sorted(unknown))}")
    raw = {}
    for key, (default, _) in spec.items():
        flag = getattr(args, key, None)
        raw[key] = flag if flag is not None else cfg.get(key, default)
    if raw["seed"] is None:
        raw["seed"] = os.environ.get("MMF_SEED", "0")
    if raw["workers"] is None:
        raw["workers"] = os.cpu_count() or 1
    opts = {}
    for key, value in raw.items():
        conv = spec[key][1]
        try:
            opts[key] = None if value is None else conv(value)
        except ValueError:
            raise UsageError(f"bad value for {key}: {value!r}") from None
    opts["_raw"] = {k: (None if v is None else str(v)) for k, v in raw.items()
                    if k not in ("workers", "runs_root")}
    return opts


def run_dir(command: str, opts: dict, inputs=()) -> Path:
    h = hashlib.sha256()
    h.update(command.encode())
    h.update(json.dumps(opts["_raw"], sort_keys=True).encode())
    for path in inputs:
        h.update(hashlib.sha256(Path(path).read_bytes()).digest())
    out = Path(opts["runs_root"]) / f"{command}-{h.hexdigest()[:12]}"
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{k} = {v}" for k, v in sorted(opts["_raw"].items()) if v is not None]
    lines += [f"input = {p}" for p in inputs]
    (out / "config.txt").write_text("\n".join(lines) + "\n")
    return out


# --- commands -----------------------------------------------------------------

def _pair_files(args):
    try:
        return measure.load(args.mu_file), measure.load(args.nu_file)
    except OSError as exc:
        raise RuntimeError(f"cannot read input: {exc}") from None


def _window_of(opts, mu):
    if opts["window"] is None:
        return moments.DEFAULT_J_MIN, mu.depth
    return opts["window"]


def cmd_gen(args, opts) -> int:
    mu, nu = measure.make_pair(opts["preset"], opts["depth"], p=opts["p"], w=opts["w"],
                               base=opts["base"])
    out = run_dir("gen", opts)
    measure.save(mu, out / "mu.mmf")
    measure.save(nu, out / "nu.mmf")
    same = np.array_equal(mu.index, nu.index)
    print(f"{opts['preset']}: base={mu.base} dim={mu.dim} depth={mu.depth} "
          f"cells mu={mu.n_cells} nu={nu.n_cells} equal_support={same}")
    print(out)
    return EXIT_OK


def cmd_tau(args, opts) -> int:
    mu, nu = _pair_files(args)
    j_min, j_max = _window_of(opts, mu)
    surf = moments.tau_surface(mu, nu, opts["q"], opts["t"], j_min, j_max, workers=opts["workers"])
    out = run_dir("tau", opts, (args.mu_file, args.nu_file))
    moments.save_surface_csv(surf, out / "tau.csv")
    print(out / "tau.csv")
    return EXIT_OK


def cmd_spectrum(args, opts) -> int:
    mu, nu = _pair_files(args)
    j_min, j_max = _window_of(opts, mu)
    surf = moments.tau_surface(mu, nu, opts["q"], opts["t"], j_min, j_max, workers=opts["workers"])
    method = {"endpoint": "endpoint", "slope": "slope"}.get(opts["exponents"])
    if method is None:
        raise UsageError("exponents must be 'endpoint' or 'slope'")
    field_ = spectra.pointwise_exponents(mu, nu, j_min, j_max, method=method)
    hist = spectra.histogram_spectrum(field_, opts["bin_width"])
    out = run_dir("spectrum", opts, (args.mu_file, args.nu_file))
    spectra.save_legendre_csv(spectra.legendre(surf), out / "legendre.csv")
    spectra.save_histogram_csv(hist, out / "histogram.csv")
    print(out / "legendre.csv")
    print(out / "histogram.csv")
    return EXIT_OK


def cmd_project(args, opts) -> int:
    mu, nu = _pair_files(args)
    if opts["count"] < 1:
        raise UsageError("count must be >= 1")
    box = opts["box"]
    if box not in ("auto", "unit"):
        raise UsageError("box must be 'auto' or 'unit'")
    depth = mu.depth if opts["depth"] is None else opts["depth"]
    out = run_dir("project", opts, (args.mu_file, args.nu_file))
    clouds = projection.pair_clouds(mu, nu)
    rows = ["i,seed,subspace,mu,nu"]
    for i in range(opts["count"]):
        s = opts["seed"] + i
        V = projection.sample_grassmann(mu.dim, opts["m"], s)
        pa, pb = projection.project_clouds(*clouds, V, mu.base, depth, box)
        stem = f"proj_{i:03d}"
        projection.save_subspace(V, out / f"{stem}_V.txt")
        measure.save(pa, out / f"{stem}_mu.mmf")
        measure.save(pb, out / f"{stem}_nu.mmf")
        rows.append(f"{i},{s},{stem}_V.txt,{stem}_mu.mmf,{stem}_nu.mmf")
    (out / "index.csv").write_text("\n".join(rows) + "\n")
    print(f"{opts['count']} projected pairs in {out}")
    return EXIT_OK


def cmd_oracle(args, opts) -> int:
    spec = measure.SelfSimilarSpec.badic(opts["p"], opts["w"], base=opts["base"])
    out = run_dir("oracle", opts)
    oracle.save_oracle_csv(spec, opts["q"], opts["t"], out / "oracle.csv")
    print(out / "oracle.csv")
    return EXIT_OK


def cmd_verify(args, opts) -> int:
    if args.list:
        print("\n".join(verify.SUITES))
        return EXIT_OK
    if opts["suite"] not in verify.SUITES:
        raise UsageError(f"unknown suite {opts['suite']!r}; choose from {', '.join(verify.SUITES)}")
    reports = verify.run_suite(opts["suite"], seed=opts["seed"], workers=opts["workers"])
    out = run_dir("verify", opts)
    (out / "report.json").write_text(verify.suite_json(reports))
    print(verify.summary(reports))
    print(out / "report.json")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY


COMMANDS = {
    "gen": cmd_gen,
    "tau": cmd_tau,
    "spectrum": cmd_spectrum,
    "project": cmd_project,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_join_negative_values(argv))
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        opts = resolve(args)
        return COMMANDS[args.command](args, opts)
    except UsageError as exc:
        print(f"mutualmf {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OverflowError, RuntimeError) as exc:
        print(f"mutualmf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
