"""Command-line entry point.

Results go to standard output as JSON (single results) or CSV (sweeps),
diagnostics to standard error. Exit codes: 0 success, 1 usage or input
error, 2 numerical failure. Each run also produces a manifest (command
line, config digest, seed, versions, timings). It is written next to the
output file when ``--out`` is given, to ``--manifest`` when requested,
and otherwise to standard error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, is_dataclass, replace
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import charfun, detect, entropy, graphs, spectrum, threshold
from .ensembles import SeededStream, goe_ensemble, sample_gram
from .errors import GeodetectError, NumericError, ToleranceError, UsageError
from .parallel import Parallel, set_default_threads

SIGNIFICANT = 12


# Output formatting -----------------------------------------------------------


def _plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def to_json(obj) -> str:
    """Deterministic JSON with floats at 12 significant digits; non-finite floats become null."""

    def emit(v) -> str:
        if v is None:
            return "null"
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, int):
            return str(v)
        if isinstance(v, float):
            if not math.isfinite(v):
                return "null"
            return format(v, f".{SIGNIFICANT}g")
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, list):
            return "[" + ",".join(emit(x) for x in v) + "]"
        if isinstance(v, dict):
            return "{" + ",".join(f"{json.dumps(k)}:{emit(x)}" for k, x in v.items()) + "}"
        return json.dumps(str(v))

    return emit(_plain(obj))


# Manifest --------------------------------------------------------------------


class Manifest:
    def __init__(self, argv: Sequence[str], seed: Optional[int]):
        self.argv = list(argv)
        self.seed = seed
        self.started = datetime.now(timezone.utc).isoformat(timespec="seconds")
        self._t0 = time.perf_counter()
        self._stage_t = self._t0
        self.stages: dict = {}
        self.digest_source = " ".join(self.argv)

    def stage(self, name: str) -> None:
        now = time.perf_counter()
        self.stages[name] = now - self._stage_t
        self._stage_t = now

    def to_dict(self) -> dict:
        try:
            version = metadata.version("artifact")
        except metadata.PackageNotFoundError:
            version = "unknown"
        return {
            "command_line": self.argv,
            "config_digest": hashlib.sha256(self.digest_source.encode()).hexdigest(),
            "seed": self.seed,
            "versions": {
                "artifact": version,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "started": self.started,
            "wall_clock": time.perf_counter() - self._t0,
            "stages": self.stages,
        }


def _default_seed() -> int:
    env = os.environ.get("GEODETECT_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise UsageError(f"GEODETECT_SEED must be an integer, got {env!r}") from exc


# Subcommands -----------------------------------------------------------------


def _alpha(text: str):
    return spectrum.parse_descriptor(text)


def _stream(args) -> SeededStream:
    return SeededStream(args.seed)


def cmd_sample_graph(args, par: Parallel, man: Manifest) -> str:
    stream = _stream(args)
    if args.model == "er":
        m = goe_ensemble(args.n, stream.derive("sample_graph"))
        a = graphs.er_graph(m, graphs.z_quantile(args.p))
    else:
        if args.alpha is None:
            raise UsageError("--alpha is required for --model geo")
        alpha = _alpha(args.alpha)
        t = threshold.threshold_charfun(alpha, args.p).t / alpha.norm2
        man.stage("threshold")
        w = sample_gram(args.n, alpha, stream.derive("sample_graph"))
        a = graphs.geometric_graph(w, t)
    man.stage("sample")
    return a.to_text()


def cmd_tau(args, par: Parallel, man: Manifest) -> str:
    a = graphs.read_adjacency(args.input)
    rep = graphs.triangle_report(a, args.p)
    return to_json({"t_count": rep.t_count, "tau": rep.tau, "n": rep.n, "p": rep.p, "error_bound": 0.0})


def cmd_threshold(args, par: Parallel, man: Manifest) -> str:
    alpha = _alpha(args.alpha)
    kw = {}
    if args.method == "mc":
        kw = {"n_samples": args.samples, "stream": _stream(args), "parallel": par}
    est = threshold.estimate_threshold(alpha, args.p, args.method, **kw)
    return to_json({"t": est.t, "method": est.method, "std_error": est.std_error})


def cmd_tri_prob(args, par: Parallel, man: Manifest) -> str:
    alpha = _alpha(args.alpha)
    if args.method == "mc":
        t = threshold.threshold_charfun(alpha, args.p).t
        est = charfun.triangle_prob_mc(alpha, args.p, t, args.samples, _stream(args), par)
        return to_json({"value": est.value, "error_bound": est.error_bound, "method": "mc", "error_kind": "std_error"})
    q = charfun.QuadratureParams(rel_tol=args.tol) if args.tol is not None else None
    est = charfun.triangle_prob(alpha, args.p, None, q)
    return to_json({"value": est.value, "error_bound": est.error_bound, "method": "charfun", "error_kind": "bound"})


def cmd_effective_dim(args, par: Parallel, man: Manifest) -> str:
    alpha = _alpha(args.alpha)
    return to_json({"eff3": spectrum.effective_dim_3(alpha), "eff4": spectrum.effective_dim_4(alpha)})


def cmd_entropy_bound(args, par: Parallel, man: Manifest) -> str:
    alpha = _alpha(args.alpha)
    rep = entropy.tv_upper_bound(args.n, alpha, args.p, args.method, args.replicas, _stream(args), par)
    return to_json(rep)


def cmd_detect(args, par: Parallel, man: Manifest) -> str:
    a = graphs.read_adjacency(args.input)
    if args.threshold is not None:
        thr, kind = args.threshold, "given"
    elif args.level is not None:
        thr, kind = detect.level_threshold(a.n, args.p, args.level), f"calibrated level {args.level:g}"
    else:
        thr, kind = detect.calibrated_threshold(a.n, args.p, args.z), f"calibrated z {args.z:g}"
    return to_json(detect.tau_test(a, args.p, thr, kind))


def cmd_phase_sweep(args, par: Parallel, man: Manifest) -> str:
    text = Path(args.config).read_text()
    man.digest_source = text
    cfg = detect.parse_sweep_config(text)
    if cfg.seed is None:
        cfg = replace(cfg, seed=args.seed)
    man.seed = cfg.seed
    rows = detect.phase_sweep(cfg, par)
    for r in rows:
        man.stages[f"cell n={r.n} {r.family} d={r.d}"] = r.runtime
    jsonl = args.jsonl or cfg.jsonl
    if jsonl:
        Path(jsonl).write_text(detect.sweep_jsonl(rows))
    if args.out is None:
        args.out = cfg.out
    return detect.sweep_csv(rows)


def cmd_selftest(args, par: Parallel, man: Manifest) -> str:
    from .selftest import run_selftest

    results = run_selftest()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}", file=sys.stderr)
    failed = [r.name for r in results if not r.passed]
    args.failed = bool(failed)
    return to_json({"passed": len(results) - len(failed), "failed": len(failed), "failures": failed})


# Parser ----------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="root seed (default $GEODETECT_SEED or 0)")
    sub.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker cap (default: all cores)")
    sub.add_argument("--out", default=argparse.SUPPRESS, help="write the result here instead of stdout")
    sub.add_argument("--manifest", default=argparse.SUPPRESS, help="write the run manifest to this path")


def _prob(s: str) -> float:
    try:
        v = float(s)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from exc
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geodetect", description="Detect latent anisotropic geometry in random graphs.")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--manifest", default=None)
    subs = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = subs.add_parser("sample-graph", help="sample an adjacency matrix")
    p.add_argument("--model", choices=["er", "geo"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=_prob, required=True)
    p.add_argument("--alpha")
    p.set_defaults(fn=cmd_sample_graph)

    p = subs.add_parser("tau", help="triangle count and signed-triangle statistic of a graph file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--p", type=_prob, required=True)
    p.set_defaults(fn=cmd_tau)

    p = subs.add_parser("threshold", help="edge threshold t_{p,alpha}")
    p.add_argument("--alpha", required=True)
    p.add_argument("--p", type=_prob, required=True)
    p.add_argument("--method", choices=["charfun", "normal", "mc"], default="charfun")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.set_defaults(fn=cmd_threshold)

    p = subs.add_parser("tri-prob", help="probability that a triple forms a triangle")
    p.add_argument("--alpha", required=True)
    p.add_argument("--p", type=_prob, required=True)
    p.add_argument("--method", choices=["charfun", "mc"], default="charfun")
    p.add_argument("--tol", type=float, default=None, help="relative tolerance for charfun")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.set_defaults(fn=cmd_tri_prob)

    p = subs.add_parser("effective-dim", help="effective dimensions eff3 and eff4")
    p.add_argument("--alpha", required=True)
    p.set_defaults(fn=cmd_effective_dim)

    p = subs.add_parser("entropy-bound", help="total-variation upper bound via relative entropy")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", required=True)
    p.add_argument("--p", type=_prob, required=True)
    p.add_argument("--method", choices=["mc", "analytic"], default="mc")
    p.add_argument("--replicas", type=int, default=2000)
    p.set_defaults(fn=cmd_entropy_bound)

    p = subs.add_parser("detect", help="signed-triangle test on a graph file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--p", type=_prob, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--threshold", type=float)
    g.add_argument("--level", type=_prob)
    p.add_argument("--z", type=float, default=3.0, help="null standard deviations when no threshold or level")
    p.set_defaults(fn=cmd_detect)

    p = subs.add_parser("phase-sweep", help="run a phase-diagram sweep from a key=value config")
    p.add_argument("--config", required=True)
    p.add_argument("--jsonl", default=None, help="also write JSON lines here")
    p.set_defaults(fn=cmd_phase_sweep)

    p = subs.add_parser("selftest", help="run the closed-form example checks")
    p.set_defaults(fn=cmd_selftest)

    for sub in subs.choices.values():
        _common(sub)
    return parser


def _write_manifest(man: Manifest, out: Optional[str], manifest_path: Optional[str]) -> None:
    text = to_json(man.to_dict())
    if manifest_path:
        Path(manifest_path).write_text(text + "\n")
    elif out:
        Path(out + ".manifest.json").write_text(text + "\n")
    else:
        print(f"manifest: {text}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        if args.seed is None:
            args.seed = _default_seed()
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be >= 1")
            set_default_threads(args.threads)
        par = Parallel(args.threads)
        man = Manifest(["geodetect", *argv], args.seed)
        result = args.fn(args, par, man)
        man.stage("compute")
        if not result.endswith("\n"):
            result += "\n"
        if args.out:
            Path(args.out).write_text(result)
        else:
            sys.stdout.write(result)
        _write_manifest(man, args.out, args.manifest)
        return 2 if getattr(args, "failed", False) else 0
    except ToleranceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.partial is not None:
            print(f"partial result: {to_json(exc.partial)}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GeodetectError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    finally:
        set_default_threads(None)


if __name__ == "__main__":
    sys.exit(main())
