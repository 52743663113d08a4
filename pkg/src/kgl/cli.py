"""Command-line entry point: ``kgl <subcommand> [flags]``.

Exit codes: 0 when every declared check passes, 1 on a failed check or a
numerical error (a ``failure.json`` manifest is written), 2 on a bad
configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import experiments as E
from .config import apply_override, load_config, resolve_threads
from .errors import ConfigurationError, KGLError
from .galerkin import save_kgl1

log = logging.getLogger("kgl")

RUNNERS = {
    "bounds": E.run_bounds,
    "gap": E.run_gap,
    "coercivity": E.run_coercivity,
    "cmcv": E.run_cmcv,
    "oracle": E.run_oracle,
    "relax": E.run_relax,
    "verify": E.run_verify,
}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--threads", type=int, help="worker threads (fallback: KGL_THREADS)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted config path, value parsed as JSON")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="kgl", description="Linearized Boltzmann spectral-gap laboratory.")
    sub = p.add_subparsers(dest="command", required=True)
    b = sub.add_parser("bounds", parents=[common], help="explicit gap constants")
    b.add_argument("--gamma", type=float)
    for name in ("gap", "coercivity", "oracle"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--n-max", type=int)
        s.add_argument("--l-max", type=int)
        if name == "gap":
            s.add_argument("--kernel", help="kernel preset name")
    sub.add_parser("cmcv", parents=[common], help="CMCV inequality battery")
    r = sub.add_parser("relax", parents=[common], help="nonlinear relaxation run")
    r.add_argument("--kernel")
    r.add_argument("--t-end", type=float)
    r.add_argument("--grid-n", type=int)
    v = sub.add_parser("verify", parents=[common], help="every acceptance experiment")
    v.add_argument("--quick", action="store_true", help="reduced sizes for a fast smoke run")
    return p


def _overrides(args) -> list[str]:
    out = list(args.set)
    if args.seed is not None:
        out.append(f"seed={args.seed}")
    flag_paths = {
        "gamma": "bounds.gamma",
        "n_max": "basis.n_max",
        "l_max": "basis.l_max",
        "t_end": "relax.t_end",
        "grid_n": "relax.n",
    }
    for attr, path in flag_paths.items():
        val = getattr(args, attr, None)
        if val is not None:
            out.append(f"{path}={json.dumps(val)}")
    if getattr(args, "kernel", None):
        out.append(f"kernel={json.dumps(args.kernel)}")
    if args.command == "oracle":
        out = [o.replace("basis.", "oracle.", 1) if o.startswith("basis.") else o for o in out]
    if getattr(args, "quick", False):
        out.append('verify.profile="quick"')
    return out


def _set_threads(n: int) -> None:
    import numba
    from threadpoolctl import threadpool_limits

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    threadpool_limits(n)


def _summary(res: E.ExperimentResult) -> str:
    width = max([len(c.name) for c in res.checks] + [10])
    lines = [f"{'check'.ljust(width)}  status  value"]
    for c in res.checks:
        val = c.value
        if isinstance(val, (float, np.floating)):
            shown = f"{val:.6g}"
        elif isinstance(val, (list, tuple)):
            shown = "[" + ", ".join(f"{x:.6g}" if isinstance(x, (float, np.floating)) else str(x)
                                    for x in val) + "]"
        else:
            shown = "" if val is None else str(val)
        lines.append(f"{c.name.ljust(width)}  {'PASS' if c.passed else 'FAIL':6}  {shown[:70]}")
    lines.append(f"{res.name}: {'all checks passed' if res.passed else 'FAILED'}")
    return "\n".join(lines)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        cfg = load_config(args.config, tuple(_overrides(args)))
        threads = resolve_threads(args.threads)
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    _set_threads(threads)
    out.mkdir(parents=True, exist_ok=True)
    # the thread count never enters the outputs, so they stay byte-identical across settings
    try:
        res = RUNNERS[args.command](cfg)
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except KGLError as e:
        _dump(out / "failure.json", {"command": args.command, "config": cfg,
                                     "error": {"type": type(e).__name__, "message": str(e)}})
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1

    report = {"command": args.command, "config": cfg, "results": res.results,
              "checks": [c.as_dict() for c in res.checks], "passed": res.passed}
    _dump(out / "report.json", report)
    for stem, (header, rows) in res.tables.items():
        write_csv(out / f"{stem}.csv", header, rows)
    for stem, (matrix, meta) in res.matrices.items():
        save_kgl1(out / f"{stem}.kgl1", matrix, _jsonable(meta))
    print(_summary(res))
    if not res.passed:
        _dump(out / "failure.json", {"command": args.command,
                                     "failed": [c.as_dict() for c in res.checks if not c.passed]})
        return 1
    stale = out / "failure.json"
    if stale.exists():
        stale.unlink()
    return 0


if __name__ == "__main__":
    sys.exit(main())
