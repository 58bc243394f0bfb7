"""Command-line front-end: ``maneuvergen <subcommand> ...``.

Every run writes a JSON manifest next to its main output recording the
resolved argument vector (seeds included) and a SHA-256 digest of each
numeric artifact. ``maneuvergen --replay MANIFEST`` re-executes the recorded
command and checks that the artifacts come out byte-identical.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 search timeout.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path


from . import __version__
from .errors import ManeuverGenError

log = logging.getLogger("maneuvergen")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_TIMEOUT = 0, 1, 2, 3
SEED_ENV = "SILGAN_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest_outputs(paths):
    out = {}
    for p in paths:
        p = Path(p).resolve()
        if p.is_dir():
            for f in sorted(p.rglob("*")):
                if f.is_file():
                    out[str(f)] = _sha256(f)
        elif p.exists():
            out[str(p)] = _sha256(p)
    return out


def _require(path, what="input"):
    if not Path(path).exists():
        raise UsageError(f"{what} not found: {path}")
    return Path(path)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2))


# ---------------------------------------------------------------- subcommands


def cmd_synth_data(args):
    from .synth import SimConfig, build_dataset, takeoff_config

    if args.config:
        cfg = SimConfig.from_dict(json.loads(_require(args.config, "config").read_text()))
    elif args.takeoff:
        cfg = takeoff_config(duration_s=args.length)
    else:
        cfg = SimConfig(duration_s=args.length)
    path = build_dataset(cfg, args.count, args.length, args.seed, args.out)
    return [path, str(path) + ".json"], {"count": args.count}


def cmd_extract_templates(args):
    from .synth import load_dataset
    from .templates import ExtractParams, build_paired_dataset, save_templates

    params = ExtractParams(args.smooth_window, args.flat_slope_eps, args.min_flat_len)
    pairs = build_paired_dataset(load_dataset(_require(args.data)), params)
    templates = [t for tpls, _ in pairs for t in tpls]
    save_templates(templates, args.out)
    return [args.out], {"templates": len(templates)}


def _model_config(args):
    from .networks import ModelConfig, desk_config, tiny_config

    if args.model in ("tiny", "desk", "full"):
        base = {"tiny": tiny_config, "desk": desk_config, "full": ModelConfig}[args.model]()
    else:
        base = ModelConfig.from_dict(json.loads(_require(args.model, "model config").read_text()))
    return base


def cmd_train(args):
    from .synth import load_array, load_dataset
    from .templates import ExtractParams, build_paired_dataset
    from .training import TrainConfig, build_model, paired_arrays, train

    cfg = _model_config(args)
    pairs = build_paired_dataset(load_dataset(_require(args.data)), ExtractParams())
    paired = paired_arrays(pairs, mode=args.pairing)
    long = load_array(_require(args.long_data))
    model = build_model(cfg, args.seed)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr_gen=args.lr, lr_dis=args.lr, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "metrics.csv"
    if log_path.exists():
        log_path.unlink()  # one log per run keeps replays byte-comparable
    result = train(model, paired, long, tcfg, checkpoint_dir=out / "checkpoint", log_path=log_path,
                   max_steps=args.max_steps)
    return [out / "checkpoint"], {"steps": len(result.metrics), "metrics_log": str(log_path)}


def _load_model(path):
    from .networks import load_checkpoint

    return load_checkpoint(_require(path, "checkpoint"))


def _load_template_arg(path, index):
    from .templates import load_template_json, load_templates

    path = _require(path, "template file")
    if path.suffix == ".json":
        loaded = load_template_json(path)
        loaded = loaded if isinstance(loaded, list) else [loaded]
    else:
        loaded = load_templates(path)
    if not 0 <= index < len(loaded):
        raise UsageError(f"template index {index} out of range (file holds {len(loaded)})")
    return loaded[index]


def cmd_translate(args):
    from .generation import translate
    from .synth import save_dataset

    model = _load_model(args.checkpoint)
    template = _load_template_arg(args.templates, args.index)
    out = translate(model, template, args.n, seed=args.seed)
    save_dataset(out, args.out, manifest={"template": str(args.templates), "index": args.index, "seed": args.seed})
    return [args.out], {"samples": len(out)}


def cmd_expand(args):
    from .generation import expand_maneuver
    from .synth import load_dataset, save_dataset

    model = _load_model(args.checkpoint)
    maneuvers = load_dataset(_require(args.data))
    p = args.p if args.p == "center" else int(args.p)
    out = [expand_maneuver(model, m, p=p, c3_seed=args.seed + i) for i, m in enumerate(maneuvers)]
    save_dataset(out, args.out, manifest={"source": str(args.data), "p": args.p, "c3_seed": args.seed})
    return [args.out], {"maneuvers": len(out)}


def cmd_compose(args):
    from .generation import Scenario, draw_alphas, generate_from_scenario
    from .synth import save_dataset

    model = _load_model(args.checkpoint)
    scenario = Scenario.load(_require(args.scenario, "scenario"))
    alphas = draw_alphas(scenario.k, args.n, args.seed)
    out = generate_from_scenario(model, scenario, args.n, seed=args.seed, alphas=alphas)
    save_dataset(out, args.out, manifest={"scenario": str(args.scenario), "seed": args.seed,
                                         "alphas": alphas.tolist()})
    return [args.out], {"samples": len(out)}


def cmd_automate(args):
    from .coverage import compile_indicators, parse_branches
    from .generation import Scenario
    from .search import MockGenerator, SearchParams, automate, automate_multi, write_report
    from .synth import SIGNAL_NAMES, save_dataset

    scenario = Scenario.load(_require(args.scenario, "scenario"))
    source = _require(args.predicate, "predicate").read_text()
    if args.mock:
        model = MockGenerator(scenario.length)
    elif args.checkpoint:
        model = _load_model(args.checkpoint)
    else:
        raise UsageError("automate needs --checkpoint or --mock")
    search = compile_indicators(parse_branches(source, SIGNAL_NAMES, scenario.length))
    params = SearchParams(args.n_sim, args.n_gd, args.eta, args.seed)
    if args.branch is None:
        results = automate_multi(model, scenario, search, params, parallel=args.parallel)
    else:
        results = [automate(model, scenario, search, args.branch, params)]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for r in results:
        h_path = None
        if r.found:
            h_path = out / f"branch{r.branch}.sild"
            save_dataset([r.to_maneuver()], h_path)
            written.append(h_path)
        written.append(write_report(r, params, out / f"branch{r.branch}.json", h_path))
        print(f"branch {r.branch}: {r.status}" + (f" ({r.phase}, {r.evaluations} evaluations)" if r.found else ""))
    statuses = [r.status for r in results]
    code = EXIT_OK
    if "error" in statuses:
        code = EXIT_RUNTIME
    elif "timeout" in statuses:
        code = EXIT_TIMEOUT
    return written, {"statuses": statuses}, code


def cmd_eval(args):
    from .templates import load_templates
    from .training import evaluate_cycle_ssim

    model = _load_model(args.checkpoint)
    templates = load_templates(_require(args.templates, "templates"))
    score = evaluate_cycle_ssim(model, templates, n_draws=args.draws, seed=args.seed)
    print(repr(score))
    result_path = Path(args.out) if args.out else None
    if result_path:
        _write_json(result_path, {"cycle_ssim": score, "templates": len(templates), "draws": args.draws})
    return ([result_path] if result_path else []), {"cycle_ssim": score}


def cmd_plot(args):
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    from .synth import load_dataset

    maneuvers = load_dataset(_require(args.data))[: args.max_records]
    template = _load_template_arg(args.templates, args.index) if args.templates else None
    channel = template.signal_index if template is not None else args.channel
    fig, ax = plt.subplots(figsize=(8, 3))
    for m in maneuvers:
        ax.plot(m.values[channel], lw=0.8, alpha=0.7)
    if template is not None:
        ax.plot(template.values, "k--", lw=1.5, label="template")
        ax.legend(loc="upper right")
    ax.set_xlabel("time [s]")
    ax.set_ylabel(f"{maneuvers[0].signal_names[channel] if maneuvers else channel} (normalized)")
    ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    # a fixed hash salt and no date keep the SVG byte-stable across runs
    with matplotlib.rc_context({"svg.hashsalt": "maneuvergen"}):
        fig.savefig(args.out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return [args.out], {"records": len(maneuvers)}


# ---------------------------------------------------------------- argument parsing


def build_parser():
    parser = _Parser(prog="maneuvergen", description="Template-driven maneuver generation and coverage search.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--replay", metavar="MANIFEST", help="re-run a recorded command and verify its artifacts")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0, help=f"RNG seed (overridden by ${SEED_ENV})")
        p.add_argument("--manifest", help="run manifest path (default: <out>.run.json)")
        return p

    p = add("synth-data", cmd_synth_data, "simulate a SILD dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--length", type=int, default=512)
    p.add_argument("--takeoff", action="store_true", help="begin every maneuver with a standstill and take-off")
    p.add_argument("--config", help="SimConfig JSON")
    p.add_argument("--out", required=True)

    p = add("extract-templates", cmd_extract_templates, "extract one template per channel into a SILT file")
    p.add_argument("--data", required=True)
    p.add_argument("--smooth-window", type=int, default=21)
    p.add_argument("--flat-slope-eps", type=float, default=0.002)
    p.add_argument("--min-flat-len", type=int, default=10)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train the two-stage model")
    p.add_argument("--data", required=True, help="SILD file of length-N maneuvers")
    p.add_argument("--long-data", required=True, help="SILD file of length-M maneuvers")
    p.add_argument("--model", default="desk", help="tiny | desk | full | path to ModelConfig JSON")
    p.add_argument("--pairing", choices=("cycle", "all"), default="cycle")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--out", required=True, help="output directory")

    p = add("translate", cmd_translate, "translate a template into maneuvers")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--templates", required=True, help="SILT or JSON template file")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--out", required=True)

    p = add("expand", cmd_expand, "extend length-N maneuvers to length M")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--p", default="center", help="crop offset or 'center'")
    p.add_argument("--out", required=True)

    p = add("compose", cmd_compose, "sample maneuvers from a K-template scenario")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", required=True, help="JSON list of templates")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--out", required=True)

    p = add("automate", cmd_automate, "search a scenario for maneuvers covering predicate branches")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--checkpoint")
    src.add_argument("--mock", action="store_true", help="use the closed-form mock generator")
    p.add_argument("--scenario", required=True)
    p.add_argument("--predicate", required=True, help="predicate file, one branch per line")
    p.add_argument("--branch", type=int, help="search a single branch (default: all)")
    p.add_argument("--n-sim", type=int, default=50)
    p.add_argument("--n-gd", type=int, default=200)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--out", required=True, help="output directory")

    p = add("eval", cmd_eval, "mean cycle-reconstruction SSIM over a template set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--templates", required=True)
    p.add_argument("--draws", type=int, default=4)
    p.add_argument("--out", help="optional JSON result file")

    p = add("plot", cmd_plot, "SVG line chart of maneuvers with a template overlay")
    p.add_argument("--data", required=True)
    p.add_argument("--templates", help="template to overlay (SILT or JSON)")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--max-records", type=int, default=8)
    p.add_argument("--out", required=True)
    return parser


def _manifest_path(args):
    if args.manifest:
        return Path(args.manifest)
    out = Path(args.out) if getattr(args, "out", None) else Path(f"{args.command}")
    return out.with_name(out.name + ".run.json")


def _resolved_argv(argv, seed):
    """The argument vector with the effective seed written out explicitly."""
    out, skip = [], False
    for i, a in enumerate(argv):
        if skip:
            skip = False
            continue
        if a == "--seed":
            skip = True
            continue
        if a.startswith("--seed="):
            continue
        out.append(a)
    return out + ["--seed", str(seed)]


def _execute(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.replay:
        return _replay(args.replay)
    if not args.command:
        raise UsageError(parser.format_usage() + "maneuvergen: error: a subcommand is required")
    if os.environ.get(SEED_ENV):
        try:
            args.seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer, got {os.environ[SEED_ENV]!r}")

    started = time.time()
    ret = args.func(args)
    outputs, info = ret[0], ret[1]
    code = ret[2] if len(ret) > 2 else EXIT_OK
    argv_clean = [a for a in argv if a not in ("-v", "--verbose")]
    manifest = {
        "tool": "maneuvergen",
        "version": __version__,
        "command": args.command,
        "argv": _resolved_argv(argv_clean, args.seed),
        "seed": args.seed,
        "cwd": os.getcwd(),
        "outputs": _digest_outputs(outputs),
        "info": info,
        "exit_code": code,
        "wall_time_s": time.time() - started,
    }
    _write_json(_manifest_path(args), manifest)
    return code


def _replay(path):
    manifest = json.loads(_require(path, "manifest").read_text())
    before = manifest["outputs"]
    env_seed = os.environ.pop(SEED_ENV, None)  # the recorded seed is authoritative
    try:
        argv = list(manifest["argv"])
        if not any(a == "--manifest" for a in argv):
            argv += ["--manifest", str(Path(path).with_suffix(".replay.json"))]
        cwd = os.getcwd()
        os.chdir(manifest.get("cwd", cwd))
        try:
            code = _execute(argv)
        finally:
            os.chdir(cwd)
    finally:
        if env_seed is not None:
            os.environ[SEED_ENV] = env_seed
    after = _digest_outputs(list(before))
    mismatched = sorted(k for k in before if after.get(k) != before[k])
    if mismatched:
        print("replay mismatch: " + ", ".join(mismatched), file=sys.stderr)
        return EXIT_RUNTIME
    print(f"replay ok: {len(before)} artifact(s) reproduced")
    return code


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return _execute(argv)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (ManeuverGenError, ValueError, OSError, RuntimeError) as exc:
        print(f"maneuvergen: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
