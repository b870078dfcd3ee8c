"""``n2s3`` command line: synth, train, denoise, evaluate, gradcheck.

Every command prints a JSON summary on stdout. Failures print a JSON object
``{"error", "message", "command"}`` on stderr and exit nonzero (2 for usage
errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .denoise import predict_scores, sigma_sweep, tweedie_denoise
from .geometry import NormalizationTransform, normalize_unit_sphere
from .io import read_cloud, write_cloud, write_xyz
from .metrics import chamfer_distance, point_to_surface, tv_pc
from .model import init_params, load_params, save_params
from .noise import corrupt_gaussian
from .surfaces import parse_surface
from .training import gradient_check, train

log = logging.getLogger("n2s3")

GRADCHECK_TOLERANCE = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write_json(path: Path, doc) -> None:
    path.write_text(_dump(doc))


def _seed(args, cfg) -> int:
    return args.seed if args.seed is not None else cfg.get("seed", 0)


def _derived_seed(*key) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1, np.uint64)[0])


def cmd_synth(args) -> dict:
    cfg = cfgmod.load_config(args.config)
    seed = _seed(args, cfg)
    ds = cfgmod.dataset_from(cfg)
    if args.surface:
        ds["shapes"] = [args.surface]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, spec in enumerate(ds["shapes"]):
        surf = parse_surface(spec)
        for c in range(ds["copies"]):
            sample_seed = _derived_seed(seed, i, c)
            clean, t = normalize_unit_sphere(surf.sample(ds["points_per_shape"], sample_seed))
            stem = f"{surf.kind}{i}_c{c}"
            write_xyz(out / f"{stem}_clean.xyz", clean)
            for j, level in enumerate(ds["noise_levels"]):
                noise_seed = _derived_seed(seed, i, c, j, 1)
                noisy = corrupt_gaussian(clean, level, noise_seed)
                name = f"{stem}_s{level:g}_noisy.xyz"
                write_xyz(out / name, noisy)
                entries.append({
                    "source_surface": surf.spec,
                    "surface": surf.normalized(t).spec,
                    "clean": f"{stem}_clean.xyz",
                    "noisy": name,
                    "sigma": level,
                    "sample_seed": sample_seed,
                    "noise_seed": noise_seed,
                })
    manifest = {"seed": seed, "points_per_shape": ds["points_per_shape"], "entries": entries}
    _write_json(out / "manifest.json", manifest)
    return {"manifest": str(out / "manifest.json"), "n_entries": len(entries)}


def _training_inputs(paths) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.suffix == ".json":
            manifest = json.loads(p.read_text())
            files.extend(p.parent / e["noisy"] for e in manifest["entries"])
        else:
            files.append(p)
    return files


def cmd_train(args) -> dict:
    cfg = cfgmod.load_config(args.config)
    seed = _seed(args, cfg)
    inputs = args.inputs or cfg.get("training", {}).get("inputs")
    if not inputs:
        raise UsageError("train needs input clouds (positional or training.inputs)")
    files = _training_inputs(inputs)
    clouds = [read_cloud(f) for f in files]
    arch = cfgmod.architecture_from(cfg)
    tcfg = cfgmod.training_from(cfg, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    net, history = train(clouds, init_params(arch, seed), tcfg)
    save_params(net, out / "model.n2s3")
    history.to_csv(out / "history.csv")
    return {"model": str(out / "model.n2s3"), "history": str(out / "history.csv"),
            "inputs": [str(f) for f in files], "epochs": tcfg.epochs,
            "final_loss": float(history.losses[-1]), "seconds": time.perf_counter() - t0}


def cmd_denoise(args) -> dict:
    if (args.sigma is None) == (not args.estimate_sigma):
        raise UsageError("give exactly one of --sigma or --estimate-sigma")
    if args.sigma is not None and args.sigma < 0:
        raise UsageError("--sigma must be non-negative")
    cfg = cfgmod.load_config(args.config)
    t0 = time.perf_counter()
    net = load_params(args.model)
    y = read_cloud(args.input)
    if args.no_normalize:
        y_n, t = y, NormalizationTransform.identity()
    else:
        y_n, t = normalize_unit_sphere(y)
    scores = predict_scores(net, y_n)
    tv_params = cfgmod.tv_from(cfg)
    if args.estimate_sigma:
        res = sigma_sweep(y_n, scores, cfgmod.sigma_grid_from(cfg), tv_params)
        sigma, trace, mode = res.sigma_star, res.tv_trace, "estimated"
    else:
        sigma, mode = args.sigma, {"known": args.sigma}
        trace = [(sigma, tv_pc(tweedie_denoise(y_n, scores, sigma), tv_params))]
    # displacement computed in the unit frame, applied in the input frame
    x = y + t.scale * (tweedie_denoise(y_n, scores, sigma) - y_n)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    src = Path(args.input)
    out_path = out / f"{src.stem}_denoised{src.suffix or '.xyz'}"
    write_cloud(out_path, x)
    report = {"input": str(src), "output": str(out_path), "model": str(args.model),
              "sigma_mode": mode, "sigma_star": float(sigma),
              "tv_trace": [[float(s), float(v)] for s, v in trace]}
    report.update(_reference_metrics(x, y, args.reference, args.surface))
    report["seconds"] = time.perf_counter() - t0
    cfgmod.validate(report, "denoise_report")
    _write_json(out / f"{src.stem}_report.json", report)
    return report


def _reference_metrics(x, y, reference, surface) -> dict:
    """CD in the reference's unit frame; P2M in the files' own coordinates."""
    doc = {}
    if reference:
        ref_n, t = normalize_unit_sphere(read_cloud(reference))
        doc.update(reference=str(reference), cd=chamfer_distance(t.apply(x), ref_n),
                   cd_input=chamfer_distance(t.apply(y), ref_n))
    if surface:
        surf = parse_surface(surface)
        doc.update(surface=surf.spec, p2m=point_to_surface(x, surf),
                   p2m_input=point_to_surface(y, surf))
    return doc


def cmd_evaluate(args) -> dict:
    if not args.reference and not args.surface:
        raise UsageError("evaluate needs a reference cloud or --surface")
    cfg = cfgmod.load_config(args.config)
    x = read_cloud(args.input)
    doc = {"input": str(args.input), "n_points": len(x),
           "tv_pc": tv_pc(x, cfgmod.tv_from(cfg))}
    if args.reference:
        ref_n, t = normalize_unit_sphere(read_cloud(args.reference))
        doc.update(reference=str(args.reference), cd=chamfer_distance(t.apply(x), ref_n))
    if args.surface:
        surf = parse_surface(args.surface)
        doc.update(surface=surf.spec, p2m=point_to_surface(x, surf))
    cfgmod.validate(doc, "metrics")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "metrics.json", doc)
    return doc


def cmd_gradcheck(args) -> dict:
    cfg = cfgmod.load_config(args.config)
    seed = _seed(args, cfg)
    gc = dict(cfg.get("gradcheck", {}))
    tol = gc.pop("tolerance", GRADCHECK_TOLERANCE)
    net = load_params(args.model) if args.model else init_params(cfgmod.architecture_from(cfg), seed)
    t0 = time.perf_counter()
    rep = gradient_check(net, cfgmod.training_from(cfg, seed), seed=seed, **gc)
    doc = {"max_rel_error": rep.max_rel_error, "tolerance": tol,
           "passed": bool(rep.max_rel_error <= tol), "n_probes": len(rep.probes),
           "n_params": net.n_params, "step": gc.get("step", 1e-6),
           "seconds": time.perf_counter() - t0}
    cfgmod.validate(doc, "gradcheck_report")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "gradcheck.json", doc)
    return doc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="n2s3", description="Self-supervised point cloud denoising.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--out", required=out_required, help="output directory")

    s = sub.add_parser("synth", help="sample clean/noisy clouds from analytic surfaces")
    common(s)
    s.add_argument("--surface", help="kind:params, replaces dataset.shapes")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="fit a score network to noisy clouds")
    common(s)
    s.add_argument("inputs", nargs="*", help="noisy clouds or synth manifests")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("denoise", help="one-step Tweedie denoising")
    common(s)
    s.add_argument("model")
    s.add_argument("input")
    s.add_argument("--sigma", type=float, help="known noise level, in unit-sphere units")
    s.add_argument("--estimate-sigma", action="store_true", help="pick sigma by minimizing TV_PC")
    s.add_argument("--reference", help="clean cloud for CD")
    s.add_argument("--surface", help="analytic surface for point-to-surface distance")
    s.add_argument("--no-normalize", action="store_true",
                   help="treat the input as already unit-sphere normalized")
    s.set_defaults(func=cmd_denoise)

    s = sub.add_parser("evaluate", help="TV_PC, CD and point-to-surface metrics")
    common(s, out_required=False)
    s.add_argument("input")
    s.add_argument("reference", nargs="?")
    s.add_argument("--surface")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("gradcheck", help="finite-difference check of the training gradient")
    common(s, out_required=False)
    s.add_argument("--model", help="parameter file; default is a fresh initialization")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        doc = args.func(args)
    except UsageError as exc:
        sys.stderr.write(_dump({"error": "UsageError", "message": str(exc), "command": command}))
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error
        sys.stderr.write(_dump({"error": type(exc).__name__, "message": str(exc),
                                "command": command}))
        return 1
    sys.stdout.write(_dump(doc))
    if command == "gradcheck" and not doc["passed"]:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
