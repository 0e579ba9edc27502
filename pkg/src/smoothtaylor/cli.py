"""``smoothtaylor`` command-line entry point.

Subcommands: ``attribute``, ``evaluate``, ``adaptive``, ``gradcheck``,
``report`` and the helper ``make-toy``.  Exit codes: 0 success, 1 failed
gradient check, 2 configuration or I/O error, 3 numerical failure.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from . import rng as rngmod
from ._accel import BACKEND
from ._io import atomic_write, csv_bytes, pgm_bytes
from .adaptive import adaptive_noise_search
from .attribution import (
    IGConfig,
    NoiseConfig,
    integrated_gradients,
    integrated_gradients_noise_avg,
    raw_gradient,
    smooth_grad,
    smooth_taylor,
)
from .config import ConfigError, load_config
from .gradcheck import MIN_PASS_FRACTION, run_gradcheck
from .model import ModelFormatError, ScoreTarget, ShapeError, load_model, predicted_class
from .perturbation import aupc, perturbation_game
from .saliency import PERCENTILE_METHOD, autvc, multiscale_tv_curve, to_saliency
from .tensor import NonFiniteError, TensorFormatError, load_tensor, tensor_to_bytes

log = logging.getLogger("smoothtaylor")

EXIT_OK, EXIT_GRADCHECK_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# inputs


def load_input(path, normalization=None):
    """Read a ``.tsr`` tensor or an 8-bit PNG as a float32 ``(C, H, W)`` array."""
    if path.lower().endswith(".png"):
        from PIL import Image

        with Image.open(path) as img:
            arr = np.asarray(img.convert("L" if img.mode in ("L", "I", "1") else "RGB"), dtype=np.float32)
        arr = (arr / 255.0).reshape(arr.shape[0], arr.shape[1], -1).transpose(2, 0, 1)
        if normalization:
            mean = np.asarray(normalization.get("mean", 0.0), dtype=np.float32).reshape(-1, 1, 1)
            std = np.asarray(normalization.get("std", 1.0), dtype=np.float32).reshape(-1, 1, 1)
            arr = (arr - mean) / std
        return np.ascontiguousarray(arr, dtype=np.float32)
    return load_tensor(path)


def input_id(path):
    return os.path.splitext(os.path.basename(path))[0]


def _load_all(cfg):
    if not os.path.exists(cfg.model_path):
        raise InputError(f"model file not found: {cfg.model_path}")
    model = load_model(cfg.model_path)
    inputs = []
    for p in cfg.input_paths:
        if not os.path.exists(p):
            raise InputError(f"input file not found: {p}")
        x = load_input(p, cfg.normalization)
        model.check_input(x)
        inputs.append((input_id(p), x))
    ids = [i for i, _ in inputs]
    if len(set(ids)) != len(ids):
        raise InputError("input file names must be unique")
    return model, inputs


def _target(model, x, cfg):
    return ScoreTarget(predicted_class(model, x), cfg.score_kind)


def _map_inputs(cfg, fn, items):
    """Apply ``fn`` to every item, keeping input order whatever the worker count."""
    if cfg.workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# attribution files


def compute_method(model, x, target, spec, cfg):
    seed = cfg.seed
    if spec.name == "gradient":
        return raw_gradient(model, x, target)
    if spec.name == "ig":
        steps = spec.get("steps")
        if spec.get("baseline") == "zero":
            return integrated_gradients(model, x, np.zeros_like(x), target, steps)
        ig_cfg = IGConfig(steps, "uniform_noise", spec.get("baselines", 1), seed)
        return integrated_gradients_noise_avg(model, x, target, ig_cfg, cfg.input_value_range)
    if spec.name == "smoothgrad":
        return smooth_grad(model, x, target, None, NoiseConfig(spec.get("sigma"), spec.get("samples"), seed))
    if spec.name == "smoothtaylor":
        return smooth_taylor(model, x, target, NoiseConfig(spec.get("sigma"), spec.get("roots"), seed))
    raise ConfigError(f"unknown method {spec.name!r}")


def _sidecar(cfg, model_hash, tag, params, target):
    return {
        "method_tag": tag,
        "params": params,
        "target": {"class_index": target.class_index, "score_kind": target.kind},
        "seed": cfg.seed,
        "prng": rngmod.PRNG_ID,
        "model_hash": model_hash,
        "config_hash": cfg.digest(),
    }


def _json_bytes(obj):
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


class Outputs:
    """Collects written files so each command can emit a manifest report."""

    def __init__(self, root):
        self.root = root
        self.files = {}

    def write(self, rel, data):
        atomic_write(os.path.join(self.root, rel), data)
        self.files[rel] = hashlib.sha256(data).hexdigest()

    def report(self, command, cfg, model_hash=None, **extra):
        body = {
            "command": command,
            "version": __version__,
            "config_hash": cfg.digest(),
            "seed": cfg.seed,
            "prng": rngmod.PRNG_ID,
            "kernel_backend": BACKEND,
            "percentile_method": PERCENTILE_METHOD,
            "model_hash": model_hash,
            "files": dict(sorted(self.files.items())),
            **extra,
        }
        atomic_write(os.path.join(self.root, f"{command}_report.json"), _json_bytes(body))
        log.info("%s: wrote %d files under %s", command, len(self.files) + 1, self.root)


def _write_attribution(out, cfg, model_hash, image, attr, tag, params):
    base = f"{image}__{tag}"
    out.write(f"attributions/{base}.tsr", tensor_to_bytes(attr.values))
    out.write(f"attributions/{base}.json", _json_bytes(_sidecar(cfg, model_hash, tag, params, attr.target)))
    sal = to_saliency(attr)
    out.write(f"saliency/{base}.pgm", pgm_bytes(sal.values))
    out.write(f"saliency/{base}.tsr", tensor_to_bytes(sal.values))


def _params_dict(spec):
    return {k: v for k, v in spec.params}


# ---------------------------------------------------------------------------
# commands


def cmd_attribute(cfg):
    if not cfg.methods:
        raise ConfigError("attribute needs at least one method")
    model, inputs = _load_all(cfg)
    mhash = model.digest()
    out = Outputs(cfg.output_dir)

    def work(item):
        image, x = item
        target = _target(model, x, cfg)
        return [(image, spec, compute_method(model, x, target, spec, cfg)) for spec in cfg.methods]

    for results in _map_inputs(cfg, work, inputs):
        for image, spec, attr in results:
            _write_attribution(out, cfg, mhash, image, attr, spec.tag, _params_dict(spec))
    out.report("attribute", cfg, mhash)
    return out


def _existing_or_new(model, x, image, spec, target, cfg):
    path = os.path.join(cfg.output_dir, "attributions", f"{image}__{spec.tag}.tsr")
    if os.path.exists(path):
        values = load_tensor(path)
        if values.shape != x.shape:
            raise InputError(f"attribution {path} has shape {values.shape}, input has {x.shape}")
        return values
    return compute_method(model, x, target, spec, cfg).values


def _tv_opts(cfg):
    return {k: v for k, v in cfg.tv.items() if k in ("include_last", "min_size")}


def _evaluate_map(model, x, values, target, cfg):
    curve = perturbation_game(model, x, values, target, cfg.perturbation)
    result = {"curve": curve, "aupc": aupc(curve)}
    if cfg.tv.get("enabled", True):
        tv = multiscale_tv_curve(to_saliency(values), **_tv_opts(cfg))
        result["tv"] = tv
        result["autvc"] = autvc(tv)
    return result


def cmd_evaluate(cfg):
    if not cfg.methods:
        raise ConfigError("evaluate needs at least one method")
    model, inputs = _load_all(cfg)
    out = Outputs(cfg.output_dir)

    def work(item):
        image, x = item
        target = _target(model, x, cfg)
        rows = []
        for spec in cfg.methods:
            values = _existing_or_new(model, x, image, spec, target, cfg)
            rows.append((image, spec, _evaluate_map(model, x, values, target, cfg)))
        return rows

    aupc_rows, autvc_rows = [], []
    per_method = {}
    for rows in _map_inputs(cfg, work, inputs):
        for image, spec, res in rows:
            base = f"curves/{image}__{spec.tag}"
            out.write(base + "__perturbation.csv", csv_bytes(["step", "normalized_score"], res["curve"].points))
            aupc_rows.append((image, spec.name, spec.param_string, res["aupc"]))
            acc = per_method.setdefault((spec.name, spec.param_string), {"aupc": [], "autvc": []})
            acc["aupc"].append(res["aupc"])
            if "tv" in res:
                out.write(base + "__tv.csv", csv_bytes(["level", "height", "width", "atv"], res["tv"].levels))
                autvc_rows.append((image, spec.name, spec.param_string, res["autvc"]))
                acc["autvc"].append(res["autvc"])
    out.write("aupc.csv", csv_bytes(["image_id", "method", "params", "aupc"], aupc_rows))
    if autvc_rows:
        out.write("autvc.csv", csv_bytes(["image_id", "method", "params", "autvc"], autvc_rows))
    table = [
        (name, params, float(np.mean(v["aupc"])), float(np.mean(v["autvc"])) if v["autvc"] else "")
        for (name, params), v in per_method.items()
    ]
    out.write("table.csv", csv_bytes(["method", "params", "mean_aupc", "mean_autvc"], table))
    out.report("evaluate", cfg, model.digest())
    return out


def cmd_adaptive(cfg):
    if cfg.adaptive is None:
        raise ConfigError("adaptive needs an 'adaptive' block in the config")
    model, inputs = _load_all(cfg)
    mhash = model.digest()
    acfg = cfg.adaptive
    out = Outputs(cfg.output_dir)

    def work(item):
        image, x = item
        target = _target(model, x, cfg)
        trace = adaptive_noise_search(x, model, target, acfg, perturb_cfg=cfg.perturbation, tv_opts=_tv_opts(cfg))
        attr = smooth_taylor(model, x, target, NoiseConfig(trace.best_sigma, acfg.roots, acfg.seed))
        scores = _evaluate_map(model, x, attr.values, target, cfg)
        return image, trace, attr, scores

    tag = f"adaptive-{acfg.objective}"
    rows = []
    for image, trace, attr, scores in _map_inputs(cfg, work, inputs):
        out.write(f"traces/{image}__{tag}.csv",
                  csv_bytes(["iteration", "sigma", "auc", "alpha", "stop_count"], trace.rows()))
        params = {"objective": acfg.objective, "roots": acfg.roots, "sigma": trace.best_sigma}
        _write_attribution(out, cfg, mhash, image, attr, tag, params)
        rows.append((image, acfg.objective, acfg.roots, trace.initial_sigma, trace.initial_auc,
                     trace.best_sigma, trace.best_auc, scores["aupc"], scores.get("autvc", "")))
    out.write(f"{tag}.csv", csv_bytes(
        ["image_id", "objective", "roots", "initial_sigma", "initial_auc", "best_sigma", "best_auc",
         "aupc", "autvc"], rows))
    best = {r[0]: {"best_sigma": r[5], "best_auc": r[6], "initial_sigma": r[3], "initial_auc": r[4]} for r in rows}
    out.report("adaptive", cfg, mhash, objective=acfg.objective, results=best)
    return out


def cmd_gradcheck(cfg):
    if not os.path.exists(cfg.model_path):
        raise InputError(f"model file not found: {cfg.model_path}")
    model = load_model(cfg.model_path)
    samples = []
    for p in cfg.input_paths:
        if not os.path.exists(p):
            raise InputError(f"input file not found: {p}")
        samples.append(model.check_input(load_input(p, cfg.normalization)))
    n_random = int(cfg.gradcheck.get("random_samples", 0))
    gen = rngmod.stream(cfg.seed, 0)
    samples += [gen.standard_normal(model.input_shape).astype(np.float32) for _ in range(n_random)]
    if not samples:
        raise ConfigError("gradcheck needs at least 1 sample (input_paths or gradcheck.random_samples)")
    target = ScoreTarget(int(cfg.gradcheck.get("class_index", 0)), cfg.score_kind)
    report = run_gradcheck(model, samples, target, seed=cfg.seed, h=float(cfg.gradcheck.get("h", 1e-3)))
    out = Outputs(cfg.output_dir)
    per_layer = {}
    for lid, kind, err, _, _ in report.layers:
        prev = per_layer.get(lid, (kind, 0.0))[1]
        per_layer[lid] = (kind, max(prev, err))
    rows = [(lid, kind, err * report.rel_tol, "FAIL" if err > 1.0 else "PASS")
            for lid, (kind, err) in per_layer.items()]
    e2e = max(err for err, _ in report.end_to_end) * report.rel_tol
    frac = min(f for _, f in report.end_to_end)
    rows.append(("end_to_end", "model", e2e, "PASS" if frac >= MIN_PASS_FRACTION else "FAIL"))
    out.write("gradcheck.csv", csv_bytes(["layer_id", "layer_type", "max_rel_err", "status"], rows))
    by_kind = {kind: err * report.rel_tol for kind, err in sorted(report.by_kind().items())}
    out.report("gradcheck", cfg, model.digest(), passed=report.passed, max_rel_err_by_type=by_kind,
               failing_layers=[f"{lid} ({kind})" for lid, kind in report.failing_layers()],
               min_end_to_end_pass_fraction=frac)
    for lid, kind, err, status in rows:
        print(f"{status}  {lid:<12} {kind:<10} max rel err {err:.3e}")
    print("PASS" if report.passed else "FAIL: " + ", ".join(f"{lid} ({kind})" for lid, kind in report.failing_layers()))
    return report


def _read_csv(path):
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(cfg):
    """Aggregate evaluate/adaptive outputs into a method x params x metric table."""
    root = cfg.output_dir
    table = {}
    found = False
    for metric in ("aupc", "autvc"):
        path = os.path.join(root, f"{metric}.csv")
        if os.path.exists(path):
            found = True
            for row in _read_csv(path):
                table.setdefault((row["method"], row["params"]), {"aupc": [], "autvc": []})[metric].append(float(row[metric]))
    for objective in ("aupc", "autvc"):
        path = os.path.join(root, f"adaptive-{objective}.csv")
        if os.path.exists(path):
            found = True
            for row in _read_csv(path):
                acc = table.setdefault((f"adaptive-{objective}", f"R={row['roots']}"), {"aupc": [], "autvc": []})
                acc["aupc"].append(float(row["aupc"]))
                if row["autvc"] != "":
                    acc["autvc"].append(float(row["autvc"]))
    if not found:
        raise InputError(f"no evaluate/adaptive results under {root}")
    rows = [
        (name, params, len(v["aupc"]),
         float(np.mean(v["aupc"])) if v["aupc"] else "", float(np.mean(v["autvc"])) if v["autvc"] else "")
        for (name, params), v in table.items()
    ]
    out = Outputs(root)
    out.write("table1.csv", csv_bytes(["method", "params", "n_images", "mean_aupc", "mean_autvc"], rows))
    out.report("report", cfg)
    print(f"{'method':<18}{'params':<26}{'AUPC':>10}{'AUTVC':>10}")
    for name, params, _, a, t in rows:
        a = f"{a:.4f}" if a != "" else "-"
        t = f"{t:.4f}" if t != "" else "-"
        print(f"{name:<18}{params:<26}{a:>10}{t:>10}")
    return rows


def cmd_make_toy(args):
    """Write a small random softmax conv net and a few random inputs plus a config."""
    from .model import save_model
    from .tensor import save_tensor
    from .toy import random_conv_net

    os.makedirs(args.dir, exist_ok=True)
    size = args.size
    model = random_conv_net(args.seed, (1, size, size), channels=(4, 4), outputs=4, softmax=True)
    save_model(model, os.path.join(args.dir, "model.json"))
    gen = rngmod.stream(args.seed, 99)
    names = []
    for i in range(args.inputs):
        names.append(f"input{i}.tsr")
        save_tensor(os.path.join(args.dir, names[-1]), gen.random((1, size, size)).astype(np.float32))
    config = {
        "schema_version": 1,
        "model_path": "model.json",
        "input_paths": names,
        "input_value_range": [0.0, 1.0],
        "methods": [
            {"name": "ig", "baseline": "zero", "steps": 50},
            {"name": "ig", "baseline": "noise", "steps": 50, "baselines": 5},
            {"name": "smoothtaylor", "sigma": 0.3, "roots": 50},
        ],
        "eval": {"perturbation": {"kernel": 4, "steps": 10, "samples": 10}},
        "adaptive": {"max_iterations": 5, "objective": "autvc", "roots": 30},
        "gradcheck": {"random_samples": 2},
        "seed": args.seed,
        "output_dir": "out",
    }
    atomic_write(os.path.join(args.dir, "config.json"), _json_bytes(config))
    print(os.path.join(args.dir, "config.json"))


COMMANDS = {
    "attribute": cmd_attribute,
    "evaluate": cmd_evaluate,
    "adaptive": cmd_adaptive,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the config seed (u64)")
    common.add_argument("--workers", type=int, help="parallel inputs")
    common.add_argument("--output", help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="smoothtaylor", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).splitlines()[0])
    toy = sub.add_parser("make-toy", help="write a toy model, inputs and config")
    toy.add_argument("dir")
    toy.add_argument("--seed", type=int, default=0)
    toy.add_argument("--size", type=int, default=64)
    toy.add_argument("--inputs", type=int, default=3)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "make-toy":
            cmd_make_toy(args)
            return EXIT_OK
        cfg = load_config(args.config, seed=args.seed, output_dir=args.output, workers=args.workers)
        result = COMMANDS[args.command](cfg)
        if args.command == "gradcheck" and not result.passed:
            return EXIT_GRADCHECK_FAILED
        return EXIT_OK
    except NonFiniteError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, InputError, ModelFormatError, TensorFormatError, ShapeError, OSError,
            ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
