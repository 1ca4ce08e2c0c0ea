"""``aquaforge`` command line: synth, meta-train, finetune, enhance, eval.

Exit codes: 0 success, 1 usage error, 2 data error.  Errors are reported on
stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .core import AquaError, DataError, read_png, write_aqf, write_png
from .estimator import ArchConfig, CheckpointError, load, save

log = logging.getLogger("aquaforge")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class ReportedDataError(DataError):
    """Data error carrying a per-item list for the JSON error report."""

    def __init__(self, message, details):
        super().__init__(message)
        self.details = details


_ARCH_KEYS = tuple(f.name for f in fields(ArchConfig))


def _meta_keys():
    from .metatrain import MetaConfig

    return tuple(f.name for f in fields(MetaConfig))


@dataclass
class Config:
    """Effective run configuration; JSON keys are exactly these field names."""

    values: dict = field(default_factory=dict)

    @classmethod
    def defaults(cls) -> "Config":
        from .metatrain import MetaConfig

        v = dict(MetaConfig().to_dict())
        v.update(ArchConfig().to_dict())
        v.update({"threads": os.cpu_count() or 1, "data": None, "pairs": None, "corpus": None, "out": None,
                  "ck": None})
        return cls(v)

    @classmethod
    def load(cls, path: Optional[str]) -> "Config":
        cfg = cls.defaults()
        if path:
            try:
                doc = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise DataError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(doc, dict):
                raise DataError(f"config {path} must be a JSON object")
            unknown = sorted(set(doc) - set(cfg.values))
            if unknown:
                raise UsageError(f"unknown config keys: {', '.join(unknown)}")
            cfg.values.update(doc)
        return cfg

    def set(self, **kw):
        for k, v in kw.items():
            if v is not None:
                self.values[k] = v

    def meta(self):
        from .metatrain import MetaConfig

        return MetaConfig(**{k: self.values[k] for k in _meta_keys()})

    def arch(self) -> ArchConfig:
        return ArchConfig(**{k: self.values[k] for k in _ARCH_KEYS})

    def to_dict(self) -> dict:
        return dict(sorted(self.values.items()))


def build_hash() -> str:
    h = hashlib.sha256()
    root = Path(__file__).parent
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:12]


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats with None so output is strict JSON."""
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n"


# -- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    from .dataio import index_corpus
    from .synthgen import build_dataset

    types = [t.strip() for t in args.types.split(",")] if args.types else None
    cfg = {"corpus": args.corpus, "out": args.out, "seed": args.seed, "draws_per_type": args.draws_per_type,
           "types": types}
    corpus = index_corpus(args.corpus)
    manifest = build_dataset(corpus, args.out, args.seed, args.draws_per_type, types, threads=args.threads,
                             config=cfg)
    summary = {"distortions": len(manifest["distortions"]), "images": len(manifest["images"]),
               "samples": len(manifest["samples"]), "warnings": corpus.warnings}
    sys.stdout.write(dump_json(summary))
    return EXIT_OK


def _write_log(path: Path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(_clean(r), sort_keys=True) + "\n")


def cmd_meta_train(args) -> int:
    from .dataio import load_meta_dataset
    from .metatrain import meta_train

    cfg = Config.load(args.config)
    cfg.set(seed=args.seed, threads=args.threads, data=args.data, ck=args.out)
    meta, arch = cfg.meta(), cfg.arch()
    ds = load_meta_dataset(args.data, seed=meta.seed, val_fraction=meta.val_fraction)
    params, records = meta_train(ds, meta, arch, threads=cfg.values["threads"])
    out = Path(args.out)
    save(params, out)
    _write_log(Path(f"{out}.log.jsonl"), records)
    Path(f"{out}.json").write_text(dump_json({
        "command": "meta-train", "config": cfg.to_dict(), "train_ids": ds.train_ids, "val_ids": ds.val_ids,
        "final": records[-1],
    }))
    sys.stdout.write(dump_json(records[-1]))
    return EXIT_OK


def cmd_finetune(args) -> int:
    from .dataio import load_pairs
    from .metatrain import fine_tune

    cfg = Config.load(args.config)
    cfg.set(seed=args.seed, pairs=args.pairs, ck=args.ck, out=args.out)
    params = load(args.ck)
    pairs = load_pairs(args.pairs)
    if not pairs.examples:
        raise ReportedDataError(f"no usable pairs in {args.pairs}", pairs.warnings)
    tuned, records = fine_tune(params, pairs, cfg.meta(), patch_size=cfg.values["patch_size"])
    out = Path(args.out)
    save(tuned, out)
    _write_log(Path(f"{out}.log.jsonl"), records)
    Path(f"{out}.json").write_text(dump_json({
        "command": "finetune", "config": cfg.to_dict(), "pairs": len(pairs), "warnings": pairs.warnings,
        "final": records[-1] if records else None,
    }))
    return EXIT_OK


def cmd_enhance(args) -> int:
    from .metatrain import enhance

    params = load(args.ck)
    img = read_png(args.inp)
    J, t, B = enhance(params, img, with_fields=True)
    out = Path(args.out)
    write_png(out, J)
    if args.emit_tb:
        stem = out.with_suffix("")
        write_aqf(f"{stem}.t.aqf", t)
        write_aqf(f"{stem}.b.aqf", B)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .metrics import mse, psnr, ssim, uciqe, uiqm

    pred_dir = Path(args.pred)
    if not pred_dir.is_dir():
        raise DataError(f"prediction directory {pred_dir} does not exist")
    preds = sorted(p for p in pred_dir.glob("*.png") if not p.name.endswith(".ref.png"))
    if not preds:
        raise DataError(f"no PNG images in {pred_dir}")
    errors, per_image = [], []
    for p in preds:
        img = read_png(p)
        row = {"image": p.name, "uciqe": uciqe(img).to_dict(), "uiqm": uiqm(img).to_dict()}
        if args.ref:
            rp = Path(args.ref) / p.name
            if not rp.exists():
                errors.append({"image": p.name, "error": "missing reference"})
                continue
            ref = read_png(rp)
            if ref.shape != img.shape:
                errors.append({"image": p.name, "error": f"size {img.shape[:2]} != reference {ref.shape[:2]}"})
                continue
            row.update({"psnr": psnr(img, ref), "mse": mse(img, ref),
                        "ssim": ssim(img, ref) if min(img.shape[:2]) >= 8 else None})
        per_image.append(row)
    if errors:
        raise ReportedDataError("evaluation failed for some images", errors)

    def mean_of(getter):
        vals = [getter(r) for r in per_image]
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    mean = {
        "uciqe": {k: mean_of(lambda r, k=k: r["uciqe"][k]) for k in ("sigma_c", "con_l", "mu_s", "score")},
        "uiqm": {k: mean_of(lambda r, k=k: r["uiqm"][k]) for k in ("uicm", "uism", "uiconm", "score")},
    }
    if args.ref:
        finite_psnr = [r["psnr"] for r in per_image if math.isfinite(r["psnr"])]
        mean["psnr"] = float(np.mean(finite_psnr)) if finite_psnr else math.inf
        mean["mse"] = mean_of(lambda r: r["mse"])
        mean["ssim"] = mean_of(lambda r: r["ssim"])
    report = {"config": {"pred": args.pred, "ref": args.ref}, "images": per_image, "mean": mean}
    text = dump_json(report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="aquaforge", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="store_true", help="print version and build hash")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    cores = os.cpu_count() or 1

    s = sub.add_parser("synth", help="render a synthetic underwater dataset from an RGB-D corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--draws-per-type", type=int, default=3)
    s.add_argument("--types", help="comma separated water types, e.g. I,II,B")
    s.add_argument("--threads", type=int, default=cores)
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("meta-train", help="meta-train the three-head model")
    m.add_argument("--data", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--config")
    m.add_argument("--seed", type=int)
    m.add_argument("--threads", type=int)
    m.set_defaults(func=cmd_meta_train)

    f = sub.add_parser("finetune", help="fine-tune a checkpoint on paired images")
    f.add_argument("--ck", required=True)
    f.add_argument("--pairs", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--config")
    f.add_argument("--seed", type=int)
    f.set_defaults(func=cmd_finetune)

    e = sub.add_parser("enhance", help="restore one image")
    e.add_argument("--ck", required=True)
    e.add_argument("--in", dest="inp", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--emit-tb", action="store_true", help="also write transmission and background fields")
    e.set_defaults(func=cmd_enhance)

    v = sub.add_parser("eval", help="score images with PSNR/SSIM/MSE and UCIQE/UIQM")
    v.add_argument("--pred", required=True)
    v.add_argument("--ref")
    v.add_argument("--out")
    v.set_defaults(func=cmd_eval)
    return ap


def _report(kind: str, message: str, details=None):
    err = {"error": kind, "message": message}
    if details is not None:
        err["details"] = details
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if args.version:
            sys.stdout.write(f"aquaforge {__version__} ({build_hash()})\n")
            return EXIT_OK
        if not args.command:
            raise UsageError(f"missing subcommand\n{ap.format_usage()}")
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        # BLAS stays single threaded; parallelism comes from our own workers
        with threadpool_limits(limits=1):
            return args.func(args)
    except UsageError as exc:
        _report("usage", str(exc))
        return EXIT_USAGE
    except ReportedDataError as exc:
        _report("data", str(exc), exc.details)
        return EXIT_DATA
    except (AquaError, CheckpointError, OSError, ValueError) as exc:
        _report("data", str(exc))
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
