"""Config-driven experiment runner.

Every subcommand reads and writes files in one output directory, so
``generate``, ``train``, ``eval`` and ``pattern`` chained by hand give the
same directory as ``run``::

    config.json           effective configuration (after --seed)
    geometry.json         antenna positions and phase offsets
    channels.bin          raw channels, interchange format
    dataset_summary.json
    train_log.jsonl       one record per epoch (then per batch, if any)
    codebook.json
    rates.csv
    patterns/beam_NNN.csv
    manifest.json         sha256 of every other file

Exit status: 0 success, 1 invalid config or missing/inconsistent inputs,
2 failure during computation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pydantic
import yaml

from . import io as cbio
from .array_channel import (
    ArrayGeometry,
    export_channels,
    generate_raw_channels,
    import_channels,
    make_impaired_geometry,
    normalize,
    read_channels,
)
from .codebook import dft_codebook
from .config import ExperimentConfig, load_config
from .evaluation import beam_pattern, compare_table, pattern_csv, rate_table_csv
from .quantizer import PhaseQuantizer, QuantizerConfig
from .selfsup import train_online
from .supervised import train as train_supervised

log = logging.getLogger("beamcodebook")

CONFIG_FILE = "config.json"
GEOMETRY_FILE = "geometry.json"
CHANNELS_FILE = "channels.bin"
SUMMARY_FILE = "dataset_summary.json"
LOG_FILE = "train_log.jsonl"
CODEBOOK_FILE = "codebook.json"
RATES_FILE = "rates.csv"
PATTERN_DIR = "patterns"


class InputError(Exception):
    """Invalid configuration or missing/inconsistent input artifacts (exit 1)."""


def format_validation_error(err: pydantic.ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "\n".join(lines)


def _read_config(path) -> ExperimentConfig:
    try:
        return load_config(path)
    except pydantic.ValidationError as e:
        raise InputError(f"invalid config {path}:\n{format_validation_error(e)}") from e
    except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
        raise InputError(f"cannot read config {path}: {e}") from e


def resolve_config(args) -> tuple[ExperimentConfig, Path]:
    """Config from --config (or the copy in --out), seed override, output dir."""
    out = Path(args.out) if args.out else None
    if args.config:
        cfg = _read_config(args.config)
    elif out is not None and (out / CONFIG_FILE).exists():
        cfg = _read_config(out / CONFIG_FILE)
    else:
        raise InputError("no --config given and no config.json in the output directory")
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = out if out is not None else Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_config_copy(cfg, out, args.config)
    return cfg, out


def _write_config_copy(cfg: ExperimentConfig, out: Path, source) -> None:
    target = out / CONFIG_FILE
    if source is not None and target.exists() and Path(source).resolve() == target.resolve():
        if target.read_text() == cfg.dumps():
            return
        raise InputError(f"{target} is the input config; pass a different --out to change it")
    target.write_text(cfg.dumps())


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise InputError(f"missing input {path} (run '{producer}' first)")
    return path


# --------------------------------------------------------------------- steps


def do_generate(cfg: ExperimentConfig, out: Path) -> None:
    g = cfg.geometry
    geometry = make_impaired_geometry(g.num_antennas, g.sigma_d, g.sigma_p, g.seed)
    sc = cfg.scenario
    if sc.channel_file is not None:
        try:
            raw = import_channels(sc.channel_file).raw_channels()
        except (OSError, ValueError) as e:
            raise InputError(f"scenario.channel_file: {e}") from e
        source = str(sc.channel_file)
    else:
        raw, _, _ = generate_raw_channels(sc.to_scenario(), geometry)
        source = "generated"
    if raw.shape[1] != g.num_antennas:
        raise InputError(
            f"scenario.channel_file has {raw.shape[1]} antennas, geometry.num_antennas is {g.num_antennas}"
        )
    export_channels(raw, out / CHANNELS_FILE)
    cbio.save_geometry(out / GEOMETRY_FILE, geometry)
    ds = _load_dataset(cfg, out)
    tr, te = ds.split_indices()
    summary = {
        "source": source,
        "kind": sc.kind.value,
        "num_users": ds.num_users,
        "num_antennas": ds.num_antennas,
        "normalization": ds.normalization,
        "train_fraction": ds.train_fraction,
        "split_seed": ds.split_seed,
        "num_train": int(tr.size),
        "num_test": int(te.size),
        "sigma_d": g.sigma_d,
        "sigma_p": g.sigma_p,
    }
    (out / SUMMARY_FILE).write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    log.info("generated %d channels (M=%d) in %s", ds.num_users, ds.num_antennas, out)


def _load_dataset(cfg: ExperimentConfig, out: Path):
    try:
        raw = read_channels(_require(out / CHANNELS_FILE, "generate"))
    except ValueError as e:
        raise InputError(str(e)) from e
    if raw.shape[1] != cfg.geometry.num_antennas:
        raise InputError(
            f"{CHANNELS_FILE} has {raw.shape[1]} antennas, geometry.num_antennas is {cfg.geometry.num_antennas}"
        )
    return normalize(raw, train_fraction=cfg.scenario.train_fraction, split_seed=cfg.scenario.seed)


def do_train(cfg: ExperimentConfig, out: Path) -> None:
    ds = _load_dataset(cfg, out)
    tcfg = cfg.trainer_config()
    if cfg.trainer.mode == "supervised":
        report = train_supervised(tcfg, ds)
    else:
        report = train_online(tcfg, ds)
    quantized = None
    if cfg.quantizer is not None:
        # the final codebook already holds at most 2**Q distinct phases, so this
        # only recovers its centroid table
        quantized = PhaseQuantizer(cfg.quantizer.to_config()).quantize(report.final_codebook)
    cbio.save_codebook(out / CODEBOOK_FILE, report.final_codebook, quantized)
    (out / LOG_FILE).write_text(report.to_jsonl())
    if report.epochs:
        log.info("trained %s codebook: final EGC ratio %.4f", cfg.trainer.mode, report.egc_ratio[-1])


def _load_codebook(path: Path, producer: str):
    try:
        return cbio.load_codebook(_require(path, producer))
    except (ValueError, KeyError, json.JSONDecodeError) as e:
        raise InputError(f"bad codebook file {path}: {e}") from e


def do_eval(cfg: ExperimentConfig, out: Path, codebook_path: Path | None = None, dft_beams: int | None = None) -> Path:
    ds = _load_dataset(cfg, out)
    ev = cfg.eval
    if dft_beams is not None:
        codebooks, labels = [dft_codebook(ds.num_antennas, dft_beams)], ["dft"]
        target = out / f"rates_dft{dft_beams}.csv"
    else:
        cb = _load_codebook(codebook_path or out / CODEBOOK_FILE, "train")
        if cb.num_antennas != ds.num_antennas:
            raise InputError(f"codebook has M={cb.num_antennas}, channels have M={ds.num_antennas}")
        codebooks, labels = [cb], ["learned"]
        if ev.baselines:
            codebooks.append(dft_codebook(ds.num_antennas, ev.dft_beams or cb.num_beams))
            labels.append("dft")
        target = out / RATES_FILE
    rows = compare_table(codebooks, labels, ds.test, ev.rho_db)
    target.write_text(rate_table_csv(rows))
    for r in rows:
        log.info("%-8s N=%-3d rho=%5.1f dB  rate=%.4f  (EGC %.4f)", r["label"], r["N"], r["rho_db"], r["mean_rate"], r["egc_rate"])
    return target


def do_pattern(cfg: ExperimentConfig, out: Path, beams=None, codebook_path: Path | None = None) -> None:
    cb = _load_codebook(codebook_path or out / CODEBOOK_FILE, "train")
    if cfg.eval.pattern_geometry == "nominal":
        geometry = ArrayGeometry.nominal(cfg.geometry.num_antennas)
    else:
        geometry = cbio.load_geometry(_require(out / GEOMETRY_FILE, "generate"))
    if geometry.num_antennas != cb.num_antennas:
        raise InputError(f"codebook has M={cb.num_antennas}, geometry has M={geometry.num_antennas}")
    beams = cfg.eval.pattern_beams if beams is None else beams
    bad = [b for b in beams if not 0 <= b < cb.num_beams]
    if bad:
        raise InputError(f"beams {bad} outside 0..{cb.num_beams - 1}")
    pdir = out / PATTERN_DIR
    pdir.mkdir(exist_ok=True)
    W = cb.weights
    for b in beams:
        pattern = beam_pattern(W[:, b], geometry, cfg.eval.grid_points)
        (pdir / f"beam_{b:03d}.csv").write_text(pattern_csv(pattern))
    log.info("wrote %d beam patterns to %s", len(beams), pdir)


def do_quantize(codebook_path: Path, target: Path, qcfg: QuantizerConfig) -> None:
    cb = _load_codebook(codebook_path, "train")
    quantized = PhaseQuantizer(qcfg).quantize(cb)
    cbio.save_codebook(target, quantized.to_codebook(), quantized)
    log.info("quantized %s to %d bits -> %s", codebook_path, qcfg.resolution_bits, target)


def run_experiment(config_path, out=None, seed=None) -> Path:
    """generate -> train -> eval -> pattern in one output directory."""
    args = argparse.Namespace(config=config_path, out=out, seed=seed)
    cfg, out = resolve_config(args)
    do_generate(cfg, out)
    do_train(cfg, out)
    do_eval(cfg, out)
    do_pattern(cfg, out)
    cbio.write_manifest(out)
    return out


# ----------------------------------------------------------------------- CLI


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beamcodebook", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="experiment config (.json/.yaml)")
        p.add_argument("--out", help="output directory (default: output_dir from the config)")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.add_argument("--quiet", action="store_true", help="only log warnings and errors")
        return p

    common(sub.add_parser("run", help="full experiment"), config_required=True)
    common(sub.add_parser("generate", help="geometry, channels and dataset summary"))
    common(sub.add_parser("train", help="learn a codebook from the generated channels"))
    p = common(sub.add_parser("eval", help="achievable-rate table on the test split"))
    p.add_argument("--codebook", help="codebook file (default: <out>/codebook.json)")
    p.add_argument("--dft", type=int, metavar="N", help="evaluate an N-beam DFT codebook instead")
    p = common(sub.add_parser("pattern", help="beam-pattern CSVs"))
    p.add_argument("--codebook", help="codebook file (default: <out>/codebook.json)")
    p.add_argument("--beams", type=int, nargs="+", help="beam indices (default: eval.pattern_beams)")
    p = common(sub.add_parser("quantize", help="post-training k-means phase quantization"))
    p.add_argument("--codebook", help="input codebook (default: <out>/codebook.json)")
    p.add_argument("--bits", type=int, help="resolution Q (default: quantizer.bits)")
    p.add_argument("--output", help="output codebook file (default: <out>/codebook_q<Q>.json)")
    return parser


def _cmd_quantize(args) -> None:
    cfg = None
    if args.config or (args.out and (Path(args.out) / CONFIG_FILE).exists()):
        cfg, out = resolve_config(args)
    elif args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    else:
        raise InputError("quantize needs --out or --config")
    bits = args.bits
    if bits is None and cfg is not None and cfg.quantizer is not None:
        bits = cfg.quantizer.bits
    if bits is None:
        raise InputError("no --bits given and the config has no quantizer section")
    try:
        if cfg is not None and cfg.quantizer is not None:
            q = cfg.quantizer.model_copy(update={"bits": bits}).to_config()
        else:
            q = QuantizerConfig(resolution_bits=bits)
    except ValueError as e:
        raise InputError(str(e)) from e
    source = Path(args.codebook) if args.codebook else out / CODEBOOK_FILE
    target = Path(args.output) if args.output else out / f"codebook_q{bits}.json"
    if target.resolve() == source.resolve():
        raise InputError("refusing to overwrite the input codebook")
    do_quantize(source, target, q)
    if target.parent.resolve() == out.resolve():
        cbio.write_manifest(out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
        force=True,
    )
    saved = np.seterr(over="raise", invalid="raise", divide="raise")
    try:
        if args.command == "run":
            run_experiment(args.config, args.out, args.seed)
            return 0
        if args.command == "quantize":
            _cmd_quantize(args)
            return 0
        cfg, out = resolve_config(args)
        if args.command == "generate":
            do_generate(cfg, out)
        elif args.command == "train":
            do_train(cfg, out)
        elif args.command == "eval":
            do_eval(cfg, out, Path(args.codebook) if args.codebook else None, args.dft)
        elif args.command == "pattern":
            do_pattern(cfg, out, args.beams, Path(args.codebook) if args.codebook else None)
        cbio.write_manifest(out)
        return 0
    except InputError as e:
        log.error("%s", e)
        return 1
    except Exception as e:  # numerical or other runtime failure
        log.error("runtime error: %s: %s", type(e).__name__, e)
        return 2
    finally:
        np.seterr(**saved)


if __name__ == "__main__":
    sys.exit(main())
