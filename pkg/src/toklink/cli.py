"""Command-line entry point.

Subcommands::

    toklink sweep        SNR sweep over the full link, CSV + JSON series out
    toklink grid         modality-corruption grid (token TER x text corruption)
    toklink encode       token file -> per-package transmitted bits (hex lines)
    toklink decode       hex-line bit blocks -> tokens + CRC verdict summary
    toklink conformance  check committed golden vectors against the live chain

Exit codes: 0 success, 2 configuration error, 3 bridge failure without a
configured fallback.  ``--config`` accepts a JSON or TOML file whose keys
mirror the long flags (see README); explicit flags win over the file.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import polar
from .framing import FramingConfig, read_tokens_text, read_tokens_u16, write_tokens_text
from .modem import NOISELESS_LLR
from .polar import PolarConfig
from .restore import BridgeError, parse_restorer_arg
from .sweep import RunConfig, run_modality_grid, run_sweep, write_grid_csv, write_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BRIDGE = 3


def parse_snr_points(text: str) -> tuple:
    """Either ``start:step:stop`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"SNR range must be start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("SNR step must be positive")
        count = int(round((stop - start) / step)) + 1
        return tuple(start + i * step for i in range(count) if start + i * step <= stop + 1e-9)
    return tuple(float(p) for p in text.split(",") if p.strip())


def load_config_file(path: str) -> dict:
    raw = Path(path).read_bytes()
    if path.endswith(".toml"):
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(raw.decode())
    return json.loads(raw.decode())


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toklink", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON/TOML config file; flags override it")
        p.add_argument("--seed", type=int, help="seed base (default 0)")
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--trials", type=int, help="trials per point (default 200)")
        p.add_argument("--restorer",
                       help="passthrough | constant:K | marginal | oracle | external:HOST:PORT")
        p.add_argument("--no-fallback", action="store_true",
                       help="fail (exit 3) instead of falling back when the bridge is down")
        p.add_argument("--text", help="text prompt forwarded to an external restorer")
        p.add_argument("--text-file", help="file holding the text prompt")
        p.add_argument("--source", choices=["synthetic", "images", "tokens"],
                       help="token source (default synthetic)")
        p.add_argument("--source-path", help="directory of images / token file or directory")
        p.add_argument("--workers", type=int, help="worker processes (default 1)")

    p_sweep = sub.add_parser("sweep", help="run the SNR sweep")
    add_common(p_sweep)
    p_sweep.add_argument("--snr", help='SNR points, e.g. "-5:1:5" or "-2,0,2"')

    p_grid = sub.add_parser("grid", help="run the modality corruption grid")
    add_common(p_grid)
    p_grid.add_argument("--image-ter", help='comma list of token error levels, e.g. "0,0.25,1"')
    p_grid.add_argument("--text-corruption", help='comma list of text corruption rates')

    p_enc = sub.add_parser("encode", help="encode a token file to transmitted bits")
    p_enc.add_argument("--in", dest="infile", required=True, help="token file (.txt or .tok16)")
    p_enc.add_argument("--out", help="hex-line output path (stdout if omitted)")

    p_dec = sub.add_parser("decode", help="decode hex-line bit blocks back to tokens")
    p_dec.add_argument("--in", dest="infile", required=True, help="hex-line bit block file")
    p_dec.add_argument("--out", help="token text output path (stdout if omitted)")

    p_conf = sub.add_parser("conformance", help="verify committed golden vectors")
    p_conf.add_argument("--fixtures", help="fixture directory (defaults to packaged vectors)")
    return parser


def _merged(args, file_cfg: dict, key: str, default):
    cli_value = getattr(args, key.replace("-", "_"), None)
    if isinstance(cli_value, bool):
        return cli_value or file_cfg.get(key, default)
    if cli_value is not None:
        return cli_value
    return file_cfg.get(key, default)


def _run_config_from_args(args) -> RunConfig:
    file_cfg = load_config_file(args.config) if args.config else {}
    framing = FramingConfig(**file_cfg.get("framing", {}))
    polar_cfg = PolarConfig(**file_cfg.get("polar", {}))

    snr_text = getattr(args, "snr", None) or file_cfg.get("snr", "-5:1:5")
    restorer_text = _merged(args, file_cfg, "restorer", "passthrough")
    spec = parse_restorer_arg(restorer_text)

    text = _merged(args, file_cfg, "text", None)
    text_file = _merged(args, file_cfg, "text-file", None)
    if text_file:
        text = Path(text_file).read_text().strip()
    if text is not None:
        from dataclasses import replace
        spec = replace(spec, text_prompt=text)
    if _merged(args, file_cfg, "no-fallback", False):
        from dataclasses import replace
        spec = replace(spec, fallback=None)

    source = {"synthetic": "toy_synthetic", "images": "image_directory",
              "tokens": "token_file"}[_merged(args, file_cfg, "source", "synthetic")]
    return RunConfig(
        snr_points=parse_snr_points(snr_text) if isinstance(snr_text, str) else tuple(snr_text),
        trials_per_point=_merged(args, file_cfg, "trials", 200),
        restorer=spec,
        framing=framing,
        polar=polar_cfg,
        image_source=source,
        source_path=_merged(args, file_cfg, "source-path", None),
        seed_base=_merged(args, file_cfg, "seed", 0),
        output_path=_merged(args, file_cfg, "out", None),
        workers=_merged(args, file_cfg, "workers", 1),
    )


def _cmd_sweep(args) -> int:
    cfg = _run_config_from_args(args)
    report = run_sweep(cfg)
    out = cfg.output_path or "sweep.csv"
    write_outputs(report, out)
    print(f"wrote {out} ({len(report.rows)} rows)")
    return EXIT_OK


def _parse_levels(text: str, default):
    if not text:
        return default
    return tuple(float(p) for p in text.split(",") if p.strip())


def _cmd_grid(args) -> int:
    cfg = _run_config_from_args(args)
    file_cfg = load_config_file(args.config) if args.config else {}
    image_ter = _parse_levels(getattr(args, "image_ter", None)
                              or file_cfg.get("image-ter"), (0.0, 0.25, 0.5, 1.0))
    text_corr = _parse_levels(getattr(args, "text_corruption", None)
                              or file_cfg.get("text-corruption"), (0.0, 0.5))
    report = run_modality_grid(cfg, image_ter, text_corr)
    out = cfg.output_path or "grid.csv"
    write_grid_csv(report, out)
    if report.meta.get("text_axis_inert"):
        print("note: builtin restorer ignores text; the text axis is inert", file=sys.stderr)
    print(f"wrote {out} ({len(report.rows)} rows)")
    return EXIT_OK


def _read_any_tokens(path: str, cfg: FramingConfig) -> np.ndarray:
    if path.endswith(".tok16"):
        return read_tokens_u16(path, cfg)
    return read_tokens_text(path, cfg)


def _cmd_encode(args) -> int:
    from .framing import tokens_to_packages

    framing, polar_cfg = FramingConfig(), PolarConfig()
    tokens = _read_any_tokens(args.infile, framing)
    blocks = tokens_to_packages(tokens, framing)
    tx = polar.encode_package(blocks, polar_cfg)
    lines = [polar.bits_to_hex(row) for row in tx]
    text = "".join(f"{ln}\n" for ln in lines)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_decode(args) -> int:
    from .framing import packages_to_tokens

    framing, polar_cfg = FramingConfig(), PolarConfig()
    rows = [polar.hex_to_bits(ln) for ln in Path(args.infile).read_text().splitlines()
            if ln.strip()]
    if len(rows) != framing.num_packages:
        raise ValueError(f"expected {framing.num_packages} bit blocks, got {len(rows)}")
    bits = np.stack(rows)
    llrs = NOISELESS_LLR * (1.0 - 2.0 * bits.astype(np.float64))
    info, crc_ok, _ = polar.decode_package_batch(llrs, polar_cfg)
    tokens = packages_to_tokens(info, framing)
    if args.out:
        write_tokens_text(args.out, tokens)
    else:
        sys.stdout.write("".join(f"{t}\n" for t in tokens))
    print(f"crc ok: {int(crc_ok.sum())}/{len(crc_ok)} packages", file=sys.stderr)
    return EXIT_OK


def _cmd_conformance(args) -> int:
    if args.fixtures:
        fixture_dir = Path(args.fixtures)
    else:
        fixture_dir = Path(__file__).parent / "fixtures"
    vectors = sorted(fixture_dir.glob("golden_*.vec"))
    if not vectors:
        print(f"no golden vectors found in {fixture_dir}", file=sys.stderr)
        return 1
    cfg = PolarConfig()
    failures = 0
    for vec in vectors:
        bad = polar.check_golden_vector(vec, cfg)
        status = "ok" if not bad else f"MISMATCH at {', '.join(bad)}"
        print(f"{vec.name}: {status}")
        failures += bool(bad)
    return 0 if not failures else 1


def _fuse_snr_value(argv: list) -> list:
    # argparse mistakes "-5:1:5" for an option; fold it into --snr= form
    out, skip = [], False
    for i, token in enumerate(argv):
        if skip:
            skip = False
            continue
        if token == "--snr" and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"--snr={argv[i + 1]}")
            skip = True
        else:
            out.append(token)
    return out


def main(argv=None) -> int:
    parser = _build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(_fuse_snr_value(list(argv)))
    handlers = {"sweep": _cmd_sweep, "grid": _cmd_grid, "encode": _cmd_encode,
                "decode": _cmd_decode, "conformance": _cmd_conformance}
    try:
        return handlers[args.command](args)
    except BridgeError as exc:
        print(f"bridge failure: {exc}", file=sys.stderr)
        return EXIT_BRIDGE
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
