"""Command-line interface.

Exit status is 0 on success, 1 for usage errors and 2 for data or format
errors. All diagnostics go to stderr; only requested results go to stdout.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ResvocError
from .io import load_codebook, load_track, read_wav, save_codebook, save_track, write_eigen_csv, write_wav
from .pipeline import MODES, Config, analyze, compare_metrics, copy_synthesis, synthesize, train
from .excitation import CODEBOOK

log = logging.getLogger("resvoc")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def cmd_train(args) -> int:
    corpus_dir = Path(args.corpus)
    if not corpus_dir.is_dir():
        raise UsageError(f"--corpus {corpus_dir} is not a directory")
    paths = sorted(corpus_dir.glob("*.wav"))
    waves = [read_wav(p) for p in paths]
    result = train(waves, args.k, args.n, args.seed, names=[p.name for p in paths])
    size = save_codebook(args.out, result.compressed)
    log.info("compressed codebook: %d entries, %d bytes", len(result.compressed), size)
    if args.full_out:
        save_codebook(args.full_out, result.full)
    return EXIT_OK


def cmd_analyze(args) -> int:
    a = analyze(read_wav(args.input))
    save_track(args.track_out, a.track, a.envelope)
    return EXIT_OK


def _report(text: str, path) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_copy_synth(args) -> int:
    cb = load_codebook(args.codebook) if args.codebook else None
    if args.mode == "pulse":
        cb = None
    out, report = copy_synthesis(read_wav(args.input), cb, args.mode, args.seed)
    write_wav(args.out, out)
    _report(report.to_text(), args.report)
    return EXIT_OK


def cmd_synth(args) -> int:
    track, env = load_track(args.track)
    cb = load_codebook(args.codebook)
    out, _ = synthesize(track, env, cb, CODEBOOK, args.seed)
    write_wav(args.out, out)
    return EXIT_OK


def cmd_pca(args) -> int:
    cb = load_codebook(args.codebook)
    if cb.pca is None:
        raise ResvocError(f"{args.codebook} carries no PCA model")
    write_eigen_csv(args.eigen_out, cb.pca)
    return EXIT_OK


def cmd_metrics(args) -> int:
    report = compare_metrics(read_wav(args.ref), read_wav(args.test))
    _report(f"segmental_snr_db\t{report.segmental_snr_db:.6f}\n"
            f"log_spectral_distortion_db\t{report.log_spectral_distortion_db:.6f}\n", None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="resvoc", description="Residual-codebook vocoder tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("train", help="train full and compressed codebooks from a WAV directory")
    s.add_argument("--corpus", required=True, help="directory of mono WAV files")
    s.add_argument("--out", required=True, help="compressed codebook output (.rscb)")
    s.add_argument("--k", type=int, default=100, help="number of clusters (default 100)")
    s.add_argument("--n", type=int, default=10, help="candidates per cluster (default 10)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--full-out", help="also write the full codebook here")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("analyze", help="extract a target track from a WAV file")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--track-out", required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("copy-synth", help="analyze and resynthesize a WAV file")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--codebook", help="codebook file (not needed for --mode pulse)")
    s.add_argument("--mode", choices=MODES, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--report", help="write the metrics report here instead of stdout")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_copy_synth)

    s = sub.add_parser("synth", help="synthesize from a track file and a codebook")
    s.add_argument("--track", required=True)
    s.add_argument("--codebook", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("pca", help="export the eigen-RN frames of a codebook as CSV")
    s.add_argument("--codebook", required=True)
    s.add_argument("--eigen-out", required=True)
    s.set_defaults(func=cmd_pca)

    s = sub.add_parser("metrics", help="segmental SNR and log-spectral distortion of two WAV files")
    s.add_argument("--ref", required=True)
    s.add_argument("--test", required=True)
    s.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help and friends
        return EXIT_OK if not e.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s: %(message)s", force=True)
    try:
        if args.command == "copy-synth" and args.mode != "pulse" and not args.codebook:
            raise UsageError(f"--mode {args.mode} requires --codebook")
        return args.func(args)
    except UsageError as e:
        print(f"resvoc: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ResvocError, OSError, ValueError) as e:
        print(f"resvoc: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
