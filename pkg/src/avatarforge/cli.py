"""``avatarforge`` command line.

Exit codes: 0 ok, 2 invalid input, 3 head alignment did not converge,
4 stitch failure.

The body shape coefficients and the head mesh are consumed as files.  In a
full capture setup they come from an SMPL-style body fitter (``beta.json``)
and a FLAME-style head reconstructor (OBJ with ``sagittal_line``,
``z_profile`` and ``head_cut`` vertex groups).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import (
    AlignmentNotConvergedError,
    AvatarForgeError,
    EmptyLoopError,
    LoopsInterpenetrateError,
    StitchError,
)
from .pipeline import cmd_fit, cmd_pose, cmd_reconstruct, load_config

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ALIGNMENT = 3
EXIT_STITCH = 4

log = logging.getLogger("avatarforge")


def sample_dir() -> Path:
    """Directory of the bundled sample assets."""
    return Path(__file__).resolve().parent / "data" / "sample"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avatarforge", description="Personalized avatar builder.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reconstruct", help="build an avatar from a body shape and a head mesh")
    r.add_argument("--config", required=True, help="JSON config file")
    r.add_argument("--weight-form", choices=("gaussian", "literal"))
    r.add_argument("--align-tol", type=float)
    r.add_argument("--max-iters", type=int)
    r.add_argument("--output-dir", help="overrides output_dir from the config")

    f = sub.add_parser("fit", help="dress an avatar in a library garment")
    f.add_argument("--avatar", required=True, help="avatar directory written by reconstruct")
    f.add_argument("--garment", required=True, help="garment id")
    f.add_argument("--library", help="garment library directory (default: the one used at reconstruct)")
    f.add_argument("--epsilon", type=float, help="clearance in model units")

    q = sub.add_parser("pose", help="export posed OBJ frames")
    q.add_argument("--avatar", required=True)
    q.add_argument("--poses", required=True, help="pose JSON: one pose or {'frames': [...]}")
    q.add_argument("--out", required=True)
    q.add_argument("--frames", type=int, help="interpolate from rest to the pose over N frames")

    s = sub.add_parser("samples", help="write the synthetic sample assets")
    s.add_argument("--out", required=True)
    return p


def _run(args) -> int:
    if args.command == "reconstruct":
        config = load_config(
            args.config,
            weight_form=args.weight_form,
            tol=args.align_tol,
            max_iters=args.max_iters,
            output_dir=args.output_dir and str(Path(args.output_dir).resolve()),
        )
        report = cmd_reconstruct(config)
        a = report["alignment"]
        print(f"avatar written to {config.output_dir} ({a['iterations']} alignment iterations)")
    elif args.command == "fit":
        report = cmd_fit(args.avatar, args.garment, library_dir=args.library, epsilon=args.epsilon)
        for msg in report["clearance_warnings"]:
            print(f"warning: {msg}", file=sys.stderr)
        print(f"garment {args.garment} fitted ({report['penetration']['moved_vertices']} vertices moved)")
    elif args.command == "pose":
        written = cmd_pose(args.avatar, args.poses, args.out, frames=args.frames)
        print(f"{len(written)} files written to {args.out}")
    elif args.command == "samples":
        from .synthetic import write_sample_assets

        print(f"sample assets written to {write_sample_assets(args.out)}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except AlignmentNotConvergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALIGNMENT
    except (StitchError, EmptyLoopError, LoopsInterpenetrateError) as exc:
        print(f"error: stitch failed: {exc}", file=sys.stderr)
        return EXIT_STITCH
    except (AvatarForgeError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
