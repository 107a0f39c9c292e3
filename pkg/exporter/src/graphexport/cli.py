"""Command-line entry point: export <name> <dir>, verify <dir>."""

from __future__ import annotations

import argparse
import json
import sys

from .export import ValidationFailure, export, verify
from .loaders import SUPPORTED, DownloadFailure, UnknownDataset, pyg_loader


def cmd_export(args) -> int:
    try:
        loaded = pyg_loader(args.name, root=args.cache)
        manifest = export(loaded, args.out)
    except UnknownDataset as exc:
        print(f"UnknownDataset: {exc}", file=sys.stderr)
        return 2
    except DownloadFailure as exc:
        print(f"DownloadFailure: {exc}", file=sys.stderr)
        return 3
    except ValidationFailure as exc:
        print(f"ValidationFailure: {exc}", file=sys.stderr)
        return 4
    print(manifest.to_json(), end="")
    return 0


def cmd_verify(args) -> int:
    ok, diffs = verify(args.dir)
    print(json.dumps({"ok": ok, "diffs": diffs}, indent=2))
    return 0 if ok else 1


def cmd_list(_args) -> int:
    print("\n".join(SUPPORTED))
    return 0


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="graphexport",
                                description="benchmark graph exporter")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("export", help="download a dataset and write the text format")
    e.add_argument("name", help=f"one of: {', '.join(SUPPORTED)}")
    e.add_argument("out")
    e.add_argument("--cache", default="pyg-data", help="loader download cache")
    e.set_defaults(func=cmd_export)

    v = sub.add_parser("verify", help="recheck an exported directory")
    v.add_argument("dir")
    v.set_defaults(func=cmd_verify)

    ls = sub.add_parser("list", help="print supported dataset names")
    ls.set_defaults(func=cmd_list)

    args = p.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
