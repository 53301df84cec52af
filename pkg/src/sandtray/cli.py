"""Command line interface: ``sandtray validate|solve|diagnose|render <config>``.

``<config>`` is a JSON file or the name of a preset (``square-tray``,
``hexagon-lens``, ``annulus-sector``, ``ellipse-foci``, ``disk-homogeneous``,
``l-shape``).
"""

import argparse
import logging
import os
import sys

from . import config as cf
from .export import write_all
from .pipeline import EXIT_DATUM, EXIT_NUMERICAL, EXIT_OK, run_pipeline

log = logging.getLogger("sandtray")

_STAGES = {"validate": "validate", "solve": "solve", "diagnose": "diagnose", "render": "diagnose"}


def build_parser():
    p = argparse.ArgumentParser(prog="sandtray", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("validate", "check the config and the datum compatibility"),
                       ("solve", "compute u_phi, u_f, rays and v_f; write the CSV fields"),
                       ("diagnose", "solve, then write the uniqueness diagnosis"),
                       ("render", "diagnose, then write the SVG scene")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", help="JSON config file or preset name")
        s.add_argument("--resolution", type=int, help="grid nodes per unit length (h = 1/N)")
        s.add_argument("--samples", type=int, help="boundary sample count")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
        s.add_argument("--quiet", action="store_true", help="only print errors")
    return p


def load_config(arg, resolution=None, samples=None, out=None):
    overrides = {"resolution": resolution, "samples": samples, "output": out}
    if not os.path.exists(arg) and arg in cf.PRESETS:
        return cf.preset_config(arg, **overrides)
    return cf.load(arg, overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.resolution, args.samples, args.out)
    except (cf.ConfigError, OSError) as exc:
        log.error("config error: %s", exc)
        return 1
    stage = _STAGES[args.command]
    log.info("%s: %s, h = 1/%d, %d samples", args.command, cfg.name, cfg.resolution,
             cfg.samples)
    res = run_pipeline(cfg, stage=stage, seed=args.seed)
    rep = res.datum_report
    if res.status == EXIT_DATUM:
        p, q = rep.worst_pair
        log.error("datum incompatible: phi(%.6g, %.6g) - phi(%.6g, %.6g) exceeds the "
                  "geodesic distance by %.6g", *p, *q, -rep.margin)
    elif not rep.chord_ok:
        p, q = rep.chord_worst_pair
        log.info("chord test fails at (%.6g, %.6g), (%.6g, %.6g), margin %.6g", *p, *q,
                 rep.chord_margin)
    if stage != "validate" or res.status == EXIT_DATUM:
        paths = write_all(res, cfg.output, stage=args.command)
        for path in paths:
            log.info("wrote %s", path)
    if res.status == EXIT_NUMERICAL:
        log.error("numerical failure: %s", ", ".join(res.flags))
    if res.diagnosis is not None:
        d = res.diagnosis
        log.info("v_unique = %s (t_measure %.4g), u_unique = %s", d.v_unique, d.t_measure,
                 d.u_unique)
    return res.status if res.status in (EXIT_OK, EXIT_DATUM, EXIT_NUMERICAL) else 1


if __name__ == "__main__":
    sys.exit(main())
