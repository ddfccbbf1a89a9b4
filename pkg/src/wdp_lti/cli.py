"""
Command-line front end.

    wdp-lti distance  --config pair.json
    wdp-lti calibrate --config cfg.json --rule theorem2
    wdp-lti verify    --config cfg.json --samples 1000000 --seed 7
    wdp-lti simulate  --config cfg.json --occupants 1,2 --runs 100 --output runs.csv

Exit codes: 0 success, 1 verification failed, 2 bad config, 3 dimension
mismatch, 4 unsupported privacy regime (epsilon != 0), 5 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from wdp_lti import building
from wdp_lti.calibrate import (
    AdjacencySpec,
    NoiseSpec,
    PrivacySpec,
    calibration_report,
    corollary1_noise,
    require_public_x0,
    theorem2_noise,
)
from wdp_lti.errors import DimensionMismatch, SingularCovariance, UnsupportedEpsilon, WdpError
from wdp_lti.lti import LtiSystem, StackedMaps, build_stacked
from wdp_lti.matgauss import Gaussian, kl_divergence, lemma1_bound, w2_distance
from wdp_lti.sampling import check_seed
from wdp_lti.verify import dp_verify

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIM, EXIT_EPS, EXIT_IO = range(6)
DEFAULT_SAMPLES = 1_000_000
DEFAULT_RUNS = 100


class ConfigError(Exception):
    pass


def load_config(path: str) -> dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _section(cfg: dict[str, Any], key: str) -> Any:
    if key not in cfg:
        raise ConfigError(f"config is missing '{key}'")
    return cfg[key]


def _scenario(cfg: dict[str, Any]) -> building.BuildingScenario | None:
    if cfg.get("scenario") is None:
        return None
    return building.BuildingScenario.from_json(cfg["scenario"])


def _maps(cfg: dict[str, Any]) -> tuple[StackedMaps, building.BuildingScenario | None]:
    sc = _scenario(cfg)
    if sc is not None:
        return building.stacked(sc), sc
    sys_ = LtiSystem.from_json(_section(cfg, "system"))
    return build_stacked(sys_, int(_section(cfg, "horizon"))), None


def _adjacency(cfg: dict[str, Any]) -> AdjacencySpec:
    adj = _section(cfg, "adjacency")
    return AdjacencySpec(float(adj["c"]), int(adj.get("p", 2)))


def _privacy(cfg: dict[str, Any]) -> PrivacySpec:
    priv = _section(cfg, "privacy")
    return PrivacySpec(float(priv["delta"]), float(priv.get("epsilon", 0.0)))


def _public_x0(cfg: dict[str, Any], sc: building.BuildingScenario | None) -> Gaussian | None:
    if sc is not None:
        return sc.x0
    if cfg.get("x0") is not None:
        return Gaussian.from_json(cfg["x0"])
    return None


def _samples(cfg: dict[str, Any], args: argparse.Namespace) -> int:
    n = args.samples if args.samples is not None else cfg.get("samples", DEFAULT_SAMPLES)
    if int(n) != n or n <= 0:
        raise ConfigError(f"samples must be a positive integer, got {n}")
    return int(n)


def _seed(cfg: dict[str, Any], args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    try:
        return check_seed(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _noise(cfg: dict[str, Any], maps: StackedMaps, x0: Gaussian | None) -> tuple[NoiseSpec, str | None]:
    """Resolve the noise section; returns the noise and the design rule used, if any."""
    spec = cfg.get("noise") or {"rule": "theorem2" if x0 is not None else "corollary1"}
    if "sigma2" in spec:
        return NoiseSpec.isotropic(float(spec["sigma2"])), None
    if "sigma" in spec:
        return NoiseSpec.isotropic(float(spec["sigma"]) ** 2), None
    if "cov" in spec:
        return NoiseSpec.full(np.asarray(spec["cov"], dtype=float)), None
    rule = spec.get("rule")
    adj, priv = _adjacency(cfg), _privacy(cfg)
    if rule == "corollary1":
        noise = corollary1_noise(maps, adj, priv)
    elif rule == "theorem2":
        if x0 is None:
            raise ConfigError("the theorem2 rule needs a public 'x0' (or a scenario)")
        noise = theorem2_noise(maps, x0.cov, adj, priv)
    else:
        raise ConfigError("noise needs one of 'sigma2', 'sigma', 'cov' or 'rule'")
    return noise.scaled(float(spec.get("scale", 1.0))), rule


def _flatten(obj: Any, prefix: str = "") -> list[tuple[str, Any]]:
    if isinstance(obj, dict):
        out = []
        for k, v in obj.items():
            out.extend(_flatten(v, f"{prefix}{k}."))
        return out
    if isinstance(obj, list) and any(isinstance(v, (dict, list)) for v in obj):
        out = []
        for i, v in enumerate(obj):
            out.extend(_flatten(v, f"{prefix}{i}."))
        return out
    return [(prefix[:-1], json.dumps(obj))]


def emit(obj: dict[str, Any], fmt: str) -> None:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("key", "value"))
        w.writerows(_flatten(obj))
        sys.stdout.write(buf.getvalue())
    else:
        sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def cmd_distance(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    inputs = _section(cfg, "inputs")
    if not isinstance(inputs, list) or len(inputs) != 2:
        raise ConfigError("'inputs' must be a list of exactly two Gaussians")
    P, Q = (Gaussian.from_json(g) for g in inputs)
    out: dict[str, Any] = {"w2": w2_distance(P, Q)}
    try:
        rep = lemma1_bound(P, Q)
        out.update(
            kl_pq=kl_divergence(P, Q),
            kl_qp=kl_divergence(Q, P),
            sym_kl=rep.sym_kl,
            pinsker_tv_bound=rep.pinsker_tv_bound,
            lemma1_rhs=rep.lemma1_rhs,
        )
    except SingularCovariance:
        out.update(kl_pq=None, kl_qp=None, sym_kl=None, pinsker_tv_bound=None, lemma1_rhs=None)
    emit(out, args.format)
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    maps, sc = _maps(cfg)
    adj, priv = _adjacency(cfg), _privacy(cfg)
    x0 = _public_x0(cfg, sc)
    if args.rule == "theorem2" and x0 is None:
        raise ConfigError("the theorem2 rule needs a public 'x0' (or a scenario)")
    rep = calibration_report(maps, adj, priv, args.rule, None if x0 is None else x0.cov)
    rep["horizon"] = maps.horizon
    ref = None
    if sc is not None and args.rule == "theorem2":
        occ = cfg.get("occupants", [1, 2])
        ref = building.reference_sigma(sc, int(occ[0]), int(occ[1]), adj, priv)
    rep["reference_sigma"] = ref
    if ref is not None:
        rep["reference_note"] = building.REFERENCE_NOTE
    emit(rep, args.format)
    return EXIT_OK


def _input_pair(cfg: dict[str, Any], sc: building.BuildingScenario | None) -> tuple[Gaussian, Gaussian, Gaussian, Gaussian]:
    if sc is not None:
        occ = _section(cfg, "occupants")
        if not isinstance(occ, list) or len(occ) != 2:
            raise ConfigError("'occupants' must list exactly two occupancy levels")
        pa = building.occupant_input_dist(sc, int(occ[0]))
        pb = building.occupant_input_dist(sc, int(occ[1]))
        return sc.x0, pa, sc.x0, pb
    inputs = _section(cfg, "inputs")
    if not isinstance(inputs, list) or len(inputs) != 2:
        raise ConfigError("'inputs' must list exactly two input laws")
    shared = cfg.get("x0")
    laws = []
    for item in inputs:
        if "u" in item:
            x0 = item.get("x0", shared)
            u = item["u"]
        else:
            x0, u = shared, item
        if x0 is None:
            raise ConfigError("each input needs an 'x0' law, or give a shared top-level 'x0'")
        laws.extend([Gaussian.from_json(x0), Gaussian.from_json(u)])
    return laws[0], laws[1], laws[2], laws[3]


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    n, seed = _samples(cfg, args), _seed(cfg, args)
    maps, sc = _maps(cfg)
    priv = _privacy(cfg)
    px0, pu, px0p, pup = _input_pair(cfg, sc)
    noise, rule = _noise(cfg, maps, _public_x0(cfg, sc) or px0)
    if rule == "theorem2":
        require_public_x0(px0, px0p)
    rep = dp_verify(maps, px0, pu, px0p, pup, noise, priv, n, seed)
    out = rep.to_json()
    out["sigma2"] = noise.sigma2 if noise.kind == "isotropic" else None
    emit(out, args.format)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _occupancies(raw: str | None, cfg: dict[str, Any]) -> list[int]:
    if raw is None:
        occ = cfg.get("occupants", [1])
        occ = occ if isinstance(occ, list) else [occ]
    else:
        try:
            occ = [int(s) for s in raw.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(f"--occupants must be a comma-separated list of integers, got {raw!r}") from exc
    if not occ or any(int(o) < 0 for o in occ):
        raise ConfigError("occupancy levels must be nonnegative integers")
    return [int(o) for o in occ]


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    sc = _scenario(cfg)
    if sc is None:
        raise ConfigError("simulate needs a 'scenario'")
    seed = _seed(cfg, args)
    runs = args.runs if args.runs is not None else cfg.get("runs", DEFAULT_RUNS)
    if int(runs) != runs or runs <= 0:
        raise ConfigError(f"runs must be a positive integer, got {runs}")
    runs = int(runs)
    occupancies = _occupancies(args.occupants, cfg)
    noise, _ = _noise(cfg, building.stacked(sc), sc.x0)
    tables = [building.simulate_runs(sc, o, noise, runs, seed) for o in occupancies]

    buf = io.StringIO()
    tables[0].write_csv(buf)
    for t in tables[1:]:
        buf.write(t.to_csv().split("\n", 1)[1])
    text = buf.getvalue()
    if args.output is None and args.format == "csv":
        sys.stdout.write(text)
        return EXIT_OK
    if args.output is not None:
        try:
            with open(args.output, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: cannot write {args.output}: {exc}", file=sys.stderr)
            return EXIT_IO
    summary = {
        "runs": runs,
        "seed": seed,
        "horizon": sc.horizon,
        "sigma2": noise.sigma2 if noise.kind == "isotropic" else None,
        "output": args.output,
        "summary": [
            {
                "occupants": o,
                "mean": t.matrix().mean(axis=0).tolist(),
                "std": t.matrix().std(axis=0, ddof=1).tolist() if runs > 1 else None,
            }
            for o, t in zip(occupancies, tables)
        ],
    }
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS lets the flags sit before or after the subcommand without clobbering each other
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", metavar="PATH", default=S, help="JSON run configuration")
    p.add_argument("--seed", type=int, metavar="U64", default=S)
    p.add_argument("--samples", type=int, metavar="N", default=S)
    p.add_argument("--output", metavar="PATH", default=S)
    p.add_argument("--format", choices=("json", "csv"), default=S)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wdp-lti",
        description="Calibrate and verify Gaussian output noise for distribution-level input privacy.",
        parents=[_global_flags()],
    )
    sub = parser.add_subparsers(dest="command", required=True)
    flags = _global_flags()

    p = sub.add_parser("distance", parents=[flags], help="W2, KL and TV bounds between two Gaussians")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("calibrate", parents=[flags], help="design isotropic output noise")
    p.add_argument("--rule", choices=("corollary1", "theorem2"), default="corollary1")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("verify", parents=[flags], help="Monte Carlo check of TV <= delta")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", parents=[flags], help="write noisy trajectories as CSV")
    p.add_argument("--occupants", metavar="N[,N...]", default=None)
    p.add_argument("--runs", type=int, default=None)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("samples", None), ("output", None), ("format", "json")):
        if not hasattr(args, name):
            setattr(args, name, default)
    if args.config is None:
        parser.error("--config is required")
    try:
        return args.func(args)
    except UnsupportedEpsilon as exc:
        print(f"error: UnsupportedEpsilon: {exc}", file=sys.stderr)
        return EXIT_EPS
    except DimensionMismatch as exc:
        print(f"error: DimensionMismatch: {exc}", file=sys.stderr)
        return EXIT_DIM
    except (ConfigError, WdpError, KeyError, TypeError, ValueError) as exc:
        kind = type(exc).__name__
        print(f"error: {kind}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
