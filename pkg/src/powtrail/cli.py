"""Command line interface.

Exit codes: 0 success, 1 protocol/verification failure, 2 usage or config
error.  Every output file is written atomically (temp file + rename) so an
interrupted run never leaves a truncated CSV behind.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import random
import sys
import tempfile
from pathlib import Path

from powtrail import __version__, crypto, detection, hashcash, protocol, report, sim
from powtrail.crypto import CryptoError
from powtrail.detection import DetectionError
from powtrail.hashcash import ModelError
from powtrail.protocol import ProtocolError, VerificationFailure
from powtrail.sim import ConfigError, ScenarioConfig


def _atomic_write(path: Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_grid(spec: str) -> list[float]:
    """Accept '10:130:10' ranges or '10,20,30' lists."""
    spec = spec.strip()
    if not spec:
        return []
    if ":" in spec:
        parts = [float(x) for x in spec.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigError(f"bad grid spec {spec!r}, want start:stop:step")
        start, stop, step = parts
        values, v = [], start
        while v <= stop + 1e-9:
            values.append(round(v, 9))
            v += step
        return values
    return [float(x) for x in spec.split(",")]


def _load_config(path: str) -> ScenarioConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    if p.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(p.read_text())
    else:
        data = json.loads(p.read_text())
    return ScenarioConfig.from_dict(data)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_keygen(args) -> int:
    rng = random.Random(args.seed)
    material = crypto.generate_key_material(args.threshold, args.rsus, rng=rng)
    _atomic_write(Path(args.out), crypto.dump_key_material(material))
    print(f"wrote {args.out}: threshold {args.threshold} of {args.rsus} shares, "
          f"group pk {material.group_pk.encode().hex()[:16]}...")
    return 0


def cmd_target_table(args) -> int:
    rates = [float(r) for r in args.rates.split(",") if r]
    times = _parse_grid(args.times)
    mode = "monte_carlo" if args.mode == "mc" else args.mode
    table = hashcash.build_target_table(rates, times, args.hash_rate,
                                        space=1 << args.space_bits, mode=mode,
                                        trials=args.trials)
    _atomic_write(Path(args.out), hashcash.dump_table_csv(table))
    print(f"wrote {args.out}: {len(table.rows)} rows "
          f"({len(times)} times x {len(rates)} rates, {args.mode})")
    return 0


def _demo_environment(args):
    if args.keyfile:
        material = crypto.load_key_material(Path(args.keyfile).read_bytes())
        if material.shares.total < args.hops:
            raise ConfigError(f"key file holds {material.shares.total} shares, "
                              f"demo needs {args.hops}")
        threshold = material.shares.threshold
    else:
        material = crypto.generate_key_material(args.threshold, args.hops,
                                                rng=random.Random(args.seed))
        threshold = args.threshold
    space = 1 << args.space_bits
    table = hashcash.build_target_table([0.98], [10.0 * k for k in range(1, 14)],
                                        args.hash_rate, space=space)
    clock = protocol.SimClock()
    share_pks = {a: material.share_pk(a) for a, _ in material.shares.share_points}
    tag_rng = random.Random(args.seed + 1)
    rsus = []
    for rsu_id in range(args.hops):
        alpha, share = material.shares.share_points[rsu_id]
        neighbors = {a for a in share_pks
                     if abs(a - alpha) <= max(1, threshold - 1)}
        rsus.append(protocol.RsuState(
            rsu_id=rsu_id, alpha=alpha, share=share, threshold=threshold,
            params=material.params, ta_pk=material.ta_pk,
            neighbor_share_pks={a: share_pks[a] for a in neighbors},
            target_table=table, clock=clock,
            tag_rng=random.Random(tag_rng.getrandbits(63))))
    vehicle = protocol.VehicleState.with_keys(args.hops + 2, material.ta_secret,
                                              material.params, clock,
                                              random.Random(args.seed + 2))
    return material, table, clock, rsus, vehicle


def _tampered_pow(seed: bytes, target: hashcash.Target,
                  budget: int) -> hashcash.PowSolution:
    nonce = budget
    while hashcash.verify_puzzle(seed, nonce, target):
        nonce += 1
    inner = hashlib.sha256(seed).digest()
    value = int.from_bytes(hashlib.sha256(nonce.to_bytes(8, "big") + inner).digest(),
                           "big") % target.space
    return hashcash.PowSolution(nonce, value, valid=False)


def cmd_demo_run(args) -> int:
    material, table, clock, rsus, vehicle = _demo_environment(args)
    threshold = material.shares.threshold
    budget = max(1, round(args.hash_rate * args.traverse))

    clock.time = 0.0
    request = protocol.vehicle_begin_trajectory(vehicle)
    msg = protocol.rsu_handle_initial_request(rsus[0], request)
    vehicle.current = msg
    print(f"hop 1 @ unit 0: issued first entry "
          f"(tag {msg.entries[-1].tag.value.hex()[:8]}...)")

    for hop in range(1, args.hops):
        clock.time = hop * args.traverse
        target = hashcash.lookup_target(table, args.traverse)
        if args.tamper == "pow" and hop == args.hops - 1:
            solution = _tampered_pow(vehicle.current.encoded, target, budget)
            checkin = protocol.vehicle_prepare_checkin(vehicle, target,
                                                       solution=solution)
        else:
            checkin = protocol.vehicle_prepare_checkin(vehicle, target,
                                                       hash_budget=budget)
        if args.tamper == "ownership" and hop == args.hops - 1:
            wrong = crypto.sign((vehicle.current_sk + 1) % material.params.order,
                                b"forged", material.params)
            checkin = protocol.CheckinMessage(checkin.prior, checkin.pow,
                                              checkin.next_pk, wrong)
        msg = protocol.rsu_process_checkin(rsus[hop], checkin)
        protocol.vehicle_adopt(vehicle, msg)
        finalized = [p.prefix_len for p in msg.proofs]
        print(f"hop {hop + 1} @ unit {hop}: puzzle ok "
              f"(best value {checkin.pow.achieved_value:#x} < {target.value:#x}), "
              f"entries {len(msg.entries)}, finalized prefixes {finalized}")
        expect = list(range(1, hop + 2 - threshold + 1))
        if finalized != expect:
            print(f"finalization schedule violated: expected {expect}, "
                  f"got {finalized}", file=sys.stderr)
            return 1

    if args.transcript:
        print(json.dumps(protocol.describe_message(msg), indent=2))
    trajectory = protocol.extract_trajectory(msg, "demo")
    ok = protocol.verify_trajectory(material.group_pk, trajectory, material.params)
    print(f"trajectory length {trajectory.length}, "
          f"{len(trajectory.proofs)} proofs of location, verification "
          f"{'ok' if ok else 'FAILED'}")
    return 0 if ok else 1


def cmd_simulate(args) -> int:
    config = _apply_overrides(_load_config(args.config), args)
    schemes = ["pow", "baseline"] if args.scheme == "both" else [args.scheme]
    out = Path(args.out)
    results = []
    runs = {}
    for scheme in schemes:
        run = sim.run_scenario(sim.scheme_config(config, scheme))
        runs[scheme] = run
        results.append((scheme, run.result))
    _atomic_write(out / "scenario.csv", sim.scenario_rows_to_csv(results))
    manifest = _manifest(config, args)
    manifest["schemes"] = {
        scheme: {"detect_wall_ms_mean": run.result.detect_wall_ms_mean,
                 "survivor_hist": run.result.survivor_hist,
                 "forged_submitted_mean": run.result.forged_submitted_mean}
        for scheme, run in runs.items()}
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    if args.dump_trajectories:
        first = runs[schemes[0]]
        _atomic_write(out / "trajectories.json",
                      json.dumps(_trajectories_json(first), indent=2) + "\n")
    print(f"wrote {out}/scenario.csv ({', '.join(schemes)}; "
          f"{config.repetitions} repetitions each)")
    return 0


def cmd_sweep(args) -> int:
    config = _apply_overrides(_load_config(args.config), args)
    values = _parse_grid(args.values) if args.values else None
    rows = sim.run_sweep(config, args.axis, values=values, jobs=args.jobs)
    out = Path(args.out)
    csv_path = out / f"sweep_{args.axis}.csv"
    _atomic_write(csv_path, sim.sweep_rows_to_csv(rows))
    manifest = _manifest(config, args)
    manifest["axis"] = args.axis
    manifest["cells"] = len(rows)
    manifest["detect_wall_ms"] = {f"{r['axis_value']:g}/{r['scheme']}":
                                  r["detect_wall_ms"] for r in rows}
    _atomic_write(out / f"sweep_{args.axis}_manifest.json",
                  json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return 0


def cmd_detect(args) -> int:
    path = Path(args.trajectories)
    if not path.exists():
        raise ConfigError(f"trajectory file not found: {path}")
    try:
        data = json.loads(path.read_text())
        raw = data["trajectories"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed trajectory file {path}: {exc}") from exc

    views, seen = [], set()
    for k, item in enumerate(raw):
        tid = str(item.get("id", f"T{k}"))
        if tid in seen:
            raise ConfigError(f"duplicate trajectory id {tid!r}")
        seen.add(tid)
        try:
            times = tuple(float(t) for t, _ in item["entries"])
            tags = tuple(bytes.fromhex(g) for _, g in item["entries"])
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"malformed entries for {tid!r}: {exc}") from exc
        if not times or any(b <= a for a, b in zip(times, times[1:])):
            print(f"warning: excluding unverifiable trajectory {tid!r} "
                  "(empty or non-chronological)", file=sys.stderr)
            continue
        views.append(detection.TrajectoryView(tid, times, tags))

    params = detection.DetectionParams(args.window, args.limit, args.threshold)
    graph = detection.build_similarity_graph(views, params)
    verdict = detection.eliminate_cliques(graph)
    out = Path(args.out)
    _atomic_write(out / "verdict.json",
                  json.dumps(detection.verdict_report(
                      verdict, graph, include_similarities=args.similarities),
                      indent=2) + "\n")
    _atomic_write(out / "graph.dimacs", detection.dimacs_graph(graph))
    print(f"{len(views)} trajectories -> {len(verdict.groups)} groups, "
          f"{sum(1 for v in verdict.labels.values() if v == 'sybil')} sybil")
    return 0


def cmd_report(args) -> int:
    written = report.render(args.input, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def _apply_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    from dataclasses import replace
    updates = {}
    for flag, key in (("seed", "rng_seed"), ("reps", "repetitions"),
                      ("vehicles", "vehicle_count"), ("window", "check_window"),
                      ("limit", "length_limit")):
        value = getattr(args, flag, None)
        if value is not None:
            updates[key] = value
    return replace(config, **updates).validate() if updates else config


def _manifest(config: ScenarioConfig, args) -> dict:
    return {
        "version": __version__,
        "config": config.canonical_dict(),
        "config_hash": config.config_hash(),
        "seed": config.rng_seed,
        "command": " ".join(sys.argv[1:]) if sys.argv[1:] else "",
    }


def _trajectories_json(run: sim.ScenarioRun) -> dict:
    return {"trajectories": [
        {"id": t.traj_id,
         "entries": [[e.timestamp, e.tag.value.hex()] for e in t.entries]}
        for t in run.trajectories]}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="powtrail",
        description="Sybil-resistant trajectories: keys, puzzles, scenarios, detection.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="deal threshold key shares to a key file")
    p.add_argument("--threshold", type=int, required=True)
    p.add_argument("--rsus", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("target-table", help="derive the puzzle target lookup table")
    p.add_argument("--rates", default="0.95,0.90,0.85,0.80")
    p.add_argument("--times", default="10:130:10")
    p.add_argument("--hash-rate", type=float, default=38889.0)
    p.add_argument("--mode", choices=["analytic", "mc"], default="analytic")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--space-bits", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_target_table)

    p = sub.add_parser("demo-run", help="annotated multi-hop exchange with real puzzles")
    p.add_argument("--hops", type=int, default=4)
    p.add_argument("--threshold", type=int, default=3)
    p.add_argument("--traverse", type=float, default=90.0)
    p.add_argument("--keyfile")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--hash-rate", type=float, default=2000.0)
    p.add_argument("--space-bits", type=int, default=24)
    p.add_argument("--tamper", choices=["ownership", "pow"])
    p.add_argument("--transcript", action="store_true",
                   help="dump the final message as annotated JSON + hex")
    p.set_defaults(func=cmd_demo_run)

    p = sub.add_parser("simulate", help="run one scenario configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scheme", choices=["pow", "baseline", "both"], default="both")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--vehicles", type=int)
    p.add_argument("--window", type=float)
    p.add_argument("--limit", type=int)
    p.add_argument("--dump-trajectories", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="sweep a detection/attack parameter")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", choices=sorted(sim.SWEEP_AXES), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--values", help="override axis grid, e.g. 2:50:2")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--vehicles", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("detect", help="run detection over a trajectory file")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--window", type=float, required=True)
    p.add_argument("--limit", type=int, required=True)
    p.add_argument("--threshold", type=float, default=0.0,
                   help="similarity threshold for graph edges")
    p.add_argument("--out", default=".")
    p.add_argument("--similarities", action="store_true",
                   help="include per-pair similarities in the verdict")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("report", help="render figures for an output CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VerificationFailure as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ConfigError, CryptoError, ModelError, DetectionError,
            ProtocolError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
