"""Command-line surface. Every subcommand maps onto one internal operation;
exit code 0 on success, nonzero with a machine-readable JSON error envelope
on stderr otherwise.

State lives under --data-dir (default ./meddfr-data): the chunk store, the
ledgers, stored-record and alert logs, and the triage snapshot, so separate
invocations operate on the same deployment.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .ledger import verify_chain
from .model import IRTClass, envelope_line, read_envelopes
from .simulate import (
    DAY_MS,
    ScenarioId,
    generate,
    letby_preset,
    run_pipeline,
    scenario_preset,
)
from .store import NodeGroup
from .system import System


def _fail(code: str, detail: str, exit_code: int = 1) -> int:
    sys.stderr.write(json.dumps({"error": code, "detail": detail}) + "\n")
    return exit_code


def _system(args) -> System:
    config = load_config(Path(args.config) if args.config else None)
    return System(config=config, root=Path(args.data_dir))


def cmd_ingest(args) -> int:
    system = _system(args)
    text = Path(args.file).read_text()
    records = read_envelopes(text)
    receipts = 0
    for record in records:
        if system.ingest(record) is not None:
            receipts += 1
    quarantined = len(system.router.quarantine_list())
    system.save_state()
    print(json.dumps({"ingested": receipts, "quarantined": quarantined,
                      "parked": len(system.router.pending_retries())}))
    return 0


def cmd_store(args) -> int:
    system = _system(args)
    cluster = system.cluster
    if args.store_cmd == "put":
        data = Path(args.file).read_bytes()
        manifest = cluster.put(NodeGroup(args.group), data,
                               r=system.config.store.replication_factor)
        print(json.dumps({"object_id": manifest.object_id,
                          "chunks": len(manifest.chunk_list)}))
    elif args.store_cmd == "get":
        data = cluster.get(args.object_id)
        if args.out:
            Path(args.out).write_bytes(data)
            print(json.dumps({"object_id": args.object_id, "bytes": len(data),
                              "out": args.out}))
        else:
            sys.stdout.buffer.write(data)
    elif args.store_cmd == "fail-node":
        cluster.fail_node(args.node_id)
        print(json.dumps({"failed": args.node_id,
                          "under_replicated": len(cluster.under_replicated)}))
    elif args.store_cmd == "revive-node":
        cluster.revive_node(args.node_id)
        print(json.dumps({"revived": args.node_id,
                          "under_replicated": len(cluster.under_replicated)}))
    elif args.store_cmd == "repair":
        restored = cluster.re_replicate()
        print(json.dumps({"restored": restored,
                          "under_replicated": len(cluster.under_replicated)}))
    elif args.store_cmd == "retention":
        purged = system.apply_retention(now=args.now)
        print(json.dumps({"purged": purged}))
    return 0


def cmd_siem(args) -> int:
    system = _system(args)
    alerts = system.run_siem()
    system.open_incidents()
    system.save_state()
    for alert in alerts:
        print(json.dumps(alert.to_dict(), sort_keys=True))
    return 0


def cmd_ueba(args) -> int:
    system = _system(args)
    cutoff = args.cutoff if args.cutoff is not None else system.latest_time() // 2
    system.build_profiles(cutoff)
    alerts = system.run_ueba(cutoff)
    system.open_incidents()
    system.save_state()
    for alert in alerts:
        print(json.dumps(alert.to_dict(), sort_keys=True))
    return 0


def cmd_sim(args) -> int:
    from .anonymise import PseudonymKey

    if args.scenario == "letby":
        config = letby_preset(args.seed, duration_days=args.days,
                              with_injections=not args.clean)
    else:
        try:
            config = scenario_preset(ScenarioId(args.scenario), args.seed)
        except ValueError:
            return _fail("unknown-scenario", args.scenario)

    system = System(config=load_config(Path(args.config) if args.config else None),
                    key=PseudonymKey.from_seed("sim", args.seed),
                    root=Path(args.data_dir) if args.persist else None)
    scenario = generate(config)
    if args.dump:
        with Path(args.dump).open("w") as fh:
            for record in scenario.records:
                fh.write(envelope_line(record) + "\n")
    metrics = run_pipeline(scenario, system)
    system.save_state()
    if args.out:
        Path(args.out).write_text(metrics.to_json() + "\n")
    print(metrics.to_json())
    return 0


def cmd_triage(args) -> int:
    system = _system(args)
    if args.triage_cmd == "list":
        for incident in system.engine.list_incidents():
            print(json.dumps(incident.to_dict(), sort_keys=True))
        return 0
    actor_class = IRTClass(args.actor_class)
    at = args.at if args.at is not None else system.latest_time() + 1
    incident = system.engine.transition(args.incident_id, args.triage_cmd,
                                        args.actor, actor_class, at=at,
                                        note=args.note)
    system.save_state()
    print(json.dumps(incident.to_dict(), sort_keys=True))
    return 0


def cmd_image(args) -> int:
    system = _system(args)
    if args.image_cmd == "acquire":
        selection = args.objects.split(",") if args.objects else None
        image = system.acquire_image(NodeGroup(args.group), selection,
                                     args.actor, IRTClass(args.actor_class))
        system.save_state()
        print(json.dumps(image.to_dict(), sort_keys=True))
    elif args.image_cmd == "verify":
        mismatched = system.verify_image(args.image_id)
        print(json.dumps({"image_id": args.image_id, "ok": not mismatched,
                          "mismatched": mismatched}))
        return 0 if not mismatched else 1
    elif args.image_cmd == "export":
        path = system.export_image(args.image_id, Path(args.out))
        print(json.dumps({"image_id": args.image_id, "archive": str(path)}))
    return 0


def cmd_audit(args) -> int:
    system = _system(args)
    broken = system.ledger.verify()
    broken_sessions = system.session_ledger.verify()
    ok = broken is None and broken_sessions is None
    print(json.dumps({"audit_ok": broken is None, "first_broken_seq": broken,
                      "session_ok": broken_sessions is None,
                      "session_first_broken_seq": broken_sessions}))
    return 0 if ok else 1


def cmd_serve(args) -> int:
    from .gateway import Gateway, serve

    system = _system(args)
    gateway = Gateway(system)
    server = serve(gateway, host=args.host, port=args.port,
                   static_dir=args.static_dir)
    print(json.dumps({"serving": f"http://{args.host}:{args.port}"}))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meddfr",
        description="Forensic-readiness pipeline for medical-network evidence")
    parser.add_argument("--config", default=None, help="YAML config path "
                        "(or MEDDFR_CONFIG env var)")
    parser.add_argument("--data-dir", default="meddfr-data",
                        help="persistent state directory")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("ingest", help="ingest newline-delimited record envelopes")
    p.add_argument("file")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("store", help="object store operations")
    store_sub = p.add_subparsers(dest="store_cmd", required=True)
    sp = store_sub.add_parser("put")
    sp.add_argument("group", choices=["DFR1", "DFR2"])
    sp.add_argument("file")
    sp = store_sub.add_parser("get")
    sp.add_argument("object_id")
    sp.add_argument("--out", default=None)
    sp = store_sub.add_parser("fail-node")
    sp.add_argument("node_id")
    sp = store_sub.add_parser("revive-node")
    sp.add_argument("node_id")
    store_sub.add_parser("repair")
    sp = store_sub.add_parser("retention")
    sp.add_argument("--now", type=int, required=True)
    p.set_defaults(func=cmd_store)

    p = sub.add_parser("siem", help="run correlation rules over stored events")
    p.add_argument("siem_cmd", choices=["eval"])
    p.set_defaults(func=cmd_siem)

    p = sub.add_parser("ueba", help="behavioral detection over stored events")
    p.add_argument("ueba_cmd", choices=["detect"])
    p.add_argument("--cutoff", type=int, default=None,
                   help="profile/detect split (epoch-ms; default half of range)")
    p.set_defaults(func=cmd_ueba)

    p = sub.add_parser("sim", help="scenario simulation")
    p.add_argument("sim_cmd", choices=["run"])
    p.add_argument("--scenario", default="letby")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--days", type=int, default=60)
    p.add_argument("--clean", action="store_true", help="no injections")
    p.add_argument("--out", default=None, help="metrics JSON path")
    p.add_argument("--dump", default=None, help="dump stream envelopes to file")
    p.add_argument("--persist", action="store_true",
                   help="run against the persistent data dir")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("triage", help="incident actions")
    triage_sub = p.add_subparsers(dest="triage_cmd", required=True)
    triage_sub.add_parser("list")
    for action in ("ack", "validate", "dismiss", "escalate", "resolve"):
        sp = triage_sub.add_parser(action)
        sp.add_argument("incident_id")
        sp.add_argument("--actor", required=True)
        sp.add_argument("--actor-class", dest="actor_class", required=True,
                        choices=["A", "B", "C"])
        sp.add_argument("--at", type=int, default=None)
        sp.add_argument("--note", default=None)
    p.set_defaults(func=cmd_triage)

    p = sub.add_parser("image", help="forensic imaging")
    image_sub = p.add_subparsers(dest="image_cmd", required=True)
    sp = image_sub.add_parser("acquire")
    sp.add_argument("--group", default="DFR1", choices=["DFR1", "DFR2"])
    sp.add_argument("--objects", default=None, help="comma-separated object ids")
    sp.add_argument("--actor", required=True)
    sp.add_argument("--actor-class", dest="actor_class", default="B",
                    choices=["A", "B", "C"])
    sp = image_sub.add_parser("verify")
    sp.add_argument("image_id")
    sp = image_sub.add_parser("export")
    sp.add_argument("image_id")
    sp.add_argument("--out", required=True)
    p.set_defaults(func=cmd_image)

    p = sub.add_parser("audit", help="verify the hash-chained ledgers")
    p.add_argument("audit_cmd", choices=["verify"])
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("serve", help="run the gateway API (and console)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8713)
    p.add_argument("--static-dir", default=None,
                   help="serve the triage console from this directory")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        return _fail("file-not-found", str(exc))
    except KeyError as exc:
        return _fail("unknown-id", str(exc), 3)
    except Exception as exc:  # surfaced as machine-readable envelope
        return _fail(type(exc).__name__, str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
