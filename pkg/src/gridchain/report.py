"""Write a :class:`RunReport` to a directory of delimited files and figures."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .billing import bills_to_csv
from .chainfile import save_bloom, save_chain, serialize_registry
from .simulator import RunReport


def slots_csv(report: RunReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([
        "group_id", "slot", "sent", "accepted", "rejected", "reject_reasons",
        "block", "block_reason", "miner", "aggregate_wh", "ground_truth_wh",
    ])
    for r in report.slots:
        reasons = ";".join(f"{k}:{v}" for k, v in r.reasons.items())
        agg = "" if r.aggregate is None else r.aggregate
        w.writerow([
            r.group_id, r.slot, r.sent, r.accepted, r.rejected, reasons,
            r.block, r.block_reason, r.miner, agg, r.ground_truth,
        ])
    return out.getvalue()


def events_csv(report: RunReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["group_id", "slot", "kind", "outcome"])
    for e in report.events:
        w.writerow([e.group_id, e.slot, e.kind, e.outcome])
    return out.getvalue()


def summary_text(report: RunReport) -> str:
    cfg = report.config
    sent = sum(r.sent for r in report.slots)
    acc = sum(r.accepted for r in report.slots)
    truth_ok = all(r.aggregate == r.ground_truth for r in report.slots if r.aggregate is not None)
    lines = [
        f"seed={cfg.seed}",
        f"groups={cfg.group_count}",
        f"users_per_group={cfg.users_per_group}",
        f"slots={cfg.slots}",
        f"messages_sent={sent}",
        f"messages_accepted={acc}",
        f"messages_rejected={sent - acc}",
        f"blocks_accepted={report.blocks_accepted}",
        f"blocks_rejected={report.blocks_rejected}",
        f"aggregates_match_ground_truth={str(truth_ok).lower()}",
        f"adversary_events={len(report.events)}",
        f"adversary_detected={sum(e.detected for e in report.events)}",
        f"verifier_disagreements={report.verifier_disagreements}",
    ]
    for gid in sorted(report.blooms):
        b = report.blooms[gid]
        lines.append(f"bloom_{gid}=theta:{b.theta} k:{b.k}")
        if gid in report.fpr:
            lines.append(f"fpr_measured_{gid}={report.fpr[gid]:.6f}")
        lines.append(f"fpr_analytic_{gid}={report.fpr_analytic[gid]:.6f}")
    for gid in sorted(report.miner_counts):
        counts = report.miner_counts[gid]
        lines.append(f"distinct_miners_{gid}={len(counts)}")
    lines.append(f"bill_total_micro={sum(b.total for b in report.bills)}")
    if report.billing_error:
        lines.append(f"billing_error={report.billing_error}")
    if report.halted:
        h = report.halted
        lines.append(f"halted=group:{h.group_id} slot:{h.slot} reason:{h.reason}")
    return "\n".join(lines) + "\n"


def write_report(report: RunReport, out_dir: str | Path, figures: bool = True) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str, text: str) -> None:
        path = out / name
        path.write_bytes(text.encode())
        written.append(path)

    put("config.txt", report.config.format())
    put("summary.txt", summary_text(report))
    put("slots.csv", slots_csv(report))
    put("events.csv", events_csv(report))
    put("bills.csv", bills_to_csv(report.bills))
    put("registry.txt", serialize_registry(report.registry))
    if report.tariff is not None:
        put("tariff.csv", report.tariff.to_csv())
    for gid, chain in sorted(report.chains.items()):
        save_chain(chain, out / f"chain-{gid}.txt")
        written.append(out / f"chain-{gid}.txt")
    for gid, bloom in sorted(report.blooms.items()):
        save_bloom(bloom, out / f"bloom-{gid}.txt")
        written.append(out / f"bloom-{gid}.txt")
    if figures:
        from .plots import plot_aggregates, plot_miner_frequency

        for gid in sorted(report.chains):
            written.append(plot_aggregates(report.slots, gid, out / "figures" / f"aggregate-{gid}.png"))
            written.append(
                plot_miner_frequency(report.miner_counts[gid], gid, out / "figures" / f"miners-{gid}.png")
            )
    return written
